"""Fidelity measures and twirling."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import choi as ch
from . import numkernel as nk
from .errors import LayoutError

PURE_TOL = 1e-9


def _square_side(dims: Sequence[int]) -> int:
    if len(dims) != 2 or dims[0] != dims[1]:
        raise LayoutError(f"expected a bipartite d x d layout, got {tuple(dims)}")
    return int(dims[0])


def _bipartite(rho) -> tuple[np.ndarray, int]:
    m = nk.as_matrix(rho)
    dims = getattr(rho, "dims", None)
    if dims is None:
        d = int(round(np.sqrt(m.shape[0])))
        dims = (d, d)
    d = _square_side(dims)
    nk.check_layout(m, dims)
    return m, d


def _pure_vector(w: np.ndarray, v: np.ndarray):
    if w.size == 1 or (abs(w[-1] - np.sum(w)) <= PURE_TOL and np.all(w[:-1] <= PURE_TOL)):
        return v[:, -1], float(w[-1])
    return None


def uhlmann_fidelity(rho, sigma) -> float:
    """``(Tr sqrt(sqrt(rho) sigma sqrt(rho)))^2``, with the pure-state shortcut on either side."""
    a = nk.as_matrix(rho)
    b = nk.as_matrix(sigma)
    if a.shape != b.shape:
        raise LayoutError(f"dimension mismatch {a.shape} vs {b.shape}")
    wa, va = nk.eig_hermitian(a)
    pure = _pure_vector(wa, va)
    if pure is None:
        wb, vb = nk.eig_hermitian(b)
        pure = _pure_vector(wb, vb)
        other = a
    else:
        other = b
    if pure is not None:
        psi, scale = pure
        f = float(np.real(psi.conj() @ other @ psi)) * scale
    else:
        s = nk.psd_sqrt(a)
        m = s @ b @ s
        lam = np.linalg.eigvalsh(0.5 * (m + m.conj().T))
        f = float(np.sum(np.sqrt(np.clip(lam, 0.0, None)))) ** 2
    return float(min(max(f, 0.0), 1.0))


def entanglement_fidelity_state(rho) -> float:
    """Overlap ``Tr[rho phi+]`` of a bipartite d x d state."""
    m, d = _bipartite(rho)
    return float(np.real(np.trace(m @ ch.phi_plus(d))))


def entanglement_fidelity_channel(channel: ch.QuantumChannel) -> float:
    """``Tr[phi+ J]/d`` for a channel with equal input and output dimension."""
    if channel.din != channel.dout:
        raise LayoutError("entanglement fidelity needs din == dout")
    d = channel.din
    return float(np.real(np.trace(ch.phi_plus(d) @ channel.choi))) / d


def avg_from_ent(F: float, d: int) -> float:
    """Average fidelity ``(dF + 1)/(d + 1)`` from entanglement fidelity."""
    if d < 2:
        raise ValueError("d must be >= 2")
    return (d * F + 1.0) / (d + 1.0)


def depolarizing_choi(p: float, d: int) -> np.ndarray:
    """Choi operator of ``p*id + (1-p)*(I/d Tr)``."""
    return p * ch.gamma(d) + (1 - p) * np.eye(d * d, dtype=complex) / d


def channel_twirl(channel: ch.QuantumChannel) -> tuple[ch.QuantumChannel, float]:
    """Depolarizing channel with the same entanglement fidelity, and its weight p."""
    if channel.din != channel.dout:
        raise LayoutError("channel twirl needs din == dout")
    d = channel.din
    overlap = float(np.real(np.trace(ch.phi_plus(d) @ channel.choi)))
    p = (overlap * d * d - d) / (d * (d * d - 1))
    out = ch.QuantumChannel(depolarizing_choi(p, d), (d,), (d,), f"twirl({channel.label})", channel.tp)
    return out, p


def noisy_singlet_param(rho) -> float:
    m, d = _bipartite(rho)
    F = float(np.real(np.trace(m @ ch.phi_plus(d))))
    return (F * d * d - 1) / (d * d - 1)


def noisy_singlet(p: float, d: int = 2) -> np.ndarray:
    return p * ch.phi_plus(d) + (1 - p) * np.eye(d * d, dtype=complex) / (d * d)


def isotropic_twirl_choi(d: int) -> np.ndarray:
    """Choi operator ``phi+ x phi+ + (I - phi+) x (I - phi+)/(d^2 - 1)``.

    Legs are ordered (A_in, B_in, A_out, B_out).
    """
    f = ch.phi_plus(d)
    c = np.eye(d * d, dtype=complex) - f
    return nk.kron(f, f) + nk.kron(c, c) / (d * d - 1)


def isotropic_twirl_exact(rho) -> ch.QuantumState:
    """Exact isotropic twirl, applied as a link product with its Choi operator."""
    m, d = _bipartite(rho)
    twirl = ch.QuantumChannel(isotropic_twirl_choi(d), (d, d), (d, d), "iso")
    return ch.apply_channel(twirl, ch.QuantumState(m, (d, d)))


@dataclass(frozen=True)
class TwirlApproxConfig:
    """Sample count and master seed for the sampled twirl."""

    samples: int
    seed: int = 0

    def __post_init__(self):
        if int(self.samples) < 1:
            raise ValueError("samples must be >= 1")
        object.__setattr__(self, "samples", int(self.samples))
        object.__setattr__(self, "seed", int(self.seed))


def twirl_with_unitaries(rho, unitaries: Sequence[np.ndarray]) -> ch.QuantumState:
    """Average of ``(U x conj(U)) rho (U x conj(U))^dag`` over the given unitaries."""
    m, d = _bipartite(rho)
    acc = np.zeros_like(m)
    for u in unitaries:
        w = nk.kron(u, u.conj())
        acc += w @ m @ w.conj().T
    acc /= len(unitaries)
    return ch.QuantumState(0.5 * (acc + acc.conj().T), (d, d))


def twirl_unitaries(d: int, cfg: TwirlApproxConfig) -> list[np.ndarray]:
    """Haar samples for a sampled twirl; sample i is seeded by ``derive_seed(seed, i)``."""
    return [nk.haar_unitary(d, nk.derive_seed(cfg.seed, i)) for i in range(cfg.samples)]


def isotropic_twirl_approx(rho, cfg: TwirlApproxConfig) -> ch.QuantumState:
    _, d = _bipartite(rho)
    return twirl_with_unitaries(rho, twirl_unitaries(d, cfg))
