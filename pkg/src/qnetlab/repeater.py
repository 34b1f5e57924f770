"""Entanglement swapping and repeater-chain fidelities.

A chain of N links is fused by swapping at every intermediate node. The
brute-force path folds ``entanglement_swap`` left to right over full density
matrices; the closed forms cover noisy singlets and the six-coefficient
family ``x1|00><00| + x2|00><11| + x3|11><00| + x4|11><11| + x5|01><01| + x6|10><10|``.
"""
from __future__ import annotations

from dataclasses import astuple, dataclass
from typing import Sequence

import numpy as np

from . import choi as ch
from . import fidelity as fid
from . import noisegen as ng
from . import numkernel as nk
from . import teleport as tp
from .errors import LayoutError
from .noisegen import NoiseSpec

CLASSICAL_LIMIT = 2.0 / 3.0
SIX_TOL = 1e-10
MAX_COPIES = 12


def entanglement_swap(rho_ac, sigma_cb) -> ch.QuantumState:
    """Bell measurement on the middle pair C1 C2 with Pauli correction on B.

    Works for arbitrary two-qubit inputs.
    """
    r = nk.as_matrix(rho_ac)
    s = nk.as_matrix(sigma_cb)
    if r.shape != (4, 4) or s.shape != (4, 4):
        raise LayoutError("entanglement swapping needs two-qubit states")
    joint = nk.kron(r, s)  # A, C1, C2, B
    out = np.zeros((4, 4), dtype=complex)
    for i, j in tp.BELL_INDICES:
        b = tp.bell_state(i, j)
        proj = nk.kron_all(ng.I2, np.outer(b, b.conj()), ng.I2)
        branch = nk.partial_trace(proj @ joint @ proj, (2, 2, 2, 2), [0, 3])
        u = nk.kron(ng.I2, tp.pauli_power(i, j))
        out += u @ branch @ u.conj().T
    return ch.QuantumState(0.5 * (out + out.conj().T), (2, 2))


@dataclass(frozen=True)
class SixCoeffState:
    x1: float
    x2: float
    x3: float
    x4: float
    x5: float
    x6: float

    def __post_init__(self):
        x1, x2, x3, x4, x5, x6 = astuple(self)
        if abs(x1 + x4 + x5 + x6 - 1) > SIX_TOL:
            raise ValueError("coefficients x1 + x4 + x5 + x6 must sum to 1")
        if abs(x2 - x3) > SIX_TOL:
            raise ValueError("x2 and x3 must be equal")
        if x1 * x4 < x2 * x2 - SIX_TOL or min(x1, x4, x5, x6) < -SIX_TOL:
            raise ValueError("coefficients do not describe a positive state")

    def as_tuple(self) -> tuple[float, ...]:
        return astuple(self)

    def matrix(self) -> np.ndarray:
        x1, x2, x3, x4, x5, x6 = astuple(self)
        m = np.zeros((4, 4), dtype=complex)
        m[0, 0], m[0, 3], m[3, 0], m[3, 3], m[1, 1], m[2, 2] = x1, x2, x3, x4, x5, x6
        return m

    @classmethod
    def from_matrix(cls, m, tol: float = 1e-12) -> "SixCoeffState":
        m = nk.as_matrix(m)
        keep = np.zeros((4, 4), dtype=bool)
        keep[[0, 0, 3, 3, 1, 2], [0, 3, 0, 3, 1, 2]] = True
        if np.max(np.abs(m[~keep])) > tol or np.max(np.abs(m[keep].imag)) > tol:
            raise ValueError("matrix is outside the six-coefficient family")
        r = m.real
        return cls(r[0, 0], r[0, 3], r[3, 0], r[3, 3], r[1, 1], r[2, 2])

    def entanglement_fidelity(self) -> float:
        return (self.x1 + self.x2 + self.x3 + self.x4) / 2


def six_coeff_swap(x: SixCoeffState, y: SixCoeffState) -> SixCoeffState:
    x1, x2, x3, x4, x5, x6 = x.as_tuple()
    y1, y2, y3, y4, y5, y6 = y.as_tuple()
    return SixCoeffState(
        x1 * (y1 + y4) + x5 * (y5 + y6),
        x2 * (y2 + y3),
        x3 * (y2 + y3),
        x4 * (y1 + y4) + x6 * (y5 + y6),
        x1 * (y5 + y6) + x5 * (y1 + y4),
        x4 * (y5 + y6) + x6 * (y1 + y4),
    )


@dataclass(frozen=True)
class ChainResult:
    N: int
    F_N: float
    f_N: float
    beats_classical: bool
    method: str


def _chain_result(N: int, F: float, method: str) -> ChainResult:
    f = fid.avg_from_ent(F, 2)
    return ChainResult(int(N), float(F), float(f), bool(f > CLASSICAL_LIMIT), method)


def _check_copies(N: int, limit: int | None = None) -> int:
    if int(N) != N or N < 1:
        raise ValueError("N must be a positive integer")
    if limit is not None and N > limit:
        raise ValueError(f"N must be at most {limit}")
    return int(N)


def singlet_chain_fidelity(F1: float, N: int) -> ChainResult:
    """``F_N = 1/4 + 3/4 ((4 F1 - 1)/3)^N`` for a chain of noisy singlets."""
    N = _check_copies(N)
    if not (0.25 - 1e-12 <= F1 <= 1 + 1e-12):
        raise ValueError("F1 must lie in [1/4, 1]")
    return _chain_result(N, 0.25 + 0.75 * ((4 * F1 - 1) / 3) ** N, "singlet_formula")


def ad_weights(p: float, alpha: float) -> tuple[float, float]:
    """The amplitudes a = cos(alpha/2) + sin(alpha/2), b = cos(alpha/2) - sin(alpha/2)."""
    c, s = np.cos(alpha / 2), np.sin(alpha / 2)
    return c + s, c - s


def chain_recursion(p: float, alpha: float, N: int) -> ChainResult:
    """Six-term recursion for N rotated amplitude-damped links.

    Uses unnormalized weights w_N with ``F_N = (w1 + w2 + w3 + w4)/2^(N+1)``.
    """
    N = _check_copies(N)
    if not (0 <= p <= 1):
        raise ValueError("p must lie in [0, 1]")
    a, b = ad_weights(p, alpha)
    sp = np.sqrt(p)
    keep = a * a + b * b * p
    flip = b * b * (1 - p)
    cross = 2 * a * b * sp
    w = np.array([a * a, a * b * sp, a * b * sp, b * b * p, b * b * (1 - p), 0.0])
    for _ in range(N - 1):
        w1, w2, w3, w4, w5, w6 = w
        w = np.array([
            keep * w1 + flip * w5,
            cross * w2,
            cross * w3,
            keep * w4 + flip * w6,
            flip * w1 + keep * w5,
            flip * w4 + keep * w6,
        ])
    return _chain_result(N, float(w[:4].sum()) / 2 ** (N + 1), "recursion")


def chain_states(resource, N: int) -> list[ch.QuantumState]:
    """States after 1..N links, each obtained from the previous by one more swap."""
    N = _check_copies(N, MAX_COPIES)
    m = nk.as_matrix(resource)
    link = ch.QuantumState(m, (2, 2))
    states = [link]
    for _ in range(N - 1):
        states.append(entanglement_swap(states[-1], link))
    return states


def chain_concentrate(resource, N: int) -> ChainResult:
    tau = chain_states(resource, N)[-1]
    return _chain_result(N, fid.entanglement_fidelity_state(tau), "bruteforce")


def improvement_ratio_zeta(n1: NoiseSpec, n2: NoiseSpec, grid_step: float = tp.GRID_STEP) -> float:
    """Relative gain of the best rotated resource over the plain one, measured above 1/4."""
    F_b = fid.entanglement_fidelity_state(tp.resource_b(n1, n2))
    if F_b - 0.25 <= 0:
        raise ValueError(f"zeta is undefined for a resource with F = {F_b:.6g} <= 1/4")
    F_e, _ = tp.maximize_entanglement_fidelity(n1, n2, grid_step)
    return (F_e - F_b) / (F_b - 0.25)


@dataclass(frozen=True)
class DoublingReport:
    """Twirled-resource chain comparison at N = 1 and N = 2."""

    f1_plain: float
    f2_plain: float
    f2_preprocessed: float
    angles: ng.PreprocessAngles

    @property
    def doubles_distance(self) -> bool:
        return (
            self.f1_plain > CLASSICAL_LIMIT
            and not self.f2_plain > CLASSICAL_LIMIT
            and self.f2_preprocessed > CLASSICAL_LIMIT
        )


def doubling_report(n1: NoiseSpec, n2: NoiseSpec, grid_step: float = tp.GRID_STEP) -> DoublingReport:
    """Does pre-processing let a twirled two-link chain beat the classical limit?

    Twirling keeps the entanglement fidelity, so each chain follows the
    noisy-singlet formula from the overlap of its single link.
    """
    F_b = fid.entanglement_fidelity_state(tp.resource_b(n1, n2))
    F_e, angles = tp.maximize_entanglement_fidelity(n1, n2, grid_step)
    return DoublingReport(
        singlet_chain_fidelity(F_b, 1).f_N,
        singlet_chain_fidelity(F_b, 2).f_N,
        singlet_chain_fidelity(F_e, 2).f_N,
        angles,
    )


def twirled_chain(resource, N: int, mode: str | fid.TwirlApproxConfig = "exact") -> ChainResult:
    """Brute-force chain over copies of a twirled resource."""
    rho = fid.isotropic_twirl_exact(resource) if mode == "exact" else fid.isotropic_twirl_approx(resource, mode)
    return chain_concentrate(rho, N)


def copies_range(values: Sequence[int]) -> list[int]:
    return [_check_copies(n, MAX_COPIES) for n in values]
