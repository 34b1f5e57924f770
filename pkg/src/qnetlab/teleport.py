"""Teleportation protocols b, d and e, the brute-force teleportation channel and eta.

Protocol b teleports through the raw resource, protocol d through the best
PPT-distilled resource, and protocol e rotates the inputs of the entangling
gate before it acts. Protocols c and f are only bracketed:
``f_b <= f_c <= f_d`` and ``f_e <= f_f <= 1``.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.optimize import minimize

from . import choi as ch
from . import fidelity as fid
from . import noisegen as ng
from . import numkernel as nk
from . import pptsdp
from .errors import LayoutError
from .noisegen import NoiseSpec, PreprocessAngles

GRID_STEP = np.pi / 60
SIMPLEX_DIAMETER = 1e-6
TIE_TOL = 1e-12


def pauli_power(i: int, j: int) -> np.ndarray:
    """``X^j Z^i``."""
    return np.linalg.matrix_power(ng.X, j) @ np.linalg.matrix_power(ng.Z, i)


def bell_state(i: int, j: int) -> np.ndarray:
    """``(I x X^j Z^i)|phi+>`` as a vector."""
    phi = np.array([1, 0, 0, 1], dtype=complex) / np.sqrt(2)
    return nk.kron(ng.I2, pauli_power(i, j)) @ phi


BELL_INDICES = ((0, 0), (0, 1), (1, 0), (1, 1))
# corrections indexed by 2*j + i: U0 = I, U1 = Z, U2 = X, U3 = XZ
CORRECTIONS = tuple(pauli_power(i, j) for j in (0, 1) for i in (0, 1))


def teleport_channel_from_state(rho) -> ch.QuantumChannel:
    """Channel R -> B realized by standard teleportation through ``rho`` on AB.

    Each Bell outcome (i, j) on RA is followed by the correction ``X^j Z^i``
    on B, and the four branches are summed.
    """
    m = nk.as_matrix(rho)
    dims = getattr(rho, "dims", (2, 2))
    if m.shape != (4, 4) or tuple(dims) != (2, 2):
        raise LayoutError("teleportation needs a two-qubit resource")
    choi = np.zeros((4, 4), dtype=complex)
    for k in range(2):
        for l in range(2):
            unit = np.zeros((2, 2), dtype=complex)
            unit[k, l] = 1
            joint = nk.kron(unit, m)  # R, A, B
            out = np.zeros((2, 2), dtype=complex)
            for i, j in BELL_INDICES:
                b = bell_state(i, j)
                proj = nk.kron(np.outer(b, b.conj()), ng.I2)
                branch = nk.partial_trace(proj @ joint @ proj, (2, 2, 2), [2])
                u = pauli_power(i, j)
                out += u @ branch @ u.conj().T
            choi += nk.kron(unit, out)
    return ch.QuantumChannel(choi, (2,), (2,), "teleport")


def average_fidelity_of_state(rho) -> float:
    """``(2 Tr[rho phi+] + 1)/3``: average fidelity of teleporting through ``rho``."""
    return fid.avg_from_ent(fid.entanglement_fidelity_state(rho), 2)


@lru_cache(maxsize=4096)
def resource_b(n1: NoiseSpec, n2: NoiseSpec) -> ch.QuantumState:
    return ng.prepare_resource(n1, n2)


def eval_protocol_b(n1: NoiseSpec, n2: NoiseSpec) -> float:
    return average_fidelity_of_state(resource_b(n1, n2))


@lru_cache(maxsize=4096)
def overlap_form(n1: NoiseSpec, n2: NoiseSpec) -> np.ndarray:
    """Real symmetric M with ``Tr[phi+ E(|v><v|)] = v^T M v`` for real input vectors v."""
    gate = ng.entangling_gate(n1, n2)
    phi = ch.phi_plus(2)
    # Tr[phi+ E(rho)] = Tr[(rho^T x phi+) J] = Tr[rho M^T] with M = Tr_out[J (I x phi+)]
    mt = nk.partial_trace(gate.choi @ nk.kron(np.eye(4), phi), (4, 4), [0])
    return np.real(0.5 * (mt.T + mt.conj()))


def _input_vectors(alpha: np.ndarray, beta: np.ndarray) -> np.ndarray:
    a = np.stack([np.cos(alpha / 2), np.sin(alpha / 2)], axis=-1)
    b = np.stack([np.cos(beta / 2), np.sin(beta / 2)], axis=-1)
    return np.einsum("...i,...j->...ij", a, b).reshape(alpha.shape + (4,))


def entanglement_fidelity_e(n1: NoiseSpec, n2: NoiseSpec, alpha, beta) -> np.ndarray:
    """``Tr[rho_e(alpha, beta) phi+]``, vectorized over broadcastable angle arrays."""
    alpha, beta = np.broadcast_arrays(np.asarray(alpha, dtype=float), np.asarray(beta, dtype=float))
    v = _input_vectors(alpha, beta)
    return np.einsum("...i,ij,...j->...", v, overlap_form(n1, n2), v)


def grid_angles(step: float = GRID_STEP) -> np.ndarray:
    n = int(np.ceil(2 * np.pi / step - 1e-9))
    return np.arange(n) * step


def maximize_entanglement_fidelity(
    n1: NoiseSpec, n2: NoiseSpec, grid_step: float = GRID_STEP
) -> tuple[float, PreprocessAngles]:
    """Best ``Tr[rho_e phi+]`` over rotation angles: grid search, then Nelder-Mead.

    Ties on the grid go to the lexicographically smallest (alpha, beta). The
    refinement only replaces the grid point when it improves on it.
    """
    return _maximize_cached(n1, n2, float(grid_step))


@lru_cache(maxsize=4096)
def _maximize_cached(n1: NoiseSpec, n2: NoiseSpec, grid_step: float) -> tuple[float, PreprocessAngles]:
    g = grid_angles(grid_step)
    values = entanglement_fidelity_e(n1, n2, g[:, None], g[None, :])
    top = values.max()
    flat = int(np.flatnonzero(values.reshape(-1) >= top - TIE_TOL)[0])
    ia, ib = divmod(flat, len(g))
    best_x = np.array([g[ia], g[ib]])
    best_f = float(values[ia, ib])

    def neg(x):
        return -float(entanglement_fidelity_e(n1, n2, x[0], x[1]))

    simplex = np.array([best_x, best_x + [grid_step, 0], best_x + [0, grid_step]])
    res = minimize(
        neg,
        best_x,
        method="Nelder-Mead",
        options={"initial_simplex": simplex, "xatol": SIMPLEX_DIAMETER / 2, "fatol": 1e-15, "maxiter": 5000},
    )
    if -res.fun > best_f + TIE_TOL:
        best_x, best_f = res.x, float(-res.fun)
    return best_f, PreprocessAngles(*(_snap(v) for v in best_x))


def _snap(theta: float) -> float:
    """Canonical angle in [0, 2pi); values within the refinement tolerance of 2pi map to 0."""
    t = float(np.mod(theta, 2 * np.pi))
    return 0.0 if 2 * np.pi - t < SIMPLEX_DIAMETER else t


def eval_protocol_e(
    n1: NoiseSpec,
    n2: NoiseSpec,
    angles: PreprocessAngles | None = None,
    grid_step: float = GRID_STEP,
) -> tuple[float, PreprocessAngles]:
    """f_e at the given angles, or maximized over angles when ``angles`` is None."""
    if angles is None:
        F, angles = maximize_entanglement_fidelity(n1, n2, grid_step)
        return fid.avg_from_ent(F, 2), angles
    rho = ng.prepare_resource(n1, n2, angles)
    return average_fidelity_of_state(rho), angles


@lru_cache(maxsize=4096)
def solve_protocol_d(n1: NoiseSpec, n2: NoiseSpec, tolerance: float = pptsdp.DEFAULT_TOL) -> pptsdp.SdpCertificate:
    return pptsdp.solve_ppt_fidelity(pptsdp.SdpProblem(resource_b(n1, n2), tolerance))


def eval_protocol_d(n1: NoiseSpec, n2: NoiseSpec) -> float:
    return fid.avg_from_ent(solve_protocol_d(n1, n2).primal_value, 2)


def improvement_ratio_eta(n1: NoiseSpec, n2: NoiseSpec, grid_step: float = GRID_STEP) -> float:
    f_d = eval_protocol_d(n1, n2)
    if f_d <= 0:
        raise ValueError("eta is undefined when f_d = 0")
    f_e, _ = eval_protocol_e(n1, n2, None, grid_step)
    return (f_e - f_d) / f_d


@dataclass(frozen=True)
class ProtocolResult:
    f_b: float
    f_d: float
    f_e: float
    argmax_angles: PreprocessAngles
    eta: float
    noise: tuple[NoiseSpec, NoiseSpec]
    f_d_gap: float = 0.0

    @property
    def f_c_interval(self) -> tuple[float, float]:
        return (self.f_b, self.f_d)

    @property
    def f_f_interval(self) -> tuple[float, float]:
        return (self.f_e, 1.0)


def evaluate_protocols(n1: NoiseSpec, n2: NoiseSpec, grid_step: float = GRID_STEP) -> ProtocolResult:
    f_b = eval_protocol_b(n1, n2)
    cert = solve_protocol_d(n1, n2)
    f_d = fid.avg_from_ent(cert.primal_value, 2)
    f_e, angles = eval_protocol_e(n1, n2, None, grid_step)
    # the gap is on the overlap scale; f_d is (2F + 1)/3
    return ProtocolResult(f_b, f_d, f_e, angles, (f_e - f_d) / f_d, (n1, n2), 2 * cert.gap / 3)
