"""Dense primal barrier SDP solver and the PPT distillation fidelity program.

The PPT program is

    maximize   Tr[rho X]
    subject to 0 <= X <= I,  -I/2 <= X^{T_B} <= I/2,

with dual

    minimize   Tr[A] + ||W||_1 / 2
    subject to A >= 0,  A + W^{T_B} - rho >= 0.

The solver follows the central path of a log-det barrier, taking Newton steps
with the exact Hessian in a real coordinate system for Hermitian matrices.
Dual witnesses are read off the inverse slacks corrected by one more Newton
step, which makes them satisfy the dual equality constraints even off the
central path, and are then projected to exact feasibility. The reported upper
bound therefore never relies on the solver having converged. When that
read-off is still too imprecise, the same engine is run on the dual program,
whose strictly feasible iterates are certificates in their own right.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import choi as ch
from . import numkernel as nk
from .errors import LayoutError, SdpConvergenceError

DEFAULT_TOL = 1e-8
NEWTON_BUDGET = 200
BARRIER_GROWTH = 10.0
CENTERING_TOL = 1e-10
STAGE_STEPS = 30
PATH_END = 0.1


def hermitian_basis(n: int) -> np.ndarray:
    """Orthonormal basis (w.r.t. ``Re Tr[A B]``) of n x n Hermitian matrices, shape (n^2, n, n)."""
    basis = []
    s = 1 / np.sqrt(2)
    for i in range(n):
        e = np.zeros((n, n), dtype=complex)
        e[i, i] = 1
        basis.append(e)
    for i in range(n):
        for j in range(i + 1, n):
            e = np.zeros((n, n), dtype=complex)
            e[i, j] = e[j, i] = s
            basis.append(e)
            e = np.zeros((n, n), dtype=complex)
            e[i, j], e[j, i] = 1j * s, -1j * s
            basis.append(e)
    return np.array(basis)


def to_matrix(x: np.ndarray, basis: np.ndarray) -> np.ndarray:
    return np.tensordot(x, basis, axes=1)


def to_coords(m: np.ndarray, basis: np.ndarray) -> np.ndarray:
    return np.real(np.einsum("kij,ji->k", basis, m))


@dataclass(frozen=True)
class LmiBlock:
    """Constraint ``offset + linear(X) >= 0`` with ``linear`` a linear map on Hermitian X."""

    offset: np.ndarray
    linear: Callable[[np.ndarray], np.ndarray]
    name: str = ""

    @classmethod
    def identity(cls, offset, sign: float = 1.0, name: str = "") -> "LmiBlock":
        return cls(np.asarray(offset, dtype=complex), lambda x: sign * x, name)

    @classmethod
    def partial_transpose(cls, offset, sign: float, dims, which, name: str = "") -> "LmiBlock":
        dims, which = tuple(dims), tuple(which)
        return cls(np.asarray(offset, dtype=complex), lambda x: sign * nk.partial_transpose(x, dims, which), name)

    def apply(self, x: np.ndarray) -> np.ndarray:
        return self.offset + self.linear(x)


@dataclass
class SdpResult:
    """Outcome of ``sdp_core``.

    ``lower`` is the objective at the best strictly feasible point. ``upper``
    is the dual bound: ``certify`` when supplied, otherwise the barrier bound
    ``sum_b Tr[Z_b F0_b]`` with ``Z_b = S_b^{-1}/t``, which is exact only up to
    ``stationarity`` (norm of the dual equality residual).
    """

    lower: float
    upper: float
    X: np.ndarray
    slacks: list
    duals: list
    t: float
    newton_steps: int
    stationarity: float
    converged: bool


class _Program:
    """Blocks stacked as arrays: offsets (nb, m, m) and linear parts (nb, nvar, m, m)."""

    def __init__(self, c: np.ndarray, f0: np.ndarray, d: np.ndarray):
        self.c = c
        self.f0 = f0
        self.d = d

    def slacks(self, x):
        return self.f0 + np.einsum("k,bkij->bij", x, self.d)

    def moves(self, dx):
        return np.einsum("k,bkij->bij", dx, self.d)

    @staticmethod
    def logdet(slacks):
        try:
            l = np.linalg.cholesky(0.5 * (slacks + np.conj(np.swapaxes(slacks, -1, -2))))
        except np.linalg.LinAlgError:
            return None
        return 2.0 * float(np.sum(np.log(np.real(np.diagonal(l, axis1=-2, axis2=-1)))))

    def derivatives(self, slacks, t):
        si = np.linalg.inv(slacks)
        si = 0.5 * (si + np.conj(np.swapaxes(si, -1, -2)))
        p = np.einsum("bij,bkjl->bkil", si, self.d)
        g = t * self.c + np.real(np.einsum("bkii->k", p))
        h = np.real(np.einsum("bkij,blji->kl", p, p))
        return g, h, si


def _newton_solve(h: np.ndarray, g: np.ndarray) -> np.ndarray:
    """Solve ``h dx = g`` with diagonal equilibration and two refinement passes.

    Near the optimum h mixes entries of order 1 and 1/slack^2, so the raw
    system is badly scaled.
    """
    scale = 1.0 / np.sqrt(np.maximum(np.abs(np.diagonal(h)), 1e-300))
    hs = h * scale[:, None] * scale[None, :]
    gs = g * scale
    try:
        factor = np.linalg.cholesky(hs)

        def solve(r):
            return np.linalg.solve(factor.T, np.linalg.solve(factor, r))
    except np.linalg.LinAlgError:
        pinv = np.linalg.pinv(hs)

        def solve(r):
            return pinv @ r
    y = solve(gs)
    for _ in range(2):
        y = y + solve(gs - hs @ y)
    return y * scale


def _center(prog: _Program, x: np.ndarray, slacks: np.ndarray, t: float, budget: int):
    """Newton iterations on ``t c.x + sum log det S`` until the decrement is tiny.

    Slack matrices are carried along and updated by increments rather than
    recomputed from x; near the boundary this keeps their small eigenvalues
    accurate, which is what the dual read-off depends on.
    """
    steps = 0
    dec = np.inf
    while steps < budget:
        g, h, _ = prog.derivatives(slacks, t)
        dx = _newton_solve(h, g)
        dec = float(g @ dx)
        steps += 1
        done = dec / 2 <= CENTERING_TOL
        ds = prog.moves(dx)
        phi0 = t * float(prog.c @ x) + prog.logdet(slacks)
        step = 1.0
        while step > 1e-12:
            sn = slacks + step * ds
            ld = prog.logdet(sn)
            if ld is not None and (done or t * float(prog.c @ (x + step * dx)) + ld >= phi0 + 0.25 * step * dec):
                break
            step *= 0.5
        else:
            break
        x = x + step * dx
        slacks = sn
        if done:
            break
    return x, slacks, steps


def _corrected_duals(prog: _Program, slacks, sinvs, g, h, t):
    """Dual blocks ``(S^-1 - S^-1 dS S^-1)/t`` from one more Newton step dS.

    They satisfy the dual equality constraints by the Newton equation, so
    they certify an upper bound even off the central path, provided they are
    positive semidefinite. Returns None when they are not.
    """
    ds = prog.moves(_newton_solve(h, g))
    z = (sinvs - np.einsum("bij,bjk,bkl->bil", sinvs, ds, sinvs)) / t
    z = 0.5 * (z + np.conj(np.swapaxes(z, 1, 2)))
    if np.min(np.linalg.eigvalsh(z)) < 0:
        return None
    return list(z)


def _phase_one(prog: _Program, budget: int) -> tuple[np.ndarray, int]:
    """Find a strictly feasible point by maximizing s subject to S_b(x) >= s I."""
    nvar = len(prog.c)
    x = np.zeros(nvar)
    s0 = float(np.min(np.linalg.eigvalsh(prog.f0)))
    if s0 > 0:
        return x, 0
    c = np.zeros(nvar + 1)
    c[-1] = 1.0
    nb, m = prog.f0.shape[0], prog.f0.shape[1]
    shift = np.broadcast_to(-np.eye(m, dtype=complex), (nb, 1, m, m))
    aux = _Program(c, prog.f0, np.concatenate([prog.d, shift], axis=1))
    y = np.concatenate([x, [s0 - 1.0]])
    slacks = aux.slacks(y)
    used, t = 0, 1.0
    while used < budget:
        y, slacks, n = _center(aux, y, slacks, t, min(20, budget - used))
        used += n
        if y[-1] > 0 and prog.logdet(prog.slacks(y[:-1])) is not None:
            return y[:-1], used
        t *= BARRIER_GROWTH
    raise SdpConvergenceError("no strictly feasible point found (infeasible or empty interior)")


def _stack_blocks(blocks: Sequence[LmiBlock], basis: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    f0 = [nk.as_matrix(b.offset) for b in blocks]
    sizes = {f.shape[0] for f in f0}
    if len(sizes) != 1:
        # pad to a common size with identity so every block stacks; padding adds a constant to log det
        m = max(sizes)
        d_list = []
        f_list = []
        for b, f in zip(blocks, f0):
            k = f.shape[0]
            fp = np.eye(m, dtype=complex)
            fp[:k, :k] = f
            dp = np.zeros((len(basis), m, m), dtype=complex)
            dp[:, :k, :k] = [b.linear(e) for e in basis]
            f_list.append(fp)
            d_list.append(dp)
        return np.array(f_list), np.array(d_list)
    return np.array(f0), np.array([[b.linear(e) for e in basis] for b in blocks])


def sdp_core(
    C: np.ndarray,
    blocks: Sequence[LmiBlock],
    tol: float = DEFAULT_TOL,
    x0: np.ndarray | None = None,
    budget: int = NEWTON_BUDGET,
    certify: Callable | None = None,
    basis: np.ndarray | None = None,
    strict: bool = True,
) -> SdpResult:
    """Maximize ``Re Tr[C X]`` over Hermitian X subject to ``blocks``.

    X ranges over the real span of ``basis`` (all Hermitian matrices by
    default). ``certify(X, duals)`` may return an upper bound built from the
    barrier duals. The central path is followed, the barrier weight growing
    tenfold per stage, until ``upper - lower <= tol``. Raises
    ``SdpConvergenceError`` with the best bracket when the Newton budget runs
    out, or when no interior point exists. The path also ends once the barrier
    term ``m/t`` drops below ``tol/10``; with ``strict=False`` the unconverged
    result is then returned (``converged`` False) instead of raised.
    """
    C = nk.as_matrix(C)
    basis = hermitian_basis(C.shape[0]) if basis is None else np.asarray(basis, dtype=complex)
    c = to_coords(0.5 * (C + C.conj().T), basis)
    f0, d = _stack_blocks(blocks, basis)
    prog = _Program(c, f0, d)
    m = sum(nk.as_matrix(b.offset).shape[0] for b in blocks)
    if x0 is None:
        x, used = _phase_one(prog, budget)
    else:
        x, used = to_coords(nk.as_matrix(x0), basis), 0
        if prog.logdet(prog.slacks(x)) is None:
            raise ValueError("x0 is not strictly feasible")
    t = 1.0
    best = None
    slacks = prog.slacks(x)
    while True:
        # rounding can keep the decrement from ever reaching CENTERING_TOL at large t
        x, slacks, n_steps = _center(prog, x, slacks, t, min(STAGE_STEPS, budget - used))
        used += n_steps
        g, h, sinvs = prog.derivatives(slacks, t)
        duals = _corrected_duals(prog, slacks, sinvs, g, h, t)
        lower = float(c @ x)
        X = to_matrix(x, basis)
        if duals is None:
            duals, upper = list(sinvs / t), np.inf
        else:
            upper = float(np.sum(np.real(np.einsum("bij,bji->b", np.asarray(duals), f0))))
        if certify is not None:
            upper = float(certify(X, duals))
        stage = SdpResult(lower, upper, X, list(slacks), duals, t, used, float(np.linalg.norm(g / t)), False)
        if best is None:
            best = stage
        else:
            # each bound is valid on its own, so keep the tightest of each
            if stage.lower >= best.lower:
                best.lower, best.X, best.slacks = stage.lower, stage.X, stage.slacks
            if stage.upper <= best.upper:
                best.upper, best.duals, best.stationarity = stage.upper, stage.duals, stage.stationarity
            best.t, best.newton_steps = t, used
        if best.upper - best.lower <= tol and m / t <= tol:
            best.converged = True
            return best
        if m / t <= tol * PATH_END and not strict:
            # the primal is within tol/10 of optimal; a larger t only adds rounding noise
            return best
        if used >= budget or m / t <= tol * PATH_END:
            why = f"Newton budget {budget} exhausted" if used >= budget else "central path ended"
            raise SdpConvergenceError(
                f"{why} with gap {best.upper - best.lower:.3e}",
                (best.lower, best.upper),
                best,
            )
        t *= BARRIER_GROWTH


# PPT distillation fidelity


def _square_dims(m) -> tuple[int, int]:
    d = int(round(np.sqrt(nk.as_matrix(m).shape[0])))
    return (d, d)


@dataclass(frozen=True)
class SdpProblem:
    rho: ch.QuantumState
    tolerance: float = DEFAULT_TOL

    def __post_init__(self):
        if not isinstance(self.rho, ch.QuantumState):
            object.__setattr__(self, "rho", ch.QuantumState(self.rho, _square_dims(self.rho)))
        dims = self.rho.dims
        if len(dims) != 2 or dims[0] != dims[1]:
            raise LayoutError(f"expected a bipartite d x d state, got layout {dims}")
        if not self.tolerance > 0:
            raise ValueError("tolerance must be positive")


@dataclass(frozen=True)
class SdpCertificate:
    primal_value: float
    dual_value: float
    X: np.ndarray
    A: np.ndarray
    W: np.ndarray
    feasibility_residuals: dict = field(default_factory=dict)
    newton_steps: int = 0
    dual_source: str = "barrier"

    @property
    def gap(self) -> float:
        return self.dual_value - self.primal_value


def ppt_blocks(d: int) -> list[LmiBlock]:
    eye = np.eye(d * d, dtype=complex)
    dims = (d, d)
    return [
        LmiBlock.identity(0 * eye, 1.0, name="X"),
        LmiBlock.identity(eye, -1.0, name="I-X"),
        LmiBlock.partial_transpose(eye / 2, -1.0, dims, (1,), name="I/2-X^TB"),
        LmiBlock.partial_transpose(eye / 2, 1.0, dims, (1,), name="I/2+X^TB"),
    ]


def ppt_dual_witnesses(rho: np.ndarray, duals: Sequence[np.ndarray], d: int) -> tuple[np.ndarray, np.ndarray]:
    """Map barrier duals to (A, W) and repair them into exact dual feasibility.

    ``A = Z_{I-X}`` and ``W = Z_{I/2-X^TB} - Z_{I/2+X^TB}``. A is clamped to be
    PSD, then the negative part of ``A + W^{T_B} - rho`` is added to it, which
    lifts exactly those eigenvalues to zero and keeps A PSD.
    """
    dims = (d, d)
    a = duals[1]
    w = duals[2] - duals[3]
    a = 0.5 * (a + a.conj().T)
    w = 0.5 * (w + w.conj().T)
    lam, v = np.linalg.eigh(a)
    a = (v * np.clip(lam, 0.0, None)) @ v.conj().T
    return _repair_dual(rho, a, w, d)


def _repair_dual(rho, a, w, d):
    dims = (d, d)
    s = a + nk.partial_transpose(w, dims, [1]) - rho
    lam, v = np.linalg.eigh(0.5 * (s + s.conj().T))
    neg = lam < 0
    if np.any(neg):
        a = a - (v[:, neg] * lam[neg]) @ v[:, neg].conj().T
        s = a + nk.partial_transpose(w, dims, [1]) - rho
        low = float(np.linalg.eigvalsh(0.5 * (s + s.conj().T))[0])
        if low < 0:
            # rounding in the update itself
            a = a + (-low) * np.eye(d * d)
    return 0.5 * (a + a.conj().T), w


def ppt_dual_value(a: np.ndarray, w: np.ndarray) -> float:
    return float(np.real(np.trace(a))) + 0.5 * float(np.sum(np.abs(np.linalg.eigvalsh(w))))


def ppt_residuals(rho: np.ndarray, X: np.ndarray, A: np.ndarray, W: np.ndarray, d: int) -> dict:
    """Constraint violations (0 when satisfied) of a primal/dual pair."""
    dims = (d, d)
    eye = np.eye(d * d)
    xt = nk.partial_transpose(X, dims, [1])

    def neg(m):
        return max(0.0, -float(np.linalg.eigvalsh(0.5 * (m + m.conj().T))[0]))

    return {
        "X>=0": neg(X),
        "I-X>=0": neg(eye - X),
        "I/2-X^TB>=0": neg(eye / 2 - xt),
        "I/2+X^TB>=0": neg(eye / 2 + xt),
        "A>=0": neg(A),
        "A+W^TB-rho>=0": neg(A + nk.partial_transpose(W, dims, [1]) - rho),
        "X hermitian": nk.hermitian_defect(X),
    }


def _embed_blocks(d: int) -> np.ndarray:
    """Basis for block-diagonal (A, P, Q), each a Hermitian d^2 x d^2 matrix."""
    n = d * d
    hb = hermitian_basis(n)
    out = []
    for slot in range(3):
        for e in hb:
            m = np.zeros((3 * n, 3 * n), dtype=complex)
            m[slot * n:(slot + 1) * n, slot * n:(slot + 1) * n] = e
            out.append(m)
    return np.array(out)


def solve_ppt_dual(
    rho: np.ndarray, d: int, primal_value: float, tol: float = DEFAULT_TOL, budget: int = NEWTON_BUDGET
):
    """Barrier path on the dual program with ``W = P - Q`` and P, Q >= 0.

    ``primal_value`` is a known feasible PPT objective; by weak duality it
    bounds the dual from below and serves as the stopping bracket. Returns
    (A, W, newton_steps). Every iterate is strictly dual feasible.
    """
    n = d * d
    dims = (d, d)
    rho = nk.as_matrix(rho)

    def part(y, slot):
        return y[slot * n:(slot + 1) * n, slot * n:(slot + 1) * n]

    blocks = [
        LmiBlock(np.zeros((n, n), dtype=complex), lambda y: part(y, 0), "A"),
        LmiBlock(np.zeros((n, n), dtype=complex), lambda y: part(y, 1), "P"),
        LmiBlock(np.zeros((n, n), dtype=complex), lambda y: part(y, 2), "Q"),
        LmiBlock(-rho, lambda y: part(y, 0) + nk.partial_transpose(part(y, 1) - part(y, 2), dims, [1]), "R"),
    ]
    objective = -np.diag(np.concatenate([np.ones(n), 0.5 * np.ones(n), 0.5 * np.ones(n)])).astype(complex)
    y0 = np.diag(np.concatenate([2 * np.ones(n), 0.5 * np.ones(n), 0.5 * np.ones(n)])).astype(complex)
    try:
        res = sdp_core(
            objective,
            blocks,
            tol,
            x0=y0,
            budget=budget,
            basis=_embed_blocks(d),
            certify=lambda y, z: -primal_value,
            strict=False,
        )
    except SdpConvergenceError as err:
        if err.certificate is None:
            raise
        res = err.certificate
    y = res.X
    a, w = part(y, 0), part(y, 1) - part(y, 2)
    return 0.5 * (a + a.conj().T), 0.5 * (w + w.conj().T), res.newton_steps


def solve_ppt_fidelity(problem: SdpProblem | ch.QuantumState, tolerance: float | None = None) -> SdpCertificate:
    """Largest overlap with phi+ reachable from ``rho`` under PPT operations, with a dual certificate."""
    if not isinstance(problem, SdpProblem):
        problem = SdpProblem(problem, DEFAULT_TOL if tolerance is None else tolerance)
    elif tolerance is not None:
        problem = SdpProblem(problem.rho, tolerance)
    rho = np.array(problem.rho.matrix)
    d = problem.rho.dims[0]
    tol = problem.tolerance

    def certify(X, duals):
        return ppt_dual_value(*ppt_dual_witnesses(rho, duals, d))

    def finish(res: SdpResult) -> SdpCertificate:
        X = 0.5 * (res.X + res.X.conj().T)
        primal = float(np.real(np.trace(rho @ X)))
        A, W = ppt_dual_witnesses(rho, res.duals, d)
        source, steps = "barrier", res.newton_steps
        if ppt_dual_value(A, W) - primal > tol:
            a2, w2, n2 = solve_ppt_dual(rho, d, primal, tol / 2)
            a2, w2 = _repair_dual(rho, a2, w2, d)
            steps += n2
            if ppt_dual_value(a2, w2) < ppt_dual_value(A, W):
                A, W, source = a2, w2, "dual-path"
        return SdpCertificate(primal, ppt_dual_value(A, W), X, A, W, ppt_residuals(rho, X, A, W, d), steps, source)

    try:
        res = sdp_core(rho, ppt_blocks(d), tol, x0=np.eye(d * d) / (d * d), certify=certify, strict=False)
    except SdpConvergenceError as err:
        if err.certificate is None:
            raise
        res = err.certificate
    cert = finish(res)
    if cert.gap > tol:
        raise SdpConvergenceError(
            f"certified gap {cert.gap:.3e} exceeds tolerance {tol:.1e}", (cert.primal_value, cert.dual_value), cert
        )
    return cert
