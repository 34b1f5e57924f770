import time

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from qnetlab import choi as ch
from qnetlab import noisegen as ng
from qnetlab import numkernel as nk
from qnetlab import pptsdp as ps
from qnetlab.errors import LayoutError, SdpConvergenceError
from qnetlab.noisegen import NoiseSpec

from helpers import random_density

SWAP = np.eye(4)[[0, 2, 1, 3]]
GAP = 1e-6
RESIDUAL = 1e-9


def check_certificate(cert, rho):
    assert cert.gap <= GAP
    assert cert.dual_value >= cert.primal_value - 1e-12
    assert max(cert.feasibility_residuals.values()) <= RESIDUAL
    recomputed = ps.ppt_residuals(rho, cert.X, cert.A, cert.W, 2)
    assert max(recomputed.values()) <= RESIDUAL
    assert abs(np.real(np.trace(rho @ cert.X)) - cert.primal_value) <= 1e-12
    assert abs(ps.ppt_dual_value(cert.A, cert.W) - cert.dual_value) <= 1e-12


# independent oracle: projected ascent with Dykstra projections onto the two PSD slabs


def _clip_spectrum(m, lo, hi):
    w, v = np.linalg.eigh(0.5 * (m + m.conj().T))
    return (v * np.clip(w, lo, hi)) @ v.conj().T


def _project_feasible(x, sweeps=200):
    dims = (2, 2)
    p = np.zeros_like(x)
    q = np.zeros_like(x)
    for _ in range(sweeps):
        y = _clip_spectrum(x + p, 0.0, 1.0)
        p = x + p - y
        z = nk.partial_transpose(_clip_spectrum(nk.partial_transpose(y + q, dims, [1]), -0.5, 0.5), dims, [1])
        q = y + q - z
        x = z
    return x


def ascent_oracle(rho, steps=400, seed=0):
    """Best objective found by projected gradient plus random feasible directions."""
    rng = np.random.default_rng(seed)
    x = np.eye(4) / 4
    best = float(np.real(np.trace(rho @ x)))
    for k in range(steps):
        d = rho + 0.05 * (rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4))) / (k + 1)
        cand = _project_feasible(x + 0.5 * (d + d.conj().T) / (1 + 0.01 * k))
        # shrink toward the interior point I/4 so the candidate is feasible, not just nearly
        cand = 0.999 * cand + 0.001 * np.eye(4) / 4
        val = float(np.real(np.trace(rho @ cand)))
        if val > best:
            x, best = cand, val
    r = ps.ppt_residuals(rho, x, np.zeros((4, 4)), np.zeros((4, 4)), 2)
    assert max(r["X>=0"], r["I-X>=0"], r["I/2-X^TB>=0"], r["I/2+X^TB>=0"]) <= 1e-9
    return best


def test_ascent_oracle_on_maximally_mixed():
    # DERIVED value 1/2 comes from this oracle; the interior-point result is checked against it
    lower = ascent_oracle(np.eye(4) / 4)
    assert 0.499 <= lower <= 0.5 + 1e-12
    cert = ps.solve_ppt_fidelity(ch.QuantumState(np.eye(4) / 4, (2, 2)))
    assert abs(cert.primal_value - 0.5) <= 1e-6
    assert cert.primal_value >= lower - 1e-9
    check_certificate(cert, np.eye(4) / 4)


@pytest.mark.parametrize("seed", range(3))
def test_ascent_oracle_random(seed):
    rho = random_density(4, np.random.default_rng(seed))
    cert = ps.solve_ppt_fidelity(ch.QuantumState(rho, (2, 2)))
    lower = ascent_oracle(rho, seed=seed)
    assert cert.primal_value >= lower - 1e-9
    assert cert.primal_value - lower <= 5e-3


def test_trivial_values():
    for rho, value in [(ch.phi_plus(2), 1.0), (np.diag([1.0, 0, 0, 0]), 0.5)]:
        cert = ps.solve_ppt_fidelity(ch.QuantumState(rho, (2, 2)))
        assert abs(cert.primal_value - value) <= 1e-6
        check_certificate(cert, rho)


def test_problem_validation():
    with pytest.raises(LayoutError):
        ps.SdpProblem(ch.QuantumState(np.eye(8) / 8, (2, 4)))
    with pytest.raises(ValueError):
        ps.SdpProblem(np.eye(4) / 4, tolerance=0)
    assert ps.SdpProblem(np.eye(4) / 4).rho.dims == (2, 2)


def test_sdp_core_examples():
    r = ps.sdp_core(np.eye(2), [ps.LmiBlock.identity(np.zeros((2, 2))), ps.LmiBlock.identity(np.eye(2), -1.0)])
    assert r.converged and abs(r.lower - 2) <= 1e-7 and r.upper - r.lower <= ps.DEFAULT_TOL
    assert np.allclose(r.X, np.eye(2), atol=1e-7)
    r = ps.sdp_core(np.diag([1.0, 0.0]),
                    [ps.LmiBlock.identity(np.zeros((2, 2))), ps.LmiBlock.identity(np.eye(2) / 2, -1.0)])
    assert r.converged and abs(r.lower - 0.5) <= 1e-7
    r = ps.sdp_core(ch.phi_plus(2), ps.ppt_blocks(2), strict=False)
    assert abs(r.lower - ps.solve_ppt_fidelity(ch.QuantumState(ch.phi_plus(2), (2, 2))).primal_value) <= 1e-7


def test_sdp_core_budget_reports_bracket():
    with pytest.raises(SdpConvergenceError) as info:
        ps.sdp_core(np.eye(2), [ps.LmiBlock.identity(np.zeros((2, 2))), ps.LmiBlock.identity(np.eye(2), -1.0)],
                    x0=np.eye(2) / 2, budget=5)
    lo, hi = info.value.bracket
    assert lo <= 2 <= hi + 1e-9


def test_hermitian_basis_roundtrip():
    rng = np.random.default_rng(0)
    basis = ps.hermitian_basis(4)
    assert basis.shape == (16, 4, 4)
    m = rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4))
    m = m + m.conj().T
    assert np.allclose(ps.to_matrix(ps.to_coords(m, basis), basis), m)


def test_monotone_in_singlet_weight():
    values = [ps.solve_ppt_fidelity(ch.QuantumState(lam * ch.phi_plus(2) + (1 - lam) * np.eye(4) / 4, (2, 2))).primal_value
              for lam in np.linspace(0, 1, 11)]
    assert np.all(np.diff(values) >= -1e-9)


def test_lower_bound_on_resources():
    rng = np.random.default_rng(3)
    for _ in range(100):
        rho = ng.prepare_resource(NoiseSpec("AD", rng.uniform()), NoiseSpec("D", rng.uniform()))
        cert = ps.solve_ppt_fidelity(rho)
        assert cert.primal_value >= np.real(np.trace(rho.matrix @ ch.phi_plus(2))) - 1e-9
        assert cert.primal_value <= 1 + 1e-9


def test_swap_symmetry():
    rng = np.random.default_rng(4)
    for _ in range(5):
        rho = random_density(4, rng)
        sym = 0.5 * (rho + SWAP @ rho @ SWAP)
        cert = ps.solve_ppt_fidelity(ch.QuantumState(sym, (2, 2)))
        swapped = SWAP @ cert.X @ SWAP
        # the swapped optimizer is feasible with A and B exchanged and scores the same
        r = ps.ppt_residuals(sym, swapped, cert.A, cert.W, 2)
        assert max(r["X>=0"], r["I-X>=0"], r["I/2-X^TB>=0"], r["I/2+X^TB>=0"]) <= 1e-9
        assert abs(np.real(np.trace(sym @ swapped)) - cert.primal_value) <= 1e-12
        other = ps.solve_ppt_fidelity(ch.QuantumState(SWAP @ rho @ SWAP, (2, 2)))
        assert abs(other.primal_value - ps.solve_ppt_fidelity(ch.QuantumState(rho, (2, 2))).primal_value) <= 1e-7


def test_random_instances_certified_and_fast():
    rng = np.random.default_rng(5)
    states = [ch.QuantumState(random_density(4, rng), (2, 2)) for _ in range(100)]
    start = time.perf_counter()
    certs = [ps.solve_ppt_fidelity(s) for s in states]
    elapsed = time.perf_counter() - start
    for s, c in zip(states, certs):
        check_certificate(c, s.matrix)
    assert elapsed < 10


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 4))
def test_random_rank_certificates(seed, rank):
    rho = random_density(4, np.random.default_rng(seed), rank)
    check_certificate(ps.solve_ppt_fidelity(ch.QuantumState(rho, (2, 2))), rho)


@pytest.mark.filterwarnings("ignore::UserWarning")
def test_matches_cvxpy():
    cp = pytest.importorskip("cvxpy")
    rng = np.random.default_rng(6)
    for _ in range(5):
        rho = random_density(4, rng)
        x = cp.Variable((4, 4), hermitian=True)
        xt = cp.partial_transpose(x, (2, 2), 1)
        eye = np.eye(4)
        prob = cp.Problem(cp.Maximize(cp.real(cp.trace(rho @ x))),
                          [x >> 0, eye - x >> 0, eye / 2 - xt >> 0, eye / 2 + xt >> 0])
        prob.solve(solver=cp.CLARABEL)
        cert = ps.solve_ppt_fidelity(ch.QuantumState(rho, (2, 2)))
        assert abs(cert.primal_value - prob.value) <= 1e-6


def test_infeasible_program_raises():
    blocks = [ps.LmiBlock.identity(-np.eye(2)), ps.LmiBlock.identity(np.zeros((2, 2)), -1.0)]
    with pytest.raises(SdpConvergenceError):
        ps.sdp_core(np.eye(2), blocks)


def test_dual_path_fallback_certifies():
    rng = np.random.default_rng(8)
    for rho in (ch.phi_plus(2), random_density(4, rng), random_density(4, rng, 1)):
        primal = ps.solve_ppt_fidelity(ch.QuantumState(rho, (2, 2))).primal_value
        a, w, steps = ps.solve_ppt_dual(rho, 2, primal)
        r = ps.ppt_residuals(rho, np.eye(4) / 4, a, w, 2)
        assert r["A>=0"] == 0 and r["A+W^TB-rho>=0"] == 0
        assert 0 <= ps.ppt_dual_value(a, w) - primal <= 1e-7
        assert steps <= ps.NEWTON_BUDGET


def test_generic_upper_bound_is_valid_off_path():
    # a truncated run must never report an upper bound below the optimum
    for budget in (3, 6, 10, 20):
        try:
            r = ps.sdp_core(np.diag([1.0, 2.0]), [ps.LmiBlock.identity(np.zeros((2, 2))),
                                                   ps.LmiBlock.identity(np.eye(2), -1.0)],
                            x0=np.eye(2) * 0.1, budget=budget)
            lo, hi = r.lower, r.upper
        except SdpConvergenceError as err:
            lo, hi = err.bracket
        assert lo <= 3 + 1e-12 <= hi + 1e-9
