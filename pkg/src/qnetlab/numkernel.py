"""Dense complex linear algebra on small matrices.

Matrices are plain 2D complex ``numpy`` arrays in row-major order. A layout is
a tuple of subsystem dimensions with the leftmost subsystem most significant,
so the basis index of ``|i j k>`` on dims ``(a, b, c)`` is ``(i*b + j)*c + k``.
"""
from __future__ import annotations

from typing import Iterable, Sequence, Union

import numpy as np

from .errors import LayoutError, NotHermitianError, NotPositiveError

HERMITIAN_TOL = 1e-10
PSD_CLAMP = -1e-10

RngLike = Union[int, np.integer, np.random.Generator]


def as_matrix(m) -> np.ndarray:
    """Return ``m`` as a square complex array (accepts objects with ``.matrix``)."""
    m = getattr(m, "matrix", m)
    m = np.asarray(m, dtype=complex)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise LayoutError(f"expected a square matrix, got shape {m.shape}")
    return m


def check_layout(m: np.ndarray, dims: Sequence[int]) -> tuple[int, ...]:
    dims = tuple(int(d) for d in dims)
    if any(d < 1 for d in dims):
        raise LayoutError(f"dimensions must be positive: {dims}")
    if int(np.prod(dims)) != m.shape[0]:
        raise LayoutError(f"layout {dims} does not match matrix dimension {m.shape[0]}")
    return dims


def _index_set(which: Iterable[int], n: int) -> list[int]:
    idx = sorted({int(i) for i in which})
    if any(i < 0 or i >= n for i in idx):
        raise LayoutError(f"subsystem indices {idx} out of range for {n} subsystems")
    return idx


def kron(a, b) -> np.ndarray:
    """Tensor product with ``out[i*db + k, j*db + l] = a[i, j] * b[k, l]``."""
    a = np.asarray(a, dtype=complex)
    b = np.asarray(b, dtype=complex)
    return np.kron(a, b)


def kron_all(*ms) -> np.ndarray:
    out = np.ones((1, 1), dtype=complex)
    for m in ms:
        out = kron(out, m)
    return out


def partial_trace(m, dims: Sequence[int], keep: Iterable[int]) -> np.ndarray:
    """Trace out every subsystem not listed in ``keep``.

    Kept subsystems stay in their original order.
    """
    m = as_matrix(m)
    dims = check_layout(m, dims)
    n = len(dims)
    keep = _index_set(keep, n)
    if not keep:
        raise LayoutError("keep must name at least one subsystem")
    t = m.reshape(dims + dims)
    ket = list(range(n))
    bra = [n + i for i in range(n)]
    for i in range(n):
        if i not in keep:
            bra[i] = ket[i]
    out_labels = [ket[i] for i in keep] + [bra[i] for i in keep]
    r = np.einsum(t, ket + bra, out_labels)
    dk = int(np.prod([dims[i] for i in keep]))
    return r.reshape(dk, dk)


def partial_transpose(m, dims: Sequence[int], which: Iterable[int]) -> np.ndarray:
    """Transpose the ket and bra indices of the selected subsystems only."""
    m = as_matrix(m)
    dims = check_layout(m, dims)
    n = len(dims)
    which = _index_set(which, n)
    t = m.reshape(dims + dims)
    axes = list(range(2 * n))
    for i in which:
        axes[i], axes[n + i] = n + i, i
    return t.transpose(axes).reshape(m.shape)


def hermitian_defect(m) -> float:
    m = as_matrix(m)
    return float(np.max(np.abs(m - m.conj().T))) if m.size else 0.0


def eig_hermitian(m, tol: float = HERMITIAN_TOL) -> tuple[np.ndarray, np.ndarray]:
    """Eigenvalues (ascending) and unitary eigenvectors of a Hermitian matrix."""
    m = as_matrix(m)
    if hermitian_defect(m) > tol:
        raise NotHermitianError(f"matrix is not Hermitian (defect {hermitian_defect(m):.3e})")
    h = 0.5 * (m + m.conj().T)
    w, v = np.linalg.eigh(h)
    return w, v


def psd_sqrt(m) -> np.ndarray:
    """Principal square root of a PSD matrix, clamping eigenvalues in [-1e-10, 0)."""
    w, v = eig_hermitian(m)
    if w.size and w[0] < PSD_CLAMP:
        raise NotPositiveError(f"matrix has eigenvalue {w[0]:.3e} below {PSD_CLAMP}")
    s = np.sqrt(np.clip(w, 0.0, None))
    r = (v * s) @ v.conj().T
    return 0.5 * (r + r.conj().T)


def as_generator(rng: RngLike) -> np.random.Generator:
    if isinstance(rng, np.random.Generator):
        return rng
    return np.random.default_rng(int(rng))


def derive_seed(master: int, *counters: int) -> int:
    """Counter-based sub-seed: the same (master, counters) always gives the same value.

    Uses ``SeedSequence`` spawn keys, so sub-seeds are independent of the
    order in which they are requested.
    """
    ss = np.random.SeedSequence(int(master), spawn_key=tuple(int(c) for c in counters))
    lo, hi = ss.generate_state(2, dtype=np.uint32)
    return int(lo) | (int(hi) << 32)


def haar_unitary(d: int, rng: RngLike) -> np.ndarray:
    """Haar-random ``d x d`` unitary.

    Complex Gaussian matrix, QR, then each column of Q is divided by the
    phase of the matching diagonal entry of R.
    """
    if d < 1:
        raise ValueError("d must be >= 1")
    g = as_generator(rng)
    z = (g.standard_normal((d, d)) + 1j * g.standard_normal((d, d))) / np.sqrt(2.0)
    q, r = np.linalg.qr(z)
    diag = np.diagonal(r)
    phase = np.where(np.abs(diag) > 0, diag / np.abs(diag), 1.0)
    return q * phase[np.newaxis, :]
