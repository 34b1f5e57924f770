"""Choi operators, link products, channel application and comb validation.

A channel's Choi operator is ``J = sum_i (I x E_i) G (I x E_i)^dag`` with
``G = |G><G|`` and ``|G> = sum_i |ii>``; its legs are ordered inputs first,
then outputs. Labeled operators carry one string label per subsystem, and the
link product always returns its legs sorted by label (natural order, so
``A2`` sorts before ``A10``).
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from . import numkernel as nk
from .errors import InvalidChannelError, InvalidStateError, LayoutError

STATE_TOL = 1e-10
TP_TOL = 1e-9
CP_TOL = 1e-9
NS_TOL = 1e-8


def _frozen(m: np.ndarray) -> np.ndarray:
    m = np.array(m, dtype=complex, copy=True)
    m.setflags(write=False)
    return m


@dataclass(frozen=True)
class QuantumState:
    """Density matrix with its subsystem layout; validated on construction."""

    matrix: np.ndarray
    dims: tuple[int, ...]

    def __post_init__(self):
        m = nk.as_matrix(self.matrix)
        dims = nk.check_layout(m, self.dims if self.dims else (m.shape[0],))
        if nk.hermitian_defect(m) > STATE_TOL:
            raise InvalidStateError("state is not Hermitian")
        m = 0.5 * (m + m.conj().T)
        if abs(np.trace(m).real - 1.0) > STATE_TOL:
            raise InvalidStateError(f"state trace {np.trace(m).real!r} is not 1")
        lam = np.linalg.eigvalsh(m)[0]
        if lam < -STATE_TOL:
            raise InvalidStateError(f"state has negative eigenvalue {lam:.3e}")
        object.__setattr__(self, "matrix", _frozen(m))
        object.__setattr__(self, "dims", dims)

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]


def pure_state(vec, dims: Sequence[int] | None = None) -> QuantumState:
    v = np.asarray(vec, dtype=complex).reshape(-1)
    v = v / np.linalg.norm(v)
    return QuantumState(np.outer(v, v.conj()), tuple(dims) if dims else (v.size,))


def gamma(d: int) -> np.ndarray:
    """Unnormalized maximally entangled projector |G><G| on d x d."""
    v = np.eye(d, dtype=complex).reshape(-1)
    return np.outer(v, v)


def phi_plus(d: int = 2) -> np.ndarray:
    return gamma(d) / d


@dataclass(frozen=True)
class QuantumChannel:
    """Channel stored as its Choi operator over ``in_dims + out_dims``.

    ``tp`` is False for trace non-increasing maps such as measurement effects.
    """

    choi: np.ndarray
    in_dims: tuple[int, ...]
    out_dims: tuple[int, ...]
    label: str = ""
    tp: bool = True

    def __post_init__(self):
        j = nk.as_matrix(self.choi)
        in_dims = tuple(int(d) for d in self.in_dims)
        out_dims = tuple(int(d) for d in self.out_dims)
        nk.check_layout(j, in_dims + out_dims)
        if nk.hermitian_defect(j) > STATE_TOL * max(1, j.shape[0]):
            raise InvalidChannelError("Choi operator is not Hermitian")
        object.__setattr__(self, "choi", _frozen(0.5 * (j + j.conj().T)))
        object.__setattr__(self, "in_dims", in_dims)
        object.__setattr__(self, "out_dims", out_dims)

    @property
    def din(self) -> int:
        return int(np.prod(self.in_dims))

    @property
    def dout(self) -> int:
        return int(np.prod(self.out_dims))

    @property
    def dims(self) -> tuple[int, ...]:
        return self.in_dims + self.out_dims

    def choi_state(self) -> np.ndarray:
        return self.choi / self.din


def choi_from_kraus(
    kraus: Sequence,
    in_dims: Sequence[int] | None = None,
    out_dims: Sequence[int] | None = None,
    label: str = "",
) -> QuantumChannel:
    """Choi operator of ``rho -> sum_i E_i rho E_i^dag``.

    Each Kraus operator is ``dout x din``. The TP flag is set when
    ``sum_i E_i^dag E_i = I``; a sum that exceeds I is rejected.
    """
    ops = [np.asarray(e, dtype=complex) for e in kraus]
    if not ops:
        raise InvalidChannelError("empty Kraus set")
    shape = ops[0].shape
    if len(shape) != 2 or any(e.shape != shape for e in ops):
        raise InvalidChannelError("Kraus operators must share one 2D shape")
    dout, din = shape
    in_dims = tuple(in_dims) if in_dims else (din,)
    out_dims = tuple(out_dims) if out_dims else (dout,)
    if int(np.prod(in_dims)) != din or int(np.prod(out_dims)) != dout:
        raise InvalidChannelError("Kraus shape does not match the given layouts")
    # (I x E)|G> has amplitude E[o, i] at index i*dout + o
    vecs = np.stack([e.T.reshape(-1) for e in ops])
    j = vecs.T @ vecs.conj()
    completeness = sum(e.conj().T @ e for e in ops)
    excess = np.linalg.eigvalsh(completeness - np.eye(din))
    if excess[-1] > STATE_TOL:
        raise InvalidChannelError("Kraus set is not trace non-increasing")
    tp = bool(np.max(np.abs(completeness - np.eye(din))) <= STATE_TOL)
    return QuantumChannel(j, in_dims, out_dims, label, tp)


def choi_from_unitary(u, dims: Sequence[int] | None = None, label: str = "") -> QuantumChannel:
    u = np.asarray(u, dtype=complex)
    return choi_from_kraus([u], dims, dims, label)


# labeled operators and the link product


def _natural_key(label: str):
    return [int(t) if t.isdigit() else t for t in re.split(r"(\d+)", label)]


def sort_labels(labels: Iterable[str]) -> list[str]:
    return sorted(labels, key=_natural_key)


@dataclass(frozen=True)
class Operator:
    """Matrix whose tensor factors carry string labels."""

    matrix: np.ndarray
    labels: tuple[str, ...]
    dims: tuple[int, ...]

    def __post_init__(self):
        m = nk.as_matrix(self.matrix)
        labels = tuple(self.labels)
        dims = nk.check_layout(m, self.dims)
        if len(labels) != len(dims) or len(set(labels)) != len(labels):
            raise LayoutError(f"labels {labels} must be distinct, one per subsystem of {dims}")
        object.__setattr__(self, "matrix", _frozen(m))
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "dims", dims)

    def dim_of(self, label: str) -> int:
        return self.dims[self.labels.index(label)]

    def reorder(self, labels: Sequence[str]) -> "Operator":
        labels = tuple(labels)
        if sorted(labels) != sorted(self.labels):
            raise LayoutError(f"{labels} is not a permutation of {self.labels}")
        perm = [self.labels.index(l) for l in labels]
        n = len(perm)
        t = self.matrix.reshape(self.dims + self.dims)
        t = t.transpose(perm + [n + p for p in perm])
        dims = tuple(self.dims[p] for p in perm)
        d = int(np.prod(dims))
        return Operator(t.reshape(d, d), labels, dims)

    def sorted(self) -> "Operator":
        return self.reorder(sort_labels(self.labels))


def channel_operator(ch: QuantumChannel, inputs: Sequence[str], outputs: Sequence[str]) -> Operator:
    """Attach labels to the legs of a channel's Choi operator."""
    return Operator(ch.choi, tuple(inputs) + tuple(outputs), ch.dims)


def link_product(m: Operator, n: Operator, common: Iterable[str] | None = None) -> Operator:
    """``Tr_X[M^{T_X} N]`` over the shared labels X, identities implied elsewhere.

    With ``common=None`` every shared label is contracted. The result's legs
    are sorted by label.
    """
    shared = set(m.labels) & set(n.labels)
    common = set(shared if common is None else common)
    if common != shared:
        raise LayoutError(f"contracted labels {sorted(common)} must equal shared labels {sorted(shared)}")
    for c in common:
        if m.dim_of(c) != n.dim_of(c):
            raise LayoutError(f"label {c!r} has dimension {m.dim_of(c)} vs {n.dim_of(c)}")
    ids: dict[tuple[str, str], int] = {}

    def sym(label: str, side: str, owner: str) -> int:
        key = (label, side) if label in common else (f"{owner}:{label}", side)
        return ids.setdefault(key, len(ids))

    # contracting ket with ket and bra with bra realizes the partial transpose
    m_sub = [sym(l, "k", "m") for l in m.labels] + [sym(l, "b", "m") for l in m.labels]
    n_sub = [sym(l, "k", "n") for l in n.labels] + [sym(l, "b", "n") for l in n.labels]
    free = [(l, "m") for l in m.labels if l not in common] + [(l, "n") for l in n.labels if l not in common]
    free.sort(key=lambda t: _natural_key(t[0]))
    out_labels = tuple(l for l, _ in free)
    out_dims = tuple(m.dim_of(l) if o == "m" else n.dim_of(l) for l, o in free)
    out_sub = [ids[(f"{o}:{l}", "k")] for l, o in free] + [ids[(f"{o}:{l}", "b")] for l, o in free]
    r = np.einsum(m.matrix.reshape(m.dims + m.dims), m_sub, n.matrix.reshape(n.dims + n.dims), n_sub, out_sub)
    d = int(np.prod(out_dims)) if out_dims else 1
    return Operator(r.reshape(d, d), out_labels, out_dims)


def link_chain(ops: Sequence[Operator]) -> Operator:
    """Left fold of the link product over a sequence of operators."""
    if not ops:
        raise ValueError("need at least one operator")
    out = ops[0]
    for op in ops[1:]:
        out = link_product(out, op)
    return out


def apply_channel(ch: QuantumChannel, rho: QuantumState, on: Sequence[int] | None = None) -> QuantumState:
    """Apply ``ch`` to the subsystems ``on`` of ``rho`` as ``rho * J``.

    The channel's outputs take the place of the first acted-on subsystem;
    the other subsystems pass through unchanged.
    """
    n = len(rho.dims)
    on = list(range(n)) if on is None else [int(i) for i in on]
    if len(on) != len(ch.in_dims) or len(set(on)) != len(on) or any(i < 0 or i >= n for i in on):
        raise LayoutError(f"cannot apply a {len(ch.in_dims)}-input channel on subsystems {on}")
    if tuple(rho.dims[i] for i in on) != ch.in_dims:
        raise LayoutError(f"channel inputs {ch.in_dims} do not match state subsystems {[rho.dims[i] for i in on]}")
    labels = [f"s{k:04d}" for k in range(n)]
    outs = [f"s{on[0]:04d}o{k:02d}" for k in range(len(ch.out_dims))]
    state_op = Operator(rho.matrix, tuple(labels), rho.dims)
    chan_op = Operator(ch.choi, tuple(labels[i] for i in on) + tuple(outs), ch.dims)
    r = link_product(state_op, chan_op)
    m = r.matrix
    m = 0.5 * (m + m.conj().T)
    return QuantumState(m, r.dims)


def apply_kraus(kraus: Sequence, rho) -> np.ndarray:
    """Direct Kraus action on a matrix; used as an independent check of ``apply_channel``."""
    rho = nk.as_matrix(rho)
    return sum(np.asarray(e) @ rho @ np.asarray(e).conj().T for e in kraus)


def compose(first: QuantumChannel, second: QuantumChannel, label: str = "") -> QuantumChannel:
    """Choi operator of ``second o first`` via the link product over the middle system."""
    if first.out_dims != second.in_dims:
        raise LayoutError("output of the first channel must match input of the second")
    k = len(first.out_dims)
    a = channel_operator(first, [f"a{i}" for i in range(len(first.in_dims))], [f"m{i}" for i in range(k)])
    b = channel_operator(second, [f"m{i}" for i in range(k)], [f"z{i}" for i in range(len(second.out_dims))])
    r = link_product(a, b)
    return QuantumChannel(r.matrix, first.in_dims, second.out_dims, label, first.tp and second.tp)


def tensor_channels(a: QuantumChannel, b: QuantumChannel, label: str = "") -> QuantumChannel:
    """Choi operator of ``a x b`` with legs ``[a_in, b_in, a_out, b_out]``."""
    op_a = channel_operator(a, [f"i0_{k}" for k in range(len(a.in_dims))], [f"o0_{k}" for k in range(len(a.out_dims))])
    op_b = channel_operator(b, [f"i1_{k}" for k in range(len(b.in_dims))], [f"o1_{k}" for k in range(len(b.out_dims))])
    r = link_product(op_a, op_b)
    order = list(op_a.labels[: len(a.in_dims)]) + list(op_b.labels[: len(b.in_dims)])
    order += list(op_a.labels[len(a.in_dims):]) + list(op_b.labels[len(b.in_dims):])
    r = r.reorder(order)
    return QuantumChannel(r.matrix, a.in_dims + b.in_dims, a.out_dims + b.out_dims, label, a.tp and b.tp)


# combs and validation


@dataclass(frozen=True)
class Comb:
    """Choi operator of k sequential teeth, legs ordered ``in1, out1, ..., ink, outk``."""

    choi: np.ndarray
    teeth: tuple[tuple[int, int], ...]

    def __post_init__(self):
        teeth = tuple((int(a), int(b)) for a, b in self.teeth)
        j = nk.as_matrix(self.choi)
        nk.check_layout(j, [d for t in teeth for d in t])
        object.__setattr__(self, "choi", _frozen(j))
        object.__setattr__(self, "teeth", teeth)

    @property
    def dims(self) -> tuple[int, ...]:
        return tuple(d for t in self.teeth for d in t)


def build_comb(ops: Sequence[Operator], teeth: Sequence[tuple[str, str]]) -> Comb:
    """Link a sequence of labeled Choi operators into a comb.

    ``teeth`` names the (input, output) legs of each tooth in causal order;
    every other label must be shared between operators (memory legs).
    """
    j = link_chain(ops)
    order = [l for t in teeth for l in t]
    j = j.reorder(order)
    return Comb(j.matrix, tuple((j.dim_of(a), j.dim_of(b)) for a, b in teeth))


def superchannel(pre: Operator, post: Operator, teeth: Sequence[tuple[str, str]]) -> Comb:
    """Superchannel Choi operator ``J^pre * J^post`` joined over their memory legs."""
    return build_comb([pre, post], teeth)


@dataclass(frozen=True)
class ValidationReport:
    kind: str
    passed: bool
    residual: float
    detail: tuple[float, ...] = field(default=())


def _trace_last(j: np.ndarray, dims: Sequence[int]) -> np.ndarray:
    return nk.partial_trace(j, dims, range(len(dims) - 1))


def _causal_residuals(j: np.ndarray, dims: Sequence[int]) -> list[float]:
    """Peel off the last (in, out) pair repeatedly and measure the factorization error."""
    dims = list(dims)
    res = []
    while dims:
        if len(dims) == 2:
            red = nk.partial_trace(j, dims, [0])
            res.append(float(np.max(np.abs(red - np.eye(dims[0])))))
            break
        t = _trace_last(j, dims)
        head, d_in = dims[:-2], dims[-2]
        k = nk.partial_trace(t, head + [d_in], range(len(head))) / d_in
        res.append(float(np.max(np.abs(t - nk.kron(k, np.eye(d_in))))))
        j, dims = k, head
    return res


def validate(obj: QuantumChannel | Comb, kind: str) -> ValidationReport:
    """Check complete positivity, trace preservation or non-signalling.

    For a channel, ``nonsignalling`` means B does not signal to A for a channel
    with inputs ``(A1, B1)`` and outputs ``(A2, B2)``. For a comb it is the
    full causality chain: tracing the last output leaves ``K x I`` on the last
    input, recursively down to the first tooth.
    """
    j = obj.choi
    if kind == "cp":
        lam = float(np.linalg.eigvalsh(j)[0])
        return ValidationReport(kind, lam >= -CP_TOL, max(0.0, -lam))
    if isinstance(obj, Comb):
        dims = list(obj.dims)
        if kind == "tp":
            ins = [2 * i for i in range(len(obj.teeth))]
            red = nk.partial_trace(j, dims, ins)
            r = float(np.max(np.abs(red - np.eye(red.shape[0]))))
            return ValidationReport(kind, r <= TP_TOL, r)
        if kind == "nonsignalling":
            res = _causal_residuals(j, dims)
            return ValidationReport(kind, max(res) <= NS_TOL, max(res), tuple(res))
        raise ValueError(f"unknown validation kind {kind!r}")
    dims = list(obj.dims)
    nin = len(obj.in_dims)
    if kind == "tp":
        red = nk.partial_trace(j, dims, range(nin))
        r = float(np.max(np.abs(red - np.eye(obj.din))))
        return ValidationReport(kind, r <= TP_TOL, r)
    if kind == "nonsignalling":
        if nin != 2 or len(obj.out_dims) != 2:
            raise LayoutError("non-signalling check needs inputs (A1, B1) and outputs (A2, B2)")
        a1, b1 = obj.in_dims
        a2, _ = obj.out_dims
        t = nk.partial_trace(j, dims, [0, 1, 2])  # drop B2, legs A1 B1 A2
        t = Operator(t, ("A1", "B1", "A2"), (a1, b1, a2)).reorder(("A1", "A2", "B1")).matrix
        k = nk.partial_trace(t, (a1, a2, b1), [0, 1]) / b1
        r = float(np.max(np.abs(t - nk.kron(k, np.eye(b1)))))
        return ValidationReport(kind, r <= NS_TOL, r)
    raise ValueError(f"unknown validation kind {kind!r}")
