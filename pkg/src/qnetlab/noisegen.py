"""Single-qubit noise channels, the noisy entangling gate and resource states.

Every noise parameter is the weight of the identity branch, so ``param = 1``
is noiseless for all models.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Union

import numpy as np

from . import choi as ch
from . import fidelity as fid
from . import numkernel as nk
from .errors import NoiseSpecError

I2 = np.eye(2, dtype=complex)
X = np.array([[0, 1], [1, 0]], dtype=complex)
Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
Z = np.array([[1, 0], [0, -1]], dtype=complex)
H = np.array([[1, 1], [1, -1]], dtype=complex) / np.sqrt(2)
CNOT = np.array([[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]], dtype=complex)

KINDS = ("BF", "PF", "D", "AD", "ID")
_TOKENS = {"bf": "BF", "pf": "PF", "dep": "D", "ad": "AD", "id": "ID"}
_NAMES = {v: k for k, v in _TOKENS.items()}


@dataclass(frozen=True)
class NoiseSpec:
    kind: str
    param: float = 1.0

    def __post_init__(self):
        kind = str(self.kind).upper()
        if kind not in KINDS:
            raise NoiseSpecError(f"unknown noise kind {self.kind!r}")
        p = 1.0 if kind == "ID" else float(self.param)
        if not (0.0 <= p <= 1.0):
            raise NoiseSpecError(f"noise parameter {p} outside [0, 1]")
        object.__setattr__(self, "kind", kind)
        object.__setattr__(self, "param", p)

    def __str__(self) -> str:
        return "id" if self.kind == "ID" else f"{_NAMES[self.kind]}:{self.param:g}"


IDENTITY = NoiseSpec("ID")


def parse_noise_spec(text: str) -> NoiseSpec:
    """Parse ``bf:<p> | pf:<p> | dep:<p> | ad:<p> | id``."""
    t = text.strip().lower()
    if t == "id":
        return IDENTITY
    name, sep, value = t.partition(":")
    if not sep or name not in _TOKENS or name == "id":
        raise NoiseSpecError(f"cannot parse noise spec {text!r}")
    try:
        p = float(value)
    except ValueError:
        raise NoiseSpecError(f"cannot parse noise parameter in {text!r}") from None
    if not np.isfinite(p):
        raise NoiseSpecError(f"noise parameter must be finite in {text!r}")
    return NoiseSpec(_TOKENS[name], p)


def kraus_operators(spec: NoiseSpec) -> list[np.ndarray]:
    p = spec.param
    if spec.kind == "ID":
        return [I2.copy()]
    if spec.kind == "BF":
        return [np.sqrt(p) * I2, np.sqrt(1 - p) * X]
    if spec.kind == "PF":
        return [np.sqrt(p) * I2, np.sqrt(1 - p) * Z]
    if spec.kind == "D":
        w = np.sqrt((1 - p) / 4)
        return [np.sqrt((1 + 3 * p) / 4) * I2, w * X, w * Y, w * Z]
    # amplitude damping
    return [np.array([[1, 0], [0, np.sqrt(p)]], dtype=complex),
            np.array([[0, np.sqrt(1 - p)], [0, 0]], dtype=complex)]


@lru_cache(maxsize=512)
def make_noise_channel(spec: NoiseSpec) -> ch.QuantumChannel:
    return ch.choi_from_kraus(kraus_operators(spec), label=str(spec))


@lru_cache(maxsize=512)
def entangling_gate(n1: NoiseSpec, n2: NoiseSpec) -> ch.QuantumChannel:
    """``(N1 x N2) o CNOT o (H x id)`` as a two-qubit channel."""
    gate = ch.choi_from_unitary(CNOT @ nk.kron(H, I2), (2, 2))
    noise = ch.tensor_channels(make_noise_channel(n1), make_noise_channel(n2))
    return ch.compose(gate, noise, label=f"E({n1},{n2})")


def rotation(theta: float) -> np.ndarray:
    c, s = np.cos(theta / 2), np.sin(theta / 2)
    return np.array([[c, -s], [s, c]], dtype=complex)


def canonical_angle(theta: float) -> float:
    t = float(np.mod(theta, 2 * np.pi))
    return 0.0 if t >= 2 * np.pi else t


@dataclass(frozen=True)
class PreprocessAngles:
    alpha: float = 0.0
    beta: float = 0.0

    def __post_init__(self):
        if not (np.isfinite(self.alpha) and np.isfinite(self.beta)):
            raise ValueError("angles must be finite")

    def canonical(self) -> "PreprocessAngles":
        return PreprocessAngles(canonical_angle(self.alpha), canonical_angle(self.beta))


Twirl = Union[str, "fid.TwirlApproxConfig", None]


def input_state(angles: PreprocessAngles = PreprocessAngles()) -> np.ndarray:
    """Product input ``U1(alpha)|0> x U2(beta)|0>`` as a state vector."""
    return nk.kron(rotation(angles.alpha)[:, :1], rotation(angles.beta)[:, :1]).reshape(-1)


def prepare_resource(
    n1: NoiseSpec,
    n2: NoiseSpec,
    angles: PreprocessAngles = PreprocessAngles(),
    twirl: Twirl = "none",
) -> ch.QuantumState:
    """Shared two-qubit state after optional rotations, the noisy gate and optional twirl.

    ``twirl`` is ``"none"``, ``"exact"`` or a ``TwirlApproxConfig``.
    """
    v = input_state(angles)
    rho_in = ch.QuantumState(np.outer(v, v.conj()), (2, 2))
    rho = ch.apply_channel(entangling_gate(n1, n2), rho_in)
    if twirl is None or twirl == "none":
        return rho
    if twirl == "exact":
        return fid.isotropic_twirl_exact(rho)
    if isinstance(twirl, fid.TwirlApproxConfig):
        return fid.isotropic_twirl_approx(rho, twirl)
    raise ValueError(f"unknown twirl mode {twirl!r}")
