"""Random-object generators shared by the test modules."""
import numpy as np

from qnetlab import choi as ch
from qnetlab import numkernel as nk


def random_density(d, rng, rank=None):
    rank = d if rank is None else rank
    g = rng.normal(size=(d, rank)) + 1j * rng.normal(size=(d, rank))
    m = g @ g.conj().T
    return m / np.trace(m).real


def random_state(rng, dims=(2, 2)):
    return ch.QuantumState(random_density(int(np.prod(dims)), rng), dims)


def random_hermitian(d, rng):
    g = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    return (g + g.conj().T) / 2


def random_kraus(d, rng, n=3):
    """Kraus set of a random channel: columns of an isometry cut into blocks."""
    u = nk.haar_unitary(d * n, rng)[:, :d]
    return [u[k * d:(k + 1) * d] for k in range(n)]


def random_kraus_rect(din, dout, rng, n=2):
    u = nk.haar_unitary(dout * n, rng)[:, :din]
    return [u[k * dout:(k + 1) * dout] for k in range(n)]


def random_channel(d, rng, n=3):
    return ch.choi_from_kraus(random_kraus(d, rng, n), (d,), (d,))
