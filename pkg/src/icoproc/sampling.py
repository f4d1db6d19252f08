"""Random states, channels and measurements."""
from __future__ import annotations

import math
from typing import Sequence

import numpy as np
from scipy.linalg import sqrtm

from .tensor_core import LabeledOperator, SystemLabel, TensorSpace, choi_from_kraus


def get_rng(seed=None) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def ginibre(rng: np.random.Generator, rows: int, cols: int) -> np.ndarray:
    return (rng.standard_normal((rows, cols)) + 1j * rng.standard_normal((rows, cols))) / np.sqrt(2)


def random_density_matrix(d: int, seed=None, rank: int | None = None) -> np.ndarray:
    rng = get_rng(seed)
    g = ginibre(rng, d, rank or d)
    rho = g @ g.conj().T
    return rho / np.trace(rho).real


def random_hermitian(d: int, seed=None) -> np.ndarray:
    rng = get_rng(seed)
    g = ginibre(rng, d, d)
    return (g + g.conj().T) / 2


def random_isometry(d_in: int, d_out: int, seed=None) -> np.ndarray:
    """Haar-like isometry ``d_in -> d_out`` (requires ``d_out >= d_in``)."""
    rng = get_rng(seed)
    q, r = np.linalg.qr(ginibre(rng, d_out, d_in))
    return q * (np.diag(r) / np.abs(np.diag(r)))


def random_kraus(d_in: int, d_out: int, n_kraus: int | None = None, seed=None) -> list[np.ndarray]:
    """Kraus operators of a random CPTP map from a random Stinespring isometry."""
    rng = get_rng(seed)
    n_kraus = n_kraus or d_in * d_out
    v = random_isometry(d_in, d_out * n_kraus, rng)
    return [v[k * d_out:(k + 1) * d_out, :] for k in range(n_kraus)]


def random_channel(inputs: Sequence[SystemLabel], outputs: Sequence[SystemLabel],
                   n_kraus: int | None = None, seed=None) -> LabeledOperator:
    """Choi matrix of a random CPTP map from ``inputs`` to ``outputs``."""
    d_in = math.prod(l.dim for l in inputs)
    d_out = math.prod(l.dim for l in outputs)
    return choi_from_kraus(random_kraus(d_in, d_out, n_kraus, seed), inputs, outputs)


def random_state(labels: Sequence[SystemLabel], seed=None) -> LabeledOperator:
    space = TensorSpace(tuple(labels))
    return LabeledOperator(space, random_density_matrix(space.dim, seed))


def random_povm(d: int, n_outcomes: int, seed=None) -> np.ndarray:
    """Random POVM with ``n_outcomes`` full-rank elements, shape ``(n, d, d)``."""
    rng = get_rng(seed)
    raw = []
    for _ in range(n_outcomes):
        g = ginibre(rng, d, d)
        raw.append(g @ g.conj().T)
    total = sum(raw)
    inv_sqrt = np.linalg.inv(sqrtm(total))
    povm = np.array([inv_sqrt @ e @ inv_sqrt.conj().T for e in raw])
    return 0.5 * (povm + povm.conj().transpose(0, 2, 1))


def random_instrument(d_in: int, d_out: int, n_outcomes: int, seed=None) -> list[list[np.ndarray]]:
    """Random instrument as Kraus lists, one list per outcome."""
    rng = get_rng(seed)
    per = d_in * d_out
    kraus = random_kraus(d_in, d_out, per * n_outcomes, rng)
    return [kraus[k * per:(k + 1) * per] for k in range(n_outcomes)]
