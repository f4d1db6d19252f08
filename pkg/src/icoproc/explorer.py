"""Bit-scale exploration of classical parity-erasure channels.

Deterministic channels are enumerated exhaustively, the parity-erasure
polytope of two bit-parties is enumerated vertex by vertex, and membership in
the hull of causally ordered deterministic channels is decided by LP.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from itertools import combinations, product
from typing import Iterator, Sequence

import numpy as np
from scipy.optimize import linprog

from .channels import ClassicalChannel, classical_signed_marginals, parity_erasure_classical
from .process_matrix import nonempty_subsets

TWO_BITS = ((2, 2), (2, 2))
MAX_INPUTS = 4
MAX_OUTPUTS = 4
LP_SLACK = 1e-8


class ScaleCapError(ValueError):
    pass


def _check_cap(sig, max_inputs=MAX_INPUTS, max_outputs=MAX_OUTPUTS):
    out_sizes, in_sizes = sig
    n_in, n_out = math.prod(in_sizes), math.prod(out_sizes)
    if n_in > max_inputs or n_out > max_outputs:
        raise ScaleCapError(f"{n_out}^{n_in} deterministic tables exceed the cap "
                            f"(|inputs| <= {max_inputs}, |outputs| <= {max_outputs})")
    return n_in, n_out


@dataclass(frozen=True)
class DeterministicChannel:
    """Deterministic channel ``a = f(x)``.

    ``code`` lists the flat output index for each flat input index (row-major),
    read as a base-``|outputs|`` integer with the first input as least
    significant digit.
    """

    out_sizes: tuple[int, ...]
    in_sizes: tuple[int, ...]
    code: int

    @property
    def assignment(self) -> tuple[int, ...]:
        n_in, n_out = math.prod(self.in_sizes), math.prod(self.out_sizes)
        digits, c = [], self.code
        for _ in range(n_in):
            c, r = divmod(c, n_out)
            digits.append(r)
        return tuple(digits)

    def output(self, x: Sequence[int]) -> tuple[int, ...]:
        flat_x = np.ravel_multi_index(tuple(x), self.in_sizes)
        return tuple(int(v) for v in np.unravel_index(self.assignment[flat_x], self.out_sizes))

    def to_channel(self) -> ClassicalChannel:
        return ClassicalChannel.from_function(self.out_sizes, self.in_sizes, self.output)

    @classmethod
    def from_channel(cls, ch: ClassicalChannel, tol: float = 1e-9) -> "DeterministicChannel":
        n_in, n_out = math.prod(ch.in_sizes), math.prod(ch.out_sizes)
        flat = ch.table.reshape(n_out, n_in)
        if np.any(np.abs(flat * (1 - flat)) > tol):
            raise ValueError("channel is not deterministic")
        assign = np.argmax(flat, axis=0)
        code = sum(int(a) * n_out ** k for k, a in enumerate(assign))
        return cls(ch.out_sizes, ch.in_sizes, code)

    def __str__(self):
        rows = []
        for x in product(*[range(s) for s in self.in_sizes]):
            rows.append("".join(map(str, x)) + "->" + "".join(map(str, self.output(x))))
        return " ".join(rows)


def enumerate_deterministic(sig=TWO_BITS, max_inputs=MAX_INPUTS, max_outputs=MAX_OUTPUTS
                            ) -> Iterator[DeterministicChannel]:
    out_sizes, in_sizes = tuple(sig[0]), tuple(sig[1])
    n_in, n_out = _check_cap((out_sizes, in_sizes), max_inputs, max_outputs)
    for code in range(n_out ** n_in):
        yield DeterministicChannel(out_sizes, in_sizes, code)


def deterministic_parity_erasure_census(sig=TWO_BITS, tol: float = 1e-9) -> list[DeterministicChannel]:
    return [d for d in enumerate_deterministic(sig)
            if parity_erasure_classical(d.to_channel(), tol).verdict]


def is_causally_ordered(ch: ClassicalChannel, tol: float = 1e-9) -> bool:
    """Two-party structural test: one party's output is input-independent and the
    other's depends only on the first party's input."""
    if ch.n_parties != 2:
        raise ValueError("structural classifier covers two parties")
    t = ch.table  # [a1, a2, x1, x2]
    m1 = t.sum(axis=1)  # [a1, x1, x2]
    m2 = t.sum(axis=0)  # [a2, x1, x2]

    def const(m):
        return np.all(np.abs(m - m[:, :1, :1]) <= tol)

    def only_x1(m):
        return np.all(np.abs(m - m[:, :, :1]) <= tol)

    def only_x2(m):
        return np.all(np.abs(m - m[:, :1, :]) <= tol)

    # deterministic outputs factorize, so marginal conditions decide the order
    first_is_1 = const(m1) and only_x1(m2)
    first_is_2 = const(m2) and only_x2(m1)
    return bool(first_is_1 or first_is_2)


def causally_ordered_deterministic(sig=TWO_BITS) -> list[DeterministicChannel]:
    return [d for d in enumerate_deterministic(sig) if is_causally_ordered(d.to_channel())]


# ---------------------------------------------------------------------------
# Polytope
# ---------------------------------------------------------------------------

def parity_constraints(sig=TWO_BITS) -> tuple[np.ndarray, np.ndarray]:
    """Equality system ``A p = b`` over the flattened table (normalization + parity).

    Rows of the parity conditions are obtained by applying the signed-marginal
    map of ``channels`` to unit tables, then reduced to a row basis.
    """
    out_sizes, in_sizes = tuple(sig[0]), tuple(sig[1])
    shape = out_sizes + in_sizes
    nvar = math.prod(shape)
    n_out, n_in = math.prod(out_sizes), math.prod(in_sizes)
    rows, rhs = [], []
    flat_in = np.arange(nvar).reshape(n_out, n_in)
    for xi in range(n_in):
        r = np.zeros(nvar)
        r[flat_in[:, xi]] = 1
        rows.append(r)
        rhs.append(1.0)
    # columns of the linear map table -> signed marginals
    cols = []
    for k in range(nvar):
        e = np.zeros(nvar)
        e[k] = 1
        ch = ClassicalChannel(out_sizes, in_sizes, e.reshape(shape))
        cols.append(np.concatenate([classical_signed_marginals(ch, s).ravel()
                                    for s in nonempty_subsets(range(1, len(in_sizes) + 1))]))
    parity = np.array(cols).T
    rows.extend(parity)
    rhs.extend([0.0] * len(parity))
    A, b = np.array(rows), np.array(rhs)
    return _row_basis(A, b)


def _row_basis(A: np.ndarray, b: np.ndarray, tol: float = 1e-10):
    keep, basis = [], np.zeros((0, A.shape[1]))
    for k in range(A.shape[0]):
        trial = np.vstack([basis, A[k]])
        if np.linalg.matrix_rank(trial, tol) > basis.shape[0]:
            basis = trial
            keep.append(k)
    return A[keep], b[keep]


def _exact_check(A: np.ndarray, b: np.ndarray, p: np.ndarray) -> Fraction | None:
    """Verify a rounded rational point exactly; return None on failure."""
    q = [Fraction(float(v)).limit_denominator(64) for v in p]
    if any(v < 0 for v in q):
        return None
    for row, rhs in zip(A, b):
        fr = [Fraction(float(v)).limit_denominator(64) for v in row]
        if sum(a * v for a, v in zip(fr, q)) != Fraction(float(rhs)).limit_denominator(64):
            return None
    return q


def parity_polytope_vertices(sig=TWO_BITS, tol: float = 1e-9) -> list[ClassicalChannel]:
    """Vertices of ``{p >= 0, normalization, parity-erasure}`` by basic-solution search.

    A vertex is a feasible point at which the equalities plus the tight
    nonnegativity constraints have full rank.  Every subset of coordinates of
    the right size is tried as the tight set.
    """
    out_sizes, in_sizes = tuple(sig[0]), tuple(sig[1])
    _check_cap((out_sizes, in_sizes))
    shape = out_sizes + in_sizes
    A, b = parity_constraints((out_sizes, in_sizes))
    nvar = A.shape[1]
    n_zero = nvar - A.shape[0]
    found: dict[tuple, np.ndarray] = {}
    eye = np.eye(nvar)
    for zeros in combinations(range(nvar), n_zero):
        M = np.vstack([A, eye[list(zeros)]])
        if abs(np.linalg.det(M)) < 1e-9:
            continue
        p = np.linalg.solve(M, np.concatenate([b, np.zeros(n_zero)]))
        if p.min() < -tol:
            continue
        p = np.where(np.abs(p) < tol, 0.0, p)
        key = tuple(np.round(p / tol).astype(np.int64))
        if key not in found:
            if _exact_check(A, b, p) is None:
                raise ArithmeticError(f"vertex {p} failed exact rational verification")
            found[key] = p
    return [ClassicalChannel(out_sizes, in_sizes, p.reshape(shape)) for p in found.values()]


# ---------------------------------------------------------------------------
# Causal separability
# ---------------------------------------------------------------------------

@dataclass
class SeparabilityCertificate:
    feasible: bool
    weights: dict = field(default_factory=dict)  # code -> weight
    residual: float = 0.0
    witness: np.ndarray | None = None  # functional y with y.p - max_k y.v_k = margin
    margin: float = 0.0

    def to_dict(self) -> dict:
        out = {"feasible": self.feasible, "residual": self.residual, "margin": self.margin,
               "weights": {str(k): v for k, v in self.weights.items()}}
        if self.witness is not None:
            out["witness"] = [float(v) for v in self.witness]
        return out


def causal_separability_lp(ch: ClassicalChannel, slack: float = LP_SLACK) -> SeparabilityCertificate:
    """Decide whether ``ch`` is a mixture of causally ordered deterministic channels.

    The separating functional ``y`` (box-bounded by 1) maximizes
    ``y.p - max_k y.v_k``; a positive optimum certifies infeasibility.
    Otherwise the convex weights are recovered from the primal LP.
    """
    if ch.out_sizes != (2, 2) or ch.in_sizes != (2, 2):
        raise ScaleCapError("causal separability LP covers two bit-parties")
    ch.check()
    verts = causally_ordered_deterministic()
    V = np.array([v.to_channel().table.ravel() for v in verts])  # (k, 16)
    p = ch.table.ravel()
    k, nvar = V.shape

    # dual: variables (y, t); maximize y.p - t  s.t.  V y - t <= 0, -1 <= y <= 1
    c = np.concatenate([-p, [1.0]])
    A_ub = np.hstack([V, -np.ones((k, 1))])
    res = linprog(c, A_ub=A_ub, b_ub=np.zeros(k), bounds=[(-1, 1)] * nvar + [(None, None)],
                  method="highs")
    if res.status != 0:
        raise RuntimeError(f"separation LP failed: {res.message}")
    margin = -float(res.fun)
    y = res.x[:nvar]
    if margin > slack:
        return SeparabilityCertificate(False, witness=y, margin=margin, residual=margin)

    res = linprog(np.zeros(k), A_eq=np.vstack([V.T, np.ones((1, k))]),
                  b_eq=np.concatenate([p, [1.0]]), bounds=[(0, None)] * k, method="highs")
    if res.status != 0:
        raise RuntimeError(f"membership LP failed although separation margin is {margin:.3e}: "
                           f"{res.message}")
    w = res.x
    residual = float(np.max(np.abs(V.T @ w - p)))
    weights = {v.code: float(wi) for v, wi in zip(verts, w) if wi > slack}
    return SeparabilityCertificate(True, weights, residual, witness=None, margin=margin)


def channel_rows(channels: Sequence[ClassicalChannel]) -> tuple[list[str], list[list]]:
    """CSV header and rows: ``code`` then ``p(a|x)`` entries, a-major."""
    first = channels[0] if channels else ClassicalChannel((2, 2), (2, 2), np.zeros((2, 2, 2, 2)))
    header = ["index", "code"]
    outs = list(product(*[range(s) for s in first.out_sizes]))
    ins = list(product(*[range(s) for s in first.in_sizes]))
    for a in outs:
        for x in ins:
            header.append("p(" + "".join(map(str, a)) + "|" + "".join(map(str, x)) + ")")
    rows = []
    for idx, ch in enumerate(channels):
        try:
            code = DeterministicChannel.from_channel(ch).code
        except ValueError:
            code = ""
        vals = [float(ch.table[a + x]) for a in outs for x in ins]
        rows.append([idx, code] + [f"{v:.12g}" for v in vals])
    return header, rows
