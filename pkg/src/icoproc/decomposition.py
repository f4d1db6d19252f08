"""One-way-signaling decompositions, slot insertion and supermap application.

A channel in which the input ``X_i`` cannot influence the output ``A_i``
factors as an encoder ``E`` (other inputs -> ``A_i`` and a memory ``M``)
followed by a decoder ``D`` (``X_i`` and ``M`` -> other outputs).  Plugging a
local operation ``A_i -> X_i`` between the two removes party ``i``; repeating
this for every party turns a parity-erasure channel into a probability (or a
channel between global past and future factors).
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .channels import (
    ClassicalChannel,
    QuantumChannel,
    as_quantum,
    parity_erasure_quantum,
)
from .process_matrix import GLOBAL, format_subset, pair
from .tensor_core import (
    DEFAULT_TOL,
    LabeledOperator,
    Role,
    SystemLabel,
    TensorSpace,
    link,
    partial_trace,
    sort_key,
    trace_and_replace,
)

DECOMPOSITION_TOL = 1e-7
RANK_TOL = 1e-10
READOUT_TAG = 1


class DecompositionError(RuntimeError):
    def __init__(self, message, no_influence: float | None = None):
        super().__init__(message)
        self.no_influence = no_influence


class ParityErasureViolation(ValueError):
    def __init__(self, subsets, residuals):
        names = ", ".join(format_subset(s) for s in subsets)
        super().__init__(f"channel is not parity-erasure; violated subsets: {names}")
        self.subsets = list(subsets)
        self.residuals = residuals


@dataclass
class DecompositionResult:
    """Encoder/decoder pair realizing a one-way-signaling factorization.

    Quantum results hold Choi matrices; ``E`` maps the other inputs to
    ``A_i (x) M`` and ``D`` maps ``X_i (x) M`` to the other outputs.  Classical
    results hold stochastic tables with the same wiring.
    """

    E: LabeledOperator | ClassicalChannel
    D: LabeledOperator | ClassicalChannel
    memory: SystemLabel
    residual: float
    party: int

    @property
    def memory_dim(self) -> int:
        return self.memory.dim


# ---------------------------------------------------------------------------
# No-influence
# ---------------------------------------------------------------------------

def no_influence_residual(ch, i: int) -> float:
    """How strongly the input ``X_i`` influences the output ``A_i``.

    Classical: largest change of ``p(a_i | x)`` under a change of ``x_i``.
    Quantum: operator norm of ``(1 - [X_i])`` applied to the Choi marginal on
    the inputs and ``A_i``; other inputs stay untouched so the condition holds
    for every state they are prepared in.
    """
    if isinstance(ch, ClassicalChannel):
        ch.check()
        if not 1 <= i <= ch.n_parties:
            raise ValueError(f"party {i} out of range")
        m = ch.marginal([i - 1])
        ax = i  # output axis comes first
        spread = m.max(axis=ax) - m.min(axis=ax)
        return float(spread.max()) if spread.size else 0.0
    ch = as_quantum(ch)
    a, x = ch.a(i), ch.x(i)
    if a is None or x is None:
        raise ValueError(f"party {i} is not active in the channel")
    marg = partial_trace(ch.choi, [l for l in ch.outputs if l.key != a.key])
    return (marg - trace_and_replace(marg, [x])).norm("op")


# ---------------------------------------------------------------------------
# Classical decomposition
# ---------------------------------------------------------------------------

def classical_recompose(E: ClassicalChannel, D: ClassicalChannel, i: int, n: int) -> np.ndarray:
    """Table of the circuit ``E`` then ``D`` with outputs/inputs back in party order."""
    others = [j for j in range(n) if j != i - 1]
    # E[a_i, m, x_others], D[a_others, x_i, m]
    # subscripts: memory 0, outputs 1..n, inputs n+1..2n
    sub_e = [i, 0] + [n + 1 + j for j in others]
    sub_d = [1 + j for j in others] + [n + i, 0]
    out = list(range(1, 2 * n + 1))
    return np.einsum(E.table, sub_e, D.table, sub_d, out)


def classical_oneway_decompose(ch: ClassicalChannel, i: int, tol: float = 1e-12) -> DecompositionResult:
    """Chain-rule factorization ``p(a|x) = p(a_i | x_-i) p(a_-i | x_i, a_i, x_-i)``.

    The memory carries a copy of ``(a_i, x_-i)``.
    """
    ch.check()
    n = ch.n_parties
    nir = no_influence_residual(ch, i)
    if nir > tol:
        raise DecompositionError(f"input X{i} influences output A{i} (residual {nir:.3e})", nir)
    k = i - 1
    others = [j for j in range(n) if j != k]
    a_i, x_i = ch.out_sizes[k], ch.in_sizes[k]
    a_o = tuple(ch.out_sizes[j] for j in others)
    x_o = tuple(ch.in_sizes[j] for j in others)
    d_m = a_i * math.prod(x_o)

    # p(a_i | x) averaged over x_i, axes [a_i, x_others]
    marg = ch.marginal([k]).mean(axis=1 + k)
    e_tab = np.zeros((a_i, d_m) + x_o)
    d_tab = np.zeros(a_o + (x_i, d_m))
    full = np.moveaxis(ch.table, [k, n + k], [0, n])  # [a_i, a_others, x_i, x_others]
    uniform = 1.0 / math.prod(a_o) if a_o else 1.0
    for ai in range(a_i):
        for xo in np.ndindex(*x_o):
            m = np.ravel_multi_index((ai,) + xo, (a_i,) + x_o)
            prob = marg[(ai,) + xo]
            e_tab[(ai, m) + xo] = prob
            for xi in range(x_i):
                block = full[(ai,) + (slice(None),) * len(a_o) + (xi,) + xo]
                if prob > 0:
                    d_tab[(Ellipsis, xi, m)] = block / prob
                else:
                    d_tab[(Ellipsis, xi, m)] = uniform
    E = ClassicalChannel((a_i, d_m), x_o, e_tab)
    D = ClassicalChannel(a_o, (x_i, d_m), d_tab)
    recomposed = classical_recompose(E, D, i, n)
    residual = float(np.max(np.abs(recomposed - ch.table)))
    return DecompositionResult(E, D, SystemLabel(GLOBAL, Role.M, d_m, tag=i), residual, i)


# ---------------------------------------------------------------------------
# Quantum decomposition
# ---------------------------------------------------------------------------

def _channel_errors(choi: LabeledOperator, inputs, outputs) -> tuple[float, float]:
    """(most negative eigenvalue clipped at 0, trace-preservation error)."""
    lam = min(choi.hermitize().min_eigenvalue(), 0.0)
    marg = partial_trace(choi, outputs).permute(TensorSpace(tuple(inputs)))
    tp = float(np.max(np.abs(marg.matrix - np.eye(marg.space.dim)))) if marg.space.dim else 0.0
    return -lam, tp


def quantum_oneway_decompose(ch, i: int, tol: float = DECOMPOSITION_TOL,
                             rank_tol: float = RANK_TOL) -> DecompositionResult:
    """Stinespring encoder plus least-squares decoder for a channel with ``X_i -/-> A_i``.

    ``E`` is the minimal isometric dilation of the marginal channel onto
    ``A_i``; its memory dimension is the numerical rank of that marginal's
    Choi matrix.  ``D`` is the least-squares solution of
    ``link(E, D) = Choi(ch)``, which is unique because the Kraus operators of
    a minimal dilation are linearly independent.
    """
    ch = as_quantum(ch)
    ch.check(tol)
    a, x = ch.a(i), ch.x(i)
    if a is None or x is None:
        raise ValueError(f"party {i} is not active in the channel")
    nir = no_influence_residual(ch, i)
    if nir > tol:
        raise DecompositionError(f"input {x} influences output {a} (residual {nir:.3e})", nir)

    ys = sorted((l for l in ch.inputs if l.key != x.key), key=sort_key)
    os_ = sorted((l for l in ch.outputs if l.key != a.key), key=sort_key)
    d_y = math.prod(l.dim for l in ys)
    d_o = math.prod(l.dim for l in os_)
    d_a, d_x = a.dim, x.dim

    marg = partial_trace(ch.choi, os_ + [x]) / d_x
    lam_op = marg.permute(TensorSpace(tuple(ys + [a]))).hermitize()
    evals, evecs = np.linalg.eigh(lam_op.matrix)
    keep = evals > rank_tol
    if not np.any(keep):
        raise DecompositionError("marginal channel has vanishing Choi matrix", nir)
    kmat = evecs[:, keep] * np.sqrt(evals[keep])  # rows (y, a), columns m
    r = kmat.shape[1]
    mem = SystemLabel(GLOBAL, Role.M, r, tag=i)

    vec = kmat.reshape(-1)
    E = LabeledOperator(TensorSpace(tuple(ys + [a, mem])), np.outer(vec, vec.conj()))

    d_ya, d_xo = d_y * d_a, d_x * d_o
    R = ch.choi.permute(TensorSpace(tuple(ys + [a, x] + os_))).matrix
    R = R.reshape(d_ya, d_xo, d_ya, d_xo)
    kinv = np.linalg.pinv(kmat)  # (r, d_ya)
    dt = np.einsum("mp,pXqY,nq->mXnY", kinv, R, kinv.conj(), optimize=True)
    D = LabeledOperator(TensorSpace(tuple([mem, x] + os_)), dt.reshape(r * d_xo, r * d_xo))

    recomposed = link(E, D, [mem])
    residual = recomposed.distance(ch.choi, "op")
    neg, tp = _channel_errors(D, [mem, x], os_)
    if residual > tol or neg > tol or tp > tol:
        raise DecompositionError(
            f"decomposition at party {i} failed: recomposition {residual:.3e}, "
            f"decoder negativity {neg:.3e}, decoder TP error {tp:.3e} "
            f"(no-influence residual {nir:.3e}, memory rank {r})", nir)
    return DecompositionResult(E, D.hermitize(), mem, residual, i)


# ---------------------------------------------------------------------------
# Slot insertion and supermap application
# ---------------------------------------------------------------------------

def check_local_channel(C: LabeledOperator, a: SystemLabel, x: SystemLabel,
                        tol: float = DECOMPOSITION_TOL) -> None:
    """``C`` must be a channel ``A_i (x) P' -> X_i (x) F'`` with ancillas owned by party ``i``."""
    if a not in C.space or x not in C.space:
        raise ValueError(f"local channel must act on {a} and {x}")
    stray = [l for l in C.labels if l.key not in (a.key, x.key)
             and (l.party != a.party or l.role not in (Role.P, Role.F))]
    if stray:
        raise ValueError("local channel carries foreign factors: " + ", ".join(map(str, stray)))
    inputs = [a] + list(C.space.with_role(Role.P))
    outputs = [x] + list(C.space.with_role(Role.F))
    if not C.is_hermitian(tol):
        raise ValueError("local channel Choi matrix is not Hermitian")
    neg, tp = _channel_errors(C, inputs, outputs)
    if neg > tol or tp > tol:
        raise ValueError(f"local operation is not a channel (negativity {neg:.3e}, TP error {tp:.3e})")


def insert_channel(T, i: int, C: LabeledOperator, tol: float = DECOMPOSITION_TOL) -> QuantumChannel:
    """Plug the channel ``C`` into the slot ``A_i -> X_i`` of the extended channel ``T``.

    The result is an extended channel on the remaining parties whose global
    past and future gain ``C``'s ancilla factors.  Its parity-erasure
    conditions are verified before returning.
    """
    T = as_quantum(T)
    a, x = T.a(i), T.x(i)
    if a is None or x is None:
        raise ValueError(f"party {i} is not active in the channel")
    check_local_channel(C, a, x, tol)
    clash = [l for l in C.labels if l.key not in (a.key, x.key) and l in T.choi.space]
    if clash:
        raise ValueError("local ancillas clash with channel factors: " + ", ".join(map(str, clash)))
    dec = quantum_oneway_decompose(T, i, tol)
    out = link(link(dec.E, C, [a]), dec.D, [x, dec.memory])
    result = QuantumChannel(out.hermitize())
    result.check(tol)
    report = parity_erasure_quantum(result, tol)
    if not report.verdict:
        raise DecompositionError(
            "inserted channel is not parity-erasure on the remaining parties: "
            + ", ".join(f"{format_subset(s)}={report.residuals[s]:.3e}" for s in report.violated))
    return result


def _as_result(ch: QuantumChannel):
    if ch.choi.space.dim == 1:
        return float(ch.choi.as_scalar().real)
    return ch.choi


def apply_supermap(T, ops: Sequence[LabeledOperator], order: Sequence[int] | None = None,
                   tol: float = DECOMPOSITION_TOL, check_tol: float = DEFAULT_TOL):
    """Insert local channels one party at a time.

    ``ops[k]`` belongs to party ``k+1``.  ``order`` defaults to descending
    party index.  Returns a float when nothing but scalars remain and the
    Choi matrix over the leftover global/ancilla factors otherwise.
    """
    T = as_quantum(T)
    T.check(check_tol)
    report = parity_erasure_quantum(T, check_tol)
    if not report.verdict:
        raise ParityErasureViolation(report.violated, report.residuals)
    parties = T.parties
    if len(ops) != len(parties):
        raise ValueError(f"expected {len(parties)} local operations, got {len(ops)}")
    by_party = dict(zip(parties, ops))
    order = tuple(order) if order is not None else tuple(sorted(parties, reverse=True))
    if sorted(order) != list(parties):
        raise ValueError(f"order {order} is not a permutation of {parties}")
    cur = T
    for i in order:
        cur = insert_channel(cur, i, by_party[i], tol)
    return _as_result(cur)


def readout_label(party: int, n_outcomes: int) -> SystemLabel:
    return SystemLabel(party, Role.F, n_outcomes, tag=READOUT_TAG)


def physicalize_instrument(elements: Sequence[LabeledOperator], party: int) -> LabeledOperator:
    """Channel ``rho -> sum_a M_a(rho) (x) |a><a|`` writing the outcome to a readout factor."""
    n = len(elements)
    rd = readout_label(party, n)
    acc = None
    for k, el in enumerate(elements):
        proj = np.zeros((n, n))
        proj[k, k] = 1.0
        term = LabeledOperator(TensorSpace(el.labels + (rd,)), np.kron(el.matrix, proj))
        acc = term if acc is None else acc + term
    return acc


def outcome_probabilities(T, instruments: Sequence[Sequence[LabeledOperator]],
                          order: Sequence[int] | None = None, tol: float = DECOMPOSITION_TOL) -> np.ndarray:
    """Joint outcome distribution of local instruments, via readout channels.

    Returns an array indexed by the outcome of each party in party order.
    """
    T = as_quantum(T)
    parties = T.parties
    chans = [physicalize_instrument(els, i) for i, els in zip(parties, instruments)]
    out = apply_supermap(T, chans, order, tol)
    if isinstance(out, float):
        return np.array(out)
    labels = [readout_label(i, len(els)) for i, els in zip(parties, instruments)]
    out = out.permute(TensorSpace(tuple(labels)))
    probs = np.real(np.diag(out.matrix))
    return probs.reshape([l.dim for l in labels])


def pair_probabilities(W, instruments: Sequence[Sequence[LabeledOperator]]) -> np.ndarray:
    """Same distribution evaluated element by element with ``pair``."""
    shape = [len(els) for els in instruments]
    probs = np.zeros(shape)
    for idx in np.ndindex(*shape):
        probs[idx] = pair(W, [els[k] for els, k in zip(instruments, idx)])
    return probs
