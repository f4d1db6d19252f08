"""N-party process matrices: validity conditions, projection, sampling, pairing.

A process matrix ``W`` over factors ``A_i, X_i`` (and optionally a global past
``P`` and future ``F``) is valid iff

* ``W >= 0``,
* ``Tr W = prod_i d_{X_i} * d_P``,
* for every nonempty party subset ``I`` the reduction
  ``prod_{i in I}(1 - [X_i]) prod_{i not in I}[A_i][X_i] [F]`` annihilates ``W``,
* when ``P`` is present, ``(1 - [P]) prod_i [A_i][X_i] [F]`` annihilates ``W``
  (trace preservation in ``P``).  This condition is keyed by the subset ``{0}``.

``W`` doubles as the Choi matrix of the channel from the ``X`` (and ``P``)
factors to the ``A`` (and ``F``) factors.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import sampling
from .tensor_core import (
    DEFAULT_TOL,
    Factor,
    LabeledOperator,
    ReductionExpression,
    Role,
    SystemLabel,
    TensorSpace,
    is_psd,
    kernel_projection,
    link,
    link_all,
    signed_reduce,
)

GLOBAL = 0
PAST_KEY = frozenset({GLOBAL})


@dataclass(frozen=True)
class PartySignature:
    dims_a: tuple[int, ...]
    dims_x: tuple[int, ...]
    d_p: int = 1
    d_f: int = 1

    def __post_init__(self):
        object.__setattr__(self, "dims_a", tuple(int(d) for d in self.dims_a))
        object.__setattr__(self, "dims_x", tuple(int(d) for d in self.dims_x))
        if len(self.dims_a) != len(self.dims_x) or not self.dims_a:
            raise ValueError("need N >= 1 parties with one A and one X dimension each")
        if min(self.dims_a + self.dims_x + (self.d_p, self.d_f)) < 1:
            raise ValueError("all dimensions must be >= 1")

    @classmethod
    def qubits(cls, n: int, d_p: int = 1, d_f: int = 1) -> "PartySignature":
        return cls((2,) * n, (2,) * n, d_p, d_f)

    @property
    def n(self) -> int:
        return len(self.dims_a)

    @property
    def parties(self) -> tuple[int, ...]:
        return tuple(range(1, self.n + 1))

    def a(self, i: int) -> SystemLabel:
        return SystemLabel(i, Role.A, self.dims_a[i - 1])

    def x(self, i: int) -> SystemLabel:
        return SystemLabel(i, Role.X, self.dims_x[i - 1])

    @property
    def past(self) -> tuple[SystemLabel, ...]:
        return (SystemLabel(GLOBAL, Role.P, self.d_p),) if self.d_p > 1 else ()

    @property
    def future(self) -> tuple[SystemLabel, ...]:
        return (SystemLabel(GLOBAL, Role.F, self.d_f),) if self.d_f > 1 else ()

    def space(self) -> TensorSpace:
        labels = list(self.past) + list(self.future)
        for i in self.parties:
            labels += [self.a(i), self.x(i)]
        return TensorSpace(tuple(labels)).canonical()

    @property
    def trace_target(self) -> float:
        return float(math.prod(self.dims_x) * self.d_p)

    @classmethod
    def from_space(cls, space: TensorSpace) -> "PartySignature":
        """Signature of an operator; multiple P/F factors are merged in ``d_p``/``d_f``."""
        parties = sorted({lab.party for lab in space.with_role(Role.A, Role.X)})
        if parties != list(range(1, len(parties) + 1)):
            raise ValueError(f"parties must be numbered 1..N, got {parties}")
        dims_a, dims_x = [], []
        for i in parties:
            a = space.find(i, Role.A)
            x = space.find(i, Role.X)
            dims_a.append(a.dim if a else 1)
            dims_x.append(x.dim if x else 1)
        d_p = math.prod(l.dim for l in space.with_role(Role.P))
        d_f = math.prod(l.dim for l in space.with_role(Role.F))
        return cls(tuple(dims_a), tuple(dims_x), d_p, d_f)


def active_parties(space: TensorSpace) -> tuple[int, ...]:
    return tuple(sorted({lab.party for lab in space.with_role(Role.A, Role.X)}))


def nonempty_subsets(parties: Sequence[int]):
    for r in range(1, len(parties) + 1):
        for combo in itertools.combinations(parties, r):
            yield frozenset(combo)


def subset_expression(space: TensorSpace, subset) -> ReductionExpression:
    """Reduction expression for a nonempty party subset; global futures are replaced."""
    parties = active_parties(space)
    subset = frozenset(subset)
    if not subset:
        raise ValueError("party subset must be nonempty")
    if not subset <= set(parties):
        raise ValueError(f"subset {sorted(subset)} not within parties {parties}")
    factors = {i: (Factor.ONE_MINUS_X if i in subset else Factor.AX) for i in parties}
    return ReductionExpression.build(factors, replace=space.with_role(Role.F))


def past_expression(space: TensorSpace) -> ReductionExpression:
    factors = {i: Factor.AX for i in active_parties(space)}
    return ReductionExpression.build(factors, replace=space.with_role(Role.F),
                                     signed=[space.with_role(Role.P)])


def condition_expressions(space: TensorSpace, include_past: bool = True) -> dict:
    _ensure_party_factors(space)
    exprs = {s: subset_expression(space, s) for s in nonempty_subsets(active_parties(space))}
    if include_past and space.with_role(Role.P):
        exprs[PAST_KEY] = past_expression(space)
    return exprs


def _ensure_party_factors(space: TensorSpace):
    for i in active_parties(space):
        if space.find(i, Role.A) is None or space.find(i, Role.X) is None:
            raise ValueError(f"party {i} needs both an A and an X factor (use dim 1 for trivial)")


@dataclass(frozen=True)
class ProcessMatrix:
    signature: PartySignature
    W: LabeledOperator

    def __post_init__(self):
        if not self.W.space.same_labels(self.signature.space()):
            raise ValueError(f"operator space {self.W.space} does not match signature")

    @classmethod
    def from_operator(cls, op: LabeledOperator) -> "ProcessMatrix":
        """Wrap an operator with at most one P and one F factor (party 0)."""
        return cls(PartySignature.from_space(op.space), op)

    @property
    def n(self) -> int:
        return self.signature.n

    def as_channel(self):
        from .channels import QuantumChannel
        return QuantumChannel(self.W)


@dataclass
class ValidationReport:
    psd_margin: float
    trace_error: float
    subset_residuals: dict
    tol: float = DEFAULT_TOL

    @property
    def verdict(self) -> bool:
        return (self.psd_margin >= -self.tol and self.trace_error <= self.tol
                and all(r <= self.tol for r in self.subset_residuals.values()))

    @property
    def violated(self) -> list:
        return [s for s, r in self.subset_residuals.items() if r > self.tol]

    def to_dict(self) -> dict:
        return {
            "psd_margin": self.psd_margin,
            "trace_error": self.trace_error,
            "subset_residuals": {format_subset(s): r for s, r in self.subset_residuals.items()},
            "violated": [format_subset(s) for s in self.violated],
            "tol": self.tol,
            "verdict": self.verdict,
        }


def format_subset(subset) -> str:
    return "{" + ",".join(str(i) for i in sorted(subset)) + "}"


def _operator(W) -> LabeledOperator:
    if isinstance(W, ProcessMatrix):
        return W.W
    if hasattr(W, "choi"):
        return W.choi
    return W


def subset_condition_residual(W, subset) -> float:
    op = _operator(W)
    _ensure_party_factors(op.space)
    return signed_reduce(op, subset_expression(op.space, subset)).norm("op")


def condition_residuals(W, include_past: bool = True) -> dict:
    op = _operator(W)
    return {s: signed_reduce(op, e).norm("op")
            for s, e in condition_expressions(op.space, include_past).items()}


def validate(W, tol: float = DEFAULT_TOL) -> ValidationReport:
    op = _operator(W)
    if not op.is_hermitian(tol):
        raise ValueError(f"W is not Hermitian (error {op.hermiticity_error():.3e})")
    sig = PartySignature.from_space(op.space)
    margin = op.min_eigenvalue()
    trace_error = abs(op.trace() - sig.trace_target)
    return ValidationReport(margin, float(trace_error), condition_residuals(op), tol)


def project_to_subspace(W, signature: PartySignature | None = None) -> LabeledOperator:
    """Hilbert-Schmidt orthogonal projection onto the linear span of the validity conditions."""
    op = _operator(W)
    if signature is not None and not op.space.same_labels(signature.space()):
        raise ValueError("operator does not match signature")
    return kernel_projection(op, list(condition_expressions(op.space).values()))


def uniform_process(signature: PartySignature) -> ProcessMatrix:
    space = signature.space()
    scale = signature.trace_target / space.dim
    return ProcessMatrix(signature, LabeledOperator(space, scale * np.eye(space.dim)))


def random_valid_process(signature: PartySignature, seed=None, weight: float | None = None) -> ProcessMatrix:
    """Random valid process: projected random Hermitian mixed with uniform noise.

    ``weight`` is the mixing weight of the uniform-noise process; ``weight=1``
    returns it exactly and ``weight=0`` lands on the boundary of the PSD cone.
    When omitted it is drawn uniformly from ``[0.05, 0.5)``.
    """
    rng = sampling.get_rng(seed)
    space = signature.space()
    D = space.dim
    w0 = uniform_process(signature).W
    if weight is None:
        weight = rng.uniform(0.05, 0.5)
    h = LabeledOperator(space, sampling.random_hermitian(D, rng))
    x = project_to_subspace(h).hermitize()
    x = x - LabeledOperator(space, (x.trace().real / D) * np.eye(D))
    lam = x.min_eigenvalue()
    c = signature.trace_target / D
    if lam < -1e-14:
        boundary = w0 + x * (c / -lam)
    else:
        boundary = w0
    W = w0 * weight + boundary * (1 - weight)
    return ProcessMatrix(signature, W.hermitize())


def memory_label(step: int, dim: int) -> SystemLabel:
    return SystemLabel(GLOBAL, Role.M, dim, tag=step)


def comb_from_circuit(signature: PartySignature, pieces: Sequence[LabeledOperator]) -> ProcessMatrix:
    """Link the Choi matrices of a sequential circuit into a process matrix.

    ``pieces`` are the channels between the slots, in time order; all shared
    memory factors are contracted.
    """
    W = link_all(list(pieces)).canonical()
    return ProcessMatrix(signature, W)


def random_ordered_process(signature: PartySignature, order: Sequence[int] | None = None,
                           seed=None, memory_dim: int = 2) -> ProcessMatrix:
    """Choi matrix of a random circuit visiting the parties in ``order``.

    A random channel ``P -> A_{o1} M_1`` starts the circuit, random channels
    ``X_{ok} M_k -> A_{o(k+1)} M_{k+1}`` connect consecutive slots and a random
    channel ``X_{oN} M_N -> F`` closes it (a discard when ``F`` is trivial).
    """
    rng = sampling.get_rng(seed)
    order = tuple(order) if order is not None else signature.parties
    if sorted(order) != list(signature.parties):
        raise ValueError(f"order {order} is not a permutation of {signature.parties}")
    n = len(order)
    mems = [memory_label(k, memory_dim) for k in range(1, n + 1)]
    mem_io = (lambda k: [mems[k]] if memory_dim > 1 else [])
    pieces = [sampling.random_channel(list(signature.past), [signature.a(order[0])] + mem_io(0), seed=rng)]
    for k in range(n - 1):
        pieces.append(sampling.random_channel([signature.x(order[k])] + mem_io(k),
                                              [signature.a(order[k + 1])] + mem_io(k + 1), seed=rng))
    last_in = [signature.x(order[-1])] + mem_io(n - 1)
    if signature.future:
        pieces.append(sampling.random_channel(last_in, list(signature.future), seed=rng))
    else:
        pieces.append(LabeledOperator.identity(last_in))
    return comb_from_circuit(signature, pieces)


def pair(W, ops: Sequence[LabeledOperator], tol: float = DEFAULT_TOL):
    """Plug local operations into ``W``.

    ``ops[k]`` is the Choi matrix of party ``k+1``'s CP map ``A_i -> X_i``
    (possibly with ancilla factors of the same party).  The pairing is the
    full link product, i.e. ``Tr[W (M_1 (x) ... (x) M_N)^T]`` when no ancillas
    or global factors remain.  Returns a float in that case and the Choi
    matrix of the induced map otherwise.
    """
    op = _operator(W)
    parties = active_parties(op.space)
    if len(ops) != len(parties):
        raise ValueError(f"expected {len(parties)} local operations, got {len(ops)}")
    result = op
    for i, m in zip(parties, ops):
        if not is_psd(m, tol):
            raise ValueError(f"local operation of party {i} is not completely positive")
        slot = [l for l in (op.space.find(i, Role.A), op.space.find(i, Role.X))]
        for lab in slot:
            if lab not in m.space:
                raise ValueError(f"local operation of party {i} lacks factor {lab}")
        foreign = [l for l in m.labels if l.party != i]
        if foreign:
            raise ValueError(f"local operation of party {i} carries factors of other parties: "
                             + ", ".join(map(str, foreign)))
        result = link(result, m, slot)
    if result.space.dim == 1:
        val = result.as_scalar()
        return float(val.real)
    return result
