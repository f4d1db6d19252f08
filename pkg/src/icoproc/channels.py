"""Classical and quantum multipartite channels and parity-erasure checks.

A channel from the party outputs ``X_1..X_N`` to the party inputs
``A_1..A_N`` is parity-erasure when, for every nonempty party subset ``I``,
the marginal output on ``(A_i)_{i in I}`` carries no information about the
parity of bits encoded locally into ``(X_i)_{i in I}``.

Reduction to a finite check
---------------------------
The marginal output is multilinear in the per-party input states.  With the
bit of party ``i`` encoded as ``(rho_{i,0}, rho_{i,1})`` the parity-dependent
part of the marginal is the signed sum over encodings, which factorizes into
the differences ``rho_{i,0} - rho_{i,1}`` for ``i in I`` and is affine in the
states of the other parties.  It therefore vanishes for all encodings iff it
vanishes when each difference ranges over a spanning set of traceless
operators and each fixed state over a spanning set of states.  Classically
the differences of point masses ``delta_u - delta_v`` span the zero-sum
vectors and point masses span the simplex, so checking letter pairs and
letter fixings suffices.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import combinations, product
from typing import Sequence

import numpy as np

from .process_matrix import (
    GLOBAL,
    PartySignature,
    ProcessMatrix,
    active_parties,
    format_subset,
    nonempty_subsets,
    subset_condition_residual,
)
from .tensor_core import (
    DEFAULT_TOL,
    INPUT_ROLES,
    OUTPUT_ROLES,
    LabeledOperator,
    Role,
    SystemLabel,
    TensorSpace,
    partial_trace,
    spanning_differences,
    sort_key,
    spanning_states,
)


class InvalidChannelError(ValueError):
    pass


# ---------------------------------------------------------------------------
# Classical channels
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ClassicalChannel:
    """Conditional probability table ``p(a_1..a_m | x_1..x_n)``.

    ``table`` has shape ``out_sizes + in_sizes``.  For an N-party channel
    ``len(out_sizes) == len(in_sizes) == N`` and output ``k`` belongs to the
    same party as input ``k``.
    """

    out_sizes: tuple[int, ...]
    in_sizes: tuple[int, ...]
    table: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "out_sizes", tuple(int(s) for s in self.out_sizes))
        object.__setattr__(self, "in_sizes", tuple(int(s) for s in self.in_sizes))
        t = np.array(self.table, dtype=float)
        if t.shape != self.out_sizes + self.in_sizes:
            raise InvalidChannelError(f"table shape {t.shape} != {self.out_sizes + self.in_sizes}")
        t.setflags(write=False)
        object.__setattr__(self, "table", t)

    @property
    def n_parties(self) -> int:
        if len(self.out_sizes) != len(self.in_sizes):
            raise InvalidChannelError("channel does not pair inputs and outputs party-wise")
        return len(self.out_sizes)

    def normalization_error(self) -> float:
        k = len(self.out_sizes)
        sums = self.table.sum(axis=tuple(range(k))) if k else self.table
        return float(np.max(np.abs(sums - 1.0))) if sums.size else 0.0

    def check(self, tol: float = DEFAULT_TOL) -> "ClassicalChannel":
        if not np.all(np.isfinite(self.table)):
            raise InvalidChannelError("table has non-finite entries")
        if self.table.size and self.table.min() < -tol:
            raise InvalidChannelError(f"negative probability {self.table.min():.3e}")
        err = self.normalization_error()
        if err > tol:
            raise InvalidChannelError(f"rows do not sum to one (error {err:.3e})")
        return self

    def is_valid(self, tol: float = DEFAULT_TOL) -> bool:
        try:
            self.check(tol)
        except InvalidChannelError:
            return False
        return True

    @classmethod
    def from_function(cls, out_sizes, in_sizes, fn) -> "ClassicalChannel":
        """Deterministic channel with ``a = fn(x)`` (both tuples)."""
        out_sizes, in_sizes = tuple(out_sizes), tuple(in_sizes)
        t = np.zeros(out_sizes + in_sizes)
        for x in product(*[range(s) for s in in_sizes]):
            t[tuple(fn(x)) + x] = 1.0
        return cls(out_sizes, in_sizes, t)

    def marginal(self, keep: Sequence[int]) -> np.ndarray:
        """Marginal table over the outputs at positions ``keep`` (in order) and all inputs."""
        k = len(self.out_sizes)
        drop = tuple(j for j in range(k) if j not in keep)
        m = self.table.sum(axis=drop)
        remaining = [j for j in range(k) if j in keep]
        perm = [remaining.index(j) for j in keep]
        return np.transpose(m, perm + list(range(len(keep), m.ndim)))

    def to_quantum(self) -> "QuantumChannel":
        """Embed as a diagonal quantum channel; party ``k+1`` owns output/input ``k``."""
        n = self.n_parties
        a_labs = [SystemLabel(i + 1, Role.A, self.out_sizes[i]) for i in range(n)]
        x_labs = [SystemLabel(i + 1, Role.X, self.in_sizes[i]) for i in range(n)]
        d_in, d_out = math.prod(self.in_sizes), math.prod(self.out_sizes)
        # table reshaped to [a, x] with a, x flattened row-major
        p = self.table.reshape(d_out, d_in)
        diag = p.T.reshape(-1)  # index (x, a)
        op = LabeledOperator(TensorSpace(tuple(x_labs + a_labs)), np.diag(diag.astype(complex)))
        return QuantumChannel(op.canonical())


# ---------------------------------------------------------------------------
# Quantum channels
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class QuantumChannel:
    """Choi matrix of a channel from the ``X``/``P`` factors to the ``A``/``F`` factors.

    A channel with ``P`` or ``F`` factors is an extended channel; its active
    parties are those owning ``A``/``X`` factors.
    """

    choi: LabeledOperator

    @property
    def inputs(self) -> tuple[SystemLabel, ...]:
        return self.choi.space.with_role(*INPUT_ROLES)

    @property
    def outputs(self) -> tuple[SystemLabel, ...]:
        return self.choi.space.with_role(*OUTPUT_ROLES)

    @property
    def parties(self) -> tuple[int, ...]:
        return active_parties(self.choi.space)

    @property
    def past(self) -> tuple[SystemLabel, ...]:
        return self.choi.space.with_role(Role.P)

    @property
    def future(self) -> tuple[SystemLabel, ...]:
        return self.choi.space.with_role(Role.F)

    def a(self, i: int) -> SystemLabel:
        return self.choi.space.find(i, Role.A)

    def x(self, i: int) -> SystemLabel:
        return self.choi.space.find(i, Role.X)

    def tp_error(self) -> float:
        marg = partial_trace(self.choi, self.outputs)
        return float(np.max(np.abs(marg.matrix - np.eye(marg.space.dim)))) if marg.space.dim else 0.0

    def check(self, tol: float = DEFAULT_TOL) -> "QuantumChannel":
        if self.choi.space.with_role(Role.M):
            raise InvalidChannelError("channel Choi matrix carries uncontracted memory factors")
        if not self.choi.is_hermitian(tol):
            raise InvalidChannelError(f"Choi matrix not Hermitian (error {self.choi.hermiticity_error():.3e})")
        lam = self.choi.min_eigenvalue()
        if lam < -tol:
            raise InvalidChannelError(f"Choi matrix not PSD (min eigenvalue {lam:.3e})")
        err = self.tp_error()
        if err > tol:
            raise InvalidChannelError(f"channel is not trace preserving (error {err:.3e})")
        return self

    def is_valid(self, tol: float = DEFAULT_TOL) -> bool:
        try:
            self.check(tol)
        except InvalidChannelError:
            return False
        return True

    def as_process(self) -> ProcessMatrix:
        return ProcessMatrix.from_operator(self.choi)


def as_quantum(ch) -> QuantumChannel:
    if isinstance(ch, QuantumChannel):
        return ch
    if isinstance(ch, ProcessMatrix):
        return QuantumChannel(ch.W)
    if isinstance(ch, LabeledOperator):
        return QuantumChannel(ch)
    if isinstance(ch, ClassicalChannel):
        return ch.to_quantum()
    raise TypeError(f"cannot interpret {type(ch).__name__} as a quantum channel")


# ---------------------------------------------------------------------------
# Parity-erasure checks
# ---------------------------------------------------------------------------

@dataclass
class ParityReport:
    residuals: dict
    tol: float = DEFAULT_TOL
    norm: str = ""
    coarse_residuals: dict | None = None

    @property
    def verdict(self) -> bool:
        return all(r <= self.tol for r in self.residuals.values())

    @property
    def coarse_verdict(self) -> bool | None:
        if self.coarse_residuals is None:
            return None
        return all(r <= self.tol for r in self.coarse_residuals.values())

    @property
    def violated(self) -> list:
        return [s for s, r in self.residuals.items() if r > self.tol]

    @property
    def max_residual(self) -> float:
        return max(self.residuals.values(), default=0.0)

    def to_dict(self) -> dict:
        out = {
            "residuals": {format_subset(s): r for s, r in self.residuals.items()},
            "violated": [format_subset(s) for s in self.violated],
            "norm": self.norm,
            "tol": self.tol,
            "verdict": self.verdict,
        }
        if self.coarse_residuals is not None:
            out["coarse_residuals"] = {format_subset(s): r for s, r in self.coarse_residuals.items()}
            out["coarse_verdict"] = self.coarse_verdict
        return out


def _pair_differences(arr: np.ndarray, axis: int) -> np.ndarray:
    """Stack ``arr[..., u, ...] - arr[..., v, ...]`` over all letter pairs ``u < v`` on ``axis``."""
    n = arr.shape[axis]
    pairs = list(combinations(range(n), 2))
    if not pairs:
        return np.zeros(arr.shape[:axis] + (0,) + arr.shape[axis + 1:])
    u = np.array([p[0] for p in pairs])
    v = np.array([p[1] for p in pairs])
    return np.take(arr, u, axis=axis) - np.take(arr, v, axis=axis)


def classical_signed_marginals(ch: ClassicalChannel, subset) -> np.ndarray:
    """Signed sums of the marginal over ``a_I`` for every letter-pair choice in ``I``.

    Result axes: the outputs of ``I`` followed by all input axes, where the
    input axis of each ``i in I`` now indexes letter pairs.
    """
    n = ch.n_parties
    members = sorted(subset)
    keep = [i - 1 for i in members]
    m = ch.marginal(keep)
    k = len(keep)
    for i in members:
        m = _pair_differences(m, k + i - 1)
    return m


def parity_erasure_classical(ch: ClassicalChannel, tol: float = DEFAULT_TOL) -> ParityReport:
    ch.check(tol)
    residuals = {}
    for subset in nonempty_subsets(range(1, ch.n_parties + 1)):
        s = classical_signed_marginals(ch, subset)
        residuals[subset] = float(np.max(np.abs(s))) if s.size else 0.0
    return ParityReport(residuals, tol, "max-abs")


def parity_erasure_quantum(ch, tol: float = DEFAULT_TOL) -> ParityReport:
    """Parity erasure via the reduction conditions on the Choi matrix.

    For an extended channel the global future is traced and the global past
    left untouched, which checks the condition for every state prepared on it.
    """
    ch = as_quantum(ch).check(tol)
    residuals = {s: subset_condition_residual(ch.choi, s) for s in nonempty_subsets(ch.parties)}
    return ParityReport(residuals, tol, "operator")


def output_tensor(ch: QuantumChannel, stacks: dict) -> tuple[np.ndarray, list[SystemLabel]]:
    """Outputs of ``ch`` on all product combinations of input operators.

    ``stacks`` maps every input label to an array ``(n, d, d)`` of operators.
    Returns an array with one leading axis per input label (canonical
    order) followed by the output operator as ``(d_out, d_out)``, together
    with the output labels in matrix order.
    """
    inputs = sorted(ch.inputs, key=sort_key)
    outputs = sorted(ch.outputs, key=sort_key)
    op = ch.choi.permute(TensorSpace(tuple(inputs + outputs)))
    t = op.tensor_view()
    n_in, n_out = len(inputs), len(outputs)
    n = n_in + n_out
    # Choi block (x, x') is T(|x><x'|), so T(sigma) = sum sigma[x, x'] T(|x><x'|).
    operands = [t, list(range(2 * n))]
    lead = []
    for k, lab in enumerate(inputs):
        s = np.asarray(stacks[lab])
        ax = 2 * n + k
        operands += [s, [ax, k, n + k]]
        lead.append(ax)
    out = lead + list(range(n_in, n)) + list(range(n + n_in, 2 * n))
    res = np.einsum(*operands, out, optimize=True)
    d_out = math.prod(l.dim for l in outputs)
    res = res.reshape(res.shape[:n_in] + (d_out, d_out))
    return res, outputs


def signed_marginal(ch, subset, differences: dict, fixed: dict) -> np.ndarray:
    """Marginal on ``A_I`` of the channel fed with state differences on ``X_I``.

    ``differences[i]`` holds pairs ``(n, 2, d, d)`` for each ``i in subset``;
    ``fixed`` maps every other input label to a stack of states.  Returns the
    stack of signed marginal operators, leading axes as in ``output_tensor``.
    """
    ch = as_quantum(ch)
    subset = frozenset(subset)
    stacks = {}
    for lab in ch.inputs:
        if lab.role is Role.X and lab.party in subset:
            pairs = np.asarray(differences[lab.party])
            stacks[lab] = pairs[:, 0] - pairs[:, 1]
        else:
            stacks[lab] = np.asarray(fixed[lab])
    res, outputs = output_tensor(ch, stacks)
    lead = res.shape[:-2]
    nl, m = len(lead), len(outputs)
    dims = [l.dim for l in outputs]
    t = res.reshape(lead + tuple(dims) + tuple(dims))
    keep = [k for k, l in enumerate(outputs) if l.role is Role.A and l.party in subset]
    ket = [nl + k for k in range(m)]
    bra = [nl + m + k if k in keep else nl + k for k in range(m)]
    out = list(range(nl)) + [nl + k for k in keep] + [nl + m + k for k in keep]
    marg = np.einsum(t, list(range(nl)) + ket + bra, out)
    d_keep = math.prod(dims[k] for k in keep)
    return marg.reshape(lead + (d_keep, d_keep))


def _trace_norms(mats: np.ndarray) -> np.ndarray:
    d = mats.shape[-1]
    flat = mats.reshape(-1, d, d)
    herm = 0.5 * (flat + flat.conj().transpose(0, 2, 1))
    return np.sum(np.abs(np.linalg.eigvalsh(herm)), axis=-1)


def parity_erasure_quantum_direct(ch, tol: float = DEFAULT_TOL) -> ParityReport:
    """Parity erasure by evaluating signed marginal output states literally.

    Parties in ``I`` use the state pairs of ``spanning_differences``; every
    other input (including a global past) ranges over ``spanning_states``.
    The residual is the largest trace norm of a signed marginal.
    """
    ch = as_quantum(ch).check(tol)
    residuals = {}
    for subset in nonempty_subsets(ch.parties):
        diffs = {i: spanning_differences(ch.x(i).dim) for i in subset}
        fixed = {lab: spanning_states(lab.dim) for lab in ch.inputs
                 if not (lab.role is Role.X and lab.party in subset)}
        marg = signed_marginal(ch, subset, diffs, fixed)
        residuals[subset] = float(_trace_norms(marg).max()) if marg.size else 0.0
    return ParityReport(residuals, tol, "trace")


# ---------------------------------------------------------------------------
# Local input-output relations
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Encoding:
    """Per-party pair of states ``(rho_{i,0}, rho_{i,1})`` fed into ``X_i``."""

    states: tuple

    def __post_init__(self):
        object.__setattr__(self, "states", tuple(np.asarray(s, dtype=complex) for s in self.states))
        for s in self.states:
            if s.ndim != 3 or s.shape[0] != 2:
                raise ValueError("each party needs a pair of density matrices")

    def check(self, tol: float = DEFAULT_TOL):
        for pair in self.states:
            for rho in pair:
                if abs(np.trace(rho) - 1) > tol or np.max(np.abs(rho - rho.conj().T)) > tol \
                        or np.linalg.eigvalsh(rho)[0] < -tol:
                    raise ValueError("encoding entry is not a density matrix")
        return self

    @classmethod
    def computational(cls, dims: Sequence[int]) -> "Encoding":
        out = []
        for d in dims:
            pair = np.zeros((2, d, d), dtype=complex)
            pair[0, 0, 0] = 1
            pair[1, min(1, d - 1), min(1, d - 1)] = 1
            out.append(pair)
        return cls(tuple(out))


@dataclass(frozen=True)
class Measurement:
    """Per-party POVM elements on ``A_i``, each of shape ``(n_outcomes, d, d)``."""

    effects: tuple

    def __post_init__(self):
        object.__setattr__(self, "effects", tuple(np.asarray(e, dtype=complex) for e in self.effects))

    def check(self, tol: float = DEFAULT_TOL):
        for povm in self.effects:
            if np.max(np.abs(povm.sum(axis=0) - np.eye(povm.shape[-1]))) > tol:
                raise ValueError("POVM elements do not sum to the identity")
            for e in povm:
                if np.linalg.eigvalsh(0.5 * (e + e.conj().T))[0] < -tol:
                    raise ValueError("POVM element is not PSD")
        return self

    @classmethod
    def computational(cls, dims: Sequence[int]) -> "Measurement":
        out = []
        for d in dims:
            povm = np.zeros((d, d, d), dtype=complex)
            for a in range(d):
                povm[a, a, a] = 1
            out.append(povm)
        return cls(tuple(out))


def local_io_relation(W, enc: Encoding, meas: Measurement, tol: float = DEFAULT_TOL) -> ClassicalChannel:
    """Outcome statistics ``p(a|x) = (x)e_{a_i} ( T((x) rho_{x_i}) )`` with binary ``x_i``."""
    ch = as_quantum(W)
    parties = ch.parties
    if ch.past or ch.future:
        raise ValueError("local input-output relations need a channel without global factors")
    if len(enc.states) != len(parties) or len(meas.effects) != len(parties):
        raise ValueError("encoding and measurement must cover every party")
    enc.check(tol)
    meas.check(tol)
    stacks = {}
    for i, pair in zip(parties, enc.states):
        if pair.shape[-1] != ch.x(i).dim:
            raise ValueError(f"encoding of party {i} has wrong dimension")
        stacks[ch.x(i)] = pair
    res, outputs = output_tensor(ch, stacks)
    n = len(parties)
    dims = [l.dim for l in outputs]
    t = res.reshape(res.shape[:n] + tuple(dims) + tuple(dims))
    # Tr(E rho) = sum_{r,c} E[r, c] rho[c, r]
    operands = [t, list(range(3 * n))]
    for k, lab in enumerate(outputs):
        povm = meas.effects[k]
        if povm.shape[-1] != lab.dim:
            raise ValueError(f"measurement of party {lab.party} has wrong dimension")
        operands += [povm, [3 * n + k, 2 * n + k, n + k]]
    table = np.einsum(*operands, [3 * n + k for k in range(n)] + list(range(n))).real
    if table.min() > -tol:
        table = np.clip(table, 0.0, None)
    out_sizes = tuple(meas.effects[k].shape[0] for k in range(n))
    return ClassicalChannel(out_sizes, (2,) * n, table)


def weak_parity_check(ch: ClassicalChannel, tol: float = DEFAULT_TOL) -> ParityReport:
    """Parity independence of local input-output statistics with bit inputs.

    The primary residual for ``I`` is the largest signed sum
    ``sum_{x_I} prod (-1)^{x_i} p(a_I | x)`` with inputs outside ``I`` held
    fixed.  The coarse residual compares ``p(a_I | parity = 0)`` with
    ``p(a_I | parity = 1)`` under uniformly random inputs.
    """
    if any(s != 2 for s in ch.in_sizes):
        raise ValueError("weak parity check needs binary inputs")
    ch.check(tol)
    n = ch.n_parties
    strong, coarse = {}, {}
    for subset in nonempty_subsets(range(1, n + 1)):
        members = sorted(subset)
        m = ch.marginal([i - 1 for i in members])
        k = len(members)
        signs = np.ones((2,) * n)
        parity = np.zeros((2,) * n, dtype=int)
        for x in product((0, 1), repeat=n):
            par = sum(x[i - 1] for i in members) % 2
            parity[x] = par
        for i in members:
            shape = [1] * n
            shape[i - 1] = 2
            signs = signs * np.array([1.0, -1.0]).reshape(shape)
        signed = (m * signs).sum(axis=tuple(k + i - 1 for i in members))
        strong[subset] = float(np.max(np.abs(signed)))
        p0 = (m * (parity == 0)).sum(axis=tuple(range(k, k + n))) / (parity == 0).sum()
        p1 = (m * (parity == 1)).sum(axis=tuple(range(k, k + n))) / (parity == 1).sum()
        coarse[subset] = float(np.max(np.abs(p0 - p1)))
    return ParityReport(strong, tol, "max-abs", coarse)


def causality_marginal_residual(ch: ClassicalChannel) -> float:
    """Largest dependence of ``p(a_i | x)`` on the party's own input ``x_i``."""
    worst = 0.0
    for i in range(ch.n_parties):
        m = ch.marginal([i])
        d = _pair_differences(m, 1 + i)
        if d.size:
            worst = max(worst, float(np.max(np.abs(d))))
    return worst
