"""Labeled tensor-operator algebra.

Operators are dense complex matrices over an ordered list of typed tensor
factors (``SystemLabel``).  Every routine here addresses factors by label
rather than by position, so callers never have to track index order.

Choi convention, used throughout the package::

    Choi(T) = sum_ij |i><j|_in (x) T(|i><j|)

unnormalized.  ``T`` is trace preserving iff the partial trace of its Choi
matrix over the output factors is the identity on the input factors.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from functools import reduce
from itertools import product
from typing import Iterable, Sequence

import numpy as np

DEFAULT_TOL = 1e-9


class Role(enum.IntEnum):
    """Role of a tensor factor.  The integer value is its canonical rank."""

    A = 0  # party input (output of the environment)
    X = 1  # party output (input of the environment)
    P = 2  # global past / ancilla input
    F = 3  # global future / ancilla output
    M = 4  # memory


INPUT_ROLES = (Role.X, Role.P)
OUTPUT_ROLES = (Role.A, Role.F)


@dataclass(frozen=True, order=False)
class SystemLabel:
    party: int
    role: Role
    dim: int
    tag: int = 0

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError(f"dimension must be >= 1, got {self.dim}")
        if not isinstance(self.role, Role):
            object.__setattr__(self, "role", Role[self.role] if isinstance(self.role, str) else Role(self.role))

    @property
    def key(self) -> tuple[int, int, int]:
        return (self.party, int(self.role), self.tag)

    def __str__(self):
        suffix = f"#{self.tag}" if self.tag else ""
        return f"{self.role.name}{self.party}{suffix}({self.dim})"


def sort_key(label: SystemLabel):
    return (label.party, int(label.role), label.tag)


@dataclass(frozen=True)
class TensorSpace:
    labels: tuple[SystemLabel, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "labels", tuple(self.labels))
        keys = [lab.key for lab in self.labels]
        if len(set(keys)) != len(keys):
            raise ValueError(f"duplicate labels in space: {[str(l) for l in self.labels]}")

    @property
    def dims(self) -> tuple[int, ...]:
        return tuple(lab.dim for lab in self.labels)

    @property
    def dim(self) -> int:
        return math.prod(self.dims)

    def __len__(self):
        return len(self.labels)

    def __iter__(self):
        return iter(self.labels)

    def __contains__(self, label: SystemLabel) -> bool:
        return any(lab.key == label.key for lab in self.labels)

    def index(self, label: SystemLabel) -> int:
        for k, lab in enumerate(self.labels):
            if lab.key == label.key:
                if lab.dim != label.dim:
                    raise ValueError(f"dimension mismatch for {label}: space has {lab}")
                return k
        raise KeyError(f"label {label} not in space {[str(l) for l in self.labels]}")

    def find(self, party: int, role: Role, tag: int = 0) -> SystemLabel | None:
        for lab in self.labels:
            if lab.key == (party, int(role), tag):
                return lab
        return None

    def with_role(self, *roles: Role) -> tuple[SystemLabel, ...]:
        return tuple(lab for lab in self.labels if lab.role in roles)

    def canonical(self) -> "TensorSpace":
        return TensorSpace(tuple(sorted(self.labels, key=sort_key)))

    def same_labels(self, other: "TensorSpace") -> bool:
        return sorted(self.labels, key=sort_key) == sorted(other.labels, key=sort_key)

    def permutation_to(self, other: "TensorSpace") -> list[int]:
        """Positions in ``self`` of each factor of ``other``."""
        if not self.same_labels(other):
            raise ValueError("spaces carry different label sets")
        return [self.index(lab) for lab in other.labels]

    def __str__(self):
        return " (x) ".join(str(l) for l in self.labels) or "C"


class LabeledOperator:
    """Square complex matrix over a ``TensorSpace``.

    Instances are treated as immutable: operations always return new objects
    and the stored matrix is flagged read-only.
    """

    __slots__ = ("space", "matrix")

    def __init__(self, space: TensorSpace | Sequence[SystemLabel], matrix):
        if not isinstance(space, TensorSpace):
            space = TensorSpace(tuple(space))
        mat = np.array(matrix, dtype=complex)
        if mat.ndim == 0:
            mat = mat.reshape(1, 1)
        n = space.dim
        if mat.shape != (n, n):
            raise ValueError(f"matrix shape {mat.shape} does not match space dimension {n}")
        mat.setflags(write=False)
        self.space = space
        self.matrix = mat

    # -- construction -----------------------------------------------------
    @classmethod
    def identity(cls, labels: Sequence[SystemLabel]) -> "LabeledOperator":
        space = TensorSpace(tuple(labels))
        return cls(space, np.eye(space.dim))

    @classmethod
    def scalar(cls, value: complex) -> "LabeledOperator":
        return cls(TensorSpace(()), np.array([[value]]))

    @classmethod
    def from_factors(cls, factors: Iterable[tuple[SystemLabel, np.ndarray]]) -> "LabeledOperator":
        factors = list(factors)
        mats = [np.asarray(m, dtype=complex) for _, m in factors]
        mat = reduce(np.kron, mats, np.eye(1, dtype=complex))
        return cls(TensorSpace(tuple(lab for lab, _ in factors)), mat)

    # -- basic queries ----------------------------------------------------
    @property
    def labels(self) -> tuple[SystemLabel, ...]:
        return self.space.labels

    @property
    def dims(self) -> tuple[int, ...]:
        return self.space.dims

    def tensor_view(self) -> np.ndarray:
        dims = self.dims
        return self.matrix.reshape(dims + dims)

    def trace(self) -> complex:
        return complex(np.trace(self.matrix))

    def dagger(self) -> "LabeledOperator":
        return LabeledOperator(self.space, self.matrix.conj().T)

    def hermiticity_error(self) -> float:
        if self.matrix.size == 0:
            return 0.0
        return float(np.max(np.abs(self.matrix - self.matrix.conj().T)))

    def is_hermitian(self, tol: float = DEFAULT_TOL) -> bool:
        return self.hermiticity_error() <= tol

    def hermitize(self) -> "LabeledOperator":
        return LabeledOperator(self.space, 0.5 * (self.matrix + self.matrix.conj().T))

    def min_eigenvalue(self) -> float:
        return float(np.linalg.eigvalsh(0.5 * (self.matrix + self.matrix.conj().T))[0])

    def norm(self, kind: str = "op") -> float:
        """Operator (``"op"``), trace (``"tr"``), Frobenius (``"fro"``) or max-abs norm."""
        m = self.matrix
        if kind == "max":
            return float(np.max(np.abs(m))) if m.size else 0.0
        if kind == "fro":
            return float(np.linalg.norm(m))
        herm = self.hermiticity_error() <= 1e-12
        if kind == "op":
            if herm:
                ev = np.linalg.eigvalsh(m)
                return float(np.max(np.abs(ev)))
            return float(np.linalg.norm(m, 2))
        if kind == "tr":
            if herm:
                return float(np.sum(np.abs(np.linalg.eigvalsh(m))))
            return float(np.sum(np.linalg.svd(m, compute_uv=False)))
        raise ValueError(f"unknown norm {kind!r}")

    def as_scalar(self) -> complex:
        if self.space.dim != 1:
            raise ValueError(f"operator over {self.space} is not a scalar")
        return complex(self.matrix[0, 0])

    # -- reordering -------------------------------------------------------
    def permute(self, target: TensorSpace | Sequence[SystemLabel]) -> "LabeledOperator":
        """Re-express the operator over ``target``, which must hold the same labels."""
        if not isinstance(target, TensorSpace):
            target = TensorSpace(tuple(target))
        if target.labels == self.space.labels:
            return self
        perm = self.space.permutation_to(target)
        n = len(perm)
        t = self.tensor_view().transpose(perm + [n + p for p in perm])
        return LabeledOperator(target, t.reshape(target.dim, target.dim))

    def canonical(self) -> "LabeledOperator":
        return self.permute(self.space.canonical())

    def aligned_matrix(self, other: "LabeledOperator") -> np.ndarray:
        """Matrix of ``other`` expressed in this operator's factor order."""
        return other.permute(self.space).matrix

    def allclose(self, other: "LabeledOperator", atol: float = 1e-10) -> bool:
        if not self.space.same_labels(other.space):
            return False
        return bool(np.allclose(self.matrix, self.aligned_matrix(other), atol=atol, rtol=0))

    def distance(self, other: "LabeledOperator", kind: str = "op") -> float:
        return (self - other).norm(kind)

    # -- arithmetic -------------------------------------------------------
    def __add__(self, other: "LabeledOperator") -> "LabeledOperator":
        return LabeledOperator(self.space, self.matrix + self.aligned_matrix(other))

    def __sub__(self, other: "LabeledOperator") -> "LabeledOperator":
        return LabeledOperator(self.space, self.matrix - self.aligned_matrix(other))

    def __neg__(self):
        return LabeledOperator(self.space, -self.matrix)

    def __mul__(self, scalar) -> "LabeledOperator":
        return LabeledOperator(self.space, self.matrix * scalar)

    __rmul__ = __mul__

    def __truediv__(self, scalar) -> "LabeledOperator":
        return LabeledOperator(self.space, self.matrix / scalar)

    def inner(self, other: "LabeledOperator") -> complex:
        """Hilbert-Schmidt inner product <self, other> = Tr(self^dag other)."""
        return complex(np.vdot(self.matrix, self.aligned_matrix(other)))

    def __repr__(self):
        return f"LabeledOperator({self.space}, dim={self.space.dim})"


# ---------------------------------------------------------------------------
# Core operations
# ---------------------------------------------------------------------------

def _resolve(space: TensorSpace, labels: Iterable[SystemLabel]) -> list[int]:
    idx = []
    for lab in labels:
        k = space.index(lab)
        if k in idx:
            raise ValueError(f"label {lab} given twice")
        idx.append(k)
    return idx


def tensor(a: LabeledOperator, b: LabeledOperator) -> LabeledOperator:
    """Tensor product over the concatenated space ``a.labels + b.labels``."""
    space = TensorSpace(a.labels + b.labels)  # raises on overlapping labels
    return LabeledOperator(space, np.kron(a.matrix, b.matrix))


def partial_trace(op: LabeledOperator, labels: Iterable[SystemLabel]) -> LabeledOperator:
    traced = set(_resolve(op.space, labels))
    n = len(op.labels)
    keep = [k for k in range(n) if k not in traced]
    ket = list(range(n))
    bra = [k if k in traced else n + k for k in range(n)]
    out = keep + [n + k for k in keep]
    t = np.einsum(op.tensor_view(), ket + bra, out)
    space = TensorSpace(tuple(op.labels[k] for k in keep))
    return LabeledOperator(space, t.reshape(space.dim, space.dim))


def trace_and_replace(op: LabeledOperator, labels: Iterable[SystemLabel]) -> LabeledOperator:
    """Trace out ``labels`` and put back the normalized identity in place."""
    idx = sorted(_resolve(op.space, labels))
    if not idx:
        return op
    n = len(op.labels)
    dims = op.dims
    t = op.tensor_view()
    for k in idx:
        d = dims[k]
        red = np.trace(t, axis1=k, axis2=n + k)
        red = np.expand_dims(red, axis=(k, n + k))
        shape = [1] * (2 * n)
        shape[k] = shape[n + k] = d
        t = red * (np.eye(d) / d).reshape(shape)
    return LabeledOperator(op.space, t.reshape(op.space.dim, op.space.dim))


class Factor(enum.Enum):
    """Per-party factor of a reduction expression."""

    ONE_MINUS_X = "1-X"
    AX = "AX"


@dataclass(frozen=True)
class ReductionExpression:
    """Signed product of trace-and-replace maps.

    ``factors`` assigns each party either ``(1 - [X_i])`` or ``[A_i][X_i]``.
    ``replace`` lists further factors replaced unconditionally, and each entry
    of ``signed`` is a group ``G`` contributing ``(1 - [G])``.
    """

    factors: tuple[tuple[int, Factor], ...] = ()
    replace: tuple[SystemLabel, ...] = ()
    signed: tuple[tuple[SystemLabel, ...], ...] = ()

    @classmethod
    def build(cls, factors: dict[int, Factor], replace=(), signed=()) -> "ReductionExpression":
        return cls(tuple(sorted(factors.items())), tuple(replace), tuple(tuple(g) for g in signed))

    def _party_labels(self, space: TensorSpace, party: int, role: Role) -> SystemLabel:
        lab = space.find(party, role)
        if lab is None:
            raise KeyError(f"space has no {role.name}{party} factor")
        return lab

    def expand(self, space: TensorSpace) -> list[tuple[int, frozenset[SystemLabel]]]:
        """Signed list of label subsets to replace; ``2**(#signed factors)`` terms."""
        fixed: set[SystemLabel] = set()
        optional: list[frozenset[SystemLabel]] = []
        for party, kind in self.factors:
            x = self._party_labels(space, party, Role.X)
            if kind is Factor.AX:
                fixed.add(self._party_labels(space, party, Role.A))
                fixed.add(x)
            else:
                optional.append(frozenset([x]))
        for lab in self.replace:
            space.index(lab)
            fixed.add(lab)
        for group in self.signed:
            for lab in group:
                space.index(lab)
            optional.append(frozenset(group))
        terms = []
        for choice in product((0, 1), repeat=len(optional)):
            labs = set(fixed)
            for bit, grp in zip(choice, optional):
                if bit:
                    labs |= grp
            terms.append(((-1) ** sum(choice), frozenset(labs)))
        return terms

    def sector_predicate(self, space: TensorSpace):
        """Return ``f(traceless) -> bool`` telling whether a sector lies in the range.

        ``traceless`` is a tuple of booleans, one per factor of ``space``, marking
        which factors carry a traceless component.
        """
        must_trivial: set[int] = set()
        must_traceless: list[int] = []
        any_traceless: list[list[int]] = []
        for party, kind in self.factors:
            x = space.index(self._party_labels(space, party, Role.X))
            if kind is Factor.AX:
                must_trivial.add(space.index(self._party_labels(space, party, Role.A)))
                must_trivial.add(x)
            else:
                must_traceless.append(x)
        for lab in self.replace:
            must_trivial.add(space.index(lab))
        for group in self.signed:
            any_traceless.append([space.index(lab) for lab in group])

        def pred(traceless):
            return (not any(traceless[k] for k in must_trivial)
                    and all(traceless[k] for k in must_traceless)
                    and all(any(traceless[k] for k in grp) for grp in any_traceless))

        return pred


def signed_reduce(op: LabeledOperator, expr: ReductionExpression) -> LabeledOperator:
    terms = expr.expand(op.space)
    acc = np.zeros_like(op.matrix)
    for sign, labs in terms:
        acc = acc + sign * trace_and_replace(op, labs).matrix
    return LabeledOperator(op.space, acc)


def link(a: LabeledOperator, b: LabeledOperator,
         contract: Iterable[SystemLabel] | None = None) -> LabeledOperator:
    """Link product of two Choi matrices, contracting the shared factors.

    ``R = Tr_C[(a^{T_C} (x) 1)(1 (x) b)]``.  With the package's Choi convention
    this is the Choi matrix of the sequential composition.  When ``contract``
    is None every shared factor is contracted.  The result is in canonical
    factor order.
    """
    a_keys = {lab.key: lab for lab in a.labels}
    b_keys = {lab.key: lab for lab in b.labels}
    shared = set(a_keys) & set(b_keys)
    if contract is None:
        ckeys = shared
    else:
        ckeys = set()
        for lab in contract:
            if lab.key in ckeys:
                raise ValueError(f"label {lab} listed twice")
            if lab.key not in a_keys or lab.key not in b_keys:
                raise KeyError(f"contracted label {lab} must appear in both operators")
            ckeys.add(lab.key)
        if shared - ckeys:
            raise ValueError("operators share labels that are not contracted: "
                             + ", ".join(str(a_keys[k]) for k in shared - ckeys))
    for k in ckeys:
        if a_keys[k].dim != b_keys[k].dim:
            raise ValueError(f"dimension mismatch on {a_keys[k]} vs {b_keys[k]}")

    counter = iter(range(10_000))
    ket_idx: dict = {}
    bra_idx: dict = {}

    def indices(op: LabeledOperator, tag: str):
        kets, bras = [], []
        for lab in op.labels:
            key = lab.key if lab.key in ckeys else (tag, lab.key)
            if key not in ket_idx:
                ket_idx[key] = next(counter)
                bra_idx[key] = next(counter)
            kets.append(ket_idx[key])
            bras.append(bra_idx[key])
        return kets + bras

    sub_a = indices(a, "a")
    sub_b = indices(b, "b")
    rest = [lab for lab in a.labels if lab.key not in ckeys] + [lab for lab in b.labels if lab.key not in ckeys]
    rest.sort(key=sort_key)
    out_keys = [(("a", lab.key) if lab.key in a_keys else ("b", lab.key)) for lab in rest]
    out = [ket_idx[k] for k in out_keys] + [bra_idx[k] for k in out_keys]
    t = np.einsum(a.tensor_view(), sub_a, b.tensor_view(), sub_b, out, optimize=True)
    space = TensorSpace(tuple(rest))
    return LabeledOperator(space, np.asarray(t).reshape(space.dim, space.dim))


def link_all(ops: Sequence[LabeledOperator]) -> LabeledOperator:
    return reduce(link, ops)


def is_psd(op: LabeledOperator, tol: float = DEFAULT_TOL) -> bool:
    if not op.is_hermitian(tol):
        raise ValueError(f"operator is not Hermitian (error {op.hermiticity_error():.3e} > {tol})")
    return op.min_eigenvalue() >= -tol


def partial_transpose(op: LabeledOperator, labels: Iterable[SystemLabel]) -> LabeledOperator:
    idx = set(_resolve(op.space, labels))
    n = len(op.labels)
    perm = [n + k if k in idx else k for k in range(n)] + [k if k in idx else n + k for k in range(n)]
    t = op.tensor_view().transpose(perm)
    return LabeledOperator(op.space, t.reshape(op.space.dim, op.space.dim))


# ---------------------------------------------------------------------------
# Choi matrices of elementary maps
# ---------------------------------------------------------------------------

def choi_from_kraus(kraus: Sequence[np.ndarray], inputs: Sequence[SystemLabel],
                    outputs: Sequence[SystemLabel]) -> LabeledOperator:
    """Choi matrix over ``inputs + outputs`` of ``rho -> sum_k K rho K^dag``.

    Each Kraus operator maps the joint input space (factors in the order
    given) to the joint output space.
    """
    d_in = math.prod(l.dim for l in inputs)
    d_out = math.prod(l.dim for l in outputs)
    mat = np.zeros((d_in * d_out, d_in * d_out), dtype=complex)
    for k in kraus:
        k = np.asarray(k, dtype=complex)
        if k.shape != (d_out, d_in):
            raise ValueError(f"Kraus operator shape {k.shape}, expected {(d_out, d_in)}")
        v = k.T.reshape(-1)
        mat += np.outer(v, v.conj())
    return LabeledOperator(TensorSpace(tuple(inputs) + tuple(outputs)), mat)


def choi_identity(inp: SystemLabel, out: SystemLabel) -> LabeledOperator:
    if inp.dim != out.dim:
        raise ValueError("identity channel needs equal dimensions")
    return choi_from_kraus([np.eye(inp.dim)], [inp], [out])


def choi_of_map(apply, inputs: Sequence[SystemLabel], outputs: Sequence[SystemLabel]) -> LabeledOperator:
    """Choi matrix of a linear map given as a Python callable on matrices."""
    d_in = math.prod(l.dim for l in inputs)
    d_out = math.prod(l.dim for l in outputs)
    mat = np.zeros((d_in, d_out, d_in, d_out), dtype=complex)
    for i in range(d_in):
        for j in range(d_in):
            e = np.zeros((d_in, d_in), dtype=complex)
            e[i, j] = 1.0
            mat[i, :, j, :] = apply(e)
    return LabeledOperator(TensorSpace(tuple(inputs) + tuple(outputs)), mat.reshape(d_in * d_out, d_in * d_out))


def apply_choi(choi: LabeledOperator, state: LabeledOperator) -> LabeledOperator:
    """Apply the map with Choi matrix ``choi`` to ``state`` (over some of its inputs)."""
    return link(state, choi)


# ---------------------------------------------------------------------------
# Operator bases and spanning families
# ---------------------------------------------------------------------------

def hermitian_basis(d: int) -> np.ndarray:
    """Orthonormal Hermitian operator basis; element 0 is ``I/sqrt(d)``.

    Elements 1.. are the normalized generalized Gell-Mann matrices, all
    traceless.  Returns an array of shape ``(d*d, d, d)``.
    """
    basis = [np.eye(d, dtype=complex) / np.sqrt(d)]
    for j in range(d):
        for k in range(j + 1, d):
            s = np.zeros((d, d), dtype=complex)
            s[j, k] = s[k, j] = 1 / np.sqrt(2)
            a = np.zeros((d, d), dtype=complex)
            a[j, k], a[k, j] = -1j / np.sqrt(2), 1j / np.sqrt(2)
            basis += [s, a]
    for l in range(1, d):
        diag = np.zeros(d)
        diag[:l] = 1
        diag[l] = -l
        basis.append(np.diag(diag / np.sqrt(l * (l + 1))).astype(complex))
    return np.array(basis)


def spanning_states(d: int) -> np.ndarray:
    """``d*d`` density matrices spanning all ``d x d`` matrices.

    Computational projectors followed by ``|j>+|k>`` and ``|j>+i|k>``
    superpositions.
    """
    states = []
    for j in range(d):
        s = np.zeros((d, d), dtype=complex)
        s[j, j] = 1
        states.append(s)
    for j in range(d):
        for k in range(j + 1, d):
            for phase in (1, 1j):
                v = np.zeros(d, dtype=complex)
                v[j], v[k] = 1, phase
                states.append(np.outer(v, v.conj()) / 2)
    return np.array(states)


def spanning_differences(d: int) -> np.ndarray:
    """State pairs whose differences span the traceless operators.

    Returns shape ``(d*d - 1, 2, d, d)``: pair ``k`` is ``(s_{k+1}, s_0)``.
    """
    s = spanning_states(d)
    return np.array([[s[k], s[0]] for k in range(1, d * d)]).reshape(d * d - 1, 2, d, d)


# ---------------------------------------------------------------------------
# Projection onto the joint kernel of reduction expressions
# ---------------------------------------------------------------------------

def _along(t: np.ndarray, mat: np.ndarray, axis: int) -> np.ndarray:
    return np.moveaxis(np.tensordot(mat, t, axes=([1], [axis])), 0, axis)


def kernel_projection(op: LabeledOperator, exprs: Sequence[ReductionExpression]) -> LabeledOperator:
    """Orthogonal projection of ``op`` onto ``{S : signed_reduce(S, e) = 0 for all e}``.

    Trace-and-replace maps on distinct factors are commuting orthogonal
    projectors, so operator space splits into sectors labelled by which
    factors carry a traceless part.  Every expression is the projector onto
    a union of such sectors; the joint kernel is the span of the remaining
    ones.  Sectors are read off in a product Hermitian basis whose first
    element is the normalized identity.
    """
    n = len(op.labels)
    dims = op.dims
    if n == 0:
        return op
    preds = [e.sector_predicate(op.space) for e in exprs]
    allowed = np.ones((2,) * n, dtype=bool)
    for pattern in product((False, True), repeat=n):
        if any(p(pattern) for p in preds):
            allowed[tuple(int(b) for b in pattern)] = False

    t = op.tensor_view()
    interleave = [a for k in range(n) for a in (k, n + k)]
    t = t.transpose(interleave).reshape([d * d for d in dims])
    bases = {}
    for k, d in enumerate(dims):
        if d not in bases:
            bases[d] = hermitian_basis(d).reshape(d * d, d * d)
        t = _along(t, bases[d].conj(), k)
    index = np.ix_(*[(np.arange(d * d) != 0).astype(int) for d in dims])
    t = t * allowed[index]
    for k, d in enumerate(dims):
        t = _along(t, bases[d].T, k)
    t = t.reshape([x for d in dims for x in (d, d)])
    inv = np.argsort(interleave)
    t = t.transpose(inv)
    return LabeledOperator(op.space, t.reshape(op.space.dim, op.space.dim))
