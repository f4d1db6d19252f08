import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from icoproc.sampling import random_channel, random_density_matrix, random_hermitian, random_kraus
from icoproc.tensor_core import (
    Factor,
    LabeledOperator,
    ReductionExpression,
    Role,
    SystemLabel,
    TensorSpace,
    apply_choi,
    choi_from_kraus,
    choi_identity,
    choi_of_map,
    hermitian_basis,
    is_psd,
    kernel_projection,
    link,
    partial_trace,
    partial_transpose,
    signed_reduce,
    spanning_differences,
    spanning_states,
    tensor,
    trace_and_replace,
)

A1 = SystemLabel(1, Role.A, 2)
X1 = SystemLabel(1, Role.X, 3)
A2 = SystemLabel(2, Role.A, 2)
X2 = SystemLabel(2, Role.X, 2)


def random_op(labels, seed):
    space = TensorSpace(tuple(labels))
    return LabeledOperator(space, random_hermitian(space.dim, seed))


def partial_trace_oracle(mat, dims, traced):
    """Entrywise sum over the traced indices."""
    keep = [k for k in range(len(dims)) if k not in traced]
    kdims = [dims[k] for k in keep]
    out = np.zeros((int(np.prod(kdims)),) * 2, dtype=complex)
    full = list(itertools.product(*[range(d) for d in dims]))
    index = {idx: n for n, idx in enumerate(full)}
    kept = list(itertools.product(*[range(d) for d in kdims]))
    for r, kr in enumerate(kept):
        for c, kc in enumerate(kept):
            for t in itertools.product(*[range(dims[k]) for k in traced]):
                ri, ci = [0] * len(dims), [0] * len(dims)
                for pos, k in enumerate(keep):
                    ri[k], ci[k] = kr[pos], kc[pos]
                for pos, k in enumerate(traced):
                    ri[k] = ci[k] = t[pos]
                out[r, c] += mat[index[tuple(ri)], index[tuple(ci)]]
    return out


class TestLabels:
    def test_space_rejects_duplicates(self):
        with pytest.raises(ValueError):
            TensorSpace((A1, A1))

    def test_dimension_must_be_positive(self):
        with pytest.raises(ValueError):
            SystemLabel(1, Role.A, 0)

    def test_role_from_name(self):
        assert SystemLabel(1, "X", 2).role is Role.X

    def test_canonical_order(self):
        space = TensorSpace((X2, A1, X1, A2))
        assert space.canonical().labels == (A1, X1, A2, X2)

    def test_operator_shape_checked(self):
        with pytest.raises(ValueError):
            LabeledOperator([A1, X1], np.eye(5))

    def test_matrix_is_read_only(self):
        op = LabeledOperator.identity([A1])
        with pytest.raises(ValueError):
            op.matrix[0, 0] = 2


class TestPartialTrace:
    @pytest.mark.parametrize("traced", [[0], [1], [2], [0, 2], [0, 1, 2]])
    def test_matches_entrywise_oracle(self, traced):
        labels = [A1, X1, A2]
        op = random_op(labels, seed=3)
        got = partial_trace(op, [labels[k] for k in traced])
        expected = partial_trace_oracle(op.matrix, [2, 3, 2], traced)
        np.testing.assert_allclose(got.matrix, expected, atol=1e-12)

    def test_product_operator(self):
        rho = random_density_matrix(2, seed=1)
        sigma = random_density_matrix(3, seed=2)
        op = LabeledOperator.from_factors([(A1, rho), (X1, sigma)])
        np.testing.assert_allclose(partial_trace(op, [X1]).matrix, rho, atol=1e-12)
        np.testing.assert_allclose(partial_trace(op, [A1]).matrix, sigma, atol=1e-12)

    def test_label_order_irrelevant(self):
        op = random_op([A1, X1, A2], seed=4)
        shuffled = op.permute([A2, A1, X1])
        assert partial_trace(op, [X1]).allclose(partial_trace(shuffled, [X1]))

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_trace_preserved(self, seed):
        op = random_op([A1, X1, A2], seed)
        assert abs(partial_trace(op, [X1]).trace() - op.trace()) < 1e-10


class TestTraceAndReplace:
    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_idempotent_and_commuting(self, seed):
        op = random_op([A1, X1, A2], seed)
        once = trace_and_replace(op, [X1])
        assert trace_and_replace(once, [X1]).allclose(once)
        ab = trace_and_replace(trace_and_replace(op, [A1]), [X1])
        ba = trace_and_replace(trace_and_replace(op, [X1]), [A1])
        assert ab.allclose(ba)

    def test_definition(self):
        op = random_op([A1, X1], seed=9)
        expected = np.kron(partial_trace(op, [X1]).matrix, np.eye(3) / 3)
        np.testing.assert_allclose(trace_and_replace(op, [X1]).matrix, expected, atol=1e-12)

    def test_self_adjoint(self):
        f = random_op([A1, X1, A2], seed=1)
        g = random_op([A1, X1, A2], seed=2)
        lhs = trace_and_replace(f, [A1, A2]).inner(g)
        rhs = f.inner(trace_and_replace(g, [A1, A2]))
        assert abs(lhs - rhs) < 1e-12


class TestChoi:
    def test_kraus_action(self):
        rng = np.random.default_rng(5)
        kraus = random_kraus(3, 2, seed=rng)
        choi = choi_from_kraus(kraus, [X1], [A2])
        rho = random_density_matrix(3, seed=rng)
        out = apply_choi(choi, LabeledOperator([X1], rho))
        expected = sum(k @ rho @ k.conj().T for k in kraus)
        np.testing.assert_allclose(out.matrix, expected, atol=1e-12)

    def test_choi_of_map_agrees(self):
        kraus = random_kraus(2, 3, seed=11)
        apply = lambda m: sum(k @ m @ k.conj().T for k in kraus)
        assert choi_of_map(apply, [A1], [X1]).allclose(choi_from_kraus(kraus, [A1], [X1]))

    def test_trace_preserving_marginal(self):
        choi = random_channel([X1], [A1, A2], seed=6)
        assert partial_trace(choi, [A1, A2]).allclose(LabeledOperator.identity([X1]))
        assert is_psd(choi)

    def test_identity_channel(self):
        phi = choi_identity(A1, A2)
        rho = random_density_matrix(2, seed=2)
        np.testing.assert_allclose(apply_choi(phi, LabeledOperator([A1], rho)).matrix, rho, atol=1e-12)


class TestLink:
    def test_operator_basis_oracle(self):
        # R = Tr_s[(A^{T_s} (x) I_3)(I_1 (x) B)] with A on (1, s), B on (s, 3)
        a = random_op([A1, X1], seed=1)
        b = random_op([X1, A2], seed=2)
        at = partial_transpose(a, [X1]).matrix
        big = np.kron(at, np.eye(2)) @ np.kron(np.eye(2), b.matrix)
        expected = partial_trace_oracle(big, [2, 3, 2], [1])
        got = link(a, b)
        assert got.labels == (A1, A2)
        np.testing.assert_allclose(got.matrix, expected, atol=1e-12)

    def test_sequential_composition(self):
        rng = np.random.default_rng(8)
        k1 = random_kraus(2, 3, seed=rng)
        k2 = random_kraus(3, 2, seed=rng)
        first = choi_from_kraus(k1, [A1], [X1])
        second = choi_from_kraus(k2, [X1], [A2])
        composed = choi_from_kraus([b @ a for a in k1 for b in k2], [A1], [A2])
        assert link(first, second).allclose(composed)

    def test_no_shared_labels_is_tensor(self):
        a = random_op([A1], seed=1)
        b = random_op([X2], seed=2)
        assert link(a, b).allclose(tensor(a, b))

    def test_commutative_and_associative(self):
        a = random_op([A1, X1], seed=1)
        b = random_op([X1, A2], seed=2)
        c = random_op([A2, X2], seed=3)
        assert link(a, b).allclose(link(b, a))
        assert link(link(a, b), c).allclose(link(a, link(b, c)), atol=1e-9)

    def test_contract_must_be_shared(self):
        with pytest.raises(KeyError):
            link(random_op([A1], 1), random_op([X1], 2), [A1])

    def test_full_contraction_is_transpose_pairing(self):
        w = random_op([A1, X1], seed=3)
        m = random_op([A1, X1], seed=4)
        expected = np.trace(w.matrix @ m.matrix.T)
        assert abs(link(w, m).as_scalar() - expected) < 1e-12


class TestBases:
    @pytest.mark.parametrize("d", [2, 3, 4])
    def test_hermitian_basis_orthonormal(self, d):
        b = hermitian_basis(d)
        gram = np.einsum("aij,bij->ab", b.conj(), b)
        np.testing.assert_allclose(gram, np.eye(d * d), atol=1e-12)
        for e in b:
            np.testing.assert_allclose(e, e.conj().T)
        np.testing.assert_allclose([np.trace(e) for e in b[1:]], 0, atol=1e-12)

    @pytest.mark.parametrize("d", [2, 3])
    def test_spanning_families(self, d):
        s = spanning_states(d)
        assert np.linalg.matrix_rank(s.reshape(len(s), -1)) == d * d
        for rho in s:
            assert abs(np.trace(rho) - 1) < 1e-12
            assert np.linalg.eigvalsh(rho)[0] > -1e-12
        diffs = spanning_differences(d)
        delta = (diffs[:, 0] - diffs[:, 1]).reshape(len(diffs), -1)
        assert np.linalg.matrix_rank(delta) == d * d - 1


def projector_oracle(space, exprs):
    """Least-squares projector onto the joint kernel, as a superoperator on vec(S)."""
    dim = space.dim
    columns = []
    for k in range(dim * dim):
        e = np.zeros(dim * dim, dtype=complex)
        e[k] = 1
        op = LabeledOperator(space, e.reshape(dim, dim))
        columns.append(np.concatenate([signed_reduce(op, ex).matrix.reshape(-1) for ex in exprs]))
    constraint = np.array(columns).T
    _, sv, vh = np.linalg.svd(constraint)
    rank = int(np.sum(sv > 1e-10))
    null = vh[rank:].conj().T
    return null @ null.conj().T


class TestKernelProjection:
    SPACE = TensorSpace((SystemLabel(1, Role.A, 2), SystemLabel(1, Role.X, 2),
                         SystemLabel(2, Role.A, 2), SystemLabel(2, Role.X, 2)))
    EXPRS = [
        ReductionExpression.build({1: Factor.ONE_MINUS_X, 2: Factor.AX}),
        ReductionExpression.build({1: Factor.AX, 2: Factor.ONE_MINUS_X}),
        ReductionExpression.build({1: Factor.ONE_MINUS_X, 2: Factor.ONE_MINUS_X}),
    ]

    def test_matches_least_squares_oracle(self):
        proj = projector_oracle(self.SPACE, self.EXPRS)
        op = LabeledOperator(self.SPACE, random_hermitian(16, seed=12))
        got = kernel_projection(op, self.EXPRS)
        expected = (proj @ op.matrix.reshape(-1)).reshape(16, 16)
        np.testing.assert_allclose(got.matrix, expected, atol=1e-10)

    @settings(max_examples=20, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_output_in_kernel_and_idempotent(self, seed):
        op = LabeledOperator(self.SPACE, random_hermitian(16, seed))
        p = kernel_projection(op, self.EXPRS)
        for ex in self.EXPRS:
            assert signed_reduce(p, ex).norm("op") < 1e-10
        assert kernel_projection(p, self.EXPRS).allclose(p)
