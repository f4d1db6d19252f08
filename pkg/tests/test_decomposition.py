import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from builders import local_channels, no_influence_table, semicausal_channel
from icoproc.channels import QuantumChannel, parity_erasure_quantum
from icoproc.decomposition import (
    DecompositionError,
    ParityErasureViolation,
    apply_supermap,
    classical_oneway_decompose,
    insert_channel,
    no_influence_residual,
    outcome_probabilities,
    pair_probabilities,
    physicalize_instrument,
    quantum_oneway_decompose,
    readout_label,
)
from icoproc.fixtures import classical_swap, comb_operator, measure_prepare_instrument, swap_operator
from icoproc.process_matrix import PartySignature, pair, random_ordered_process, random_valid_process
from icoproc.sampling import get_rng, random_channel, random_instrument, random_state
from icoproc.tensor_core import LabeledOperator, Role, SystemLabel, choi_from_kraus, choi_identity, link, partial_trace, tensor

SIG2 = PartySignature.qubits(2)


def instrument_chois(sig, i, n_outcomes, rng):
    return [choi_from_kraus(k, [sig.a(i)], [sig.x(i)])
            for k in random_instrument(sig.dims_a[i - 1], sig.dims_x[i - 1], n_outcomes, rng)]


class TestClassicalDecomposition:
    @pytest.mark.parametrize("n,i", [(2, 1), (2, 2), (3, 1), (3, 2), (3, 3)])
    def test_recomposition(self, n, i):
        rng = get_rng(n * 10 + i)
        for _ in range(5):
            ch = no_influence_table(n, i, rng)
            dec = classical_oneway_decompose(ch, i)
            assert dec.residual <= 1e-12
            assert dec.E.is_valid() and dec.D.is_valid()

    def test_zero_probability_branches(self):
        ch = classical_swap()
        dec = classical_oneway_decompose(ch, 1)
        assert dec.residual == 0.0
        assert dec.D.is_valid()

    def test_influence_rejected(self):
        from icoproc.channels import ClassicalChannel
        feedback = ClassicalChannel.from_function((2, 2), (2, 2), lambda x: (x[0], x[1]))
        assert no_influence_residual(feedback, 1) == pytest.approx(1.0)
        with pytest.raises(DecompositionError):
            classical_oneway_decompose(feedback, 1)


class TestQuantumDecomposition:
    @settings(max_examples=15, deadline=None)
    @given(st.integers(0, 2**32 - 1), st.sampled_from([1, 2]))
    def test_semicausal_recomposition(self, seed, i):
        ch = semicausal_channel(SIG2, i, seed)
        dec = quantum_oneway_decompose(ch, i)
        assert dec.residual <= 1e-7
        assert link(dec.E, dec.D, [dec.memory]).distance(ch.choi) <= 1e-7

    def test_encoder_and_decoder_are_channels(self):
        ch = semicausal_channel(PartySignature.qubits(3), 2, seed=3)
        dec = quantum_oneway_decompose(ch, 2)
        e_out = [l for l in dec.E.labels if l.role in (Role.A, Role.M)]
        d_out = [l for l in dec.D.labels if l.role is Role.A]
        e_in = [l for l in dec.E.labels if l not in e_out]
        d_in = [l for l in dec.D.labels if l not in d_out]
        assert partial_trace(dec.E, e_out).allclose(LabeledOperator.identity(e_in), atol=1e-9)
        assert partial_trace(dec.D, d_out).allclose(LabeledOperator.identity(d_in), atol=1e-7)
        assert dec.D.min_eigenvalue() > -1e-7
        assert dec.memory_dim <= 8  # rank of the marginal Choi matrix

    def test_decomposition_deterministic(self):
        ch = semicausal_channel(SIG2, 1, seed=5)
        d1 = quantum_oneway_decompose(ch, 1)
        d2 = quantum_oneway_decompose(ch, 1)
        assert d1.D.allclose(d2.D) and d1.E.allclose(d2.E)

    def test_valid_process_decomposes_every_party(self):
        W = random_valid_process(PartySignature.qubits(3), seed=6)
        for i in (1, 2, 3):
            assert quantum_oneway_decompose(W, i).residual <= 1e-7

    def test_influence_rejected(self):
        sig = PartySignature.qubits(1)
        with pytest.raises(DecompositionError) as info:
            quantum_oneway_decompose(choi_identity(sig.x(1), sig.a(1)), 1)
        assert info.value.no_influence > 0.5


class TestInsertion:
    def test_insert_matches_partial_link(self):
        rng = get_rng(9)
        W = random_valid_process(PartySignature.qubits(3), rng)
        C = random_channel([W.signature.a(2)], [W.signature.x(2)], seed=rng)
        out = insert_channel(W, 2, C)
        expected = link(W.W, C)
        assert out.choi.distance(expected) < 1e-8
        assert parity_erasure_quantum(out).verdict

    def test_ancilla_channel_extends(self):
        sig = SIG2
        W = random_ordered_process(sig, (2, 1), seed=2)
        p = SystemLabel(1, Role.P, 2)
        f = SystemLabel(1, Role.F, 2)
        C = random_channel([sig.a(1), p], [sig.x(1), f], seed=4)
        out = insert_channel(W, 1, C)
        assert {l.key for l in out.past + out.future} == {p.key, f.key}
        assert out.choi.distance(link(W.W, C)) < 1e-8

    def test_independent_of_decomposition(self):
        # ordered circuit 2 -> 1 with its own (E, D) and a padded memory
        rng = get_rng(12)
        mem = SystemLabel(0, Role.M, 3, tag=7)
        E = tensor(random_channel([SIG2.x(2)], [SIG2.a(1)], seed=rng), random_state([mem], seed=rng))
        D = tensor(random_channel([mem], [SIG2.a(2)], seed=rng), LabeledOperator.identity([SIG2.x(1)]))
        T = QuantumChannel(link(E, D, [mem]).canonical())
        for _ in range(5):
            C = random_channel([SIG2.a(1)], [SIG2.x(1)], seed=rng)
            by_circuit = link(link(E, C, [SIG2.a(1)]), D, [SIG2.x(1), mem])
            assert insert_channel(T, 1, C).choi.distance(by_circuit) < 1e-8

    def test_feedback_loop_rejected(self):
        # X2 -> A1 then X1 -> A2: plugging party 1 closes a loop on party 2
        T = semicausal_channel(SIG2, 1, seed=12)
        with pytest.raises(DecompositionError, match="not parity-erasure"):
            insert_channel(T, 1, random_channel([SIG2.a(1)], [SIG2.x(1)], seed=1))

    def test_rejects_non_channel(self):
        W = random_valid_process(SIG2, seed=1)
        bad = choi_identity(SIG2.a(1), SIG2.x(1)) * 2
        with pytest.raises(ValueError, match="not a channel"):
            insert_channel(W, 1, bad)


class TestApplySupermap:
    @pytest.mark.parametrize("n", [1, 2, 3])
    def test_orders_agree_with_pair(self, n):
        sig = PartySignature.qubits(n)
        rng = get_rng(40 + n)
        W = random_valid_process(sig, rng)
        ops = local_channels(sig, rng)
        reference = pair(W, ops)
        for order in itertools.permutations(sig.parties):
            val = apply_supermap(W, ops, order)
            assert val == pytest.approx(reference, abs=1e-8)
            assert val == pytest.approx(1.0, abs=1e-9)

    def test_extended_returns_channel(self):
        sig = PartySignature.qubits(2, d_p=2, d_f=2)
        rng = get_rng(3)
        W = random_ordered_process(sig, (1, 2), rng)
        ops = local_channels(sig, rng)
        reference = pair(W, ops)
        for order in [(1, 2), (2, 1)]:
            out = apply_supermap(W, ops, order)
            assert out.distance(reference) < 1e-8
        assert QuantumChannel(out).is_valid(1e-8)

    def test_rejects_swap_naming_subset(self):
        ops = [choi_identity(SIG2.a(i), SIG2.x(i)) for i in (1, 2)]
        with pytest.raises(ParityErasureViolation) as info:
            apply_supermap(swap_operator(), ops)
        assert info.value.subsets == [frozenset({1, 2})]
        assert "{1,2}" in str(info.value)

    def test_bad_order(self):
        W = random_valid_process(SIG2, seed=1)
        ops = local_channels(SIG2, get_rng(1))
        with pytest.raises(ValueError):
            apply_supermap(W, ops, (1, 1))


class TestInstruments:
    def test_physicalized_instrument_is_channel(self):
        els = instrument_chois(SIG2, 1, 3, get_rng(2))
        chan = physicalize_instrument(els, 1)
        assert readout_label(1, 3) in chan.space
        assert partial_trace(chan, [SIG2.x(1), readout_label(1, 3)]).allclose(
            LabeledOperator.identity([SIG2.a(1)]))

    @pytest.mark.parametrize("n", [1, 2, 3])
    def test_probabilities_match_pair(self, n):
        sig = PartySignature.qubits(n)
        rng = get_rng(70 + n)
        W = random_valid_process(sig, rng)
        instr = [instrument_chois(sig, i, 2, rng) for i in sig.parties]
        probs = outcome_probabilities(W, instr)
        np.testing.assert_allclose(probs, pair_probabilities(W, instr), atol=1e-9)
        assert probs.sum() == pytest.approx(1.0, abs=1e-9)
        assert probs.min() > -1e-9

    def test_comb_measurement_statistics(self):
        instr = [measure_prepare_instrument(i) for i in (1, 2)]
        probs = outcome_probabilities(comb_operator(), instr)
        np.testing.assert_allclose(probs, [[1, 0], [0, 0]], atol=1e-9)
