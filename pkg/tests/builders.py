"""Random objects shared by the test modules."""
import itertools

import numpy as np

from icoproc.channels import ClassicalChannel, QuantumChannel
from icoproc.process_matrix import PartySignature, memory_label
from icoproc.sampling import get_rng, random_channel
from icoproc.tensor_core import LabeledOperator, choi_identity, link, tensor

SIG2 = PartySignature.qubits(2)


def local_channels(sig: PartySignature, rng):
    return [random_channel([sig.a(i)], [sig.x(i)], seed=rng) for i in sig.parties]


def semicausal_channel(sig: PartySignature, i: int, seed=None, memory_dim: int = 2) -> QuantumChannel:
    """E-then-D circuit: other inputs -> A_i M, then X_i M -> other outputs."""
    rng = get_rng(seed)
    others = [j for j in sig.parties if j != i]
    mem = memory_label(99, memory_dim)
    E = random_channel([sig.x(j) for j in others], [sig.a(i), mem], seed=rng)
    D = random_channel([sig.x(i), mem], [sig.a(j) for j in others], seed=rng)
    return QuantumChannel(link(E, D, [mem]).canonical())


def random_table(out_sizes, in_sizes, rng, alpha=1.0) -> ClassicalChannel:
    n_out = int(np.prod(out_sizes))
    n_in = int(np.prod(in_sizes))
    cols = rng.dirichlet(np.full(n_out, alpha), size=n_in).T
    return ClassicalChannel(out_sizes, in_sizes, cols.reshape(tuple(out_sizes) + tuple(in_sizes)))


def no_influence_table(n: int, i: int, rng, size: int = 2, memory: int = 3) -> ClassicalChannel:
    """Random table with x_i -/-> a_i, built as p(a_i, m | x_-i) p(a_-i | x_i, m)."""
    others = [j for j in range(n) if j != i - 1]
    e = rng.dirichlet(np.ones(size * memory), size=size ** (n - 1)).T
    e = e.reshape((size, memory) + (size,) * (n - 1))
    d = rng.dirichlet(np.ones(size ** (n - 1)), size=size * memory).T
    d = d.reshape((size,) * (n - 1) + (size, memory))
    # subscripts: memory 0, outputs 1..n, inputs n+1..2n
    sub_e = [i, 0] + [n + 1 + j for j in others]
    sub_d = [1 + j for j in others] + [n + i, 0]
    out = list(range(1, 2 * n + 1))
    return ClassicalChannel((size,) * n, (size,) * n, np.einsum(e, sub_e, d, sub_d, out))


def brute_force_signed(ch: ClassicalChannel, subset):
    """Largest |sum_b (-1)^|b| p(a_I | x(b))| over letter pairs in I and fixings outside I."""
    n = ch.n_parties
    members = sorted(subset)
    marg = ch.marginal([i - 1 for i in members])
    worst = 0.0
    pair_choices = [list(itertools.combinations(range(ch.in_sizes[i - 1]), 2)) for i in members]
    others = [j for j in range(n) if j + 1 not in subset]
    for pairs in itertools.product(*pair_choices):
        for fix in itertools.product(*[range(ch.in_sizes[j]) for j in others]):
            total = np.zeros(marg.shape[:len(members)])
            for bits in itertools.product((0, 1), repeat=len(members)):
                x = [0] * n
                for j, v in zip(others, fix):
                    x[j] = v
                for i, pr, b in zip(members, pairs, bits):
                    x[i - 1] = pr[b]
                total += (-1) ** sum(bits) * marg[(...,) + tuple(x)]
            worst = max(worst, float(np.max(np.abs(total))))
    return worst


def feedback_classical():
    return ClassicalChannel.from_function((2, 2), (2, 2), lambda x: (x[0], 0))


def feedback_quantum():
    zero = np.diag([1.0, 0.0])
    return tensor(tensor(choi_identity(SIG2.x(1), SIG2.a(1)), LabeledOperator([SIG2.a(2)], zero)),
                  LabeledOperator.identity([SIG2.x(2)])).canonical()


SWAP_KRAUS = [np.eye(4)[[0, 2, 1, 3]]]
FEEDBACK_KRAUS = [np.kron(np.eye(2), np.outer([1, 0], np.eye(2)[j])) for j in range(2)]


def brute_force_quantum(kraus, subset, n: int = 2, d: int = 2):
    """Largest trace norm of a literal signed marginal for qubit bits.

    Bits of parties in ``subset`` are encoded in state pairs whose differences
    span the traceless operators; other parties are fed spanning states.
    Outputs outside ``subset`` are traced by reshaping.
    """
    from icoproc.tensor_core import spanning_differences, spanning_states
    diffs, states = spanning_differences(d), spanning_states(d)
    members = sorted(subset)
    choices = [range(len(diffs)) if i in subset else range(len(states)) for i in range(1, n + 1)]
    worst = 0.0
    for pick in itertools.product(*choices):
        total = 0
        for bits in itertools.product((0, 1), repeat=len(members)):
            rho = np.eye(1)
            b = dict(zip(members, bits))
            for i, k in enumerate(pick, start=1):
                rho = np.kron(rho, diffs[k][b[i]] if i in subset else states[k])
            out = sum(K @ rho @ K.conj().T for K in kraus)
            t = out.reshape((d,) * (2 * n))
            for j in sorted(set(range(1, n + 1)) - set(members), reverse=True):
                t = np.trace(t, axis1=j - 1, axis2=t.ndim // 2 + j - 1)
            k_dim = d ** len(members)
            total = total + (-1) ** sum(bits) * t.reshape(k_dim, k_dim)
        worst = max(worst, float(np.sum(np.abs(np.linalg.eigvalsh(0.5 * (total + total.conj().T))))))
    return worst
