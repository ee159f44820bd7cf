import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pgbart.model import BartHyperParams, log_tree_prior
from pgbart.sequence import (
    PartialTree,
    advance,
    advance_noop,
    finalize,
    init_partial,
    replay_sequence,
    sample_tree_prior,
    transition_log_prob,
)
from pgbart.tree import Dataset, DecisionTree


@pytest.fixture
def ds():
    rng = np.random.default_rng(0)
    return Dataset(rng.uniform(-1, 1, (30, 2)), rng.normal(size=30))


def example_tree():
    return DecisionTree({"": (0, 0.5), "1": (1, 0.3)})


def example_data():
    X = np.array([[0.1, 0.5], [0.2, 0.1], [0.7, 0.2], [0.9, 0.4], [0.8, 0.9], [0.6, 0.25]])
    return Dataset(X, np.zeros(len(X)))


class TestInit:
    def test_root_eligible(self):
        state = init_partial()
        assert state.queue == ("",) and state.splits == {} and state.stage == 0
        assert not state.terminal

    def test_idempotent(self):
        assert init_partial() == init_partial()


class TestAdvance:
    def test_no_valid_split_always_stops(self):
        ds = Dataset(np.array([[0.3, 0.3], [0.3, 0.3]]), np.zeros(2))
        rng = np.random.default_rng(0)
        hp = BartHyperParams()
        for _ in range(50):
            nxt = advance(rng, init_partial(ds), ds, hp)
            assert nxt.terminal and nxt.splits == {}

    def test_terminal_raises(self, ds):
        terminal = PartialTree({}, (), 1, {"": np.arange(ds.n)})
        with pytest.raises(RuntimeError):
            advance(np.random.default_rng(0), terminal, ds, BartHyperParams())

    def test_root_split_frequency(self, ds):
        hp = BartHyperParams()
        rng = np.random.default_rng(1)
        n = 10_000
        hits = sum(bool(advance(rng, init_partial(ds), ds, hp).splits) for _ in range(n))
        se = math.sqrt(0.95 * 0.05 / n)
        assert abs(hits / n - 0.95) < 3 * se

    def test_children_appended_in_order(self, ds):
        hp = BartHyperParams(alpha_s=0.999999)
        rng = np.random.default_rng(2)
        state = advance(rng, init_partial(ds), ds, hp)
        assert state.queue == ("0", "1")
        assert state.stage == 1

    def test_does_not_mutate_input(self, ds):
        hp = BartHyperParams(alpha_s=0.999999)
        root = init_partial(ds)
        advance(np.random.default_rng(3), root, ds, hp)
        assert root.splits == {} and root.queue == ("",) and set(root.index) == {""}

    def test_noop(self):
        terminal = PartialTree({"": (0, 0.1)}, (), 3, {})
        assert advance_noop(advance_noop(terminal)) is terminal
        with pytest.raises(RuntimeError):
            advance_noop(init_partial())


class TestReplay:
    def test_root_only(self, ds):
        seq = replay_sequence(DecisionTree(), ds)
        assert len(seq) == 2 and seq[-1].terminal

    def test_worked_example_queues(self):
        seq = replay_sequence(example_tree(), example_data())
        assert [s.queue for s in seq] == [("",), ("0", "1"), ("1",), ("10", "11"), ("11",), ()]

    def test_invalid_split(self, ds):
        with pytest.raises(ValueError):
            replay_sequence(DecisionTree({"": (0, 5.0)}), ds)

    @settings(max_examples=50, deadline=None)
    @given(seed=st.integers(0, 2**32 - 1), beta=st.floats(0.3, 2.0))
    def test_round_trip(self, seed, beta):
        rng = np.random.default_rng(seed)
        ds = Dataset(rng.uniform(-1, 1, (25, 3)), np.zeros(25))
        hp = BartHyperParams(beta_s=beta)
        draw = sample_tree_prior(rng, ds, hp)
        seq = replay_sequence(draw.tree, ds)
        assert seq[-1].tree == draw.tree
        assert len(seq) == 1 + len(draw.tree.nodes())
        assert all(s.stage == t for t, s in enumerate(seq))

    @settings(max_examples=50, deadline=None)
    @given(seed=st.integers(0, 2**32 - 1))
    def test_transition_product_is_prior(self, seed):
        rng = np.random.default_rng(seed)
        ds = Dataset(rng.uniform(-1, 1, (20, 2)), np.zeros(20))
        hp = BartHyperParams(beta_s=0.5)
        tree = sample_tree_prior(rng, ds, hp).tree
        seq = replay_sequence(tree, ds)
        total = sum(transition_log_prob(a, b, ds, hp) for a, b in zip(seq, seq[1:]))
        assert total == pytest.approx(log_tree_prior(tree, ds, hp), abs=1e-12)

    def test_terminal_self_transition(self, ds):
        state = replay_sequence(DecisionTree(), ds)[-1]
        hp = BartHyperParams()
        assert transition_log_prob(state, state, ds, hp) == 0.0


class TestSampleTreePrior:
    def test_huge_beta_gives_at_most_two_leaves(self, ds):
        hp = BartHyperParams(beta_s=1e6)
        rng = np.random.default_rng(4)
        assert max(sample_tree_prior(rng, ds, hp).tree.n_leaves() for _ in range(200)) <= 2

    def test_single_point(self):
        ds = Dataset(np.array([[0.3, 0.4]]), np.zeros(1))
        draw = sample_tree_prior(np.random.default_rng(5), ds, BartHyperParams())
        assert draw.tree.n_leaves() == 1 and not draw.truncated

    def test_stage_cap_flags_truncation(self, ds):
        hp = BartHyperParams(alpha_s=0.999999, beta_s=0.0)
        draw = sample_tree_prior(np.random.default_rng(6), ds, hp, max_stages=3)
        assert draw.truncated and draw.stages == 3
        assert draw.tree.n_leaves() == 4

    def test_finalize_keeps_terminal_states(self):
        state = PartialTree({}, (), 1, {})
        assert finalize(state) is state

    @pytest.mark.parametrize("d,beta", [(2, 1.0), (3, 0.5), (4, 0.4)])
    def test_hypercube_leaf_count_near_two_to_d(self, d, beta):
        from pgbart.data import HypercubeSpec, gen_hypercube

        data = gen_hypercube(HypercubeSpec(d=d, seed=0)).train
        hp = BartHyperParams(m=1, alpha_s=0.95, beta_s=beta)
        rng = np.random.default_rng(7)
        leaves = [sample_tree_prior(rng, data, hp).tree.n_leaves() for _ in range(2000)]
        # the beta schedule is chosen so trees have about 2**D leaves
        assert 0.5 * 2**d < np.mean(leaves) < 2.0 * 2**d
