import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from touchloc.belief import ParticleBelief, reweight
from touchloc.experiment import episode_settings, make_scene, setup_seed, truth_pose
from touchloc.metrics import InformationGainMetric, Metric, PruningMetric
from touchloc.policy import (
    EPISODE_COLUMNS,
    EpisodeSettings,
    FixedSelector,
    GreedySelector,
    PolicyState,
    RandomSelector,
    Round,
    TerminationRule,
    run_episode,
    select_fixed,
    select_greedy,
    select_lazy_greedy,
    select_random,
)
from touchloc.sensing import ObservationSet, WeightingModel


class ConstantMetric(Metric):
    """Gain of an action is the first entry of its table row."""

    name = "const"
    weighting = WeightingModel.hp(1.0)
    adaptive_submodular = True

    def gain(self, belief, a_phi, obsset):
        return float(a_phi[0])

    def report(self, belief, a_phi, obsset, action_id, cost):
        from touchloc.metrics import GainReport
        d = self.gain(belief, a_phi, obsset)
        return GainReport(action_id, d, cost, d / cost)


def const_round(deltas, costs):
    table = np.array(deltas, dtype=float)[:, None]
    return Round(ParticleBelief(np.zeros((1, 4)), [1.0]), table,
                 [ObservationSet(np.array([0.0]))] * len(deltas), np.array(costs, dtype=float))


def random_round(r, n_actions, n_particles, weighting):
    table = r.uniform(0, 10, (n_actions, n_particles))
    table[r.random(table.shape) < 0.2] = np.inf
    b = ParticleBelief(np.zeros((n_particles, 4)), r.dirichlet(np.ones(n_particles)))
    return Round(b, table, [ObservationSet(np.arange(11.0))] * n_actions, r.uniform(1, 5, n_actions))


class TestGreedy:
    def test_cost_division(self):
        rep, n = select_greedy(const_round([0.5, 0.5], [10, 5]), ConstantMetric(), {0, 1})
        assert rep.action_id == 1 and rep.score == pytest.approx(0.1) and n == 2

    def test_all_zero_lowest_id(self):
        rep, _ = select_greedy(const_round([0, 0, 0], [1, 1, 1]), ConstantMetric(), {2, 1, 0})
        assert rep.action_id == 0 and rep.score == 0.0

    def test_separating_action(self):
        # action 0 splits the three hypotheses, action 1 sees them all at once
        table = np.array([[1.0, 2.0, np.inf], [5.0, 5.0, 5.0]])
        b = ParticleBelief(np.zeros((3, 4)), np.full(3, 1 / 3))
        rnd = Round(b, table, [ObservationSet(np.array([1.0, 2.0, 5.0]))] * 2, np.ones(2))
        rep, _ = select_greedy(rnd, PruningMetric(WeightingModel.hp(0.3)), {0, 1})
        assert rep.action_id == 0 and rep.delta == pytest.approx(2 / 3)

    def test_empty(self):
        with pytest.raises(ValueError):
            select_greedy(const_round([1], [1]), ConstantMetric(), set())
        with pytest.raises(ValueError):
            select_lazy_greedy(PolicyState(remaining=set()), const_round([1], [1]), ConstantMetric())


class TestLazy:
    def test_cold_start_evaluates_all(self):
        r = np.random.default_rng(0)
        rnd = random_round(r, 12, 20, WeightingModel.hp(1.0))
        state = PolicyState(remaining=set(range(12)))
        select_lazy_greedy(state, rnd, PruningMetric(WeightingModel.hp(1.0)))
        assert state.evaluations == [12]

    @given(st.integers(0, 2**32 - 1), st.sampled_from(["hp", "whp"]))
    def test_matches_greedy_on_fixed_particles(self, seed, kind):
        r = np.random.default_rng(seed)
        w = WeightingModel.hp(1.0) if kind == "hp" else WeightingModel.whp(0.7)
        metric = PruningMetric(w)
        rnd = random_round(r, int(r.integers(3, 20)), int(r.integers(3, 30)), w)
        n = len(rnd.costs)
        truth = int(r.integers(rnd.table.shape[1]))
        state = PolicyState(remaining=set(range(n)))
        for _ in range(min(n, 5)):
            naive, _ = select_greedy(rnd, metric, state.remaining)
            before = len(state.remaining)
            state.round += 1
            lazy = select_lazy_greedy(state, rnd, metric)
            assert lazy.action_id == naive.action_id
            assert state.evaluations[-1] <= before
            a = lazy.action_id
            state.remaining.discard(a)
            b = reweight(rnd.belief, rnd.table[a], rnd.table[a, truth], w)
            rnd = Round(b, rnd.table, rnd.obssets, rnd.costs)
            if not rnd.belief.weights.sum() > 0:
                break

    def test_ig_lazy_warns(self, caplog):
        GreedySelector(InformationGainMetric(WeightingModel.ig(0.5)), lazy=True)
        assert "heuristic" in caplog.text
        assert not GreedySelector(InformationGainMetric(WeightingModel.ig(0.5))).lazy


class TestSimpleSelectors:
    def test_random_reproducible_and_unique(self):
        a = [select_random(set(range(10)) - set(range(i)), np.random.default_rng(3)) for i in range(3)]
        b = [select_random(set(range(10)) - set(range(i)), np.random.default_rng(3)) for i in range(3)]
        assert a == b
        with pytest.raises(ValueError):
            select_random(set(), np.random.default_rng(0))

    def test_fixed(self):
        assert select_fixed([4, 2, 7], {4}) == 2
        assert select_fixed([4, 2], {4, 2}) is None


class TestTermination:
    def test_rules(self):
        assert TerminationRule.budget(5).done(5, 0.0, 0.0)
        assert not TerminationRule.budget(5).done(4, 0.0, 0.0)
        assert TerminationRule.mass_target(0.5).done(1, 0.5, 0.0)
        assert TerminationRule.entropy_target(-3).done(1, 0.0, -4)

    @pytest.mark.parametrize("args", [("budget", 1.5), ("budget", -1), ("mass", 0.0), ("mass", 1.5), ("xx", 1)])
    def test_invalid(self, args):
        with pytest.raises(ValueError):
            TerminationRule(*args)


@pytest.fixture(scope="module")
def episode_inputs(small_config):
    scene = make_scene(small_config)
    setup = setup_seed(small_config, 0, scene)
    return small_config, scene, setup


def episode(inputs, selector, termination, **settings):
    cfg, scene, setup = inputs
    s = episode_settings(cfg)
    s = EpisodeSettings(**{**s.__dict__, **settings})
    return run_episode(scene, truth_pose(cfg), setup.actions, setup.belief, selector, termination, s,
                       np.random.default_rng(0))


class TestEpisode:
    def test_budget_five(self, episode_inputs):
        ep = episode(episode_inputs, GreedySelector(PruningMetric(WeightingModel.hp(1.0))), TerminationRule.budget(5))
        assert [r.step for r in ep.rows] == list(range(6))
        assert len(ep.action_ids) == len(set(ep.action_ids)) == 5

    def test_invariants(self, episode_inputs):
        cfg, _, setup = episode_inputs
        ep = episode(episode_inputs, GreedySelector(PruningMetric(WeightingModel.whp(0.5))),
                     TerminationRule.budget(5))
        f = [r.f_psi for r in ep.rows]
        assert all(b >= a - 1e-12 for a, b in zip(f, f[1:]))
        assert ep.rows[-1].cumulative_cost_s == sum(setup.actions[a].cost for a in ep.action_ids)
        for r in ep.rows:
            assert r.f_psi == pytest.approx(1.0 - r.mass_remaining)
            assert r.cov_eig_sum >= 0

    def test_mass_target(self, episode_inputs):
        ep = episode(episode_inputs, GreedySelector(PruningMetric(WeightingModel.hp(1.0))),
                     TerminationRule.mass_target(0.9))
        k = len(ep.action_ids)
        assert ep.rows[-1].f_psi >= 0.9
        assert all(r.f_psi < 0.9 for r in ep.rows[:k])

    def test_human_three_then_stop(self, episode_inputs):
        cfg, _, setup = episode_inputs
        sel = FixedSelector(setup.actions.ids_of_kind("human"), WeightingModel.whp(0.5))
        ep = episode(episode_inputs, sel, TerminationRule.budget(5))
        assert ep.action_ids == [0, 1, 2]

    def test_noiseless_truth_survives(self, episode_inputs):
        cfg, scene, setup = episode_inputs
        truth = truth_pose(cfg)
        poses = np.vstack([setup.belief.poses[:-1], truth.as_array()])
        b = ParticleBelief(poses, setup.belief.weights)
        sel = GreedySelector(PruningMetric(WeightingModel.hp(1.0)))
        s = EpisodeSettings(noise_sigma=0.0, jitter=(0.0,) * 4, n_particles=len(b))
        # without resampling jitter the truth particle keeps positive weight at every step
        ep = run_episode(scene, truth, setup.actions, b, sel, TerminationRule.budget(5), s, np.random.default_rng(0))
        assert not ep.aborted
        assert all(r.mass_remaining > 0 for r in ep.rows)

    def test_annihilation_flagged(self, episode_inputs):
        cfg, scene, setup = episode_inputs
        far = ParticleBelief(setup.belief.poses + np.array([5.0, 0, 0, 0]), setup.belief.weights)
        sel = RandomSelector(np.random.default_rng(0), WeightingModel.hp(1.0))
        ep = run_episode(scene, truth_pose(cfg), setup.actions, far, sel, TerminationRule.budget(5),
                         EpisodeSettings(), np.random.default_rng(0))
        assert ep.aborted and ep.rows[-1].obs_kind == "annihilated"
        assert math.isnan(ep.rows[-1].cov_eig_sum)

    def test_csv(self, episode_inputs, tmp_path):
        ep = episode(episode_inputs, RandomSelector(np.random.default_rng(1), WeightingModel.whp(0.5)),
                     TerminationRule.budget(2), record_timing=False)
        ep.write_csv(tmp_path / "e.csv")
        lines = (tmp_path / "e.csv").read_text().splitlines()
        assert lines[0] == ",".join(EPISODE_COLUMNS)
        assert len(lines) == 4
        assert lines[1].startswith("0,,init,,")
