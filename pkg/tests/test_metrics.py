import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from touchloc.actions import Action
from touchloc.belief import ParticleBelief
from touchloc.geometry import Pose
from touchloc.metrics import (
    GainReport,
    InformationGainMetric,
    PruningMetric,
    UninformativeAction,
    bucket_probabilities,
    hp_gain,
    hp_report,
    ig_gain,
    ig_report,
    marginal_gain_hp,
    marginal_gain_ig,
    mass_after,
    observation_masses,
    observation_probability,
    weight_matrix,
    write_gain_reports,
)
from touchloc.sensing import ObservationSet, WeightingModel, weight

THREE = np.array([1.0, 2.0, np.inf])
OBS12 = ObservationSet(np.array([1.0, 2.0]))
HP03 = WeightingModel.hp(0.3)


class FixedScene:
    """Stands in for a Scene: every action yields the same contact times."""

    def __init__(self, times):
        self.times = np.asarray(times, dtype=float)

    def contact_times(self, action, poses):
        return self.times


ACT = Action(7, Pose(), (1.0, 0.0, 0.0), 1.0, 0.05, 5.0)


def belief(n, poses=None):
    return ParticleBelief(np.zeros((n, 4)) if poses is None else poses, np.full(n, 1 / n))


@st.composite
def instances(draw):
    seed = draw(st.integers(0, 2**32 - 1))
    r = np.random.default_rng(seed)
    n = int(r.integers(1, 25))
    w = r.random(n) * r.random()
    a = r.uniform(0, 10, n)
    a[r.random(n) < 0.2] = np.inf
    kind = draw(st.sampled_from(["hp", "whp"]))
    model = WeightingModel.hp(r.uniform(0.3, 2)) if kind == "hp" else WeightingModel.whp(r.uniform(0.3, 2))
    return w, a, ObservationSet(np.arange(11.0), int(r.integers(1, 4))), model


class TestMasses:
    def test_mass_after_contact(self):
        assert mass_after(belief(3), ACT, 1.0, HP03, FixedScene(THREE)) == pytest.approx(1 / 3)

    def test_mass_after_nocontact(self):
        assert mass_after(belief(3), ACT, math.inf, HP03, FixedScene(THREE)) == pytest.approx(1 / 3)

    def test_no_reduction(self):
        assert mass_after(belief(4), ACT, 2.0, HP03, FixedScene([2.0] * 4)) == pytest.approx(1.0)

    @given(instances())
    def test_strong_monotonicity(self, inst):
        w, a, obs, model = inst
        assert observation_masses(w, a, obs, model).max() <= w.sum() + 1e-12

    def test_weight_matrix_matches_weight(self):
        a = np.array([0.2, 3.0, np.inf])
        for model in (HP03, WeightingModel.whp(0.5), WeightingModel.ig(0.5)):
            m = weight_matrix(model, OBS12.values, a)
            assert np.array_equal(m, weight(model, OBS12.values[:, None], a[None, :]))


class TestProbabilities:
    def test_three_hypotheses(self):
        p = observation_probability(belief(3), ACT, OBS12, HP03, FixedScene(THREE))
        assert np.allclose(p, [1 / 3, 1 / 3, 1 / 3])

    def test_point_mass(self):
        p = observation_probability(belief(2), ACT, OBS12, HP03, FixedScene([2.0, 2.0]))
        assert np.allclose(p, [0, 1, 0])

    def test_nocontact_multiplicity(self):
        obs = ObservationSet(np.array([1.0, 2.0]), 3)
        p = observation_probability(belief(3), ACT, obs, HP03, FixedScene(THREE))
        assert np.allclose(p, [0.2, 0.2, 0.6])

    def test_uninformative(self):
        with pytest.raises(UninformativeAction, match="uninformative under discretization"):
            observation_probability(belief(2), ACT, OBS12, HP03, FixedScene([5.0, 6.0]))

    def test_hundred_random_sum_to_one(self):
        r = np.random.default_rng(0)
        for _ in range(100):
            n = int(r.integers(1, 20))
            m = observation_masses(r.random(n), r.uniform(0, 10, n), ObservationSet(np.arange(11.0)),
                                   WeightingModel.whp(1.0))
            assert bucket_probabilities(m, ObservationSet(np.arange(11.0))).sum() == pytest.approx(1.0)


class TestPruningGain:
    def test_three_hypotheses(self):
        rep = marginal_gain_hp(belief(3), ACT, OBS12, HP03, FixedScene(THREE))
        assert rep.delta == pytest.approx(2 / 3)
        assert rep.score == pytest.approx(rep.delta / rep.cost)
        assert rep.probabilities.sum() == pytest.approx(1.0)
        assert rep.action_id == 7 and rep.cost == pytest.approx(25.0)

    def test_single_particle(self):
        assert marginal_gain_hp(belief(1), ACT, OBS12, HP03, FixedScene([1.0])).delta == 0.0

    def test_identical_poses(self):
        assert marginal_gain_hp(belief(4), ACT, OBS12, HP03, FixedScene([2.0] * 4)).delta == 0.0

    def test_uninformative_is_zero(self):
        rep = hp_report(np.full(2, 0.5), np.array([5.0, 6.0]), OBS12, HP03, 0, 1.0)
        assert rep.delta == 0.0 and rep.score == 0.0

    def test_rejects_ig(self):
        with pytest.raises(ValueError):
            marginal_gain_hp(belief(1), ACT, OBS12, WeightingModel.ig(1.0), FixedScene([1.0]))
        with pytest.raises(ValueError):
            PruningMetric(WeightingModel.ig(1.0))

    @given(instances())
    def test_delta_in_range(self, inst):
        w, a, obs, model = inst
        d = hp_gain(w, a, obs, model)
        assert -1e-12 <= d <= w.sum() + 1e-12

    @given(instances(), st.floats(0.01, 100.0))
    def test_homogeneous(self, inst, c):
        w, a, obs, model = inst
        assert hp_gain(c * w, a, obs, model) == pytest.approx(c * hp_gain(w, a, obs, model), rel=1e-9, abs=1e-15)

    @given(instances(), st.integers(0, 2**32 - 1))
    def test_diminishing_under_any_shrink(self, inst, seed):
        # any elementwise shrink of the weights (a longer history) cannot raise the gain
        w, a, obs, model = inst
        shrink = np.random.default_rng(seed).random(len(w))
        assert hp_gain(w * shrink, a, obs, model) <= hp_gain(w, a, obs, model) + 1e-9

    def test_report_matches_gain(self):
        r = np.random.default_rng(3)
        w, a = r.random(30), r.uniform(0, 10, 30)
        obs = ObservationSet(np.arange(11.0))
        m = PruningMetric(WeightingModel.whp(0.5))
        b = ParticleBelief(np.zeros((30, 4)), w)
        assert m.report(b, a, obs, 0, 2.0).delta == pytest.approx(m.gain(b, a, obs))
        assert m.gain_bound(b) == pytest.approx(w.sum())

    def test_csv(self, tmp_path):
        write_gain_reports([GainReport(0, 0.5, 2.0, 0.25)], tmp_path / "g.csv")
        assert (tmp_path / "g.csv").read_text().splitlines() == ["action_id,delta,cost,score", "0,0.5,2.0,0.25"]


class TestInformationGain:
    IG = WeightingModel.ig(0.5)

    def test_identical_particles(self):
        b = ParticleBelief(np.tile([0.1, 0.2, 0.3, 0.0], (6, 1)), np.full(6, 1 / 6))
        rep = marginal_gain_ig(b, ACT, ObservationSet(np.arange(11.0)), self.IG, FixedScene([3.0] * 6))
        assert rep.delta == pytest.approx(0.0, abs=1e-9)

    def test_two_clusters(self):
        r = np.random.default_rng(0)
        poses = np.vstack([r.normal(-0.1, 0.01, (20, 4)), r.normal(0.1, 0.01, (20, 4))])
        times = np.r_[np.full(20, 2.0), np.full(20, 8.0)]
        b = ParticleBelief(poses, np.full(40, 1 / 40))
        rep = marginal_gain_ig(b, ACT, ObservationSet(np.arange(11.0)), 0.5, FixedScene(times))
        assert rep.delta > 0
        assert rep.probabilities.sum() == pytest.approx(1.0)

    def test_permutation_invariant(self):
        r = np.random.default_rng(1)
        poses, w, a = r.normal(size=(30, 4)), r.random(30), r.uniform(0, 10, 30)
        obs = ObservationSet(np.arange(11.0))
        perm = r.permutation(30)
        d1 = ig_gain(poses, w, a, obs, self.IG)
        d2 = ig_gain(poses[perm], w[perm], a[perm], obs, self.IG)
        assert d1 == pytest.approx(d2, rel=1e-9, abs=1e-12)

    def test_metric_wrapper(self):
        m = InformationGainMetric(self.IG)
        assert not m.adaptive_submodular and math.isinf(m.gain_bound(belief(2)))
        with pytest.raises(ValueError):
            InformationGainMetric(HP03)
        b = belief(2)
        assert m.gain(b, np.array([np.inf, np.inf]), ObservationSet(np.array([0.0]))) >= -1e-6

    @given(st.integers(0, 2**32 - 1))
    def test_nonnegative_when_outcomes_partition(self, seed):
        # each particle puts all its likelihood on one bucket, so the
        # posterior fits average back to the prior and logdet concavity applies
        r = np.random.default_rng(seed)
        n = int(r.integers(2, 40))
        poses, w = r.normal(size=(n, 4)), r.random(n) + 1e-3
        a = np.where(r.random(n) < 0.5, 3.0, np.inf)
        d = ig_gain(poses, w, a, ObservationSet(np.array([3.0])), self.IG)
        assert d >= -1e-9

    def test_negative_flagged(self, caplog):
        # two particles: a rank-one fit sitting on the regularizer floor
        poses = np.array([[-0.756, 0.222, -1.113, -0.404], [-0.193, -1.265, 1.1, 0.548]])
        rep = ig_report(poses, np.array([0.337, 0.716]), np.array([1.742, 1.607]),
                        ObservationSet(np.arange(11.0)), self.IG, 0, 1.0)
        assert rep.delta < -1e-6
        assert "negative information gain" in caplog.text
