"""Expected marginal gains for hypothesis pruning (HP/WHP) and information gain (IG).

Everything here works on a row of the contact table: ``a_phi[i]`` is the
contact time of one action for particle ``i`` (``inf`` for NoContact).
"""
from __future__ import annotations

import csv
import logging
from dataclasses import dataclass

import numpy as np

from touchloc.belief import DEFAULT_REGULARIZER, BeliefAnnihilated, ParticleBelief
from touchloc.sensing import ObservationSet, WeightingModel, hp_weight_matrix, weight

log = logging.getLogger(__name__)

_LOG_2PIE = np.log(2.0 * np.pi * np.e)
NEGATIVE_IG_FLAG = -1e-6


class UninformativeAction(ValueError):
    """No discretized observation keeps any mass, so p(o | psi) is undefined."""

    def __init__(self, msg: str = "action uninformative under discretization"):
        super().__init__(msg)


@dataclass
class GainReport:
    action_id: int
    delta: float
    cost: float
    score: float
    observations: np.ndarray | None = None
    probabilities: np.ndarray | None = None
    after: np.ndarray | None = None  # mass left (HP/WHP) or entropy (IG) per observation

    def row(self) -> list:
        return [self.action_id, repr(self.delta), repr(self.cost), repr(self.score)]


def write_gain_reports(reports, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["action_id", "delta", "cost", "score"])
        for r in reports:
            w.writerow(r.row())


def weight_matrix(w: WeightingModel, obs_values: np.ndarray, a_phi: np.ndarray) -> np.ndarray:
    """(O, N) matrix of omega_o(a_phi)."""
    if w.kind == "hp":
        return hp_weight_matrix(w.d_T, obs_values, a_phi)
    return weight(w, obs_values[:, None], a_phi[None, :])


def observation_masses(weights: np.ndarray, a_phi: np.ndarray, obsset: ObservationSet,
                       w: WeightingModel) -> np.ndarray:
    """m_{psi,a,o} for every bucket of ``obsset``."""
    return weight_matrix(w, obsset.values, a_phi) @ weights


def bucket_probabilities(m: np.ndarray, obsset: ObservationSet) -> np.ndarray:
    """Normalize bucket masses; the NoContact bucket counts ``K`` times."""
    q = obsset.multiplicity * m
    s = q.sum()
    if not s > 0:
        raise UninformativeAction()
    return q / s


def hp_gain(weights: np.ndarray, a_phi: np.ndarray, obsset: ObservationSet, w: WeightingModel) -> float:
    """Expected mass removed: sum_o p(o) (M - m_o)."""
    m = observation_masses(weights, a_phi, obsset, w)
    q = obsset.multiplicity * m
    s = q.sum()
    if not s > 0:
        return 0.0
    return float(q @ (weights.sum() - m) / s)


def _fit_entropies(x: np.ndarray, qn: np.ndarray, regularizer: float) -> np.ndarray:
    """Gaussian-fit entropy for each row of normalized weights ``qn`` over centered poses ``x``.

    Prior and posteriors share this path so identical weightings give
    identical entropies even when the covariance is rank deficient.
    """
    n, n_dims = x.shape
    means = qn @ x
    second = (qn @ (x[:, :, None] * x[:, None, :]).reshape(n, -1)).reshape(-1, n_dims, n_dims)
    covs = second - means[:, :, None] * means[:, None, :]
    covs = 0.5 * (covs + covs.transpose(0, 2, 1))
    sign, logdet = np.linalg.slogdet(covs + regularizer * np.eye(n_dims))
    return np.where(sign > 0, 0.5 * (n_dims * _LOG_2PIE + logdet), -np.inf)


def ig_gain(poses: np.ndarray, weights: np.ndarray, a_phi: np.ndarray, obsset: ObservationSet,
            w: WeightingModel, regularizer: float = DEFAULT_REGULARIZER,
            detail: bool = False):
    """Entropy of the current Gaussian fit minus its expectation after one observation.

    Observations whose reweighted mass is zero are skipped and the remaining
    probabilities renormalized.
    """
    total = weights.sum()
    if not total > 0:
        raise BeliefAnnihilated()
    x = poses - (weights / total) @ poses
    h_now = _fit_entropies(x, (weights / total)[None, :], regularizer)[0]
    lik = weight_matrix(w, obsset.values, a_phi)
    q = lik * weights  # (O, N)
    s = q.sum(axis=1)
    ok = s > 0
    if not ok.any():
        raise UninformativeAction()
    pr = obsset.multiplicity[ok] * s[ok]
    pr = pr / pr.sum()
    qn = q[ok] / s[ok, None]
    h_after = _fit_entropies(x, qn, regularizer)
    delta = float(h_now - pr @ h_after)
    if detail:
        full_p = np.zeros(len(s))
        full_p[ok] = pr
        full_h = np.full(len(s), np.nan)
        full_h[ok] = h_after
        return delta, full_p, full_h
    return delta


def mass_after(belief: ParticleBelief, action, o: float, w: WeightingModel, scene) -> float:
    a_phi = scene.contact_times(action, belief.poses)
    return float(belief.weights @ weight(w, o, a_phi))


def observation_probability(belief: ParticleBelief, action, obsset: ObservationSet,
                            w: WeightingModel, scene) -> np.ndarray:
    a_phi = scene.contact_times(action, belief.poses)
    return bucket_probabilities(observation_masses(belief.weights, a_phi, obsset, w), obsset)


def hp_report(weights: np.ndarray, a_phi: np.ndarray, obsset: ObservationSet, w: WeightingModel,
              action_id: int, cost: float) -> GainReport:
    m = observation_masses(weights, a_phi, obsset, w)
    try:
        p = bucket_probabilities(m, obsset)
    except UninformativeAction:
        return GainReport(action_id, 0.0, cost, 0.0, obsset.values, np.zeros(len(m)), m)
    delta = float(p @ (weights.sum() - m))
    return GainReport(action_id, delta, cost, delta / cost, obsset.values, p, m)


def ig_report(poses, weights, a_phi, obsset, w, action_id: int, cost: float,
              regularizer: float = DEFAULT_REGULARIZER) -> GainReport:
    try:
        delta, p, h = ig_gain(poses, weights, a_phi, obsset, w, regularizer, detail=True)
    except UninformativeAction:
        return GainReport(action_id, 0.0, cost, 0.0, obsset.values)
    if delta < NEGATIVE_IG_FLAG:
        log.warning("negative information gain %.3g for action %d", delta, action_id)
    return GainReport(action_id, delta, cost, delta / cost, obsset.values, p, h)


def marginal_gain_hp(belief: ParticleBelief, action, obsset: ObservationSet, w: WeightingModel,
                     scene) -> GainReport:
    if w.kind not in ("hp", "whp"):
        raise ValueError("hypothesis pruning needs an hp or whp weighting")
    a_phi = scene.contact_times(action, belief.poses)
    return hp_report(belief.weights, a_phi, obsset, w, action.id, action.cost)


def marginal_gain_ig(belief: ParticleBelief, action, obsset: ObservationSet, sigma, scene,
                     regularizer: float = DEFAULT_REGULARIZER) -> GainReport:
    w = sigma if isinstance(sigma, WeightingModel) else WeightingModel.ig(sigma)
    a_phi = scene.contact_times(action, belief.poses)
    return ig_report(belief.poses, belief.weights, a_phi, obsset, w, action.id, action.cost, regularizer)


class Metric:
    """A selection criterion evaluated on one contact-table row."""

    name: str
    weighting: WeightingModel
    adaptive_submodular: bool

    def gain(self, belief: ParticleBelief, a_phi: np.ndarray, obsset: ObservationSet) -> float:
        raise NotImplementedError

    def report(self, belief, a_phi, obsset, action_id, cost) -> GainReport:
        raise NotImplementedError

    def gain_bound(self, belief: ParticleBelief) -> float:
        """Upper bound on any action's gain under ``belief`` (no evaluation needed)."""
        return np.inf


class PruningMetric(Metric):
    adaptive_submodular = True

    def __init__(self, weighting: WeightingModel):
        if weighting.kind not in ("hp", "whp"):
            raise ValueError("hypothesis pruning needs an hp or whp weighting")
        self.weighting = weighting
        self.name = weighting.kind

    def gain(self, belief, a_phi, obsset):
        return hp_gain(belief.weights, a_phi, obsset, self.weighting)

    def report(self, belief, a_phi, obsset, action_id, cost):
        return hp_report(belief.weights, a_phi, obsset, self.weighting, action_id, cost)

    def gain_bound(self, belief):
        # every term M - m_o is at most M
        return float(belief.weights.sum())


class InformationGainMetric(Metric):
    name = "ig"
    adaptive_submodular = False

    def __init__(self, weighting: WeightingModel, regularizer: float = DEFAULT_REGULARIZER):
        if weighting.kind != "ig":
            raise ValueError("information gain needs an ig weighting")
        self.weighting = weighting
        self.regularizer = regularizer

    def gain(self, belief, a_phi, obsset):
        try:
            return ig_gain(belief.poses, belief.weights, a_phi, obsset, self.weighting, self.regularizer)
        except UninformativeAction:
            return 0.0

    def report(self, belief, a_phi, obsset, action_id, cost):
        return ig_report(belief.poses, belief.weights, a_phi, obsset, self.weighting,
                         action_id, cost, self.regularizer)
