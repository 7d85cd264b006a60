"""Weighted particle belief over object poses (x, y, z, theta).

Weights are non-normalized probability mass: they start summing to one and
only ever shrink, so ``total_mass`` is the remaining mass M and
``1 - total_mass`` the mass removed so far.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from touchloc.geometry import Pose, Scene
from touchloc.sensing import WeightingModel, weight

N_DIMS = 4
DEFAULT_REGULARIZER = 1e-12


class BeliefAnnihilated(ValueError):
    """Every particle has zero weight."""

    def __init__(self, msg: str = "belief annihilated"):
        super().__init__(msg)


class Particle(NamedTuple):
    pose: Pose
    weight: float


@dataclass(frozen=True, eq=False)
class ParticleBelief:
    poses: np.ndarray  # (N, 4); theta kept unwrapped
    weights: np.ndarray  # (N,)
    initial_mass: float = 1.0

    def __post_init__(self):
        p = np.array(self.poses, dtype=float).reshape(-1, N_DIMS)
        w = np.array(self.weights, dtype=float).reshape(-1)
        if len(p) == 0 or len(p) != len(w):
            raise ValueError("need one weight per particle and at least one particle")
        if np.any(w < 0):
            raise ValueError("weights must be non-negative")
        p.flags.writeable = False
        w.flags.writeable = False
        object.__setattr__(self, "poses", p)
        object.__setattr__(self, "weights", w)

    def __len__(self) -> int:
        return len(self.weights)

    def particles(self) -> list[Particle]:
        return [Particle(Pose.from_array(p), float(w)) for p, w in zip(self.poses, self.weights)]

    def with_weights(self, weights) -> ParticleBelief:
        return ParticleBelief(self.poses, weights, self.initial_mass)


@dataclass(frozen=True)
class History:
    """Ordered (action id, observation) pairs; each action appears at most once."""

    steps: tuple[tuple[int, float], ...] = ()

    def __post_init__(self):
        ids = [a for a, _ in self.steps]
        if len(set(ids)) != len(ids):
            raise ValueError("an action may appear at most once in a history")

    def append(self, action_id: int, obs: float) -> History:
        return History(self.steps + ((int(action_id), float(obs)),))

    @property
    def action_ids(self) -> list[int]:
        return [a for a, _ in self.steps]

    def __len__(self) -> int:
        return len(self.steps)


def init_belief(mean: Pose, cov_diag, n: int, rng) -> ParticleBelief:
    """``n`` i.i.d. draws from N(mean, diag(cov_diag)), each with weight 1/n."""
    var = np.asarray(cov_diag, dtype=float)
    if n <= 0 or var.shape != (N_DIMS,) or np.any(var <= 0):
        raise ValueError("need n > 0 and four positive variances")
    rng = np.random.default_rng(rng)
    mu = np.array([mean.x, mean.y, mean.z, mean.theta])
    poses = mu + rng.standard_normal((n, N_DIMS)) * np.sqrt(var)
    return ParticleBelief(poses, np.full(n, 1.0 / n), 1.0)


def reweight(belief: ParticleBelief, a_phi: np.ndarray, obs: float, w: WeightingModel) -> ParticleBelief:
    """Multiply each weight by omega_obs(a_phi) for precomputed contact times."""
    return belief.with_weights(belief.weights * weight(w, obs, a_phi))


def apply_weights(belief: ParticleBelief, action, obs: float, w: WeightingModel, scene: Scene) -> ParticleBelief:
    return reweight(belief, scene.contact_times(action, belief.poses), obs, w)


def total_mass(belief: ParticleBelief) -> float:
    return float(belief.weights.sum())


def weighted_mean_cov(poses: np.ndarray, weights: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    s = weights.sum()
    if not s > 0:
        raise BeliefAnnihilated()
    q = weights / s
    mu = q @ poses
    x = poses - mu
    return mu, (x * q[:, None]).T @ x


def weighted_covariance(belief: ParticleBelief) -> np.ndarray:
    """Population covariance of the poses under normalized weights."""
    cov = weighted_mean_cov(belief.poses, belief.weights)[1]
    return 0.5 * (cov + cov.T)


def gaussian_entropy(cov, regularizer: float = DEFAULT_REGULARIZER) -> float:
    """Entropy of N(., cov + regularizer*I): 0.5 * ln((2 pi e)^N det)."""
    cov = np.asarray(cov, dtype=float)
    n = cov.shape[0]
    sign, logdet = np.linalg.slogdet(cov + regularizer * np.eye(n))
    if sign <= 0:
        return -math.inf
    return 0.5 * (n * math.log(2.0 * math.pi * math.e) + logdet)


def cov_eig_sum(cov) -> float:
    """Sum of covariance eigenvalues (the trace, clipped at zero)."""
    return max(float(np.trace(cov)), 0.0)


def systematic_indices(weights: np.ndarray, n: int, rng: np.random.Generator) -> np.ndarray:
    """Low-variance resampling: one uniform offset, ``n`` evenly spaced pointers."""
    s = weights.sum()
    if not s > 0:
        raise BeliefAnnihilated()
    cum = np.cumsum(weights / s)
    cum[-1] = 1.0
    pointers = (rng.random() + np.arange(n)) / n
    return np.minimum(np.searchsorted(cum, pointers, side="right"), len(weights) - 1)


def resample(belief: ParticleBelief, n: int, jitter, rng) -> ParticleBelief:
    """Systematic resampling to ``n`` particles plus per-dimension Gaussian jitter.

    The new particles share the current total mass equally, so the mass
    track (and with it f = 1 - M) carries over unchanged.
    """
    rng = np.random.default_rng(rng)
    mass = total_mass(belief)
    idx = systematic_indices(belief.weights, n, rng)
    poses = belief.poses[idx] + rng.standard_normal((n, N_DIMS)) * np.asarray(jitter, dtype=float)
    return ParticleBelief(poses, np.full(n, mass / n), belief.initial_mass)


def mass_from_history(prior: ParticleBelief, history: History, table: np.ndarray, w: WeightingModel) -> float:
    """M_psi recomputed from scratch: prior weights times every recorded weight."""
    p = prior.weights.copy()
    for a, o in history.steps:
        p = p * weight(w, o, table[a])
    return float(p.sum())
