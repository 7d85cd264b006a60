"""Observation models: weighting kernels, observation grids, simulated touches."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Literal

import numpy as np

from touchloc.geometry import NO_CONTACT, Pose, Scene

Kind = Literal["hp", "whp", "ig"]


@dataclass(frozen=True)
class WeightingModel:
    """Maps the gap between an observation and a predicted contact time to [0, 1].

    ``hp`` keeps everything within ``d_T`` seconds; ``whp`` is an unnormalized
    Gaussian of width ``sigma``; ``ig`` is the blurred likelihood used by the
    information-gain baseline, ``exp(-|o - a| / (2 sigma^2))`` unless
    ``squared`` selects ``exp(-|o - a|^2 / (2 sigma^2))``.  Weights strictly
    below ``cutoff`` are clamped to zero.

    NoContact agrees only with NoContact: weight 1 if both sides are
    NoContact, 0 if exactly one is.
    """

    kind: Kind
    d_T: float = 0.0
    sigma: float = 0.0
    squared: bool = False
    cutoff: float = 0.0

    def __post_init__(self):
        if self.kind not in ("hp", "whp", "ig"):
            raise ValueError(f"unknown weighting kind {self.kind!r}")
        if self.kind == "hp" and not self.d_T > 0:
            raise ValueError("d_T must be positive")
        if self.kind != "hp" and not self.sigma > 0:
            raise ValueError("sigma must be positive")

    @classmethod
    def hp(cls, d_T: float) -> WeightingModel:
        return cls("hp", d_T=d_T)

    @classmethod
    def whp(cls, sigma: float, cutoff: float = 0.0) -> WeightingModel:
        return cls("whp", sigma=sigma, cutoff=cutoff)

    @classmethod
    def ig(cls, sigma: float, squared: bool = False) -> WeightingModel:
        return cls("ig", sigma=sigma, squared=squared)


def weight(w: WeightingModel, o, a_phi) -> np.ndarray | float:
    """Elementwise weight of observation(s) ``o`` given predicted time(s) ``a_phi``."""
    o = np.asarray(o, dtype=float)
    a = np.asarray(a_phi, dtype=float)
    o_nc = np.isinf(o)
    a_nc = np.isinf(a)
    with np.errstate(invalid="ignore"):
        gap = np.abs(o - a)
    if w.kind == "hp":
        out = (gap <= w.d_T).astype(float)
    elif w.kind == "whp":
        out = np.exp(-(gap * gap) / (2.0 * w.sigma**2))
    elif w.squared:
        out = np.exp(-(gap * gap) / (2.0 * w.sigma**2))
    else:
        out = np.exp(-gap / (2.0 * w.sigma**2))
    out = np.where(o_nc | a_nc, np.where(o_nc & a_nc, 1.0, 0.0), out)
    if w.cutoff > 0.0:
        out = np.where(out < w.cutoff, 0.0, out)
    return out if out.ndim else float(out)


def hp_weight_matrix(d_T: float, obs: np.ndarray, a_phi: np.ndarray) -> np.ndarray:
    """``weight`` specialised to HP for an (O,) x (N,) grid; plain comparisons, no exp."""
    fin = np.isfinite(a_phi)
    close = np.abs(obs[:, None] - np.where(fin, a_phi, 0.0)[None, :]) <= d_T
    o_fin = np.isfinite(obs)[:, None]
    return np.where(o_fin, close & fin[None, :], ~fin[None, :]).astype(float)


@dataclass(frozen=True, eq=False)
class ObservationSet:
    """Discrete contact times for one action plus one aggregated NoContact bucket.

    The NoContact bucket stands in for ``nocontact_multiplicity`` identical
    copies; it is always the last entry of ``values``.
    """

    times: np.ndarray
    nocontact_multiplicity: int = 1

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        if t.ndim != 1 or len(t) == 0:
            raise ValueError("need at least one contact time")
        if np.any(np.diff(t) <= 0):
            raise ValueError("times must be strictly increasing")
        if self.nocontact_multiplicity < 1:
            raise ValueError("multiplicity must be >= 1")
        t.flags.writeable = False
        object.__setattr__(self, "times", t)

    @property
    def values(self) -> np.ndarray:
        return np.append(self.times, NO_CONTACT)

    @property
    def multiplicity(self) -> np.ndarray:
        m = np.ones(len(self.times) + 1)
        m[-1] = self.nocontact_multiplicity
        return m

    def __len__(self) -> int:
        return len(self.times) + 1


def discretize_observations(action, spacing: float, K: int = 1) -> ObservationSet:
    """Times 0, spacing, 2*spacing, ... up to the action's duration."""
    if spacing <= 0:
        raise ValueError("spacing must be positive")
    duration = action.length / action.speed
    n = int(np.floor(duration / spacing + 1e-9)) + 1
    return ObservationSet(spacing * np.arange(n), K)


def simulate_observation(action, truth: Pose, scene: Scene, noise_sigma: float,
                         rng: np.random.Generator) -> float:
    """Noisy contact time against the ground-truth pose.

    Noise is a Gaussian truncated to [0, duration] by rejection.
    """
    a_true = float(scene.contact_times(action, truth.as_array()[None, :])[0])
    if np.isinf(a_true) or noise_sigma <= 0:
        return a_true
    duration = action.length / action.speed
    while True:
        o = a_true + noise_sigma * rng.standard_normal()
        if 0.0 <= o <= duration:
            return float(o)
