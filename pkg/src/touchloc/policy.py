"""Action selection (greedy, lazy-greedy, random, fixed) and the episode loop."""
from __future__ import annotations

import csv
import heapq
import logging
import time
from dataclasses import dataclass, field
from typing import Literal

import numpy as np

from touchloc.actions import ActionSet
from touchloc.belief import (
    BeliefAnnihilated,
    History,
    ParticleBelief,
    cov_eig_sum,
    gaussian_entropy,
    resample,
    reweight,
    total_mass,
    weighted_covariance,
)
from touchloc.geometry import Pose, Scene
from touchloc.metrics import GainReport, Metric
from touchloc.sensing import ObservationSet, WeightingModel, discretize_observations, simulate_observation

log = logging.getLogger(__name__)


def _tol(score: float) -> float:
    # scores closer than this are ties, broken by lowest action id
    return 1e-12 * abs(score) + 1e-18


@dataclass
class Round:
    """Everything a selector reads in one round: belief, contact table, obs grids, costs."""

    belief: ParticleBelief
    table: np.ndarray  # (|A|, N) contact times
    obssets: list[ObservationSet]
    costs: np.ndarray

    def report(self, metric: Metric, a: int) -> GainReport:
        return metric.report(self.belief, self.table[a], self.obssets[a], a, float(self.costs[a]))

    def score(self, metric: Metric, a: int) -> float:
        return metric.gain(self.belief, self.table[a], self.obssets[a]) / self.costs[a]


def select_greedy(rnd: Round, metric: Metric, remaining) -> tuple[GainReport, int]:
    """Evaluate every remaining action once; best delta/cost wins, lowest id on ties.

    Returns the chosen action's report and the number of evaluations.
    """
    ids = sorted(remaining)
    if not ids:
        raise ValueError("no actions left to select")
    scores = np.array([rnd.score(metric, a) for a in ids])
    best = scores.max()
    chosen = ids[int(np.flatnonzero(scores >= best - _tol(best))[0])]
    return rnd.report(metric, chosen), len(ids)


@dataclass
class PolicyState:
    """Bookkeeping for one episode, including the lazy-greedy queue.

    Queue entries are ``(-score, action id, round stamp)``; a stamp older
    than the current round marks a stale upper bound.
    """

    remaining: set[int]
    queue: list[tuple[float, int, int]] = field(default_factory=list)
    round: int = 0
    history: History = field(default_factory=History)
    cumulative_cost: float = 0.0
    mass_removed: float = 0.0
    evaluations: list[int] = field(default_factory=list)


def select_lazy_greedy(state: PolicyState, rnd: Round, metric: Metric) -> GainReport:
    """Lazy greedy: re-evaluate only stale entries that could still win.

    Picks the same action as ``select_greedy`` whenever stale scores upper
    bound current ones, which adaptive submodularity guarantees for HP/WHP.
    """
    if not state.remaining:
        raise ValueError("no actions left to select")
    r = state.round
    evals = 0
    if not state.queue:
        for a in sorted(state.remaining):
            state.queue.append((-rnd.score(metric, a), a, r))
            evals += 1
        heapq.heapify(state.queue)
    q = state.queue
    bound = metric.gain_bound(rnd.belief)
    if np.isfinite(bound):
        q[:] = [(max(neg, -bound / rnd.costs[a]), a, stamp) if stamp != r else (neg, a, stamp)
                for neg, a, stamp in q]
        heapq.heapify(q)
    while True:
        neg, a, stamp = q[0]
        if stamp != r:
            heapq.heapreplace(q, (-rnd.score(metric, a), a, r))
            evals += 1
            continue
        best = -neg
        floor = best - _tol(best)
        stale = [i for i, e in enumerate(q) if e[2] != r and -e[0] >= floor]
        if not stale:
            break
        for i in stale:
            a_i = q[i][1]
            q[i] = (-rnd.score(metric, a_i), a_i, r)
            evals += 1
        heapq.heapify(q)
    best = -q[0][0]
    floor = best - _tol(best)
    chosen = min(e[1] for e in q if e[2] == r and -e[0] >= floor)
    state.queue = [e for e in q if e[1] != chosen]
    heapq.heapify(state.queue)
    state.evaluations.append(evals)
    return rnd.report(metric, chosen)


def select_random(remaining, rng: np.random.Generator) -> int:
    ids = sorted(remaining)
    if not ids:
        raise ValueError("no actions left to select")
    return ids[int(rng.integers(len(ids)))]


def select_fixed(sequence, used) -> int | None:
    """Next id of ``sequence`` not yet used, or None once it is exhausted."""
    for a in sequence:
        if a not in used:
            return a
    return None


class Selector:
    name: str
    update: WeightingModel  # observation model used to reweight the belief

    def select(self, state: PolicyState, rnd: Round) -> tuple[int | None, GainReport | None]:
        raise NotImplementedError


class GreedySelector(Selector):
    def __init__(self, metric: Metric, lazy: bool | None = None):
        self.metric = metric
        self.name = metric.name
        self.update = metric.weighting
        self.lazy = metric.adaptive_submodular if lazy is None else lazy
        if self.lazy and not metric.adaptive_submodular:
            log.warning("lazy greedy with %s is a heuristic: the metric is not adaptive submodular",
                        metric.name)

    def select(self, state, rnd):
        if self.lazy:
            rep = select_lazy_greedy(state, rnd, self.metric)
        else:
            rep, n = select_greedy(rnd, self.metric, state.remaining)
            state.evaluations.append(n)
        return rep.action_id, rep


class RandomSelector(Selector):
    name = "random"

    def __init__(self, rng: np.random.Generator, update: WeightingModel):
        self.rng = rng
        self.update = update

    def select(self, state, rnd):
        return select_random(state.remaining, self.rng), None


class FixedSelector(Selector):
    def __init__(self, sequence, update: WeightingModel, name: str = "human"):
        self.sequence = list(sequence)
        self.update = update
        self.name = name

    def select(self, state, rnd):
        return select_fixed(self.sequence, set(state.history.action_ids)), None


@dataclass(frozen=True)
class TerminationRule:
    kind: Literal["budget", "mass", "entropy"] = "budget"
    value: float = 5

    def __post_init__(self):
        if self.kind == "budget" and not (self.value >= 0 and float(self.value).is_integer()):
            raise ValueError("budget must be a non-negative integer")
        if self.kind == "mass" and not 0 < self.value <= 1:
            raise ValueError("mass target Q must lie in (0, 1]")
        if self.kind not in ("budget", "mass", "entropy"):
            raise ValueError(f"unknown termination kind {self.kind!r}")

    @classmethod
    def budget(cls, n: int) -> TerminationRule:
        return cls("budget", n)

    @classmethod
    def mass_target(cls, q: float) -> TerminationRule:
        return cls("mass", q)

    @classmethod
    def entropy_target(cls, h: float) -> TerminationRule:
        return cls("entropy", h)

    def done(self, steps: int, f_psi: float, entropy: float) -> bool:
        if self.kind == "budget":
            return steps >= self.value
        if self.kind == "mass":
            return f_psi >= self.value
        return entropy <= self.value


@dataclass(frozen=True)
class EpisodeSettings:
    obs_spacing: float = 1.0
    nocontact_multiplicity: int = 1
    noise_sigma: float = 0.1
    jitter: tuple[float, float, float, float] = (0.0, 0.0, 0.0, 0.0)
    n_particles: int | None = None  # resample size; defaults to the initial count
    record_timing: bool = True
    regularizer: float = 1e-12
    max_steps: int = 1000


EPISODE_COLUMNS = ["step", "action_id", "obs_kind", "obs_time_s", "mass_remaining", "f_psi",
                   "entropy", "cov_eig_sum", "selection_ms", "cumulative_cost_s"]


@dataclass
class EpisodeRow:
    step: int
    action_id: int | None
    obs_kind: str  # init | contact | nocontact | annihilated
    obs_time_s: float | None
    mass_remaining: float
    f_psi: float
    entropy: float
    cov_eig_sum: float
    selection_ms: float | None
    cumulative_cost_s: float

    def cells(self) -> list[str]:
        def num(v):
            return "" if v is None else repr(float(v))
        return [str(self.step), "" if self.action_id is None else str(self.action_id), self.obs_kind,
                num(self.obs_time_s), num(self.mass_remaining), num(self.f_psi), num(self.entropy),
                num(self.cov_eig_sum), num(self.selection_ms), num(self.cumulative_cost_s)]


@dataclass
class EpisodeLog:
    scheme: str
    rows: list[EpisodeRow]
    evaluations: list[int]
    aborted: bool = False

    @property
    def action_ids(self) -> list[int]:
        return [r.action_id for r in self.rows if r.action_id is not None]

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(EPISODE_COLUMNS)
            for r in self.rows:
                w.writerow(r.cells())


def _summarize(belief: ParticleBelief, reg: float) -> tuple[float, float]:
    cov = weighted_covariance(belief)
    return gaussian_entropy(cov, reg), cov_eig_sum(cov)


def run_episode(scene: Scene, truth: Pose, actions: ActionSet, belief: ParticleBelief,
                selector: Selector, termination: TerminationRule, settings: EpisodeSettings,
                rng: np.random.Generator) -> EpisodeLog:
    """Select, observe, reweight, log, resample until ``termination`` fires.

    The particle weights double as the mass track: resampling keeps the
    total mass, so ``f_psi = 1 - total mass`` is never renormalized.
    Selection time covers gain evaluation and the choice only; the round's
    contact table is built beforehand.
    """
    obssets = [discretize_observations(a, settings.obs_spacing, settings.nocontact_multiplicity)
               for a in actions]
    costs = actions.costs
    n_particles = settings.n_particles or len(belief)
    state = PolicyState(remaining=set(range(len(actions))))
    h0, e0 = _summarize(belief, settings.regularizer)
    m0 = total_mass(belief)
    rows = [EpisodeRow(0, None, "init", None, m0, belief.initial_mass - m0, h0, e0,
                       None, 0.0)]
    aborted = False
    step = 0
    while state.remaining and step < settings.max_steps:
        if termination.done(step, rows[-1].f_psi, rows[-1].entropy):
            break
        rnd = Round(belief, scene.contact_table(actions, belief.poses), obssets, costs)
        t0 = time.perf_counter()
        a, _ = selector.select(state, rnd)
        sel_ms = (time.perf_counter() - t0) * 1e3
        if a is None:
            break
        step += 1
        state.round += 1
        state.remaining.discard(a)
        action = actions[a]
        obs = simulate_observation(action, truth, scene, settings.noise_sigma, rng)
        state.history = state.history.append(a, obs)
        state.cumulative_cost += action.cost
        before = total_mass(belief)
        belief = reweight(belief, rnd.table[a], obs, selector.update)
        mass = total_mass(belief)
        state.mass_removed += before - mass
        kind = "nocontact" if np.isinf(obs) else "contact"
        obs_cell = None if np.isinf(obs) else obs
        timing = sel_ms if settings.record_timing else None
        if not mass > 0:
            rows.append(EpisodeRow(step, a, "annihilated", obs_cell, 0.0, belief.initial_mass,
                                   float("nan"), float("nan"), timing, state.cumulative_cost))
            aborted = True
            log.warning("%s: belief annihilated at step %d", selector.name, step)
            break
        h, e = _summarize(belief, settings.regularizer)
        rows.append(EpisodeRow(step, a, kind, obs_cell, mass, belief.initial_mass - mass, h, e,
                               timing, state.cumulative_cost))
        try:
            belief = resample(belief, n_particles, settings.jitter, rng)
        except BeliefAnnihilated:
            aborted = True
            break
    return EpisodeLog(selector.name, rows, state.evaluations, aborted)
