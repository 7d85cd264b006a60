"""Exact reference computations on tiny instances.

The pruning objective can be read as a noise-free problem over weighted
"noisy copies" of each hypothesis: one copy per (hypothesis, observation per
action) combination, with probability ``p(phi) * prod_a w / kappa_a(phi)``.
This module builds that problem explicitly, evaluates the objective by
enumeration, searches optimal adaptive policies exhaustively, and checks the
greedy cost bounds.  None of it is fast; all of it is meant to be obviously
correct and independent of the vectorized code in ``metrics``.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from touchloc.belief import History, ParticleBelief, mass_from_history
from touchloc.metrics import bucket_probabilities, observation_masses
from touchloc.sensing import ObservationSet, WeightingModel, weight

MAX_HYPOTHESES = 8
MAX_ACTIONS = 5
MAX_OBSERVATIONS = 6
TOL = 1e-12


class OracleLimitError(ValueError):
    """Instance too large for exhaustive enumeration."""


@dataclass(frozen=True, eq=False)
class TinyInstance:
    """Hypothesis priors, a contact-time table and everything needed to split copies."""

    priors: np.ndarray  # (H,)
    table: np.ndarray  # (A, H) contact times, inf for NoContact
    obssets: tuple[ObservationSet, ...]
    weighting: WeightingModel
    costs: np.ndarray  # (A,)

    @property
    def n_hypotheses(self) -> int:
        return len(self.priors)

    @property
    def n_actions(self) -> int:
        return len(self.obssets)


def snap_to_grid(times: np.ndarray, grid: np.ndarray) -> np.ndarray:
    """Move each finite time to the nearest grid time (lower one on ties)."""
    out = np.array(times, dtype=float)
    fin = np.isfinite(out)
    if fin.any():
        idx = np.abs(out[fin, None] - grid[None, :]).argmin(axis=1)
        out[fin] = grid[idx]
    return out


@dataclass(frozen=True, eq=False)
class NoisyProblem:
    """The noise-free problem behind the pruning objective.

    Copy ``c`` descends from hypothesis ``origin[c]``, has probability
    ``prob[c]`` and answers action ``a`` with outcome ``obs_index[c, a]``.
    Outcomes ``0..T_a-1`` are the grid times of action ``a``; outcomes
    ``T_a..T_a+K-1`` are the ``K`` distinct NoContact copies.
    """

    instance: TinyInstance
    table: np.ndarray  # snapped contact times (A, H)
    origin: np.ndarray  # (C,)
    obs_index: np.ndarray  # (C, A)
    prob: np.ndarray  # (C,)
    kappa: np.ndarray  # (A, H) total kept weight per (action, hypothesis)
    counts: np.ndarray  # (A, H) number of copies per (action, hypothesis)
    outcome_values: tuple[np.ndarray, ...]  # per action: observation value of each outcome
    outcome_weights: tuple[np.ndarray, ...]  # per action: (n_outcomes, H) kept weights

    @property
    def n_copies(self) -> int:
        return len(self.prob)

    @property
    def priors(self) -> np.ndarray:
        return self.instance.priors

    @property
    def weighting(self) -> WeightingModel:
        return self.instance.weighting

    @property
    def costs(self) -> np.ndarray:
        return self.instance.costs

    def observation(self, a: int, outcome: int) -> float:
        return float(self.outcome_values[a][outcome])

    def counts_equal(self) -> bool:
        return bool(np.all(self.counts == self.counts[:, :1]))

    def kappa_spread(self) -> float:
        """Largest difference of kappa across hypotheses, over actions."""
        return float((self.kappa.max(axis=1) - self.kappa.min(axis=1)).max())


def build_noisy_problem(instance: TinyInstance, *, require_equal_counts: bool = True) -> NoisyProblem:
    """Split every hypothesis into noisy copies, one action at a time.

    Contact times are snapped to the observation grid first.  Outcomes whose
    weight is zero (HP outside ``d_T``, or below the weighting's ``cutoff``)
    get no copy.  A NoContact hypothesis gets ``K`` copies of weight one.
    """
    H, A = instance.n_hypotheses, instance.n_actions
    if H > MAX_HYPOTHESES or A > MAX_ACTIONS or any(len(o.times) > MAX_OBSERVATIONS for o in instance.obssets):
        raise OracleLimitError(
            f"instance exceeds oracle size limits ({MAX_HYPOTHESES} hypotheses, {MAX_ACTIONS} actions, "
            f"{MAX_OBSERVATIONS} observations per action)")
    priors = np.asarray(instance.priors, dtype=float)
    if np.any(priors <= 0):
        raise ValueError("priors must be positive")
    w = instance.weighting
    table = np.vstack([snap_to_grid(instance.table[a], instance.obssets[a].times) for a in range(A)])

    values, weights = [], []
    kappa = np.zeros((A, H))
    counts = np.zeros((A, H), dtype=int)
    for a, obsset in enumerate(instance.obssets):
        K = obsset.nocontact_multiplicity
        vals = np.concatenate([obsset.times, np.full(K, np.inf)])
        wt = np.asarray(weight(w, vals[:, None], table[a][None, :]), dtype=float)
        values.append(vals)
        weights.append(wt)
        kappa[a] = wt.sum(axis=0)
        counts[a] = (wt > 0).sum(axis=0)

    # recursive split: copies of Omega_{a_1}, then each of those through Omega_{a_2}, ...
    copies = [(h, (), float(priors[h])) for h in range(H)]
    for a in range(A):
        nxt = []
        for h, outcomes, p in copies:
            for k in np.flatnonzero(weights[a][:, h] > 0):
                nxt.append((h, outcomes + (int(k),), p * weights[a][k, h] / kappa[a, h]))
        copies = nxt

    origin = np.array([c[0] for c in copies], dtype=int)
    obs_index = np.array([c[1] for c in copies], dtype=int).reshape(len(copies), A)
    prob = np.array([c[2] for c in copies])
    problem = NoisyProblem(instance, table, origin, obs_index, prob, kappa, counts,
                           tuple(values), tuple(weights))
    _validate(problem, require_equal_counts)
    return problem


def _validate(problem: NoisyProblem, require_equal_counts: bool) -> None:
    sums = np.bincount(problem.origin, weights=problem.prob, minlength=len(problem.priors))
    if np.max(np.abs(sums - problem.priors)) > 1e-12:
        raise AssertionError("copy probabilities do not sum to their origin's prior")
    if problem.obs_index.shape != (problem.n_copies, problem.instance.n_actions):
        raise AssertionError("every copy needs exactly one outcome per action")
    if require_equal_counts and not problem.counts_equal():
        raise ValueError("copy counts differ across hypotheses for some action")


def _history(problem: NoisyProblem, subset, copy: int) -> list[tuple[int, int]]:
    return [(a, int(problem.obs_index[copy, a])) for a in subset]


def f_explicit(subset, copy: int, problem: NoisyProblem) -> float:
    """Objective of the noise-free problem, evaluated literally.

    ``1 - sum_phi [prod_{a in A} p(phi) / max p(Omega_a(phi))]
    * [sum of p(copy') over copies of phi that agree with ``copy`` on A]``.
    """
    subset = list(subset)
    if not subset:
        return 0.0
    hist = problem.obs_index[copy, subset]
    agree = np.all(problem.obs_index[:, subset] == hist, axis=1)
    total = 0.0
    for h, p in enumerate(problem.priors):
        factor = 1.0
        for a in subset:
            # the largest single-action copy of phi under a
            max_copy = p * problem.outcome_weights[a][:, h].max() / problem.kappa[a, h]
            factor *= p / max_copy
        total += factor * problem.prob[agree & (problem.origin == h)].sum()
    return 1.0 - total


def efficient_mass(problem: NoisyProblem, history) -> np.ndarray:
    """Per-hypothesis weights p_psi(phi) on the original hypotheses (no copies)."""
    w = problem.priors.copy()
    for a, k in history:
        w = w * weight(problem.weighting, problem.observation(a, k), problem.table[a])
    return w


def explicit_observation_probabilities(problem: NoisyProblem, history, a: int) -> np.ndarray:
    """p(o | psi) by summing consistent copies; NoContact copies share one bucket."""
    mask = np.ones(problem.n_copies, dtype=bool)
    for b, k in history:
        mask &= problem.obs_index[:, b] == k
    n_times = len(problem.instance.obssets[a].times)
    out = np.zeros(n_times + 1)
    np.add.at(out, np.minimum(problem.obs_index[mask, a], n_times), problem.prob[mask])
    s = out.sum()
    return out / s


@dataclass
class EquivalenceReport:
    f_discrepancy: float
    probability_discrepancy: float
    kappa_spread: float
    n_histories: int
    n_copies: int


def check_equivalence(problem: NoisyProblem, *, probabilities: bool = True) -> EquivalenceReport:
    """Compare the explicit copy-based quantities with the efficient mass-based ones.

    For every action subset and every copy, ``f_explicit`` is compared with
    ``1 - M_psi``; for every held-out action, the copy-summed observation
    distribution is compared with ``m / sum m`` from ``metrics``.
    """
    A = problem.instance.n_actions
    H = len(problem.priors)
    prior = ParticleBelief(np.zeros((H, 4)), problem.priors)
    f_err = 0.0
    p_err = 0.0
    n_hist = 0
    for r in range(A + 1):
        for subset in itertools.combinations(range(A), r):
            rows = problem.obs_index[:, list(subset)]
            _, reps = np.unique(rows, axis=0, return_index=True)
            for c in reps:
                hist = _history(problem, subset, int(c))
                n_hist += 1
                steps = History(tuple((a, problem.observation(a, k)) for a, k in hist))
                m = mass_from_history(prior, steps, problem.table, problem.weighting)
                f_err = max(f_err, abs(f_explicit(subset, int(c), problem) - (1.0 - m)))
                w = efficient_mass(problem, hist)
                if not probabilities:
                    continue
                for a in range(A):
                    if a in subset:
                        continue
                    obsset = problem.instance.obssets[a]
                    eff = bucket_probabilities(
                        observation_masses(w, problem.table[a], obsset, problem.weighting), obsset)
                    exp = explicit_observation_probabilities(problem, hist, a)
                    p_err = max(p_err, float(np.max(np.abs(eff - exp))))
    return EquivalenceReport(f_err, p_err, problem.kappa_spread(), n_hist, problem.n_copies)


# ---------------------------------------------------------------------------
# exhaustive policy search on the noise-free problem


class _Search:
    """Shared state for optimal and greedy policy evaluation on one problem."""

    def __init__(self, problem: NoisyProblem, Q: float, costs=None):
        self.p = problem
        self.Q = Q
        self.costs = np.asarray(problem.costs if costs is None else costs, dtype=float)
        self.A = problem.instance.n_actions
        # weight of hypothesis h for outcome k of action a
        self.W = problem.outcome_weights

    def f(self, mass_vec: np.ndarray) -> float:
        return 1.0 - float(mass_vec.sum())

    def split(self, surv: np.ndarray, a: int):
        """Groups of surviving copies by their outcome under ``a``."""
        ks = self.p.obs_index[surv, a]
        for k in np.unique(ks):
            yield int(k), surv[ks == k]

    def child_mass(self, mass_vec: np.ndarray, a: int, k: int) -> np.ndarray:
        return mass_vec * self.W[a][k]


def full_action_values(problem: NoisyProblem) -> np.ndarray:
    """f(all actions, copy) for every copy."""
    out = np.empty(problem.n_copies)
    everything = list(range(problem.instance.n_actions))
    rows = problem.obs_index
    _, reps, inv = np.unique(rows, axis=0, return_index=True, return_inverse=True)
    vals = np.array([1.0 - efficient_mass(problem, _history(problem, everything, int(c))).sum() for c in reps])
    out[:] = vals[np.ravel(inv)]
    return out


def optimal_policy_bruteforce(problem: NoisyProblem, Q: float, kind: str = "avg", costs=None) -> float:
    """Cheapest adaptive policy reaching ``f >= Q`` on every copy, by exhaustive search.

    ``kind`` is ``avg`` (expected cost over copies) or ``wc`` (worst case).
    States are memoized on (surviving copies, remaining actions).
    """
    if kind not in ("avg", "wc"):
        raise ValueError("kind must be 'avg' or 'wc'")
    if Q <= 0:
        return 0.0
    if Q > full_action_values(problem).min() + TOL:
        raise ValueError("Q exceeds f(𝔸)")
    s = _Search(problem, Q, costs)
    memo: dict = {}

    def value(surv: np.ndarray, remaining: int, mass_vec: np.ndarray) -> float:
        if s.f(mass_vec) >= Q - TOL:
            return 0.0
        key = (surv.tobytes(), remaining)
        if key in memo:
            return memo[key]
        best = math.inf
        total = problem.prob[surv].sum()
        for a in range(s.A):
            if not remaining >> a & 1:
                continue
            rest = remaining & ~(1 << a)
            acc = 0.0
            for k, group in s.split(surv, a):
                v = value(group, rest, s.child_mass(mass_vec, a, k))
                if kind == "avg":
                    acc += problem.prob[group].sum() / total * v
                else:
                    acc = max(acc, v)
                if s.costs[a] + acc >= best:
                    break
            best = min(best, s.costs[a] + acc)
        memo[key] = best
        return best

    return value(np.arange(problem.n_copies), (1 << s.A) - 1, problem.priors.copy())


def greedy_policy_cost(problem: NoisyProblem, Q: float, costs=None) -> tuple[float, float]:
    """(average, worst-case) cost of the greedy policy on the truncated objective.

    At each node the greedy policy maximizes
    ``E[min(Q, f(psi + o)) - min(Q, f(psi))] / c(a)`` with ``p(o | psi)`` taken
    from the surviving copies; ties go to the lowest action id.
    """
    if Q <= 0:
        return 0.0, 0.0
    s = _Search(problem, Q, costs)

    def node(surv: np.ndarray, remaining: int, mass_vec: np.ndarray) -> tuple[float, float]:
        f_now = min(Q, s.f(mass_vec))
        if f_now >= Q - TOL:
            return 0.0, 0.0
        total = problem.prob[surv].sum()
        best_a, best_score = -1, -math.inf
        for a in range(s.A):
            if not remaining >> a & 1:
                continue
            gain = 0.0
            for k, group in s.split(surv, a):
                f_next = min(Q, s.f(s.child_mass(mass_vec, a, k)))
                gain += problem.prob[group].sum() / total * (f_next - f_now)
            score = gain / s.costs[a]
            if best_a < 0 or score > best_score + 1e-12 * abs(best_score) + 1e-18:
                best_a, best_score = a, score
        if best_a < 0:
            raise ValueError("Q exceeds f(𝔸)")
        a = best_a
        rest = remaining & ~(1 << a)
        avg, wc = 0.0, 0.0
        for k, group in s.split(surv, a):
            ga, gw = node(group, rest, s.child_mass(mass_vec, a, k))
            avg += problem.prob[group].sum() / total * ga
            wc = max(wc, gw)
        return s.costs[a] + avg, s.costs[a] + wc

    return node(np.arange(problem.n_copies), (1 << s.A) - 1, problem.priors.copy())


def reachable_objective_values(problem: NoisyProblem) -> np.ndarray:
    """f(psi) for every partial realization psi of the noise-free problem."""
    A = problem.instance.n_actions
    vals = []
    for r in range(A + 1):
        for subset in itertools.combinations(range(A), r):
            rows = problem.obs_index[:, list(subset)]
            _, reps = np.unique(rows, axis=0, return_index=True)
            for c in reps:
                vals.append(1.0 - efficient_mass(problem, _history(problem, subset, int(c))).sum())
    return np.array(vals)


def eta_gap(problem: NoisyProblem, Q: float) -> float:
    """Largest eta with ``f(psi) > Q - eta  =>  f(psi) >= Q`` over all psi."""
    vals = reachable_objective_values(problem)
    below = vals[vals < Q - TOL]
    return float(Q - below.max())


@dataclass
class BoundCertificate:
    kind: str  # avg | wc
    greedy_cost: float
    optimal_cost: float
    Q: float
    eta: float
    delta: float
    bound: float
    passed: bool = field(init=False)

    def __post_init__(self):
        self.passed = bool(self.greedy_cost <= self.bound * (1 + 1e-12) + 1e-12)

    def row(self) -> list:
        nums = (self.Q, self.eta, self.delta, self.greedy_cost, self.optimal_cost, self.bound)
        return [self.kind, *(repr(float(v)) for v in nums), str(self.passed)]


CERTIFICATE_COLUMNS = ["kind", "Q", "eta", "delta", "greedy", "optimal", "bound", "pass"]


def certify_bounds(problem: NoisyProblem, Q: float, greedy: tuple[float, float] | None = None,
                   costs=None) -> tuple[BoundCertificate, BoundCertificate]:
    """Check both greedy cost bounds against exhaustively optimal policies.

    ``eta`` is the exact gap below ``Q`` among reachable objective values and
    ``delta`` the smallest copy probability.
    """
    if greedy is None:
        greedy = greedy_policy_cost(problem, Q, costs)
    eta = eta_gap(problem, Q)
    delta = float(problem.prob.min())
    opt_avg = optimal_policy_bruteforce(problem, Q, "avg", costs)
    opt_wc = optimal_policy_bruteforce(problem, Q, "wc", costs)
    avg = BoundCertificate("avg", greedy[0], opt_avg, Q, eta, delta, opt_avg * (math.log(Q / eta) + 1))
    wc = BoundCertificate("wc", greedy[1], opt_wc, Q, eta, delta, opt_wc * (math.log(Q / (delta * eta)) + 1))
    return avg, wc


# ---------------------------------------------------------------------------
# random instances


def _grid(n: int, spacing: float = 1.0) -> np.ndarray:
    return spacing * np.arange(n)


def random_tiny_instance(rng: np.random.Generator, kind: str = "hp", *, max_hypotheses: int = 6,
                         max_actions: int = 4, n_times: int = 5) -> TinyInstance:
    """Instance whose copy weights sum to the same kappa for every (action, hypothesis).

    HP uses spacing 1 with ``d_T`` of 0.5 (kappa 1) or 1.5 (kappa 3) and
    ``K = kappa`` NoContact copies.  WHP uses sigma 1 with a cutoff that keeps
    exactly the three nearest grid times, and every hypothesis makes contact
    (a fractional kappa cannot be matched by whole NoContact copies).  Contact
    times stay away from the grid ends so no window is clipped.
    """
    H = int(rng.integers(2, max_hypotheses + 1))
    A = int(rng.integers(1, max_actions + 1))
    grid = _grid(n_times)
    centers = rng.integers(1, n_times - 1, size=(A, H)).astype(float)
    table = centers + rng.uniform(-0.45, 0.45, size=(A, H))
    if kind == "hp":
        d_T = float(rng.choice([0.5, 1.5]))
        K = 1 if d_T < 1 else 3
        w = WeightingModel.hp(d_T)
        table[rng.random((A, H)) < 0.25] = np.inf
    elif kind == "whp":
        w = WeightingModel.whp(1.0, cutoff=0.3)
        K = 1
    else:
        raise ValueError("kind must be 'hp' or 'whp'")
    priors = rng.dirichlet(np.ones(H))
    costs = rng.uniform(1.0, 5.0, size=A)
    return TinyInstance(priors, table, tuple(ObservationSet(grid, K) for _ in range(A)), w, costs)


def random_target(problem: NoisyProblem, rng: np.random.Generator) -> float | None:
    """A random Q in (0, min_copy f(all actions)], or None if nothing is removable."""
    top = full_action_values(problem).min()
    if top <= 1e-9:
        return None
    return float(top * rng.uniform(0.3, 1.0))


def two_hypothesis_example() -> tuple[NoisyProblem, float]:
    """Two equal hypotheses, one action that tells them apart (cost 1), Q = 1/2."""
    inst = TinyInstance(np.array([0.5, 0.5]), np.array([[1.0, 3.0]]),
                        (ObservationSet(_grid(5), 1),), WeightingModel.hp(0.5), np.array([1.0]))
    return build_noisy_problem(inst), 0.5
