"""Randomized property suite: the pruning guarantees, oracle agreement and belief bookkeeping.

Each check draws its own instances from a seeded stream and reports the
number of cases, the worst violation seen and a pass flag.
"""
from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from touchloc import oracle
from touchloc.belief import History, ParticleBelief, mass_from_history, resample, reweight, total_mass
from touchloc.metrics import PruningMetric, bucket_probabilities, hp_gain, observation_masses
from touchloc.policy import PolicyState, Round, select_greedy, select_lazy_greedy
from touchloc.rng import stream
from touchloc.sensing import ObservationSet, WeightingModel, weight

SUBMODULARITY_INSTANCES = 200
MONOTONICITY_TRIPLES = 10_000
ORACLE_INSTANCES = 50


@dataclass
class CheckResult:
    name: str
    count: int
    max_violation: float
    passed: bool
    seconds: float = 0.0

    def line(self) -> str:
        flag = "PASS" if self.passed else "FAIL"
        return (f"{flag}  {self.name:<36} n={self.count:<6} max violation={self.max_violation:.3e}"
                f"  ({self.seconds:.1f} s)")


@dataclass
class SuiteReport:
    seed: int
    results: list[CheckResult]

    @property
    def ok(self) -> bool:
        return all(r.passed for r in self.results)

    def text(self) -> str:
        lines = [f"property suite, seed {self.seed}"] + [r.line() for r in self.results]
        lines.append("all checks passed" if self.ok else "SOME CHECKS FAILED")
        return "\n".join(lines)


def _random_weighting(rng: np.random.Generator) -> WeightingModel:
    if rng.random() < 0.5:
        return WeightingModel.hp(float(rng.uniform(0.3, 2.0)))
    return WeightingModel.whp(float(rng.uniform(0.3, 2.0)))


def random_table(rng: np.random.Generator, n_actions: int, n_particles: int, horizon: float = 10.0,
                 p_nocontact: float = 0.2) -> np.ndarray:
    """Contact times uniform on [0, horizon] with a share of NoContact entries."""
    table = rng.uniform(0.0, horizon, size=(n_actions, n_particles))
    table[rng.random(table.shape) < p_nocontact] = np.inf
    return table


def sample_observation(weights: np.ndarray, a_phi: np.ndarray, obsset: ObservationSet,
                       w: WeightingModel, rng: np.random.Generator) -> float:
    """Draw o from p(o | psi); always an observation with positive surviving mass."""
    p = bucket_probabilities(observation_masses(weights, a_phi, obsset, w), obsset)
    return float(obsset.values[rng.choice(len(p), p=p)])


def check_strong_monotonicity(rng: np.random.Generator, n: int = MONOTONICITY_TRIPLES) -> CheckResult:
    """m_{psi,a,o} <= M_psi over random (belief, action, observation) triples."""
    worst = 0.0
    for _ in range(n):
        k = int(rng.integers(1, 30))
        weights = rng.random(k) * rng.random()
        a_phi = random_table(rng, 1, k)[0]
        w = _random_weighting(rng)
        o = np.inf if rng.random() < 0.2 else float(rng.uniform(0.0, 10.0))
        m = float(weights @ weight(w, o, a_phi))
        worst = max(worst, m - weights.sum())
    return CheckResult("strong_monotonicity", n, worst, worst <= 1e-12)


def _submodularity_case(rng: np.random.Generator, kind: str) -> float:
    n_h = int(rng.integers(2, 9))
    n_a = int(rng.integers(2, 6))
    w = WeightingModel.hp(float(rng.uniform(0.5, 2.0))) if kind == "hp" else \
        WeightingModel.whp(float(rng.uniform(0.5, 2.0)))
    obsset = ObservationSet(np.arange(11.0), int(rng.integers(1, 4)))
    table = random_table(rng, n_a, n_h)
    weights = rng.dirichlet(np.ones(n_h))
    order = rng.permutation(n_a)
    n_x = int(rng.integers(0, n_a - 1))
    n_ext = int(rng.integers(1, min(3, n_a - 1 - n_x) + 1))
    w_x = weights
    for a in order[:n_x]:
        w_x = w_x * weight(w, sample_observation(w_x, table[a], obsset, w, rng), table[a])
    w_y = w_x
    for a in order[n_x:n_x + n_ext]:
        w_y = w_y * weight(w, sample_observation(w_y, table[a], obsset, w, rng), table[a])
    worst = -np.inf
    for a in order[n_x + n_ext:]:
        worst = max(worst, hp_gain(w_y, table[a], obsset, w) - hp_gain(w_x, table[a], obsset, w))
    return worst


def check_adaptive_submodularity(rng: np.random.Generator, kind: str, n: int = SUBMODULARITY_INSTANCES) -> CheckResult:
    """Delta(a | psi_Y) <= Delta(a | psi_X) when psi_Y extends psi_X by 1-3 steps."""
    worst = max(_submodularity_case(rng, kind) for _ in range(n))
    return CheckResult(f"adaptive_submodularity_{kind}", n, max(worst, 0.0), worst <= 1e-9)


def check_self_certifying(rng: np.random.Generator, n: int = 200) -> CheckResult:
    """f recomputed from the history alone equals the incrementally tracked value."""
    worst = 0.0
    for _ in range(n):
        k, n_a = int(rng.integers(1, 40)), int(rng.integers(1, 6))
        w = _random_weighting(rng)
        table = random_table(rng, n_a, k)
        truth = int(rng.integers(k))
        prior = ParticleBelief(np.zeros((k, 4)), rng.dirichlet(np.ones(k)))
        belief, hist = prior, History()
        for a in rng.permutation(n_a):
            o = table[a, truth]
            belief = reweight(belief, table[a], o, w)
            hist = hist.append(a, o)
        worst = max(worst, abs(total_mass(belief) - mass_from_history(prior, hist, table, w)))
    return CheckResult("self_certifying_history_recompute", n, worst, worst <= 1e-12)


def check_gain_range(rng: np.random.Generator, n: int = 2000) -> CheckResult:
    """Pruning gains lie in [0, M]."""
    worst = 0.0
    for _ in range(n):
        k = int(rng.integers(1, 30))
        weights = rng.random(k) * rng.random()
        a_phi = random_table(rng, 1, k)[0]
        d = hp_gain(weights, a_phi, ObservationSet(np.arange(11.0), int(rng.integers(1, 4))),
                    _random_weighting(rng))
        worst = max(worst, -d, d - weights.sum())
    return CheckResult("pruning_gain_in_0_M", n, worst, worst <= 1e-12)


def check_weights(rng: np.random.Generator, n: int = 5000) -> CheckResult:
    """Kernels stay in [0, 1], are symmetric and equal 1 at zero gap."""
    worst = 0.0
    for _ in range(n):
        w = _random_weighting(rng) if rng.random() < 2 / 3 else \
            WeightingModel.ig(float(rng.uniform(0.3, 2.0)), bool(rng.random() < 0.5))
        o, a = rng.uniform(0.0, 10.0, size=2)
        if rng.random() < 0.1:
            o = np.inf
        if rng.random() < 0.1:
            a = np.inf
        v, v_sym = weight(w, o, a), weight(w, a, o)
        worst = max(worst, -v, v - 1.0, abs(v - v_sym))
        if np.isfinite(o):
            worst = max(worst, abs(weight(w, o, o) - 1.0))
    return CheckResult("weight_range_symmetry_identity", n, worst, worst <= 0.0)


def check_order_independence(rng: np.random.Generator, n: int = 200) -> CheckResult:
    """Reweighting by a set of (action, observation) pairs commutes."""
    worst = 0.0
    for _ in range(n):
        k, n_a = int(rng.integers(1, 40)), int(rng.integers(2, 6))
        w = _random_weighting(rng)
        table = random_table(rng, n_a, k)
        obs = [float(rng.uniform(0, 10)) if rng.random() < 0.8 else np.inf for _ in range(n_a)]
        start = ParticleBelief(np.zeros((k, 4)), rng.dirichlet(np.ones(k)))
        results = []
        for order in (range(n_a), rng.permutation(n_a)):
            b = start
            for a in order:
                b = reweight(b, table[a], obs[a], w)
            results.append(b.weights)
        worst = max(worst, float(np.abs(results[0] - results[1]).max()))
    return CheckResult("reweight_order_independence", n, worst, worst <= 1e-12)


def check_resample_mass(rng: np.random.Generator, n: int = 200) -> CheckResult:
    """Resampling keeps the total mass that f = 1 - M is read from."""
    worst = 0.0
    for _ in range(n):
        k = int(rng.integers(1, 100))
        b = ParticleBelief(rng.standard_normal((k, 4)), rng.random(k) * rng.random() + 1e-9)
        r = resample(b, int(rng.integers(1, 200)), (0.01,) * 4, rng)
        worst = max(worst, abs(total_mass(r) - total_mass(b)) / total_mass(b))
    return CheckResult("resample_mass_preservation", n, worst, worst <= 1e-12)


def check_lazy_greedy(rng: np.random.Generator, n: int = 40) -> CheckResult:
    """Lazy and naive greedy choose the same actions on a fixed particle set."""
    mismatches = 0
    for _ in range(n):
        k, n_a = int(rng.integers(5, 60)), int(rng.integers(3, 25))
        metric = PruningMetric(_random_weighting(rng))
        obssets = [ObservationSet(np.arange(11.0))] * n_a
        table = random_table(rng, n_a, k)
        costs = rng.uniform(1.0, 5.0, n_a)
        truth = int(rng.integers(k))
        belief = ParticleBelief(np.zeros((k, 4)), rng.dirichlet(np.ones(k)))
        state = PolicyState(remaining=set(range(n_a)))
        for _ in range(min(n_a, 5)):
            rnd = Round(belief, table, obssets, costs)
            naive, _ = select_greedy(rnd, metric, state.remaining)
            state.round += 1
            lazy = select_lazy_greedy(state, rnd, metric)
            if lazy.action_id != naive.action_id:
                mismatches += 1
                break
            a = lazy.action_id
            state.remaining.discard(a)
            belief = reweight(belief, table[a], table[a, truth], metric.weighting)
    return CheckResult("lazy_greedy_matches_greedy", n, float(mismatches), mismatches == 0)


def check_equivalence(rng: np.random.Generator, n: int = ORACLE_INSTANCES) -> CheckResult:
    """Explicit noisy-copy objective and probabilities against the mass-track path."""
    worst = 0.0
    for i in range(n):
        problem = oracle.build_noisy_problem(oracle.random_tiny_instance(rng, "hp" if i % 2 == 0 else "whp"))
        rep = oracle.check_equivalence(problem)
        worst = max(worst, rep.f_discrepancy, rep.probability_discrepancy)
    return CheckResult("noisy_copy_equivalence", n, worst, worst <= 1e-9)


def check_certificates(rng: np.random.Generator, n: int = ORACLE_INSTANCES) -> CheckResult:
    """Greedy cost within the greedy approximation bounds of the exhaustive optimum."""
    done = 0
    worst = 0.0
    ok = True
    while done < n:
        problem = oracle.build_noisy_problem(oracle.random_tiny_instance(rng, "hp" if done % 2 == 0 else "whp"))
        q = oracle.random_target(problem, rng)
        if q is None:
            continue
        for cert in oracle.certify_bounds(problem, q):
            worst = max(worst, cert.greedy_cost - cert.bound)
            ok &= cert.passed and cert.greedy_cost >= cert.optimal_cost - 1e-12
        done += 1
    return CheckResult("greedy_bound_certificates", n, max(worst, 0.0), ok)


def run_property_suite(seed: int = 0) -> SuiteReport:
    checks = [
        ("monotonicity", check_strong_monotonicity),
        ("submodularity:hp", lambda r: check_adaptive_submodularity(r, "hp")),
        ("submodularity:whp", lambda r: check_adaptive_submodularity(r, "whp")),
        ("self_certifying", check_self_certifying),
        ("gain_range", check_gain_range),
        ("weights", check_weights),
        ("order", check_order_independence),
        ("resample", check_resample_mass),
        ("lazy", check_lazy_greedy),
        ("equivalence", check_equivalence),
        ("certificates", check_certificates),
    ]
    results = []
    for tag, fn in checks:
        t0 = time.perf_counter()
        res = fn(stream(seed, f"check:{tag}"))
        res.seconds = time.perf_counter() - t0
        results.append(res)
    return SuiteReport(seed, results)
