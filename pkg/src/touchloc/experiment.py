"""Seeded batch runs: one action set and prior per seed, one episode per scheme, CSV out."""
from __future__ import annotations

import csv
import hashlib
import io
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import stats

from touchloc.actions import ActionSet, build_action_set, write_actions_csv
from touchloc.belief import ParticleBelief, init_belief
from touchloc.config import ExperimentConfig, dump_config
from touchloc.geometry import Pose, Scene, SensorRig, mesh_by_name
from touchloc.metrics import InformationGainMetric, PruningMetric
from touchloc.policy import (
    EpisodeLog,
    EpisodeSettings,
    FixedSelector,
    GreedySelector,
    RandomSelector,
    Selector,
    TerminationRule,
    run_episode,
)
from touchloc.rng import stream
from touchloc.sensing import WeightingModel

log = logging.getLogger(__name__)

SUMMARY_COLUMNS = ["metric", "step", "mean_cov_eig_sum", "ci95_lo", "ci95_hi", "mean_selection_ms", "ci95_ms"]


def make_scene(cfg: ExperimentConfig) -> Scene:
    rig = SensorRig.single() if cfg.rig == "single" else SensorRig.three_finger(cfg.rig_spread)
    return Scene(mesh_by_name(cfg.scene), rig, use_grid=cfg.spatial_index)


def weighting_for(cfg: ExperimentConfig, scheme: str) -> WeightingModel:
    if scheme == "hp":
        return WeightingModel.hp(cfg.d_T)
    if scheme == "whp":
        return WeightingModel.whp(cfg.sigma)
    if scheme == "ig":
        return WeightingModel.ig(cfg.ig_sigma, cfg.ig_squared)
    return weighting_for(cfg, cfg.baseline_update)


def make_selector(cfg: ExperimentConfig, scheme: str, actions: ActionSet, seed: int) -> Selector:
    w = weighting_for(cfg, scheme)
    if scheme in ("hp", "whp"):
        return GreedySelector(PruningMetric(w), lazy=cfg.lazy)
    if scheme == "ig":
        return GreedySelector(InformationGainMetric(w), lazy=False)
    if scheme == "random":
        return RandomSelector(stream(seed, "select:random"), w)
    return FixedSelector(actions.ids_of_kind("human"), w, name="human")


def termination_for(cfg: ExperimentConfig) -> TerminationRule:
    if cfg.termination == "budget":
        return TerminationRule.budget(int(cfg.termination_value))
    if cfg.termination == "mass":
        return TerminationRule.mass_target(cfg.termination_value)
    return TerminationRule.entropy_target(cfg.termination_value)


def episode_settings(cfg: ExperimentConfig, record_timing: bool | None = None) -> EpisodeSettings:
    jitter = tuple(cfg.jitter_scale * math.sqrt(v) for v in cfg.prior_cov_diag)
    return EpisodeSettings(
        obs_spacing=cfg.obs_spacing,
        nocontact_multiplicity=cfg.nocontact_multiplicity,
        noise_sigma=cfg.noise_sigma,
        jitter=jitter,
        n_particles=cfg.particles,
        record_timing=cfg.record_timing if record_timing is None else record_timing,
    )


def truth_pose(cfg: ExperimentConfig) -> Pose:
    return Pose(*(s + d for s, d in zip(cfg.sensed_pose, cfg.truth_offset)))


@dataclass(frozen=True, eq=False)
class SeedSetup:
    seed: int
    actions: ActionSet
    belief: ParticleBelief
    digest: str


def setup_digest(actions: ActionSet, belief: ParticleBelief) -> str:
    """SHA-256 over the action CSV and the raw particle arrays."""
    buf = io.StringIO()
    write_actions_csv(actions, buf)
    h = hashlib.sha256(buf.getvalue().encode())
    h.update(np.ascontiguousarray(belief.poses).tobytes())
    h.update(np.ascontiguousarray(belief.weights).tobytes())
    return h.hexdigest()


def setup_seed(cfg: ExperimentConfig, seed: int, scene: Scene) -> SeedSetup:
    """The action set and initial particles shared by every scheme for ``seed``."""
    sensed = Pose(*cfg.sensed_pose)
    belief = init_belief(sensed, cfg.prior_cov_diag, cfg.particles, stream(seed, "belief"))
    actions = build_action_set(
        scene, sensed, belief.poses, cfg.action_counts, stream(seed, "actions"),
        speed=cfg.speed, fixed_time=cfg.fixed_time, sphere_radius=cfg.sphere_radius,
        inplane=cfg.inplane, margin=cfg.margin, table_scatter=cfg.table_scatter)
    return SeedSetup(seed, actions, belief, setup_digest(actions, belief))


def run_scheme(cfg: ExperimentConfig, setup: SeedSetup, scheme: str, scene: Scene,
               record_timing: bool | None = None) -> EpisodeLog:
    if setup_digest(setup.actions, setup.belief) != setup.digest:
        raise RuntimeError(f"seed {setup.seed}: action set or particles changed between schemes")
    return run_episode(scene, truth_pose(cfg), setup.actions, setup.belief,
                       make_selector(cfg, scheme, setup.actions, setup.seed), termination_for(cfg),
                       episode_settings(cfg, record_timing), stream(setup.seed, f"episode:{scheme}"))


def episode_path(out: Path, seed: int, scheme: str) -> Path:
    return out / f"episode_seed{seed}_{scheme}.csv"


def _run_seed(cfg: ExperimentConfig, seed: int, out: Path | None) -> tuple[int, str, dict[str, EpisodeLog]]:
    scene = make_scene(cfg)
    setup = setup_seed(cfg, seed, scene)
    logs = {}
    for scheme in cfg.metrics:
        ep = run_scheme(cfg, setup, scheme, scene)
        logs[scheme] = ep
        if out is not None:
            ep.write_csv(episode_path(out, seed, scheme))
    if out is not None:
        write_actions_csv(setup.actions, out / f"actions_seed{seed}.csv")
    return seed, setup.digest, logs


@dataclass
class ExperimentResult:
    out_dir: Path
    logs: dict[tuple[int, str], EpisodeLog]
    digests: dict[int, str]
    summary: list[list]


def run_experiment(cfg: ExperimentConfig, out_dir=None, seeds=None) -> ExperimentResult:
    """Run every (seed, scheme) episode and write episode, action and summary CSVs."""
    if seeds is not None:
        cfg = cfg.replace(seeds=tuple(seeds))
    out = Path(out_dir if out_dir is not None else cfg.output_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        (out / "config.toml").write_text(dump_config(cfg))
    except OSError as e:
        raise OSError(f"output directory {out} is not writable: {e}") from e
    make_scene(cfg)  # fail early on a bad mesh path

    if cfg.workers > 1:
        with ProcessPoolExecutor(cfg.workers) as pool:
            results = list(pool.map(_run_seed, [cfg] * len(cfg.seeds), cfg.seeds, [out] * len(cfg.seeds)))
    else:
        results = [_run_seed(cfg, s, out) for s in cfg.seeds]

    logs, digests = {}, {}
    for seed, digest, per_scheme in results:
        digests[seed] = digest
        for scheme, ep in per_scheme.items():
            logs[(seed, scheme)] = ep
    rows = summarize(logs, cfg.metrics, cfg.seeds)
    write_summary(rows, out / "summary.csv")
    with open(out / "manifest.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["seed", "setup_sha256"])
        for s in cfg.seeds:
            w.writerow([s, digests[s]])
    return ExperimentResult(out, logs, digests, rows)


def mean_ci(values) -> tuple[float, float]:
    """Mean and 95% half-width from Student's t; the half-width is nan below 2 values."""
    v = np.asarray(values, dtype=float)
    if len(v) == 0:
        return math.nan, math.nan
    m = float(v.mean())
    if len(v) < 2:
        return m, math.nan
    half = float(stats.t.ppf(0.975, len(v) - 1) * v.std(ddof=1) / math.sqrt(len(v)))
    return m, half


def cov_trace_by_step(ep: EpisodeLog, n_steps: int) -> list[float]:
    """cov_eig_sum at steps 0..n_steps; an episode that ended early holds its last finite value."""
    out = []
    last = math.nan
    by_step = {r.step: r.cov_eig_sum for r in ep.rows}
    for s in range(n_steps + 1):
        v = by_step.get(s, math.nan)
        if math.isfinite(v):
            last = v
        out.append(last)
    return out


def summarize(logs: dict[tuple[int, str], EpisodeLog], schemes, seeds) -> list[list]:
    n_steps = max(max(r.step for r in ep.rows) for ep in logs.values())
    rows = []
    for scheme in schemes:
        traces = np.array([cov_trace_by_step(logs[(s, scheme)], n_steps) for s in seeds])
        for step in range(n_steps + 1):
            m, half = mean_ci(traces[:, step])
            ms = [r.selection_ms for s in seeds for r in logs[(s, scheme)].rows
                  if r.step == step and r.selection_ms is not None]
            ms_mean, ms_half = mean_ci(ms)
            rows.append([scheme, step, m, m - half, m + half, ms_mean, ms_half])
    return rows


def _cell(v) -> str:
    if isinstance(v, str):
        return v
    if isinstance(v, (int, np.integer)):
        return str(v)
    return "" if not math.isfinite(v) else repr(float(v))


def write_summary(rows, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SUMMARY_COLUMNS)
        for r in rows:
            w.writerow([_cell(v) for v in r])


def read_summary(path) -> dict[tuple[str, int], dict[str, float]]:
    out = {}
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            key = (row["metric"], int(row["step"]))
            out[key] = {k: (float(v) if v else math.nan) for k, v in row.items() if k not in ("metric", "step")}
    return out


@dataclass
class BenchRow:
    metric: str
    n: int
    mean_ms: float
    ci95_ms: float
    evaluations: int


@dataclass
class BenchResult:
    rows: list[BenchRow]
    n_actions: int
    n_particles: int

    def by_metric(self) -> dict[str, BenchRow]:
        return {r.metric: r for r in self.rows}

    @property
    def ordering_ok(self) -> bool:
        b = self.by_metric()
        return b["hp"].mean_ms < b["whp"].mean_ms < b["ig"].mean_ms

    @property
    def ratio(self) -> float:
        b = self.by_metric()
        return b["hp"].mean_ms / b["ig"].mean_ms

    def table(self) -> str:
        lines = [f"|A| = {self.n_actions}, |Phi| = {self.n_particles}",
                 f"{'metric':<8}{'n':>5}{'mean ms':>12}{'ci95 ms':>10}{'evals':>8}"]
        for r in self.rows:
            lines.append(f"{r.metric:<8}{r.n:>5}{r.mean_ms:>12.2f}{r.ci95_ms:>10.2f}{r.evaluations:>8}")
        lines.append(f"ordering hp < whp < ig: {'yes' if self.ordering_ok else 'NO'}; "
                     f"hp/ig = {self.ratio:.3f}")
        return "\n".join(lines)


def run_bench(cfg: ExperimentConfig, seeds=None, metrics=("hp", "whp", "ig")) -> BenchResult:
    """Per-selection wall time for each metric on identical action sets and priors."""
    seeds = tuple(cfg.seeds if seeds is None else seeds)
    scene = make_scene(cfg)
    times = {m: [] for m in metrics}
    evals = {m: 0 for m in metrics}
    for seed in seeds:
        setup = setup_seed(cfg, seed, scene)
        for m in metrics:
            ep = run_scheme(cfg, setup, m, scene, record_timing=True)
            times[m] += [r.selection_ms for r in ep.rows if r.selection_ms is not None]
            evals[m] += sum(ep.evaluations)
    rows = []
    for m in metrics:
        mean, half = mean_ci(times[m])
        rows.append(BenchRow(m, len(times[m]), mean, half, evals[m]))
    return BenchResult(rows, cfg.n_actions, cfg.particles)


def write_bench(result: BenchResult, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["metric", "n", "mean_ms", "ci95_ms", "evaluations"])
        for r in result.rows:
            w.writerow([r.metric, r.n, repr(r.mean_ms), repr(r.ci95_ms), r.evaluations])


@dataclass
class LazyComparison:
    seed: int
    scheme: str
    naive_actions: list[int]
    lazy_actions: list[int]
    naive_evals: list[int]
    lazy_evals: list[int]

    @property
    def match(self) -> bool:
        return self.naive_actions == self.lazy_actions


def compare_lazy(cfg: ExperimentConfig, seeds=None, schemes=("hp", "whp")) -> list[LazyComparison]:
    """Run each (seed, scheme) episode with naive and lazy greedy on the same inputs."""
    seeds = tuple(cfg.seeds if seeds is None else seeds)
    scene = make_scene(cfg)
    naive_cfg, lazy_cfg = cfg.replace(lazy=False), cfg.replace(lazy=True)
    out = []
    for seed in seeds:
        setup = setup_seed(cfg, seed, scene)
        for scheme in schemes:
            naive = run_scheme(naive_cfg, setup, scheme, scene)
            lazy = run_scheme(lazy_cfg, setup, scheme, scene)
            out.append(LazyComparison(seed, scheme, naive.action_ids, lazy.action_ids,
                                      naive.evaluations, lazy.evaluations))
    return out


def lazy_savings(comparisons) -> float:
    """Fraction of gain evaluations saved by lazy greedy, summed over rounds 2 and later."""
    naive = sum(sum(c.naive_evals[1:]) for c in comparisons)
    lazy = sum(sum(c.lazy_evals[1:]) for c in comparisons)
    return 1.0 - lazy / naive if naive else 0.0
