"""Experiment engine: algorithm roster, metrics, aggregation and export.

Every episode is seeded from ``(base_seed, task, run)`` so all algorithms
face the same environment randomness on a given task and run, and reruns
reproduce logs exactly.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import logging
import os
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .domains import REC_GRIDS, DomainGrids, TaskSuite, build_model
from .episode import EpisodeLog
from .errors import HubError, InvalidParameterError
from .hub import HubInstance, pull_arm, query_teacher
from .naive import run_naive_policy
from .planner import PlannerParams, run_ats_episode

log = logging.getLogger(__name__)

ATS_SPECIFIC = "ats_specific"
ATS_GENERAL = "ats_general"
NAIVE = "naive"
RANDOM = "random"
RANDOM_ARMS = "random_arms"
KINDS = (ATS_SPECIFIC, ATS_GENERAL, NAIVE, RANDOM, RANDOM_ARMS)

SMOOTH_WINDOW = 10
BEST_ARM_TARGET = 0.8

METRICS = ("reward", "best_arm", "query", "u_loss", "arm_loss")


@dataclass(frozen=True)
class AlgorithmSpec:
    kind: str
    T: Optional[int] = None
    planner: Optional[PlannerParams] = None
    inference_teacher: int = 1
    label: Optional[str] = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise InvalidParameterError(f"unknown algorithm kind {self.kind!r}")
        if self.kind == NAIVE and (self.T is None or self.T < 0):
            raise InvalidParameterError("Naive needs an exploration length T >= 0")
        if self.kind in (ATS_SPECIFIC, ATS_GENERAL) and self.planner is None:
            object.__setattr__(self, "planner", PlannerParams())

    @property
    def name(self) -> str:
        if self.label:
            return self.label
        return {
            ATS_SPECIFIC: "ATS-specific",
            ATS_GENERAL: "ATS-general",
            NAIVE: f"Naive[{self.T}]",
            RANDOM: "Random",
            RANDOM_ARMS: "RandomArms",
        }[self.kind]

    def to_dict(self) -> dict:
        d = {"kind": self.kind, "name": self.name}
        if self.T is not None:
            d["T"] = self.T
            d["inference_teacher"] = self.inference_teacher
        if self.planner is not None:
            d["planner"] = self.planner.to_dict()
        return d


def default_roster(sims: int) -> list:
    p = PlannerParams(simulations_per_step=sims)
    return [
        AlgorithmSpec(ATS_SPECIFIC, planner=p),
        AlgorithmSpec(ATS_GENERAL, planner=p),
        AlgorithmSpec(NAIVE, T=50),
        AlgorithmSpec(NAIVE, T=100),
        AlgorithmSpec(NAIVE, T=200),
        AlgorithmSpec(RANDOM),
        AlgorithmSpec(RANDOM_ARMS),
    ]


@dataclass(frozen=True)
class Profile:
    runs: int
    n_tasks: int
    horizon: int
    sims: int


PROFILES = {
    "smoke": Profile(runs=1, n_tasks=2, horizon=100, sims=50),
    "desk": Profile(runs=5, n_tasks=20, horizon=1000, sims=300),
    "full": Profile(runs=25, n_tasks=20, horizon=1000, sims=1000),
}


def episode_seed(base_seed: int, task: int, run: int) -> int:
    return int(np.random.SeedSequence([base_seed, task, run]).generate_state(1)[0])


# --- episodes ---------------------------------------------------------------

def _run_random(hub: HubInstance, horizon: int, rng, arms_only: bool, name: str) -> EpisodeLog:
    out = EpisodeLog(name, hub.gamma)
    n_actions = hub.n_arms if arms_only else hub.n_arms + hub.n_teachers
    nan = float("nan")
    for _ in range(horizon):
        a = int(rng.integers(n_actions))
        if a < hub.n_arms:
            obs, u = pull_arm(hub, a, rng)
            out.append("pull", a, obs, u, u)
        else:
            obs, cost = query_teacher(hub, a - hub.n_arms, rng)
            out.append("query", a - hub.n_arms, obs, nan, cost)
    return out


def run_episode(alg: AlgorithmSpec, hub: HubInstance, horizon: int, seed: int,
                grids: DomainGrids = REC_GRIDS, model=None, diagnostics: Optional[list] = None) -> EpisodeLog:
    """One episode of ``alg`` on ``hub``; identical seeds give identical logs."""
    rng = np.random.default_rng(seed)
    if alg.kind in (ATS_SPECIFIC, ATS_GENERAL):
        mode = "specific" if alg.kind == ATS_SPECIFIC else "general"
        if model is None or model.mode != mode:
            model = build_model(hub, grids, mode)
        out = run_ats_episode(hub, model, alg.planner, horizon, rng, alg.name, diagnostics)
    elif alg.kind == NAIVE:
        out = run_naive_policy(hub, alg.T, alg.inference_teacher, horizon, rng, alg.name)
    else:
        out = _run_random(hub, horizon, rng, alg.kind == RANDOM_ARMS, alg.name)
    out.seed = seed
    return out


# --- metrics ----------------------------------------------------------------

def _l2_series(rows, truth: np.ndarray, attr: str, fill: float) -> np.ndarray:
    out = np.full(len(rows), np.nan)
    for t, r in enumerate(rows):
        est = getattr(r, attr)
        if est is None:
            continue
        e = np.asarray(est, dtype=float)
        e = np.where(np.isnan(e), fill, e)
        out[t] = float(np.linalg.norm(e - truth))
    return out


def compute_metrics(log: EpisodeLog, hub: HubInstance) -> dict:
    """Per-step metric series for one episode.

    ``u_loss`` and ``arm_loss`` are L2 distances of the logged estimates from
    the truth; steps without an estimate are nan. Items a policy could not
    estimate count at the middle of the utility range.
    """
    best = hub.best_arm
    mid = 0.5 * (hub.utility.u_min + hub.utility.u_max)
    kinds = np.array([r.kind for r in log.rows])
    idx = np.array([r.index for r in log.rows])
    pulls = kinds == "pull"
    out = {
        "reward": np.array([r.cumulative_discounted_reward for r in log.rows]),
        "best_arm": (pulls & (idx == best)).astype(float),
        "query": (kinds == "query").astype(float),
        "u_loss": _l2_series(log.rows, hub.utility.array, "u_hat", mid),
        "arm_loss": _l2_series(log.rows, hub.arm_values, "arm_estimates", mid),
    }
    for k in range(hub.n_arms):
        out[f"pull_{k}"] = (pulls & (idx == k)).astype(float)
    return out


def first_passage(series: np.ndarray, target: float = BEST_ARM_TARGET) -> int:
    """First step at which ``series`` reaches ``target``; its length if never."""
    hit = np.flatnonzero(series >= target)
    return int(hit[0]) if len(hit) else len(series)


def episode_summary(metrics: dict, window: int = 100) -> dict:
    last = lambda x: float(x[-1]) if len(x) else float("nan")
    out = {
        "final_reward": last(metrics["reward"]),
        "best_arm_first": float(np.mean(metrics["best_arm"][:window])),
        "best_arm_last": float(np.mean(metrics["best_arm"][-window:])),
        "queries": float(np.sum(metrics["query"])),
        "final_u_loss": last(metrics["u_loss"]),
        "final_arm_loss": last(metrics["arm_loss"]),
    }
    for key in sorted(k for k in metrics if k.startswith("pull_")):
        out[f"{key}_first"] = float(np.mean(metrics[key][:window]))
        out[f"{key}_last"] = float(np.mean(metrics[key][-window:]))
    return out


def smooth(x: np.ndarray, window: int = SMOOTH_WINDOW) -> np.ndarray:
    """Trailing moving average over the non-nan entries of each window.

    The first steps average what is available; windows with no data stay nan.
    """
    x = np.asarray(x, dtype=float)
    ok = ~np.isnan(x)
    c = np.cumsum(np.insert(np.where(ok, x, 0.0), 0, 0.0))
    k = np.cumsum(np.insert(ok.astype(float), 0, 0.0))
    n = np.arange(1, len(x) + 1)
    lo = np.maximum(n - window, 0)
    cnt = k[n] - k[lo]
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(cnt > 0, (c[n] - c[lo]) / np.maximum(cnt, 1), np.nan)


@dataclass
class SuiteResult:
    """Aggregated series and per-episode summaries keyed by algorithm name."""

    series: dict        # alg -> metric -> {"mean", "q25", "q75"} arrays
    episodes: dict      # alg -> list of summary dicts
    metadata: dict = field(default_factory=dict)

    @property
    def algorithms(self) -> list:
        return list(self.series)

    def finals(self, alg: str, key: str) -> np.ndarray:
        return np.array([e[key] for e in self.episodes[alg]], dtype=float)


def aggregate(metric_sets: Sequence[dict], window: int = SMOOTH_WINDOW) -> dict:
    """Mean and interquartile range across episodes per step, then smoothed."""
    if not metric_sets:
        raise InvalidParameterError("nothing to aggregate")
    lengths = {len(m["reward"]) for m in metric_sets}
    if len(lengths) != 1:
        raise InvalidParameterError(f"episodes have different horizons: {sorted(lengths)}")
    out = {}
    for key in metric_sets[0]:
        stack = np.vstack([m[key] for m in metric_sets])
        if np.all(np.isnan(stack)):
            continue
        with warnings.catch_warnings():
            # all-nan columns (e.g. no estimate yet) are expected
            warnings.simplefilter("ignore", RuntimeWarning)
            mean = np.nanmean(stack, axis=0)
            q25, q75 = np.nanpercentile(stack, [25, 75], axis=0)
        out[key] = {"mean": smooth(mean, window), "q25": smooth(q25, window), "q75": smooth(q75, window)}
    return out


# --- suites -----------------------------------------------------------------

def _job(args):
    alg, hub, horizon, seed, grids, task, run = args
    try:
        ep = run_episode(alg, hub, horizon, seed, grids)
    except HubError as exc:
        return alg.name, task, run, seed, None, f"{type(exc).__name__}: {exc}"
    return alg.name, task, run, seed, compute_metrics(ep, hub), None


def _workers() -> int:
    try:
        return max(1, int(os.environ.get("HUBATS_WORKERS", "1")))
    except ValueError:
        return 1


def run_suite(algs: Sequence[AlgorithmSpec], hubs: Sequence[HubInstance], runs: int, horizon: int,
              base_seed: int = 0, grids: DomainGrids = REC_GRIDS, workers: Optional[int] = None,
              progress=None) -> SuiteResult:
    """Run every algorithm ``runs`` times on every hub and aggregate."""
    jobs = [
        (alg, hub, horizon, episode_seed(base_seed, t, r), grids, t, r)
        for alg in algs for t, hub in enumerate(hubs) for r in range(runs)
    ]
    workers = _workers() if workers is None else workers
    if workers > 1:
        with ProcessPoolExecutor(workers) as pool:
            results = list(pool.map(_job, jobs, chunksize=1))
    else:
        results = []
        for k, job in enumerate(jobs):
            results.append(_job(job))
            if progress is not None:
                progress(k + 1, len(jobs))
    by_alg = {alg.name: [] for alg in algs}
    episodes = {alg.name: [] for alg in algs}
    aborted = []
    for name, task, run, seed, metrics, err in results:
        if err is not None:
            aborted.append({"algorithm": name, "task": task, "run": run, "seed": seed, "error": err})
            log.warning("episode aborted: %s task %d run %d: %s", name, task, run, err)
            continue
        by_alg[name].append(metrics)
        episodes[name].append({"task": task, "run": run, "seed": seed, **episode_summary(metrics)})
    series = {name: aggregate(m) for name, m in by_alg.items() if m}
    meta = {
        "algorithms": [a.to_dict() for a in algs],
        "runs": runs,
        "n_tasks": len(hubs),
        "horizon": horizon,
        "base_seed": base_seed,
        "gamma": hubs[0].gamma if hubs else None,
        "smoothing_window": SMOOTH_WINDOW,
        "grids": {"levels": list(grids.levels), "resolution": grids.resolution},
        "aborted": aborted,
    }
    return SuiteResult(series, {k: v for k, v in episodes.items() if v}, meta)


COST_BASE = (-1.0, -2.0, -3.0)


def run_cost_sweep(hubs: Sequence[HubInstance], multipliers: Sequence[float], params: PlannerParams,
                   runs: int, horizon: int, base_seed: int = 0, grids: DomainGrids = REC_GRIDS,
                   workers: Optional[int] = None) -> dict:
    """ATS-specific on the suite with teacher costs ``COST_BASE * m`` for each multiplier."""
    out = {}
    for m in multipliers:
        costed = [h.with_costs([c * m for c in COST_BASE]) for h in hubs]
        alg = AlgorithmSpec(ATS_SPECIFIC, planner=params, label=f"ATS x{m:g}")
        out[m] = run_suite([alg], costed, runs, horizon, base_seed, grids, workers)
        out[m].metadata["cost_multiplier"] = m
    return out


def merge_results(results: Sequence[SuiteResult]) -> SuiteResult:
    series, episodes, meta = {}, {}, {"parts": []}
    for r in results:
        series.update(r.series)
        episodes.update(r.episodes)
        meta["parts"].append(r.metadata)
    return SuiteResult(series, episodes, meta)


# --- export -----------------------------------------------------------------

def series_csv(result: SuiteResult, metric: str) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("algorithm", "step", "mean", "q25", "q75"))
    for alg in result.algorithms:
        s = result.series[alg].get(metric)
        if s is None:
            continue
        for t in range(len(s["mean"])):
            w.writerow((alg, t, repr(float(s["mean"][t])), repr(float(s["q25"][t])), repr(float(s["q75"][t]))))
    return buf.getvalue()


def _cell(v):
    return repr(v) if isinstance(v, float) else v


def episodes_csv(result: SuiteResult) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    keys = ("task", "run", "seed", "final_reward", "best_arm_first", "best_arm_last", "queries",
            "final_u_loss", "final_arm_loss")
    extra = sorted({k for eps in result.episodes.values() for e in eps for k in e} - set(keys))
    keys = keys + tuple(extra)
    w.writerow(("algorithm",) + keys)
    for alg, eps in result.episodes.items():
        for e in eps:
            w.writerow((alg,) + tuple(_cell(e.get(k, "")) for k in keys))
    return buf.getvalue()


def config_hash(meta: dict) -> str:
    return hashlib.sha256(json.dumps(meta, sort_keys=True, default=str).encode()).hexdigest()


def export(result: SuiteResult, out_dir, figures: Optional[dict] = None, plots: bool = True) -> list:
    """Write per-metric CSVs, an episode summary, a manifest and plots.

    Everything is rendered in memory first so a failure leaves no partial
    output behind.
    """
    if not result.series:
        raise InvalidParameterError("empty result: nothing to export")
    files = {}
    metrics = sorted({m for a in result.algorithms for m in result.series[a]})
    for metric in metrics:
        files[f"{metric}.csv"] = series_csv(result, metric).encode()
    files["episodes.csv"] = episodes_csv(result).encode()
    manifest = {"config_hash": config_hash(result.metadata), "metadata": result.metadata,
                "files": sorted(files)}
    if plots:
        from .plots import render_figures
        for name, data in render_figures(result, figures).items():
            files[name] = data
        manifest["files"] = sorted(files)
    files["manifest.json"] = (json.dumps(manifest, indent=2, sort_keys=True, default=str) + "\n").encode()
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        for name, data in files.items():
            (out / name).write_bytes(data)
    except OSError as exc:
        raise OSError(f"cannot write results to {out}: {exc}") from exc
    return [out / n for n in sorted(files)]


def result_to_json(result: SuiteResult) -> dict:
    return {
        "series": {a: {m: {k: v.tolist() for k, v in s.items()} for m, s in ms.items()}
                   for a, ms in result.series.items()},
        "episodes": result.episodes,
        "metadata": result.metadata,
    }


def result_from_json(data: dict) -> SuiteResult:
    series = {a: {m: {k: np.asarray(v, dtype=float) for k, v in s.items()} for m, s in ms.items()}
              for a, ms in data["series"].items()}
    return SuiteResult(series, data["episodes"], data["metadata"])
