"""Command line entry point: ``hubats <command> ...``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import bench
from .beta import estimate_betas_from_logs, read_preference_log, sample_sets_from_log
from .domains import (
    COVID_GRIDS,
    REC_GRIDS,
    build_covid_instance,
    build_model,
    generate_recommendation_suite,
    load_suite,
    save_suite,
    validate_suite,
)
from .errors import HubError
from .planner import PlannerParams, RolloutPolicy
from .plots import FIGURE_SETS

ALG_NAMES = ("ats-specific", "ats-general", "naive:T", "random", "random-arms", "all")


def parse_alg(text: str, planner: PlannerParams) -> list:
    t = text.strip().lower()
    if t == "all":
        return [bench.AlgorithmSpec(a.kind, a.T, planner if a.planner else None)
                for a in bench.default_roster(planner.simulations_per_step)]
    if t == "ats-specific":
        return [bench.AlgorithmSpec(bench.ATS_SPECIFIC, planner=planner)]
    if t == "ats-general":
        return [bench.AlgorithmSpec(bench.ATS_GENERAL, planner=planner)]
    if t.startswith("naive:"):
        return [bench.AlgorithmSpec(bench.NAIVE, T=int(t.split(":", 1)[1]))]
    if t == "random":
        return [bench.AlgorithmSpec(bench.RANDOM)]
    if t == "random-arms":
        return [bench.AlgorithmSpec(bench.RANDOM_ARMS)]
    raise argparse.ArgumentTypeError(f"unknown algorithm {text!r}; expected one of {ALG_NAMES}")


def load_hubs(spec: str, n_tasks=None):
    """``covid`` or a suite directory; returns (hubs, grids, figure set name)."""
    if spec == "covid":
        return [build_covid_instance()], COVID_GRIDS, "covid"
    suite = load_suite(spec)
    hubs = suite.hubs
    if n_tasks is not None:
        hubs = hubs[:n_tasks]
    return hubs, REC_GRIDS, "recommendation"


def add_profile_args(p):
    p.add_argument("--suite", required=True, help="suite directory, or 'covid'")
    p.add_argument("--profile", choices=sorted(bench.PROFILES), default="desk")
    p.add_argument("--runs", type=int, help="runs per task (overrides the profile)")
    p.add_argument("--n-tasks", type=int, help="use only the first N tasks (overrides the profile)")
    p.add_argument("--horizon", type=int)
    p.add_argument("--sims", type=int, help="planner simulations per step")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--workers", type=int, help="worker processes (default: $HUBATS_WORKERS or 1)")
    p.add_argument("--no-plots", action="store_true")
    p.add_argument("--max-depth", type=int, default=30)
    p.add_argument("--ucb", type=float, help="UCB exploration constant")
    p.add_argument("--widen-k", type=float, default=3.0)
    p.add_argument("--widen-alpha", type=float, default=0.15)
    p.add_argument("--rollout", choices=[r.value for r in RolloutPolicy], default="best_arm")
    p.add_argument("--particle-values", action="store_true",
                   help="score rewards under sampled particles instead of node beliefs")


def resolve_profile(args):
    prof = bench.PROFILES[args.profile]
    runs = args.runs if args.runs is not None else prof.runs
    n_tasks = args.n_tasks if args.n_tasks is not None else prof.n_tasks
    horizon = args.horizon if args.horizon is not None else prof.horizon
    sims = args.sims if args.sims is not None else prof.sims
    planner = PlannerParams(
        simulations_per_step=sims, max_depth=args.max_depth, ucb_exploration=args.ucb,
        obs_widen_k=args.widen_k, obs_widen_alpha=args.widen_alpha,
        rollout_policy=args.rollout, belief_values=not args.particle_values,
    )
    return runs, n_tasks, horizon, planner


def _write(result, out, figures, args):
    files = bench.export(result, out, figures, plots=not args.no_plots)
    Path(out, "results.json").write_text(json.dumps(bench.result_to_json(result), sort_keys=True) + "\n")
    return files


def _summary(result):
    for a in result.algorithms:
        r = result.finals(a, "final_reward")
        b = result.finals(a, "best_arm_last")
        q = result.finals(a, "queries")
        print(f"{a:16s} reward {np.mean(r):9.3f}  best-arm(last 100) {np.mean(b):.3f}  queries {np.mean(q):7.1f}")
    for ab in result.metadata.get("aborted", []):
        print(f"aborted: {ab}")


def cmd_generate(args):
    suite = generate_recommendation_suite(args.n_tasks, np.random.default_rng(args.seed))
    suite.settings["seed"] = args.seed
    path = save_suite(suite, args.out)
    problems = validate_suite(suite)
    print(f"wrote {len(suite)} tasks to {path.parent}" + (f"; {len(problems)} violations" if problems else ""))
    return 1 if problems else 0


def cmd_run(args):
    runs, n_tasks, horizon, planner = resolve_profile(args)
    hubs, grids, fig_set = load_hubs(args.suite, n_tasks)
    algs = []
    for a in args.alg or ["all"]:
        algs.extend(parse_alg(a, planner))
    result = bench.run_suite(algs, hubs, runs, horizon, args.seed, grids, args.workers)
    result.metadata["profile"] = args.profile
    _write(result, args.out, FIGURE_SETS[fig_set], args)
    _summary(result)
    return 0


def cmd_sweep(args):
    runs, n_tasks, horizon, planner = resolve_profile(args)
    hubs, grids, _ = load_hubs(args.suite, n_tasks)
    mults = [float(x) for x in args.multipliers.split(",")]
    sweep = bench.run_cost_sweep(hubs, mults, planner, runs, horizon, args.seed, grids, args.workers)
    result = bench.merge_results([sweep[m] for m in mults])
    _write(result, args.out, FIGURE_SETS["costs"], args)
    _summary(result)
    for m in mults:
        name = sweep[m].algorithms[0]
        fp = bench.first_passage(sweep[m].series[name]["best_arm"]["mean"])
        print(f"x{m:g}: first step at {bench.BEST_ARM_TARGET:.0%} best-arm rate: {fp}")
    return 0


def cmd_rollouts(args):
    runs, n_tasks, horizon, planner = resolve_profile(args)
    hubs, grids, _ = load_hubs(args.suite, n_tasks)
    from dataclasses import replace
    algs = [
        bench.AlgorithmSpec(bench.ATS_SPECIFIC, planner=replace(planner, rollout_policy=r),
                            label=f"ATS {r.value}")
        for r in RolloutPolicy
    ]
    result = bench.run_suite(algs, hubs, runs, horizon, args.seed, grids, args.workers)
    _write(result, args.out, FIGURE_SETS["rollouts"], args)
    _summary(result)
    return 0


def cmd_beta(args):
    rows = read_preference_log(args.log)
    sets = sample_sets_from_log(rows, args.lesser, args.greater)
    for e in estimate_betas_from_logs(sets, args.delta):
        print(f"teacher {e.teacher}: raw {e.raw:.6g}  scaled {e.scaled:.6g}  ({e.scaling_anchor})")
    return 0


def cmd_plot(args):
    data = json.loads(Path(args.results, "results.json").read_text())
    result = bench.result_from_json(data)
    figures = FIGURE_SETS[args.figures] if args.figures else None
    from .plots import render_figures
    out = Path(args.out or args.results)
    out.mkdir(parents=True, exist_ok=True)
    for name, png in render_figures(result, figures).items():
        (out / name).write_bytes(png)
        print(out / name)
    return 0


def cmd_describe(args):
    hubs, grids, _ = load_hubs(args.suite)
    hub = hubs[0]
    for mode in ("specific", "general"):
        m = build_model(hub, grids, mode)
        n_obs = max(len(m.observation_space(a)) for a in m.actions)
        print(f"{mode}: |S|={m.num_states} |A|={m.num_actions} max|Omega|={n_obs}")
    print(f"tasks: {len(hubs)}; items {list(hub.items)}; teachers "
          + ", ".join(f"{t.name or k} (beta={t.beta:.4g}, cost={t.cost:g})" for k, t in enumerate(hub.teachers)))
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="hubats", description="Hidden utility bandit experiments")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate-tasks", help="write a recommendation task suite")
    p.add_argument("--n-tasks", type=int, default=20)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("run", help="run algorithms on a suite")
    add_profile_args(p)
    p.add_argument("--alg", action="append", help=f"one of {ALG_NAMES}; repeatable (default all)")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("sweep-costs", help="ATS under scaled teacher costs")
    add_profile_args(p)
    p.add_argument("--multipliers", default="0,1,2,4")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("compare-rollouts", help="ATS with each rollout policy")
    add_profile_args(p)
    p.set_defaults(func=cmd_rollouts)

    p = sub.add_parser("estimate-beta", help="teacher rationality from a preference log")
    p.add_argument("--log", required=True, help="CSV with columns teacher,item_i,item_j,preferred")
    p.add_argument("--lesser", type=int, required=True, help="lower-utility item of the reference pair")
    p.add_argument("--greater", type=int, required=True)
    p.add_argument("--delta", type=float, help="known U(lesser) - U(greater) (negative)")
    p.set_defaults(func=cmd_beta)

    p = sub.add_parser("plot", help="re-render figures from a results directory")
    p.add_argument("--results", required=True)
    p.add_argument("--figures", choices=sorted(FIGURE_SETS))
    p.add_argument("--out")
    p.set_defaults(func=cmd_plot)

    p = sub.add_parser("describe", help="state/action/observation space sizes")
    p.add_argument("--suite", required=True, help="suite directory, or 'covid'")
    p.set_defaults(func=cmd_describe)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (HubError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
