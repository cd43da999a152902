import csv
import io
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from conftest import make_hub
from hubats import bench
from hubats.bench import (
    ATS_SPECIFIC,
    NAIVE,
    RANDOM,
    RANDOM_ARMS,
    AlgorithmSpec,
    aggregate,
    compute_metrics,
    episode_seed,
    first_passage,
    run_episode,
    run_suite,
    smooth,
)
from hubats.episode import EpisodeLog
from hubats.errors import InvalidParameterError
from hubats.hub import ItemSample, PreferenceSample
from hubats.planner import PlannerParams

SMALL = PlannerParams(simulations_per_step=30)


def smooth_oracle(x, w):
    out = []
    for t in range(len(x)):
        win = [v for v in x[max(0, t - w + 1): t + 1] if not math.isnan(v)]
        out.append(sum(win) / len(win) if win else math.nan)
    return np.array(out)


@given(arrays(float, st.integers(1, 40), elements=st.one_of(st.floats(-100, 100), st.just(math.nan))),
       st.integers(1, 12))
def test_smooth_matches_loop(x, w):
    np.testing.assert_allclose(smooth(x, w), smooth_oracle(x, w), rtol=1e-9, atol=1e-9, equal_nan=True)


def test_first_passage():
    assert first_passage(np.array([0.1, 0.5, 0.8, 0.9])) == 2
    assert first_passage(np.array([0.1, 0.5])) == 2
    assert first_passage(np.array([0.1, 0.95]), 0.9) == 1


def test_compute_metrics_by_hand():
    hub = make_hub(utility=(8, 2, 0))
    log = EpisodeLog("x", 0.5)
    log.append("pull", 0, ItemSample(0, 0), 8.0, 8.0, u_hat=(8, 2, 0), arm_estimates=(1, 1, 1))
    log.append("query", 1, PreferenceSample(1, (0, 1), True), math.nan, 0.0)
    log.append("pull", 2, ItemSample(2, 1), 2.0, 2.0, u_hat=(5, 5, math.nan))
    m = compute_metrics(log, hub)
    np.testing.assert_allclose(m["reward"], [8.0, 8.0, 8.5])
    np.testing.assert_array_equal(m["query"], [0, 1, 0])
    np.testing.assert_array_equal(m["best_arm"], [1 if hub.best_arm == 0 else 0, 0, 1 if hub.best_arm == 2 else 0])
    assert m["u_loss"][0] == 0.0 and math.isnan(m["u_loss"][1])
    # missing item counts at mid-range 5
    assert m["u_loss"][2] == pytest.approx(math.sqrt(9 + 9 + 25))
    assert m["arm_loss"][0] == pytest.approx(np.linalg.norm(np.ones(3) - hub.arm_values))
    np.testing.assert_array_equal(m["pull_0"] + m["pull_1"] + m["pull_2"] + m["query"], np.ones(3))


def test_aggregate_mean_and_iqr():
    sets = [{"reward": np.full(4, v), "u_loss": np.full(4, np.nan)} for v in (0.0, 1.0, 2.0, 3.0, 4.0)]
    agg = aggregate(sets, window=1)
    np.testing.assert_allclose(agg["reward"]["mean"], 2.0)
    np.testing.assert_allclose(agg["reward"]["q25"], 1.0)
    np.testing.assert_allclose(agg["reward"]["q75"], 3.0)
    assert "u_loss" not in agg
    with pytest.raises(InvalidParameterError):
        aggregate([])
    with pytest.raises(InvalidParameterError):
        aggregate([{"reward": np.zeros(2)}, {"reward": np.zeros(3)}])


def test_algorithm_names_and_checks():
    assert AlgorithmSpec(NAIVE, T=50).name == "Naive[50]"
    assert AlgorithmSpec(ATS_SPECIFIC).name == "ATS-specific"
    assert AlgorithmSpec(RANDOM, label="R").name == "R"
    with pytest.raises(InvalidParameterError):
        AlgorithmSpec("greedy")
    with pytest.raises(InvalidParameterError):
        AlgorithmSpec(NAIVE)


def test_episode_seed_is_stable_and_distinct():
    s = {episode_seed(0, t, r) for t in range(10) for r in range(10)}
    assert len(s) == 100
    assert episode_seed(3, 1, 2) == episode_seed(3, 1, 2)


def test_random_baselines(hub):
    log = run_episode(AlgorithmSpec(RANDOM), hub, 4000, 0)
    freq = np.mean([r.kind == "query" for r in log.rows])
    assert freq == pytest.approx(0.5, abs=0.03)  # 3 arms, 3 teachers
    log = run_episode(AlgorithmSpec(RANDOM_ARMS), hub, 500, 0)
    assert all(r.kind == "pull" for r in log.rows)


def test_common_random_numbers(hub):
    a = run_episode(AlgorithmSpec(RANDOM), hub, 50, 7)
    b = run_episode(AlgorithmSpec(RANDOM), hub, 50, 7)
    assert a.to_csv() == b.to_csv() and a.seed == 7


@pytest.fixture(scope="module")
def small_result():
    hubs = [make_hub(), make_hub(utility=(0, 10, 4))]
    algs = [AlgorithmSpec(ATS_SPECIFIC, planner=SMALL), AlgorithmSpec(NAIVE, T=20), AlgorithmSpec(RANDOM)]
    return run_suite(algs, hubs, 2, 40, base_seed=5)


def test_run_suite_shape(small_result):
    assert small_result.algorithms == ["ATS-specific", "Naive[20]", "Random"]
    for a in small_result.algorithms:
        assert len(small_result.episodes[a]) == 4
        assert len(small_result.series[a]["reward"]["mean"]) == 40
    assert small_result.metadata["aborted"] == []
    seeds = {a: [e["seed"] for e in small_result.episodes[a]] for a in small_result.algorithms}
    assert seeds["ATS-specific"] == seeds["Random"]


def test_run_suite_parallel_matches_serial(small_result):
    hubs = [make_hub(), make_hub(utility=(0, 10, 4))]
    algs = [AlgorithmSpec(ATS_SPECIFIC, planner=SMALL), AlgorithmSpec(NAIVE, T=20), AlgorithmSpec(RANDOM)]
    par = run_suite(algs, hubs, 2, 40, base_seed=5, workers=2)
    assert bench.episodes_csv(par) == bench.episodes_csv(small_result)


def test_export_files(small_result, tmp_path):
    files = bench.export(small_result, tmp_path, plots=False)
    names = {f.name for f in files}
    assert {"reward.csv", "episodes.csv", "manifest.json", "best_arm.csv"} <= names
    rows = list(csv.DictReader(io.StringIO((tmp_path / "reward.csv").read_text())))
    assert len(rows) == 3 * 40
    eps = list(csv.DictReader(io.StringIO((tmp_path / "episodes.csv").read_text())))
    assert len(eps) == 12
    first = {f.name: f.read_bytes() for f in files}
    bench.export(small_result, tmp_path, plots=False)
    assert first == {f.name: f.read_bytes() for f in files}


def test_export_with_plots(small_result, tmp_path):
    files = bench.export(small_result, tmp_path)
    pngs = [f for f in files if f.suffix == ".png"]
    assert pngs and all(f.read_bytes()[:4] == b"\x89PNG" for f in pngs)


def test_export_empty_raises(tmp_path):
    with pytest.raises(InvalidParameterError):
        bench.export(bench.SuiteResult({}, {}), tmp_path / "out")
    assert not (tmp_path / "out").exists()


def test_json_round_trip(small_result):
    back = bench.result_from_json(bench.result_to_json(small_result))
    assert bench.series_csv(back, "reward") == bench.series_csv(small_result, "reward")
    assert bench.episodes_csv(back) == bench.episodes_csv(small_result)


def test_cost_sweep_labels_and_costs():
    hubs = [make_hub()]
    sweep = bench.run_cost_sweep(hubs, [0, 2], SMALL, 1, 10, base_seed=1)
    assert [r.algorithms for r in sweep.values()] == [["ATS x0"], ["ATS x2"]]
    merged = bench.merge_results(list(sweep.values()))
    assert merged.algorithms == ["ATS x0", "ATS x2"]
    assert sweep[2].metadata["cost_multiplier"] == 2
