import json

import pytest

from hubats.cli import build_parser, main


@pytest.fixture(scope="module")
def suite_dir(tmp_path_factory):
    d = tmp_path_factory.mktemp("suite")
    assert main(["generate-tasks", "--n-tasks", "3", "--seed", "0", "--out", str(d)]) == 0
    return d


def test_generate(suite_dir):
    manifest = json.loads((suite_dir / "manifest.json").read_text())
    assert len(manifest["tasks"]) == 3 and manifest["violations"] == []


def test_smoke_run_is_byte_identical(suite_dir, tmp_path, capsys):
    args = ["run", "--suite", str(suite_dir), "--profile", "smoke", "--horizon", "30", "--sims", "20",
            "--no-plots", "--alg", "ats-specific", "--alg", "naive:10", "--alg", "random"]
    assert main(args + ["--out", str(tmp_path / "a")]) == 0
    assert main(args + ["--out", str(tmp_path / "b")]) == 0
    out = capsys.readouterr().out
    assert "ATS-specific" in out and "Naive[10]" in out
    csvs = sorted(p.name for p in (tmp_path / "a").glob("*.csv"))
    assert "reward.csv" in csvs
    for name in csvs:
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_plot_from_results(suite_dir, tmp_path):
    run = ["run", "--suite", str(suite_dir), "--profile", "smoke", "--horizon", "20", "--no-plots",
           "--alg", "random", "--alg", "random-arms", "--out", str(tmp_path)]
    assert main(run) == 0
    assert main(["plot", "--results", str(tmp_path), "--out", str(tmp_path / "figs")]) == 0
    assert list((tmp_path / "figs").glob("*.png"))


def test_estimate_beta(tmp_path, capsys):
    log = tmp_path / "log.csv"
    lines = ["teacher,item_i,item_j,preferred"]
    lines += ["0,0,1,1"] * 50 + ["0,0,1,0"] * 50 + ["1,0,1,1"] * 27 + ["1,0,1,0"] * 73
    log.write_text("\n".join(lines) + "\n")
    assert main(["estimate-beta", "--log", str(log), "--lesser", "0", "--greater", "1"]) == 0
    out = capsys.readouterr().out.splitlines()
    assert out[0].startswith("teacher 0:") and "scaled 0 " in out[0]
    assert "scaled 1 " in out[1]


def test_describe_covid(capsys):
    assert main(["describe", "--suite", "covid"]) == 0
    out = capsys.readouterr().out
    assert "specific: |S|=3375000 |A|=6" in out
    assert "general: |S|=3375000 |A|=4" in out


def test_missing_suite_exit_code(tmp_path, capsys):
    assert main(["describe", "--suite", str(tmp_path / "nope")]) == 2
    assert "error:" in capsys.readouterr().err


def test_unknown_alg_rejected(suite_dir, tmp_path):
    with pytest.raises(Exception):
        main(["run", "--suite", str(suite_dir), "--profile", "smoke", "--alg", "greedy", "--out", str(tmp_path)])


def test_parser_defaults():
    args = build_parser().parse_args(["sweep-costs", "--suite", "x", "--out", "y"])
    assert args.multipliers == "0,1,2,4" and args.profile == "desk"
