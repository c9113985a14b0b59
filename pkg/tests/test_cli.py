import csv
import json

import pytest

from scbnb import __version__
from scbnb.cli import OUTPUT_ENV, RunManifest, main, parse_range, parse_sizes

TIMING = {"CPU", "median_CPU", "wall_time"}


def strip_timing_csv(path):
    with open(path) as fh:
        rows = list(csv.DictReader(fh))
    return [{k: v for k, v in r.items() if k not in TIMING} for r in rows]


def strip_timing_json(path):
    def drop(obj):
        if isinstance(obj, dict):
            return {k: drop(v) for k, v in obj.items() if k not in TIMING}
        if isinstance(obj, list):
            return [drop(v) for v in obj]
        return obj
    return drop(json.loads(path.read_text()))


def test_parse_range():
    assert parse_range("50:20:150", int) == [50, 70, 90, 110, 130, 150]
    assert parse_range("0.05:0.05:0.15") == [0.05, 0.1, 0.15]
    assert parse_range("0.1,0.2") == [0.1, 0.2]
    assert parse_sizes("200x100,300x150") == [(200, 100), (300, 150)]


@pytest.mark.parametrize("argv", [
    ["solve"],
    ["solve", "--method", "bogus"],
    ["table", "--sizes", "200by100"],
    ["success", "--n", "5:0:10"],
    ["frobnicate"],
])
def test_usage_errors_exit_1(argv, tmp_path):
    with pytest.raises(SystemExit) as exc:
        main(argv + (["--out", str(tmp_path)] if argv[0] in ("solve", "table", "success") else []))
    assert exc.value.code == 1


def test_input_errors_exit_1(tmp_path, capsys):
    assert main(["solve", "--method", "nbk", "--m", "0", "--out", str(tmp_path)]) == 1
    assert main(["solve", "--method", "nbk", "--load-problem", str(tmp_path / "nope.npz"),
                 "--out", str(tmp_path)]) == 1
    assert main(["solve", "--method", "scbnb", "--delta", "2.5", "--out", str(tmp_path)]) == 1
    assert main(["theory", "--out", str(tmp_path)]) == 1
    assert main(["rerun", str(tmp_path / "missing.json")]) == 1
    assert "error" in capsys.readouterr().err


def test_solve_exit_codes_and_outputs(tmp_path):
    out = tmp_path / "run"
    assert main(["solve", "--method", "scbnb", "--m", "60", "--n", "30", "--q", "10",
                 "--save-problem", str(tmp_path / "p.npz"), "--out", str(out)]) == 0
    assert (out / "report.csv").exists() and (out / "report.json").exists()
    man = RunManifest.from_json((out / "manifest.json").read_text())
    assert man.subcommand == "solve" and man.version == __version__ and man.seed == 0
    assert main(["solve", "--method", "nbk", "--load-problem", str(tmp_path / "p.npz"),
                 "--max-iters", "3", "--out", str(out)]) == 2


def test_env_var_output_dir(tmp_path, monkeypatch):
    monkeypatch.setenv(OUTPUT_ENV, str(tmp_path / "env"))
    assert main(["solve", "--method", "rmrnbk", "--m", "40", "--n", "20", "--format", "json"]) == 0
    report = json.loads((tmp_path / "env" / "report.json").read_text())
    assert report["method"] == "rmrnbk" and len(report["residual_history"]) == report["IT"] + 1


def test_theory_reports_half(tmp_path, capsys):
    code = main(["theory", "--sigma-min", "1", "--sigma-max", "1", "--eta", "0", "--tau", "1", "--M", "1",
                 "--gamma", "1", "--delta", "1", "--samples", "200", "--out", str(tmp_path)])
    assert code == 0
    assert "c=0.5\n" in capsys.readouterr().out
    assert json.loads((tmp_path / "theory.json").read_text())["derived"]["c"] == 0.5


def test_theory_with_probe_system(tmp_path):
    assert main(["theory", "--probe-m", "30", "--probe-n", "10", "--samples", "0", "--out", str(tmp_path)]) == 0
    rep = json.loads((tmp_path / "theory.json").read_text())
    assert rep["spectral_estimate"]["sigma_min"] <= rep["spectral_estimate"]["sigma_max"]


def test_table_and_success_shapes(tmp_path):
    out = tmp_path / "t"
    assert main(["table", "--sizes", "40x20,30x15", "--sp", "0.1", "--trials", "2", "--q", "5",
                 "--out", str(out)]) == 0
    assert len(strip_timing_csv(out / "table.csv")) == 10
    assert len(strip_timing_csv(out / "trials.csv")) == 20
    out = tmp_path / "s"
    assert main(["success", "--m", "30", "--n", "10:10:20", "--sp", "0.1:0.1:0.2", "--trials", "2",
                 "--cap", "200", "--methods", "scbnb,nbk", "--out", str(out)]) == 0
    rows = strip_timing_csv(out / "success.csv")
    assert len(rows) == 8 and {r["method"] for r in rows} == {"scbnb", "nbk"}


def test_recover_outputs(tmp_path):
    assert main(["recover", "--side", "8", "--m", "100", "--iters", "50", "--methods", "scbnb",
                 "--out", str(tmp_path)]) == 0
    for name in ("psnr.csv", "truth.pgm", "recovered_scbnb.pgm", "curve_scbnb.csv", "manifest.json"):
        assert (tmp_path / name).exists()


@pytest.mark.parametrize("argv, files", [
    (["solve", "--method", "scbnb", "--m", "40", "--n", "20", "--q", "5"], ["report.csv", "report.json"]),
    (["table", "--sizes", "30x15", "--trials", "2", "--q", "5"], ["table.csv", "trials.csv"]),
    (["recover", "--side", "8", "--m", "80", "--iters", "40"], ["psnr.csv", "curve_scbnb.csv"]),
])
def test_repeat_runs_identical(tmp_path, argv, files):
    a, b = tmp_path / "a", tmp_path / "b"
    main(argv + ["--out", str(a)])
    main(argv + ["--out", str(b)])
    for name in files:
        if name.endswith(".json"):
            assert strip_timing_json(a / name) == strip_timing_json(b / name)
        elif "CPU" in (a / name).read_text().splitlines()[0]:
            assert strip_timing_csv(a / name) == strip_timing_csv(b / name)
        else:
            assert (a / name).read_bytes() == (b / name).read_bytes()


def test_rerun_from_manifest(tmp_path):
    out = tmp_path / "r"
    main(["solve", "--method", "mrnbk", "--m", "40", "--n", "20", "--out", str(out)])
    first = (out / "report.csv").read_bytes()
    (out / "report.csv").unlink()
    assert main(["rerun", str(out / "manifest.json")]) == 0
    assert (out / "report.csv").read_bytes() == first
