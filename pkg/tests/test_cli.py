import csv
import os
import subprocess
import sys

import pytest

from lsawgm.cli import CSV_COLUMNS, ConfigError, compare, fit_slope, main, parse_config

QUICK = "problem = heat\nepsilon = 1e6\nnorm_binv_sq = 1.0\noutput_dir = {out}\n"


def _run(tmp_path, body, name="cfg.txt"):
    cfg = tmp_path / name
    cfg.write_text(body)
    return main(["run", str(cfg)])


def test_large_epsilon_gives_one_row_and_exit_zero(tmp_path):
    out = tmp_path / "a"
    assert _run(tmp_path, QUICK.format(out=out)) == 0
    rows = list(csv.reader(open(out / "conv_info.csv")))
    assert rows[0] == CSV_COLUMNS and len(rows) == 2
    summary = (out / "summary.txt").read_text()
    assert "status=converged" in summary and "problem=heat" in summary


def test_csv_floats_have_seventeen_significant_digits(tmp_path):
    out = tmp_path / "a"
    _run(tmp_path, QUICK.format(out=out))
    row = next(csv.DictReader(open(out / "conv_info.csv")))
    for k in ("primal_res_norm", "dual_res_norm"):
        assert row[k] == f"{float(row[k]):.17g}"
    for k in ("iteration", "trial_size", "cgls_iterations"):
        assert row[k].isdigit()


def test_rerun_is_bitwise_identical(tmp_path):
    body = "problem = heat\nepsilon = 1e-12\nnorm_binv_sq = 1.0\nmax_iterations = 4\noutput_dir = {out}\n"
    assert _run(tmp_path, body.format(out=tmp_path / "a"), "a.txt") == 2
    assert _run(tmp_path, body.format(out=tmp_path / "b"), "b.txt") == 2
    a = (tmp_path / "a" / "conv_info.csv").read_bytes()
    assert a == (tmp_path / "b" / "conv_info.csv").read_bytes()
    assert a.count(b"\n") == 5


@pytest.mark.parametrize("body, key", [
    ("problem = heat\nfrobnicate = 3\n", "frobnicate"),
    ("problem = heat\ndelta = 1.5\n", "delta"),
    ("problem = wave\n", "problem"),
    ("problem = heat\nell = two\n", "ell"),
    ("problem = heat\nproblem = cdr\n", "problem"),
])
def test_bad_config_exits_one_naming_the_key(tmp_path, capsys, body, key):
    assert _run(tmp_path, body) == 1
    assert f"'{key}'" in capsys.readouterr().err
    with pytest.raises(ConfigError) as err:
        parse_config(body)
    assert err.value.key == key


def test_missing_config_file_exits_one(tmp_path):
    assert main(["run", str(tmp_path / "nope.txt")]) == 1


def test_compare_identical_runs_gives_unit_ratios(tmp_path, capsys):
    body = "problem = heat\nepsilon = 1e-12\nnorm_binv_sq = 1.0\nmax_iterations = 3\noutput_dir = {out}\n"
    _run(tmp_path, body.format(out=tmp_path / "a"), "a.txt")
    _run(tmp_path, body.format(out=tmp_path / "b"), "b.txt")
    rows = compare(tmp_path / "a", tmp_path / "b")
    assert len(rows) == 3
    for r in rows:
        for k in ("test_ratio", "xi_trial_ratio", "xi_test_ratio", "dual_res_ratio", "primal_res_ratio"):
            assert r[k] == 1.0
    capsys.readouterr()
    assert main(["compare", str(tmp_path / "a"), str(tmp_path / "b")]) == 0
    assert "median_test_ratio=1" in capsys.readouterr().out


def test_compare_rejects_mismatched_problems(tmp_path, capsys):
    _run(tmp_path, QUICK.format(out=tmp_path / "a"), "a.txt")
    _run(tmp_path, "problem = heat\nK = 2.0\nepsilon = 1e6\nnorm_binv_sq = 1.0\noutput_dir = {out}\n".format(out=tmp_path / "b"), "b.txt")
    with pytest.raises(ValueError):
        compare(tmp_path / "a", tmp_path / "b")
    assert main(["compare", str(tmp_path / "a"), str(tmp_path / "b")]) == 1
    assert "different problems" in capsys.readouterr().err


def test_compare_does_not_touch_run_dirs(tmp_path):
    _run(tmp_path, QUICK.format(out=tmp_path / "a"))
    before = {p.name: p.read_bytes() for p in (tmp_path / "a").iterdir()}
    compare(tmp_path / "a", tmp_path / "a")
    assert before == {p.name: p.read_bytes() for p in (tmp_path / "a").iterdir()}


def test_output_root_environment_override(tmp_path):
    cfg = tmp_path / "cfg.txt"
    cfg.write_text(QUICK.format(out="rel/out"))
    env = dict(os.environ, LSAWGM_OUTPUT_ROOT=str(tmp_path / "root"))
    proc = subprocess.run([sys.executable, "-m", "lsawgm", "run", str(cfg)], env=env, cwd=tmp_path,
                          capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    assert (tmp_path / "root" / "rel" / "out" / "conv_info.csv").exists()
    assert not (tmp_path / "rel").exists()


def test_sparse_grid_mode_writes_table(tmp_path):
    out = tmp_path / "sg"
    body = f"problem = heat\nmode = sparse_grid\nsg_J_min = 0\nsg_J_max = 2\nnorm_binv_sq = 1.0\noutput_dir = {out}\n"
    assert _run(tmp_path, body) == 0
    rows = list(csv.DictReader(open(out / "conv_info.csv")))
    assert len(rows) == 3 and "sg_slope_dual_res_norm" in (out / "summary.txt").read_text()


def test_fit_slope_on_exact_power_law():
    n = [10.0 * 2**k for k in range(8)]
    s, se = fit_slope(n, [3.0 * x**-0.75 for x in n])
    assert s == pytest.approx(-0.75, abs=1e-12) and se < 1e-10
    # only the final half enters the fit
    s, _ = fit_slope(n, [1.0] * 4 + [x**-1.0 for x in n[4:]])
    assert s == pytest.approx(-1.0, abs=1e-12)
