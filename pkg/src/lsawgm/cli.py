"""Command line runner: `run <config>` and `compare <dirA> <dirB>`.

Configs are flat `key = value` files; `#` starts a comment.  The output
directory is resolved against $LSAWGM_OUTPUT_ROOT when that is set.
"""

from __future__ import annotations

import argparse
import csv
import logging
import math
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .awgm import AwgmParams, IterationRecord, RunResult, Status, ls_awgm, sparse_grid_solve
from .problems import ProblemSpec, cdr_problem, heat_problem

OUTPUT_ROOT_ENV = "LSAWGM_OUTPUT_ROOT"
CSV_COLUMNS = ["iteration", "primal_res_norm", "dual_res_norm", "trial_size", "test_size", "xi_trial_size", "xi_test_size", "cgls_iterations"]


class ConfigError(ValueError):
    def __init__(self, key: str, message: str):
        super().__init__(f"config key '{key}': {message}")
        self.key = key


def _choice(*allowed):
    def parse(v):
        v = v.lower()
        if v not in allowed:
            raise ValueError(f"expected one of {', '.join(allowed)}")
        return v
    return parse


def _opt_int(v):
    return None if v.lower() in ("none", "") else int(v)


def _opt_float(v):
    return None if v.lower() in ("none", "") else float(v)


_KEYS = {
    "problem": _choice("heat", "cdr"),
    "mode": _choice("awgm", "sparse_grid", "both"),
    "output_dir": str,
    "N": int,
    "K": float,
    "T": float,
    "space_dims": int,
    "delta": float,
    "omega_ls": float,
    "gamma_ls": float,
    "ell": int,
    "expansion_variant": _choice("full", "reduced", "temporal"),
    "residual_construction": _choice("fullres", "optimres"),
    "epsilon": float,
    "max_iterations": int,
    "cgls_max_iterations": int,
    "max_trial_size": _opt_int,
    "norm_binv_sq": _opt_float,
    "initial_J": int,
    "sg_J_min": int,
    "sg_J_max": int,
}


@dataclass
class RunConfig:
    problem: str = "heat"
    mode: str = "awgm"
    output_dir: str = "run"
    N: int = 3
    K: float = 1.0
    T: float = 1.0
    space_dims: int = 1
    params: AwgmParams = field(default_factory=AwgmParams)
    sg_J_min: int = 0
    sg_J_max: int = 4

    def build_problem(self) -> ProblemSpec:
        if self.problem == "heat":
            return heat_problem(self.N, self.K, self.T, self.space_dims)
        return cdr_problem()

    def problem_label(self) -> str:
        if self.problem == "heat":
            return f"heat N={self.N} K={self.K!r} T={self.T!r} space_dims={self.space_dims}"
        return "cdr"


def parse_config(text: str) -> RunConfig:
    raw: dict[str, object] = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(line, f"line {lineno} is not of the form key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in _KEYS:
            raise ConfigError(key, "unknown key")
        if key in raw:
            raise ConfigError(key, "given twice")
        try:
            raw[key] = _KEYS[key](value)
        except ValueError as exc:
            raise ConfigError(key, f"bad value '{value}' ({exc})") from None
    pkeys = {"delta", "omega_ls", "gamma_ls", "ell", "expansion_variant", "residual_construction", "epsilon",
             "max_iterations", "cgls_max_iterations", "max_trial_size", "norm_binv_sq", "initial_J"}
    pargs = {k: raw.pop(k) for k in list(raw) if k in pkeys}
    try:
        params = AwgmParams(**pargs)
    except ValueError as exc:
        bad = next((k for k in pargs if k in str(exc)), next(iter(pargs), "params"))
        raise ConfigError(bad, str(exc)) from None
    cfg = RunConfig(params=params, **raw)
    if cfg.sg_J_min < 0 or cfg.sg_J_max < cfg.sg_J_min:
        raise ConfigError("sg_J_max", "need 0 <= sg_J_min <= sg_J_max")
    if cfg.space_dims not in (1, 2, 3):
        raise ConfigError("space_dims", "supported values are 1, 2, 3")
    if cfg.problem == "cdr" and cfg.space_dims != 1:
        raise ConfigError("space_dims", "the cdr problem has one space dimension")
    return cfg


def output_path(cfg: RunConfig) -> Path:
    root = os.environ.get(OUTPUT_ROOT_ENV)
    p = Path(cfg.output_dir)
    return Path(root) / p if root and not p.is_absolute() else p


def _fmt(x) -> str:
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return f"{float(x):.17g}"


def write_csv(path: Path, history: list[IterationRecord]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for r in history:
            w.writerow([_fmt(r.k), _fmt(r.primal_res_norm), _fmt(r.dual_res_norm), _fmt(r.trial_size), _fmt(r.test_size),
                        _fmt(r.xi_trial_size), _fmt(r.xi_test_size), _fmt(r.cgls_iterations)])


def read_csv(path: Path) -> list[dict]:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    return [{k: (float(v) if "norm" in k else int(v)) for k, v in r.items()} for r in rows]


def fit_slope(sizes, values) -> tuple[float, float]:
    """OLS slope of log10(value) against log10(size) over the final half, with its standard error."""
    x = np.log10(np.asarray(sizes, dtype=float))
    y = np.log10(np.asarray(values, dtype=float))
    h = len(x) // 2
    x, y = x[h:], y[h:]
    if len(x) < 2 or np.ptp(x) == 0:
        return float("nan"), float("nan")
    A = np.column_stack([x, np.ones_like(x)])
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    if len(x) < 3:
        return float(coef[0]), float("nan")
    res = y - A @ coef
    s2 = float(res @ res) / (len(x) - 2)
    se = math.sqrt(s2 / float(np.sum((x - x.mean()) ** 2)))
    return float(coef[0]), se


def summarize(history: list[IterationRecord], prefix: str = "") -> list[str]:
    n = [r.trial_size for r in history]
    lines = []
    for name in ("dual_res_norm", "primal_res_norm"):
        s, se = fit_slope(n, [getattr(r, name) for r in history])
        lines += [f"{prefix}slope_{name}={_fmt(s)}", f"{prefix}slope_{name}_stderr={_fmt(se)}"]
    rt = np.array([r.test_size / r.trial_size for r in history])
    rx = np.array([r.xi_test_size / r.xi_trial_size for r in history])
    its = [r.cgls_iterations for r in history]
    lines += [
        f"{prefix}iterations={len(history)}",
        f"{prefix}final_trial_size={history[-1].trial_size}",
        f"{prefix}final_dual_res_norm={_fmt(history[-1].dual_res_norm)}",
        f"{prefix}ratio_test_trial_min={_fmt(rt.min())}",
        f"{prefix}ratio_test_trial_max={_fmt(rt.max())}",
        f"{prefix}ratio_xi_test_xi_trial_min={_fmt(rx.min())}",
        f"{prefix}ratio_xi_test_xi_trial_max={_fmt(rx.max())}",
        f"{prefix}cgls_max={max(its)}",
        f"{prefix}cgls_median_last5={_fmt(float(np.median(its[-5:])))}",
    ]
    return lines


def execute(cfg: RunConfig) -> tuple[int, Path]:
    out = output_path(cfg)
    out.mkdir(parents=True, exist_ok=True)
    prob = cfg.build_problem()
    spec = prob.operator
    summary = [f"problem={cfg.problem_label()}", f"mode={cfg.mode}",
               f"expansion_variant={cfg.params.expansion_variant.value}",
               f"residual_construction={cfg.params.residual_construction.value}"]
    status = 0
    if cfg.mode in ("awgm", "both"):
        res: RunResult = ls_awgm(spec, prob, cfg.params)
        write_csv(out / "conv_info.csv", res.history)
        summary += [f"status={res.status.value}"] + summarize(res.history)
        status = 0 if res.status is Status.CONVERGED else 2
    if cfg.mode in ("sparse_grid", "both"):
        sg = sparse_grid_solve(spec, prob, range(cfg.sg_J_min, cfg.sg_J_max + 1), cfg.params)
        write_csv(out / ("conv_info.csv" if cfg.mode == "sparse_grid" else "conv_info_sg.csv"), sg.history)
        summary += summarize(sg.history, "sg_")
    (out / "summary.txt").write_text("\n".join(summary) + "\n")
    return status, out


def _read_summary(d: Path) -> dict:
    out = {}
    for line in (d / "summary.txt").read_text().splitlines():
        if "=" in line:
            k, v = line.split("=", 1)
            out[k] = v
    return out


def compare(dir_a, dir_b) -> list[dict]:
    """Per-iteration ratios a/b at nearest trial size (in log scale)."""
    a, b = Path(dir_a), Path(dir_b)
    sa, sb = _read_summary(a), _read_summary(b)
    if sa.get("problem") != sb.get("problem"):
        raise ValueError(f"runs solve different problems: {sa.get('problem')} vs {sb.get('problem')}")
    ra, rb = read_csv(a / "conv_info.csv"), read_csv(b / "conv_info.csv")
    lb = np.log([r["trial_size"] for r in rb])
    rows = []
    for r in ra:
        j = int(np.argmin(np.abs(lb - math.log(r["trial_size"]))))
        s = rb[j]
        rows.append({
            "iteration": r["iteration"],
            "trial_size": r["trial_size"],
            "matched_trial_size": s["trial_size"],
            "test_ratio": r["test_size"] / s["test_size"],
            "xi_trial_ratio": r["xi_trial_size"] / s["xi_trial_size"],
            "xi_test_ratio": r["xi_test_size"] / s["xi_test_size"],
            "dual_res_ratio": r["dual_res_norm"] / s["dual_res_norm"] if s["dual_res_norm"] else float("nan"),
            "primal_res_ratio": r["primal_res_norm"] / s["primal_res_norm"] if s["primal_res_norm"] else float("nan"),
        })
    return rows


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="lsawgm")
    sub = ap.add_subparsers(dest="cmd", required=True)
    p = sub.add_parser("run", help="run an experiment from a key=value config")
    p.add_argument("config")
    p.add_argument("-v", "--verbose", action="store_true")
    c = sub.add_parser("compare", help="size and residual ratios between two run directories")
    c.add_argument("dir_a")
    c.add_argument("dir_b")
    args = ap.parse_args(argv)
    if args.cmd == "run":
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
        try:
            cfg = parse_config(Path(args.config).read_text())
        except ConfigError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return 1
        except OSError as exc:
            print(f"error: cannot read config: {exc}", file=sys.stderr)
            return 1
        status, out = execute(cfg)
        print(f"wrote {out / 'conv_info.csv'} and {out / 'summary.txt'}")
        return status
    try:
        rows = compare(args.dir_a, args.dir_b)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    cols = list(rows[0]) if rows else []
    print(",".join(cols))
    for r in rows:
        print(",".join(_fmt(r[k]) for k in cols))
    for k in ("test_ratio", "xi_trial_ratio", "xi_test_ratio", "dual_res_ratio"):
        vals = [r[k] for r in rows]
        print(f"median_{k}={_fmt(float(np.median(vals)))}" if vals else f"median_{k}=nan")
    return 0


if __name__ == "__main__":
    sys.exit(main())
