"""Command line driver: ``kostlan-lab <mode> [flags]``.

Every mode prints a summary JSON object on stdout and, with ``--out``, writes
a CSV whose first line is the version comment ``# kostlan-lab v1 <mode>``.
Invalid configurations print ``{"error": ..., "message": ...}`` and exit with
status 2; numerical breakdowns inside trials are data and leave the exit
status at 0.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from dataclasses import fields

import numpy as np

from .barrier import _fmt, run_trials, write_csv
from .config import MODES, ExperimentConfig
from .errors import KostlanLabError
from .kostlan import l2_norm, norm_ratio_series, sphere_norm_mc, trial_rng
from .moser import moser_demo
from .poly_core import AffinePolynomialMap, homogenize, rescale
from .systole_lab import build_loop, build_sigma, certified_flow_trials, run_systole, trial_context

__all__ = ["build_parser", "config_from_args", "run", "main"]

FLOW_COLUMNS = ["pair_index", "eta", "c0", "residual", "max_displacement", "max_radius", "breakdown"]
MOSER_COLUMNS = ["form_index", "defect_pre", "defect_post", "defect_post_fine", "max_displacement",
                 "displacement_bound"]
NORM_COLUMNS = ["degree", "ratio"]


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    defaults = ExperimentConfig()
    common = _Parser(add_help=False)
    common.add_argument("--n", type=int, default=None, help="number of affine variables")
    common.add_argument("--d", type=int, default=defaults.d, help="degree")
    common.add_argument("--r", type=int, default=defaults.r, help="number of equations")
    common.add_argument("--epsilon", type=float, default=defaults.epsilon, help="ball radius")
    common.add_argument("--trials", type=int, default=defaults.trials)
    common.add_argument("--seed", type=int, default=defaults.seed)
    common.add_argument("--rho", type=float, default=defaults.rho, help="scale of the barrier cubic")
    common.add_argument("--r-loop", type=float, default=defaults.r_loop, help="radius of the base loop")
    common.add_argument("--grid-spacing", type=float, default=defaults.grid_spacing,
                        help="grid spacing for the barrier margin")
    common.add_argument("--norm-spacing", type=float, default=defaults.norm_spacing,
                        help="grid spacing for the remainder sup norms")
    common.add_argument("--truncation", type=int, default=defaults.truncation)
    common.add_argument("--time-steps", type=int, default=defaults.time_steps)
    common.add_argument("--out", default=None, help="CSV output path")

    parser = _Parser(prog="kostlan-lab", description="Experiments on Kostlan random polynomials.")
    sub = parser.add_subparsers(dest="mode", required=True)
    for mode in MODES:
        sub.add_parser(mode, parents=[common])
    return parser


def config_from_args(args: argparse.Namespace) -> ExperimentConfig:
    names = {f.name for f in fields(ExperimentConfig)}
    values = {k: v for k, v in vars(args).items() if k in names and v is not None}
    values["out_path"] = args.out
    if args.n is None:
        values["n"] = 1 if args.mode == "verify-norms" else 2
    return ExperimentConfig(**values)


def _table(rows: list[dict], columns: list[str], index: str, mode: str, path: str | None) -> str:
    buf = io.StringIO()
    buf.write(f"# kostlan-lab v1 {mode}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for i, row in enumerate(rows):
        row = {index: i, **row}
        writer.writerow([_fmt(row[c]) for c in columns])
    text = buf.getvalue()
    if path is not None:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    return text


def _verify_norms(cfg: ExperimentConfig) -> dict:
    p = AffinePolynomialMap.constant(cfg.n, 1.0)
    degrees = sorted({max(1, k * cfg.d // 8) for k in range(1, 9)})
    ratios = norm_ratio_series(p, cfg.epsilon, degrees)
    _table([{"degree": d, "ratio": float(v)} for d, v in zip(degrees, ratios)], NORM_COLUMNS, "degree",
           cfg.mode, cfg.out_path)
    mc = None
    if cfg.trials > 0:
        P = homogenize(rescale(p, math.sqrt(cfg.d) / cfg.epsilon), cfg.d)
        est = sphere_norm_mc(P, cfg.trials, trial_rng(cfg.seed, 0))
        mc = {"degree": cfg.d, "points": cfg.trials, "exact": l2_norm(P), "estimate": est}
    return {"mode": cfg.mode, "n": cfg.n, "epsilon": cfg.epsilon, "degrees": degrees,
            "ratios": [float(v) for v in ratios], "limit_estimate": float(ratios[-1]), "monte_carlo": mc}


def _trial_summary(cfg: ExperimentConfig, records, summary) -> dict:
    out = {"mode": cfg.mode, **json.loads(summary.to_json())}
    out["breakdowns"] = sum(1 for r in records if r.extras.get("flow_breakdown"))
    return out


def _certify(cfg: ExperimentConfig) -> dict:
    ctx = trial_context(cfg)
    records, summary = run_trials(cfg, ctx.setup)
    write_csv(records, cfg.mode, cfg.out_path)
    return _trial_summary(cfg, records, summary)


def _systole(cfg: ExperimentConfig) -> dict:
    records, summary, ctx = run_systole(cfg)
    write_csv(records, cfg.mode, cfg.out_path)
    out = _trial_summary(cfg, records, summary)
    lengths = [r.loop_length for r in records if r.loop_length is not None]
    out["transported"] = len(lengths)
    out["mean_scaled_length"] = float(np.mean(lengths) * np.sqrt(cfg.d) / cfg.epsilon) if lengths else None
    out["base_length"] = ctx.loop.loop.length()
    return out


def _flow(cfg: ExperimentConfig) -> dict:
    sigma = build_sigma(cfg.rho)
    loop = build_loop(sigma, cfg.r_loop, cfg.loop_vertices)
    rows = certified_flow_trials(cfg.seed, cfg.trials, sigma, loop, cfg.time_steps)
    _table(rows, FLOW_COLUMNS, "pair_index", cfg.mode, cfg.out_path)
    done = [r for r in rows if not r["breakdown"]]
    return {
        "mode": cfg.mode, "pairs": len(rows), "breakdowns": len(rows) - len(done),
        "max_relative_residual": max((r["residual"] / r["eta"] for r in done), default=None),
        "displacement_violations": sum(r["max_displacement"] > r["c0"] + 1e-3 for r in done),
        "max_radius": max((r["max_radius"] for r in done), default=None),
    }


def _moser(cfg: ExperimentConfig) -> dict:
    rows = moser_demo(cfg.seed, cfg.trials, time_steps=cfg.time_steps)
    _table(rows, MOSER_COLUMNS, "form_index", cfg.mode, cfg.out_path)
    return {
        "mode": cfg.mode, "forms": len(rows),
        "max_defect_ratio": max((r["defect_post"] / r["defect_pre"] for r in rows), default=None),
        "min_refinement_gain": min((r["defect_post"] / r["defect_post_fine"] for r in rows), default=None),
        "displacement_violations": sum(r["max_displacement"] > r["displacement_bound"] + 1e-3 for r in rows),
    }


DRIVERS = {"verify-norms": _verify_norms, "certify": _certify, "systole": _systole, "flow": _flow,
           "moser-demo": _moser}


def run(cfg: ExperimentConfig) -> dict:
    """Dispatch ``cfg`` to its driver; returns the summary dictionary."""
    return DRIVERS[cfg.mode](cfg)


def _fail(kind: str, message: str, code: int) -> int:
    print(json.dumps({"error": kind, "message": message}))
    return code


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        cfg = config_from_args(args)
    except (UsageError, ValueError) as exc:
        return _fail("usage", str(exc), 2)
    try:
        summary = run(cfg)
    except (KostlanLabError, ValueError) as exc:
        return _fail(type(exc).__name__, str(exc), 1)
    print(json.dumps(summary))
    return 0


if __name__ == "__main__":
    sys.exit(main())
