"""Command-line entry point: ``splatlab run`` and ``splatlab compare``."""

from __future__ import annotations

import argparse
import csv
import dataclasses
import io
import logging
import math
import sys
from pathlib import Path

from . import config as config_mod
from .depth import ConfigError
from .experiment import run_experiment
from .trainer import TrainingDiverged

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DIVERGED = 3
EXIT_INPUT = 4

COMPARE_COLUMNS = ("rank", "label", "scene_seed", "iteration", "psnr", "ssim", "depth_pearson", "source")


class CompareError(ValueError):
    pass


def _apply_overrides(cfg, seed, iterations):
    if seed is not None:
        cfg = dataclasses.replace(cfg, seed=seed, seeds=())
    if iterations is not None:
        train = dataclasses.replace(
            cfg.train, iterations=iterations, eval_every=min(cfg.train.eval_every, iterations)
        )
        cfg = dataclasses.replace(cfg, train=train)
    return cfg


def cmd_run(args) -> int:
    try:
        cfg = config_mod.load(args.config)
        cfg = _apply_overrides(cfg, args.seed, args.iterations)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"cannot read config: {exc}", file=sys.stderr)
        return EXIT_INPUT
    try:
        results, out = run_experiment(cfg, args.out)
    except TrainingDiverged as exc:
        print(f"training aborted: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    for r in results:
        f = r.report.final
        print(
            f"seed={r.seed} {r.label}: psnr={f.psnr:.3f} ssim={f.ssim:.4f} "
            f"depth_r={f.depth_pearson:.4f}"
        )
    print(f"artifacts in {out}")
    return EXIT_OK


def _float(text: str) -> float:
    return math.nan if text in ("", "nan") else float(text)


def read_rows(path) -> list[dict]:
    """Final-iteration row per label from a report or summary CSV."""
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    need = {"label", "scene_seed", "iteration", "psnr", "ssim", "depth_pearson"}
    if not rows or not need <= set(rows[0]):
        raise CompareError(f"{path}: not a report CSV (needs columns {sorted(need)})")
    final: dict[tuple[str, str], dict] = {}
    for row in rows:
        key = (row["label"], row["scene_seed"])
        if key not in final or int(row["iteration"]) >= int(final[key]["iteration"]):
            final[key] = row
    return [
        {
            "label": row["label"],
            "scene_seed": row["scene_seed"],
            "iteration": int(row["iteration"]),
            "psnr": _float(row["psnr"]),
            "ssim": _float(row["ssim"]),
            "depth_pearson": _float(row["depth_pearson"]),
            "source": str(path),
        }
        for row in final.values()
    ]


def rank(rows: list[dict]) -> list[dict]:
    """Sort by PSNR, then SSIM, both descending; rows must share one scene."""
    if len(rows) < 2:
        raise CompareError("compare needs at least two reports")
    seeds = sorted({r["scene_seed"] for r in rows})
    if len(seeds) > 1:
        raise CompareError(f"reports come from different scenes (seeds {', '.join(seeds)})")
    ordered = sorted(rows, key=lambda r: (-r["psnr"], -r["ssim"]))
    return [dict(r, rank=i + 1) for i, r in enumerate(ordered)]


def ranked_csv(rows: list[dict]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(COMPARE_COLUMNS)
    for r in rows:
        writer.writerow([r[c] if not isinstance(r[c], float) else repr(r[c]) for c in COMPARE_COLUMNS])
    return buf.getvalue()


def ranked_text(rows: list[dict]) -> str:
    header = ("#", "label", "psnr", "ssim", "depth_r")
    body = [
        (str(r["rank"]), r["label"], f"{r['psnr']:.3f}", f"{r['ssim']:.4f}", f"{r['depth_pearson']:.4f}")
        for r in rows
    ]
    widths = [max(len(x) for x in col) for col in zip(header, *body)]
    lines = []
    for line in (header, *body):
        cells = [line[0].rjust(widths[0]), line[1].ljust(widths[1])]
        cells += [c.rjust(w) for c, w in zip(line[2:], widths[2:])]
        lines.append("  ".join(cells).rstrip())
    return "\n".join(lines) + "\n"


def cmd_compare(args) -> int:
    try:
        rows = [row for p in args.reports for row in read_rows(p)]
        ordered = rank(rows)
    except (CompareError, OSError) as exc:
        print(f"compare failed: {exc}", file=sys.stderr)
        return EXIT_INPUT
    sys.stdout.write(ranked_text(ordered))
    if args.out:
        Path(args.out).write_text(ranked_csv(ordered))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="splatlab", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true", help="log training progress")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="train and evaluate an experiment config")
    run.add_argument("config", help="YAML experiment file")
    run.add_argument("--out", help="output directory (default: <output>/<name> from the config)")
    run.add_argument("--seed", type=int, help="run this single seed instead of the configured ones")
    run.add_argument("--iterations", type=int, help="override train.iterations")
    run.set_defaults(func=cmd_run)

    cmp_ = sub.add_parser("compare", help="rank report CSVs from one scene")
    cmp_.add_argument("reports", nargs="+", help="report.csv or summary.csv files")
    cmp_.add_argument("--out", help="also write the ranking as CSV")
    cmp_.set_defaults(func=cmd_compare)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s"
    )
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
