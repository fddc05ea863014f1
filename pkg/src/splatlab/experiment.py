"""Run an experiment config end to end and write its artifacts.

Layout of an output directory::

    manifest.json                 sha256 of every other file
    summary.csv                   one row per (seed, variant); sweeps only
    <seed>/<variant>/report.csv   one row per evaluation
    <seed>/<variant>/summary.json
    <seed>/<variant>/cloud.splt   final checkpoint
    <seed>/<variant>/views/       held-out renders, view<i>.ppm and view<i>.pfm

A single run (one seed, no variants) writes the per-run files at the top
level instead. Nothing depends on wall-clock time or absolute paths, so a
rerun of the same config reproduces the manifest byte for byte.
"""

from __future__ import annotations

import csv
import dataclasses
import hashlib
import io
import json
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .config import ExperimentConfig, InitConfig, Variant
from .gaussians import GaussianCloud
from .io import encode_pfm, encode_ppm
from .priors import SyntheticScene, dense_init, make_scene, simulate_prior, sparse_init
from .rasterizer import render
from .trainer import TrainConfig, TrainReport, train

log = logging.getLogger(__name__)

MANIFEST = "manifest.json"
SUMMARY_COLUMNS = ("label", "scene_seed", "iteration", "psnr", "ssim", "depth_pearson")
BASE_VARIANT = Variant(name="run")


def build_init(scene: SyntheticScene, init: InitConfig, seed: int) -> GaussianCloud:
    if init.mode == "sparse":
        cloud = sparse_init(scene, init.jitter, seed, min_views=init.min_views)
    else:
        cloud = dense_init(scene, init.jitter, init.drop_fraction, seed, keep=init.keep)
    if init.scale_factor != 1.0 and "log_scales" not in init.keep:
        cloud.log_scales += np.log(init.scale_factor)
    return cloud


def prior_maps(scene: SyntheticScene, cfg: ExperimentConfig, seed: int) -> dict:
    # one independent noise stream per training view
    return {
        i: simulate_prior(scene.depths[i], cfg.prior, seed * 1000 + i) for i in scene.train_ids
    }


@dataclass
class RunResult:
    label: str
    seed: int
    report: TrainReport
    files: dict[str, bytes]


def run_variant(
    cfg: ExperimentConfig,
    scene: SyntheticScene,
    seed: int,
    variant: Variant,
    prefix: str = "",
) -> RunResult:
    """Train one variant on a prepared scene; returns the files to write."""
    tcfg: TrainConfig = dataclasses.replace(cfg.train, loss=cfg.variant_loss(variant), seed=seed)
    init = build_init(scene, cfg.init, seed)
    priors = prior_maps(scene, cfg, seed) if tcfg.loss.lambda_depth > 0 else {}
    cloud, report = train(scene, init, tcfg, priors, label=variant.name)
    report.checkpoint = prefix + "cloud.splt"

    files = {
        prefix + "report.csv": report.to_csv().encode(),
        prefix + "summary.json": report.to_json().encode(),
        prefix + "cloud.splt": cloud.to_bytes(),
    }
    for i in scene.test_ids:
        out = render(cloud, scene.cameras[i], background=tcfg.background, depth_mode=tcfg.depth_mode)
        files[f"{prefix}views/view{i}.ppm"] = encode_ppm(out.color.numpy())
        files[f"{prefix}views/view{i}.pfm"] = encode_pfm(out.depth.numpy())
    return RunResult(variant.name, seed, report, files)


def summary_csv(results: list[RunResult]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(SUMMARY_COLUMNS)
    for r in results:
        f = r.report.final
        writer.writerow(
            [r.label, r.seed, f.iteration, repr(f.psnr), repr(f.ssim), repr(f.depth_pearson)]
        )
    return buf.getvalue()


def manifest_bytes(files: dict[str, bytes]) -> bytes:
    entries = {
        name: {"sha256": hashlib.sha256(blob).hexdigest(), "bytes": len(blob)}
        for name, blob in sorted(files.items())
    }
    return (json.dumps({"files": entries}, indent=2, sort_keys=True) + "\n").encode()


def verify_manifest(out_dir) -> list[str]:
    """Names of manifest entries whose file is missing or has changed."""
    out_dir = Path(out_dir)
    entries = json.loads((out_dir / MANIFEST).read_text())["files"]
    bad = []
    for name, meta in entries.items():
        path = out_dir / name
        if not path.is_file() or hashlib.sha256(path.read_bytes()).hexdigest() != meta["sha256"]:
            bad.append(name)
    return bad


def run_experiment(cfg: ExperimentConfig, out_dir=None) -> tuple[list[RunResult], Path]:
    """Run every (seed, variant) in ``cfg`` sequentially and write the artifacts."""
    out = Path(out_dir if out_dir is not None else Path(cfg.output) / cfg.name)
    variants = cfg.variants or (BASE_VARIANT,)
    sweep = cfg.is_sweep
    results: list[RunResult] = []
    files: dict[str, bytes] = {}
    for seed in cfg.run_seeds():
        scene = make_scene(cfg.scene, seed)
        for v in variants:
            prefix = f"{seed}/{v.name}/" if sweep else ""
            log.info("training seed=%d variant=%s", seed, v.name)
            res = run_variant(cfg, scene, seed, v, prefix)
            results.append(res)
            files.update(res.files)
    if sweep:
        files["summary.csv"] = summary_csv(results).encode()

    out.mkdir(parents=True, exist_ok=True)
    for name, blob in files.items():
        path = out / name
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_bytes(blob)
    (out / MANIFEST).write_bytes(manifest_bytes(files))
    return results, out
