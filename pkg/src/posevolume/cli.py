"""Command-line entry point: ``posevolume <command> CONFIG --seed S --out PATH``.

Exit codes: 0 success, 2 configuration error, 3 no overlap (single scene).
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

from .bench import SuiteConfig, run_benchmark
from .cloudio import load_cloud, preprocess, save_cloud, save_result, write_json
from .convnet import save_params
from .engine import EngineConfig, NoOverlap, prepare_inputs, register
from .features import load_bundle, save_bundle
from .geometry import CameraIntrinsics, Pose
from .gradcheck import CHECKS, run_grad_checks
from .scenes import SceneConfig, SceneGenerationError, generate_scene, perturb_problem
from .training import TrainConfig, train_scorer, write_loss_csv

EXIT_OK, EXIT_CONFIG, EXIT_NO_OVERLAP = 0, 2, 3

log = logging.getLogger("posevolume")


class ConfigError(ValueError):
    pass


def _load_config(path) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            data = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object")
    return data


def _build(factory, data, what):
    try:
        return factory(data)
    except (TypeError, ValueError, KeyError) as exc:
        raise ConfigError(f"invalid {what} config: {exc}") from None


# -- synth -------------------------------------------------------------------

def cmd_synth(cfg: dict, seed: int, out: Path) -> int:
    """Write ``scene_XXXX.{xyz,feat,json}``; each JSON is a ready ``register`` config."""
    cfg = dict(cfg)
    n = cfg.pop("n_scenes", 1)
    yaw_range = cfg.pop("yaw_range", 360.0)
    max_offset = cfg.pop("max_offset", 10.0)
    engine = cfg.pop("engine", {})
    scene_cfg = _build(SceneConfig.from_dict, cfg.pop("scene", {}), "scene")
    if cfg:
        raise ConfigError(f"unknown synth keys: {sorted(cfg)}")
    if not isinstance(n, int) or n < 1:
        raise ConfigError("n_scenes must be a positive integer")
    out.mkdir(parents=True, exist_ok=True)
    for i in range(n):
        scene = generate_scene(scene_cfg, seed, i)
        init = perturb_problem(scene, seed, yaw_range, max_offset)
        stem = f"scene_{i:04d}"
        save_cloud(scene.cloud, out / f"{stem}.xyz")
        save_bundle(out / f"{stem}.feat", scene.features)
        write_json({
            "cloud": f"{stem}.xyz", "features": f"{stem}.feat",
            "intrinsics": scene.intrinsics.to_dict(), "initial_pose": init.to_dict(),
            "truth": scene.gt_pose.to_dict(), "engine": engine,
            "scene_id": i, "seed": seed,
        }, out / f"{stem}.json")
    return EXIT_OK


# -- register ----------------------------------------------------------------

def cmd_register(cfg: dict, seed: int, out: Path, base: Path) -> int:
    for key in ("cloud", "features", "intrinsics"):
        if key not in cfg:
            raise ConfigError(f"register config needs {key!r}")
    engine = _build(EngineConfig.from_dict, cfg.get("engine", {}), "engine")
    intr = _build(CameraIntrinsics.from_dict, cfg["intrinsics"], "intrinsics")
    init = _build(Pose.from_dict, cfg["initial_pose"], "initial_pose") if "initial_pose" in cfg else None
    truth = _build(Pose.from_dict, cfg["truth"], "truth") if cfg.get("truth") else None
    if engine.params_path is not None:
        engine = replace(engine, params_path=str(base / engine.params_path))
    try:
        cloud = load_cloud(base / cfg["cloud"])
        bundle = load_bundle(base / cfg["features"])
    except (OSError, ValueError) as exc:
        raise ConfigError(str(exc)) from None
    inputs = _build(lambda _: prepare_inputs(cloud, intr, bundle, engine), None, "scene")
    try:
        result = register(inputs, engine, init, truth=truth)
    except NoOverlap as exc:
        log.error("%s", exc)
        write_json({"error": "no_overlap", "iteration": exc.iteration, "message": str(exc)}, out)
        return EXIT_NO_OVERLAP
    doc = result.to_dict()
    doc["seed"] = seed
    save_result(doc, out)
    return EXIT_OK


# -- bench / train / grad-check ---------------------------------------------

def cmd_bench(cfg: dict, seed: int, out: Path, base: Path) -> int:
    cfg = dict(cfg, seed=seed)
    suite = _build(SuiteConfig.from_dict, cfg, "suite")
    if suite.engine.params_path is not None:
        suite = replace(suite, engine=replace(suite.engine,
                                              params_path=str(base / suite.engine.params_path)))
    run_benchmark(suite, out_dir=out)
    return EXIT_OK


def cmd_train(cfg: dict, seed: int, out: Path) -> int:
    config = _build(TrainConfig.from_dict, dict(cfg, seed=seed), "training")
    result = train_scorer(config)
    out.mkdir(parents=True, exist_ok=True)
    save_params(out / "params.bin", result.params)
    write_loss_csv(result.losses, out / "loss.csv")
    write_json({"eval_initial": result.eval_initial, "eval_final": result.eval_final,
                "config": config.to_dict()}, out / "summary.json")
    return EXIT_OK


def cmd_grad_check(cfg: dict, seed: int, out: Path) -> int:
    cfg = dict(cfg)
    points = cfg.pop("points", 20)
    checks = cfg.pop("checks", list(CHECKS))
    tolerance = cfg.pop("tolerance", 1e-4)
    if cfg:
        raise ConfigError(f"unknown grad-check keys: {sorted(cfg)}")
    report = _build(lambda _: run_grad_checks(points, seed, checks, tolerance), None, "grad-check")
    write_json(report.to_dict(), out)
    return EXIT_OK


def cmd_preprocess(cfg: dict, seed: int, out: Path, base: Path) -> int:
    """Voxel filter and subsample an XYZ cloud."""
    if "cloud" not in cfg:
        raise ConfigError("preprocess config needs 'cloud'")
    try:
        cloud = load_cloud(base / cfg["cloud"])
        filtered = preprocess(cloud, cfg.get("voxel", 0.1), cfg.get("max_points", 40960), seed)
    except (OSError, ValueError) as exc:
        raise ConfigError(str(exc)) from None
    save_cloud(filtered, out)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="posevolume", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in [
        ("synth", "generate synthetic scenes"),
        ("register", "register one scene and write the result JSON"),
        ("bench", "run a benchmark suite (report.json + scenes.jsonl)"),
        ("train-scorer", "train the convolutional scorer"),
        ("grad-check", "finite-difference checks of every analytic gradient"),
        ("preprocess", "voxel-downsample and subsample an XYZ cloud"),
    ]:
        p = sub.add_parser(name, help=help_text)
        p.add_argument("config", help="JSON config file")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--out", required=True, help="output file or directory")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    out = Path(args.out)
    try:
        cfg = _load_config(args.config)
        base = Path(args.config).resolve().parent
        if args.command == "synth":
            return cmd_synth(cfg, args.seed, out)
        if args.command == "register":
            return cmd_register(cfg, args.seed, out, base)
        if args.command == "bench":
            return cmd_bench(cfg, args.seed, out, base)
        if args.command == "train-scorer":
            return cmd_train(cfg, args.seed, out)
        if args.command == "grad-check":
            return cmd_grad_check(cfg, args.seed, out)
        return cmd_preprocess(cfg, args.seed, out, base)
    except (ConfigError, SceneGenerationError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
