"""Single entry point wiring every stage: synth, corrupt, uplift, train,
refine, eval, sweep, dump.

Every run writes a manifest beside its outputs recording the resolved
configuration, the seed, and SHA-256 hashes of all inputs and outputs; the
`SKELETOR_LOG` environment variable sets the log level. Errors leave a
machine-readable record on stderr: {"error": {"category", "message"}}.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import io as sio
from .checkpoint import load_checkpoint
from .corruption import MODES, SELECTIONS, CorruptionSpec, corrupt
from .datagen import Corpus, MotionSpec, build_corpus, generate
from .errors import ConfigError, FormatError, SkeletorError
from .evaluation import EvalReport, evaluate, format_reports, sweep
from .inference import InferenceConfig, refine
from .manifest import RunManifest, manifest_path_for
from .model import ModelConfig, SkeletorModel
from .skeleton import KinematicTree, default_tree
from .training import SCOPES, TrainConfig, train
from .uplift import UpliftConfig, uplift

log = logging.getLogger(__name__)


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(message)


def _error_record(category: str, message: str) -> None:
    print(json.dumps({"error": {"category": category, "message": message}}), file=sys.stderr)


def _load_model(path: str) -> tuple[SkeletorModel, KinematicTree]:
    params, config = load_checkpoint(path)
    try:
        model_cfg = ModelConfig.from_json(config["model"])
        tree = KinematicTree.from_json(config["tree"])
    except KeyError as exc:
        raise FormatError(f"checkpoint {path} lacks a {exc} config block") from exc
    return SkeletorModel(model_cfg, params), tree


def _load_corpus(data_dir: str) -> Corpus:
    """Read a synth-produced directory: tree.json, seq-*.json, manifest splits."""
    root = Path(data_dir)
    if not root.is_dir():
        raise FileNotFoundError(f"data directory {data_dir} does not exist")
    tree_path = root / "tree.json"
    tree = sio.read_tree(tree_path) if tree_path.exists() else default_tree()
    splits: dict[str, str] = {}
    manifest_file = root / "manifest.json"
    if manifest_file.exists():
        splits = RunManifest.read(manifest_file).extra.get("splits", {})
    corpus = Corpus(tree=tree)
    files = sorted(root.glob("seq-*.json"))
    if not files:
        raise ConfigError(f"no sequence files (seq-*.json) in {data_dir}")
    for path in files:
        seq = sio.read_sequence(path)
        corpus.split(splits.get(seq.id, "test")).append(seq)
    return corpus


def _read_config_file(path: str | None) -> dict:
    if path is None:
        return {}
    doc = json.loads(Path(path).read_text())
    if not isinstance(doc, dict):
        raise FormatError(f"{path}: config file must hold a JSON object")
    return doc


def cmd_synth(args) -> int:
    t0 = time.monotonic()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    tree = sio.read_tree(args.tree) if args.tree else default_tree()
    corpus = build_corpus(
        n_sequences=args.count,
        n_frames=args.frames,
        seed=args.seed,
        tree=tree,
        confidence_variation=args.confidence_variation,
        base_amplitude=args.amplitude,
        base_frequency=args.frequency,
    )
    manifest = RunManifest(
        command="synth",
        argv=list(sys.argv[1:]),
        config={
            "count": args.count,
            "frames": args.frames,
            "confidence_variation": args.confidence_variation,
            "amplitude": args.amplitude,
            "frequency": args.frequency,
        },
        seed=args.seed,
        extra={"splits": corpus.splits},
    )
    if args.tree:
        manifest.add_input(args.tree)
    sio.write_tree(out / "tree.json", tree)
    manifest.add_output(out / "tree.json")
    for name in ("train", "dev", "test"):
        for seq in corpus.split(name):
            path = out / f"{seq.id}.json"
            sio.write_sequence(path, seq)
            manifest.add_output(path)
    manifest.wall_time_s = time.monotonic() - t0
    manifest.write(out / "manifest.json")
    log.info("wrote %d sequences to %s", args.count, out)
    return 0


def cmd_corrupt(args) -> int:
    t0 = time.monotonic()
    seq = sio.read_sequence(args.infile)
    tree = sio.read_tree(args.tree) if args.tree else default_tree()
    spec = CorruptionSpec(mode=args.mode, p=args.p, s=args.s, seed=args.seed, selection=args.selection)
    corrupted, record = corrupt(seq, spec, tree)
    out = Path(args.out)
    sio.write_sequence(out, corrupted)
    record_path = out.with_name(out.stem + ".record.json")
    record_path.write_text(json.dumps({"spec": spec.to_json(), "record": record.to_json()}) + "\n")
    manifest = RunManifest(command="corrupt", argv=list(sys.argv[1:]), config=spec.to_json(), seed=args.seed)
    manifest.add_input(args.infile)
    if args.tree:
        manifest.add_input(args.tree)
    manifest.add_output(out)
    manifest.add_output(record_path)
    manifest.wall_time_s = time.monotonic() - t0
    manifest.write(manifest_path_for(out))
    return 0


def cmd_uplift(args) -> int:
    t0 = time.monotonic()
    tree = sio.read_tree(args.tree) if args.tree else default_tree()
    inputs = []
    if args.keypoints:
        if not args.index_map:
            raise ConfigError("--keypoints needs --index-map")
        frames = sorted(Path(args.keypoints).glob("*.json"))
        if not frames:
            raise ConfigError(f"no keypoint frame files in {args.keypoints}")
        index_map = sio.read_index_map(args.index_map, tree.n_joints)
        seq2d = sio.read_keypoint_frames(frames, index_map, frame_rate=args.frame_rate)
        inputs = [*frames, args.index_map]
    else:
        if not args.infile:
            raise ConfigError("need --in or --keypoints")
        seq2d = sio.read_sequence_2d(args.infile)
        inputs = [args.infile]
    cfg_doc = _read_config_file(args.config)
    try:
        config = UpliftConfig(**cfg_doc)
    except TypeError as exc:
        raise ConfigError(f"bad uplift config: {exc}") from exc
    seq3d = uplift(seq2d, tree, config)
    sio.write_sequence(args.out, seq3d)
    manifest = RunManifest(command="uplift", argv=list(sys.argv[1:]), config=cfg_doc, seed=None)
    for path in inputs:
        manifest.add_input(path)
    if args.tree:
        manifest.add_input(args.tree)
    manifest.add_output(args.out)
    manifest.wall_time_s = time.monotonic() - t0
    manifest.write(manifest_path_for(Path(args.out)))
    return 0


def cmd_train(args) -> int:
    t0 = time.monotonic()
    corpus = _load_corpus(args.data)
    doc = _read_config_file(args.config)
    if args.seed is not None:
        doc["seed"] = args.seed
    config = TrainConfig.from_json(doc)
    out = Path(args.out)
    model, report = train(corpus, config, checkpoint_path=out)
    report_path = out.with_name(out.stem + ".report.json")
    report_path.write_text(json.dumps(report.to_json(), indent=1) + "\n")
    manifest = RunManifest(command="train", argv=list(sys.argv[1:]), config=config.to_json(), seed=config.seed)
    if args.config:
        manifest.add_input(args.config)
    for path in sorted(Path(args.data).glob("seq-*.json")):
        manifest.add_input(path)
    manifest.add_output(out)
    for stamped in sorted(out.parent.glob(f"{out.stem}-*.ckpt")):
        manifest.add_output(stamped)
    manifest.add_output(report_path)
    manifest.wall_time_s = time.monotonic() - t0
    manifest.write(manifest_path_for(out))
    best = min(c["dev_mse"] for c in report.checkpoints)
    log.info("best dev MSE %.6f at iteration %d", best, report.best_iteration)
    print(json.dumps({"best_iteration": report.best_iteration, "dev_mse": best, "final_test": report.final_test}))
    return 0


def cmd_refine(args) -> int:
    t0 = time.monotonic()
    model, tree = _load_model(args.model)
    seq = sio.read_sequence(args.infile)
    window = args.window or model.config.window_size
    config = InferenceConfig(window_size=window, radius=args.radius)
    refined = refine(seq, model, tree, config)
    sio.write_sequence(args.out, refined)
    manifest = RunManifest(
        command="refine",
        argv=list(sys.argv[1:]),
        config={"window_size": window, "radius": args.radius},
        seed=None,
    )
    manifest.add_input(args.model)
    manifest.add_input(args.infile)
    manifest.add_output(args.out)
    manifest.wall_time_s = time.monotonic() - t0
    manifest.write(manifest_path_for(Path(args.out)))
    return 0


def _write_reports(reports: list[EvalReport], out: str | None, manifest: RunManifest) -> None:
    print(format_reports(reports))
    if out:
        Path(out).write_text(json.dumps([r.to_json() for r in reports], indent=1) + "\n")
        manifest.add_output(out)
        manifest.write(manifest_path_for(Path(out)))


def cmd_eval(args) -> int:
    t0 = time.monotonic()
    model, tree = _load_model(args.model)
    corpus = _load_corpus(args.data)
    sequences = corpus.split(args.split)
    spec = CorruptionSpec(mode=args.mode, p=args.p, s=args.s, seed=args.seed, selection=args.selection)
    window = args.window or model.config.window_size
    inference = InferenceConfig(window_size=window, radius=args.radius)
    report = evaluate(model, sequences, tree, spec, inference, scope=args.scope, model_id=args.model)
    manifest = RunManifest(
        command="eval",
        argv=list(sys.argv[1:]),
        config={"spec": spec.to_json(), "scope": args.scope, "split": args.split, "radius": args.radius},
        seed=args.seed,
    )
    manifest.add_input(args.model)
    manifest.wall_time_s = time.monotonic() - t0
    _write_reports([report], args.out, manifest)
    return 0


def cmd_sweep(args) -> int:
    t0 = time.monotonic()
    grid = _read_config_file(args.grid)
    try:
        axis = grid["axis"]
        values = grid["values"]
        data_dir = grid["data"]
        base_spec = CorruptionSpec.from_json(grid["base"])
    except KeyError as exc:
        raise ConfigError(f"sweep grid needs an {exc} entry") from exc
    corpus = _load_corpus(data_dir)
    sequences = corpus.split(grid.get("split", "test"))
    model_paths = grid.get("models") or [grid["model"]] * len(values)
    loaded = [_load_model(p) for p in model_paths]
    tree = loaded[0][1]
    models = [m for m, _ in loaded]
    window = grid.get("window") or models[0].config.window_size
    inference = InferenceConfig(window_size=window, radius=grid.get("radius", 2))
    reports = sweep(
        axis,
        values,
        models if len(set(model_paths)) > 1 else models[0],
        sequences,
        tree,
        base_spec,
        inference,
        scope=grid.get("scope", "all_frames"),
        model_ids=model_paths,
    )
    manifest = RunManifest(command="sweep", argv=list(sys.argv[1:]), config=grid, seed=base_spec.seed)
    manifest.add_input(args.grid)
    for p in dict.fromkeys(model_paths):
        manifest.add_input(p)
    manifest.wall_time_s = time.monotonic() - t0
    _write_reports(reports, args.out, manifest)
    return 0


def cmd_dump(args) -> int:
    t0 = time.monotonic()
    seq = sio.read_sequence(args.infile)
    sio.dump_csv(args.out, seq)
    manifest = RunManifest(command="dump", argv=list(sys.argv[1:]), config={}, seed=None)
    manifest.add_input(args.infile)
    manifest.add_output(args.out)
    manifest.wall_time_s = time.monotonic() - t0
    manifest.write(manifest_path_for(Path(args.out)))
    return 0


def build_parser() -> _Parser:
    parser = _Parser(prog="skeletor", description="Refine corrupted 3D skeleton sequences.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic motion corpus")
    p.add_argument("--out", required=True)
    p.add_argument("--count", type=int, default=200)
    p.add_argument("--frames", type=int, default=200)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--confidence-variation", type=float, default=0.4)
    p.add_argument("--amplitude", type=float, default=0.55)
    p.add_argument("--frequency", type=float, default=0.13)
    p.add_argument("--tree")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("corrupt", help="mask or noise a sequence file")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--mode", required=True, choices=MODES)
    p.add_argument("--p", type=float, required=True)
    p.add_argument("--s", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--selection", choices=SELECTIONS, default="by_confidence")
    p.add_argument("--tree")
    p.set_defaults(func=cmd_corrupt)

    p = sub.add_parser("uplift", help="lift a 2D sequence to 3D")
    p.add_argument("--in", dest="infile")
    p.add_argument("--keypoints", help="directory of per-frame detector JSON files")
    p.add_argument("--index-map", help="detector-to-tree joint index map JSON")
    p.add_argument("--frame-rate", type=float)
    p.add_argument("--out", required=True)
    p.add_argument("--tree")
    p.add_argument("--config")
    p.set_defaults(func=cmd_uplift)

    p = sub.add_parser("train", help="train a refinement model")
    p.add_argument("--data", required=True)
    p.add_argument("--config")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("refine", help="refine a sequence with a trained model")
    p.add_argument("--model", required=True)
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--radius", type=int, default=2)
    p.add_argument("--window", type=int)
    p.set_defaults(func=cmd_refine)

    p = sub.add_parser("eval", help="corrupt/refine/score a data split")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--mode", required=True, choices=MODES)
    p.add_argument("--p", type=float, default=0.15)
    p.add_argument("--s", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--selection", choices=SELECTIONS, default="by_confidence")
    p.add_argument("--scope", choices=SCOPES, default="all_frames")
    p.add_argument("--split", choices=("train", "dev", "test"), default="test")
    p.add_argument("--radius", type=int, default=2)
    p.add_argument("--window", type=int)
    p.add_argument("--out")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("sweep", help="run an evaluation grid from a file")
    p.add_argument("--grid", required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("dump", help="write a sequence as per-frame joint CSV")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_dump)
    return parser


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=os.environ.get("SKELETOR_LOG", "WARNING").upper(), format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        _error_record("usage", str(exc))
        return 2
    try:
        return args.func(args)
    except FileNotFoundError as exc:
        _error_record("missing-file", str(exc))
        return 1
    except SkeletorError as exc:
        _error_record(exc.category, str(exc))
        return 1


if __name__ == "__main__":
    sys.exit(main())
