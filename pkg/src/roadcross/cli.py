"""``roadcross`` command line: simulate -> track -> features -> train -> eval,
plus CNN inference and offline replay of the crossing assistant.

A dataset is a directory of ``video_NNN`` subdirectories, each holding
``boxes.csv``, ``labels.csv`` and the ``scenario.cfg`` that produced it.
Per-video outputs of later stages mirror that layout.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
import time
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__, decision, evaluation, scene_sim, svm
from ._kv import ConfigError, ParseError, read_kv
from .cnn import Network, ShapeError, init_weights, load_spec, load_weights, reference_spec, render_frame, save_weights
from .cnn.network import REFERENCE_SPECS
from .features import RegionGrid, frame_feature_matrix, read_feature_csv, write_feature_csv
from .svm import multiframe_matrix
from .tracking import TrackerConfig, associate, export_tracks, import_tracks, tracked_boxes

log = logging.getLogger("roadcross")

SCENARIO_FILE = "scenario.cfg"
TRACKS_FILE = "tracks.csv"
FEATURES_FILE = "features.csv"
PROBS_FILE = "probabilities.csv"
PROBS_HEADER = ["frame_index", "probability"]
PR_THRESHOLDS = [i / 100 for i in range(101)]


class CliError(Exception):
    pass


# -- helpers -----------------------------------------------------------------


def video_dirs(root: Path) -> list[Path]:
    root = Path(root)
    if not root.exists():
        raise FileNotFoundError(f"{root}: no such directory")
    if (root / scene_sim.LABELS_FILE).exists() or (root / TRACKS_FILE).exists() \
            or (root / FEATURES_FILE).exists() or (root / PROBS_FILE).exists():
        return [root]
    dirs = sorted(p for p in root.iterdir() if p.is_dir() and p.name.startswith("video_"))
    if not dirs:
        raise CliError(f"{root}: no video_* directories")
    return dirs


def _video_seed(base: int, index: int) -> int:
    return int(np.random.SeedSequence([base, index]).generate_state(1, np.uint64)[0])


def write_manifest(out_dir: Path, command: str, args: argparse.Namespace, name: str = "manifest.json") -> None:
    skip = {"func", "verbose"}
    recorded = {k: (str(v) if isinstance(v, Path) else v) for k, v in sorted(vars(args).items()) if k not in skip}
    manifest = {"command": command, "tool_version": __version__, "arguments": recorded}
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / name).write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _scenario_config(video: Path) -> scene_sim.ScenarioConfig:
    path = video / SCENARIO_FILE
    if path.exists():
        return scene_sim.load_config(path)
    return scene_sim.ScenarioConfig()


def _load_probabilities(path: Path) -> tuple[list[int], list[float]]:
    if not path.exists():
        raise FileNotFoundError(f"{path}: no such file")
    frames, probs = [], []
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        if next(reader, None) != PROBS_HEADER:
            raise ParseError(path, 1, "expected header frame_index,probability")
        for row in reader:
            if not row:
                continue
            try:
                idx, p = int(row[0]), float(row[1])
            except (ValueError, IndexError):
                raise ParseError(path, reader.line_num, f"bad row {row}") from None
            if not 0.0 <= p <= 1.0:
                raise ParseError(path, reader.line_num, f"probability {p} outside [0, 1]")
            frames.append(idx)
            probs.append(p)
    return frames, probs


def _write_probabilities(path: Path, frames, probs) -> None:
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(PROBS_HEADER)
        for i, p in zip(frames, probs):
            w.writerow([i, repr(float(p))])


def _spec(name_or_path: str):
    if name_or_path in REFERENCE_SPECS:
        return reference_spec(name_or_path)
    return load_spec(name_or_path)


def _svm_config(path, seed) -> tuple[svm.SvmTrainConfig, tuple[float, float] | None]:
    cfg = svm.SvmTrainConfig()
    weights = None
    if path:
        items = read_kv(path)
        kwargs = {}
        w_unsafe = w_safe = None
        for key, value in items.items():
            try:
                if key == "regularization_lambda":
                    kwargs[key] = float(value)
                elif key in ("epochs", "rng_seed"):
                    kwargs[key] = int(value)
                elif key == "w_unsafe":
                    w_unsafe = float(value)
                elif key == "w_safe":
                    w_safe = float(value)
                else:
                    raise ConfigError(key, "unknown key")
            except ValueError as exc:
                if isinstance(exc, ConfigError):
                    raise
                raise ConfigError(key, f"bad value {value!r}") from None
        cfg = svm.SvmTrainConfig(**kwargs)
        if w_unsafe is not None or w_safe is not None:
            weights = (w_unsafe or 1.0, w_safe or 1.0)
    if seed is not None:
        cfg = replace(cfg, rng_seed=seed)
    cfg.validate()
    return cfg, weights


def _split_videos(split_path, subset: str, root: Path) -> list[Path]:
    dirs = {d.name: d for d in video_dirs(root)}
    if split_path is None:
        return list(dirs.values())
    names = evaluation.read_split(split_path).get(subset, [])
    missing = [n for n in names if n not in dirs]
    if missing:
        raise CliError(f"{root}: split lists videos not present: {', '.join(missing)}")
    return [dirs[n] for n in names]


# -- commands ------------------------------------------------------------------


def cmd_simulate(args) -> None:
    cfg = scene_sim.load_config(args.config) if args.config else (
        scene_sim.linear_oracle_config() if args.preset == "linear" else scene_sim.ScenarioConfig())
    if args.frames is not None:
        cfg = replace(cfg, num_frames=args.frames)
    out = Path(args.out)
    for i in range(args.videos):
        vcfg = replace(cfg, rng_seed=_video_seed(args.seed, i))
        scenario = scene_sim.generate_scenario(vcfg)
        vdir = out / f"video_{i:03d}"
        scene_sim.export_dataset(scenario, vdir)
        scene_sim.save_config(vcfg, vdir / SCENARIO_FILE)
        log.info("%s: %d frames, %d vehicles, %.0f%% safe", vdir.name, vcfg.num_frames,
                 len(scenario.trajectories), 100 * np.mean(scenario.labels) if scenario.labels else 0)
    write_manifest(out, "simulate", args)


def cmd_split(args) -> None:
    videos = [d.name for d in video_dirs(Path(args.dataset))]
    counts = tuple(int(c) for c in args.counts.split(","))
    mode = "two_way" if len(counts) == 2 else "three_way"
    splits = evaluation.split_videos(videos, evaluation.SplitSpec(mode, counts, args.seed))
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    evaluation.write_split(splits, out)
    write_manifest(out.parent, "split", args, name=out.stem + ".manifest.json")


def _tracker_config(path) -> TrackerConfig:
    if not path:
        return TrackerConfig()
    items = read_kv(path)
    kwargs = {}
    for key, value in items.items():
        if key in ("iou_match_threshold", "stationary_speed_epsilon"):
            kwargs[key] = float(value)
        elif key in ("max_frames_lost", "speed_window"):
            kwargs[key] = int(value)
        else:
            raise ConfigError(key, "unknown key")
    return TrackerConfig(**kwargs)


def cmd_track(args) -> None:
    tcfg = _tracker_config(args.config)
    out = Path(args.out)
    for vdir in video_dirs(Path(args.dataset)):
        frames, _ = scene_sim.import_dataset(vdir)
        cfg = _scenario_config(vdir)
        tracks = associate(frames, tcfg, origin=cfg.origin)
        export_tracks(tracked_boxes(tracks, tcfg, origin=cfg.origin), out / vdir.name / TRACKS_FILE)
    write_manifest(out, "track", args)


def cmd_features(args) -> None:
    if args.k < 1:
        raise CliError("--k must be >= 1")
    model = None
    if args.mode == "multi":
        if not args.model:
            raise CliError("--mode multi needs --model (the single-frame SVM)")
        model = svm.load_model(args.model)
    out = Path(args.out)
    tracks_root = Path(args.tracks)
    for vdir in video_dirs(Path(args.dataset)):
        frames, labels = scene_sim.import_dataset(vdir)
        cfg = _scenario_config(vdir)
        tdir = tracks_root / vdir.name if (tracks_root / vdir.name).exists() else tracks_root
        boxes = import_tracks(tdir / TRACKS_FILE)
        grid = RegionGrid(cfg.frame_width, cfg.frame_height)
        X = frame_feature_matrix([f.frame_index for f in frames], boxes, grid, cfg.origin, cfg.divider_x)
        if model is not None:
            preds = np.atleast_1d(svm.predict(model, X)) if len(X) else []
            X = multiframe_matrix(X, preds, args.k)
        write_feature_csv(out / vdir.name / FEATURES_FILE, X, labels)
    write_manifest(out, "features", args)


def _stack_features(videos: list[Path]) -> tuple[np.ndarray, np.ndarray]:
    parts = [read_feature_csv(v / FEATURES_FILE) for v in videos]
    if not parts:
        raise CliError("no feature files selected")
    return np.vstack([p[0] for p in parts]), np.concatenate([p[1] for p in parts])


def cmd_train_svm(args) -> None:
    cfg, weights = _svm_config(args.config, args.seed)
    videos = _split_videos(args.split, "train", Path(args.features))
    X, y = _stack_features(videos)
    n_unscaled = X.shape[1] - 24
    if n_unscaled < 0:
        raise CliError(f"feature width {X.shape[1]} is below 24")
    model = svm.train(X, y, weights, cfg, n_unscaled=n_unscaled, threshold=args.threshold)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    svm.save_model(model, out)
    log.info("trained %d-dim SVM on %d frames, class weights (%.2f, %.2f), loss %.6f",
             model.dim, len(y), *model.class_weights, model.train_loss)
    write_manifest(out.parent, "train-svm", args, name=out.stem + ".manifest.json")


def _parse_named(values) -> list[tuple[str, Path]]:
    out = []
    for item in values or []:
        if "=" not in item:
            raise CliError(f"expected NAME=PATH, got {item!r}")
        name, path = item.split("=", 1)
        out.append((name, Path(path)))
    return out


def _pr_rows(scores, truths):
    return evaluation.pr_curve(scores, truths, PR_THRESHOLDS)


def _write_pr(path: Path, rows) -> None:
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["threshold", "precision", "recall"])
        for t, p, r in rows:
            w.writerow([f"{t:.2f}", evaluation._fmt(p), evaluation._fmt(r)])


def cmd_eval(args) -> None:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    videos = _split_videos(args.split, "test", Path(args.features))
    results = []
    single = svm.load_model(args.single_model) if args.single_model else None
    multi = svm.load_model(args.multi_model) if args.multi_model else None
    if multi is not None and single is None:
        raise CliError("--multi-model needs --single-model for the label history")
    truths_all = []
    # per method: (scores, predictions) lists, one entry per video
    runs = {"Single frame SVM": ([], []), "Multi frame SVM": ([], [])}
    for v in videos:
        X, y = read_feature_csv(v / FEATURES_FILE)
        X = X[:, :24]
        truths_all.append(y)
        if single is not None and len(X):
            runs["Single frame SVM"][0].append(np.atleast_1d(svm.score(single, X)))
            runs["Single frame SVM"][1].append(np.atleast_1d(svm.predict(single, X)))
        if multi is not None and len(X):
            k = multi.dim - 23
            runs["Multi frame SVM"][0].append(svm.multiframe_scores(single, multi, X, k))
            runs["Multi frame SVM"][1].append(svm.predict_multiframe_video(single, multi, X, k))
    truths = np.concatenate(truths_all) if truths_all else np.zeros(0, dtype=int)
    for (name, (scores, preds)), model in zip(runs.items(), (single, multi)):
        if model is None:
            continue
        # predictions come from predict(), which compares margins, not rounded scores
        m = evaluation.compute_metrics(np.concatenate(preds), truths)
        results.append(evaluation.MethodResult(name, m.precision, m.recall))
        _write_pr(out / f"pr_{name.split()[0].lower()}_svm.csv", _pr_rows(np.concatenate(scores), truths))

    timing = {}
    if args.throughput_from:
        timing = json.loads(Path(args.throughput_from).read_text(encoding="utf-8"))
    for name, pdir in _parse_named(args.cnn):
        probs, labels = [], []
        for v in videos:
            frames, p = _load_probabilities(pdir / v.name / PROBS_FILE)
            _, y = read_feature_csv(v / FEATURES_FILE)
            if len(p) != len(y):
                raise CliError(f"{pdir / v.name / PROBS_FILE}: {len(p)} frames, features have {len(y)}")
            probs.extend(p)
            labels.extend(y)
        probs_arr, labels_arr = np.array(probs), np.array(labels)
        m = evaluation.compute_metrics((probs_arr > args.threshold).astype(int), labels_arr)
        entry = timing.get(name)
        if entry is None and len(timing) == 1:
            # a timing file from a single cnn-infer run applies whatever the label
            entry = next(iter(timing.values()))
        fps = entry.get("throughput_fps") if entry else None
        results.append(evaluation.MethodResult(name, m.precision, m.recall, fps))
        _write_pr(out / f"pr_{name}.csv", _pr_rows(probs_arr, labels_arr))

    text = evaluation.report(results, out / "report.csv")
    (out / "summary.txt").write_text(text, encoding="utf-8")
    sys.stdout.write(text)
    write_manifest(out, "eval", args)


def cmd_cnn_init(args) -> None:
    spec = _spec(args.spec)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    save_weights(spec, init_weights(spec, args.seed), out)
    write_manifest(out.parent, "cnn-init", args, name=out.stem + ".manifest.json")


def cmd_cnn_infer(args) -> None:
    spec = _spec(args.spec)
    net = Network(spec, load_weights(spec, args.weights))
    h, w, c = spec.input_shape
    if c != 3:
        raise CliError(f"{spec.name}: expects {c} input channels; rendered frames have 3")
    out = Path(args.out)
    n_frames = 0
    started = time.perf_counter()
    for vdir in _split_videos(args.split, args.subset, Path(args.dataset)):
        frames, _ = scene_sim.import_dataset(vdir)
        cfg = _scenario_config(vdir)
        probs = [net.forward(render_frame(f.boxes, cfg.frame_width, cfg.frame_height, h, w)) for f in frames]
        n_frames += len(frames)
        (out / vdir.name).mkdir(parents=True, exist_ok=True)
        _write_probabilities(out / vdir.name / PROBS_FILE, [f.frame_index for f in frames], probs)
    elapsed = time.perf_counter() - started
    # wall-clock timing lives apart from the deterministic outputs
    timing = {args.name or spec.name: {"frames": n_frames, "seconds": elapsed,
                                      "throughput_fps": n_frames / elapsed if elapsed > 0 else None,
                                      "note": "local CPU measurement, not comparable to embedded-device figures"}}
    (out / "timing.json").write_text(json.dumps(timing, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    write_manifest(out, "cnn-infer", args)


def _decision_config(args) -> decision.DecisionConfig:
    cfg = decision.load_config(args.config) if args.config else decision.DecisionConfig()
    if args.threshold is not None:
        cfg = replace(cfg, probability_threshold=args.threshold)
    cfg.validate()
    return cfg


def cmd_assist(args) -> None:
    cfg = _decision_config(args)
    src = Path(args.probabilities)
    out = Path(args.out)
    if src.is_dir():
        for vdir in video_dirs(src):
            frames, probs = _load_probabilities(vdir / PROBS_FILE)
            (out / vdir.name).mkdir(parents=True, exist_ok=True)
            decision.write_event_log(decision.replay(probs, cfg, frames), out / vdir.name / "events.log")
        write_manifest(out, "assist", args)
    else:
        frames, probs = _load_probabilities(src)
        out.parent.mkdir(parents=True, exist_ok=True)
        decision.write_event_log(decision.replay(probs, cfg, frames), out)
        write_manifest(out.parent, "assist", args, name=out.stem + ".manifest.json")


def cmd_pipeline(args) -> None:
    """Every stage in order, into subdirectories of ``--out``."""
    out = Path(args.out)
    seed = args.seed
    data, tracks, feats, featm = out / "data", out / "tracks", out / "features_single", out / "features_multi"
    models, probs = out / "models", out / "cnn"
    ns = argparse.Namespace
    cmd_simulate(ns(config=args.config, preset=args.preset, seed=seed, videos=args.videos,
                    frames=args.frames, out=data))
    n_test = max(1, round(args.videos * args.test_fraction))
    cmd_split(ns(dataset=data, counts=f"{args.videos - n_test},{n_test}", seed=seed, out=out / "split.csv"))
    cmd_track(ns(dataset=data, config=None, out=tracks))
    cmd_features(ns(dataset=data, tracks=tracks, mode="single", k=1, model=None, out=feats))
    cmd_train_svm(ns(features=feats, split=out / "split.csv", config=args.svm_config, seed=seed,
                     threshold=0.5, out=models / "single.svm"))
    cmd_features(ns(dataset=data, tracks=tracks, mode="multi", k=args.k, model=models / "single.svm", out=featm))
    cmd_train_svm(ns(features=featm, split=out / "split.csv", config=args.svm_config, seed=seed,
                     threshold=0.5, out=models / "multi.svm"))
    cnn = []
    if args.cnn_spec != "none":
        cmd_cnn_init(ns(spec=args.cnn_spec, seed=seed, out=models / "cnn.weights"))
        cmd_cnn_infer(ns(spec=args.cnn_spec, weights=models / "cnn.weights", dataset=data,
                         split=out / "split.csv", subset="test", name="cnn", out=probs))
        cnn = [f"cnn={probs}"]
    cmd_eval(ns(features=feats, split=out / "split.csv", single_model=models / "single.svm",
                multi_model=models / "multi.svm", cnn=cnn, threshold=0.5, throughput_from=None,
                out=out / "report"))
    if cnn:
        cmd_assist(ns(probabilities=probs, config=args.decision_config, threshold=None, out=out / "events"))
    write_manifest(out, "pipeline", args)


# -- argument parsing ----------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="roadcross", description="Road-crossing safety pipeline, one stage per subcommand.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="generate synthetic videos")
    s.add_argument("--config", help="scenario key=value file")
    s.add_argument("--preset", choices=("default", "linear"), default="default")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--videos", type=int, default=1)
    s.add_argument("--frames", type=int, help="override num_frames")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("split", help="split videos into train/test[/validation]")
    s.add_argument("--dataset", required=True)
    s.add_argument("--counts", required=True, help="e.g. 80,24 or 66,22,16")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_split)

    s = sub.add_parser("track", help="IoU tracking of dataset boxes")
    s.add_argument("--dataset", required=True)
    s.add_argument("--config", help="tracker key=value file")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_track)

    s = sub.add_parser("features", help="region-grid feature CSVs")
    s.add_argument("--dataset", required=True)
    s.add_argument("--tracks", required=True)
    s.add_argument("--mode", choices=("single", "multi"), default="single")
    s.add_argument("--k", type=int, default=10)
    s.add_argument("--model", help="single-frame SVM (multi mode)")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_features)

    s = sub.add_parser("train-svm", help="train a weighted linear SVM")
    s.add_argument("--features", required=True)
    s.add_argument("--split", help="split CSV; train videos are used")
    s.add_argument("--config", help="SVM key=value file")
    s.add_argument("--seed", type=int)
    s.add_argument("--threshold", type=float, default=0.5)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_train_svm)

    s = sub.add_parser("eval", help="precision/recall report on test videos")
    s.add_argument("--features", required=True, help="single-frame feature root")
    s.add_argument("--split", help="split CSV; test videos are used")
    s.add_argument("--single-model")
    s.add_argument("--multi-model")
    s.add_argument("--cnn", action="append", help="NAME=DIR of per-video probabilities")
    s.add_argument("--threshold", type=float, default=0.5)
    s.add_argument("--throughput-from", help="timing.json written by cnn-infer")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_eval)

    s = sub.add_parser("cnn-init", help="seeded random weights for a network spec")
    s.add_argument("--spec", required=True, help=f"spec file or one of {', '.join(REFERENCE_SPECS)}")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_cnn_init)

    s = sub.add_parser("cnn-infer", help="per-frame safe probabilities from a CNN")
    s.add_argument("--spec", required=True)
    s.add_argument("--weights", required=True)
    s.add_argument("--dataset", required=True)
    s.add_argument("--split")
    s.add_argument("--subset", default="test", choices=evaluation.SPLIT_NAMES)
    s.add_argument("--name", help="method name recorded in timing.json")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_cnn_infer)

    s = sub.add_parser("assist", help="replay probabilities through the decision loop")
    s.add_argument("--probabilities", required=True, help="probabilities CSV or directory of videos")
    s.add_argument("--config", help="decision key=value file")
    s.add_argument("--threshold", type=float)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_assist)

    s = sub.add_parser("pipeline", help="run every stage end to end")
    s.add_argument("--config", help="scenario key=value file")
    s.add_argument("--preset", choices=("default", "linear"), default="default")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--videos", type=int, default=8)
    s.add_argument("--frames", type=int)
    s.add_argument("--test-fraction", type=float, default=0.25)
    s.add_argument("--k", type=int, default=10)
    s.add_argument("--svm-config")
    s.add_argument("--decision-config")
    s.add_argument("--cnn-spec", default="dilated_roadcrossnet_reference",
                   help="spec file, reference name, or 'none'")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_pipeline)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except (CliError, ConfigError, ParseError, ShapeError, FileNotFoundError, ValueError) as exc:
        print(f"roadcross {args.command}: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
