"""Command-line entry point: ``python -m gazecnn <command> ...``.

Exit status is 0 on success, 1 on a domain error (bad file contents, no face,
diverged training, ...) and 2 on a usage error (unknown flag, missing
argument or input file).

``--config FILE`` reads a JSON object whose keys are flag names (``--per-label``
may be written ``per_label`` or ``per-label``). Flags given on the command
line take precedence over the file.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import replace

import numpy as np

from .errors import GazeError

CLASS_NAMES = ("right", "left", "vague")
MARKERS = {"face_not_found": "FACE_NOT_FOUND", "eyes_not_found": "EYES_NOT_FOUND",
           "preprocess_failed": "PREPROCESS_FAILED"}

# checked after --config is merged, so they can come from either place
REQUIRED = {
    "synth": ("out",),
    "augment": ("manifest", "out"),
    "split": ("manifest", "train_out", "test_out"),
    "train": ("manifest", "out"),
    "eval": ("model", "manifest"),
    "crossval": ("manifest",),
    "detect": ("cascade", "image"),
    "infer": ("model", "face_cascade", "eye_cascade"),
    "bench": ("frames", "model", "face_cascade", "eye_cascade"),
    "train-cascade": ("kind", "scenes", "out"),
}


class UsageError(Exception):
    pass


def _hyper_flags(p):
    p.add_argument("--epochs", type=int, default=15)
    p.add_argument("--lr", type=float, default=0.01)
    p.add_argument("--momentum", type=float, default=0.9)
    p.add_argument("--batch", type=int, default=64)
    p.add_argument("--c1", type=int, default=6, help="conv1 feature maps")
    p.add_argument("--c2", type=int, default=2, help="conv2 feature maps")


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=42)
    common.add_argument("--config", help="JSON file with flag values")
    common.add_argument("--threads", type=int, default=1)
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="gazecnn", description="Webcam gaze-direction toolkit.")
    sub = parser.add_subparsers(dest="command", metavar="command")
    sub.required = True
    subs = {}

    def add(name, help):
        subs[name] = sub.add_parser(name, help=help, parents=[common])
        return subs[name]

    p = add("synth", "generate a synthetic eye-pair dataset or scene frames")
    p.add_argument("--out")
    p.add_argument("--kind", choices=("dataset", "scenes"), default="dataset")
    p.add_argument("--subjects", type=int, default=30)
    p.add_argument("--per-label", type=int, default=10, help="composites per subject per label")
    p.add_argument("--scenes", type=int, default=200, help="frame count for --kind scenes")
    p.add_argument("--width", type=int, default=320)
    p.add_argument("--height", type=int, default=240)

    p = add("augment", "expand a manifest with seeded augmentations")
    p.add_argument("--manifest")
    p.add_argument("--out")
    p.add_argument("--multiplier", type=int, default=159)
    p.add_argument("--ops", default="translate,rotate,brightness,contrast,horizontal_flip",
                   help="comma-separated subset; empty for none")
    p.add_argument("--include-originals", action="store_true")

    p = add("split", "shuffle split a manifest into train and test manifests")
    p.add_argument("--manifest")
    p.add_argument("--test-fraction", type=float, default=0.2)
    p.add_argument("--no-stratify", action="store_true")
    p.add_argument("--train-out")
    p.add_argument("--test-out")

    p = add("train", "train the CNN on a manifest")
    p.add_argument("--manifest")
    p.add_argument("--out")
    p.add_argument("--val-manifest")
    p.add_argument("--history-out")
    _hyper_flags(p)

    p = add("eval", "score a model on a manifest")
    p.add_argument("--model")
    p.add_argument("--manifest")
    p.add_argument("--confusion-out")

    p = add("crossval", "subject-grouped k-fold cross-validation")
    p.add_argument("--manifest")
    p.add_argument("--k", type=int, default=5)
    p.add_argument("--shuffle-baseline", action="store_true",
                   help="also report an 80/20 shuffle split for comparison")
    p.add_argument("--json-out")
    _hyper_flags(p)

    p = add("detect", "run a cascade over one image")
    p.add_argument("--cascade")
    p.add_argument("--image")
    p.add_argument("--min-neighbors", type=int, default=3)
    p.add_argument("--min-size", type=int)
    p.add_argument("--max-size", type=int)

    p = add("infer", "classify frames: one 'frame_id,label,latency_ms' line each")
    p.add_argument("--model")
    p.add_argument("--face-cascade")
    p.add_argument("--eye-cascade")
    p.add_argument("--frames", help="directory of PGM frames")
    p.add_argument("--stdin", action="store_true", help="read raw frames from standard input")
    p.add_argument("--width", type=int)
    p.add_argument("--height", type=int)
    p.add_argument("--channels", type=int, choices=(1, 3), default=1)

    p = add("bench", "per-stage latency of the full pipeline")
    p.add_argument("--frames")
    p.add_argument("--model")
    p.add_argument("--face-cascade")
    p.add_argument("--eye-cascade")
    p.add_argument("--repetitions", type=int, default=1)
    p.add_argument("--warmup", type=int, default=5)
    p.add_argument("--json-out")

    p = add("train-cascade", "train a face or eye cascade from synthetic scenes")
    p.add_argument("--kind", choices=("face", "eye"))
    p.add_argument("--scenes", help="directory written by 'synth --kind scenes'")
    p.add_argument("--out")
    p.add_argument("--stages", type=int, default=12)
    p.add_argument("--max-weak", type=int, default=40)
    p.add_argument("--negatives", type=int, default=1500)
    return parser, subs


def _apply_config(parser, subs, argv):
    args = parser.parse_args(argv)
    if args.config:
        try:
            with open(args.config, encoding="utf-8") as f:
                cfg = json.load(f)
        except json.JSONDecodeError as e:
            raise UsageError(f"--config {args.config}: {e}") from None
        if not isinstance(cfg, dict):
            raise UsageError("--config must hold a JSON object")
        known = vars(args)
        values = {}
        for key, val in cfg.items():
            dest = key.lstrip("-").replace("-", "_")
            if dest not in known or dest in ("command", "config"):
                raise UsageError(f"--config: unknown option {key!r} for {args.command}")
            values[dest] = val
        subs[args.command].set_defaults(**values)
        args = parser.parse_args(argv)
    missing = [d for d in REQUIRED[args.command] if getattr(args, d) is None]
    if missing:
        raise UsageError(f"{args.command}: missing " + ", ".join("--" + d.replace("_", "-") for d in missing))
    return args


def _hyper(args):
    from .train import Hyper
    return Hyper(lr=args.lr, momentum=args.momentum, batch=args.batch, epochs=args.epochs, seed=args.seed)


def _arch(args):
    from .cnn import ArchConfig
    return ArchConfig(c1=args.c1, c2=args.c2)


def _write_text(path, text):
    d = os.path.dirname(os.path.abspath(path))
    os.makedirs(d, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(text)


# --- commands -------------------------------------------------------------------

def cmd_synth(args, out):
    from .synth import gen_dataset, write_scenes
    if args.kind == "dataset":
        m = gen_dataset(args.subjects, args.per_label, args.seed, args.out)
        out.write(json.dumps({"manifest": os.path.join(args.out, "manifest.jsonl"), "entries": len(m)}) + "\n")
    else:
        path = write_scenes(args.scenes, args.seed, args.out, args.subjects, (args.width, args.height))
        out.write(json.dumps({"truth": path, "frames": args.scenes}) + "\n")


def cmd_augment(args, out):
    from .dataset import AugmentConfig, Manifest, ManifestEntry, augment, load_manifest, save_manifest
    from .imaging import read_pgm, write_pgm
    from .preprocess import make_sample

    ops = [o for o in args.ops.split(",") if o]
    try:
        cfg = AugmentConfig(multiplier=args.multiplier, ops=ops, seed=args.seed)
    except ValueError as e:
        raise UsageError(str(e)) from None
    m = load_manifest(args.manifest)
    os.makedirs(args.out, exist_ok=True)
    entries = []
    for e in m.entries:
        gray = read_pgm(m.resolve(e))
        stem = os.path.splitext(e.path)[0]
        os.makedirs(os.path.dirname(os.path.join(args.out, stem)) or args.out, exist_ok=True)
        if args.include_originals:
            rel = stem + ".pgm"
            write_pgm(os.path.join(args.out, rel), gray)
            entries.append(replace(e, path=rel))
        sample = make_sample(gray, e.label, e.subject_id, e.path)
        for i, s in enumerate(augment(sample, cfg)):
            rel = f"{stem}_aug{i:04d}.pgm"
            write_pgm(os.path.join(args.out, rel), s.gray)
            entries.append(ManifestEntry(rel, int(s.label), e.subject_id, "augmented", f"{cfg.seed}:{i}"))
    path = os.path.join(args.out, "manifest.jsonl")
    save_manifest(Manifest(entries, args.out), path)
    out.write(json.dumps({"manifest": path, "inputs": len(m), "entries": len(entries)}) + "\n")


def cmd_split(args, out):
    from .dataset import load_manifest, save_manifest, split_shuffle
    m = load_manifest(args.manifest)
    sp = split_shuffle(m, args.test_fraction, args.seed, not args.no_stratify)
    for idx, path in ((sp.train, args.train_out), (sp.test, args.test_out)):
        root = os.path.dirname(os.path.abspath(path))
        os.makedirs(root, exist_ok=True)
        save_manifest(m.subset(idx).relocate(root), path)
    out.write(json.dumps({"train": len(sp.train), "test": len(sp.test)}) + "\n")


def cmd_train(args, out):
    from .cnn import init_params, save_model
    from .dataset import load_manifest, load_samples
    from .train import history_csv, train

    x, y = load_samples(load_manifest(args.manifest))
    val = load_samples(load_manifest(args.val_manifest)) if args.val_manifest else None
    h = _hyper(args)
    net, hist = train(init_params(_arch(args), h.seed), x, y, h, val=val)
    save_model(net, args.out)
    if args.history_out:
        _write_text(args.history_out, history_csv(hist))
    out.write(json.dumps({"model": args.out, "samples": len(x), "final_loss": hist[-1]["loss"] if hist else None}) + "\n")


def cmd_eval(args, out):
    from .cnn import load_model
    from .dataset import load_manifest, load_samples
    from .train import dumps_report, evaluate

    net = load_model(args.model)
    met = evaluate(net, *load_samples(load_manifest(args.manifest)))
    if args.confusion_out:
        _write_text(args.confusion_out, met.confusion_csv())
    out.write(dumps_report(met.to_dict()))


def cmd_crossval(args, out):
    from .dataset import load_manifest, load_samples
    from .train import cross_validate, dumps_report, shuffle_experiment

    m = load_manifest(args.manifest)
    x, y = load_samples(m)
    h, arch = _hyper(args), _arch(args)
    rep = cross_validate(x, y, m, args.k, h, arch, threads=args.threads)
    result = rep.to_dict()
    lines = [f"{'fold':>4}  {'n':>6}  {'accuracy':>8}  test subjects"]
    for i, (met, subj) in enumerate(zip(rep.folds, rep.fold_subjects)):
        lines.append(f"{i:>4}  {met.n:>6}  {met.accuracy:8.4f}  {' '.join(subj)}")
    lines.append(f"grouped {args.k}-fold mean accuracy {rep.mean:.4f} (std {rep.std:.4f})")
    if args.shuffle_baseline:
        met, _, _ = shuffle_experiment(x, y, m, h, arch)
        result["shuffle_accuracy"] = met.accuracy
        lines.append(f"shuffled 80/20 accuracy        {met.accuracy:.4f}")
    out.write("\n".join(lines) + "\n")
    if args.json_out:
        _write_text(args.json_out, dumps_report(result))


def cmd_detect(args, out):
    from .cascade import ScanParams, detect, load_cascade
    from .imaging import read_pgm

    model = load_cascade(args.cascade)
    img = read_pgm(args.image)
    scan = ScanParams(min_neighbors=args.min_neighbors, min_size=args.min_size, max_size=args.max_size)
    dets = detect(img, model, scan)
    out.write(json.dumps([{"x": d.box.x, "y": d.box.y, "w": d.box.w, "h": d.box.h,
                           "score": d.score, "neighbors": d.neighbors} for d in dets]) + "\n")


def _stdin_frames(args):
    from .imaging import to_grayscale
    if not args.width or not args.height:
        raise UsageError("--stdin needs --width and --height")
    size = args.width * args.height * args.channels
    stream = sys.stdin.buffer
    i = 0
    while True:
        buf = stream.read(size)
        if not buf:
            return
        if len(buf) != size:
            raise UsageError(f"truncated frame {i}: {len(buf)} of {size} bytes")
        raw = np.frombuffer(buf, dtype=np.uint8)
        if args.channels == 3:
            frame = to_grayscale(raw, args.width, args.height)
        else:
            frame = raw.reshape(args.height, args.width)
        yield str(i), frame
        i += 1


def _dir_frames(frames_dir):
    import glob
    from .imaging import read_pgm
    if not os.path.isdir(frames_dir):
        raise UsageError(f"--frames {frames_dir}: not a directory")
    for p in sorted(glob.glob(os.path.join(frames_dir, "*.pgm"))):
        yield os.path.splitext(os.path.basename(p))[0], read_pgm(p)


def cmd_infer(args, out):
    from .bench import time_frame
    from .cascade import load_cascade
    from .cnn import load_model

    if args.stdin == bool(args.frames):
        raise UsageError("infer needs exactly one of --frames or --stdin")
    net = load_model(args.model)
    face, eye = load_cascade(args.face_cascade), load_cascade(args.eye_cascade)
    frames = _stdin_frames(args) if args.stdin else _dir_frames(args.frames)
    for frame_id, frame in frames:
        row, _, outcome, label = time_frame(frame, face, eye, net)
        tag = CLASS_NAMES[label] if outcome == "ok" else MARKERS[outcome]
        out.write(f"{frame_id},{tag},{row[-1]:.3f}\n")


def cmd_bench(args, out):
    from .bench import bench_pipeline
    from .cascade import load_cascade
    from .cnn import load_model
    from .train import dumps_report

    if not os.path.isdir(args.frames):
        raise UsageError(f"--frames {args.frames}: not a directory")
    rep = bench_pipeline(args.frames, load_cascade(args.face_cascade), load_cascade(args.eye_cascade),
                         load_model(args.model), args.repetitions, args.warmup, args.threads)
    out.write(rep.table())
    if args.json_out:
        _write_text(args.json_out, dumps_report(rep.to_dict()))


def cmd_train_cascade(args, out):
    from .cascade import save_cascade
    from .detectors import train_eye_cascade, train_face_cascade
    from .synth import read_scenes

    scenes = [(f, t) for f, t, _ in read_scenes(args.scenes)]
    fn = train_face_cascade if args.kind == "face" else train_eye_cascade
    model = fn(scenes, seed=args.seed, n_stages=args.stages, max_weak=args.max_weak, n_neg=args.negatives)
    save_cascade(model, args.out)
    out.write(json.dumps({"cascade": args.out, "stages": len(model.stages), "weak": model.n_weak}) + "\n")


COMMANDS = {
    "synth": cmd_synth, "augment": cmd_augment, "split": cmd_split, "train": cmd_train,
    "eval": cmd_eval, "crossval": cmd_crossval, "detect": cmd_detect, "infer": cmd_infer,
    "bench": cmd_bench, "train-cascade": cmd_train_cascade,
}


def run_cli(argv=None, stdout=None, stderr=None) -> int:
    out = stdout or sys.stdout
    err = stderr or sys.stderr
    parser, subs = build_parser()
    try:
        args = _apply_config(parser, subs, argv)
    except SystemExit as e:  # argparse already printed usage
        return 2 if e.code else 0
    except (UsageError, OSError) as e:
        err.write(f"gazecnn: error: {e}\n")
        return 2
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        COMMANDS[args.command](args, out)
    except GazeError as e:
        err.write(f"gazecnn: {type(e).__name__}: {e}\n")
        return 1
    except (UsageError, FileNotFoundError, IsADirectoryError, ValueError) as e:
        err.write(f"gazecnn: error: {e}\n")
        return 2
    return 0


def main() -> None:
    raise SystemExit(run_cli())
