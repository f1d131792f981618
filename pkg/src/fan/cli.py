"""Command-line driver: ``fan gen|train|eval|rfcalc|viz``.

Exit status: 0 on success, 2 on usage or configuration errors, 1 on
runtime failures (I/O, corrupt files, numerical trouble).
"""

from __future__ import annotations

import argparse
import copy
import logging
import sys
from pathlib import Path

import numpy as np

from . import checkpoint as ckpt_mod
from . import pnm, rfgeom
from .adcore.tensor import ShapeError
from .config import ConfigError, RunConfig
from .config import load as load_config
from .corpus import Dataset, ManifestError, make_dataset, read_dataset, write_dataset
from .evalkit import EvalReport, evaluate
from .train import WeightAverage, train

log = logging.getLogger("fan")

EXIT_OK, EXIT_RUNTIME, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    """Bad arguments or inconsistent inputs; maps to exit status 2."""


# --- helpers -----------------------------------------------------------------

def _config(path, overrides) -> RunConfig:
    cfg = load_config(path)
    for item in overrides or []:
        key, sep, value = item.partition("=")
        if not sep:
            raise ConfigError(f"--set expects section.key=value, got {item!r}")
        cfg.set(key.strip(), value.strip())
    return cfg


def _dataset(path) -> Dataset:
    return read_dataset(path)


def _check_alphabet(model_chars: str, ds: Dataset) -> None:
    ds_chars = set(ds.alphabet)
    recorded = "alphabet" in ds.manifest.get("config", {})
    if not ds_chars <= set(model_chars) or (recorded and ds_chars != set(model_chars)):
        raise UsageError(f"alphabet mismatch: checkpoint has {model_chars!r}, dataset has {ds.alphabet!r}")


def _check_images(cfg: RunConfig, ds: Dataset) -> None:
    want = tuple(cfg.encoder_config().input_size)
    for i, s in enumerate(ds):
        if s.image.shape != want:
            raise UsageError(f"sample {i} is {s.image.shape[0]}x{s.image.shape[1]}, "
                             f"model expects {want[0]}x{want[1]} (H x W)")


def _resolve_crop(cfg: RunConfig, ds: Dataset) -> None:
    if cfg.focus.crop_height <= 0 or cfg.focus.crop_width <= 0:
        ph, pw = ds.crop_size
        if min(ph, pw) < 1:
            raise UsageError("cannot derive the focus crop size: dataset has no character boxes; "
                             "set focus.crop_height and focus.crop_width")
        cfg.focus.crop_height, cfg.focus.crop_width = ph, pw


# --- subcommands -------------------------------------------------------------

def cmd_gen(args) -> int:
    cfg = _config(args.config, args.set)
    ds = make_dataset(cfg.corpus_config())
    out = Path(args.out)
    try:
        manifest = write_dataset(ds, out)
    except OSError as exc:
        print(f"error: cannot write dataset to {out}: {exc.strerror}", file=sys.stderr)
        return EXIT_RUNTIME
    print(f"wrote {len(ds)} images ({ds.manifest['annotated']} annotated) and {manifest}")
    return EXIT_OK


def _train_one(cfg: RunConfig, ds: Dataset, out: Path, resume: str | None, quiet=False):
    """Train one configuration; returns (model, history, weight average or None)."""
    average = None
    if resume:
        ck = ckpt_mod.load(resume)
        model, state, start, average = ck.model, ck.state, ck.step, ck.average
        cfg = copy.deepcopy(cfg)
        for sec in ("encoder", "attn"):
            setattr(cfg, sec, getattr(ck.config, sec))
        cfg.focus.crop_height, cfg.focus.crop_width = ck.config.focus.crop_height, ck.config.focus.crop_width
        cfg.focus.source = ck.config.focus.source
        cfg.train.init_seed = ck.config.train.init_seed
        log.info("resuming from %s at step %d", resume, start)
    else:
        model, state, start = ckpt_mod.build_model(cfg), None, 0
    _check_alphabet(model.alphabet.chars, ds)
    t = cfg.train
    if average is None and t.average > 0 and start == 0:
        average = WeightAverage(t.average)
    every = t.checkpoint_every

    def on_step(step, st):
        if every and step % every == 0 and step < t.steps:
            ckpt_mod.save(out, cfg, model, st, step, average)

    state, hist = train(model, ds, lam=cfg.focus.lam, steps=t.steps, batch_size=t.batch_size,
                        seed=t.seed, state=state, start_step=start, log_every=0 if quiet else t.log_every,
                        on_step=on_step, time_limit=t.time_limit or None, augment=bool(t.augment), average=average)
    final = hist.steps[-1] + 1 if hist.steps else start
    ckpt_mod.save(out, cfg, model, state, final, average)
    return model, hist, average


def _sweep_grid(spec: str) -> tuple[str, list[float]]:
    key, sep, values = spec.partition("=")
    key = key.strip()
    if not sep or key not in ("lambda", "ratio"):
        raise UsageError(f"--sweep expects lambda=v1,v2,... or ratio=v1,v2,..., got {spec!r}")
    try:
        grid = [float(v) for v in values.split(",") if v.strip()]
    except ValueError:
        raise UsageError(f"--sweep values must be numbers: {values!r}") from None
    if not grid:
        raise UsageError("--sweep needs at least one value")
    return key, grid


def sweep_table(key: str, rows: list[tuple[float, EvalReport, float]]) -> str:
    """Plain-text table, one row per grid value."""
    head = f"{key:>8}  {'accuracy':>8}  {'total_ned':>9}  {'center_err':>10}  {'final_loss':>10}"
    lines = [head]
    for v, rep, loss in rows:
        ce = "n/a" if rep.mean_center_error is None else f"{rep.mean_center_error:.4f}"
        lines.append(f"{v:>8g}  {rep.accuracy:>8.4f}  {rep.total_ned:>9.4f}  {ce:>10}  {loss:>10.4f}")
    return "\n".join(lines) + "\n"


def cmd_train(args) -> int:
    cfg = _config(args.config, args.set)
    ds = _dataset(args.dataset)
    _check_images(cfg, ds)
    _resolve_crop(cfg, ds)
    out = Path(args.out)
    if not args.sweep:
        if args.eval_dataset:
            raise UsageError("--eval-dataset is only used with --sweep")
        _train_one(cfg, ds, out, args.resume)
        print(f"saved {out}")
        return EXIT_OK
    if args.resume:
        raise UsageError("--resume cannot be combined with --sweep")
    key, grid = _sweep_grid(args.sweep)
    held = _dataset(args.eval_dataset) if args.eval_dataset else ds
    _check_images(cfg, held)
    rows = []
    for v in grid:
        run_cfg = copy.deepcopy(cfg)
        run_ds = ds
        if key == "lambda":
            if not 0.0 <= v < 1.0:
                raise UsageError(f"lambda must lie in [0, 1), got {v}")
            run_cfg.focus.lam = v
        else:
            try:
                run_ds = ds.with_ratio(v, seed=cfg.train.seed)
            except ValueError as exc:
                raise UsageError(str(exc)) from None
        run_out = out.with_name(f"{out.stem}.{key}={v:g}{out.suffix}")
        model, hist, average = _train_one(run_cfg, run_ds, run_out, None, quiet=args.quiet)
        if average is not None:
            average.copy_to(model.parameters())
        rep = evaluate(model, held, batch_size=cfg.eval.batch_size)
        loss = float(np.mean(hist.total[-10:])) if hist.total else float("nan")
        rows.append((v, rep, loss))
        print(f"{key}={v:g} accuracy={rep.accuracy:.4f} total_ned={rep.total_ned:.4f} saved={run_out}",
              flush=True)
    print(sweep_table(key, rows), end="")
    return EXIT_OK


def _read_lexicon(path) -> list[str]:
    try:
        words = [w.strip().lower() for w in Path(path).read_text().splitlines()]
    except OSError as exc:
        raise UsageError(f"cannot read lexicon {path}: {exc.strerror}") from None
    words = [w for w in words if w]
    if not words:
        raise UsageError(f"lexicon {path} is empty")
    return words


def cmd_eval(args) -> int:
    lexicon = _read_lexicon(args.lexicon) if args.lexicon else None
    ck = ckpt_mod.load(args.checkpoint)
    ds = _dataset(args.dataset)
    model = ck.inference_model()
    _check_alphabet(model.alphabet.chars, ds)
    _check_images(ck.config, ds)
    rep = evaluate(model, ds, lexicon=lexicon, batch_size=ck.config.eval.batch_size)
    print(rep.table(), end="")
    print(rep.metric_lines(), end="")
    return EXIT_OK


def cmd_rfcalc(args) -> int:
    try:
        text = sys.stdin.read() if args.stack == "-" else Path(args.stack).read_text()
    except OSError as exc:
        raise UsageError(f"cannot read stack {args.stack}: {exc.strerror}") from None
    stack, size = rfgeom.parse_stack(text)
    if args.input:
        size = _pair(args.input, "--input")
    if not stack:
        raise UsageError("stack has no layers")
    if args.all:
        if size is None:
            raise UsageError("--all needs the input size (an 'input' line or --input HxW)")
        ho, wo = stack.output_size(size)
        positions = [(x, y) for y in range(1, ho + 1) for x in range(1, wo + 1)]
    else:
        if not args.pos:
            raise UsageError("give --pos X[,Y] or --all")
        x, _, y = args.pos.partition(",")
        try:
            positions = [(int(x), int(y) if y else 1)]
        except ValueError:
            raise UsageError(f"bad --pos {args.pos!r}") from None
    print(f"{'x':>4} {'y':>4}  {'x_min':>6} {'x_max':>6} {'y_min':>6} {'y_max':>6}  {'cx':>8} {'cy':>8}")
    for pos in positions:
        b = rfgeom.receptive_field(pos, stack, size)
        c = b.center
        print(f"{pos[0]:>4} {pos[1]:>4}  {b.x_min:>6} {b.x_max:>6} {b.y_min:>6} {b.y_max:>6}  "
              f"{c.x:>8g} {c.y:>8g}")
    return EXIT_OK


def _pair(text: str, what: str) -> tuple[int, int]:
    h, sep, w = text.lower().partition("x")
    try:
        return int(h), int(w)
    except ValueError:
        raise UsageError(f"{what} expects HxW, got {text!r}") from None


RED = np.array([255, 0, 0], dtype=np.uint8)


def overlay_centers(image: np.ndarray, centers: np.ndarray, arm: int = 2) -> np.ndarray:
    """Gray [0, 1] image to RGB uint8 with a '+' at each (x, y) 1-indexed center.

    Centers are rounded half-up and clipped into the image; arms are clipped too.
    """
    h, w = image.shape
    gray = pnm.to_uint8(image)
    rgb = np.repeat(gray[:, :, None], 3, axis=2)
    for cx, cy in centers:
        x = int(np.clip(rfgeom.round_half_up(cx) - 1, 0, w - 1))
        y = int(np.clip(rfgeom.round_half_up(cy) - 1, 0, h - 1))
        rgb[y, max(0, x - arm) : min(w, x + arm + 1)] = RED
        rgb[max(0, y - arm) : min(h, y + arm + 1), x] = RED
    return rgb


def cmd_viz(args) -> int:
    ck = ckpt_mod.load(args.checkpoint)
    try:
        img = pnm.read_pgm(args.image)
    except OSError as exc:
        print(f"error: cannot read {args.image}: {exc.strerror}", file=sys.stderr)
        return EXIT_RUNTIME
    model = ck.inference_model()
    want = tuple(model.encoder.config.input_size)
    if img.shape != want:
        raise UsageError(f"image is {img.shape[0]}x{img.shape[1]}, model expects {want[0]}x{want[1]}")
    texts, alphas = model.predict(img[None, None])
    centers = np.array([a @ model.encoder.centers for a in alphas[0]]).reshape(-1, 2)
    rgb = overlay_centers(img, centers)
    try:
        pnm.write_ppm(args.out, rgb)
    except OSError as exc:
        print(f"error: cannot write {args.out}: {exc.strerror}", file=sys.stderr)
        return EXIT_RUNTIME
    print(texts[0])
    for t, (cx, cy) in enumerate(centers):
        print(f"step={t} char={texts[0][t]} cx={cx:.3f} cy={cy:.3f}")
    print(f"markers={len(centers)}")
    return EXIT_OK


# --- entry point -------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="fan", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="generate a synthetic dataset")
    g.add_argument("config")
    g.add_argument("out")
    g.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config key")
    g.set_defaults(func=cmd_gen)

    t = sub.add_parser("train", help="train a model (optionally a lambda or ratio sweep)")
    t.add_argument("config")
    t.add_argument("dataset")
    t.add_argument("out", help="checkpoint path (sweeps add .KEY=VALUE before the suffix)")
    t.add_argument("--resume", metavar="CKPT")
    t.add_argument("--sweep", metavar="KEY=V1,V2,...")
    t.add_argument("--eval-dataset", metavar="DIR", help="held-out set scored after each sweep run")
    t.add_argument("--set", action="append", metavar="KEY=VALUE")
    t.add_argument("-q", "--quiet", action="store_true", help="no per-step logging during sweeps")
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="score a checkpoint on a dataset")
    e.add_argument("checkpoint")
    e.add_argument("dataset")
    e.add_argument("--lexicon", metavar="FILE", help="one word per line")
    e.set_defaults(func=cmd_eval)

    r = sub.add_parser("rfcalc", help="receptive fields and centers of a layer stack")
    r.add_argument("stack", help="stack description file, or - for stdin")
    r.add_argument("--pos", metavar="X[,Y]")
    r.add_argument("--all", action="store_true")
    r.add_argument("--input", metavar="HxW")
    r.set_defaults(func=cmd_rfcalc)

    v = sub.add_parser("viz", help="overlay attention centers on an image")
    v.add_argument("checkpoint")
    v.add_argument("image")
    v.add_argument("out", help="output PPM path")
    v.set_defaults(func=cmd_viz)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse reports usage errors with status 2
        return int(exc.code or 0)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(message)s", stream=sys.stderr)
    try:
        return args.func(args)
    except rfgeom.StackParseError as exc:
        print(f"error: stack {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ConfigError, UsageError, rfgeom.GeometryError, ShapeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (OSError, ManifestError, ckpt_mod.CheckpointError, pnm.PNMError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
