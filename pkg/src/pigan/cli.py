"""``pigan`` command line: train, eval, interp, divergence, data, gradcheck.

Every command exits 0 only when all outputs were written and every internal
check passed.  Library errors are reported on stderr as one line and give
exit status 2; failed numeric checks give status 1.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import runs
from .config import load_run_config
from .datasets import (
    BACKGROUND,
    EVALUATION,
    GlyphSpec,
    MixtureSpec,
    ingest_pgm_directory,
    load_dataset,
    save_dataset,
)
from .exceptions import PiganError

log = logging.getLogger("pigan")

DEFAULT_PIS = "0.01,0.1,0.5,0.9,0.99"
GRADCHECK_TOL = 1e-5


def _floats(text: str):
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _steps(text: str) -> int:
    n = int(text)
    if n < 2:
        raise argparse.ArgumentTypeError("steps must be at least 2")
    return n


def _print_json(obj):
    print(json.dumps(obj, indent=2, sort_keys=True, default=str))


# ---------------------------------------------------------------- commands


def cmd_train(args) -> int:
    doc = runs.apply_overrides(
        load_run_config(args.config), pi=args.pi, k=args.k, seed=args.seed, iters=args.iters, out=args.out
    )
    _print_json(runs.train_run(doc, resume=args.resume))
    return 0


def _load_json_arg(text):
    path = Path(text)
    return json.loads(path.read_text()) if path.exists() else json.loads(text)


def cmd_eval(args) -> int:
    if args.task == "retrieval":
        summary = runs.eval_retrieval(
            args.checkpoint, args.dataset, args.out, k=args.k, queries=args.queries, seed=args.seed, by_group=args.groups
        )
    elif args.task == "oneshot":
        summary = runs.eval_oneshot(args.checkpoint, args.dataset, args.out, seed=args.seed)
    elif args.task == "modes":
        mixture = _load_json_arg(args.mixture) if args.mixture else {"type": "mixture", "preset": "ring"}
        summary = runs.eval_modes(
            args.out, mixture, checkpoint=args.checkpoint, dataset=args.dataset, count=args.count, seed=args.seed
        )
    else:
        summary = runs.eval_overfit(args.checkpoint, args.dataset, args.out, seed=args.seed)
    _print_json(summary)
    return 0


def cmd_interp(args) -> int:
    _print_json(runs.interpolate(args.checkpoint, args.out, mode=args.mode, steps=args.steps, seed=args.seed))
    return 0


def _read_points(path):
    path = Path(path)
    if path.suffix == ".csv":
        return np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return load_dataset(path).samples.astype(np.float64)


def cmd_divergence(args) -> int:
    if args.samples_p or args.samples_q:
        if not (args.samples_p and args.samples_q):
            raise SystemExit("divergence: --samples-p and --samples-q go together")
        p, q = runs.histogram_pair(_read_points(args.samples_p), _read_points(args.samples_q), args.bins)
    elif args.spec:
        doc = _load_json_arg(args.spec)
        p, q = doc["p"], doc["q"]
    elif args.p and args.q:
        p, q = args.p, args.q
    else:
        raise SystemExit("divergence: give --p/--q, --spec or --samples-p/--samples-q")
    rows = runs.divergence_rows(p, q, args.pis)
    if args.out:
        runs.write_divergence_csv(args.out, rows)
    else:
        runs.write_divergence_csv("/dev/stdout", rows)
    worst = runs.max_identity_residual(rows)
    if not worst < runs.IDENTITY_TOL:
        print(f"identity residual {worst:.3e} exceeds {runs.IDENTITY_TOL:g}", file=sys.stderr)
        return 1
    return 0


def _glyph_spec(args) -> GlyphSpec:
    base = json.loads(Path(args.spec).read_text()) if args.spec else {}
    for key in ("class_count", "examples_per_class", "image_size", "seed"):
        if getattr(args, key) is not None:
            base[key] = getattr(args, key)
    return GlyphSpec.from_dict(base)


def cmd_data(args) -> int:
    if args.data_cmd == "make-glyphs":
        paths = runs.make_glyphs(args.out, _glyph_spec(args), args.split)
        _print_json({"written": [str(p) for p in paths]})
    elif args.data_cmd == "make-mixture":
        spec = MixtureSpec.from_dict(_load_json_arg(args.mixture) if args.mixture else {"preset": "ring"})
        _print_json({"written": str(runs.make_mixture(args.out, spec, args.count, args.seed))})
    elif args.data_cmd == "ingest-pgm":
        ds = ingest_pgm_directory(args.directory, image_size=args.image_size, split=args.split)
        _print_json({"written": str(save_dataset(ds, args.out)), **ds.summary()})
    else:
        _print_json(load_dataset(args.path).summary())
    return 0


def cmd_gradcheck(args) -> int:
    from .nn import LAYER_PROBES, PRESET_PROBES, check_layer_kind, check_preset

    names = []
    if args.what in ("layers", "all"):
        names += [("layer", n, check_layer_kind) for n in LAYER_PROBES]
    if args.what in ("presets", "all"):
        names += [("preset", n, check_preset) for n in PRESET_PROBES]
    worst = 0.0
    for kind, name, check in names:
        report = check(name)
        worst = max(worst, report.max_error)
        status = "ok" if report.max_error < GRADCHECK_TOL else "FAIL"
        print(f"{kind:6s} {name:24s} max_rel_error={report.max_error:.3e} checked={report.checked} {status}")
    return 0 if worst < GRADCHECK_TOL else 1


# ---------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pigan", description="pi-weighted adversarial training toolkit")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a GAN from a JSON run config")
    p.add_argument("--config", required=True)
    p.add_argument("--pi", type=float)
    p.add_argument("--k", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--iters", type=int)
    p.add_argument("--out")
    p.add_argument("--resume", help="continue from a checkpoint of the same architecture")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint")
    p.add_argument("--checkpoint")
    p.add_argument("--dataset")
    p.add_argument("--task", required=True, choices=["retrieval", "oneshot", "modes", "overfit"])
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--k", type=int, default=19, help="retrieval depth")
    p.add_argument("--queries", type=int, default=5, help="retrieval mosaics to write")
    p.add_argument("--groups", action="store_true", help="retrieve within each group only")
    p.add_argument("--mixture", help="mixture JSON (file or literal) for the modes task; default ring")
    p.add_argument("--count", type=int, default=10_000, help="generated samples for the modes task")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("interp", help="latent interpolation strips")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--mode", choices=["lerp", "slerp", "both"], default="lerp")
    p.add_argument("--steps", type=_steps, default=9)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_interp)

    p = sub.add_parser("divergence", help="tabulate KL, JS_pi and the cost identity")
    p.add_argument("--p", type=_floats)
    p.add_argument("--q", type=_floats)
    p.add_argument("--spec", help='JSON {"p": [...], "q": [...]} (file or literal)')
    p.add_argument("--samples-p", help="2-D points (CSV with header or dataset file)")
    p.add_argument("--samples-q")
    p.add_argument("--bins", type=int, default=32)
    p.add_argument("--pis", type=_floats, default=_floats(DEFAULT_PIS))
    p.add_argument("--out", help="CSV path; stdout when omitted")
    p.set_defaults(func=cmd_divergence)

    p = sub.add_parser("data", help="dataset tooling")
    dsub = p.add_subparsers(dest="data_cmd", required=True)
    g = dsub.add_parser("make-glyphs")
    g.add_argument("--out", required=True)
    g.add_argument("--split", choices=[BACKGROUND, EVALUATION, "both"], default="both")
    g.add_argument("--spec", help="glyph spec JSON file")
    g.add_argument("--class-count", dest="class_count", type=int)
    g.add_argument("--examples-per-class", dest="examples_per_class", type=int)
    g.add_argument("--image-size", dest="image_size", type=int)
    g.add_argument("--seed", type=int)
    m = dsub.add_parser("make-mixture")
    m.add_argument("--out", required=True)
    m.add_argument("--mixture", help="mixture JSON (file or literal); default ring")
    m.add_argument("--count", type=int, default=10_000)
    m.add_argument("--seed", type=int, default=0)
    i = dsub.add_parser("ingest-pgm")
    i.add_argument("directory")
    i.add_argument("--out", required=True)
    i.add_argument("--image-size", type=int, default=16)
    i.add_argument("--split", choices=[BACKGROUND, EVALUATION], default=BACKGROUND)
    f = dsub.add_parser("info")
    f.add_argument("path")
    p.set_defaults(func=cmd_data)

    p = sub.add_parser("gradcheck", help="finite-difference gradient checks")
    p.add_argument("what", nargs="?", choices=["layers", "presets", "all"], default="all")
    p.set_defaults(func=cmd_gradcheck)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (PiganError, ValueError, OSError, KeyError, json.JSONDecodeError) as exc:
        print(f"pigan {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
