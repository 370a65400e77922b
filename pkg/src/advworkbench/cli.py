"""Command-line interface: ``advw train|attack|sweep|distill|report|replay``.

Every CSV/SVG the tool writes has a sibling ``<stem>.manifest.json`` holding
the argv, seed, dataset fingerprint, resolved config and tool version, plus
the sha256 of each output. ``advw replay --manifest M`` reruns the command
and checks the outputs against those hashes.

Exit codes: 0 success, 1 usage error, 2 runtime error.
"""
from __future__ import annotations

import argparse
import hashlib
import logging
import sys
from pathlib import Path

from . import __version__
from .attacks import (DISTILL_EPSILONS, FGSM_EPSILONS, CwConfig, FgsmConfig, cw_attack,
                      epsilon_sweep, fgsm_attack)
from .checkpoint import load_checkpoint, save_checkpoint
from .data import default_split, generate_synthetic, load_idx, split
from .distill import DistillConfig, distill_pipeline
from .errors import CheckpointError, WorkbenchError
from .metrics import SweepRecord, accuracy, topk_error_from_logits
from .models import forward_logits, init_params, reference_specs
from .report import RunManifest, read_csv, render_svg, write_csv
from .train import TrainConfig, train

logger = logging.getLogger("advworkbench")

EPSILON_PRESETS = {"paper-fgsm": FGSM_EPSILONS, "paper-distill": DISTILL_EPSILONS}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.format_usage()}{self.prog}: error: {message}")


def parse_epsilons(text):
    """``paper-fgsm``, ``paper-distill`` or a comma list of fractions in [0, 1]."""
    if text in EPSILON_PRESETS:
        return list(EPSILON_PRESETS[text])
    try:
        values = [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad epsilon list {text!r}") from None
    if not values or any(not 0.0 <= v <= 1.0 for v in values):
        raise argparse.ArgumentTypeError(f"epsilons must be a nonempty list of values in [0, 1], got {text!r}")
    return values


def load_dataset(text, seed):
    """``synthetic[:K,PER_CLASS,SIDE]`` or ``idx:IMAGES,LABELS``."""
    kind, _, rest = text.partition(":")
    if kind == "synthetic":
        k, per_class, side = 10, 300, 16
        if rest:
            try:
                k, per_class, side = (int(t) for t in rest.split(","))
            except ValueError:
                raise UsageError(f"--data synthetic expects synthetic:K,PER_CLASS,SIDE, got {text!r}") from None
        return generate_synthetic(k, per_class, side, seed)
    if kind == "idx":
        paths = rest.split(",")
        if len(paths) != 2 or not all(paths):
            raise UsageError(f"--data idx expects idx:IMAGES,LABELS, got {text!r}")
        return load_idx(*paths)
    raise UsageError(f"--data must be 'synthetic' or 'idx:IMAGES,LABELS', got {text!r}")


def _splits(args, seed):
    ds = load_dataset(args.data, seed)
    return ds, split(ds, default_split(ds, seed))


def _limited(test, limit):
    return test if limit is None or limit >= len(test) else test.subset(range(limit), test.name)


def _sha256(path):
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def manifest_path(path):
    return Path(path).with_suffix(".manifest.json")


def _write_manifest(args, argv, seed, fingerprint, outputs, extra=None, target=None):
    config = {k: v for k, v in sorted(vars(args).items()) if k not in ("func", "verbose")}
    config.update(extra or {})
    target = target or manifest_path(outputs[0])
    RunManifest(list(argv), int(seed), fingerprint, config, __version__,
                [{"file": Path(p).name, "sha256": _sha256(p)} for p in outputs]).write(target)
    return target


def _cw_config(args, cap=None):
    return CwConfig(c=args.c, kappa=args.kappa, max_iterations=args.iters, step_size=args.step, epsilon_cap=cap)


def cmd_train(args, argv):
    ds, (tr, va, te) = _splits(args, args.seed)
    specs = reference_specs(ds.item_shape, ds.num_classes)
    model = init_params(specs[args.model], args.seed)
    cfg = TrainConfig(args.epochs, args.batch, args.lr, args.temperature, args.seed)
    model, history = train(model, tr, va, cfg)
    save_checkpoint(model, args.out)
    _write_manifest(args, argv, args.seed, ds.fingerprint(), [args.out])
    print(f"{args.model}: train_acc={accuracy(model, tr):.4f} test_acc={accuracy(model, te):.4f} "
          f"final_lr={history['lr'][-1]:g} -> {args.out}")
    return 0


def _open_model(args):
    model = load_checkpoint(args.ckpt)
    seed = model.seed if args.seed is None else args.seed
    ds, (_, _, te) = _splits(args, seed)
    return model, ds, _limited(te, args.limit), seed


def cmd_attack(args, argv):
    model, ds, test, seed = _open_model(args)
    if args.attack == "fgsm":
        if args.epsilon is None:
            raise UsageError("fgsm needs --epsilon")
        res = fgsm_attack(model, test.images, test.labels, FgsmConfig(args.epsilon))
    else:
        res = cw_attack(model, test.images, test.labels, _cw_config(args, args.epsilon))
    logits = forward_logits(model, res.adversarial)
    rec = SweepRecord(args.epsilon or 0.0, topk_error_from_logits(logits, test.labels, 1),
                      topk_error_from_logits(logits, test.labels, min(5, test.num_classes)),
                      float(res.l2.mean()), res.success_rate, args.attack)
    write_csv([rec], args.out)
    _write_manifest(args, argv, seed, ds.fingerprint(), [args.out])
    print(f"{args.attack}: success_rate={rec.success_rate:.4f} top1_error={rec.top1_error:.4f} "
          f"mean_l2={rec.mean_l2:.4f} -> {args.out}")
    return 0


def cmd_sweep(args, argv):
    model, ds, test, seed = _open_model(args)
    records = epsilon_sweep(model, test, args.attack, args.epsilons, cw=_cw_config(args))
    svg = Path(args.out).with_suffix(".svg")
    write_csv(records, args.out)
    render_svg({f"{model.spec.name} {args.attack}": records}, svg, metrics=("top1_error", "top5_error"),
               title=f"{args.attack} sweep", manifest=manifest_path(args.out).name)
    _write_manifest(args, argv, seed, ds.fingerprint(), [args.out, svg])
    for r in records:
        print(f"eps={r.epsilon:.4f} top1_error={r.top1_error:.4f} top5_error={r.top5_error:.4f}")
    return 0


def cmd_distill(args, argv):
    ds, (tr, va, te) = _splits(args, args.seed)
    specs = reference_specs(ds.item_shape, ds.num_classes)
    cfg = DistillConfig(temperature=args.temperature, lam=args.lam, teacher_spec=specs[args.teacher],
                        student_spec=specs[args.student], epochs=args.epochs, seed=args.seed,
                        epsilons=tuple(args.epsilons), cw=_cw_config(args))
    teacher, distilled, baseline, report = distill_pipeline((tr, va, _limited(te, args.limit)), cfg)
    prefix = args.out_prefix
    outputs = []
    for tag, model in (("teacher", teacher), ("distilled", distilled), ("baseline", baseline)):
        save_checkpoint(model, f"{prefix}.{tag}.ckpt")
    curves = {}
    for tag in ("distilled", "baseline"):
        rep = report[tag]
        write_csv(rep.fgsm + rep.cw, f"{prefix}.{tag}.csv")
        outputs.append(f"{prefix}.{tag}.csv")
        curves[f"{tag} fgsm"] = rep.fgsm
        curves[f"{tag} cw"] = rep.cw
        print(f"{tag}: clean_acc={rep.clean_accuracy:.4f} cw_success={rep.cw_success_rate:.4f}")
    svg = f"{prefix}.svg"
    render_svg(curves, svg, metrics=("top1_accuracy",), title=f"distillation T={args.temperature:g}",
               manifest=Path(f"{prefix}.manifest.json").name)
    outputs.append(svg)
    outputs += [f"{prefix}.{tag}.ckpt" for tag in ("teacher", "distilled", "baseline")]
    _write_manifest(args, argv, args.seed, ds.fingerprint(), outputs, target=f"{prefix}.manifest.json")
    return 0


def cmd_report(args, argv):
    curves = {}
    for path in args.inputs:
        records = read_csv(path)
        if not records:
            raise ValueError(f"{path}: no rows")
        kinds = sorted({r.attack for r in records})
        for kind in kinds:
            name = Path(path).stem if len(kinds) == 1 else f"{Path(path).stem} {kind}"
            curves[name] = [r for r in records if r.attack == kind]
    render_svg(curves, args.svg, metrics=tuple(args.metrics), manifest=manifest_path(args.svg).name)
    inputs = {Path(p).name: _sha256(p) for p in args.inputs}
    _write_manifest(args, argv, 0, "", [args.svg], {"input_sha256": inputs})
    print(f"{len(curves)} curve(s) -> {args.svg}")
    return 0


# Flags whose values name output files; replay can redirect them.
_OUTPUT_FLAGS = ("--out", "--out-prefix", "--svg")


def cmd_replay(args, argv):
    manifest = RunManifest.read(args.manifest)
    command = list(manifest.command)
    out_dir = Path(args.out_dir) if args.out_dir else None
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
        for i, tok in enumerate(command[:-1]):
            if tok in _OUTPUT_FLAGS:
                command[i + 1] = str(out_dir / Path(command[i + 1]).name)
    if command and command[0] == "replay":
        raise UsageError("a manifest cannot replay another replay")
    code = main(command)
    if code != 0:
        return code
    base = out_dir or Path(args.manifest).parent
    bad = [o["file"] for o in manifest.outputs if _sha256(base / o["file"]) != o["sha256"]]
    if bad:
        print(f"replay differs from manifest: {', '.join(bad)}", file=sys.stderr)
        return 2
    print(f"replay matches {len(manifest.outputs)} output(s)")
    return 0


def _add_data(p):
    p.add_argument("--data", default="synthetic", help="synthetic[:K,PER_CLASS,SIDE] or idx:IMAGES,LABELS")


def _add_cw(p, iters=500):
    p.add_argument("--c", type=float, default=1.0)
    p.add_argument("--kappa", type=float, default=0.0)
    p.add_argument("--iters", type=int, default=iters)
    p.add_argument("--step", type=float, default=0.01)


def build_parser():
    parser = _Parser(prog="advw", description="Adversarial robustness workbench.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)
    models = sorted(reference_specs())

    p = sub.add_parser("train", help="train a reference model and save a checkpoint")
    p.add_argument("--model", choices=models, default="student-cnn")
    _add_data(p)
    p.add_argument("--epochs", type=int, default=10)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--batch", type=int, default=64)
    p.add_argument("--temperature", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="checkpoint path")
    p.set_defaults(func=cmd_train)

    for name, func, helptext in (("attack", cmd_attack, "attack the test split at one epsilon"),
                                 ("sweep", cmd_sweep, "attack the test split over a list of epsilons")):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("--ckpt", required=True)
        p.add_argument("--attack", choices=("fgsm", "cw"), default="fgsm")
        if name == "attack":
            p.add_argument("--epsilon", type=float, default=None, help="FGSM step, or L-inf cap for cw")
        else:
            p.add_argument("--epsilons", type=parse_epsilons, default=list(FGSM_EPSILONS),
                           help="comma list, paper-fgsm or paper-distill")
        _add_cw(p)
        _add_data(p)
        p.add_argument("--seed", type=int, default=None, help="data/split seed (default: checkpoint seed)")
        p.add_argument("--limit", type=int, default=None, help="attack only the first N test items")
        p.add_argument("--out", required=True, help="CSV path")
        p.set_defaults(func=func)

    p = sub.add_parser("distill", help="teacher, distilled and baseline students, and their robustness")
    p.add_argument("--temperature", type=float, default=100.0)
    p.add_argument("--lambda", dest="lam", type=float, default=1.0)
    p.add_argument("--epochs", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--teacher", choices=models, default="teacher-cnn")
    p.add_argument("--student", choices=models, default="student-cnn")
    p.add_argument("--epsilons", type=parse_epsilons, default=list(DISTILL_EPSILONS))
    _add_cw(p)
    _add_data(p)
    p.add_argument("--limit", type=int, default=None, help="attack only the first N test items")
    p.add_argument("--out-prefix", required=True)
    p.set_defaults(func=cmd_distill)

    p = sub.add_parser("report", help="plot sweep CSVs as one SVG")
    p.add_argument("--in", dest="inputs", nargs="+", required=True)
    p.add_argument("--svg", required=True)
    p.add_argument("--metrics", nargs="+", default=["top1_error", "top5_error"],
                   choices=("top1_error", "top5_error", "top1_accuracy", "top5_accuracy", "success_rate"))
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("replay", help="rerun a manifest and verify its outputs")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out-dir", default=None, help="write outputs here instead of their recorded paths")
    p.set_defaults(func=cmd_replay)
    return parser


def main(argv=None):
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    if not argv:
        parser.print_usage(sys.stderr)
        return 1
    try:
        args = parser.parse_args(argv)
    except UsageError as err:
        print(err, file=sys.stderr)
        return 1
    except SystemExit as done:  # --help
        return int(done.code or 0)
    if args.verbose:
        logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        return args.func(args, argv)
    except UsageError as err:
        print(f"{parser.prog}: error: {err}", file=sys.stderr)
        return 1
    except (WorkbenchError, CheckpointError, OSError, ValueError, KeyError) as err:
        print(f"{parser.prog}: {type(err).__name__}: {err}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
