"""Command line entry point: ``m2ac {train,ablate,verify-bounds,export-curves}``."""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import typing

from . import bounds
from .harness import PRESETS, ExperimentConfig, emit_curves, run_ablation_suite, run_m2ac
from .harness.config import leaf_fields
from .harness.runner import ABLATION_AXES


def _parse_value(text: str, tp):
    origin = typing.get_origin(tp)
    if origin is tuple:
        return tuple(int(x) for x in text.split(",") if x)
    if tp is bool:
        if text.lower() in ("1", "true", "yes"):
            return True
        if text.lower() in ("0", "false", "no"):
            return False
        raise argparse.ArgumentTypeError(f"not a boolean: {text}")
    if tp is int:
        return int(text)
    if tp is float:
        return float(text)
    if tp is str:
        return text
    # union such as str | float: numbers win
    try:
        return float(text)
    except ValueError:
        return text


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON config file (defaults to the chosen preset)")
    p.add_argument("--preset", default="desk", choices=sorted(PRESETS))
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="override any field, e.g. --set model.hidden=64,64")
    group = p.add_argument_group("config fields")
    for name, tp in leaf_fields():
        group.add_argument("--" + name.replace("_", "-"), dest="cfg:" + name, default=None,
                           metavar=name.rsplit(".", 1)[-1].upper(),
                           type=lambda s, tp=tp: _parse_value(s, tp))


def config_from_args(args) -> ExperimentConfig:
    cfg = ExperimentConfig.load(args.config) if args.config else PRESETS[args.preset]()
    types = dict(leaf_fields())
    overrides = {k[4:]: v for k, v in vars(args).items() if k.startswith("cfg:") and v is not None}
    for item in args.set:
        key, sep, value = item.partition("=")
        if not sep or key not in types:
            raise SystemExit(f"bad --set {item!r}")
        overrides[key] = _parse_value(value, types[key])
    return cfg.replace(**overrides) if overrides else cfg


def cmd_train(args) -> int:
    cfg = config_from_args(args)
    seeds = cfg.seeds if args.all_seeds else (cfg.seed,)
    for s in seeds:
        res = run_m2ac(cfg, seed=s, out_dir=args.out)
        last = res.records[-1]
        print(f"seed {s}: epoch {last.epoch} steps {last.env_steps} return {last.eval_return:.2f}")
    return 0


def cmd_ablate(args) -> int:
    cfg = config_from_args(args)
    table = run_ablation_suite(cfg, args.axis, out_dir=args.out)
    text = json.dumps(table, indent=2)
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        with open(os.path.join(args.out, f"ablation_{args.axis}.json"), "w") as fh:
            fh.write(text + "\n")
    for cell in table["cells"]:
        print(f"{args.axis}={cell['value']}: {cell['mean']:.2f} +/- {cell['std']:.2f}")
    return 0


def cmd_verify(args) -> int:
    kinds = list(bounds.CHECKS) if args.check == "all" else [args.check]
    reports = [bounds.sweep(k, args.instances, args.seed) for k in kinds]
    total = sum(r["violations"] for r in reports)
    for r in reports:
        extra = "".join(f" {k}={v}" for k, v in r["reported_violations"].items())
        print(f"{r['check']}: {r['instances']} instances, {r['violations']} violations, "
              f"min slack {r['min_slack']:.3e}" + (f" (reported only:{extra})" if extra else ""))
    if args.out:
        with open(args.out, "w") as fh:
            json.dump({"reports": reports, "violations": total}, fh, indent=2)
    return 1 if total else 0


def cmd_export(args) -> int:
    rows = emit_curves(args.runs, args.out, bucket=args.bucket)
    print(f"wrote {len(rows)} rows to {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="m2ac", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train on a toy environment")
    _add_config_flags(p)
    p.add_argument("--all-seeds", action="store_true", help="run every seed in --seeds instead of --seed")
    p.add_argument("--out", help="directory for config, metrics and checkpoints")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("ablate", help="run one ablation axis over shared seeds")
    _add_config_flags(p)
    p.add_argument("--axis", required=True, choices=sorted(ABLATION_AXES))
    p.add_argument("--out")
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("verify-bounds", help="randomized exact checks of the value bounds")
    p.add_argument("--check", default="all", choices=["all", *bounds.CHECKS])
    p.add_argument("--instances", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="write the JSON report here")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("export-curves", help="merge run files into a CSV of mean/std curves")
    p.add_argument("runs", nargs="+")
    p.add_argument("--out", required=True)
    p.add_argument("--bucket", type=int, default=None, help="env-step bucket width")
    p.set_defaults(func=cmd_export)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
