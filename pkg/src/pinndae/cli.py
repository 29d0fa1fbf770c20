"""Command line entry point: ``pinndae <subcommand> ...``."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import harness
from .errors import PinnDaeError


def _config(args) -> harness.ExperimentConfig:
    return harness.ExperimentConfig.from_file(args.config, paper_scale=args.paper_scale)


def cmd_gen_data(args) -> int:
    if args.dump_segments:
        r = harness.dump_segments(args.dump_segments, n_segments=args.segments)
        print(f"wrote {args.dump_segments}: Vs={r.Vs:.6e} Vc={r.Vc:.6e} Vw={r.Vw:.6e}")
        if not args.config:
            return 0
    if not args.config:
        print("gen-data needs --config (or --dump-segments)", file=sys.stderr)
        return 2
    cfg = _config(args)
    for k in range(cfg.n_datasets):
        ds = harness.load_or_build_dataset(cfg, k)
        sizes = ", ".join(f"{name}={len(v)}" for name, v in sorted(ds.splits.items()))
        print(f"{harness.dataset_dir(cfg, k)}: {sizes}")
    return 0


def cmd_train(args) -> int:
    cfg = _config(args)
    harness.train_matrix(cfg)
    print(harness.render_metrics(json.loads(harness.metrics_path(cfg, "test").read_text())), end="")
    return 0


def cmd_eval(args) -> int:
    cfg = _config(args)
    split = "extrapolation" if args.extrapolation else "test"
    harness.eval_matrix(cfg, split)
    print(harness.render_metrics(json.loads(harness.metrics_path(cfg, split).read_text())), end="")
    return 0


def cmd_incidence(args) -> int:
    text, verdict = harness.incidence_report(args.model, args.variant, args.setting)
    print(json.dumps(verdict, sort_keys=True, indent=2) if args.json else text)
    return 0


def cmd_counterexample(args) -> int:
    if args.which == "sm5":
        out = harness.sm5_demo(args.seed)
        ok = out["estimated"] and not out["full_column_rank"]
    else:
        out = harness.sm6_demo((args.seed, args.seed + 1))
        ok = out["non_unique"] and out["full_column_rank"]
    text = json.dumps(out, sort_keys=True, indent=2) + "\n"
    if args.out:
        Path(args.out).write_text(text)
    print(text, end="")
    return 0 if ok else 1


def cmd_report(args) -> int:
    out_dir = args.out
    if args.config:
        out_dir = harness.ExperimentConfig.from_file(args.config).out_dir
    text = harness.report(out_dir or "runs")
    if not text:
        print(f"no metrics files under {out_dir}", file=sys.stderr)
        return 1
    Path(out_dir or "runs", "report.txt").write_text(text)
    print(text, end="")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="pinndae", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def with_config(sp, required=True):
        sp.add_argument("--config", required=required, help="experiment config JSON")
        sp.add_argument("--paper-scale", action="store_true",
                        help="5 data sets x 5 runs instead of 2 x 2")

    sp = sub.add_parser("gen-data", help="simulate and store the data sets of a config")
    with_config(sp, required=False)
    sp.add_argument("--dump-segments", metavar="CSV",
                    help="write per-segment separator diagnostics at a mid-range point")
    sp.add_argument("--segments", type=int, default=None, help="axial segments for the dump")
    sp.set_defaults(func=cmd_gen_data)

    sp = sub.add_parser("train", help="train every (data set, run) pair and score the test split")
    with_config(sp)
    sp.set_defaults(func=cmd_train)

    sp = sub.add_parser("eval", help="re-score saved checkpoints")
    with_config(sp)
    sp.add_argument("--extrapolation", action="store_true",
                    help="score the out-of-range cA0 split instead of the test split")
    sp.set_defaults(func=cmd_eval)

    sp = sub.add_parser("incidence", help="render a variant's incidence matrix and rank verdict")
    sp.add_argument("--model", required=True)
    sp.add_argument("--variant", required=True)
    sp.add_argument("--setting", type=int, default=0)
    sp.add_argument("--json", action="store_true")
    sp.set_defaults(func=cmd_incidence)

    sp = sub.add_parser("counterexample", help="run the sm5 or sm6 demonstration")
    sp.add_argument("which", choices=["sm5", "sm6"])
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--out", help="also write the JSON result here")
    sp.set_defaults(func=cmd_counterexample)

    sp = sub.add_parser("report", help="tabulate every metrics file of an output directory")
    sp.add_argument("--config")
    sp.add_argument("--out", help="output directory (default: runs or the config's)")
    sp.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except PinnDaeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
