"""Command line: ``hvan {synth-data,train,eval,ablate,cam}``.

Exit codes: 0 ok, 2 usage or invalid config, 3 data error, 4 numeric failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .data import DataError
from .runs import RunConfig, ablate_run, cam_run, eval_run, synth_data, train_run

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(f"{self.prog}: error: {message}")


def _size(text):
    parts = [int(p) for p in text.replace("x", ",").split(",") if p]
    if len(parts) == 1:
        parts *= 3
    if len(parts) != 3:
        raise argparse.ArgumentTypeError(f"expected N or H,W,D, got {text!r}")
    return tuple(parts)


def _parser():
    p = _Parser(prog="hvan", description="Dual-view volume classifier with intra/cross-view attention.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp, manifest=True):
        sp.add_argument("--config", type=Path, help="run config JSON (sections model, train, synth)")
        sp.add_argument("--seed", type=int, help="override model and training seed")
        sp.add_argument("--size", type=_size, help="input size N or H,W,D (overrides model.input_size)")
        if manifest:
            sp.add_argument("--manifest", type=Path, required=True)

    sp = sub.add_parser("synth-data", help="write a synthetic phantom dataset")
    common(sp, manifest=False)
    sp.add_argument("--out", type=Path, required=True, help="output directory")
    sp.add_argument("--n", type=int, default=500, help="number of cases")

    sp = sub.add_parser("train", help="train on the train split and evaluate on the test split")
    common(sp)
    sp.add_argument("--out", type=Path, required=True, help="run directory")
    sp.add_argument("--checkpoint", type=Path, help="resume from this checkpoint")

    sp = sub.add_parser("eval", help="print test metrics of a checkpoint as JSON")
    sp.add_argument("--checkpoint", type=Path, required=True)
    sp.add_argument("--manifest", type=Path, required=True)
    sp.add_argument("--split", choices=("train", "test"), default="test")
    sp.add_argument("--threshold", type=float)
    sp.add_argument("--out", type=Path, help="also write the metrics JSON here")

    sp = sub.add_parser("ablate", help="train and test the 8-row component grid")
    common(sp)
    sp.add_argument("--out", type=Path, required=True, help="combined CSV path")

    sp = sub.add_parser("cam", help="export class activation maps for one case")
    sp.add_argument("--checkpoint", type=Path, required=True)
    sp.add_argument("--manifest", type=Path, required=True)
    sp.add_argument("--case", required=True, help="case id from the manifest")
    sp.add_argument("--stage", type=int, default=4, choices=(1, 2, 3, 4))
    sp.add_argument("--out", type=Path, required=True, help="output directory")
    return p


def _run_config(args) -> RunConfig:
    run = RunConfig.load(args.config) if args.config else RunConfig()
    if args.seed is not None:
        run = run.with_seed(args.seed)
    if args.size is not None:
        run = run.with_size(args.size)
    return run


def _dispatch(args) -> int:
    if args.command == "synth-data":
        run = _run_config(args)
        size = run.model.input_size
        if len(set(size)) != 1:
            raise ValueError("synth-data makes cubes; give a single --size")
        rows = synth_data(run, args.out, args.n, size[0], run.train.seed)
        print(json.dumps({"cases": len(rows), "manifest": str(args.out / "manifest.csv")}))
    elif args.command == "train":
        run = _run_config(args)
        print(f"run digest {run.digest()}", file=sys.stderr)
        ckpt, report = train_run(run, args.manifest, args.out, args.checkpoint)
        print(json.dumps({"digest": run.digest(), "epoch": ckpt.epoch, "metrics": report and report.to_dict()}))
    elif args.command == "eval":
        report = eval_run(args.checkpoint, args.manifest, args.split, args.threshold, args.out)
        print(report.to_json())
    elif args.command == "ablate":
        run = _run_config(args)
        rows = ablate_run(run, args.manifest, args.out)
        print(json.dumps({"digest": run.digest(), "rows": len(rows), "csv": str(args.out)}))
    elif args.command == "cam":
        paths = cam_run(args.checkpoint, args.manifest, args.case, args.out, args.stage)
        print(json.dumps({v.value: str(p) for v, p in paths.items()}))
    return EXIT_OK


def main(argv=None) -> int:
    try:
        args = _parser().parse_args(argv)
    except _UsageError as e:
        print(e, file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as e:  # --help
        return EXIT_OK if not e.code else EXIT_USAGE
    if args.verbose:
        logging.basicConfig(level=logging.INFO, format="%(message)s", stream=sys.stderr)
    try:
        return _dispatch(args)
    except DataError as e:
        print(f"hvan: data error: {e}", file=sys.stderr)
        return EXIT_DATA
    except FloatingPointError as e:
        print(f"hvan: numeric failure: {e}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ValueError, TypeError) as e:
        print(f"hvan: invalid configuration: {e}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
