"""Command-line front end.

Exit codes: 0 success, 2 input or config error, 3 stale or missing upstream
artifact, 4 internal invariant violation.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys

from . import __version__
from .config import RunConfig
from .errors import ContractViolation, InvariantViolation, ParseError, SchemaError, StaleArtifactError
from .pipeline import RUNNERS, STAGES, Workspace, run_pipeline, stage_prepare

EXIT_OK, EXIT_INPUT, EXIT_STALE, EXIT_INVARIANT = 0, 2, 3, 4

log = logging.getLogger("advnids")


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="YAML or JSON run config")
    p.add_argument("--seed", type=int, action="append", help="seed (repeatable); replaces config seeds")
    p.add_argument("--out", help="output root directory")
    p.add_argument("--subsample", type=int, help="training rows per seed; test rows = max(10, n // 5)")
    p.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                   help="override a config value, e.g. --set defense.fraction=0.3")
    p.add_argument("--method", choices=("gan", "fgsm", "both"), help="shorthand for attack.methods")
    p.add_argument("--eps", type=float, help="shorthand for attack.fgsm_eps")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="advnids", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"advnids {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {
        "prepare": "load raw CSVs, fit the preprocessing pipeline, persist transformed splits",
        "train": "train the baseline classifiers",
        "attack": "train the GAN and craft GAN / FGSM adversarial batches",
        "defend": "train the stacking classifiers and the autoencoder gate",
        "eval": "evaluate baselines and the detector under every condition",
        "ablate": "evaluate the SC / SC+AE / SC+AT / SC+AT+AE variants",
        "report": "render tables and figures from the eval (and ablate) reports",
        "run": "run every stage in order",
        "synth": "write synthetic stand-in dataset files",
        "show-config": "print the resolved config and its hash",
    }
    for name, text in helps.items():
        p = sub.add_parser(name, help=text, description=text)
        _common(p)
        if name == "synth":
            p.add_argument("outdir")
            p.add_argument("--train-rows", type=int, default=20000)
            p.add_argument("--test-rows", type=int, default=5000)
    return parser


def resolve_config(args: argparse.Namespace) -> RunConfig:
    overrides = list(args.overrides)
    # flags always win over file values, and explicit --set wins over shorthands
    shorthand = []
    if args.seed:
        shorthand.append(f"seeds={args.seed}")
    if args.out:
        shorthand.append(f"output.dir={json.dumps(args.out)}")
    if args.subsample is not None:
        shorthand.append(f"subsample.train={args.subsample}")
        shorthand.append(f"subsample.test={max(10, args.subsample // 5)}")
    if args.method:
        methods = ["gan", "fgsm"] if args.method == "both" else [args.method]
        shorthand.append(f"attack.methods={methods}")
    if args.eps is not None:
        shorthand.append(f"attack.fgsm_eps={args.eps!r}")
    return RunConfig.load(args.config, [*shorthand, *overrides])


def _summary(command: str, ws: Workspace, result) -> str:
    if command == "prepare":
        man, skipped = result
        state = "up to date, skipped" if skipped else "written"
        return f"prepare: {man['rows']['train']} train rows, {man['rows']['test']} test rows ({state}) -> {ws.root}"
    if command in ("eval", "ablate"):
        lines = [f"{command}: {ws.stage_dir(command) / 'report.json'}"]
        for m in result.models:
            cells = "  ".join(f"{c} F1 {result.mean(m, c, 'f1'):6.2f} DR {result.mean(m, c, 'detection_rate'):6.2f}"
                              for c in result.conditions)
            lines.append(f"  {m:<9} {cells}")
        return "\n".join(lines)
    return f"{command}: {ws.stage_dir(command)}"


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = resolve_config(args)
        if args.command == "show-config":
            print(f"# config hash {cfg.hash()}")
            print(cfg.dumps(), end="")
            return EXIT_OK
        if args.command == "synth":
            from .synthetic import write_dataset

            ds = cfg["dataset"]
            paths = write_dataset(ds["name"], args.outdir, args.train_rows, args.test_rows,
                                  ds["synthetic"]["seed"])
            print("\n".join(str(p) for p in paths))
            return EXIT_OK
        ws = Workspace(cfg)
        if args.command == "run":
            run_pipeline(cfg)
            print(f"run: all stages complete -> {ws.root}")
            return EXIT_OK
        result = stage_prepare(ws) if args.command == "prepare" else RUNNERS[args.command](ws)
        print(_summary(args.command, ws, result))
        return EXIT_OK
    except StaleArtifactError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_STALE
    except (InvariantViolation, AssertionError) as exc:
        print(f"internal invariant violated: {exc}", file=sys.stderr)
        return EXIT_INVARIANT
    except FileNotFoundError as exc:
        print(f"error: file not found: {exc.filename}" if exc.filename else f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (ContractViolation, ParseError, SchemaError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())


__all__ = ["main", "build_parser", "resolve_config", "STAGES"]
