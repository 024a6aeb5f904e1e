"""Command-line entry point: ``ecgroute <stage> [--config PATH] [flags]``.

Exit codes: 0 success, 1 invalid input or configuration, 2 missing or bad
data (including stale upstream artifacts), 3 internal error.
"""

from __future__ import annotations

import argparse
import logging
import sys

from .config import load_config
from .errors import DataError, ParseError, ValidationError
from .fetch import CACHE_ENV
from .pipeline import STAGES, Run, run_all, run_stage
from .synthetic import SyntheticConfig, gen_synthetic

EXIT_OK, EXIT_VALIDATION, EXIT_DATA, EXIT_INTERNAL = 0, 1, 2, 3

log = logging.getLogger("ecgroute")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ValidationError(f"{self.prog}: {message}")


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="JSON run configuration")
    common.add_argument("--jobs", type=int, default=1, metavar="N", help="parallel workers within a stage")
    common.add_argument("--seed", type=int, metavar="N", help="global seed (overrides the config)")
    common.add_argument("--offline", action="store_true", help="never touch the network")
    common.add_argument("--dataset", choices=("mitdb", "synthetic"), help="dataset preset (overrides the config)")
    common.add_argument("--tau", type=float, metavar="VALUE", help="fixed routing threshold instead of the swept one")
    common.add_argument("--mode", choices=("mean", "min"), help="segment confidence aggregation")
    common.add_argument("--output", metavar="DIR", help="output directory (overrides the config)")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = _Parser(
        prog="ecgroute",
        description="Confidence-routed ECG beat classification pipeline.",
        epilog=f"Downloads and default data directories live under ${CACHE_ENV} (default ~/.cache/ecgroute). "
        "Precedence: built-in defaults < --config file < command-line flags.",
    )
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    helps = {
        "fetch": "download and verify the MIT-BIH records",
        "ingest": "parse records, cut 10 s segments, build the subject split",
        "augment": "shift-based re-anchoring of minority beats (training split)",
        "detect": "run the R-peak detector and score it against annotations",
        "features": "extract the 23 per-beat features for every split",
        "train": "fit the minimal, rich and feature-only classifiers",
        "sweep": "choose the routing threshold on the induction split",
        "evaluate": "route the test split and compute metrics",
        "stress": "peak masking and mislocalization stress runs",
        "report": "render metrics, routing cost and stress tables",
    }
    for stage in STAGES:
        sub.add_parser(stage, parents=[common], help=helps[stage])
    sub.add_parser("run", parents=[common], help="all stages from ingest to report (fetch too for mitdb)")
    g = sub.add_parser("gen-synthetic", parents=[common], help="write the synthetic mini-dataset")
    g.add_argument("--records", type=int, help="number of records")
    g.add_argument("--seconds", type=float, help="record duration")
    return parser


def _overrides(args) -> dict:
    o: dict = {}
    if args.seed is not None:
        o["seed"] = args.seed
    if args.dataset is not None:
        o["dataset"] = args.dataset
    if args.output is not None:
        o["output_dir"] = args.output
    routing = {}
    if args.tau is not None:
        routing["tau"] = args.tau
    if args.mode is not None:
        routing["mode"] = args.mode
    if routing:
        o["routing"] = routing
    if getattr(args, "records", None) is not None:
        o.setdefault("synthetic", {})["records"] = args.records
    if getattr(args, "seconds", None) is not None:
        o.setdefault("synthetic", {})["seconds"] = args.seconds
    return o


def _gen_synthetic(cfg: dict) -> None:
    s = cfg["synthetic"]
    sc = SyntheticConfig(
        records=[f"s{i:02d}" for i in range(1, s["records"] + 1)],
        seconds=float(s["seconds"]),
        snr_db=s["snr_db"],
        seed=cfg["seed"],
    )
    manifest = gen_synthetic(cfg["data_dir"], sc)
    print(f"wrote {len(manifest['records'])} synthetic records to {cfg['data_dir']}")


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
        if args.jobs < 1:
            raise ValidationError("--jobs must be at least 1")
        cfg = load_config(args.config, _overrides(args))
        if args.command == "gen-synthetic":
            _gen_synthetic(cfg)
            return EXIT_OK
        run = Run(cfg, jobs=args.jobs, offline=args.offline)
        if args.command == "run":
            run_all(run, include_fetch=cfg["dataset"] == "mitdb")
        else:
            run_stage(run, args.command)
        if args.command in ("report", "run"):
            with open(run.path("report", "summary.txt")) as fh:
                sys.stdout.write(fh.read())
        else:
            print(f"{args.command}: ok -> {run.manifest_path(args.command)}")
        return EXIT_OK
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (DataError, ParseError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except Exception as exc:  # noqa: BLE001
        log.debug("internal error", exc_info=True)
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
