"""Command-line front end: ``aeroload synth | process | experiment | report``.

Exit codes: 0 success, 2 validation failure (error JSON on stderr naming the
offending file), 64 usage error such as an unknown flag.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from .errors import AeroloadError, InvalidConfigError, ManifestParseError

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_USAGE = 64

log = logging.getLogger("aeroload")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="JSON config file; flags override it")
    common.add_argument("--seed", type=int, help="master seed for all randomness")
    common.add_argument("--jobs", type=int, default=1, help="worker threads (output is identical for any N)")
    common.add_argument("--out", type=Path, help="output directory")

    p = _Parser(prog="aeroload", description=__doc__.split("\n")[0],
                epilog="exit codes: 0 success, 2 validation failure, 64 usage error")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("synth", parents=[common], help="write a synthetic session tree")
    s.add_argument("spec", nargs="?", type=Path, help="synth spec JSON (same as the config's 'synth' block)")

    s = sub.add_parser("process", parents=[common], help="sessions -> FeatureTable")
    s.add_argument("--data", type=Path, help="dataset root holding one session per sub-directory")

    s = sub.add_parser("experiment", parents=[common], help="run CV protocols on a FeatureTable")
    s.add_argument("--data", type=Path, help="FeatureTable CSV or the directory holding features.csv")
    s.add_argument("--protocol", action="append",
                   choices=("generalized", "individualized", "ablation", "baseline"),
                   help="protocol to run (repeatable; default generalized)")
    s.add_argument("--target", help="target participant for the individualized protocol")
    s.add_argument("--sweep", help="comma-separated upsampling fractions, e.g. 0,0.1,0.2")

    s = sub.add_parser("report", parents=[common], help="re-render report JSON files")
    s.add_argument("--data", type=Path, help="directory of report JSON files")
    return p


def _load_config(path: Path | None) -> dict:
    if path is None:
        return {}
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise InvalidConfigError("config file not found", path=path) from None
    except json.JSONDecodeError as exc:
        raise InvalidConfigError(f"config is not valid JSON: {exc}", path=path) from None
    if not isinstance(doc, dict):
        raise InvalidConfigError("config must be a JSON object", path=path)
    return doc


def _path(args, cfg: dict, key: str, flag) -> Path:
    value = flag if flag is not None else cfg.get("paths", {}).get(key)
    if value is None:
        raise InvalidConfigError(f"missing --{key} (or paths.{key} in the config)")
    return Path(value)


def cmd_synth(args, cfg: dict) -> int:
    from .synth import SynthSpec, write_dataset

    spec_doc = dict(cfg.get("synth", {}))
    if args.spec is not None:
        spec_doc.update(_load_config(args.spec))
    if args.seed is not None:
        spec_doc["seed"] = args.seed
    spec = SynthSpec.from_dict(spec_doc)
    out = write_dataset(spec, _path(args, cfg, "out", args.out), jobs=args.jobs)
    log.info("wrote %d sessions to %s", spec.n_participants, out)
    return EXIT_OK


def _session_paths(root: Path) -> list[Path]:
    index = root / "dataset.json"
    if index.exists():
        try:
            doc = json.loads(index.read_text(encoding="utf-8"))
            return [root / p for p in doc["sessions"]]
        except (json.JSONDecodeError, KeyError, TypeError):
            raise ManifestParseError("malformed dataset index", path=index) from None
    paths = sorted(root.glob("*/manifest.json"))
    if not paths and (root / "manifest.json").exists():
        paths = [root / "manifest.json"]
    if not paths:
        raise ManifestParseError("no session manifests found", path=root)
    return paths


def cmd_process(args, cfg: dict) -> int:
    from .manifest import load_session
    from .pipeline import PipelineConfig, build_table, parallel_map

    root = _path(args, cfg, "data", args.data)
    out = _path(args, cfg, "out", args.out)
    pcfg = PipelineConfig.from_dict(cfg)
    sessions = parallel_map(load_session, _session_paths(root), args.jobs)
    table, diagnostics = build_table(sessions, pcfg, jobs=args.jobs)
    out.mkdir(parents=True, exist_ok=True)
    table.to_csv(out / "features.csv")
    (out / "diagnostics.json").write_text(json.dumps(diagnostics, indent=1, sort_keys=True) + "\n",
                                          encoding="utf-8")
    log.info("feature table: %d rows x %d features", *table.X.shape)
    return EXIT_OK


def cmd_experiment(args, cfg: dict) -> int:
    from .experiments import (
        ExperimentConfig,
        ablation,
        baseline_protocol,
        generalized_cv,
        individualized_all,
        individualized_cv,
    )
    from .features import FeatureTable
    from .reports import write_report

    src = _path(args, cfg, "data", args.data)
    if src.is_dir():
        src = src / "features.csv"
    out = _path(args, cfg, "out", args.out)
    ecfg_doc = dict(cfg.get("experiment", {}))
    if args.seed is not None:
        ecfg_doc["seed"] = args.seed
        ecfg_doc.setdefault("model", {}).setdefault("seed", args.seed)
        ecfg_doc["model"]["seed"] = args.seed
    if args.target is not None:
        ecfg_doc["target_participant"] = args.target
    if args.sweep is not None:
        try:
            ecfg_doc["upsample_fractions"] = [float(v) for v in args.sweep.split(",") if v.strip()]
        except ValueError:
            raise InvalidConfigError(f"--sweep must be comma-separated numbers, got {args.sweep!r}") from None
    ecfg = ExperimentConfig.from_dict(ecfg_doc)
    try:
        table = FeatureTable.from_csv(src)
    except (ValueError, KeyError) as exc:
        raise ManifestParseError(f"unreadable feature table: {exc}", path=src) from None
    protocols = args.protocol or cfg.get("protocols") or ["generalized"]
    for proto in protocols:
        if proto == "generalized":
            report = generalized_cv(table, ecfg, jobs=args.jobs)
        elif proto == "individualized":
            if ecfg.target_participant is not None:
                report = individualized_cv(table, ecfg, jobs=args.jobs)
            else:
                report = individualized_all(table, ecfg, jobs=args.jobs)
        elif proto == "ablation":
            report = ablation(table, ecfg, jobs=args.jobs)
        else:
            report = baseline_protocol(table, ecfg)
        write_report(report, out)
        log.info("%s: balanced accuracy %.3f", proto, report.aggregate.get("balanced_accuracy", float("nan")))
    return EXIT_OK


def cmd_report(args, cfg: dict) -> int:
    from .reports import render_files

    src = _path(args, cfg, "data", args.data)
    out = args.out if args.out is not None else src
    out.mkdir(parents=True, exist_ok=True)
    files = sorted(p for p in src.glob("*.json") if p.stem in
                   ("generalized", "individualized", "ablation", "baseline"))
    if not files:
        raise ManifestParseError("no report JSON files found", path=src)
    for f in files:
        try:
            doc = json.loads(f.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ManifestParseError(f"invalid report JSON: {exc}", path=f) from None
        render_files(doc, out)
        if out != src:
            (out / f.name).write_text(f.read_text(encoding="utf-8"), encoding="utf-8")
    return EXIT_OK


COMMANDS = {"synth": cmd_synth, "process": cmd_process, "experiment": cmd_experiment,
            "report": cmd_report}


def main(argv=None) -> int:
    logging.basicConfig(level=os.environ.get("AEROLOAD_LOG", "WARNING").upper(),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args = _parser().parse_args(argv)
    except UsageError as exc:
        print(f"aeroload: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        cfg = _load_config(args.config)
        if args.jobs < 1:
            raise InvalidConfigError("--jobs must be >= 1")
        if "log_level" in cfg and "AEROLOAD_LOG" not in os.environ:
            logging.getLogger().setLevel(str(cfg["log_level"]).upper())
        return COMMANDS[args.command](args, cfg)
    except AeroloadError as exc:
        print(json.dumps(exc.to_dict(), sort_keys=True), file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
