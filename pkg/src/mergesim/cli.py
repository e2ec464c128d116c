"""Command-line entry point: simulate, analyze, ablate, replay, import-human.

Exit codes: 0 success, 1 usage error, 2 runtime failure.
Settings resolve as CLI flag > config file > built-in default.
"""

from __future__ import annotations

import argparse
import dataclasses
import difflib
import glob
import json
import logging
import re
import sys
from pathlib import Path
from typing import Optional, Sequence

from .config import load_config
from .domain import SimParams, TrackGeometry
from .metrics import MetricsRow, read_human_csv, rows_from_trials, write_human_csv
from .prompting import PromptVariant
from .runner import ExperimentSpec, load_trials, run_experiment
from .stats.reports import render_reports

log = logging.getLogger("mergesim")

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> None:  # type: ignore[override]
        hint = ""
        m = re.search(r"unrecognized arguments: (\S+)", message)
        if m:
            known = [s for a in self._actions for s in a.option_strings]
            for sub in self._subparsers._group_actions if self._subparsers else []:
                for p in getattr(sub, "choices", {}).values():
                    known += [s for a in p._actions for s in a.option_strings]
            close = difflib.get_close_matches(m.group(1), known, n=1)
            if close:
                hint = f" (did you mean {close[0]}?)"
        raise UsageError(f"{self.prog}: error: {message}{hint}")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="mergesim", description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("simulate", help="run conditions x repetitions and write a dataset directory")
    s.add_argument("--config", type=Path, help="TOML experiment configuration")
    s.add_argument("--variant", choices=[v.value for v in PromptVariant], help="prompt variant (baseline, a1..a7)")
    s.add_argument("--reps", type=int, help="repetitions per condition")
    s.add_argument("--agent", help="agent for both vehicles: heuristic | const:<u> | scripted:<file> | llm:<provider>/<model>")
    s.add_argument("--agent-left", help="agent for the left vehicle (overrides --agent)")
    s.add_argument("--agent-right", help="agent for the right vehicle (overrides --agent)")
    s.add_argument("--out", type=Path, help="output directory (default: runs/<variant>)")
    s.add_argument("--parallelism", type=int, help="concurrent trials")
    s.add_argument("--record", type=Path, help="record LLM completions to this cassette")
    s.add_argument("--replay", type=Path, help="serve LLM completions from this cassette (no network)")

    a = sub.add_parser("analyze", help="metrics, regressions and indicator tables for one dataset")
    a.add_argument("--data", type=Path, required=True, help="trials.jsonl, a dataset directory, or a human CSV")
    a.add_argument("--steps", type=Path, help="per-step CSV accompanying a human CSV")
    a.add_argument("--reference", type=Path, help="human CSV or dataset shown as the reference row")
    a.add_argument("--label", help="row label (default: dataset variant)")
    a.add_argument("--out", type=Path, default=Path("report"), help="report directory")

    b = sub.add_parser("ablate", help="compare datasets across prompt variants")
    b.add_argument("--runs", nargs="+", required=True, help="dataset directories or glob patterns")
    b.add_argument("--reference", type=Path, help="human CSV or dataset shown as the reference row")
    b.add_argument("--out", type=Path, default=Path("ablation-report"), help="report directory")

    r = sub.add_parser("replay", help="re-run a recorded dataset from its cassette")
    r.add_argument("--dataset", type=Path, required=True, help="dataset directory with manifest.json")
    r.add_argument("--cassette", type=Path, required=True, help="cassette recorded with simulate --record")
    r.add_argument("--out", type=Path, required=True, help="output directory")

    h = sub.add_parser("import-human", help="normalize a human-data CSV into a dataset directory")
    h.add_argument("--csv", type=Path, required=True, help="trial-level CSV")
    h.add_argument("--steps", type=Path, help="optional per-step long-format CSV (trial_id,t,v_left,v_right)")
    h.add_argument("--out", type=Path, required=True, help="output directory")
    return p


def _require(path: Path) -> Path:
    if not path.exists():
        raise FileNotFoundError(f"file not found: {path}")
    return path


def load_rows(path: Path, steps: Optional[Path] = None) -> tuple[str, list[MetricsRow]]:
    """Metrics rows from any supported source, with a default label."""
    path = _require(Path(path))
    if path.is_dir():
        if (path / "trials.jsonl").exists():
            return _rows_from_sim(path / "trials.jsonl")
        if (path / "metrics.csv").exists():
            rows = read_human_csv(path / "metrics.csv")
            return _label_of(rows, "Human"), rows
        raise FileNotFoundError(f"file not found: {path}/trials.jsonl or {path}/metrics.csv")
    if path.suffix == ".csv":
        rows = read_human_csv(path, steps)
        return _label_of(rows, "Human"), rows
    return _rows_from_sim(path)


def _label_of(rows: Sequence[MetricsRow], default: str) -> str:
    variants = {r.variant for r in rows}
    if len(variants) != 1:
        return default
    v = variants.pop()
    try:
        return PromptVariant.parse(v).label
    except ValueError:
        return "Human" if v == "human" else v


def _rows_from_sim(trials_path: Path) -> tuple[str, list[MetricsRow]]:
    params, track = SimParams(), TrackGeometry()
    manifest = trials_path.parent / "manifest.json"
    if manifest.exists():
        spec = ExperimentSpec.from_dict(json.loads(manifest.read_text(encoding="utf-8"))["spec"])
        params, track = spec.params, spec.track
    rows = rows_from_trials(load_trials(trials_path), params, track)
    return _label_of(rows, trials_path.parent.name), rows


def _print_tables(out: Path) -> None:
    for stem in ("quantitative", "indicators"):
        print((out / f"{stem}.txt").read_text(encoding="utf-8"))


def cmd_simulate(args: argparse.Namespace) -> int:
    spec = load_config(_require(args.config)) if args.config else ExperimentSpec()
    overrides = {}
    if args.variant:
        overrides["variant"] = PromptVariant.parse(args.variant)
    if args.reps is not None:
        overrides["repetitions"] = args.reps
    if args.parallelism is not None:
        overrides["parallelism"] = args.parallelism
    if args.agent:
        overrides["agent_left"] = overrides["agent_right"] = args.agent
    if args.agent_left:
        overrides["agent_left"] = args.agent_left
    if args.agent_right:
        overrides["agent_right"] = args.agent_right
    spec = dataclasses.replace(spec, **overrides)
    out = args.out or Path("runs") / spec.variant.value
    if args.replay:
        _require(args.replay)
    run_experiment(spec, out, record=args.record, replay=args.replay)
    manifest = json.loads((out / "manifest.json").read_text(encoding="utf-8"))
    print(f"wrote {manifest['trial_count']} trials to {out / 'trials.jsonl'}"
          + (f" ({len(manifest['failures'])} failed)" if manifest["failures"] else ""))
    return EXIT_OK


def cmd_analyze(args: argparse.Namespace) -> int:
    label, rows = load_rows(args.data, args.steps)
    reference = None
    if args.reference:
        reference = load_rows(args.reference)
    render_reports({args.label or label: rows}, args.out, reference)
    _print_tables(args.out)
    return EXIT_OK


def cmd_ablate(args: argparse.Namespace) -> int:
    paths: list[Path] = []
    for pattern in args.runs:
        matches = sorted(glob.glob(pattern)) or [pattern]
        paths += [Path(m) for m in matches]
    paths = [p for p in paths if not p.is_dir() or (p / "trials.jsonl").exists() or (p / "metrics.csv").exists()]
    if not paths:
        raise FileNotFoundError("file not found: no dataset directories matched --runs")
    datasets: dict[str, list[MetricsRow]] = {}
    for p in paths:
        label, rows = load_rows(p)
        if label in datasets:
            label = f"{label} ({p.name})"
        datasets[label] = rows
    order = {v.label: i for i, v in enumerate(PromptVariant)}
    datasets = dict(sorted(datasets.items(), key=lambda kv: (order.get(kv[0], len(order)), kv[0])))
    reference = load_rows(args.reference) if args.reference else None
    render_reports(datasets, args.out, reference)
    _print_tables(args.out)
    return EXIT_OK


def cmd_replay(args: argparse.Namespace) -> int:
    manifest = json.loads(_require(args.dataset / "manifest.json").read_text(encoding="utf-8"))
    spec = ExperimentSpec.from_dict(manifest["spec"])
    run_experiment(spec, args.out, replay=_require(args.cassette))
    print(f"replayed {manifest['trial_count']} trials into {args.out / 'trials.jsonl'}")
    return EXIT_OK


def cmd_import_human(args: argparse.Namespace) -> int:
    rows = read_human_csv(_require(args.csv), _require(args.steps) if args.steps else None)
    args.out.mkdir(parents=True, exist_ok=True)
    write_human_csv(rows, args.out / "metrics.csv")
    (args.out / "manifest.json").write_text(json.dumps({
        "source": "human", "csv": str(args.csv), "steps": str(args.steps) if args.steps else None,
        "trial_count": len(rows),
    }, indent=2) + "\n", encoding="utf-8")
    if not rows:
        print(f"warning: {args.csv} contains no trials", file=sys.stderr)
    print(f"imported {len(rows)} trials into {args.out / 'metrics.csv'}")
    return EXIT_OK


COMMANDS = {
    "simulate": cmd_simulate, "analyze": cmd_analyze, "ablate": cmd_ablate,
    "replay": cmd_replay, "import-human": cmd_import_human,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help
        return EXIT_OK if not exc.code else EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except FileNotFoundError as exc:
        msg = str(exc) if str(exc).startswith("file not found") else f"file not found: {exc.filename or exc}"
        print(f"error: {msg}", file=sys.stderr)
        return EXIT_RUNTIME
    except Exception as exc:
        log.debug("failure", exc_info=True)
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
