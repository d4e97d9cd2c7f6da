"""casbench command line: run, render, grade, report, packs, problems."""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from pathlib import Path

from . import __version__
from .agent import run_episode
from .cas import CasError, ReplaySession, mock_descriptor, start_session
from .config import ConfigError, load_config
from .context import (
    PROBLEM_IDS,
    PackError,
    UnknownPack,
    UnknownProblem,
    available_packs,
    estimate_tokens,
    get_problem,
    load_named_pack,
    problems,
    render_system_prompt,
)
from .evalbench import (
    RULE_PROMPTS,
    DuplicateId,
    Finding,
    GradeRecord,
    Rule,
    RuleAssessment,
    aggregate_metrics,
    export_results,
    plan_matrix,
    render_grid,
    results_from_rows,
    summary_lines,
)
from .llm import HttpLLM, TokenBudget, Usage, make_adapter, script_mock
from .transcript import SchemaViolation, TranscriptWriter, load_any, render, responses_from_transcript

log = logging.getLogger("casbench")

RESULTS_FILE = "results.jsonl"
GRADES_FILE = "grades.jsonl"


class HarnessError(Exception):
    pass


def transcript_path(results_dir, run_id) -> Path:
    return Path(results_dir) / "transcripts" / (run_id.replace("/", "__") + ".jsonl")


def read_jsonl(path):
    path = Path(path)
    if not path.is_file():
        return []
    rows = []
    with open(path, encoding="utf-8") as fh:
        for n, line in enumerate(fh, 1):
            if line.strip():
                try:
                    rows.append(json.loads(line))
                except json.JSONDecodeError as e:
                    raise HarnessError(f"{path}:{n}: {e}") from e
    return rows


def append_jsonl(path, record):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "a", encoding="utf-8") as fh:
        fh.write(json.dumps(record, ensure_ascii=False) + "\n")


def latest_by_run(rows):
    """Keep the last row per run_id; a re-run supersedes earlier ones."""
    out = {}
    for row in rows:
        out[row["run_id"]] = row
    return list(out.values())


def load_script(path):
    """Scripted replies from a rendered transcript, a JSONL transcript, or
    a JSONL file of ``{"text": ..., "usage": {...}}`` lines."""
    path = Path(path)
    if path.suffix == ".jsonl":
        rows = read_jsonl(path)
        if rows and rows[0].get("type") == "meta":
            transcript = load_any(path)
            return responses_from_transcript(transcript), transcript
        return [(r["text"], Usage.from_dict(r.get("usage", {}))) for r in rows], None
    transcript = load_any(path)
    return responses_from_transcript(transcript), transcript


# -- run


def _live_llm(cfg):
    key_env = cfg.provider.key_env
    if not key_env:
        raise HarnessError("provider.key_env must name the API key variable")
    key = os.environ.get(key_env)
    if not key:
        raise HarnessError(f"environment variable {key_env} is not set")
    if not cfg.defaults.params.model_id:
        raise HarnessError("no model id configured (provider.model_id or --model)")
    adapter = make_adapter(cfg.provider.adapter, cfg.provider.endpoint)
    return lambda: HttpLLM(adapter, key, budget=TokenBudget(cfg.provider.token_budget))


def cmd_run(args, cfg):
    overrides = {}
    if args.max_turns is not None:
        overrides["max_turns"] = args.max_turns
    if args.attempt_limit is not None:
        overrides["attempt_limit"] = args.attempt_limit
    params = cfg.defaults.params
    if args.thinking_budget is not None:
        params = replace(params, thinking_budget=args.thinking_budget)
    run_config = replace(cfg.defaults, params=params, **overrides)

    pack_ids = args.pack or available_packs(cfg.packs_dir)
    problem_ids = args.problem or list(PROBLEM_IDS)
    specs = plan_matrix(pack_ids, problem_ids, run_config, known_packs=available_packs(cfg.packs_dir))
    packs = {p: load_named_pack(p, cfg.packs_dir) for p in pack_ids}

    recording = None
    if args.mock_llm:
        script, recording = load_script(args.mock_llm)
        llm_factory = lambda: script_mock(script)  # noqa: E731
    else:
        llm_factory = _live_llm(cfg)

    if args.mock_cas == "replay":
        if recording is None:
            raise HarnessError("--mock-cas replay needs --mock-llm pointing at a transcript")
        session_factory = lambda: ReplaySession.from_transcript(recording)  # noqa: E731
    elif args.mock_cas:
        desc = mock_descriptor(args.mock_cas)
        session_factory = lambda: start_session(desc)  # noqa: E731
    else:
        session_factory = lambda: start_session(cfg.backend)  # noqa: E731

    results_dir = cfg.results_dir
    lock = threading.Lock()

    def one(spec):
        with TranscriptWriter(transcript_path(results_dir, spec.run_id)) as writer:
            result, _ = run_episode(
                get_problem(spec.problem_id), packs[spec.pack_id], spec.config,
                llm_factory(), session_factory, run_id=spec.run_id, writer=writer,
            )
        row = {"run_id": spec.run_id, "pack_id": spec.pack_id, "problem_id": spec.problem_id,
               "result": result.to_dict()}
        with lock:
            append_jsonl(results_dir / RESULTS_FILE, row)
            print(f"{spec.run_id}: {result.status.value} turns={result.turns} restarts={result.restarts}")
        return result

    workers = args.workers or cfg.workers
    if workers > 1 and len(specs) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(one, specs))
    else:
        for spec in specs:
            one(spec)
    return 0


# -- render


def cmd_render(args, cfg):
    transcript = load_any(args.transcript)
    sys.stdout.write(render(transcript, mark_incomplete=args.transcript.endswith(".jsonl")))
    return 0


# -- grade


def _ask(prompt, input_fn):
    return input_fn(prompt).strip()


def _ask_finding(rule, input_fn):
    allowed = [f for f in Finding if not (rule is Rule.R4 and f is Finding.VIOLATED)]
    names = "/".join(f.value for f in allowed)
    while True:
        answer = _ask(f"{rule.value} ({RULE_PROMPTS[rule]}) [{names}]: ", input_fn).lower()
        if answer == Finding.VIOLATED.value and Finding.VIOLATED not in allowed:
            print(f"  {rule.value} cannot be violated; use violated_but_harmless if the step was skipped")
            continue
        matches = [f for f in allowed if f.value == answer] or [f for f in allowed if f.value.startswith(answer)]
        if answer and len(matches) == 1:
            return matches[0]
        print(f"  please answer one of: {names}")


def cmd_grade(args, cfg, input_fn=input):
    rows = read_jsonl(cfg.results_dir / RESULTS_FILE)
    known = {r["run_id"] for r in rows}
    if args.run_id not in known and not transcript_path(cfg.results_dir, args.run_id).is_file():
        raise HarnessError(f"unknown run {args.run_id!r}")
    assessments = []
    try:
        for rule in Rule:
            finding = _ask_finding(rule, input_fn)
            note = _ask("  note: ", input_fn)
            assessments.append(RuleAssessment(rule, finding, note))
    except (EOFError, KeyboardInterrupt):
        print("\naborted; no grade recorded", file=sys.stderr)
        return 1
    grade = GradeRecord.create(args.run_id, assessments, grader=args.grader)
    print(f"verdict: {grade.verdict.value}")
    append_jsonl(cfg.results_dir / GRADES_FILE, grade.to_dict())
    return 0


# -- report


def cmd_report(args, cfg):
    rows = latest_by_run(read_jsonl(cfg.results_dir / RESULTS_FILE))
    if not rows:
        print(f"no results in {cfg.results_dir}", file=sys.stderr)
        return 1
    grades = [GradeRecord.from_dict(g) for g in latest_by_run(read_jsonl(cfg.results_dir / GRADES_FILE))]
    table = aggregate_metrics(results_from_rows(rows), grades)
    out = Path(args.out) if args.out else cfg.results_dir
    out.mkdir(parents=True, exist_ok=True)
    graded = {(g.run_id.split("/")[0], g.run_id.split("/")[1]): g.verdict for g in grades}
    packs = table.packs()
    written = []
    if args.format in ("all", "grid"):
        (out / "grid.txt").write_text(render_grid(graded, packs=packs), encoding="utf-8")
        written.append("grid.txt")
    if args.format in ("all", "csv"):
        (out / "metrics.csv").write_text(export_results(table, "csv"), encoding="utf-8")
        written.append("metrics.csv")
    if args.format in ("all", "markdown"):
        (out / "turns_restarts.md").write_text(export_results(table, "markdown"), encoding="utf-8")
        written.append("turns_restarts.md")
    for line in summary_lines(table):
        print(line)
    print(f"wrote {', '.join(written)} to {out}")
    return 0


# -- packs / problems


def cmd_packs_validate(args, cfg):
    ids = args.packs or available_packs(cfg.packs_dir)
    bad = 0
    for pid in ids:
        try:
            pack = load_named_pack(pid, cfg.packs_dir)
        except (PackError, UnknownPack) as e:
            errors = getattr(e, "errors", [e])
            print(f"{pid}: INVALID")
            for err in errors:
                print(f"  - {err}")
            bad += 1
            continue
        est = estimate_tokens(render_system_prompt(pack))
        declared = pack.declared_token_size
        print(
            f"{pid}: ok, {len(pack.documents)} document(s), {len(pack.placeholders)} placeholder(s), "
            f"~{est.estimated_tokens} tokens ({est.method.value})"
            + (f", declared {declared}" if declared else "")
        )
    return 1 if bad else 0


def cmd_problems_list(args, cfg):
    for p in problems():
        print(f"{p.id:8} {p.background.value:13} {p.sector.value}")
        if args.full:
            print(f"    {p.statement}")
    return 0


def build_parser():
    ap = argparse.ArgumentParser(prog="casbench", description=__doc__)
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    ap.add_argument("--config", help="TOML config file")
    ap.add_argument("--results-dir", help="results directory (overrides config)")
    ap.add_argument("--packs-dir", help="context pack directory (default: the bundled packs)")
    ap.add_argument("-v", "--verbose", action="store_true", help="log one line per turn")
    sub = ap.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run episodes for a pack x problem matrix")
    run.add_argument("--pack", action="append", help="pack id (repeatable; default: all)")
    run.add_argument("--problem", action="append", help="problem id (repeatable; default: all)")
    run.add_argument("--max-turns", type=int)
    run.add_argument("--thinking-budget", type=int)
    run.add_argument("--max-tokens", type=int)
    run.add_argument("--model", help="provider model id")
    run.add_argument("--attempt-limit", type=int)
    run.add_argument("--extraction-mode", choices=["verbatim", "fenced"])
    run.add_argument("--mock-llm", metavar="SCRIPT", help="scripted replies (.script or .jsonl)")
    run.add_argument("--mock-cas", choices=["echo", "calc", "replay"])
    run.add_argument("--workers", type=int)
    run.set_defaults(func=cmd_run)

    rend = sub.add_parser("render", help="print a transcript in the rendered text form")
    rend.add_argument("transcript")
    rend.set_defaults(func=cmd_render)

    grade = sub.add_parser("grade", help="grade one run interactively")
    grade.add_argument("run_id")
    grade.add_argument("--grader", default=os.environ.get("USER", ""))
    grade.set_defaults(func=cmd_grade)

    rep = sub.add_parser("report", help="write grid, CSV and markdown reports")
    rep.add_argument("--format", choices=["all", "grid", "csv", "markdown"], default="all")
    rep.add_argument("--out", help="output directory (default: the results directory)")
    rep.set_defaults(func=cmd_report)

    packs = sub.add_parser("packs", help="context pack tools")
    psub = packs.add_subparsers(dest="packs_command", required=True)
    val = psub.add_parser("validate", help="load and check packs")
    val.add_argument("packs", nargs="*")
    val.set_defaults(func=cmd_packs_validate)

    probs = sub.add_parser("problems", help="problem registry")
    qsub = probs.add_subparsers(dest="problems_command", required=True)
    lst = qsub.add_parser("list", help="list the benchmark problems")
    lst.add_argument("--full", action="store_true", help="include the statements")
    lst.set_defaults(func=cmd_problems_list)
    return ap


def _flags(args):
    get = lambda name: getattr(args, name, None)  # noqa: E731
    return {
        ("paths", "results_dir"): get("results_dir"),
        ("paths", "packs_dir"): get("packs_dir"),
        ("run", "max_turns"): get("max_turns"),
        ("run", "attempt_limit"): get("attempt_limit"),
        ("run", "extraction_mode"): get("extraction_mode"),
        ("run", "workers"): get("workers"),
        ("provider", "thinking_budget"): get("thinking_budget"),
        ("provider", "max_tokens"): get("max_tokens"),
        ("provider", "model_id"): get("model"),
    }


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        cfg = load_config(args.config, os.environ, _flags(args))
        return args.func(args, cfg)
    except (ConfigError, HarnessError, PackError, SchemaViolation, DuplicateId, CasError, OSError) as e:
        print(f"casbench: error: {e}", file=sys.stderr)
        return 2
    except (UnknownPack, UnknownProblem) as e:
        kind = "pack" if isinstance(e, UnknownPack) else "problem"
        print(f"casbench: error: unknown {kind} {e.args[0]!r}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
