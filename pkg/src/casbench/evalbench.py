"""Run matrix, rubric grading, metrics and reports."""

from __future__ import annotations

import csv
import io
import statistics
from dataclasses import dataclass, field
from datetime import datetime, timezone
from enum import Enum

from .agent import RunConfig
from .context import PACK_IDS, PROBLEM_IDS, UnknownPack, UnknownProblem
from .transcript import RunResult, RunStatus

PASS_MARK = "●"
FAIL_MARK = "○"
UNGRADED_MARK = "."


class Rule(str, Enum):
    R1 = "R1_setup"
    R2 = "R2_background_eom"
    R3 = "R3_perturbation_analysis"
    R4 = "R4_subtlety"


RULE_PROMPTS = {
    Rule.R1: "setup (action, background, perturbation variables)",
    Rule.R2: "background equations substituted into the action",
    Rule.R3: "perturbation analysis (constraints, higher-derivative reduction)",
    Rule.R4: "subtleties that leave the final result unchanged",
}


class Finding(str, Enum):
    OK = "ok"
    VIOLATED = "violated"
    VIOLATED_BUT_HARMLESS = "violated_but_harmless"
    NOT_APPLICABLE = "not_applicable"


class Verdict(str, Enum):
    PASS = "pass"
    FAIL = "fail"


class IncompleteAssessment(ValueError):
    pass


class DuplicateId(ValueError):
    pass


class DuplicateCell(ValueError):
    pass


@dataclass(frozen=True)
class RuleAssessment:
    rule: Rule
    finding: Finding
    note: str = ""

    def __post_init__(self):
        object.__setattr__(self, "rule", Rule(self.rule))
        object.__setattr__(self, "finding", Finding(self.finding))
        # R4 forgives; it can never be the reason for a fail
        if self.rule is Rule.R4 and self.finding is Finding.VIOLATED:
            raise ValueError("R4_subtlety cannot be 'violated'; use violated_but_harmless")


def derive_verdict(assessments) -> Verdict:
    rules = [a.rule for a in assessments]
    if sorted(rules) != sorted(Rule) or len(rules) != len(Rule):
        raise IncompleteAssessment(f"need exactly one assessment per rule, got {[r.value for r in rules]}")
    if any(a.finding is Finding.VIOLATED for a in assessments):
        return Verdict.FAIL
    return Verdict.PASS


@dataclass
class GradeRecord:
    run_id: str
    assessments: list[RuleAssessment]
    verdict: Verdict
    grader: str = ""
    graded_at: str = ""

    def __post_init__(self):
        self.verdict = Verdict(self.verdict)
        if derive_verdict(self.assessments) is not self.verdict:
            raise ValueError(f"{self.run_id}: verdict {self.verdict.value} contradicts the assessments")

    @classmethod
    def create(cls, run_id, assessments, grader="", graded_at=None):
        graded_at = graded_at or datetime.now(timezone.utc).isoformat(timespec="seconds")
        return cls(run_id, list(assessments), derive_verdict(assessments), grader, graded_at)

    def to_dict(self):
        return {
            "run_id": self.run_id,
            "assessments": [
                {"rule": a.rule.value, "finding": a.finding.value, "note": a.note} for a in self.assessments
            ],
            "verdict": self.verdict.value,
            "grader": self.grader,
            "graded_at": self.graded_at,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            d["run_id"],
            [RuleAssessment(a["rule"], a["finding"], a.get("note", "")) for a in d["assessments"]],
            d["verdict"],
            d.get("grader", ""),
            d.get("graded_at", ""),
        )


# -- run matrix


@dataclass(frozen=True)
class RunSpec:
    run_id: str
    pack_id: str
    problem_id: str
    config: RunConfig = field(compare=False)


def run_id_for(pack_id, problem_id, attempt=1):
    return f"{pack_id}/{problem_id}/attempt{attempt}"


def plan_matrix(pack_ids, problem_ids, config=None, known_packs=PACK_IDS) -> list[RunSpec]:
    config = config or RunConfig()
    for label, ids in (("pack", pack_ids), ("problem", problem_ids)):
        seen = set()
        for i in ids:
            if i in seen:
                raise DuplicateId(f"duplicate {label} id {i!r}")
            seen.add(i)
    for p in pack_ids:
        if p not in known_packs:
            raise UnknownPack(p)
    for q in problem_ids:
        if q not in PROBLEM_IDS:
            raise UnknownProblem(q)
    return [RunSpec(run_id_for(p, q), p, q, config) for p in pack_ids for q in problem_ids]


# -- metrics


@dataclass
class PackSummary:
    mean_turns: float
    median_turns: float
    mean_restarts: float
    median_restarts: float
    pass_count: int


@dataclass
class MetricsTable:
    # (pack, problem) -> (turns, restarts, status, verdict or None)
    per_cell: dict = field(default_factory=dict)
    per_pack: dict = field(default_factory=dict)

    def packs(self):
        present = {p for p, _ in self.per_cell}
        return [p for p in PACK_IDS if p in present] + sorted(present - set(PACK_IDS))


def aggregate_metrics(results, grades=()) -> MetricsTable:
    """``results`` holds (pack_id, problem_id, RunResult); grades join on run_id."""
    verdicts = {g.run_id: g.verdict for g in grades}
    table = MetricsTable()
    for pack_id, problem_id, r in results:
        key = (pack_id, problem_id)
        if key in table.per_cell:
            raise DuplicateCell(f"two results for {pack_id}/{problem_id}")
        table.per_cell[key] = (r.turns, r.restarts, r.status, verdicts.get(r.transcript_ref))
    for pack_id in table.packs():
        cells = [v for (p, _), v in table.per_cell.items() if p == pack_id]
        turns = [c[0] for c in cells]
        restarts = [c[1] for c in cells]
        table.per_pack[pack_id] = PackSummary(
            statistics.mean(turns),
            statistics.median(turns),
            statistics.mean(restarts),
            statistics.median(restarts),
            sum(1 for c in cells if c[3] is Verdict.PASS),
        )
    return table


def check_turn_limit(table: MetricsTable, max_turns=100):
    """Cells whose status and turn count disagree about the turn limit."""
    bad = []
    for key, (turns, _, status, _) in table.per_cell.items():
        if (turns == max_turns) != (status is RunStatus.TURN_LIMIT):
            bad.append(key)
    return bad


# -- reports


def render_grid(grades, packs=PACK_IDS, problems=PROBLEM_IDS) -> str:
    """Pass/fail grid; ``grades`` maps (pack, problem) to a verdict or holds GradeRecords."""
    marks = {}
    if isinstance(grades, dict):
        marks = {k: Verdict(v) for k, v in grades.items()}
    else:
        for g in grades:
            pack_id, problem_id = g.run_id.split("/")[:2]
            marks[(pack_id, problem_id)] = g.verdict
    width = max(len(p) for p in packs)
    label_w = max(len(q) for q in problems)
    sym = {Verdict.PASS: PASS_MARK, Verdict.FAIL: FAIL_MARK}
    lines = [" " * label_w + "  " + "  ".join(p.center(width) for p in packs)]
    for q in problems:
        row = [sym.get(marks.get((p, q)), UNGRADED_MARK).center(width) for p in packs]
        lines.append(q.ljust(label_w) + "  " + "  ".join(row))
    counts = [str(sum(1 for q in problems if marks.get((p, q)) is Verdict.PASS)) for p in packs]
    lines.append("pass".ljust(label_w) + "  " + "  ".join(c.center(width) for c in counts))
    return "\n".join(line.rstrip() for line in lines) + "\n"


CSV_HEADER = ["pack", "problem", "turns", "restarts", "status", "verdict"]


def _ordered_cells(table):
    order = {q: i for i, q in enumerate(PROBLEM_IDS)}
    packs = table.packs()
    return sorted(
        table.per_cell.items(),
        key=lambda kv: (packs.index(kv[0][0]), order.get(kv[0][1], len(order)), kv[0][1]),
    )


def _fmt(x):
    return f"{x:.3f}".rstrip("0").rstrip(".") if isinstance(x, float) and x != int(x) else str(int(x))


def export_results(table: MetricsTable, fmt="csv") -> str:
    if fmt == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for (pack_id, problem_id), (turns, restarts, status, verdict) in _ordered_cells(table):
            w.writerow([pack_id, problem_id, turns, restarts, RunStatus(status).value, verdict.value if verdict else ""])
        return buf.getvalue()
    if fmt != "markdown":
        raise ValueError(f"unknown export format {fmt!r}")

    packs = table.packs()
    problems = [q for q in PROBLEM_IDS if any((p, q) in table.per_cell for p in packs)]
    problems += sorted({q for _, q in table.per_cell} - set(problems))
    # the turns|restarts grid goes in a preformatted block so the cells
    # read literally as "49|2" without escaping the pipe
    cell = {k: f"{v[0]}|{v[1]}" for k, v in table.per_cell.items()}
    width = max([len(p) for p in packs] + [len(c) for c in cell.values()])
    label_w = max(len("problem"), *(len(q) for q in problems))
    out = ["turns|restarts per run:", "", "```text"]
    out.append("problem".ljust(label_w) + "  " + "  ".join(p.ljust(width) for p in packs))
    for q in problems:
        out.append(q.ljust(label_w) + "  " + "  ".join(cell.get((p, q), "").ljust(width) for p in packs))
    out = out[:3] + [line.rstrip() for line in out[3:]] + ["```"]
    out += ["", "| pack | problem | turns | restarts | status | verdict |", "|---|---|---|---|---|---|"]
    for (p, q), (turns, restarts, status, verdict) in _ordered_cells(table):
        out.append(f"| {p} | {q} | {turns} | {restarts} | {RunStatus(status).value} | {verdict.value if verdict else ''} |")
    out += ["", "| pack | mean turns | median turns | mean restarts | median restarts | passes |", "|---|---|---|---|---|---|"]
    for p in packs:
        s = table.per_pack[p]
        out.append(
            f"| {p} | {_fmt(s.mean_turns)} | {_fmt(s.median_turns)} | {_fmt(s.mean_restarts)} "
            f"| {_fmt(s.median_restarts)} | {s.pass_count} |"
        )
    return "\n".join(out) + "\n"


def summary_lines(table: MetricsTable) -> list[str]:
    return [
        f"{p}: mean_turns={_fmt(s.mean_turns)} median_turns={_fmt(s.median_turns)} "
        f"mean_restarts={_fmt(s.mean_restarts)} median_restarts={_fmt(s.median_restarts)} passes={s.pass_count}"
        for p, s in table.per_pack.items()
    ]


def results_from_rows(rows):
    """(pack, problem, RunResult) triples from results.jsonl rows."""
    out = []
    for row in rows:
        out.append((row["pack_id"], row["problem_id"], RunResult.from_dict(row["result"])))
    return out
