"""Run records: dataclasses, the JSONL transcript file, and the rendered text form.

The JSONL file is the lossless record. The rendered form is what a reader
sees (attempt and turn banners, assistant text, CAS output lines prefixed
with ``~ ``). It does not say which statement printed which line, so
parsing it attaches each turn's output to the last statement with code,
the same attribution the replay backend uses.
"""

from __future__ import annotations

import json
import re
from dataclasses import asdict, dataclass, field
from enum import Enum
from pathlib import Path

from .cas.session import BlockKind, OutputBlock, StatementResult, distribute_outputs, output_lines
from .cas.statements import Statement, StatementKind, split_statements
from .llm import Usage

ATTEMPT_HEADER = "# +++++++++++++++++ META TRY {} ++++++++++++++ "
TURN_HEADER = "# ----------------- TURN {} -----------------"
OUTPUT_PREFIX = "~ "
INCOMPLETE = "[run incomplete]"

_ATTEMPT_RE = re.compile(r"^# \+{17} META TRY (\d+) \+{14} $")
_TURN_RE = re.compile(r"^# -{17} TURN (\d+) -{17}$")


class SchemaViolation(ValueError):
    pass


class RunStatus(str, Enum):
    SOLVED_CLAIMED = "solved_claimed"
    GAVE_UP = "gave_up"
    TURN_LIMIT = "turn_limit"
    SESSION_ERROR = "session_error"
    TRANSPORT_ERROR = "transport_error"


@dataclass
class TurnRecord:
    attempt_index: int
    turn_index: int
    assistant_text: str
    statement_results: list[StatementResult] = field(default_factory=list)
    usage: Usage = field(default_factory=Usage)
    wall_time: float = 0.0


@dataclass
class RunResult:
    status: RunStatus
    turns: int
    restarts: int
    transcript_ref: str = ""

    def to_dict(self):
        return {
            "status": self.status.value,
            "turns": self.turns,
            "restarts": self.restarts,
            "transcript_ref": self.transcript_ref,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(RunStatus(d["status"]), int(d["turns"]), int(d["restarts"]), d.get("transcript_ref", ""))


@dataclass
class TranscriptMeta:
    run_id: str = ""
    problem_id: str = ""
    pack_id: str = ""
    params: dict = field(default_factory=dict)
    started_at: str = ""


@dataclass
class Transcript:
    meta: TranscriptMeta = field(default_factory=TranscriptMeta)
    turns: list[TurnRecord] = field(default_factory=list)
    result: RunResult | None = None
    ended_at: str | None = None

    @property
    def complete(self):
        return self.result is not None

    def attempt_turns(self, attempt_index):
        return [t for t in self.turns if t.attempt_index == attempt_index]


def turn_output_lines(turn: TurnRecord) -> list[str]:
    return output_lines(turn.statement_results)


def responses_from_transcript(transcript: Transcript):
    """(text, usage) pairs suitable for a scripted LLM."""
    return [(t.assistant_text, t.usage) for t in transcript.turns]


# -- JSON records


def _result_to_dict(r: StatementResult):
    return {
        "text": r.statement.text,
        "kind": r.statement.kind.value,
        "outputs": [{"kind": b.kind.value, "text": b.text} for b in r.outputs],
        "duration": r.duration,
        "truncated": r.truncated,
    }


def _result_from_dict(d) -> StatementResult:
    return StatementResult(
        Statement(d["text"], StatementKind(d["kind"])),
        [OutputBlock(BlockKind(b["kind"]), b["text"]) for b in d.get("outputs", [])],
        float(d.get("duration", 0.0)),
        bool(d.get("truncated", False)),
    )


def meta_record(meta: TranscriptMeta):
    return {"type": "meta", **asdict(meta)}


def turn_record(turn: TurnRecord):
    return {
        "type": "turn",
        "attempt_index": turn.attempt_index,
        "turn_index": turn.turn_index,
        "assistant_text": turn.assistant_text,
        "statement_results": [_result_to_dict(r) for r in turn.statement_results],
        "usage": turn.usage.to_dict(),
        "wall_time": turn.wall_time,
    }


def final_record(result: RunResult, ended_at: str | None):
    return {"type": "final", "result": result.to_dict(), "ended_at": ended_at}


def _dumps(record):
    return json.dumps(record, ensure_ascii=False, sort_keys=True)


def transcript_to_jsonl(t: Transcript) -> str:
    lines = [_dumps(meta_record(t.meta))]
    lines += [_dumps(turn_record(turn)) for turn in t.turns]
    if t.result is not None:
        lines.append(_dumps(final_record(t.result, t.ended_at)))
    return "\n".join(lines) + "\n"


def _check_indices(turns):
    expected_attempt, expected_turn = 1, 1
    for turn in turns:
        # an attempt may end before its first turn (the CAS never started)
        if turn.attempt_index > expected_attempt:
            expected_attempt, expected_turn = turn.attempt_index, 1
        if turn.attempt_index != expected_attempt or turn.turn_index != expected_turn:
            raise SchemaViolation(
                f"turn {turn.attempt_index}/{turn.turn_index} out of sequence "
                f"(expected {expected_attempt}/{expected_turn})"
            )
        expected_turn += 1


def transcript_from_jsonl(text: str, allow_incomplete=True) -> Transcript:
    records = []
    for n, line in enumerate(text.splitlines(), 1):
        if not line.strip():
            continue
        try:
            records.append(json.loads(line))
        except json.JSONDecodeError as e:
            raise SchemaViolation(f"line {n}: {e}") from e
    if not records or records[0].get("type") != "meta":
        raise SchemaViolation("first record must be meta")
    t = Transcript()
    try:
        m = records[0]
        t.meta = TranscriptMeta(m["run_id"], m["problem_id"], m["pack_id"], m.get("params", {}), m.get("started_at", ""))
        for i, rec in enumerate(records[1:], 1):
            kind = rec.get("type")
            if kind == "turn":
                if t.result is not None:
                    raise SchemaViolation("turn record after final record")
                t.turns.append(
                    TurnRecord(
                        int(rec["attempt_index"]),
                        int(rec["turn_index"]),
                        rec["assistant_text"],
                        [_result_from_dict(r) for r in rec.get("statement_results", [])],
                        Usage.from_dict(rec.get("usage", {})),
                        float(rec.get("wall_time", 0.0)),
                    )
                )
            elif kind == "final":
                if i != len(records) - 1:
                    raise SchemaViolation("final record must be last")
                t.result = RunResult.from_dict(rec["result"])
                t.ended_at = rec.get("ended_at")
            else:
                raise SchemaViolation(f"unexpected record type {kind!r}")
    except (KeyError, TypeError, ValueError) as e:
        if isinstance(e, SchemaViolation):
            raise
        raise SchemaViolation(f"malformed record: {e}") from e
    _check_indices(t.turns)
    if t.result is None and not allow_incomplete:
        raise SchemaViolation("missing final record")
    return t


def write_transcript(path, t: Transcript):
    Path(path).write_text(transcript_to_jsonl(t), encoding="utf-8")


def read_transcript(path, allow_incomplete=True) -> Transcript:
    return transcript_from_jsonl(Path(path).read_text(encoding="utf-8"), allow_incomplete)


class TranscriptWriter:
    """Append-only JSONL writer; each record is flushed as it is written,
    so a crash leaves a readable prefix."""

    def __init__(self, path):
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self._fh = open(self.path, "w", encoding="utf-8")

    def _write(self, record):
        self._fh.write(_dumps(record) + "\n")
        self._fh.flush()

    def meta(self, meta: TranscriptMeta):
        self._write(meta_record(meta))

    def turn(self, turn: TurnRecord):
        self._write(turn_record(turn))

    def final(self, result: RunResult, ended_at=None):
        self._write(final_record(result, ended_at))

    def close(self):
        if not self._fh.closed:
            self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


# -- rendered text


def render(t: Transcript, mark_incomplete=False) -> str:
    out = []
    attempts = max((turn.attempt_index for turn in t.turns), default=1)
    for k in range(1, attempts + 1):
        out.append(ATTEMPT_HEADER.format(k) + "\n\n")
        for turn in t.attempt_turns(k):
            text_lines = turn.assistant_text.split("\n")
            for line in text_lines:
                if line.startswith(OUTPUT_PREFIX) or _TURN_RE.match(line) or _ATTEMPT_RE.match(line):
                    raise SchemaViolation(
                        f"turn {turn.turn_index}: assistant line {line[:40]!r} collides with the rendered markup"
                    )
            out.append(TURN_HEADER.format(turn.turn_index) + "\n")
            out.append(turn.assistant_text + "\n")
            for line in turn_output_lines(turn):
                out.append(OUTPUT_PREFIX + line + "\n")
    if mark_incomplete and t.result is None:
        out.append(INCOMPLETE + "\n")
    return "".join(out)


def _finish_turn(turns, attempt, number, text_lines, out_lines):
    text = "\n".join(text_lines)
    results = distribute_outputs(split_statements(text), out_lines)
    turns.append(TurnRecord(attempt, number, text, results))


def parse_rendered(text: str, meta: TranscriptMeta | None = None) -> Transcript:
    """Inverse of ``render`` for canonical transcripts (zero usage and timing)."""
    if text.endswith(INCOMPLETE + "\n"):
        text = text[: -len(INCOMPLETE) - 1]
    if not text.endswith("\n"):
        raise SchemaViolation("rendered transcript must end with a newline")
    lines = text[:-1].split("\n")
    turns: list[TurnRecord] = []
    attempt = 0
    current = None  # (turn number, text lines, output lines)
    i = 0
    while i < len(lines):
        line = lines[i]
        m_att = _ATTEMPT_RE.match(line)
        m_turn = _TURN_RE.match(line)
        if m_att:
            if current:
                _finish_turn(turns, attempt, *current)
                current = None
            if int(m_att.group(1)) != attempt + 1:
                raise SchemaViolation(f"line {i + 1}: attempt {m_att.group(1)} out of sequence")
            attempt += 1
            if i + 1 >= len(lines) or lines[i + 1] != "":
                raise SchemaViolation(f"line {i + 1}: attempt header must be followed by a blank line")
            i += 2
            continue
        if m_turn:
            if attempt == 0:
                raise SchemaViolation(f"line {i + 1}: turn header before any attempt header")
            if current:
                _finish_turn(turns, attempt, *current)
            current = (int(m_turn.group(1)), [], [])
        elif current is None:
            raise SchemaViolation(f"line {i + 1}: text outside any turn")
        elif line.startswith(OUTPUT_PREFIX):
            current[2].append(line[len(OUTPUT_PREFIX):])
        elif current[2]:
            raise SchemaViolation(f"line {i + 1}: assistant text after output lines")
        else:
            current[1].append(line)
        i += 1
    if current:
        _finish_turn(turns, attempt, *current)
    if attempt == 0:
        raise SchemaViolation("no attempt header found")
    _check_indices(turns)
    return Transcript(meta or TranscriptMeta(), turns)


def load_any(path) -> Transcript:
    """Read a JSONL transcript or a rendered ``.script`` file."""
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    if path.suffix == ".jsonl":
        return transcript_from_jsonl(text)
    return parse_rendered(text)
