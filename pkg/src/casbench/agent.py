"""The closed LLM/CAS loop for one episode."""

from __future__ import annotations

import logging
import re
import time
from dataclasses import dataclass, field
from datetime import datetime, timezone
from enum import Enum

from .cas.session import CasError, StatementResult
from .cas.statements import StatementKind, split_statements
from .context import ContextPack, Problem, render_system_prompt
from .llm import BudgetExceeded, ChatMessage, GenerationParams, ProviderRefusal, TransportError
from .transcript import RunResult, RunStatus, Transcript, TranscriptMeta, TurnRecord

log = logging.getLogger(__name__)

DEFAULT_GIVE_UP = ("give up", "cannot proceed", "unable to solve")
NO_OUTPUT = "[no output]"


class ExtractionMode(str, Enum):
    VERBATIM = "verbatim"
    FENCED = "fenced"


class Decision(str, Enum):
    CONTINUE = "continue"
    SOLVED_CLAIMED = "solved_claimed"
    GAVE_UP = "gave_up"


@dataclass
class RunConfig:
    max_turns: int = 100
    extraction_mode: ExtractionMode = ExtractionMode.VERBATIM
    params: GenerationParams = field(default_factory=GenerationParams)
    attempt_limit: int = 1
    give_up_phrases: tuple = DEFAULT_GIVE_UP

    def __post_init__(self):
        self.extraction_mode = ExtractionMode(self.extraction_mode)
        if self.max_turns < 1:
            raise ValueError("max_turns must be >= 1")
        if self.attempt_limit < 1:
            raise ValueError("attempt_limit must be >= 1")

    def to_dict(self):
        return {
            **self.params.to_dict(),
            "max_turns": self.max_turns,
            "extraction_mode": self.extraction_mode.value,
            "attempt_limit": self.attempt_limit,
        }


_FENCE = re.compile(r"^```[^\n]*\n(.*?)^```[ \t]*$", re.MULTILINE | re.DOTALL)


def extract_statements(assistant_text: str, mode=ExtractionMode.VERBATIM) -> str:
    if ExtractionMode(mode) is ExtractionMode.VERBATIM:
        return assistant_text
    return "".join(m.group(1) for m in _FENCE.finditer(assistant_text))


def detect_termination(assistant_text, chunk_statements, give_up_phrases=DEFAULT_GIVE_UP) -> Decision:
    lowered = assistant_text.lower()
    if any(phrase.lower() in lowered for phrase in give_up_phrases):
        return Decision.GAVE_UP
    if not any(s.has_code for s in chunk_statements):
        return Decision.SOLVED_CLAIMED
    return Decision.CONTINUE


def count_restarts(transcript: Transcript) -> int:
    return sum(
        1
        for turn in transcript.turns
        for r in turn.statement_results
        if r.statement.kind is StatementKind.RESTART
    )


def format_feedback(results) -> str:
    """CAS output for one turn as the next user message."""
    parts = ["\n".join(b.text for b in r.outputs) for r in results if r.outputs]
    return "\n\n".join(parts) or NO_OUTPUT


def _utcnow():
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def _run_attempt(attempt, history, llm, session, config, run_id, record, clock):
    """Returns the terminal status of one attempt."""
    for turn_index in range(1, config.max_turns + 1):
        t0 = clock()
        try:
            msg, usage = llm.complete(list(history), config.params)
        except (TransportError, ProviderRefusal, BudgetExceeded) as e:
            log.warning("%s attempt %d turn %d: LLM failure: %s", run_id, attempt, turn_index, e)
            return RunStatus.TRANSPORT_ERROR
        history.append(msg)
        chunk = extract_statements(msg.content, config.extraction_mode)
        statements = split_statements(chunk)
        decision = detect_termination(msg.content, statements, config.give_up_phrases)
        status = None
        if decision is Decision.CONTINUE:
            try:
                results = session.execute_chunk(chunk)
            except CasError as e:
                log.warning("%s attempt %d turn %d: CAS failure: %s", run_id, attempt, turn_index, e)
                done = list(getattr(e, "results", []))
                results = done + [StatementResult(s) for s in statements[len(done):]]
                status = RunStatus.SESSION_ERROR
            else:
                history.append(ChatMessage("user", format_feedback(results)))
        else:
            results = [StatementResult(s) for s in statements]
            status = RunStatus(decision.value)
        record(TurnRecord(attempt, turn_index, msg.content, results, usage, clock() - t0))
        log.info("%s attempt %d turn %d: %s", run_id, attempt, turn_index, status.value if status else "continue")
        if status is not None:
            return status
    return RunStatus.TURN_LIMIT


def run_episode(problem: Problem, pack: ContextPack, config: RunConfig, llm, session_factory, *,
                run_id="", writer=None, clock=time.monotonic, now=_utcnow):
    """Run one (problem, pack) episode.

    ``session_factory`` returns a fresh CAS session per attempt. ``writer``,
    if given, receives every record as soon as it exists.
    """
    transcript = Transcript(
        TranscriptMeta(run_id, problem.id, pack.id, config.to_dict(), now())
    )
    if writer:
        writer.meta(transcript.meta)

    def record(turn):
        transcript.turns.append(turn)
        if writer:
            writer.turn(turn)

    system = render_system_prompt(pack)
    status = RunStatus.SESSION_ERROR
    for attempt in range(1, config.attempt_limit + 1):
        history = [ChatMessage("system", system), ChatMessage("user", problem.statement)]
        try:
            session = session_factory()
        except CasError as e:
            log.warning("%s attempt %d: CAS did not start: %s", run_id, attempt, e)
            status = RunStatus.SESSION_ERROR
            continue
        try:
            status = _run_attempt(attempt, history, llm, session, config, run_id, record, clock)
        finally:
            session.close()
        if status not in (RunStatus.SESSION_ERROR, RunStatus.TRANSPORT_ERROR):
            break

    final_turns = transcript.attempt_turns(attempt)
    result = RunResult(status, len(final_turns), count_restarts(transcript), run_id)
    transcript.result = result
    transcript.ended_at = now()
    if writer:
        writer.final(result, transcript.ended_at)
    return result, transcript
