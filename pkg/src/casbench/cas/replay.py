"""In-process sessions serving recorded output."""

from __future__ import annotations

import copy

from .session import CasError, SessionDead, StatementResult, distribute_outputs
from .statements import split_statements


class ReplayMismatch(CasError):
    pass


class ReplaySession:
    """Plays back recorded chunk output in order.

    ``recorded`` holds ``(chunk, output)`` pairs where ``output`` is either
    a list of output lines (attributed like a rendered transcript) or the
    exact list of StatementResult objects to hand back. With ``strict`` set,
    a chunk differing from the recorded one is an error, which keeps replays
    honest when the driving script and the recording drift apart.
    """

    def __init__(self, recorded, strict=True):
        self._recorded = list(recorded)
        self._pos = 0
        self.strict = strict
        self.alive = True
        self.chunks: list[str] = []

    @classmethod
    def from_transcript(cls, transcript, strict=True):
        """Recordings for every turn that sent code to the CAS."""
        recorded = []
        for turn in transcript.turns:
            if any(r.statement.has_code for r in turn.statement_results):
                chunk = "".join(r.statement.text for r in turn.statement_results)
                recorded.append((chunk, turn.statement_results))
        return cls(recorded, strict=strict)

    def execute_chunk(self, chunk):
        if not self.alive:
            raise SessionDead("replay session closed")
        if self._pos >= len(self._recorded):
            self.alive = False
            raise SessionDead("replay exhausted")
        expected, lines = self._recorded[self._pos]
        self._pos += 1
        if self.strict and chunk != expected:
            raise ReplayMismatch(f"chunk {self._pos} differs from the recording")
        self.chunks.append(chunk)
        if lines and isinstance(lines[0], StatementResult):
            return copy.deepcopy(list(lines))
        return distribute_outputs(split_statements(chunk), list(lines))

    def close(self):
        self.alive = False
