"""Lexical splitting of CAS input chunks into statements.

The grammar is the Maple surface syntax as far as statement boundaries go:
``;`` and ``:`` terminate a statement, ``:=``, ``::`` and ``:-`` do not,
``#`` starts a comment running to end of line, and double-quoted strings
and backquoted names are opaque. Nothing else about the language is
interpreted.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from enum import Enum


class StatementKind(str, Enum):
    EXECUTABLE = "executable"
    RESTART = "restart"
    COMMENT_ONLY = "comment_only"
    BLANK = "blank"


@dataclass(frozen=True)
class Statement:
    text: str
    kind: StatementKind

    @property
    def code(self) -> str:
        """The statement with comments removed and outer whitespace stripped."""
        return strip_comments(self.text).strip()

    @property
    def has_code(self) -> bool:
        return self.kind in (StatementKind.EXECUTABLE, StatementKind.RESTART)


_TOKEN = re.compile(
    r"""
      (?P<string>"(?:[^"\\]|\\.?)*(?:"|\Z))
    | (?P<name>`[^`]*(?:`|\Z))
    | (?P<comment>\#[^\n]*)
    | (?P<op>:[=:\-])
    | (?P<term>[;:])
    | (?P<space>\s+)
    | (?P<other>[^"`\#;:\s]+)
    """,
    re.VERBOSE | re.DOTALL,
)

# whatever follows a terminator on the same line: blanks, an optional comment, the newline
_TRAILER = re.compile(r"[^\S\n]*(?:\#[^\n]*)?\n?")

_RESTART = re.compile(r"restart(?![A-Za-z0-9_])")


def _tokens(text: str):
    pos = 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        # every character is covered by some alternative
        assert m is not None and m.end() > pos
        yield m
        pos = m.end()


def strip_comments(text: str) -> str:
    return "".join(m.group() for m in _tokens(text) if m.lastgroup != "comment")


def classify(text: str) -> StatementKind:
    has_comment = False
    for m in _tokens(text):
        if m.lastgroup == "comment":
            has_comment = True
        elif m.lastgroup != "space":
            if m.lastgroup == "other" and _RESTART.match(m.group()):
                return StatementKind.RESTART
            return StatementKind.EXECUTABLE
    return StatementKind.COMMENT_ONLY if has_comment else StatementKind.BLANK


def split_statements(chunk: str) -> list[Statement]:
    """Split ``chunk`` into statements whose texts concatenate back to ``chunk``.

    A terminated statement owns the rest of its line when that rest is only
    blanks or a comment. Runs of blank and comment lines between statements
    become separate ``blank`` / ``comment_only`` statements, and an
    unterminated tail is kept as a final statement of whatever kind its
    content gives.
    """
    pieces: list[str] = []
    start = 0
    in_code = False
    pos = 0
    while pos < len(chunk):
        m = _TOKEN.match(chunk, pos)
        kind = m.lastgroup
        if kind in ("space", "comment"):
            pos = m.end()
            continue
        if not in_code:
            if m.start() > start:
                pieces.append(chunk[start : m.start()])
                start = m.start()
            in_code = True
        if kind == "term":
            end = _TRAILER.match(chunk, m.end()).end()
            pieces.append(chunk[start:end])
            start = pos = end
            in_code = False
        else:
            pos = m.end()
    if start < len(chunk):
        pieces.append(chunk[start:])
    return [Statement(p, classify(p)) for p in pieces]


def is_restart(statement: Statement) -> bool:
    return statement.kind is StatementKind.RESTART


_CLOSER_PAIR = re.compile(r"\bend\s+(?:do|proc|if|module|try|use)\b")
_CLOSER = re.compile(r"\b(?:end|od|fi)\b")
_OPENER = re.compile(r"\b(?:do|proc|if|module|try|use)\b")


def _depth_change(statement: Statement) -> int:
    code = "".join(
        m.group()
        for m in _tokens(statement.text)
        if m.lastgroup in ("other", "op", "term", "space")
    )
    closers = len(_CLOSER_PAIR.findall(code))
    code = _CLOSER_PAIR.sub(" ", code)
    closers += len(_CLOSER.findall(code))
    return len(_OPENER.findall(code)) - closers


def open_blocks(statements) -> int:
    """Number of loop/procedure/conditional blocks left open."""
    depth = 0
    for stmt in statements:
        if stmt.has_code:
            depth = max(depth + _depth_change(stmt), 0)
    return depth


def group_for_submission(statements: list[Statement]) -> list[list[Statement]]:
    """Group statements that must reach the interpreter together.

    Loop, procedure and conditional bodies contain terminators of their
    own; the interpreter only prompts again once the enclosing block is
    closed, so such statements are sent as one unit. Statements without
    code are never sent and form singleton groups.
    """
    groups: list[list[Statement]] = []
    current: list[Statement] = []
    depth = 0
    for stmt in statements:
        if not current and not stmt.has_code:
            groups.append([stmt])
            continue
        current.append(stmt)
        if stmt.has_code:
            depth = max(depth + _depth_change(stmt), 0)
        if depth == 0 and stmt.has_code:
            groups.append(current)
            current = []
    if current:
        groups.append(current)
    return groups
