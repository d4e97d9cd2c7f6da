"""Long-lived CAS subprocess driven through its prompt."""

from __future__ import annotations

import logging
import os
import shutil
import subprocess
import sys
import threading
import time
from dataclasses import dataclass, field
from enum import Enum

from .statements import Statement, StatementKind, group_for_submission, split_statements

log = logging.getLogger(__name__)

PRETTYPRINT_OFF = "interface(prettyprint = 0):"


class CasError(Exception):
    """Base class for CAS session failures."""


class LaunchFailed(CasError):
    pass


class InitFailed(CasError):
    pass


class SessionDead(CasError):
    def __init__(self, message, results=None):
        super().__init__(message)
        self.results = results or []


class StatementTimeout(CasError):
    def __init__(self, statement, timeout, results=None):
        super().__init__(f"statement exceeded {timeout:g}s: {statement.code[:80]!r}")
        self.statement = statement
        self.results = results or []


@dataclass
class BackendDescriptor:
    name: str
    launch_command: list[str]
    prompt_marker: str = "> "
    init_statements: list[str] = field(default_factory=lambda: [PRETTYPRINT_OFF])
    statement_timeout: float = 300.0
    output_byte_limit: int | None = None
    # the Maple command line echoes input when attached to a terminal
    echo_input: bool = False
    use_pty: bool = False
    warning_prefix: str = "Warning,"
    error_prefix: str = "Error,"
    quiescence: float = 0.05
    startup_timeout: float = 60.0

    def __post_init__(self):
        if not self.prompt_marker:
            raise ValueError("prompt_marker must be non-empty")
        if self.statement_timeout <= 0:
            raise ValueError("statement_timeout must be positive")
        if self.output_byte_limit is not None and self.output_byte_limit < 0:
            raise ValueError("output_byte_limit must be >= 0")


def maple_descriptor(executable="maple", **overrides) -> BackendDescriptor:
    opts = dict(name="maple", launch_command=[executable, "-q"], echo_input=True)
    opts.update(overrides)
    return BackendDescriptor(**opts)


def mock_descriptor(mode="calc", **overrides) -> BackendDescriptor:
    """Descriptor for the bundled stand-in CAS (``calc`` or ``echo``)."""
    if mode not in ("calc", "echo"):
        raise ValueError(f"unknown mock CAS mode {mode!r}")
    cmd = [sys.executable, "-m", "casbench.cas.mockcas"]
    if mode == "echo":
        cmd.append("--echo")
    opts = dict(name=f"mock-{mode}", launch_command=cmd, statement_timeout=30.0)
    opts.update(overrides)
    return BackendDescriptor(**opts)


class BlockKind(str, Enum):
    RESULT = "result"
    WARNING = "warning"
    ERROR = "error"
    BANNER = "banner"


@dataclass(frozen=True)
class OutputBlock:
    kind: BlockKind
    text: str


@dataclass
class StatementResult:
    statement: Statement
    outputs: list[OutputBlock] = field(default_factory=list)
    duration: float = 0.0
    truncated: bool = False


def classify_lines(lines, warning_prefix="Warning,", error_prefix="Error,") -> list[OutputBlock]:
    """Group output lines into blocks.

    A line opening with the warning or error prefix is its own block; runs of
    any other lines form one result block.
    """
    blocks: list[OutputBlock] = []
    run: list[str] = []
    for line in lines:
        if line.startswith(warning_prefix) or line.startswith(error_prefix):
            if run:
                blocks.append(OutputBlock(BlockKind.RESULT, "\n".join(run)))
                run = []
            kind = BlockKind.WARNING if line.startswith(warning_prefix) else BlockKind.ERROR
            blocks.append(OutputBlock(kind, line))
        else:
            run.append(line)
    if run:
        blocks.append(OutputBlock(BlockKind.RESULT, "\n".join(run)))
    return blocks


def output_lines(results) -> list[str]:
    """Flatten statement results into the lines shown to a reader."""
    lines = []
    for res in results:
        for block in res.outputs:
            lines.extend(block.text.split("\n"))
    return lines


def distribute_outputs(statements, lines, **prefixes) -> list[StatementResult]:
    """Attach a whole chunk's output to its last statement with code.

    Used where output was captured per chunk rather than per statement
    (replayed runs, rendered transcripts), so both build identical records.
    """
    results = [StatementResult(s) for s in statements]
    if lines:
        holders = [r for r in results if r.statement.has_code] or results
        if not holders:
            raise ValueError("output present but chunk has no statements")
        holders[-1].outputs = classify_lines(lines, **prefixes)
    return results


def _truncate(text: str, limit: int) -> tuple[str, bool]:
    raw = text.encode("utf-8")
    if len(raw) <= limit:
        return text, False
    kept = raw[:limit].decode("utf-8", errors="ignore")
    omitted = len(raw) - len(kept.encode("utf-8"))
    return f"{kept}\n[[output truncated: {omitted} bytes omitted]]", True


class ReplSession:
    """A CAS subprocess; one statement group in flight at a time."""

    def __init__(self, descriptor: BackendDescriptor):
        self.descriptor = descriptor
        self.banner = ""
        self._proc: subprocess.Popen | None = None
        self._fd_out: int | None = None
        self._fd_in: int | None = None
        self._buf = bytearray()
        self._last_byte = 0.0
        self._eof = False
        self._cond = threading.Condition()
        self._reader: threading.Thread | None = None
        self._dead = False

    # -- lifecycle

    def start(self):
        d = self.descriptor
        if not d.launch_command:
            raise LaunchFailed("empty launch_command")
        exe = d.launch_command[0]
        if shutil.which(exe) is None and not os.path.isfile(exe):
            raise LaunchFailed(f"executable not found: {exe}")
        try:
            if d.use_pty:
                import pty

                master, slave = pty.openpty()
                self._proc = subprocess.Popen(
                    d.launch_command, stdin=slave, stdout=slave, stderr=slave,
                    start_new_session=True, close_fds=True,
                )
                os.close(slave)
                self._fd_in = self._fd_out = master
            else:
                self._proc = subprocess.Popen(
                    d.launch_command, stdin=subprocess.PIPE, stdout=subprocess.PIPE,
                    stderr=subprocess.STDOUT, bufsize=0, start_new_session=True,
                )
                self._fd_in = self._proc.stdin.fileno()
                self._fd_out = self._proc.stdout.fileno()
        except OSError as e:
            raise LaunchFailed(f"cannot launch {d.launch_command!r}: {e}") from e

        self._reader = threading.Thread(target=self._read_loop, daemon=True)
        self._reader.start()
        try:
            raw = self._await_prompt(d.startup_timeout)
        except SessionDead as e:
            raise LaunchFailed(f"{d.name} exited during startup") from e
        except StatementTimeout as e:
            raise LaunchFailed(f"{d.name} printed no prompt within {d.startup_timeout:g}s") from e
        self.banner = raw
        self._run_init()
        return self

    def close(self):
        proc = self._proc
        if proc is None:
            return
        self._dead = True
        if proc.poll() is None:
            proc.kill()
        try:
            proc.wait(timeout=5)
        except subprocess.TimeoutExpired:  # pragma: no cover
            pass
        if self.descriptor.use_pty and self._fd_out is not None:
            try:
                os.close(self._fd_out)
            except OSError:
                pass
        else:
            for stream in (proc.stdin, proc.stdout):
                if stream:
                    stream.close()
        self._proc = None

    @property
    def alive(self) -> bool:
        return self._proc is not None and not self._dead and self._proc.poll() is None

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    # -- io

    def _read_loop(self):
        while True:
            try:
                data = os.read(self._fd_out, 65536)
            except OSError:
                data = b""
            with self._cond:
                if not data:
                    self._eof = True
                    self._cond.notify_all()
                    return
                self._buf.extend(data)
                self._last_byte = time.monotonic()
                self._cond.notify_all()

    def _at_prompt(self) -> bool:
        marker = self.descriptor.prompt_marker.encode("utf-8")
        buf = bytes(self._buf)
        return buf == marker or buf.endswith(b"\n" + marker)

    def _await_prompt(self, timeout: float, statement: Statement | None = None) -> str:
        d = self.descriptor
        deadline = time.monotonic() + timeout
        with self._cond:
            while True:
                now = time.monotonic()
                if self._at_prompt() and now - self._last_byte >= d.quiescence:
                    raw = bytes(self._buf[: len(self._buf) - len(d.prompt_marker.encode("utf-8"))])
                    del self._buf[:]
                    return raw.decode("utf-8", errors="replace").replace("\r\n", "\n")
                if self._eof:
                    self._dead = True
                    raise SessionDead(f"{d.name} exited")
                if now >= deadline:
                    self._dead = True
                    self.close()
                    raise StatementTimeout(statement or Statement("", StatementKind.BLANK), timeout)
                wait = d.quiescence if self._at_prompt() else deadline - now
                self._cond.wait(timeout=min(max(wait, 0.005), deadline - now + 0.005))

    def _send(self, text: str):
        if not text.endswith("\n"):
            text += "\n"
        data = text.encode("utf-8")
        try:
            while data:
                n = os.write(self._fd_in, data)
                data = data[n:]
        except OSError as e:
            self._dead = True
            raise SessionDead(f"{self.descriptor.name} closed its input: {e}") from e

    def _strip_echo(self, raw: str, sent: str) -> str:
        lines = raw.split("\n")
        marker = self.descriptor.prompt_marker
        for expected in sent.rstrip("\n").split("\n"):
            if not lines:
                break
            head = lines[0].rstrip("\r")
            if head == expected or head == marker + expected or head.rstrip() == expected.rstrip():
                lines.pop(0)
            else:
                break
        return "\n".join(lines)

    def _submit(self, text: str, last: Statement) -> str:
        self._send(text)
        raw = self._await_prompt(self.descriptor.statement_timeout, last)
        if self.descriptor.echo_input:
            raw = self._strip_echo(raw, text)
        if raw.endswith("\n"):
            raw = raw[:-1]
        return raw

    def _run_init(self):
        d = self.descriptor
        for text in d.init_statements:
            for group in group_for_submission(split_statements(text)):
                if not group[-1].has_code:
                    continue
                raw = self._submit("".join(s.text for s in group), group[-1])
                blocks = classify_lines(raw.split("\n"), d.warning_prefix, d.error_prefix) if raw else []
                errors = [b.text for b in blocks if b.kind is BlockKind.ERROR]
                if errors:
                    raise InitFailed(f"init statement {text!r} failed: {errors[0]}")

    # -- public

    def execute_chunk(self, chunk: str) -> list[StatementResult]:
        if not self.alive:
            raise SessionDead(f"{self.descriptor.name} session is not running")
        d = self.descriptor
        results: list[StatementResult] = []
        for group in group_for_submission(split_statements(chunk)):
            if not group[-1].has_code:
                results.extend(StatementResult(s) for s in group)
                continue
            t0 = time.monotonic()
            try:
                raw = self._submit("".join(s.text for s in group), group[-1])
            except StatementTimeout as e:
                e.results = results
                raise
            except SessionDead as e:
                e.results = results
                raise
            elapsed = time.monotonic() - t0
            truncated = False
            if d.output_byte_limit is not None and raw:
                raw, truncated = _truncate(raw, d.output_byte_limit)
            blocks = classify_lines(raw.split("\n"), d.warning_prefix, d.error_prefix) if raw else []
            group_results = [StatementResult(s) for s in group]
            tail = group_results[-1]
            tail.outputs, tail.duration, tail.truncated = blocks, elapsed, truncated
            results.extend(group_results)
            if any(s.kind is StatementKind.RESTART for s in group):
                self._run_init()
        return results


def start_session(descriptor: BackendDescriptor) -> ReplSession:
    session = ReplSession(descriptor)
    try:
        return session.start()
    except CasError:
        session.close()
        raise
