"""CAS REPL driving: statement splitting, sessions, mock backends."""

from .replay import ReplayMismatch, ReplaySession
from .session import (
    BackendDescriptor,
    BlockKind,
    CasError,
    InitFailed,
    LaunchFailed,
    OutputBlock,
    ReplSession,
    SessionDead,
    StatementResult,
    StatementTimeout,
    classify_lines,
    distribute_outputs,
    maple_descriptor,
    mock_descriptor,
    output_lines,
    start_session,
)
from .statements import Statement, StatementKind, group_for_submission, is_restart, split_statements

__all__ = [
    "BackendDescriptor",
    "BlockKind",
    "CasError",
    "InitFailed",
    "LaunchFailed",
    "OutputBlock",
    "ReplSession",
    "ReplayMismatch",
    "ReplaySession",
    "SessionDead",
    "Statement",
    "StatementKind",
    "StatementResult",
    "StatementTimeout",
    "classify_lines",
    "distribute_outputs",
    "group_for_submission",
    "is_restart",
    "maple_descriptor",
    "mock_descriptor",
    "output_lines",
    "split_statements",
    "start_session",
]
