"""A tiny stand-in CAS speaking the Maple command-line protocol.

Run as ``python -m casbench.cas.mockcas``. It prints ``> `` when ready,
reads statements terminated by ``;`` or ``:``, and prints results for the
``;`` ones. ``--echo`` returns every statement verbatim instead of
evaluating it. Evaluation covers integer arithmetic, assignments,
``restart``, ``print``, ``sleep(n)`` and ``crash()``; anything it cannot
parse is reported the way Maple reports syntax errors.
"""

import argparse
import ast
import operator
import os
import re
import sys
import time

from .statements import StatementKind, group_for_submission, open_blocks, split_statements

PROMPT = "> "
BANNER = "    |\\^/|     Mock CAS\n._|\\|   |/|_. stand-in for driver tests\n"

_BINOPS = {
    ast.Add: operator.add,
    ast.Sub: operator.sub,
    ast.Mult: operator.mul,
    ast.Pow: operator.pow,
}
_ASSIGN = re.compile(r"^\s*([A-Za-z_][A-Za-z0-9_]*)\s*:=\s*(.*)$", re.DOTALL)
_CALL = re.compile(r"^\s*([A-Za-z_][A-Za-z0-9_]*)\s*\((.*)\)\s*$", re.DOTALL)


class Unevaluated(Exception):
    pass


class Interpreter:
    def __init__(self):
        self.env = {}

    def _eval_node(self, node):
        if isinstance(node, ast.Constant) and isinstance(node.value, int):
            return node.value
        if isinstance(node, ast.Name):
            if isinstance(self.env.get(node.id), int):
                return self.env[node.id]
            raise Unevaluated(node.id)
        if isinstance(node, ast.BinOp) and type(node.op) in _BINOPS:
            return _BINOPS[type(node.op)](self._eval_node(node.left), self._eval_node(node.right))
        if isinstance(node, ast.BinOp) and isinstance(node.op, ast.Div):
            a, b = self._eval_node(node.left), self._eval_node(node.right)
            if b == 0:
                raise ZeroDivisionError
            if a % b:
                raise Unevaluated(ast.unparse(node))
            return a // b
        if isinstance(node, ast.UnaryOp) and isinstance(node.op, ast.USub):
            return -self._eval_node(node.operand)
        raise Unevaluated(ast.unparse(node))

    def value(self, expr):
        """Evaluate to an int where possible, else return the normalised text."""
        expr = expr.strip()
        if expr in self.env:
            return self.env[expr]
        tree = ast.parse(expr.replace("^", "**"), mode="eval")
        try:
            return self._eval_node(tree.body)
        except Unevaluated:
            return re.sub(r"\s+", "", expr)

    def run(self, code):
        """Return output lines for one statement body (terminator removed)."""
        if code in ("quit", "done", "stop"):
            sys.stdout.flush()
            os._exit(0)
        if code == "restart":
            self.env.clear()
            return []
        m = _ASSIGN.match(code)
        if m:
            name, val = m.group(1), self.value(m.group(2))
            self.env[name] = val
            return [f"{name} := {val}"]
        m = _CALL.match(code)
        if m:
            fn, args = m.groups()
            if fn == "interface":
                return ["3"]
            if fn == "sleep":
                time.sleep(float(args))
                return []
            if fn == "crash":
                sys.stdout.flush()
                os._exit(3)
            if fn == "print":
                return [", ".join(str(self.value(a)) for a in args.split(",") if a.strip())]
            if fn == "solve":
                return [
                    "Warning, solve may be ignoring assumptions on the input variables.",
                    re.sub(r"\s+", "", code),
                ]
            if fn == "ERROR":
                return [f"Error, {args.strip()}"]
            return [re.sub(r"\s+", "", code)]
        return [str(self.value(code))]


def _terminator(code):
    return code[-1] if code and code[-1] in ";:" else ""


def _complete(group):
    last = group[-1]
    if not last.has_code:
        return True
    return bool(_terminator(last.code)) and open_blocks(group) == 0


def _respond(interp, stmt, echo):
    code = stmt.code
    term = _terminator(code)
    if echo:
        return [stmt.text.strip()]
    body = code[:-1].strip() if term else code
    try:
        lines = interp.run("restart" if stmt.kind is StatementKind.RESTART else body)
    except SyntaxError:
        lines = ["Error, missing operator or `;`"]
    except ZeroDivisionError:
        lines = ["Error, numeric exception: division by zero"]
    if term == ";":
        return lines
    return [ln for ln in lines if ln.startswith(("Warning,", "Error,"))]


def main(argv=None):
    ap = argparse.ArgumentParser(prog="mockcas")
    ap.add_argument("--echo", action="store_true", help="return statements verbatim")
    ap.add_argument("--echo-input", action="store_true", help="echo input lines like a terminal")
    ap.add_argument("--banner", action="store_true")
    ap.add_argument("--no-prompt", action="store_true", help="never print a prompt")
    args = ap.parse_args(argv)

    out = sys.stdout
    interp = Interpreter()

    def prompt():
        if not args.no_prompt:
            out.write(PROMPT)
        out.flush()

    if args.banner:
        out.write(BANNER)
    prompt()
    pending = ""
    for line in sys.stdin:
        if args.echo_input:
            out.write(line if line.endswith("\n") else line + "\n")
        pending += line
        groups = group_for_submission(split_statements(pending))
        if groups and not _complete(groups[-1]):
            pending = "".join(s.text for s in groups.pop())
        else:
            pending = ""
        for group in groups:
            for stmt in group:
                if stmt.has_code:
                    for text in _respond(interp, stmt, args.echo):
                        out.write(text + "\n")
        if not pending:
            prompt()
    out.flush()


if __name__ == "__main__":
    main()
