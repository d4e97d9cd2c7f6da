#!/usr/bin/env python3
"""Run the full pack x problem matrix and write the reports.

Thin wrapper over ``casbench run`` followed by ``casbench report``. With
no mock flags it needs a CAS binary and a provider API key; try
``--mock-cas calc --mock-llm replies.jsonl`` for a dry run.
"""

import argparse
import sys

from casbench.cli import main as casbench


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--config")
    ap.add_argument("--results-dir", default="results")
    ap.add_argument("--pack", action="append")
    ap.add_argument("--problem", action="append")
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--model")
    ap.add_argument("--mock-llm")
    ap.add_argument("--mock-cas", choices=["echo", "calc", "replay"])
    args = ap.parse_args(argv)

    common = ["--results-dir", args.results_dir] + (["--config", args.config] if args.config else [])
    run = common + ["run", "--workers", str(args.workers)]
    for p in args.pack or []:
        run += ["--pack", p]
    for p in args.problem or []:
        run += ["--problem", p]
    if args.model:
        run += ["--model", args.model]
    if args.mock_llm:
        run += ["--mock-llm", args.mock_llm]
    if args.mock_cas:
        run += ["--mock-cas", args.mock_cas]
    code = casbench(run)
    if code:
        return code
    return casbench(common + ["report"])


if __name__ == "__main__":
    sys.exit(main())
