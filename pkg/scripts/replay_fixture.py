#!/usr/bin/env python3
"""Replay the bundled 10ex x sRMt transcript through the agent loop.

The recorded assistant turns drive a scripted LLM, and the recorded CAS
output drives a replay session. Prints the run result and, with --diff,
whether the re-rendered transcript is byte-identical to the recording.
"""

import argparse
import sys
import time

from casbench.agent import RunConfig, run_episode
from casbench.cas import ReplaySession
from casbench.context import data_dir, get_problem, load_named_pack
from casbench.llm import script_mock
from casbench.transcript import parse_rendered, render, responses_from_transcript


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--script", default=str(data_dir() / "fixtures" / "sRMt_10ex.script"))
    ap.add_argument("--diff", action="store_true", help="compare the re-rendered transcript with the input")
    args = ap.parse_args(argv)

    with open(args.script, encoding="utf-8") as fh:
        text = fh.read()
    recorded = parse_rendered(text)
    t0 = time.perf_counter()
    result, transcript = run_episode(
        get_problem("sRMt"), load_named_pack("10ex"), RunConfig(),
        script_mock(responses_from_transcript(recorded)),
        lambda: ReplaySession.from_transcript(recorded),
        run_id="10ex/sRMt/attempt1",
    )
    print(f"status={result.status.value} turns={result.turns} restarts={result.restarts} "
          f"({time.perf_counter() - t0:.2f}s)")
    if args.diff:
        same = render(transcript) == text
        print("rendered transcript identical" if same else "rendered transcript DIFFERS")
        return 0 if same else 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
