#!/usr/bin/env python3
"""Rebuild the pass/fail grid and the turns|restarts tables from the
bundled reference results, and print the per-pack summary.
"""

import argparse
import json
import sys
from pathlib import Path

from casbench.context import data_dir
from casbench.evalbench import GradeRecord, aggregate_metrics, export_results, render_grid, results_from_rows, summary_lines


def read_jsonl(path):
    return [json.loads(x) for x in Path(path).read_text(encoding="utf-8").splitlines() if x.strip()]


def main(argv=None):
    ref = data_dir() / "reference_results"
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--results", default=str(ref / "results.jsonl"))
    ap.add_argument("--grades", default=str(ref / "grades.jsonl"))
    ap.add_argument("--out", default="figures", help="output directory")
    args = ap.parse_args(argv)

    grades = [GradeRecord.from_dict(g) for g in read_jsonl(args.grades)]
    table = aggregate_metrics(results_from_rows(read_jsonl(args.results)), grades)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    grid = render_grid(grades, packs=table.packs())
    (out / "grid.txt").write_text(grid, encoding="utf-8")
    (out / "metrics.csv").write_text(export_results(table, "csv"), encoding="utf-8")
    (out / "turns_restarts.md").write_text(export_results(table, "markdown"), encoding="utf-8")
    print(grid)
    for line in summary_lines(table):
        print(line)
    print(f"wrote grid.txt, metrics.csv, turns_restarts.md to {out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
