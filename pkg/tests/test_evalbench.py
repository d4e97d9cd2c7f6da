import itertools
import json
import random
from fractions import Fraction

import pytest
from hypothesis import given
from hypothesis import strategies as st

from casbench.context import UnknownPack, UnknownProblem
from casbench.evalbench import (
    FAIL_MARK,
    PASS_MARK,
    DuplicateCell,
    DuplicateId,
    Finding,
    GradeRecord,
    IncompleteAssessment,
    Rule,
    RuleAssessment,
    Verdict,
    aggregate_metrics,
    check_turn_limit,
    derive_verdict,
    export_results,
    plan_matrix,
    render_grid,
    results_from_rows,
)
from casbench.transcript import RunResult, RunStatus
from conftest import REFERENCE
from oracles import brute_mean_median, verdict_truth_table

F = Finding
THREE = [F.OK, F.VIOLATED, F.VIOLATED_BUT_HARMLESS]
R4_VALUES = [F.OK, F.VIOLATED_BUT_HARMLESS, F.NOT_APPLICABLE]


def assess(r1, r2, r3, r4):
    return [RuleAssessment(rule, f) for rule, f in zip(Rule, (r1, r2, r3, r4))]


def reference():
    rows = [json.loads(x) for x in (REFERENCE / "results.jsonl").read_text().splitlines()]
    grades = [GradeRecord.from_dict(json.loads(x)) for x in (REFERENCE / "grades.jsonl").read_text().splitlines()]
    return results_from_rows(rows), grades


def test_truth_table_81():
    combos = list(itertools.product(THREE, THREE, THREE, R4_VALUES))
    assert len(combos) == 81
    for combo in combos:
        expected = verdict_truth_table([f.value for f in combo])
        assert derive_verdict(assess(*combo)).value == expected


def test_truth_table_all_findings_order_independent():
    rng = random.Random(3)
    every = list(Finding)
    for combo in itertools.product(every, every, every, R4_VALUES):
        a = assess(*combo)
        expected = verdict_truth_table([f.value for f in combo])
        rng.shuffle(a)
        assert derive_verdict(a).value == expected


def test_verdict_examples():
    assert derive_verdict(assess(F.OK, F.VIOLATED_BUT_HARMLESS, F.OK, F.OK)) is Verdict.PASS
    assert derive_verdict(assess(F.VIOLATED, F.OK, F.OK, F.OK)) is Verdict.FAIL
    assert derive_verdict(assess(F.OK, F.OK, F.OK, F.OK)) is Verdict.PASS


def test_incomplete_assessment():
    with pytest.raises(IncompleteAssessment):
        derive_verdict(assess(F.OK, F.OK, F.OK, F.OK)[:3])
    dup = assess(F.OK, F.OK, F.OK, F.OK)[:3] + [RuleAssessment(Rule.R1, F.OK)]
    with pytest.raises(IncompleteAssessment):
        derive_verdict(dup)


def test_r4_never_violated():
    with pytest.raises(ValueError):
        RuleAssessment(Rule.R4, F.VIOLATED)


def test_grade_record_round_trip_and_consistency():
    g = GradeRecord.create("10ex/R2Fs/attempt1", assess(F.OK, F.OK, F.VIOLATED, F.OK), grader="me")
    assert g.verdict is Verdict.FAIL
    assert GradeRecord.from_dict(g.to_dict()) == g
    with pytest.raises(ValueError):
        GradeRecord("x", g.assessments, "pass")


def test_plan_matrix():
    specs = plan_matrix(["10ex", "3broad", "3tailored", "instruction"],
                        ["R2Fs", "sRFs", "sRFv", "sRFt", "sRMs", "sRMt", "sRi2Ms", "sRi2Fs", "sRi2Ft"])
    assert len(specs) == 36
    assert specs[0].run_id == "10ex/R2Fs/attempt1"
    assert specs[9].run_id == "3broad/R2Fs/attempt1"
    assert len(plan_matrix(["instruction"], ["sRMt"])) == 1
    with pytest.raises(DuplicateId):
        plan_matrix(["10ex"], ["sRMt", "sRMt"])
    with pytest.raises(UnknownPack):
        plan_matrix(["zzz"], ["sRMt"])
    with pytest.raises(UnknownProblem):
        plan_matrix(["10ex"], ["zzz"])


EXPECTED = {
    "10ex": (Fraction(503, 9), 57, Fraction(21, 9), 2, 5),
    "3broad": (57, 40, Fraction(19, 9), 2, 5),
    "3tailored": (Fraction(424, 9), 41, Fraction(14, 9), 1, 7),
    "instruction": (67, 73, Fraction(78, 9), 8, 3),
}


def test_reference_metrics():
    results, grades = reference()
    table = aggregate_metrics(results, grades)
    for pack, (mt, mdt, mr, mdr, passes) in EXPECTED.items():
        s = table.per_pack[pack]
        assert abs(s.mean_turns - float(mt)) < 1e-9
        assert s.median_turns == mdt
        assert abs(s.mean_restarts - float(mr)) < 1e-9
        assert s.median_restarts == mdr
        assert s.pass_count == passes


def test_reference_turn_limit_bookkeeping():
    results, grades = reference()
    table = aggregate_metrics(results, grades)
    assert check_turn_limit(table) == []
    limited = sorted(k for k, v in table.per_cell.items() if v[2] is RunStatus.TURN_LIMIT)
    assert limited == [("3broad", "sRMs"), ("3tailored", "sRFs"), ("instruction", "sRi2Ft")]


def test_single_cell():
    t = aggregate_metrics([("p", "sRMt", RunResult(RunStatus.SOLVED_CLAIMED, 12, 3, "p/sRMt/attempt1"))])
    s = t.per_pack["p"]
    assert (s.mean_turns, s.median_turns, s.mean_restarts, s.median_restarts, s.pass_count) == (12, 12, 3, 3, 0)


def test_duplicate_cell():
    r = RunResult(RunStatus.GAVE_UP, 1, 0)
    with pytest.raises(DuplicateCell):
        aggregate_metrics([("a", "b", r), ("a", "b", r)])


@given(st.lists(st.tuples(st.integers(1, 100), st.integers(0, 20)), min_size=1, max_size=15))
def test_mean_median_oracle(cells):
    results = [("p", f"q{i}", RunResult(RunStatus.SOLVED_CLAIMED, t, r)) for i, (t, r) in enumerate(cells)]
    s = aggregate_metrics(results).per_pack["p"]
    mt, mdt = brute_mean_median([c[0] for c in cells])
    mr, mdr = brute_mean_median([c[1] for c in cells])
    assert (s.mean_turns, s.median_turns, s.mean_restarts, s.median_restarts) == (mt, mdt, mr, mdr)


def grid_rows(text):
    return text.rstrip("\n").split("\n")


def test_grid_reference_counts():
    _, grades = reference()
    lines = grid_rows(render_grid(grades))
    assert lines[-1].split() == ["pass", "5", "5", "7", "3"]
    assert len(lines) == 11


def test_grid_empty():
    lines = grid_rows(render_grid([]))
    body = [ln.split()[1:] for ln in lines[1:10]]
    assert body == [["."] * 4] * 9
    assert lines[-1].split() == ["pass", "0", "0", "0", "0"]


def test_grid_single_pass_position():
    g = GradeRecord.create("3tailored/sRi2Ft/attempt1", assess(F.OK, F.OK, F.OK, F.OK))
    lines = grid_rows(render_grid([g]))
    row9 = lines[9].split()
    assert row9[0] == "sRi2Ft"
    assert row9[1:] == [".", ".", PASS_MARK, "."]
    assert sum(ln.count(PASS_MARK) for ln in lines) == 1


def test_grid_matches_csv_counts():
    results, grades = reference()
    table = aggregate_metrics(results, grades)
    csv_rows = [r.split(",") for r in export_results(table, "csv").splitlines()[1:]]
    from_csv = {p: sum(1 for r in csv_rows if r[0] == p and r[5] == "pass") for p in table.packs()}
    footer = grid_rows(render_grid(grades))[-1].split()[1:]
    assert [str(from_csv[p]) for p in table.packs()] == footer
    fails = sum(ln.count(FAIL_MARK) for ln in grid_rows(render_grid(grades)))
    assert fails == sum(1 for r in csv_rows if r[5] == "fail") == 16


def test_csv_export():
    results, grades = reference()
    text = export_results(aggregate_metrics(results, grades), "csv")
    lines = text.splitlines()
    assert lines[0] == "pack,problem,turns,restarts,status,verdict"
    assert lines[1] == "10ex,R2Fs,49,2,solved_claimed,pass"
    assert len(lines) == 37
    assert export_results(aggregate_metrics([]), "csv") == "pack,problem,turns,restarts,status,verdict\n"


def test_markdown_export():
    results, grades = reference()
    md = export_results(aggregate_metrics(results, grades), "markdown")
    assert "49|2" in md
    row = next(ln for ln in md.splitlines() if ln.startswith("sRFs "))
    assert row.split()[3] == "100|4"
    assert "| 3tailored | sRFs | 100 | 4 | turn_limit | fail |" in md
    with pytest.raises(ValueError):
        export_results(aggregate_metrics(results), "html")
