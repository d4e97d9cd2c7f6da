"""One test per acceptance criterion; each prints a PASS/FAIL line."""

import itertools
import json
import os
import random
import shutil
import time

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from acceptance_log import record
from casbench.agent import RunConfig, run_episode
from casbench.cas.statements import is_restart, split_statements
from casbench.cli import main, transcript_path
from casbench.context import estimate_tokens, get_problem, load_named_pack, render_system_prompt
from casbench.evalbench import (
    Finding,
    GradeRecord,
    Rule,
    RuleAssessment,
    aggregate_metrics,
    derive_verdict,
    results_from_rows,
)
from casbench.llm import script_mock
from casbench.transcript import RunStatus, parse_rendered, read_transcript, render
from conftest import FIXTURE, REFERENCE
from oracles import oracle_kind, oracle_split, statement_corpus, verdict_truth_table
from test_agent import PACK, FakeSession
from test_transcript import synthetic


@pytest.fixture(autouse=True)
def clean_env(monkeypatch):
    for name in list(os.environ):
        if name.startswith("CASBENCH_") and name != "CASBENCH_LIVE":
            monkeypatch.delenv(name)


def test_criterion_1_fixture_replay(tmp_path, capsys):
    t0 = time.perf_counter()
    code = main(["--results-dir", str(tmp_path), "run", "--pack", "10ex", "--problem", "sRMt",
                 "--mock-llm", str(FIXTURE), "--mock-cas", "replay"])
    elapsed = time.perf_counter() - t0
    capsys.readouterr()
    res = json.loads((tmp_path / "results.jsonl").read_text().splitlines()[0])["result"]
    ok = code == 0 and (res["status"], res["turns"], res["restarts"]) == ("solved_claimed", 18, 1) and elapsed < 5
    detail = f"fixture replay {res['status']} turns={res['turns']} restarts={res['restarts']} in {elapsed:.2f}s (want 18|1, <5s)"
    assert record(1, ok, detail)


def test_criterion_2_round_trip(fixture_text):
    t = parse_rendered(fixture_text)
    fixture_ok = render(t) == fixture_text and parse_rendered(render(t)).turns == t.turns
    rng = random.Random(20260418)
    bad = 0
    for _ in range(100):
        syn, expected = synthetic(rng)
        text = render(syn)
        back = parse_rendered(text)
        if text != expected or back.turns != syn.turns or render(back) != text:
            bad += 1
    ok = fixture_ok and bad == 0
    assert record(2, ok, f"round-trip fixture={'identical' if fixture_ok else 'DIFFERS'}, synthetic mismatches {bad}/100")


EXPECTED = {
    "10ex": (503 / 9, 57, 21 / 9, 2, 5),
    "3broad": (57, 40, 19 / 9, 2, 5),
    "3tailored": (424 / 9, 41, 14 / 9, 1, 7),
    "instruction": (67, 73, 78 / 9, 8, 3),
}


def test_criterion_3_metrics():
    t0 = time.perf_counter()
    rows = [json.loads(x) for x in (REFERENCE / "results.jsonl").read_text().splitlines()]
    grades = [GradeRecord.from_dict(json.loads(x)) for x in (REFERENCE / "grades.jsonl").read_text().splitlines()]
    table = aggregate_metrics(results_from_rows(rows), grades)
    elapsed = time.perf_counter() - t0
    worst = 0.0
    counts_ok = True
    for pack, (mt, mdt, mr, mdr, passes) in EXPECTED.items():
        s = table.per_pack[pack]
        worst = max(worst, abs(s.mean_turns - mt), abs(s.median_turns - mdt),
                    abs(s.mean_restarts - mr), abs(s.median_restarts - mdr))
        counts_ok &= s.pass_count == passes
    ok = worst <= 1e-9 and counts_ok and elapsed < 1
    got = " ".join(f"{p}={table.per_pack[p].mean_turns:.3f}/{table.per_pack[p].median_turns:g}/"
                   f"{table.per_pack[p].mean_restarts:.3f}/{table.per_pack[p].median_restarts:g}"
                   for p in EXPECTED)
    passes = [table.per_pack[p].pass_count for p in EXPECTED]
    assert record(3, ok, f"metrics {got}; max err {worst:.1e}; passes {passes}; {elapsed * 1000:.0f}ms")


def test_criterion_4_turn_limit():
    seen = []

    @settings(max_examples=30, deadline=None)
    @given(st.one_of(st.sampled_from([1, 5, 100]), st.integers(1, 60)))
    def prop(n):
        llm = script_mock(["x := 1;"] * (n + 5))
        result, t = run_episode(get_problem("sRMt"), PACK, RunConfig(max_turns=n), llm, FakeSession)
        assert result.status is RunStatus.TURN_LIMIT and result.turns == n == len(t.turns)
        seen.append(n)

    ok = True
    try:
        prop()
        for n in (1, 5, 100):  # always exercised, whatever hypothesis draws
            prop.hypothesis.inner_test(n)
    except AssertionError:
        ok = False
    assert record(4, ok, f"always-coding mock stops at max_turns for {len(set(seen))} distinct limits incl. 1, 5, 100")


def test_criterion_5_tokenizer():
    corpus = statement_corpus()
    split_bad = restart_bad = 0
    for chunk in corpus:
        ours = split_statements(chunk)
        if [(s.text, s.kind.value) for s in ours] != oracle_split(chunk):
            split_bad += 1
        for s in ours:
            if is_restart(s) != (oracle_kind(s.text) == "restart"):
                restart_bad += 1
    ok = len(corpus) == 200 and split_bad == 0 and restart_bad == 0
    assert record(5, ok, f"tokenizer vs oracle on {len(corpus)} chunks: {split_bad} split and {restart_bad} restart mismatches")


def test_criterion_6_rubric():
    three = [Finding.OK, Finding.VIOLATED, Finding.VIOLATED_BUT_HARMLESS]
    r4 = [Finding.OK, Finding.VIOLATED_BUT_HARMLESS, Finding.NOT_APPLICABLE]
    combos = list(itertools.product(three, three, three, r4))
    bad = 0
    for combo in combos:
        a = [RuleAssessment(rule, f) for rule, f in zip(Rule, combo)]
        if derive_verdict(a).value != verdict_truth_table([f.value for f in combo]):
            bad += 1
    ok = len(combos) == 81 and bad == 0
    assert record(6, ok, f"verdict vs truth table: {bad}/{len(combos)} mismatches")


def test_criterion_7_instruction_pack():
    first = render_system_prompt(load_named_pack("instruction"))
    second = render_system_prompt(load_named_pack("instruction"))
    est = estimate_tokens(first)
    ok = first == second and 1000 <= est.estimated_tokens <= 4000
    assert record(7, ok, f"instruction pack renders identically, {est.estimated_tokens} tokens ({est.method.value}), want [1000, 4000]")


@pytest.mark.live
def test_criterion_8_live_smoke(tmp_path, capsys):
    launch = os.environ.get("CASBENCH_BACKEND_LAUNCH_COMMAND", "maple")
    key_env = os.environ.get("CASBENCH_PROVIDER_KEY_ENV", "ANTHROPIC_API_KEY")
    if not shutil.which(launch.split()[0]) or not os.environ.get(key_env):
        record(8, False, f"live smoke needs {launch.split()[0]} on PATH and {key_env} set")
        pytest.fail("live prerequisites missing")
    code = main(["--results-dir", str(tmp_path), "run", "--pack", "instruction", "--problem", "sRMt"])
    capsys.readouterr()
    t = read_transcript(transcript_path(tmp_path, "instruction/sRMt/attempt1"), allow_incomplete=False)
    ok = code == 0 and t.result is not None and t.result.status in set(RunStatus)
    assert record(8, ok, f"live instruction x sRMt finished {t.result.status.value} after {t.result.turns} turns")
