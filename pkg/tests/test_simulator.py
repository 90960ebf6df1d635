"""End-to-end runs over the bundled scenarios plus small synthetic ones,
checking conservation laws and frozen metric values."""

from __future__ import annotations

import json
from pathlib import Path

import pytest

import infersub
from infersub.metrics import emit, report_from_json
from infersub.scenario import load_scenario
from infersub.simulator import run

from helpers import (
    barrier_scenario,
    count_window_scenario,
    time_window_scenario,
    trainer_scenario,
    two_publisher_scenario,
)

SCENARIO_DIR = Path(infersub.__file__).parent / "scenarios"
GOLDEN_DIR = Path(__file__).parent / "golden"


def bundled(name):
    return load_scenario(SCENARIO_DIR / f"{name}.json")


def by_sub(report):
    return {s.sub_id: s for s in report.subscriptions}


# ---------------------------------------------------------------------------
# Frozen numbers for one bundled scenario, hand-audited once.


def test_nwdaf_headline_numbers():
    rep = run(bundled("nwdaf"))
    assert rep.totals.published == 140
    subs = by_sub(rep)

    tap = subs["tap-nf1"]
    assert (tap.accepted, tap.delivered) == (50, 50)
    assert tap.mean_latency_ms == pytest.approx(10.018, abs=1e-9)
    assert tap.p95_latency_ms == pytest.approx(10.018, abs=1e-9)

    fuse = subs["fuse-mon"]
    assert fuse.accepted == 140
    assert fuse.delivered == 25
    assert fuse.filtered == 63
    assert fuse.end_buffered == 2
    # three-input barrier: every accepted input is either part of a delivered
    # emission, superseded (filtered), or still pending when time runs out
    assert fuse.accepted == 3 * fuse.delivered + fuse.filtered + fuse.end_buffered


@pytest.mark.parametrize("name", ["nwdaf", "oran", "arvr", "nlp", "federation"])
def test_identity_subscription_conservation(name):
    rep = run(bundled(name))
    for s in rep.subscriptions:
        if s.applied_versions:
            continue  # model-update subs account differently
        assert s.delivered + s.filtered + s.dropped <= s.accepted
        assert s.end_buffered >= 0


def test_arvr_report_matches_golden_bytes():
    rep = run(bundled("arvr"))
    golden = (GOLDEN_DIR / "arvr_metrics.json").read_text()
    assert emit(rep, "json") == golden


# ---------------------------------------------------------------------------
# Synthetic scenarios with closed-form outcomes.


def test_disjoint_publishers_do_not_perturb_each_other():
    solo = run(two_publisher_scenario(extra_topic=False))
    both = run(two_publisher_scenario(extra_topic=True))
    a = by_sub(solo)["tap1"]
    b = by_sub(both)["tap1"]
    assert (a.accepted, a.delivered, a.filtered) == (b.accepted, b.delivered, b.filtered)
    assert a.mean_latency_ms == b.mean_latency_ms
    assert a.p95_latency_ms == b.p95_latency_ms


def test_count_window_batches_exactly():
    rep = run(count_window_scenario(pubs=10, n=3))
    s = by_sub(rep)["batched"]
    assert s.delivered == 3
    assert s.end_buffered == 1  # 10 = 3*3 + 1 leftover


def test_time_window_flushes_everything_before_the_end():
    rep = run(time_window_scenario(pubs=8, delta_ms=40))
    s = by_sub(rep)["windowed"]
    assert s.delivered >= 1
    assert s.end_buffered == 0
    assert s.accepted == 8


def test_barrier_pairs_off_minimum():
    rep = run(barrier_scenario(count_a=10, count_b=7))
    s = by_sub(rep)["joined"]
    assert s.delivered == 7


def test_trainer_rounds_without_faults():
    rep = run(trainer_scenario(fault_at_ms=None))
    s = by_sub(rep)["upd-s"]
    assert s.applied_versions == (1, 2, 3, 4)
    assert s.delivered == 4  # registration snapshot + three aggregated rounds


# ---------------------------------------------------------------------------
# Report plumbing.


def test_json_round_trip_preserves_the_report():
    rep = run(bundled("oran"))
    text = emit(rep, "json")
    again = report_from_json(text)
    assert again == rep
    assert emit(again, "json") == text


def test_csv_shape():
    rep = run(bundled("nwdaf"))
    lines = emit(rep, "csv").strip().splitlines()
    assert lines[0].startswith("kind,id,")
    kinds = [ln.split(",", 1)[0] for ln in lines[1:]]
    assert kinds.count("subscription") == len(rep.subscriptions)
    assert kinds.count("link") == len(rep.links)
    assert kinds.count("node") == len(rep.nodes)
    assert kinds.count("totals") == 1


def test_emit_rejects_unknown_format():
    rep = run(bundled("nwdaf"))
    with pytest.raises(ValueError):
        emit(rep, "yaml")


def test_runs_are_reproducible():
    sc = bundled("oran")
    assert emit(run(sc, seed=7), "json") == emit(run(sc, seed=7), "json")
