from __future__ import annotations

import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from _fixtures import brute_force_journey_days, table_pathbook, wait_fixture
from icepath.composer import (
    TRAVEL_NEXT,
    TRAVEL_SAME,
    WAIT,
    ComposeError,
    build_year_graph,
    compose,
    dumps_journey,
    journey_geojson,
    journey_record,
    journeys_table,
    month_ends,
    render_calendar,
)

ALL = ["A", "B", "C", "D", "E", "F"]


def random_book(rng: np.random.Generator, n: int, p_route: float = 0.25, p_open: float = 0.8):
    ids = ALL[:n]
    days = {}
    for m in range(1, 13):
        for a in ids:
            for b in ids:
                if a != b and rng.random() < p_route:
                    days[(m, a, b)] = float(rng.integers(2, 36)) + float(rng.choice([0.0, 0.25, 0.5]))
    open_ = {(m, w): bool(rng.random() < p_open) for m in range(1, 13) for w in ids}
    return table_pathbook(ids, days, open_)


def test_month_ends():
    assert month_ends(1, 3) == [31, 59, 90]
    assert month_ends(12, 2) == [31, 62]


def test_thirty_day_cutoff():
    book = table_pathbook(["A", "B"], {(6, "A", "B"): 31.0, (7, "A", "B"): 30.0})
    g = build_year_graph(book)
    assert not g.out("A", 6) or all(e.kind == WAIT for e in g.out("A", 6))
    assert g.has_edge(TRAVEL_SAME, "A", 7, "B", 7)


def test_closed_endpoint_drops_travel_edges():
    book = table_pathbook(["A", "B"], {(6, "A", "B"): 5.0, (7, "A", "B"): 5.0})
    access = {(m, w): not (m == 6 and w == "B") for m in range(1, 13) for w in "AB"}
    g = build_year_graph(book, accessibility=access)
    assert not any(e.kind != WAIT for e in g.out("A", 6))
    assert g.has_edge(TRAVEL_NEXT, "A", 7, "B", 8)


def test_both_travel_edges_for_short_route():
    book = table_pathbook(["A", "B"], {(6, "A", "B"): 25.0})
    g = build_year_graph(book)
    assert g.has_edge(TRAVEL_SAME, "A", 6, "B", 6)
    assert g.has_edge(TRAVEL_NEXT, "A", 6, "B", 7)
    assert not g.has_edge(TRAVEL_NEXT, "A", 5, "B", 6)


def test_wait_edges_need_access_both_months():
    open_ = {(m, "A"): m != 4 for m in range(1, 13)}
    g = build_year_graph(table_pathbook(["A", "B"], {}, open_))
    assert g.has_edge(WAIT, "A", 2, "A", 3)
    assert not g.has_edge(WAIT, "A", 3, "A", 4)
    assert not g.has_edge(WAIT, "A", 4, "A", 5)
    assert g.has_edge(WAIT, "A", 12, "A", 1)


def test_accessibility_override():
    book = table_pathbook(["A", "B"], {})
    closed = {(m, w): False for m in range(1, 13) for w in "AB"}
    assert not list(build_year_graph(book, closed).all_edges())


def test_single_direct_segment():
    book = table_pathbook(["A", "B"], {(m, "A", "B"): 20.0 for m in range(1, 13)})
    j = compose("A", "B", build_year_graph(book))
    assert j.total_days == 20.0 and j.waiting_months == 0
    assert j.start_month == 1  # ties go to the earliest start
    assert [s.kind for s in j.segments] == ["travel"]


def test_wait_then_travel():
    g = build_year_graph(wait_fixture())
    j = compose("C", "B", g)
    assert j.start_month == 1
    assert [s.kind for s in j.segments] == ["travel", "wait", "travel"]
    assert j.total_days == 43.0
    assert j.wait_days == 21.0 and j.travel_days == 22.0
    assert j.waiting_months == 1
    assert j.waypoints_visited == ["C", "A", "B"]
    # forced start in January; the wait at A fills the rest of the month
    assert compose("A", "B", g, start_month=1).total_days == 31.0 + 12.0
    assert compose("A", "B", g).total_days == 12.0


def test_same_month_edge_blocked_after_boundary():
    # 20 days A->B in January, then B->C only as a January route of 15 days:
    # arriving on day 20, B->C would finish on day 35, so only the next-month edge applies
    book = table_pathbook(["A", "B", "C"], {(1, "A", "B"): 20.0, (1, "B", "C"): 15.0})
    j = compose("A", "C", build_year_graph(book), start_month=1)
    assert j.total_days == 35.0
    assert j.segments[-1].month_index == 0
    # the next-month edge lands in February, where the February route continues
    book = table_pathbook(["A", "B", "D", "C"],
                          {(1, "A", "B"): 20.0, (1, "B", "D"): 15.0, (2, "D", "C"): 10.0})
    j = compose("A", "C", build_year_graph(book), start_month=1)
    assert j.total_days == 45.0
    assert [s.month_index for s in j.segments] == [0, 0, 1]
    # an arrival before the month ends cannot jump ahead: it waits out January first
    book = table_pathbook(["A", "B", "C"], {(1, "A", "B"): 29.5, (2, "B", "C"): 10.0})
    j = compose("A", "C", build_year_graph(book), start_month=1)
    assert j.total_days == pytest.approx(41.0)
    assert [s.kind for s in j.segments] == ["travel", "wait", "travel"]


def test_unreachable_and_errors():
    g = build_year_graph(table_pathbook(["A", "B"], {}))
    assert compose("A", "B", g) is None
    with pytest.raises(ComposeError):
        compose("A", "Z", g)
    with pytest.raises(ComposeError):
        compose("A", "B", g, horizon=0)


def test_wrap_december_to_january():
    book = table_pathbook(["A", "B", "C"], {(12, "A", "B"): 25.0, (1, "B", "C"): 10.0})
    j = compose("A", "C", build_year_graph(book), start_month=12)
    starts = [s.start_day for s in j.segments]
    assert starts == sorted(starts)
    assert j.total_days == 41.0  # wait at B from day 25 to 31, then 10 days
    assert [s.month for s in j.segments] == [12, 12, 1]


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 100_000), n=st.integers(2, 6))
def test_compose_matches_enumeration(seed, n):
    rng = np.random.default_rng(seed)
    book = random_book(rng, n)
    g = build_year_graph(book)
    init, goal = ALL[0], ALL[n - 1]
    horizon = 3
    j = compose(init, goal, g, horizon=horizon)
    best = brute_force_journey_days(book, init, goal, horizon)
    if best == math.inf:
        assert j is None
    else:
        assert j.total_days == pytest.approx(best, abs=1e-9)


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 100_000), n=st.integers(2, 6), start=st.integers(1, 12))
def test_fixed_start_matches_enumeration(seed, n, start):
    # a forced start month makes waits and month-boundary edges common
    rng = np.random.default_rng(seed)
    book = random_book(rng, n, p_route=0.2, p_open=0.8)
    init, goal = ALL[0], ALL[n - 1]
    j = compose(init, goal, build_year_graph(book), start_month=start, horizon=5)
    best = brute_force_journey_days(book, init, goal, 5, starts=[start])
    if best == math.inf:
        assert j is None
    else:
        assert j.total_days == pytest.approx(best, abs=1e-9)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 100_000), n=st.integers(2, 6))
def test_journey_structure(seed, n):
    rng = np.random.default_rng(seed)
    book = random_book(rng, n, p_route=0.35)
    g = build_year_graph(book)
    j = compose(ALL[0], ALL[n - 1], g)
    if j is None:
        return
    t = 0.0
    here = j.init
    for seg in j.segments:
        assert seg.src == here
        assert seg.start_day == pytest.approx(t)
        if seg.kind == "wait":
            nm = seg.month % 12 + 1
            assert book.is_open(seg.src, seg.month) and book.is_open(seg.src, nm)
        else:
            assert seg.days <= 30.0
        t += seg.days
        here = seg.dst
    assert here == j.goal
    assert j.total_days == pytest.approx(t)
    assert j.total_days == pytest.approx(j.travel_days + j.wait_days)
    # never shorter than the best direct single-month route of the pair
    direct = [r.total_days for (m, a, b), r in book if a == j.init and b == j.goal and r.total_days <= 30]
    if direct:
        assert j.total_days <= min(direct) + 1e-9


def test_static_composition_not_faster_than_direct():
    # same routes every month: a two-hop journey can never beat the one-layer route A->C
    days = {}
    for m in range(1, 13):
        days[(m, "A", "B")] = 8.0
        days[(m, "B", "C")] = 9.0
        days[(m, "A", "C")] = 16.0
    j = compose("A", "C", build_year_graph(table_pathbook(["A", "B", "C"], days)))
    assert j.total_days == 16.0


# ---------------------------------------------------------------------------
# rendering


def test_calendar_zero_day():
    book = table_pathbook(["A", "B"], {(3, "A", "B"): 0.0})
    j = compose("A", "B", build_year_graph(book))
    text = render_calendar(j)
    assert text.splitlines()[0] == "# journey A -> B"
    assert len(text.splitlines()) == 2


def test_calendar_single_segment():
    book = table_pathbook(["A", "B"], {(5, "A", "B"): 20.0})
    j = compose("A", "B", build_year_graph(book))
    lines = render_calendar(j).splitlines()[2:]
    assert len(lines) == 20
    assert all("|####|" in ln for ln in lines)
    assert lines[0].startswith("May  1 |####| A")
    assert lines[-1].endswith("|####| B")


def test_calendar_wait_block():
    j = compose("C", "B", build_year_graph(wait_fixture()))
    lines = render_calendar(j).splitlines()[2:]
    assert len(lines) == 43
    marks = "".join("T" if "|####|" in ln else "W" for ln in lines)
    assert marks == "T" * 10 + "W" * 21 + "T" * 12
    assert lines[31].startswith("Feb  1")
    assert "waiting 1 months" in render_calendar(j).splitlines()[1]


def test_records_and_tables():
    j = compose("C", "B", build_year_graph(wait_fixture()))
    rec = journey_record(j, "fixture")
    assert rec["starting"] == "January" and rec["waiting"] == 1 and rec["duration"] == 43.0
    assert [s["kind"] for s in rec["segments"]] == ["travel", "wait", "travel"]
    table = journeys_table([("C", "B", j), ("B", "C", None)], "fixture")
    assert table == ["route,year,starting,waiting,duration", "C -> B,fixture,January,1,43.0", "B -> C,fixture,,,"]
    geo = journey_geojson(j, {"x": 1})
    assert len(geo["features"]) == 2 and geo["config"] == {"x": 1}
    dumped = json.loads(dumps_journey(None, "B", "C"))
    assert dumped["journey"] is None
