import math
import random

import numpy as np
import pytest

from mpfsim.core import Corridor, VehicleClass
from mpfsim.metrics import (
    METRIC_COLUMNS,
    MetricsReport,
    TtcConfig,
    count_conflicts,
    edge_mean_speeds,
    travel_time,
    ttc,
)

CAV = VehicleClass.CAV
HDV = VehicleClass.HDV


# --- ttc --------------------------------------------------------------------


def test_ttc_no_closing_is_none():
    assert ttc((100.0, 20.0, 4.0), (80.0, 20.0)) is None
    assert ttc((100.0, 25.0, 4.0), (80.0, 20.0)) is None


def test_ttc_hand_values():
    # gap (100-66-4)=30, closing 5 -> 6 s
    assert ttc((100.0, 20.0, 4.0), (66.0, 25.0)) == pytest.approx(6.0)
    # gap 3, closing 4 -> 0.75 s: exactly at the CAV threshold
    assert ttc((50.0, 18.0, 4.0), (43.0, 22.0)) == pytest.approx(0.75)


def test_ttc_degenerate_gap_is_immediate():
    assert ttc((50.0, 10.0, 4.0), (46.0, 9.0)) == 0.0
    assert ttc((50.0, 10.0, 4.0), (47.0, 9.0)) == 0.0  # overlap


def test_ttc_never_negative_random():
    rnd = random.Random(8)
    for _ in range(1000):
        lx = rnd.uniform(0, 1000)
        out = ttc(
            (lx, rnd.uniform(0, 30), 4.0),
            (lx - rnd.uniform(-2, 50), rnd.uniform(0, 30)),
        )
        assert out is None or out >= 0.0


# --- conflict counting --------------------------------------------------------


def steady_pair_rows(n_steps, gap_fn, dv_fn, follower_class=HDV, dt=0.1):
    """Leader id 1 fixed at 25 m/s; follower id 2 per gap/dv schedules."""
    rows = []
    x_l = 500.0
    for k in range(n_steps):
        t = k * dt
        v_l = 25.0
        rows.append((t, 1, CAV, x_l, v_l))
        rows.append((t, 2, follower_class, x_l - 4.0 - gap_fn(k), v_l + dv_fn(k)))
        x_l += v_l * dt
    return rows


def test_equal_speed_platoon_has_no_conflicts(log_builder):
    rows = steady_pair_rows(200, lambda k: 12.0, lambda k: 0.0)
    log = log_builder(rows)
    assert count_conflicts(log, TtcConfig()) == (0, 0, 0)


def test_single_dip_counts_once(log_builder):
    # TTC dips to 0.5 s for 2 seconds (HDV follower, threshold 1.5)
    def dv(k):
        return 4.0 if 50 <= k < 70 else 0.0

    def gap(k):
        return 2.0 if 50 <= k < 70 else 60.0

    log = log_builder(steady_pair_rows(200, gap, dv))
    out = count_conflicts(log, TtcConfig())
    assert out.total == 1 and out.hdv == 1 and out.cav == 0


def test_dips_merge_within_debounce(log_builder):
    # two sub-threshold windows 0.5 s apart merge; 1.2 s apart do not
    def make(separation_steps):
        def dv(k):
            in_first = 50 <= k < 60
            in_second = 60 + separation_steps <= k < 70 + separation_steps
            return 4.0 if (in_first or in_second) else 0.0

        def gap(k):
            return 2.0 if dv(k) else 60.0

        return log_builder(steady_pair_rows(200, gap, dv))

    assert count_conflicts(make(5), TtcConfig()).total == 1
    assert count_conflicts(make(12), TtcConfig()).total == 2


def test_exact_threshold_is_not_a_conflict(log_builder):
    # gap 3, closing 4: TTC = 0.75 exactly; CAV threshold 0.75 -> strict `<`
    rows = steady_pair_rows(50, lambda k: 3.0, lambda k: 4.0, follower_class=CAV)
    log = log_builder(rows)
    assert count_conflicts(log, TtcConfig()).total == 0
    # HDV threshold 1.5 catches the same geometry
    rows = steady_pair_rows(50, lambda k: 3.0, lambda k: 4.0, follower_class=HDV)
    assert count_conflicts(log_builder(rows), TtcConfig()).total == 1


def test_follower_class_selects_threshold_and_bucket(log_builder):
    def dv(k):
        return 4.0 if 10 <= k < 20 else 0.0

    def gap(k):
        return 4.0 if dv(k) else 60.0  # TTC 1.0: conflict for HDV only

    hdv_log = log_builder(steady_pair_rows(100, gap, dv, follower_class=HDV))
    cav_log = log_builder(steady_pair_rows(100, gap, dv, follower_class=CAV))
    assert count_conflicts(hdv_log, TtcConfig()) == (1, 0, 1)
    assert count_conflicts(cav_log, TtcConfig()) == (0, 0, 0)


def test_threshold_monotonicity(log_builder):
    rnd = random.Random(77)
    rows = []
    for vid in (2, 3, 4):
        x = 400.0 - 30.0 * vid
        for k in range(150):
            rows.append((k * 0.1, vid, HDV, x, 20.0 + rnd.uniform(-3, 3)))
            x += 2.0
    rows += [(k * 0.1, 1, CAV, 500.0 + k, 10.0) for k in range(150)]
    log = log_builder(rows)
    lo = count_conflicts(log, TtcConfig(threshold_hdv_s=1.0))
    hi = count_conflicts(log, TtcConfig(threshold_hdv_s=2.5))
    assert hi.hdv >= lo.hdv


def brute_force_conflicts(log, cfg):
    """Independent per-step scanner with interval merging."""
    by_step = {}
    for i in range(log.t.size):
        by_step.setdefault(float(log.t[i]), []).append(i)
    hits = {}  # (follower vid, leader vid) -> sorted list of times
    for t, idxs in sorted(by_step.items()):
        ordered = sorted(idxs, key=lambda i: -log.x[i])
        for lead, foll in zip(ordered, ordered[1:]):
            out = ttc(
                (float(log.x[lead]), float(log.v[lead]), log.lengths[int(log.vid[lead])]),
                (float(log.x[foll]), float(log.v[foll])),
            )
            cls = VehicleClass(int(log.vclass[foll]))
            thr = cfg.threshold_cav_s if cls is VehicleClass.CAV else cfg.threshold_hdv_s
            if out is not None and out < thr:
                hits.setdefault((int(log.vid[foll]), int(log.vid[lead]), cls), []).append(t)
    total = cav = hdv = 0
    for (_, _, cls), times in hits.items():
        events = 1
        for a, b in zip(times, times[1:]):
            if b - a >= cfg.debounce_s:
                events += 1
        total += events
        if cls is VehicleClass.CAV:
            cav += events
        else:
            hdv += events
    return total, cav, hdv


def test_conflicts_match_brute_force_oracle(log_builder):
    rnd = random.Random(123)
    cfg = TtcConfig()
    for _ in range(200):
        n_veh = rnd.randint(2, 5)
        n_steps = rnd.randint(5, 200)
        rows = []
        xs = sorted(rnd.uniform(0, 400) for _ in range(n_veh))
        xs = [x + 6.0 * i for i, x in enumerate(xs)]  # keep gaps positive
        classes = [rnd.choice([CAV, HDV]) for _ in range(n_veh)]
        vs = [rnd.uniform(5, 30) for _ in range(n_veh)]
        for k in range(n_steps):
            for i in range(n_veh):
                rows.append((k * 0.1, i, classes[i], xs[i], vs[i]))
                xs[i] += vs[i] * 0.1
                vs[i] = max(0.0, vs[i] + rnd.uniform(-0.8, 0.8))
        log = log_builder(rows)
        assert tuple(count_conflicts(log, cfg)) == brute_force_conflicts(log, cfg)


def test_empty_log(log_builder):
    log = log_builder([])
    assert count_conflicts(log, TtcConfig()) == (0, 0, 0)
    assert travel_time(log, Corridor.uniform(1000.0, 2)) == 0.0


# --- travel time ----------------------------------------------------------


def test_uniform_speed_travel_time(log_builder):
    corridor = Corridor.uniform(7000.0, 7)
    rows = []
    for vid in range(7):
        x = 100.0 + 1000.0 * vid
        for k in range(100):
            rows.append((k * 0.1, vid, CAV, min(x, 7000.0), 20.0))
            x += 2.0
    log = log_builder(rows)
    assert travel_time(log, corridor) == pytest.approx(350.0)


def test_two_edge_additivity(log_builder):
    corridor = Corridor.uniform(2000.0, 2)
    rows = [(0.0, 1, CAV, 500.0, 20.0), (0.0, 2, CAV, 1500.0, 10.0)]
    log = log_builder(rows)
    assert travel_time(log, corridor) == pytest.approx(50.0 + 100.0)


def test_edge_without_samples_is_flagged_none(log_builder):
    corridor = Corridor.uniform(2000.0, 2)
    log = log_builder([(0.0, 1, CAV, 500.0, 20.0)])
    means = edge_mean_speeds(log, corridor)
    assert means[0] == pytest.approx(20.0)
    assert means[1] is None
    assert travel_time(log, corridor) == pytest.approx(50.0)  # empty edge excluded


def test_scale_property(log_builder):
    # stretching every position and edge by 2 doubles each q_i at fixed speeds
    rnd = random.Random(5)
    rows = []
    for vid in range(4):
        for k in range(50):
            rows.append((k * 0.1, vid, HDV, rnd.uniform(0, 1000), rnd.uniform(5, 30)))
    single = Corridor.uniform(1000.0, 4)
    double = Corridor.uniform(2000.0, 4)
    stretched = [(t, vid, cls, 2.0 * x, v) for (t, vid, cls, x, v) in rows]
    tt1 = travel_time(log_builder(rows), single)
    tt2 = travel_time(log_builder(stretched), double)
    assert tt2 == pytest.approx(2.0 * tt1)


def test_travel_time_monotone_in_speeds(log_builder):
    corridor = Corridor.uniform(1000.0, 2)
    rows = [(0.0, 1, CAV, 200.0, 10.0), (0.0, 2, CAV, 700.0, 15.0)]
    slow = log_builder(rows)
    fast = log_builder([(t, vid, cls, x, v + 2.0) for (t, vid, cls, x, v) in rows])
    assert travel_time(fast, corridor) < travel_time(slow, corridor)


def test_zero_mean_edge_gives_infinite_tt(log_builder):
    corridor = Corridor.uniform(1000.0, 2)
    log = log_builder([(0.0, 1, CAV, 200.0, 0.0), (0.0, 2, CAV, 700.0, 15.0)])
    assert travel_time(log, corridor) == math.inf


def test_brute_force_travel_time(log_builder):
    rnd = random.Random(31)
    corridor = Corridor((0.0, 120.0, 400.0, 1000.0))
    rows = []
    for vid in range(6):
        for k in range(80):
            rows.append((k * 0.1, vid, CAV, rnd.uniform(0, 1000), rnd.uniform(1, 30)))
    log = log_builder(rows)
    # independent per-sample aggregation
    sums = [0.0] * 3
    counts = [0] * 3
    for i in range(log.t.size):
        x = float(log.x[i])
        e = max(j for j in range(3) if corridor.bounds[j] <= x) if x < 1000.0 else 2
        sums[e] += float(log.v[i])
        counts[e] += 1
    expected = sum(
        (corridor.edge_lengths[e] / (sums[e] / counts[e])) for e in range(3) if counts[e]
    )
    assert travel_time(log, corridor) == pytest.approx(expected, rel=1e-12)


# --- report plumbing -------------------------------------------------------


def test_metric_columns_fixed_order():
    assert METRIC_COLUMNS == (
        "conflicts_total",
        "conflicts_cav",
        "conflicts_hdv",
        "collisions",
        "travel_time_s",
        "delivery_rate",
    )


def test_report_json_and_csv_row():
    rep = MetricsReport(
        conflicts_total=3,
        conflicts_cav=1,
        conflicts_hdv=2,
        collisions=0,
        travel_time_s=123.4,
        edge_mean_speed=[20.0, None],
        delivery_rate=None,
        beacons_sent=0,
        beacons_delivered=0,
    )
    d = rep.to_json_dict()
    assert d["conflicts_total"] == 3
    assert d["edge_mean_speed"] == [20.0, None]
    row = rep.csv_values()
    assert row["delivery_rate"] == ""  # blank, not "None"
    assert list(row) == list(METRIC_COLUMNS)
