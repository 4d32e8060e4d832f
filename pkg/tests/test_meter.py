import datetime as dt
import io

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from numpy.testing import assert_allclose

from meterxai.errors import DataError
from meterxai.meter import (
    LoadProfile,
    Reading,
    WeekSlice,
    attach_labels,
    decode_cer_code,
    parse_labels,
    parse_readings,
    segment_weeks,
    time_of_day_mean,
    write_labels,
    write_readings,
)

from conftest import MONDAY


def canonical(rows):
    return "meter_id,date,slot,kwh\n" + "".join(f"{m},{d},{s},{k}\n" for m, d, s, k in rows)


def consecutive_profile(n_slots, start=MONDAY, meter="m1", value=0.5):
    t = start.toordinal() * 48 + np.arange(n_slots)
    return LoadProfile(meter, t // 48, t % 48, np.full(n_slots, value))


def test_parse_three_rows_sorted():
    text = canonical([("m1", "2009-07-20", s, 0.25) for s in (2, 0, 1)])
    (p,) = parse_readings(text)
    assert p.meter_id == "m1"
    assert len(p) == 3
    assert list(p.slot) == [0, 1, 2]
    assert p.labels == {}


def test_duplicate_timestamp_names_both_lines():
    text = canonical([("m1", "2009-07-20", 0, 0.25), ("m1", "2009-07-20", 0, 0.3)])
    with pytest.raises(DataError, match=r"duplicate.*m1.*2009-07-20 slot 0.*lines 2 and 3"):
        parse_readings(text)


@pytest.mark.parametrize(
    "row, msg",
    [
        (("m1", "2009-07-20", 0, -0.1), "line 2: negative"),
        (("m1", "2009-07-20", 48, 0.1), "line 2: slot 48"),
        (("m1", "2009-13-01", 0, 0.1), "line 2: bad date"),
        (("m1", "2009-07-20", 0, "abc"), "line 2: kwh"),
        (("m1", "2009-07-20", 0, "nan"), "line 2: kwh must be finite"),
    ],
)
def test_malformed_rows_report_line(row, msg):
    with pytest.raises(DataError, match=msg):
        parse_readings(canonical([row]))


def test_wrong_field_count_and_header():
    with pytest.raises(DataError, match="line 2: expected 4 fields"):
        parse_readings("meter_id,date,slot,kwh\nm1,2009-07-20,0\n")
    with pytest.raises(DataError, match="line 1"):
        parse_readings("id,date,slot,kwh\n")


def test_sub_milliwatt_readings_kept_exactly():
    (p,) = parse_readings(canonical([("m1", "2009-07-20", 0, "0.0004")]))
    assert p.kwh[0] == 0.0004


def test_cer_code_row():
    epoch = dt.date(2009, 1, 1)
    (p,) = parse_readings("1392 19503 0.14\n", format="cer-code", cer_epoch=epoch)
    assert p.meter_id == "1392"
    assert dt.date.fromordinal(int(p.day[0])) == epoch + dt.timedelta(days=195)
    assert p.slot[0] == 2
    assert p.kwh[0] == 0.14


def test_cer_code_errors():
    epoch = dt.date(2009, 1, 1)
    with pytest.raises(DataError, match="outside 1..48"):
        decode_cer_code("19549", epoch)
    with pytest.raises(DataError, match="5 digits"):
        decode_cer_code("1950", epoch)
    with pytest.raises(DataError, match="epoch"):
        parse_readings("1392 19503 0.14\n", format="cer-code")
    with pytest.raises(DataError, match="line 2"):
        parse_readings("1392 19503 0.14\n1392 x 0.1\n", format="cer-code", cer_epoch=epoch)


def test_profiles_in_first_appearance_order():
    text = canonical([("b", "2009-07-20", 0, 1), ("a", "2009-07-20", 0, 1), ("b", "2009-07-20", 1, 1)])
    assert [p.meter_id for p in parse_readings(text)] == ["b", "a"]


def test_reading_and_profile_invariants():
    with pytest.raises(DataError):
        Reading("m", MONDAY, 48, 1.0)
    with pytest.raises(DataError):
        Reading("m", MONDAY, 0, float("inf"))
    with pytest.raises(DataError, match="strictly increasing"):
        LoadProfile("m", [1, 1], [0, 0], [1.0, 1.0])
    with pytest.raises(DataError, match="unknown characteristic"):
        LoadProfile("m", [1], [0], [1.0], {"heating": True})


@settings(max_examples=30, deadline=None)
@given(
    st.lists(
        st.tuples(st.integers(0, 20), st.integers(0, 47), st.floats(0, 50, allow_nan=False, allow_subnormal=False)),
        min_size=1,
        max_size=60,
        unique_by=lambda r: (r[0], r[1]),
    ),
    st.sampled_from(["m1", "meter-7", "x"]),
)
def test_canonical_round_trip(rows, meter):
    text = canonical([(meter, (MONDAY + dt.timedelta(days=d)).isoformat(), s, repr(k)) for d, s, k in rows])
    first = parse_readings(text)
    buf = io.StringIO()
    write_readings(first, buf)
    assert parse_readings(buf.getvalue()) == first


def test_one_full_week():
    (w,) = segment_weeks(consecutive_profile(336))
    assert w.week_start == MONDAY
    assert w.completeness == 1.0
    assert w.values.shape == (336,)


def test_700_slots_give_two_weeks():
    weeks = segment_weeks(consecutive_profile(700))
    assert [w.week_start for w in weeks] == [MONDAY, MONDAY + dt.timedelta(days=7)]


def test_partial_head_week_dropped():
    weeks = segment_weeks(consecutive_profile(336 + 48, start=MONDAY - dt.timedelta(days=1)))
    assert [w.week_start for w in weeks] == [MONDAY]


def test_sparse_week_dropped():
    p = consecutive_profile(336)
    keep = np.r_[0:100, 236:336]  # 200 observed slots, both ends present
    sparse = LoadProfile("m1", p.day[keep], p.slot[keep], p.kwh[keep])
    assert segment_weeks(sparse, 0.8) == []
    assert len(segment_weeks(sparse, 0.5)) == 1


def test_interior_gap_interpolated():
    p = consecutive_profile(336)
    kwh = np.arange(336, dtype=float)
    keep = np.r_[0:10, 20:336]
    gappy = LoadProfile("m1", p.day[keep], p.slot[keep], kwh[keep])
    (w,) = segment_weeks(gappy)
    assert_allclose(w.values, kwh)
    assert w.completeness == pytest.approx(326 / 336)


@settings(max_examples=25, deadline=None)
@given(st.integers(1, 1500), st.integers(0, 6), st.floats(0.3, 1.0))
def test_week_count_bound(n, offset, thr):
    rng = np.random.default_rng(n)
    p = consecutive_profile(n, start=MONDAY + dt.timedelta(days=offset))
    keep = np.sort(rng.choice(n, size=max(1, int(n * 0.95)), replace=False))
    p = LoadProfile("m1", p.day[keep], p.slot[keep], rng.random(keep.size))
    weeks = segment_weeks(p, thr)
    imputed = sum(round((1 - w.completeness) * 336) for w in weeks)
    assert len(weeks) * 336 <= len(p) + imputed
    for w in weeks:
        assert w.week_start.weekday() == 0
        assert np.all(np.isfinite(w.values)) and np.all(w.values >= 0)
        assert w.completeness >= thr


def test_threshold_validation():
    with pytest.raises(DataError):
        segment_weeks(consecutive_profile(336), 0.0)


def test_week_slice_invariants():
    with pytest.raises(DataError):
        WeekSlice("m", MONDAY, np.ones(335))
    with pytest.raises(DataError):
        WeekSlice("m", MONDAY, -np.ones(336))
    w = WeekSlice("m", MONDAY, np.arange(336.0))
    assert w.days.shape == (7, 48)
    assert w.days[1, 0] == 48.0


def test_labels_round_trip_and_errors():
    text = "meter_id,characteristic,value\nm1,cooking,1\nm1,presence,0\nm2,water_heating,1\n"
    labels = parse_labels(text)
    assert labels == {"m1": {"cooking": True, "presence": False}, "m2": {"water_heating": True}}
    buf = io.StringIO()
    write_labels(labels, buf)
    assert parse_labels(buf.getvalue()) == labels
    with pytest.raises(DataError, match="line 2: unknown characteristic"):
        parse_labels("meter_id,characteristic,value\nm1,heating,1\n")
    with pytest.raises(DataError, match="line 2: label value"):
        parse_labels("meter_id,characteristic,value\nm1,cooking,yes\n")
    with pytest.raises(DataError, match="line 3: duplicate"):
        parse_labels("meter_id,characteristic,value\nm1,cooking,1\nm1,cooking,0\n")
    (p,) = attach_labels([consecutive_profile(3)], labels)
    assert p.labels == {"cooking": True, "presence": False}


def test_time_of_day_mean():
    a = np.tile(np.arange(48.0), 7)
    assert_allclose(time_of_day_mean([a, a + 2]), np.arange(48.0) + 1)
    with pytest.raises(DataError):
        time_of_day_mean([])
