import numpy as np
import pytest
from hypothesis import given, strategies as st

from archscale.archetypes import Archetype
from archscale.trace import (SyntheticSpec, TraceFormatError, WorkloadTrace, generate_synthetic,
                             load_trace_csv, slide_windows, write_trace_csv)


def _csv(tmp_path, body, header="function_id,minute_index,invocations"):
    p = tmp_path / "t.csv"
    p.write_text(header + "\n" + body)
    return p


def test_zero_fill(tmp_path):
    p = _csv(tmp_path, "f,0,500\nf,2,300\nf,5,400\n")
    (tr,) = load_trace_csv(p)
    assert tr.counts.tolist() == [500, 0, 300, 0, 0, 400]


def test_min_invocations_filter(tmp_path):
    p = _csv(tmp_path, "small,0,999\nbig,0,1000\n")
    assert [t.function_id for t in load_trace_csv(p)] == ["big"]


def test_empty_file(tmp_path):
    p = tmp_path / "e.csv"
    p.write_text("")
    assert load_trace_csv(p) == []


@pytest.mark.parametrize("body, msg", [
    ("f,0\n", "line 2"),
    ("f,x,1\n", "line 2"),
    ("f,0,1\nf,0,2\n", "line 3"),
    ("f,-1,5\n", "line 2"),
])
def test_malformed_rows_report_line(tmp_path, body, msg):
    with pytest.raises(TraceFormatError, match=msg):
        load_trace_csv(_csv(tmp_path, body))


def test_bad_header(tmp_path):
    with pytest.raises(TraceFormatError, match="line 1"):
        load_trace_csv(_csv(tmp_path, "f,0,1\n", header="a,b,c"))


def test_negative_count_is_value_error(tmp_path):
    with pytest.raises(ValueError, match="negative"):
        load_trace_csv(_csv(tmp_path, "f,0,-3\n"))


def test_csv_round_trip(tmp_path):
    tr = WorkloadTrace("fn", np.array([0, 3, 0, 7, 2000]))
    p = tmp_path / "rt.csv"
    write_trace_csv([tr], p)
    (back,) = load_trace_csv(p, min_invocations=0)
    assert back.function_id == "fn"
    assert back.counts.tolist() == tr.counts.tolist()


@pytest.mark.parametrize("n, expected", [(60, 1), (14400, 1435), (59, 0), (75, 2)])
def test_window_counts(n, expected):
    tr = WorkloadTrace("f", np.ones(n, dtype=int))
    assert len(slide_windows(tr, 60, 10)) == expected


def test_window_bad_args():
    tr = WorkloadTrace("f", np.ones(100, dtype=int))
    with pytest.raises(ValueError):
        slide_windows(tr, 60, 61)
    with pytest.raises(ValueError):
        slide_windows(tr, 60, 0)


@given(n=st.integers(1, 400), w=st.integers(2, 80), s=st.integers(1, 80))
def test_window_cardinality_property(n, w, s):
    if s > w:
        return
    tr = WorkloadTrace("f", np.arange(n))
    wins = slide_windows(tr, w, s)
    assert len(wins) == (0 if n < w else (n - w) // s + 1)
    for win in wins:
        assert len(win) == w
        assert win.values[0] == win.start_minute


def test_stationary_noiseless_is_constant():
    tr = generate_synthetic(SyntheticSpec(Archetype.STATIONARY, 120, base_rate=42))
    assert set(tr.counts.tolist()) == {42}


def test_periodic_lag_autocorrelation():
    tr = generate_synthetic(SyntheticSpec("PERIODIC", 600, 300, amplitude=150,
                                          period_minutes=60, noise_std=15, rng_seed=3))
    x = tr.counts.astype(float)
    r = np.corrcoef(x[:-60], x[60:])[0, 1]
    assert r > 0.6


def test_generator_determinism_and_seed_sensitivity():
    spec = SyntheticSpec("SPIKE", 300, 20, amplitude=30, noise_std=4, rng_seed=9)
    a, b = generate_synthetic(spec), generate_synthetic(spec)
    assert np.array_equal(a.counts, b.counts)
    other = generate_synthetic(SyntheticSpec("SPIKE", 300, 20, amplitude=30, noise_std=4,
                                             rng_seed=10))
    assert not np.array_equal(a.counts, other.counts)


def test_ramp_trend():
    tr = generate_synthetic(SyntheticSpec("RAMP", 200, 100, slope=2, noise_std=0))
    assert tr.counts[0] == 100 and tr.counts[-1] == 100 + 2 * 199


def test_spec_validation():
    with pytest.raises(ValueError, match="archetype"):
        SyntheticSpec("BURSTY", 100, 1)
    with pytest.raises(ValueError):
        SyntheticSpec("RAMP", 30, 1)
    with pytest.raises(ValueError):
        SyntheticSpec("PERIODIC", 100, 1, period_minutes=0)


def test_trace_rejects_negative():
    with pytest.raises(ValueError):
        WorkloadTrace("f", np.array([1, -1]))
