import random
from datetime import datetime, timedelta, timezone

import pytest

from appowersave.trace import (HEADER, WINDOW_S, DiurnalParams, Direction, FlowKind, FlowSource, FlowSpec,
                               TraceFormatError, TraceRowError, TraceSample, fill_gaps, format_time,
                               load_mapped_csv, load_trace, parse_time, sample_rate, save_trace, synth_campus)

T0 = datetime(2020, 3, 2, tzinfo=timezone.utc)


def test_sample_rate():
    assert sample_rate(TraceSample("a", T0, 600, 150)) == 10.0
    with pytest.raises(ValueError):
        sample_rate(TraceSample("a", T0, 1, 1, window=0))
    with pytest.raises(ValueError):
        TraceSample("a", T0, -1, 0)


def test_time_roundtrip():
    assert format_time(parse_time("2020-03-02T08:10:00Z")) == "2020-03-02T08:10:00Z"
    assert parse_time("2020-03-02T09:10:00+01:00") == parse_time("2020-03-02T08:10:00")


def test_save_load_roundtrip(tmp_path):
    samples = synth_campus(3, 1, seed=4)
    path = tmp_path / "t.csv"
    save_trace(samples, path)
    assert path.read_text().splitlines()[0] == ",".join(HEADER)
    assert load_trace(path) == samples


def test_malformed_rows_strict_and_lenient(tmp_path, caplog):
    path = tmp_path / "bad.csv"
    path.write_text("ap_id,t_start,dl_bytes,ul_bytes\n"
                    "a,2020-03-02T00:00:00Z,10,5\n"
                    "a,not-a-time,1,1\n"
                    "b,2020-03-02T00:00:00Z,-4,1\n")
    with pytest.raises(TraceRowError) as err:
        load_trace(path)
    assert [n for n, _ in err.value.errors] == [3, 4]
    assert len(load_trace(path, strict=False)) == 1
    assert "skipping line 3" in caplog.text


def test_missing_columns(tmp_path):
    path = tmp_path / "h.csv"
    path.write_text("ap_id,t_start,dl_bytes\n")
    with pytest.raises(TraceFormatError):
        load_trace(path)
    empty = tmp_path / "e.csv"
    empty.write_text("")
    with pytest.raises(TraceFormatError):
        load_trace(empty)


def test_mapped_csv(tmp_path):
    path = tmp_path / "f.csv"
    path.write_text("AP,When,Down KiB,Up KiB\nx1,2020-03-02T00:10:00Z,2,0.5\n")
    mapping = {"ap_id": "AP", "t_start": "When", "dl_bytes": "Down KiB", "ul_bytes": "Up KiB"}
    got = load_mapped_csv(path, mapping, scale={"dl_bytes": 1024, "ul_bytes": 1024})
    assert got == [TraceSample("x1", T0 + timedelta(minutes=10), 2048, 512)]
    with pytest.raises(TraceFormatError):
        load_mapped_csv(path, {**mapping, "ap_id": "Nope"})


def test_fill_gaps():
    step = timedelta(seconds=WINDOW_S)
    samples = [TraceSample("a", T0, 1, 1), TraceSample("a", T0 + 3 * step, 1, 1), TraceSample("b", T0, 1, 1)]
    filled, gaps = fill_gaps(samples)
    assert gaps == [("a", T0 + step), ("a", T0 + 2 * step)]
    assert len(filled) == 5 and filled[1].dl_bytes == 0


def test_synth_shape_and_determinism():
    a = synth_campus(20, 2, seed=7)
    assert len(a) == 20 * 2 * 144
    assert a == synth_campus(20, 2, seed=7)
    assert a != synth_campus(20, 2, seed=8)
    keys = [(s.ap_id, s.t_start) for s in a]
    assert keys == sorted(keys)


def test_synth_office_much_busier_than_night():
    samples = synth_campus(100, 1, seed=11)
    params = DiurnalParams()

    def mean(hours):
        sel = [sample_rate(s) for s in samples if s.t_start.hour in hours]
        return sum(sel) / len(sel)

    night, office = mean(range(0, 6)), mean(range(8, 20))
    assert office / night > params.peak_ratio
    assert any(s.dl_bytes == s.ul_bytes == 0 for s in samples if s.t_start.hour < 6)


def test_diurnal_curve():
    p = DiurnalParams()
    assert p.mean_rate(3) == p.night_mean_bps
    assert p.mean_rate(14) > 10 * p.night_mean_bps
    assert p.is_night(5.9) and not p.is_night(6.0)


def test_flow_sources():
    cbr = FlowSource(FlowSpec(FlowKind.CBR, 1.2e6, 1500, Direction.DL, start=0.001), random.Random(0))
    times = [cbr.pop() for _ in range(1001)]
    assert times[0] == 1_000_000 and times[-1] == 1_000_000 + 1000 * 10_000_000
    rng = random.Random(5)
    poi = FlowSource(FlowSpec(FlowKind.POISSON, 1.2e6, 1500, Direction.UL), rng)
    ts = [poi.pop() for _ in range(20_000)]
    gaps = [b - a for a, b in zip(ts, ts[1:])]
    assert all(g > 0 for g in gaps)
    assert sum(gaps) / len(gaps) == pytest.approx(10_000_000, rel=0.03)
    sat = FlowSource(FlowSpec(FlowKind.SATURATED, 0, 1500, Direction.UL), rng)
    assert sat.saturated


def test_flow_spec_validation():
    with pytest.raises(ValueError):
        FlowSpec(FlowKind.CBR, 0, 1500, Direction.DL)
    with pytest.raises(ValueError):
        FlowSpec(FlowKind.CBR, 1e6, 0, Direction.DL)
