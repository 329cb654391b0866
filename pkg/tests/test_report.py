import pytest

from sqlvs.report import (
    COLUMNS,
    RunReport,
    emit_report,
    load_report,
    records_to_text,
    summarize,
)


def _mk(i):
    return RunReport(
        query=f"Q{i}", vs_mode="ivf", strategy="hybrid", profile="nvlink-c2c",
        sf=0.01, seed=42, k=100, k_prime=1000,
        relational_ops=0.001 * i, vector_search=0.002, data_movement=0.0005,
        index_movement=0.1, residual=1e-5, copy_calls=5121, streamed_bytes=0,
        host_fallback=(i == 15), shortfall=0, recall=0.97, rel_err=None,
    )


def test_total_is_component_sum():
    r = _mk(2)
    assert r.total == pytest.approx(r.relational_ops + r.vector_search
                                    + r.data_movement + r.index_movement + r.residual)


def test_single_record_round_trip(tmp_path):
    path = tmp_path / "runs.psv"
    emit_report([_mk(2)], path)
    lines = path.read_text().splitlines()
    assert lines[0] == "|".join(COLUMNS)
    assert len(lines) == 2
    back = load_report(path)
    assert len(back) == 1
    assert back[0].query == "Q2" and back[0].recall == pytest.approx(0.97)
    assert back[0].host_fallback is False


def test_cartesian_count(tmp_path):
    runs = [_mk(i) for i in range(144)]
    path = tmp_path / "runs.psv"
    emit_report(runs, path)
    assert len(load_report(path)) == 144


def test_reemission_byte_identical(tmp_path):
    runs = [_mk(i) for i in (2, 15, 19)]
    p1, p2 = tmp_path / "a.psv", tmp_path / "b.psv"
    emit_report(runs, p1)
    emit_report(runs, p2)
    assert p1.read_bytes() == p2.read_bytes()


def test_round_trip_preserves_all_columns(tmp_path):
    r = _mk(15)
    path = tmp_path / "runs.psv"
    emit_report([r], path)
    back = load_report(path)[0]
    assert records_to_text([back]) == records_to_text([r])
    assert back.host_fallback is True


def test_summary_readable():
    text = summarize([_mk(2), _mk(15)])
    assert "Q2" in text and "fallback" in text
    assert text.splitlines()[0].startswith("query")
