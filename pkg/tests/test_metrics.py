"""Scoring and report aggregation."""

import random

import numpy as np
import pytest

from beamkin.audio import TimeSignal
from beamkin.metrics import (
    SI_SDR_CAP_DB,
    EvalReport,
    ScenarioResult,
    acc15,
    si_sdr,
    weighted_average,
)
from conftest import make_rng


def test_si_sdr_exact_and_scaled_reconstruction():
    rng = make_rng(0)
    ref = rng.normal(size=4000)
    assert si_sdr(ref, ref) == SI_SDR_CAP_DB
    # projection absorbs any global gain
    assert si_sdr(2.0 * ref, ref) == SI_SDR_CAP_DB
    assert si_sdr(-0.3 * ref, ref) == SI_SDR_CAP_DB


def test_si_sdr_known_values():
    # orthogonal distortion with equal power: exactly 0 dB
    assert si_sdr([1.0, 1.0], [1.0, 0.0]) == pytest.approx(0.0, abs=1e-12)
    # distortion at 1% of the reference power: exactly 20 dB
    rng = make_rng(1)
    ref = rng.normal(size=1000)
    orth = rng.normal(size=1000)
    orth -= (orth @ ref) / (ref @ ref) * ref
    orth *= np.linalg.norm(ref) / np.linalg.norm(orth)
    assert si_sdr(ref + 0.1 * orth, ref) == pytest.approx(20.0, abs=1e-9)
    # orthogonal estimate: nothing projects onto the reference
    assert si_sdr([0.0, 1.0], [1.0, 0.0]) == -SI_SDR_CAP_DB


def test_si_sdr_scale_invariance():
    rng = make_rng(2)
    ref = rng.normal(size=1000)
    est = ref + 0.2 * rng.normal(size=1000)
    base = si_sdr(est, ref)
    assert abs(base) < SI_SDR_CAP_DB
    for c in (0.01, 3.0, 250.0):
        assert si_sdr(c * est, ref) == pytest.approx(base, abs=1e-9)
        assert si_sdr(est, c * ref) == pytest.approx(base, abs=1e-9)


def test_si_sdr_input_validation():
    with pytest.raises(ValueError):
        si_sdr(np.ones(10), np.zeros(10))
    with pytest.raises(ValueError):
        si_sdr(np.ones(10), np.ones(9))
    with pytest.raises(ValueError):
        si_sdr(TimeSignal(samples=np.ones((2, 10))), np.ones(10))
    mono = TimeSignal(samples=np.ones((1, 10)))
    assert si_sdr(mono, np.ones(10)) == SI_SDR_CAP_DB


def test_acc15_inclusive_circular():
    assert acc15([40.0], [40.0]) == 1.0
    assert acc15([55.0], [40.0]) == 1.0  # bound is inclusive
    assert acc15([55.2], [40.0]) == 0.0
    assert acc15([350.0], [5.0]) == 1.0  # 15 deg across the wrap
    assert acc15([349.0], [5.0]) == 0.0
    assert acc15([0.0, 100.0], [10.0, 200.0]) == 0.5
    assert acc15([100.0], [200.0], tolerance_deg=120.0) == 1.0
    with pytest.raises(ValueError):
        acc15([], [])
    with pytest.raises(ValueError):
        acc15([1.0, 2.0], [1.0])


def test_weighted_average():
    assert weighted_average([0.0, 10.0], [1.0, 3.0]) == pytest.approx(7.5)
    assert weighted_average([4.2], [0.7]) == pytest.approx(4.2)
    with pytest.raises(ValueError):
        weighted_average([1.0, 2.0], [0.0, 0.0])
    with pytest.raises(ValueError):
        weighted_average([1.0, 2.0], [1.0, -1.0])
    with pytest.raises(ValueError):
        weighted_average([1.0, 2.0], [1.0])


def make_row(geometry="optimized", snr=0.0, sp=40.0, nz=110.0, kind="pump",
             seed=0, duration=2.0, si_in=-5.0, si_out=10.0, ref=13, est=None):
    doa = dict(doa_true=None, doa_est=None, doa_err_deg=None,
               ik_converged=None, ik_pos_error=None)
    if est is not None:
        doa = dict(doa_true=sp, doa_est=est, doa_err_deg=abs(est - sp),
                   ik_converged=True, ik_pos_error=0.0008)
    return ScenarioResult(
        geometry=geometry, snr_db=snr, speech_doa=sp, noise_doa=nz,
        noise_kind=kind, seed=seed, duration=duration, si_sdr_in=si_in,
        si_sdr_out=si_out, ref_channel=ref, **doa,
    )


def sample_report():
    report = EvalReport()
    for snr in (0.0, 10.0):
        for seed in range(3):
            report.add(make_row(snr=snr, seed=seed, si_out=10.0 + snr + seed,
                                est=40.0 + seed))
            report.add(make_row(geometry="static1", snr=snr, seed=seed,
                                si_out=5.0 + snr + seed, ref=1))
    return report


def test_report_csv_round_trip(tmp_path):
    report = sample_report()
    path = tmp_path / "rows.csv"
    report.write_rows_csv(path)
    loaded = EvalReport.from_rows_csv(path)
    a = [vars(r) for r in report.sorted_rows()]
    b = [vars(r) for r in loaded.sorted_rows()]
    assert a == b


def test_report_order_independence(tmp_path):
    report = sample_report()
    shuffled = EvalReport()
    rows = list(report.rows)
    random.Random(3).shuffle(rows)
    shuffled.extend(rows)
    assert shuffled.summary() == report.summary()
    p1, p2 = tmp_path / "a.csv", tmp_path / "b.csv"
    report.write_rows_csv(p1)
    shuffled.write_rows_csv(p2)
    assert p1.read_bytes() == p2.read_bytes()


def test_report_mean_si_sdr_duration_weighting():
    report = EvalReport()
    report.add(make_row(duration=1.0, si_out=0.0))
    report.add(make_row(seed=1, duration=3.0, si_out=10.0))
    cell = report.mean_si_sdr("optimized")
    assert cell["si_sdr_out"] == pytest.approx(7.5)
    assert cell["n"] == 2
    with pytest.raises(ValueError):
        report.mean_si_sdr("static9")


def test_report_localization_accuracy_skips_missing():
    report = EvalReport()
    report.add(make_row(est=41.0))
    report.add(make_row(geometry="static1", seed=1))  # no estimate recorded
    report.add(make_row(seed=2, est=80.0))  # 40 deg off
    assert report.localization_accuracy() == pytest.approx(0.5)
    empty = EvalReport()
    empty.add(make_row(geometry="static1"))
    with pytest.raises(ValueError):
        empty.localization_accuracy()


def test_report_pivot_and_summary(tmp_path):
    report = sample_report()
    table = report.pivot_table()
    assert [(t["snr_db"], t["geometry"]) for t in table] == [
        (0.0, "optimized"), (0.0, "static1"),
        (10.0, "optimized"), (10.0, "static1"),
    ]
    for t in table:
        assert t["n"] == 3
    summary = report.summary()
    assert summary["n_rows"] == 12
    assert summary["geometries"]["optimized"]["0.0"]["si_sdr_out"] == pytest.approx(11.0)
    assert summary["acc15"] == {"0.0": 1.0, "10.0": 1.0}
    report.write_pivot_csv(tmp_path / "pivot.csv")
    report.write_summary_json(tmp_path / "summary.json")
    assert (tmp_path / "pivot.csv").stat().st_size > 0
    assert (tmp_path / "summary.json").stat().st_size > 0
