"""Evaluation: scale-invariant SDR, localization accuracy, report tables."""

from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass, field

import numpy as np

from .audio import TimeSignal
from .utils import circ_diff_deg

SI_SDR_CAP_DB = 60.0


def _as_mono(x) -> np.ndarray:
    if isinstance(x, TimeSignal):
        if x.n_channels != 1:
            raise ValueError("metric inputs must be mono")
        return x.channel(0)
    arr = np.asarray(x, dtype=np.float64).reshape(-1)
    return arr


def si_sdr(estimate, reference) -> float:
    """Scale-invariant signal-to-distortion ratio in dB.

    The reference is rescaled by the least-squares projection coefficient
    beta = <est, ref> / ||ref||^2; the ratio ||beta ref||^2 over
    ||beta ref - est||^2 is returned in dB, capped at +60 dB so that exact
    reconstructions compare cleanly.  Raises ValueError on length mismatch
    or a zero-power reference.
    """
    est = _as_mono(estimate)
    ref = _as_mono(reference)
    if est.shape != ref.shape:
        raise ValueError(f"length mismatch: estimate {est.shape}, reference {ref.shape}")
    ref_power = float(ref @ ref)
    if ref_power <= 0:
        raise ValueError("reference has zero power")
    beta = float(est @ ref) / ref_power
    target = beta * ref
    distortion = target - est
    num = float(target @ target)
    den = float(distortion @ distortion)
    if num == 0.0:
        return -SI_SDR_CAP_DB
    if den == 0.0:
        return SI_SDR_CAP_DB
    value = 10.0 * np.log10(num / den)
    return float(np.clip(value, -SI_SDR_CAP_DB, SI_SDR_CAP_DB))


def acc15(estimates_deg, truths_deg, tolerance_deg: float = 15.0) -> float:
    """Fraction of azimuth estimates within +-tolerance of the truth.

    The comparison is circular (0/360 wrap) and the bound is inclusive.
    """
    est = np.atleast_1d(np.asarray(estimates_deg, dtype=np.float64))
    tru = np.atleast_1d(np.asarray(truths_deg, dtype=np.float64))
    if est.shape != tru.shape:
        raise ValueError(f"shape mismatch: {est.shape} vs {tru.shape}")
    if est.size == 0:
        raise ValueError("accuracy of an empty set is undefined")
    err = np.abs(circ_diff_deg(est, tru))
    return float(np.mean(err <= tolerance_deg))


def weighted_average(values, weights) -> float:
    """Weighted mean with validation of matching, nonnegative weights."""
    v = np.asarray(values, dtype=np.float64).reshape(-1)
    w = np.asarray(weights, dtype=np.float64).reshape(-1)
    if v.shape != w.shape:
        raise ValueError(f"shape mismatch: {v.shape} vs {w.shape}")
    if np.any(w < 0):
        raise ValueError("weights must be nonnegative")
    total = float(np.sum(w))
    if total <= 0:
        raise ValueError("weights sum to zero")
    return float(np.sum(v * w) / total)


@dataclass
class ScenarioResult:
    """One enhanced scene: geometry, conditions, and scores."""

    geometry: str
    snr_db: float
    speech_doa: float
    noise_doa: float
    noise_kind: str
    seed: int
    duration: float
    si_sdr_in: float
    si_sdr_out: float
    ref_channel: int
    doa_true: float | None = None
    doa_est: float | None = None
    doa_err_deg: float | None = None
    ik_converged: bool | None = None
    ik_pos_error: float | None = None

    FIELDS = (
        "geometry", "snr_db", "speech_doa", "noise_doa", "noise_kind", "seed",
        "duration", "si_sdr_in", "si_sdr_out", "ref_channel", "doa_true",
        "doa_est", "doa_err_deg", "ik_converged", "ik_pos_error",
    )


def _sort_key(row: ScenarioResult):
    return (
        row.geometry, row.snr_db, row.speech_doa, row.noise_doa,
        row.noise_kind, row.seed,
    )


@dataclass
class EvalReport:
    """A batch of scenario results plus canonical aggregations.

    Aggregations sort rows by their condition key first, so the summary is
    identical regardless of the order cells were executed in.  `failures`
    carries per-cell error records from batch runs; it never contributes
    to aggregates.
    """

    rows: list = field(default_factory=list)
    failures: list = field(default_factory=list)

    def add(self, row: ScenarioResult) -> None:
        self.rows.append(row)

    def extend(self, rows) -> None:
        self.rows.extend(rows)

    def sorted_rows(self) -> list:
        return sorted(self.rows, key=_sort_key)

    def geometries(self) -> list:
        return sorted({r.geometry for r in self.rows})

    def snr_levels(self) -> list:
        return sorted({r.snr_db for r in self.rows})

    def mean_si_sdr(self, geometry: str, snr_db: float | None = None) -> dict:
        """Duration-weighted mean input/output SI-SDR for one geometry."""
        rows = [
            r for r in self.sorted_rows()
            if r.geometry == geometry and (snr_db is None or r.snr_db == snr_db)
        ]
        if not rows:
            raise ValueError(f"no rows for geometry {geometry!r} at snr {snr_db}")
        w = [r.duration for r in rows]
        return {
            "si_sdr_in": weighted_average([r.si_sdr_in for r in rows], w),
            "si_sdr_out": weighted_average([r.si_sdr_out for r in rows], w),
            "n": len(rows),
        }

    def localization_accuracy(self, tolerance_deg: float = 15.0,
                              snr_db: float | None = None) -> float:
        rows = [
            r for r in self.sorted_rows()
            if r.doa_est is not None and (snr_db is None or r.snr_db == snr_db)
        ]
        if not rows:
            raise ValueError("no rows carry localization estimates")
        return acc15(
            [r.doa_est for r in rows], [r.doa_true for r in rows], tolerance_deg
        )

    def summary(self) -> dict:
        """Nested summary: per geometry, per SNR, mean SI-SDR in/out."""
        out = {"n_rows": len(self.rows), "geometries": {}}
        for geom in self.geometries():
            per_snr = {}
            for snr in self.snr_levels():
                if any(r.geometry == geom and r.snr_db == snr for r in self.rows):
                    per_snr[str(snr)] = self.mean_si_sdr(geom, snr)
            out["geometries"][geom] = per_snr
        try:
            out["acc15"] = {
                str(snr): self.localization_accuracy(15.0, snr)
                for snr in self.snr_levels()
                if any(r.doa_est is not None and r.snr_db == snr for r in self.rows)
            }
        except ValueError:
            out["acc15"] = {}
        return out

    def pivot_table(self) -> list:
        """Plot-ready rows: one per (snr, geometry) with mean in/out SI-SDR."""
        table = []
        for snr in self.snr_levels():
            for geom in self.geometries():
                if not any(r.geometry == geom and r.snr_db == snr for r in self.rows):
                    continue
                cell = self.mean_si_sdr(geom, snr)
                table.append(
                    {
                        "snr_db": snr,
                        "geometry": geom,
                        "si_sdr_in": cell["si_sdr_in"],
                        "si_sdr_out": cell["si_sdr_out"],
                        "n": cell["n"],
                    }
                )
        return table

    def write_rows_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=ScenarioResult.FIELDS)
            writer.writeheader()
            for row in self.sorted_rows():
                writer.writerow({k: getattr(row, k) for k in ScenarioResult.FIELDS})

    def write_pivot_csv(self, path) -> None:
        table = self.pivot_table()
        with open(path, "w", newline="") as fh:
            writer = csv.DictWriter(
                fh, fieldnames=["snr_db", "geometry", "si_sdr_in", "si_sdr_out", "n"]
            )
            writer.writeheader()
            writer.writerows(table)

    def write_summary_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.summary(), fh, indent=2, sort_keys=True)

    @classmethod
    def from_rows_csv(cls, path) -> "EvalReport":
        report = cls()
        with open(path, newline="") as fh:
            for raw in csv.DictReader(fh):
                kwargs = {}
                for key in ScenarioResult.FIELDS:
                    val = raw.get(key, "")
                    if val in ("", "None", None):
                        kwargs[key] = None
                    elif key in ("geometry", "noise_kind"):
                        kwargs[key] = val
                    elif key in ("seed", "ref_channel"):
                        kwargs[key] = int(val)
                    elif key == "ik_converged":
                        kwargs[key] = val == "True"
                    else:
                        kwargs[key] = float(val)
                report.add(ScenarioResult(**kwargs))
        return report
