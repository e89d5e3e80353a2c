"""End-to-end enhancement runs and the comparative experiment grid.

One run walks the five stages: simulate the mixture on the arm at its scan
pose, localize the speaker from sub-arrays A and B, observe the target,
solve the listening configuration, then re-simulate at the final pose and
beamform with mask-derived covariances.  Static-geometry runs keep the
array where it is and skip localization and repositioning; they still
consume the noise gain computed on the arm's base cluster at the scan
pose, so every geometry of a cell sees identical source levels.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np
import yaml

from .audio import TimeSignal, istft, read_wav, stft
from .beamform import (
    ReferenceSelector,
    apply_beamformer,
    batch_scm,
    mvdr_weights,
    reference_sweep,
)
from .kinematics import (
    KinematicChain,
    TargetOracle,
    forward_kinematics,
    listening_config,
)
from .masking import MaskProvider, OracleMaskProvider
from .metrics import EvalReport, ScenarioResult, si_sdr
from .scene import (
    PointSource,
    Scenario,
    noise_gain,
    propagate,
    render_noise_field,
)
from .sources import machine_noise, speech_like
from .ssl import DoaGrid, estimate_doa
from .utils import circ_diff_deg

GEOMETRIES = ("optimized", "static1", "static2", "static3", "static4")

# free-standing tabletop square, the no-arm baseline; same footprint as the
# base cluster, raised to the scan-plane height
STATIC4_POSITIONS = np.array(
    [
        [0.08, 0.08, 0.22],
        [0.08, -0.08, 0.22],
        [-0.08, 0.08, 0.22],
        [-0.08, -0.08, 0.22],
    ]
)

SCAN_CONFIG = "static1"

# child-stream salts; the per-geometry listening field adds the geometry's
# index so reruns are bit-identical regardless of process state
_SPEECH_SALT = 11
_NOISE_SALT = 12
_SCAN_FIELD_SALT = 13
_TARGET_SALT = 14
_LISTEN_FIELD_SALT = 20


def _rng(seed: int, salt: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(salt)]))


def _signal_from_wav(path, scenario: Scenario) -> TimeSignal:
    sig = read_wav(path)
    if sig.sample_rate != scenario.sample_rate:
        raise ValueError(
            f"{path}: sample rate {sig.sample_rate} does not match the "
            f"scenario's {scenario.sample_rate}"
        )
    n = int(round(scenario.duration * scenario.sample_rate))
    if sig.n_samples < n:
        raise ValueError(
            f"{path}: {sig.n_samples} samples is shorter than the scenario "
            f"duration ({n} samples)"
        )
    return TimeSignal(samples=sig.channel(0)[:n], sample_rate=sig.sample_rate)


def _speech_signal(scenario: Scenario) -> TimeSignal:
    if scenario.speech_wav is not None:
        return _signal_from_wav(scenario.speech_wav, scenario)
    x = speech_like(
        scenario.duration, scenario.sample_rate, _rng(scenario.seed, _SPEECH_SALT)
    )
    return TimeSignal(samples=x, sample_rate=scenario.sample_rate)


def _noise_signal(scenario: Scenario) -> TimeSignal | None:
    if scenario.noise_wav is not None:
        return _signal_from_wav(scenario.noise_wav, scenario)
    if scenario.noise_kind == "none":
        return None
    v = machine_noise(
        scenario.noise_kind,
        scenario.duration,
        scenario.sample_rate,
        _rng(scenario.seed, _NOISE_SALT),
    )
    return TimeSignal(samples=v, sample_rate=scenario.sample_rate)


@dataclass
class StageRecord:
    """One pipeline stage: its name, outcome, and a JSON-able payload."""

    name: str
    ok: bool = True
    error: str | None = None
    detail: dict = field(default_factory=dict)


@dataclass
class PipelineRun:
    """A completed (or partially completed) run.

    `stages` records what happened in execution order.  `row` is the flat
    result used by reports; it stays None when a stage failed before
    metrics could be computed.  Audio fields hold the listening-pose
    mixture, the enhanced output, and the clean speech image for
    inspection or WAV export.
    """

    scenario: Scenario
    stages: list
    row: ScenarioResult | None = None
    mixture: TimeSignal | None = None
    enhanced: TimeSignal | None = None
    clean: TimeSignal | None = None

    def stage(self, name: str) -> StageRecord:
        for rec in self.stages:
            if rec.name == name:
                return rec
        raise KeyError(f"no stage named {name!r}")

    @property
    def failed(self) -> bool:
        return any(not rec.ok for rec in self.stages)


class _StageFailed(Exception):
    pass


def _run_stage(stages: list, name: str, fn):
    try:
        detail = fn()
    except Exception as exc:  # noqa: BLE001 - recorded, not swallowed silently
        stages.append(StageRecord(name=name, ok=False, error=f"{type(exc).__name__}: {exc}"))
        raise _StageFailed from exc
    stages.append(StageRecord(name=name, detail=detail))
    return detail


def _listening_positions(chain: KinematicChain, geometry: str,
                         ik_q: np.ndarray | None) -> np.ndarray:
    if geometry == "optimized":
        return forward_kinematics(chain, ik_q).mic_positions
    if geometry == "static4":
        return STATIC4_POSITIONS.copy()
    return forward_kinematics(chain, chain.named_configs[geometry]).mic_positions


def run_pipeline(
    scenario: Scenario,
    chain: KinematicChain | None = None,
    mask_provider: MaskProvider | None = None,
    reference: ReferenceSelector | None = None,
) -> PipelineRun:
    """Execute one scenario end to end and return the run record.

    The optimized geometry walks all five stages; static geometries skip
    localization and repositioning.  A stage failure is recorded with its
    stage tag and the run returns with the stages completed so far (row
    stays None).
    """
    if scenario.array_config not in GEOMETRIES:
        raise ValueError(
            f"unknown array_config {scenario.array_config!r}; "
            f"choose from {GEOMETRIES}"
        )
    chain = chain if chain is not None else KinematicChain.default()
    provider = mask_provider if mask_provider is not None else OracleMaskProvider()
    geometry = scenario.array_config
    stages: list[StageRecord] = []
    run = PipelineRun(scenario=scenario, stages=stages)

    # source/scene preparation failures are charged to the first stage
    # that would have consumed them
    first_stage = "ssl_estimate" if geometry == "optimized" else "enhancement_output"
    try:
        speech = _speech_signal(scenario)
        noise = _noise_signal(scenario)
        spos = scenario.speech_position()
        src_speech = PointSource(position=spos, signal=speech)
        src_noise = (
            PointSource(position=scenario.noise_position(), signal=noise, kind="noise")
            if noise is not None
            else None
        )

        # gains are always calibrated on the arm's base cluster at the scan
        # pose, so every geometry of a cell consumes identical noise levels
        scan_mics = forward_kinematics(
            chain, chain.named_configs[SCAN_CONFIG]
        ).mic_positions
        speech_scan = propagate(src_speech, scan_mics)
        if src_noise is not None:
            field_scan = render_noise_field(
                src_noise, scan_mics, _rng(scenario.seed, _SCAN_FIELD_SALT)
            )
            g = noise_gain(speech_scan, field_scan, scenario.snr_db)
        else:
            field_scan = None
            g = 0.0
    except Exception as exc:  # noqa: BLE001
        stages.append(
            StageRecord(
                name=first_stage, ok=False,
                error=f"{type(exc).__name__}: {exc}",
            )
        )
        return run

    try:
        ik = None
        doa_est = None
        doa_err = None
        if geometry == "optimized":

            def ssl_stage():
                nonlocal doa_est, doa_err
                noise_scan = (
                    TimeSignal(g * field_scan.samples, speech_scan.sample_rate)
                    if field_scan is not None
                    else TimeSignal(
                        np.zeros_like(speech_scan.samples), speech_scan.sample_rate
                    )
                )
                mixture_scan = TimeSignal(
                    speech_scan.samples + noise_scan.samples, speech_scan.sample_rate
                )
                y = stft(mixture_scan)
                mask = provider.mask_for(y, stft(speech_scan), stft(noise_scan))
                est = estimate_doa(
                    y, mask, scan_mics,
                    grid=DoaGrid.azimuth_ring(scenario.ssl_grid_res),
                )
                doa_est = float(est.summary_deg)
                doa_err = abs(float(circ_diff_deg(doa_est, scenario.speech_doa)))
                return {
                    "azimuth_deg": doa_est,
                    "error_deg": doa_err,
                    "n_frames": int(len(est.per_frame_deg)),
                    "resolution_deg": float(est.resolution),
                }

            _run_stage(stages, "ssl_estimate", ssl_stage)

            def target_stage():
                observed = TargetOracle(scenario.target_noise_std).observe(
                    spos, _rng(scenario.seed, _TARGET_SALT)
                )
                # azimuth from localization, range and height from the
                # target observation
                r_xy = float(np.hypot(observed[0], observed[1]))
                az = np.radians(doa_est)
                fused = np.array(
                    [r_xy * np.cos(az), r_xy * np.sin(az), observed[2]]
                )
                return {"observed": observed.tolist(), "target": fused.tolist()}

            target_detail = _run_stage(stages, "target_position", target_stage)

            def ik_stage():
                nonlocal ik
                ik = listening_config(
                    chain,
                    doa_est,
                    np.asarray(target_detail["target"]),
                    standoff=scenario.standoff,
                )
                return {
                    "q": ik.q.tolist(),
                    "converged": bool(ik.converged),
                    "pos_error": float(ik.pos_error),
                    "axis_error_deg": float(ik.axis_error_deg),
                    "iterations": int(ik.iterations),
                }

            _run_stage(stages, "joint_config", ik_stage)

        enhanced = None
        mixture = None
        speech_img = None
        ref_channel = None

        def enhancement_stage():
            nonlocal enhanced, mixture, speech_img, ref_channel
            mics = _listening_positions(
                chain, geometry, ik.q if ik is not None else None
            )
            speech_img = propagate(src_speech, mics)
            if src_noise is not None:
                salt = _LISTEN_FIELD_SALT + GEOMETRIES.index(geometry)
                noise_img = TimeSignal(
                    g * render_noise_field(
                        src_noise, mics, _rng(scenario.seed, salt)
                    ).samples,
                    speech_img.sample_rate,
                )
            else:
                noise_img = TimeSignal(
                    np.zeros_like(speech_img.samples), speech_img.sample_rate
                )
            mixture = TimeSignal(
                speech_img.samples + noise_img.samples, speech_img.sample_rate
            )
            y = stft(mixture)
            mask = provider.mask_for(y, stft(speech_img), stft(noise_img))
            selector = (
                reference
                if reference is not None
                else ReferenceSelector.fixed(mics.shape[0])
            )
            sweep_scores = None
            if selector.mode == "sweep":
                if src_noise is None:
                    raise ValueError(
                        "reference sweep needs a noise source; a noiseless "
                        "scene scores every channel at the cap"
                    )

                def metric(enh_spec, ch):
                    est = istft(enh_spec, length=mixture.n_samples)
                    return si_sdr(est.channel(0), speech_img.channel(ch - 1))

                sweep = reference_sweep(y, mask, metric)
                ref_channel = sweep.best
                sweep_scores = sweep.scores.tolist()
            else:
                ref_channel = selector.channel
            scm = batch_scm(y, mask)
            weights = mvdr_weights(
                scm,
                ref_channel,
                max_degenerate_fraction=None if src_noise is None else 0.5,
            )
            enhanced = istft(apply_beamformer(y, weights), length=mixture.n_samples)
            detail = {
                "ref_channel": int(ref_channel),
                "n_channels": int(mics.shape[0]),
                "noise_gain": float(g),
            }
            if sweep_scores is not None:
                detail["sweep_scores"] = sweep_scores
            return detail

        _run_stage(stages, "enhancement_output", enhancement_stage)

        def metrics_stage():
            clean_ref = speech_img.channel(ref_channel - 1)
            si_in = si_sdr(mixture.channel(ref_channel - 1), clean_ref)
            si_out = si_sdr(enhanced.channel(0), clean_ref)
            row = ScenarioResult(
                geometry=geometry,
                snr_db=float(scenario.snr_db),
                speech_doa=float(scenario.speech_doa),
                noise_doa=float(scenario.noise_doa),
                noise_kind=scenario.noise_kind,
                seed=int(scenario.seed),
                duration=float(scenario.duration),
                si_sdr_in=si_in,
                si_sdr_out=si_out,
                ref_channel=int(ref_channel),
                doa_true=float(scenario.speech_doa) if doa_est is not None else None,
                doa_est=doa_est,
                doa_err_deg=doa_err,
                ik_converged=bool(ik.converged) if ik is not None else None,
                ik_pos_error=float(ik.pos_error) if ik is not None else None,
            )
            run.row = row
            return {"si_sdr_in": si_in, "si_sdr_out": si_out}

        _run_stage(stages, "metrics", metrics_stage)
        run.mixture = mixture
        run.enhanced = enhanced
        run.clean = speech_img
    except _StageFailed:
        pass
    return run


@dataclass
class ExperimentGrid:
    """Cross product of scene conditions for the comparative experiment."""

    speech_doas: tuple
    noise_doas: tuple
    noise_kinds: tuple
    snr_levels: tuple
    geometries: tuple = GEOMETRIES
    seeds: tuple = (0,)
    duration: float = 2.0
    scenario_kwargs: dict = field(default_factory=dict)

    def __post_init__(self):
        for name in (
            "speech_doas", "noise_doas", "noise_kinds", "snr_levels",
            "geometries", "seeds",
        ):
            values = tuple(getattr(self, name))
            if not values:
                raise ValueError(f"grid axis {name} is empty")
            setattr(self, name, values)
        unknown = set(self.geometries) - set(GEOMETRIES)
        if unknown:
            raise ValueError(f"unknown geometries {sorted(unknown)}")

    @property
    def n_cells(self) -> int:
        return (
            len(self.speech_doas) * len(self.noise_doas) * len(self.noise_kinds)
            * len(self.snr_levels) * len(self.geometries) * len(self.seeds)
        )

    def cells(self):
        """Scenarios in canonical axis order (independent of insertion)."""
        for az, naz, kind, snr, seed, geom in itertools.product(
            self.speech_doas, self.noise_doas, self.noise_kinds,
            self.snr_levels, self.seeds, self.geometries,
        ):
            yield Scenario(
                speech_doa=float(az),
                noise_doa=float(naz),
                noise_kind=str(kind),
                snr_db=float(snr),
                array_config=str(geom),
                seed=int(seed),
                duration=float(self.duration),
                **self.scenario_kwargs,
            )

    @classmethod
    def from_mapping(cls, raw: dict) -> "ExperimentGrid":
        data = dict(raw)
        kwargs = {}
        for name, key in (
            ("speech_doas", "speech_doas"),
            ("noise_doas", "noise_doas"),
            ("noise_kinds", "noise_kinds"),
            ("snr_levels", "snr_levels"),
            ("geometries", "geometries"),
            ("seeds", "seeds"),
        ):
            if key in data:
                kwargs[name] = tuple(data.pop(key))
        if "duration" in data:
            kwargs["duration"] = float(data.pop("duration"))
        scenario_kwargs = data.pop("scenario", {}) or {}
        if data:
            raise ValueError(f"unknown grid keys {sorted(data)}")
        return cls(scenario_kwargs=dict(scenario_kwargs), **kwargs)

    @classmethod
    def from_file(cls, path) -> "ExperimentGrid":
        with open(path) as fh:
            raw = yaml.safe_load(fh)
        if not isinstance(raw, dict):
            raise ValueError(f"{path}: grid config must be a mapping")
        return cls.from_mapping(raw)


def run_grid(
    grid: ExperimentGrid,
    chain: KinematicChain | None = None,
    mask_provider: MaskProvider | None = None,
    reference: ReferenceSelector | None = None,
    progress=None,
) -> EvalReport:
    """Run every cell of the grid and gather rows into one report.

    Cells are independent; a failing cell is recorded in the report's
    `failures` list (scenario conditions plus the failing stage) and the
    sweep continues.  `progress`, when given, is called as
    progress(i, n_cells, scenario) before each cell.
    """
    chain = chain if chain is not None else KinematicChain.default()
    report = EvalReport()
    n = grid.n_cells
    for i, scenario in enumerate(grid.cells()):
        if progress is not None:
            progress(i, n, scenario)
        try:
            run = run_pipeline(
                scenario, chain=chain, mask_provider=mask_provider,
                reference=reference,
            )
            stage = error = None
            if run.row is None:
                bad = [rec for rec in run.stages if not rec.ok]
                stage = bad[0].name if bad else "unknown"
                error = bad[0].error if bad else "no row produced"
        except Exception as exc:  # noqa: BLE001
            run = None
            stage = "setup"
            error = f"{type(exc).__name__}: {exc}"
        if run is not None and run.row is not None:
            report.add(run.row)
        else:
            report.failures.append(
                {
                    "scenario": {
                        "speech_doa": scenario.speech_doa,
                        "noise_doa": scenario.noise_doa,
                        "noise_kind": scenario.noise_kind,
                        "snr_db": scenario.snr_db,
                        "array_config": scenario.array_config,
                        "seed": scenario.seed,
                    },
                    "stage": stage,
                    "error": error,
                }
            )
    return report
