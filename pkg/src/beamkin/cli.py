"""Command-line front end.

Subcommands mirror the library surface: `run` executes one scenario end to
end, `grid` sweeps an experiment grid into report files, `ssl` prints a
localization track, `enhance` beamforms a scenario or a WAV+mask pair,
`pose` solves or evaluates arm configurations, and `report` re-aggregates
a rows CSV.  Relative config paths are also searched in the directory
named by the BEAMKIN_CONFIG_DIR environment variable.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from .audio import TimeSignal, istft, read_wav, stft, write_wav
from .beamform import ReferenceSelector, apply_beamformer, batch_scm, mvdr_weights
from .kinematics import KinematicChain, forward_kinematics, listening_config
from .masking import load_mask
from .metrics import EvalReport, si_sdr
from .pipeline import GEOMETRIES, ExperimentGrid, run_grid, run_pipeline
from .scene import Scenario, load_scenario
from .ssl import DEFAULT_ALPHA, DEFAULT_SUBSET, DoaGrid, estimate_doa

CONFIG_DIR_ENV = "BEAMKIN_CONFIG_DIR"


def _resolve_config(path: str) -> str:
    """Return `path`, falling back to $BEAMKIN_CONFIG_DIR/path."""
    if os.path.exists(path):
        return path
    base = os.environ.get(CONFIG_DIR_ENV)
    if base and not os.path.isabs(path):
        candidate = os.path.join(base, path)
        if os.path.exists(candidate):
            return candidate
    return path


def _load_scenario(path: str) -> Scenario:
    return load_scenario(_resolve_config(path))


def _reference_from_args(args) -> ReferenceSelector | None:
    if getattr(args, "ref_sweep", False):
        return ReferenceSelector.sweep()
    if getattr(args, "ref", None) is not None:
        return ReferenceSelector.fixed(args.ref)
    return None


def _chain_from_args(args) -> KinematicChain:
    if getattr(args, "chain", None):
        return KinematicChain.from_file(_resolve_config(args.chain))
    return KinematicChain.default()


def _print_run(run) -> None:
    for rec in run.stages:
        status = "ok" if rec.ok else f"FAILED ({rec.error})"
        print(f"stage {rec.name}: {status}")
        for key, value in rec.detail.items():
            if isinstance(value, float):
                print(f"  {key} = {value:.4f}")
            elif isinstance(value, list) and len(value) > 8:
                print(f"  {key} = [{len(value)} values]")
            else:
                print(f"  {key} = {value}")
    if run.row is not None:
        r = run.row
        print(
            f"result geometry={r.geometry} snr={r.snr_db:g} dB "
            f"si_sdr_in={r.si_sdr_in:.2f} si_sdr_out={r.si_sdr_out:.2f} "
            f"ref_channel={r.ref_channel}"
        )


def _write_run_audio(run, out_dir: Path) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    if run.mixture is not None:
        write_wav(out_dir / "mixture.wav", run.mixture)
    if run.enhanced is not None:
        write_wav(out_dir / "enhanced.wav", run.enhanced)
    if run.clean is not None:
        write_wav(out_dir / "clean.wav", run.clean)
    payload = {
        "stages": [
            {"name": s.name, "ok": s.ok, "error": s.error, "detail": s.detail}
            for s in run.stages
        ],
    }
    if run.row is not None:
        payload["row"] = {
            name: getattr(run.row, name) for name in type(run.row).FIELDS
        }
    with open(out_dir / "run.json", "w") as fh:
        json.dump(payload, fh, indent=2)


def _cmd_run(args) -> int:
    scenario = _load_scenario(args.scenario)
    run = run_pipeline(
        scenario, chain=_chain_from_args(args), reference=_reference_from_args(args)
    )
    _print_run(run)
    if args.out:
        _write_run_audio(run, Path(args.out))
        print(f"wrote audio and run.json to {args.out}")
    return 1 if run.failed else 0


def _cmd_grid(args) -> int:
    grid = ExperimentGrid.from_file(_resolve_config(args.config))
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)

    def progress(i, n, scenario):
        if args.verbose:
            print(
                f"[{i + 1}/{n}] {scenario.array_config} az={scenario.speech_doa:g} "
                f"naz={scenario.noise_doa:g} {scenario.noise_kind} "
                f"snr={scenario.snr_db:g}",
                file=sys.stderr,
            )

    report = run_grid(grid, chain=_chain_from_args(args), progress=progress)
    report.write_rows_csv(out_dir / "rows.csv")
    report.write_pivot_csv(out_dir / "pivot.csv")
    report.write_summary_json(out_dir / "summary.json")
    print(json.dumps(report.summary(), indent=2))
    if report.failures:
        print(f"{len(report.failures)} cells failed:", file=sys.stderr)
        for item in report.failures:
            print(f"  {item}", file=sys.stderr)
    print(f"wrote rows.csv, pivot.csv, summary.json to {args.out}")
    return 1 if report.failures else 0


def _positions_from_file(path: str) -> np.ndarray:
    import yaml

    with open(_resolve_config(path)) as fh:
        raw = yaml.safe_load(fh)
    positions = np.asarray(raw, dtype=np.float64)
    if positions.ndim != 2 or positions.shape[1] != 3:
        raise ValueError(f"{path}: expected a list of [x, y, z] rows")
    return positions


def _cmd_ssl(args) -> int:
    subset = (
        tuple(int(s) for s in args.subset.split(","))
        if args.subset
        else DEFAULT_SUBSET
    )
    grid = DoaGrid.azimuth_ring(args.grid_res)
    if args.wav:
        if not args.mask or not args.positions:
            raise SystemExit("--wav mode needs --mask and --positions")
        mixture = read_wav(args.wav)
        spec = stft(mixture)
        mask = load_mask(args.mask)
        mics = _positions_from_file(args.positions)
        est = estimate_doa(spec, mask, mics, subset=subset, grid=grid,
                           alpha=args.alpha)
        true_az = None
    else:
        if not args.scenario:
            raise SystemExit("give --scenario or --wav")
        scenario = _load_scenario(args.scenario)
        run = run_pipeline(
            Scenario(
                **{
                    **{f: getattr(scenario, f) for f in (
                        "speech_doa", "noise_doa", "snr_db", "noise_kind",
                        "seed", "duration", "sample_rate", "source_distance",
                        "source_height", "speech_wav", "noise_wav",
                        "target_noise_std", "standoff",
                    )},
                    "array_config": "optimized",
                    "ssl_grid_res": args.grid_res,
                }
            ),
            chain=_chain_from_args(args),
        )
        rec = run.stage("ssl_estimate")
        if not rec.ok:
            print(f"ssl stage failed: {rec.error}", file=sys.stderr)
            return 1
        print(f"azimuth {rec.detail['azimuth_deg']:.1f} deg "
              f"(true {scenario.speech_doa:.1f}, "
              f"error {rec.detail['error_deg']:.1f})")
        return 0
    for t, az in enumerate(est.per_frame_deg):
        print(f"frame {t:4d}  azimuth {az:7.1f}")
    print(f"median {est.summary_deg:.1f} deg over {len(est.per_frame_deg)} frames")
    return 0


def _cmd_enhance(args) -> int:
    if args.wav:
        if not args.mask:
            raise SystemExit("--wav mode needs --mask")
        mixture = read_wav(args.wav)
        spec = stft(mixture)
        mask = load_mask(args.mask)
        ref = args.ref if args.ref is not None else mixture.n_channels
        weights = mvdr_weights(batch_scm(spec, mask), ref)
        enhanced = istft(apply_beamformer(spec, weights), length=mixture.n_samples)
        out = args.out or "enhanced.wav"
        write_wav(out, enhanced)
        print(f"wrote {out} (reference channel {ref})")
        return 0
    if not args.scenario:
        raise SystemExit("give --scenario or --wav")
    scenario = _load_scenario(args.scenario)
    run = run_pipeline(
        scenario, chain=_chain_from_args(args), reference=_reference_from_args(args)
    )
    _print_run(run)
    out_dir = Path(args.out) if args.out else Path("enhance_out")
    _write_run_audio(run, out_dir)
    print(f"wrote audio to {out_dir}")
    return 1 if run.failed else 0


def _cmd_pose(args) -> int:
    chain = _chain_from_args(args)
    if args.q:
        q = np.array([float(v) for v in args.q.split(",")])
        fk = forward_kinematics(chain, q)
        print(f"ee position {np.round(fk.ee_position, 4).tolist()}")
        print(f"ee axis     {np.round(fk.ee_axis, 4).tolist()}")
        for k, p in enumerate(fk.mic_positions):
            print(f"mic {k:2d}  {np.round(p, 4).tolist()}")
        return 0
    az = args.azimuth
    target = np.array([
        args.distance * np.cos(np.radians(az)),
        args.distance * np.sin(np.radians(az)),
        args.height,
    ])
    ik = listening_config(chain, az, target, standoff=args.standoff)
    fk = forward_kinematics(chain, ik.q)
    print(f"q           {np.round(ik.q, 4).tolist()}")
    print(f"converged   {ik.converged}")
    print(f"pos_error   {ik.pos_error:.4f} m")
    print(f"axis_error  {ik.axis_error_deg:.2f} deg")
    print(f"iterations  {ik.iterations}")
    print(f"ee position {np.round(fk.ee_position, 4).tolist()}")
    return 0


def _cmd_report(args) -> int:
    report = EvalReport.from_rows_csv(_resolve_config(args.rows))
    print(json.dumps(report.summary(), indent=2))
    if args.out:
        out_dir = Path(args.out)
        out_dir.mkdir(parents=True, exist_ok=True)
        report.write_pivot_csv(out_dir / "pivot.csv")
        report.write_summary_json(out_dir / "summary.json")
        print(f"wrote pivot.csv and summary.json to {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="beamkin",
        description="Geometry-adaptive microphone-array enhancement simulator.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run one scenario end to end")
    p_run.add_argument("--scenario", required=True, help="scenario YAML file")
    p_run.add_argument("--out", help="directory for WAVs and run.json")
    p_run.add_argument("--chain", help="kinematic chain YAML")
    p_run.add_argument("--ref", type=int, help="fixed 1-based reference channel")
    p_run.add_argument("--ref-sweep", action="store_true",
                       help="pick the reference channel by SI-SDR sweep")
    p_run.set_defaults(fn=_cmd_run)

    p_grid = sub.add_parser("grid", help="run an experiment grid into reports")
    p_grid.add_argument("--config", required=True, help="grid YAML file")
    p_grid.add_argument("--out", required=True, help="output directory")
    p_grid.add_argument("--chain", help="kinematic chain YAML")
    p_grid.add_argument("--verbose", action="store_true",
                        help="print per-cell progress to stderr")
    p_grid.set_defaults(fn=_cmd_grid)

    p_ssl = sub.add_parser("ssl", help="print a localization estimate")
    p_ssl.add_argument("--scenario", help="scenario YAML file")
    p_ssl.add_argument("--wav", help="multichannel mixture WAV")
    p_ssl.add_argument("--mask", help=".npy mask for --wav mode")
    p_ssl.add_argument("--positions", help="YAML list of [x,y,z] mics for --wav mode")
    p_ssl.add_argument("--alpha", type=float, default=DEFAULT_ALPHA,
                       help="covariance adaptation rate")
    p_ssl.add_argument("--grid-res", type=float, default=1.0,
                       help="azimuth grid resolution in degrees")
    p_ssl.add_argument("--subset", help="comma-separated channel indices")
    p_ssl.add_argument("--chain", help="kinematic chain YAML")
    p_ssl.set_defaults(fn=_cmd_ssl)

    p_enh = sub.add_parser("enhance", help="beamform a scenario or WAV+mask")
    p_enh.add_argument("--scenario", help="scenario YAML file")
    p_enh.add_argument("--wav", help="multichannel mixture WAV")
    p_enh.add_argument("--mask", help=".npy mask for --wav mode")
    p_enh.add_argument("--ref", type=int, help="fixed 1-based reference channel")
    p_enh.add_argument("--ref-sweep", action="store_true",
                       help="pick the reference channel by SI-SDR sweep")
    p_enh.add_argument("--out", help="output WAV (file mode) or directory")
    p_enh.add_argument("--chain", help="kinematic chain YAML")
    p_enh.set_defaults(fn=_cmd_enhance)

    p_pose = sub.add_parser("pose", help="solve or evaluate arm configurations")
    p_pose.add_argument("--azimuth", type=float, help="target azimuth in degrees")
    p_pose.add_argument("--distance", type=float, default=1.0,
                        help="target distance in meters")
    p_pose.add_argument("--height", type=float, default=0.22,
                        help="target height in meters")
    p_pose.add_argument("--standoff", type=float, default=0.3,
                        help="end-effector standoff in meters")
    p_pose.add_argument("--q", help="comma-separated joint angles: print FK only")
    p_pose.add_argument("--chain", help="kinematic chain YAML")
    p_pose.set_defaults(fn=_cmd_pose)

    p_rep = sub.add_parser("report", help="re-aggregate a rows CSV")
    p_rep.add_argument("--rows", required=True, help="rows.csv from `grid`")
    p_rep.add_argument("--out", help="directory for pivot.csv and summary.json")
    p_rep.set_defaults(fn=_cmd_report)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "pose" and not args.q and args.azimuth is None:
        parser.error("pose needs --azimuth (IK) or --q (FK)")
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
