"""Time the compiled scan kernel against the pure-NumPy fallback.

Both backends walk the identical whitened-SRP scan (same covariance
updates, same steering tables), so the measured gap is the per-frame
grid scan itself.  Run from the repo root:

    python3 benchmarks/bench_srp_backends.py [--repeats 5] [--duration 1.0]
"""

import argparse
import time

import numpy as np

from beamkin.audio import TimeSignal, stft
from beamkin.kinematics import KinematicChain, forward_kinematics
from beamkin.masking import oracle_irm
from beamkin.pipeline import SCAN_CONFIG
from beamkin.scene import (
    PointSource,
    azimuth_to_position,
    mix_at_snr,
    propagate,
    render_noise_field,
)
from beamkin.sources import machine_noise, speech_like
from beamkin.ssl import active_backend, estimate_doa


def build_case(duration: float):
    fs = 16000
    chain = KinematicChain.default()
    mics = forward_kinematics(chain, chain.named_configs[SCAN_CONFIG]).mic_positions
    seq = np.random.SeedSequence([9100])
    r_sig, r_field = map(np.random.default_rng, seq.spawn(2))
    speech = PointSource(
        position=azimuth_to_position(40.0, 1.5, 0.22),
        signal=TimeSignal(speech_like(duration, fs, r_sig)),
    )
    noise = PointSource(
        position=azimuth_to_position(110.0, 1.5, 0.22),
        signal=TimeSignal(machine_noise("pump", duration, fs, r_sig)),
        kind="noise",
    )
    s_img = propagate(speech, mics)
    n_img = render_noise_field(noise, mics, r_field)
    mixture, g = mix_at_snr(s_img, n_img, 5.0)
    mask = oracle_irm(stft(s_img), stft(TimeSignal(g * n_img.samples)))
    return stft(mixture), mask, mics


def time_backend(spec, mask, mics, subset, backend, repeats):
    best = np.inf
    summary = None
    for _ in range(repeats):
        t0 = time.perf_counter()
        est = estimate_doa(spec, mask, mics, subset=subset, backend=backend)
        best = min(best, time.perf_counter() - t0)
        summary = est.summary_deg
    return best, summary


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeats", type=int, default=5,
                        help="timing repeats per backend (best is reported)")
    parser.add_argument("--duration", type=float, default=1.0,
                        help="scene length in seconds")
    args = parser.parse_args()

    spec, mask, mics = build_case(args.duration)
    print(f"scene: {spec.n_frames} frames, default backend = {active_backend()}")
    print(f"{'subset':>8} {'kernel':>12} {'numpy':>12} {'speedup':>9}")
    for k in (4, 8, 16):
        subset = tuple(range(k))
        t_kernel, az_k = time_backend(spec, mask, mics, subset, "kernel",
                                      args.repeats)
        t_numpy, az_n = time_backend(spec, mask, mics, subset, "numpy",
                                     args.repeats)
        agree = "" if az_k == az_n else "  (summaries differ!)"
        print(f"{k:>7}m {t_kernel * 1e3:>10.1f}ms {t_numpy * 1e3:>10.1f}ms "
              f"{t_numpy / t_kernel:>8.2f}x{agree}")


if __name__ == "__main__":
    main()
