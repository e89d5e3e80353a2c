"""Command-line entry points, exercised through main(argv)."""

import json

import numpy as np
import pytest
import yaml

from beamkin.audio import TimeSignal, read_wav, stft, write_wav
from beamkin.cli import main
from beamkin.masking import TFMask, oracle_irm, save_mask
from beamkin.metrics import EvalReport, si_sdr
from beamkin.pipeline import STATIC4_POSITIONS
from beamkin.scene import (
    PointSource,
    azimuth_to_position,
    mix_at_snr,
    propagate,
    render_noise_field,
)
from beamkin.sources import machine_noise, speech_like
from conftest import make_rng

FS = 16000


def write_scenario(path, **kwargs):
    base = dict(
        speech_doa=40.0, noise_doa=110.0, snr_db=5.0, noise_kind="pump",
        array_config="static1", seed=0, duration=0.75,
    )
    base.update(kwargs)
    path.write_text(yaml.safe_dump(base))
    return path


def test_run_command_writes_audio_and_json(tmp_path, capsys):
    sc = write_scenario(tmp_path / "sc.yaml")
    out = tmp_path / "out"
    assert main(["run", "--scenario", str(sc), "--out", str(out)]) == 0
    stdout = capsys.readouterr().out
    assert "stage enhancement_output: ok" in stdout
    assert "result geometry=static1" in stdout
    for name in ("mixture.wav", "enhanced.wav", "clean.wav", "run.json"):
        assert (out / name).exists()
    payload = json.loads((out / "run.json").read_text())
    assert payload["row"]["geometry"] == "static1"
    assert [s["name"] for s in payload["stages"]] == [
        "enhancement_output", "metrics",
    ]
    enhanced = read_wav(out / "enhanced.wav")
    assert enhanced.n_channels == 1
    assert enhanced.n_samples == int(0.75 * FS)


def test_run_command_failure_exits_nonzero(tmp_path, capsys):
    sc = write_scenario(tmp_path / "sc.yaml", speech_wav=str(tmp_path / "missing.wav"))
    assert main(["run", "--scenario", str(sc)]) == 1
    assert "FAILED" in capsys.readouterr().out


def test_grid_and_report_commands(tmp_path, capsys):
    cfg = tmp_path / "grid.yaml"
    cfg.write_text(yaml.safe_dump({
        "speech_doas": [40.0],
        "noise_doas": [110.0],
        "noise_kinds": ["pump"],
        "snr_levels": [5.0],
        "geometries": ["static1", "static4"],
        "seeds": [0],
        "duration": 0.75,
    }))
    out = tmp_path / "report"
    assert main(["grid", "--config", str(cfg), "--out", str(out)]) == 0
    for name in ("rows.csv", "pivot.csv", "summary.json"):
        assert (out / name).exists()
    report = EvalReport.from_rows_csv(out / "rows.csv")
    assert len(report.rows) == 2
    assert report.geometries() == ["static1", "static4"]
    summary = json.loads((out / "summary.json").read_text())
    assert summary["n_rows"] == 2
    capsys.readouterr()

    out2 = tmp_path / "reagg"
    assert main(["report", "--rows", str(out / "rows.csv"), "--out", str(out2)]) == 0
    printed = json.loads(capsys.readouterr().out.split("wrote")[0])
    assert printed == summary
    assert (out2 / "pivot.csv").exists()
    assert (out2 / "summary.json").read_bytes() == (out / "summary.json").read_bytes()


def test_ssl_scenario_mode(tmp_path, capsys):
    sc = write_scenario(tmp_path / "sc.yaml", snr_db=10.0, duration=1.0)
    assert main(["ssl", "--scenario", str(sc)]) == 0
    line = capsys.readouterr().out
    assert line.startswith("azimuth")
    est = float(line.split()[1])
    assert abs(est - 40.0) <= 15.0


def test_ssl_wav_mode(tmp_path, capsys):
    # noiseless 90 deg mixture, all-ones mask: the scan recovers the grid point
    rng = make_rng(0)
    mics = np.concatenate([STATIC4_POSITIONS, STATIC4_POSITIONS + [0, 0, 0.1]])
    src = PointSource(
        position=azimuth_to_position(90.0, 1.5, 0.22),
        signal=TimeSignal(speech_like(0.5, FS, rng)),
    )
    mixture = propagate(src, mics)
    wav = tmp_path / "mix.wav"
    write_wav(wav, mixture)
    spec = stft(mixture)
    mask_path = tmp_path / "mask.npy"
    save_mask(mask_path, TFMask(values=np.ones(spec.data.shape)))
    pos_path = tmp_path / "mics.yaml"
    pos_path.write_text(yaml.safe_dump(mics.tolist()))
    assert main([
        "ssl", "--wav", str(wav), "--mask", str(mask_path),
        "--positions", str(pos_path), "--subset", "0,1,2,3,4,5,6,7",
    ]) == 0
    out = capsys.readouterr().out
    median_line = [l for l in out.splitlines() if l.startswith("median")][0]
    assert float(median_line.split()[1]) == pytest.approx(90.0, abs=2.0)


def test_ssl_wav_mode_needs_mask_and_positions(tmp_path):
    with pytest.raises(SystemExit):
        main(["ssl", "--wav", str(tmp_path / "x.wav")])
    with pytest.raises(SystemExit):
        main(["ssl"])


def test_enhance_wav_mode(tmp_path, capsys):
    rng = make_rng(1)
    speech = PointSource(
        position=azimuth_to_position(40.0, 1.5, 0.22),
        signal=TimeSignal(speech_like(0.992, FS, rng)),
    )
    noise = PointSource(
        position=azimuth_to_position(110.0, 1.5, 0.22),
        signal=TimeSignal(machine_noise("pump", 0.992, FS, rng)),
        kind="noise",
    )
    s_img = propagate(speech, STATIC4_POSITIONS)
    n_img = render_noise_field(noise, STATIC4_POSITIONS, make_rng(2))
    mixture, g = mix_at_snr(s_img, n_img, 5.0)
    wav = tmp_path / "mix.wav"
    write_wav(wav, mixture)
    mask = oracle_irm(stft(s_img), stft(TimeSignal(g * n_img.samples)))
    mask_path = tmp_path / "mask.npy"
    save_mask(mask_path, mask)
    out = tmp_path / "enh.wav"
    assert main([
        "enhance", "--wav", str(wav), "--mask", str(mask_path),
        "--ref", "4", "--out", str(out),
    ]) == 0
    assert "reference channel 4" in capsys.readouterr().out
    enhanced = read_wav(out)
    assert enhanced.n_channels == 1
    assert enhanced.n_samples == mixture.n_samples
    clean = s_img.channel(3)
    assert si_sdr(enhanced.channel(0), clean) > si_sdr(mixture.channel(3), clean)


def test_enhance_scenario_mode(tmp_path, capsys):
    sc = write_scenario(tmp_path / "sc.yaml", array_config="static4")
    out = tmp_path / "enh"
    assert main(["enhance", "--scenario", str(sc), "--out", str(out)]) == 0
    assert (out / "enhanced.wav").exists()
    with pytest.raises(SystemExit):
        main(["enhance"])
    with pytest.raises(SystemExit):
        main(["enhance", "--wav", str(tmp_path / "mix.wav")])


def test_pose_fk_mode(capsys):
    assert main(["pose", "--q", "0,0,0,0,0,0,0"]) == 0
    out = capsys.readouterr().out
    assert "ee position [0.0, 0.0, 1.2]" in out
    assert "mic 15" in out


def test_pose_ik_mode(capsys):
    assert main(["pose", "--azimuth", "45", "--distance", "1.0"]) == 0
    out = capsys.readouterr().out
    assert "converged   True" in out
    assert "pos_error" in out


def test_pose_needs_a_mode():
    with pytest.raises(SystemExit):
        main(["pose"])


def test_pose_with_custom_chain(tmp_path, capsys):
    path = tmp_path / "mini.yaml"
    path.write_text(yaml.safe_dump({
        "joints": [
            {"translation": [0, 0, 0.5], "axis": [0, 0, 1], "limits": [-3.0, 3.0]}
        ],
        "mounts": [{"link": 1, "translation": [0, 0, 0],
                    "mics": [[0.1, 0.0, 0.0]]}],
        "ee_offset": [0, 0, 0.1],
    }))
    assert main(["pose", "--q", "0", "--chain", str(path)]) == 0
    out = capsys.readouterr().out
    assert "ee position [0.0, 0.0, 0.6]" in out
    assert "mic  0  [0.1, 0.0, 0.5]" in out


def test_config_dir_env_resolution(tmp_path, monkeypatch, capsys):
    cfg_dir = tmp_path / "configs"
    cfg_dir.mkdir()
    write_scenario(cfg_dir / "sc.yaml")
    elsewhere = tmp_path / "elsewhere"
    elsewhere.mkdir()
    monkeypatch.chdir(elsewhere)
    monkeypatch.setenv("BEAMKIN_CONFIG_DIR", str(cfg_dir))
    assert main(["run", "--scenario", "sc.yaml"]) == 0
    assert "result geometry=static1" in capsys.readouterr().out
