import hashlib
import json
import shutil
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from otoclab.campaign import (
    _compute_otoc_unitary,
    _Journal,
    run_entropy_campaign,
    run_otoc_campaign,
    simulate_campaign,
)
from otoclab.cli import main
from otoclab.config import (
    CampaignConfig,
    EntropyCampaignConfig,
    campaign_config_to_json,
    config_digest,
)
from otoclab.dataset import OTOC_CSV, MeasurementDataset, format_records_for_unitary
from otoclab.noise import NoiseSpec
from otoclab.spin import HamiltonianSpec
from otoclab.analysis import simulate_quench

SPEC = HamiltonianSpec.from_hz(4, 30.0, 1.2, 1500.0, double_count_pairs=True)


def make_config(tmp_path, **kwargs):
    defaults = dict(
        hamiltonian=SPEC,
        times=(0.0, 1e-3, 2e-3),
        n_unitaries=8,
        order=1,
        n_shots=25,
        noise=NoiseSpec(),
        seed=12,
        output_dir=str(tmp_path / "run"),
    )
    defaults.update(kwargs)
    return CampaignConfig(**defaults)


def file_hash(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


# --- determinism and resume --------------------------------------------------------


def test_campaign_deterministic_across_workers(tmp_path):
    config = make_config(tmp_path)
    run_otoc_campaign(config, workers=1)
    hashes1 = {p.name: file_hash(p) for p in sorted(Path(config.output_dir).iterdir())}
    shutil.rmtree(config.output_dir)
    run_otoc_campaign(config, workers=3)
    hashes2 = {p.name: file_hash(p) for p in sorted(Path(config.output_dir).iterdir())}
    assert hashes1 == hashes2


def test_campaign_resume_matches_uninterrupted(tmp_path):
    config = make_config(tmp_path)
    run_otoc_campaign(config)
    clean = file_hash(Path(config.output_dir) / OTOC_CSV)
    shutil.rmtree(config.output_dir)

    out = Path(config.output_dir)
    out.mkdir(parents=True)
    journal = _Journal(out, config, OTOC_CSV, "dataset.meta.json")
    journal.verify_or_create(resume=False)
    n_shots = np.asarray([config.n_shots_at(t) for t in config.times])
    for u in (0, 2, 5):
        u_idx, plain, v = _compute_otoc_unitary(config, u)
        journal.append(format_records_for_unitary(config, u_idx, plain, v, n_shots))
    # a truncated block from an interrupted write is dropped on resume
    u_idx, plain, v = _compute_otoc_unitary(config, 7)
    journal.append(format_records_for_unitary(config, u_idx, plain, v, n_shots)[:3])

    run_otoc_campaign(config, resume=True)
    assert file_hash(out / OTOC_CSV) == clean
    assert not (out / (OTOC_CSV + ".partial")).exists()


def test_campaign_refuses_unrelated_resume(tmp_path):
    config = make_config(tmp_path)
    out = Path(config.output_dir)
    out.mkdir(parents=True)
    journal = _Journal(out, config, OTOC_CSV, "dataset.meta.json")
    journal.verify_or_create(resume=False)
    other = make_config(tmp_path, seed=999)
    from otoclab.dataset import DatasetError

    with pytest.raises(DatasetError):
        run_otoc_campaign(other, resume=True)
    with pytest.raises(DatasetError):
        run_otoc_campaign(config, resume=False)  # journal present, resume not requested


def test_simulate_matches_run(tmp_path):
    config = make_config(tmp_path)
    in_memory = simulate_campaign(config)
    result = run_otoc_campaign(config)
    assert np.array_equal(in_memory.plain, result.dataset.plain)
    assert np.array_equal(in_memory.v_applied, result.dataset.v_applied)
    back = MeasurementDataset.load(config.output_dir)
    assert np.array_equal(back.plain, in_memory.plain)


def test_exact_mode_campaign_records_zero_shots(tmp_path):
    config = make_config(tmp_path, exact_expectations=True, noise=None)
    data = simulate_campaign(config)
    assert np.array_equal(data.n_shots_per_time, [0, 0, 0])
    assert np.max(np.abs(data.plain)) <= 1.0 + 1e-12


def test_entropy_campaign_deterministic(tmp_path):
    config = EntropyCampaignConfig(
        hamiltonian=SPEC,
        times=(0.0, 2e-3),
        n_unitaries=6,
        n_shots=12,
        noise=NoiseSpec(),
        seed=4,
        output_dir=str(tmp_path / "ent"),
    )
    run_entropy_campaign(config, workers=1)
    h1 = file_hash(Path(config.output_dir) / "bitstrings.csv")
    shutil.rmtree(config.output_dir)
    run_entropy_campaign(config, workers=2)
    assert file_hash(Path(config.output_dir) / "bitstrings.csv") == h1


def test_outputs_embed_config(tmp_path):
    config = make_config(tmp_path)
    result = run_otoc_campaign(config)
    for name in ("dataset.csv", f"otoc_series_n{config.order}.csv"):
        head = (result.output_dir / name).read_text().splitlines()[:2]
        assert head[0].startswith("# otoclab")
        assert config_digest(config) in head[0]
        assert json.loads(head[1].removeprefix("# config ")) == campaign_config_to_json(config)
    summary = json.loads((result.output_dir / "summary.json").read_text())
    assert summary["config"] == campaign_config_to_json(config)
    assert summary["package_version"]


# --- CLI ---------------------------------------------------------------------------------


def write_cli_config(tmp_path) -> Path:
    path = tmp_path / "cfg.json"
    obj = campaign_config_to_json(make_config(tmp_path, n_unitaries=5, n_shots=10))
    path.write_text(json.dumps(obj))
    return path


def test_cli_run_and_analyze(tmp_path, capsys):
    cfg = write_cli_config(tmp_path)
    assert main(["run", "--config", str(cfg)]) == 0
    out_dir = str(tmp_path / "run")
    assert main([
        "analyze", "--dataset", out_dir, "--orders", "0,1",
        "--second-moment", "--convergence", "--convergence-site", "2",
    ]) == 0
    captured = capsys.readouterr().out
    assert "order 0" in captured
    assert (Path(out_dir) / "otoc_series_n0.csv").exists()
    assert (Path(out_dir) / "second_moment.csv").exists()
    assert (Path(out_dir) / "convergence.csv").exists()


def test_cli_entropy(tmp_path):
    cfg_obj = {
        "kind": "entropy",
        "hamiltonian": {"n_spins": 3, "j0_hz": 30.0, "alpha": 1.2, "b_field_hz": 1500.0},
        "times_s": [0.0],
        "n_unitaries": 4,
        "n_shots": 8,
        "seed": 3,
        "output_dir": str(tmp_path / "ent"),
    }
    cfg = tmp_path / "ent.json"
    cfg.write_text(json.dumps(cfg_obj))
    assert main(["entropy", "--config", str(cfg)]) == 0
    assert (tmp_path / "ent" / "entropy_table.csv").exists()


def test_cli_exit_codes(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert main(["run", "--config", str(bad)]) == 2
    missing_kind = tmp_path / "wrongkind.json"
    missing_kind.write_text(json.dumps({"kind": "entropy", "hamiltonian": {
        "n_spins": 2, "j0_hz": 1.0, "alpha": 1.0, "b_field_hz": 0.0},
        "times_s": [0.0], "n_unitaries": 2}))
    assert main(["run", "--config", str(missing_kind)]) == 2
    assert main(["analyze", "--dataset", str(tmp_path / "nope")]) == 3


def test_cli_ramsey(tmp_path, capsys):
    out = tmp_path / "ramsey.csv"
    code = main([
        "ramsey", "--t-max-s", "0.006", "--t-step-s", "0.0005",
        "--samples", "400", "--seed", "1", "--out", str(out),
    ])
    assert code == 0
    assert out.exists()
    assert "revival" in capsys.readouterr().out


def test_cli_calibrate(tmp_path, capsys):
    times = np.linspace(0.0, 5e-3, 9)
    observed = simulate_quench(
        HamiltonianSpec.from_hz(4, 33.0, 1.1, 1500.0, double_count_pairs=True),
        times, flip_site=2,
    )
    lines = ["time_s,site,sz"]
    for ti, t in enumerate(times):
        for j in range(1, 5):
            lines.append(f"{float(t)!r},{j},{float(observed[ti, j - 1])!r}")
    obs_path = tmp_path / "obs.csv"
    obs_path.write_text("\n".join(lines))
    out_path = tmp_path / "fit.json"
    code = main([
        "calibrate", "--observations", str(obs_path), "--n-spins", "4",
        "--b-field-hz", "1500.0", "--flip-site", "2",
        "--j0-guess-hz", "25.0", "--alpha-guess", "0.9",
        "--double-count-pairs", "--out", str(out_path),
    ])
    assert code == 0
    fit = json.loads(out_path.read_text())
    assert fit["j0_hz"] == pytest.approx(33.0, rel=0.01)
    assert fit["alpha"] == pytest.approx(1.1, rel=0.01)


def test_cli_module_entry_point(tmp_path):
    cfg = write_cli_config(tmp_path)
    proc = subprocess.run(
        [sys.executable, "-m", "otoclab", "run", "--config", str(cfg), "--seed", "77",
         "--output-dir", str(tmp_path / "viacli")],
        capture_output=True, text=True,
    )
    assert proc.returncode == 0, proc.stderr
    assert (tmp_path / "viacli" / "dataset.csv").exists()
