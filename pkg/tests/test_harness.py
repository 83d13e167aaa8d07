"""Experiment orchestration tests: config parsing, loop contracts, trace
consistency, plot-data export, and the CLI."""

import json

import numpy as np
import pytest

from arrayadapt import (AdaptParams, ConfigError, DataError,
                        ExperimentConfig, SourceConfig, config_from_dict,
                        emit_plot_data, load_config,
                        run_adaptation_experiment, run_spacing_sweep)
from arrayadapt.cli import main
from arrayadapt.harness import TRACE_HEADER


def fast_config(**overrides):
    """Small but structurally complete experiment: 2.048 s segments."""
    defaults = dict(
        adapt=AdaptParams(segment_seconds=2.048),
        total_duration=2.048,
        sweep_repeats=1,
    )
    defaults.update(overrides)
    return ExperimentConfig(**defaults)


def test_config_defaults_valid():
    cfg = ExperimentConfig()
    assert cfg.d1 < cfg.d2
    assert len(cfg.sources) == 2


def test_config_swaps_reversed_spacings():
    with pytest.warns(UserWarning):
        cfg = ExperimentConfig(d1=0.30, d2=0.20)
    assert (cfg.d1, cfg.d2) == (0.20, 0.30)


def test_config_rejects_unknown_keys():
    with pytest.raises(ConfigError):
        config_from_dict({"d1": 0.1, "d2": 0.2, "bogus": 1})
    with pytest.raises(ConfigError):
        config_from_dict({"bss": {"nope": 3}})
    with pytest.raises(ConfigError):
        config_from_dict({"sources": [{"angle": 20}]})


def test_config_rejects_short_duration():
    with pytest.raises(ConfigError):
        ExperimentConfig(total_duration=1.0)


def test_load_config_json(tmp_path):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps({"seed": 5, "d1": 0.1, "d2": 0.3,
                                "adapt": {"segment_seconds": 2.048},
                                "total_duration": 2.048}))
    cfg = load_config(path)
    assert cfg.seed == 5 and cfg.d2 == 0.3
    bad = tmp_path / "bad.json"
    bad.write_text("{nope")
    with pytest.raises(ConfigError):
        load_config(bad)


def test_single_segment_run_contracts():
    cfg = fast_config()
    result = run_adaptation_experiment(cfg)
    assert len(result.iterations) == 1
    assert result.state.j == 1
    assert len(result.trace) == 4  # 2.048 s / 0.512 s blocks
    # exactly one spacing moved
    moved = (result.state.d1 != cfg.d1) + (result.state.d2 != cfg.d2)
    assert moved == 1
    assert result.audio.shape[0] == 2


def test_trace_consistency():
    cfg = fast_config(total_duration=3 * 2.048)
    result = run_adaptation_experiment(cfg)
    rows = result.trace
    assert len(rows) == 12
    for row in rows:
        expected = row.sir_mean1 if row.selected_output == 1 else row.sir_mean2
        assert row.sir_mean_out == expected
    # spacings constant within a geometry iteration
    for j in range(3):
        vals = {(r.d1, r.d2) for r in rows if r.j == j}
        assert len(vals) == 1


def test_run_is_deterministic(tmp_path):
    cfg = fast_config()
    run_adaptation_experiment(cfg, out_dir=tmp_path / "a")
    run_adaptation_experiment(cfg, out_dir=tmp_path / "b")
    a = (tmp_path / "a" / "trace.csv").read_bytes()
    b = (tmp_path / "b" / "trace.csv").read_bytes()
    assert a == b


def test_trace_csv_header(tmp_path):
    cfg = fast_config()
    result = run_adaptation_experiment(cfg, out_dir=tmp_path)
    lines = (tmp_path / "trace.csv").read_text().splitlines()
    assert lines[0] == TRACE_HEADER
    assert len(lines) == len(result.trace) + 1
    assert (tmp_path / "selected_output.wav").exists()


def test_anechoic_wide_separation_is_easy():
    cfg = fast_config(
        t60=0.0,
        total_duration=10.24,
        adapt=AdaptParams(segment_seconds=10.24),
        sources=(SourceConfig(signal="builtin:low", angle_deg=60.0),
                 SourceConfig(signal="builtin:high", angle_deg=-60.0)),
    )
    result = run_adaptation_experiment(cfg)
    it = result.iterations[0]
    assert it.f1 < 0.2 and it.f2 < 0.2
    assert it.sir_mean1 > 10.0 and it.sir_mean2 > 10.0


def test_sweep_rows_and_determinism():
    cfg = fast_config(sweep=(0.2,))
    rows = run_spacing_sweep(cfg)
    assert len(rows) == 1 and rows[0].spacing == 0.2
    cfg2 = fast_config(sweep=(0.2, 0.2))
    rows2 = run_spacing_sweep(cfg2)
    assert rows2[0] == rows2[1]
    assert rows2[0] == rows[0]
    with pytest.raises(ConfigError):
        run_spacing_sweep(fast_config())


def test_emit_plot_data(tmp_path):
    cfg = fast_config()
    result = run_adaptation_experiment(cfg)
    paths = emit_plot_data(result.trace, tmp_path)
    headers = ["time,msc1,msc2",
               "time,sir_mean1,sir_mean2,sir_mean_out,selected_output",
               "time,j,d1,d2"]
    for path, header in zip(paths, headers):
        lines = path.read_text().splitlines()
        assert lines[0] == header
        assert len(lines) == len(result.trace) + 1
    with pytest.raises(DataError):
        emit_plot_data([], tmp_path)


def _write_cfg(tmp_path, extra=None):
    data = {"adapt": {"segment_seconds": 2.048}, "total_duration": 2.048,
            "sweep": [0.2], "sweep_repeats": 1}
    data.update(extra or {})
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(data))
    return str(path)


def test_cli_run(tmp_path, capsys):
    cfg = _write_cfg(tmp_path)
    assert main(["run", cfg, "--out-dir", str(tmp_path / "out"), "--seed", "1"]) == 0
    assert (tmp_path / "out" / "trace.csv").exists()
    assert "final spacings" in capsys.readouterr().out


def test_cli_sweep(tmp_path, capsys):
    cfg = _write_cfg(tmp_path)
    assert main(["sweep", cfg, "--out-dir", str(tmp_path / "out")]) == 0
    assert (tmp_path / "out" / "sweep.csv").exists()
    assert "sir_mean" in capsys.readouterr().out


def test_cli_rir(tmp_path):
    cfg = _write_cfg(tmp_path)
    assert main(["rir", cfg, "--out-dir", str(tmp_path / "out")]) == 0
    data = np.loadtxt(tmp_path / "out" / "rirs.csv", delimiter=",", skiprows=1)
    assert data.shape[1] == 7  # sample index + 2 sources x 3 mics


def test_cli_exit_codes(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"bogus": 1}))
    assert main(["run", str(bad)]) == 2
    assert main(["run", str(tmp_path / "missing.json")]) == 3
    capsys.readouterr()
