import json
import struct

import numpy as np
import pytest

from gibbslab import formats
from gibbslab.cli import main
from gibbslab.config import ConfigError, RunConfig, load_config, validate

SMALL_1D = """
[model]
dimension = 1
potential = power
s = 4.0
half_width = 6.0
points = 128
modes = 3
nu = 0.0

[interaction]
kind = gaussian-bump
amplitude = 0.4
sigma = 0.6

[classical]
samples = 4000
seed = 13

[quantum]
n_max = 10
t_schedule = 2, 4
coupling_c = 1.0

[output]
directory = {out}
format = json
"""


def write_config(tmp_path, text=SMALL_1D, **extra):
    out = tmp_path / "out"
    body = text.format(out=out)
    for section, lines in extra.items():
        body += f"\n[{section}]\n" + "\n".join(lines) + "\n"
    path = tmp_path / "run.ini"
    path.write_text(body, encoding="utf-8")
    return path, out


def test_config_roundtrip(tmp_path):
    path, out = write_config(tmp_path)
    cfg = load_config(path)
    assert cfg.model.modes == 3
    assert cfg.quantum.t_schedule == (2.0, 4.0)
    assert cfg.output.directory == str(out)


def test_config_rejects_unknown_field(tmp_path):
    path, _ = write_config(tmp_path, model_extra=[])
    bad = path.read_text().replace("[interaction]", "[interaction]\nwhatever = 3")
    path.write_text(bad)
    with pytest.raises(ConfigError, match="whatever"):
        load_config(path)


def test_config_cross_field_checks():
    cfg = RunConfig()
    cfg.model.dimension = 2
    cfg.interaction.kind = "grid-delta"
    with pytest.raises(ConfigError, match="grid-delta"):
        validate(cfg)
    cfg = RunConfig()
    cfg.quantum.t_schedule = (4.0, 2.0)
    with pytest.raises(ConfigError, match="increasing"):
        validate(cfg)
    cfg = RunConfig()
    cfg.model.modes = 13
    with pytest.raises(ConfigError, match="modes"):
        validate(cfg)
    cfg = RunConfig()
    cfg.model.s = 0.5
    with pytest.raises(ConfigError, match="model.s"):
        validate(cfg)
    cfg = RunConfig()
    cfg.interaction.kind = "tabulated"
    with pytest.raises(ConfigError, match="table_path"):
        validate(cfg)


def test_cli_config_error_exit_code(tmp_path):
    bad = tmp_path / "bad.ini"
    bad.write_text("[model]\ndimension = 7\n")
    assert main(["spectrum", "--config", str(bad)]) == 2
    assert main(["spectrum", "--config", str(tmp_path / "missing.ini")]) == 2


def test_cli_spectrum(tmp_path):
    path, out = write_config(tmp_path)
    assert main(["spectrum", "--config", str(path)]) == 0
    doc = json.loads((out / "spectrum.json").read_text())
    assert doc["gfl_schema"] == 1
    assert doc["kind"] == "spectrum"
    eigs = doc["results"]["eigenvalues"]
    assert len(eigs) == 32
    assert abs(eigs[0] - 1.06) < 0.01
    vec = formats.read_matrix(out / "eigenvectors.gflm")
    assert vec.shape == (128, 32)


def test_cli_sample_and_binary(tmp_path):
    path, out = write_config(tmp_path)
    assert main(["sample-gaussian", "--config", str(path)]) == 0
    ens = formats.read_ensemble(out / "ensemble.gfl1")
    assert ens.size == 4000 and ens.cutoff == 3 and ens.seed == 13


def test_cli_classical(tmp_path):
    path, out = write_config(tmp_path)
    assert main(["classical-gibbs", "--config", str(path)]) == 0
    doc = json.loads((out / "classical-gibbs.json").read_text())
    res = doc["results"]
    assert res["neg_log_zr"] > 0
    assert res["ess"] > 1000
    m1 = formats.read_matrix(out / "moment_k1.gflm")
    assert m1.shape == (3, 3)


def test_cli_quantum(tmp_path):
    path, out = write_config(tmp_path)
    assert main(["quantum-gibbs", "--config", str(path)]) == 0
    doc = json.loads((out / "quantum-gibbs.json").read_text())
    rows = doc["results"]["schedule"]
    assert [r["T"] for r in rows] == [2.0, 4.0]
    assert all(np.isfinite(r["free_energy"]) for r in rows)
    g2 = formats.read_matrix(out / "rdm_k2.gflm")
    assert g2.shape == (6, 6)


def test_cli_hartree_csv(tmp_path):
    path, out = write_config(tmp_path, hartree=["t_schedule = 2, 4",
                                                "kappa = 1.0",
                                                "points = 32",
                                                "shared_modes = 6",
                                                "damping = 0.9"])
    assert main(["hartree", "--config", str(path)]) == 0
    header = (out / "hartree.csv").read_text().splitlines()[0]
    assert header.split(",") == ["T", "lambda", "nu", "iterations", "residual",
                                 "F_rH", "E0", "delta_inf", "schatten_p_dist"]


def test_cli_strict_numerical_failure(tmp_path):
    path, out = write_config(tmp_path, hartree=["t_schedule = 2, 4",
                                                "kappa = 1.0",
                                                "points = 32",
                                                "shared_modes = 6",
                                                "damping = 0.01",
                                                "max_iter = 1"])
    assert main(["hartree", "--config", str(path), "--strict"]) == 3
    assert main(["hartree", "--config", str(path)]) == 0


def test_cli_seed_override_changes_results(tmp_path):
    path, out = write_config(tmp_path)
    main(["sample-gaussian", "--config", str(path), "--seed", "99"])
    ens = formats.read_ensemble(out / "ensemble.gfl1")
    assert ens.seed == 99


def test_cli_tabulated_potential(tmp_path):
    r = np.linspace(0.0, 12.0, 600)
    table = np.column_stack([r, 0.4 * np.exp(-r**2 / 0.72)])
    table_path = tmp_path / "w.txt"
    np.savetxt(table_path, table)
    path, out = write_config(tmp_path)
    body = path.read_text().replace("kind = gaussian-bump",
                                    f"kind = tabulated\ntable_path = {table_path}")
    path.write_text(body)
    assert main(["classical-gibbs", "--config", str(path)]) == 0
    doc = json.loads((out / "classical-gibbs.json").read_text())
    assert doc["results"]["neg_log_zr"] > 0


def test_json_determinism(tmp_path):
    path, out = write_config(tmp_path)
    main(["classical-gibbs", "--config", str(path)])
    first = (out / "classical-gibbs.json").read_bytes()
    main(["classical-gibbs", "--config", str(path)])
    assert (out / "classical-gibbs.json").read_bytes() == first
    assert (out / "meta.json").exists()


def test_seventeen_digit_floats_roundtrip():
    rng = np.random.default_rng(1)
    for x in rng.standard_normal(100) * 10.0 ** rng.integers(-30, 30, 100):
        assert float(formats.format_float(x)) == x
    doc = formats.dumps({"x": 0.1 + 0.2, "arr": np.array([1.5, np.pi])})
    parsed = json.loads(doc)
    assert parsed["x"] == 0.1 + 0.2
    assert parsed["arr"][1] == np.pi


def test_matrix_format_layout(tmp_path):
    m = np.array([[1 + 2j, 3.5], [0, -1j]])
    p = tmp_path / "m.gflm"
    formats.write_matrix(p, m)
    raw = p.read_bytes()
    assert raw[:4] == b"GFLM"
    ndim, = struct.unpack("<I", raw[4:8])
    assert ndim == 2
    assert struct.unpack("<QQ", raw[8:24]) == (2, 2)
    re0, im0 = struct.unpack("<dd", raw[24:40])
    assert (re0, im0) == (1.0, 2.0)
    assert np.array_equal(formats.read_matrix(p), m)


def test_csv_format(tmp_path):
    rows = [{"T": 2.0, "value": 1.0 / 3.0, "flag": True},
            {"T": 4.0, "value": 2.0 / 3.0, "flag": False}]
    p = tmp_path / "t.csv"
    formats.write_csv(p, rows)
    lines = p.read_text().strip().splitlines()
    assert lines[0] == "T,value,flag"
    assert float(lines[1].split(",")[1]) == 1.0 / 3.0
