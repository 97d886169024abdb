import csv
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

import smcevidence
from smcevidence import config, datasets
from smcevidence.cli import main
from smcevidence.config import ConfigError

CONFIGS = Path(smcevidence.__file__).parent / "configs"

SMALL = """
seed = 2
[model]
kind = "conjugate"
data = "builtin:conjugate"
[sampler]
n_particles = 100
[estimators]
path = ["trapezoid", "boole:2"]
"""


def write(tmp_path, text, name="cfg.toml"):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


def read_csv(path):
    with open(path) as fh:
        return list(csv.reader(fh))


class TestValidation:
    def test_missing_model(self, tmp_path, capsys):
        assert main(["run", "--config", write(tmp_path, "seed = 1\n")]) == 1
        assert "model" in capsys.readouterr().err

    def test_unknown_key(self, tmp_path, capsys):
        cfg = write(tmp_path, SMALL.replace("n_particles", "particles"))
        assert main(["run", "--config", cfg]) == 1
        assert "sampler.particles" in capsys.readouterr().err

    def test_wrong_type(self, tmp_path, capsys):
        cfg = write(tmp_path, SMALL.replace("n_particles = 100", 'n_particles = "many"'))
        assert main(["run", "--config", cfg]) == 1
        assert "sampler.n_particles" in capsys.readouterr().err

    def test_bool_is_not_int(self, tmp_path):
        with pytest.raises(ConfigError):
            config.validate({"seed": True, "model": {"kind": "conjugate", "data": "x"}})

    def test_bad_rule_and_missing_file(self, tmp_path, capsys):
        assert main(["run", "--config", write(tmp_path, SMALL.replace("boole:2", "gauss"))]) == 1
        assert main(["run", "--config", str(tmp_path / "nope.toml")]) == 1
        cfg = write(tmp_path, SMALL.replace("builtin:conjugate", "missing.csv"))
        assert main(["run", "--config", cfg]) == 1
        assert "model.data" in capsys.readouterr().err

    def test_multiple_models_for_smc2(self, tmp_path):
        cfg = write(tmp_path, '[model]\nkind = "gmm"\ndata = "builtin:gmm"\nr = [1, 2]\n')
        assert main(["run", "--config", cfg, "--out", str(tmp_path / "o")]) == 1

    @pytest.mark.parametrize("path", sorted(CONFIGS.glob("*.toml")), ids=lambda p: p.stem)
    def test_shipped_configs_build(self, path):
        cfg = config.load(path)
        if cfg["model"]["kind"] != "finite_flow":
            config.build_model(cfg)
            config.build_run_config(cfg)


class TestRun:
    def test_finite_estimates(self, tmp_path, capsys):
        out = tmp_path / "o"
        assert main(["run", "--config", write(tmp_path, SMALL), "--out", str(out)]) == 0
        rows = read_csv(out / "estimates.csv")
        assert rows[0][:3] == ["estimator", "log_evidence", "realized_T"]
        assert [r[0] for r in rows[1:]] == ["direct", "path_trapezoid_x1", "path_boole_x2"]
        assert all(np.isfinite(float(r[1])) for r in rows[1:])
        trace = read_csv(out / "trace.csv")
        assert trace[0][:5] == ["iteration", "alpha", "ess", "cess", "resampled"]
        assert trace[0][-2:] == ["log_increment", "U"]
        assert (out / "config.resolved.json").exists()

    def test_shipped_conjugate_config(self, tmp_path):
        out = tmp_path / "o"
        assert main(["run", "--config", str(CONFIGS / "conjugate.toml"), "--out", str(out)]) == 0
        est = float(read_csv(out / "estimates.csv")[1][1])
        exact = datasets.metadata()["conjugate"].get("log_evidence")
        assert np.isfinite(est)
        if exact is not None:
            assert abs(est - exact) < 0.2

    def test_byte_identical_reruns(self, tmp_path):
        cfg = write(tmp_path, SMALL)
        for d in ("a", "b"):
            assert main(["run", "--config", cfg, "--out", str(tmp_path / d), "--threads", "1"]) == 0
        for f in ("estimates.csv", "trace.csv", "config.resolved.json"):
            assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()

    def test_seed_override(self, tmp_path):
        cfg = write(tmp_path, SMALL)
        main(["run", "--config", cfg, "--out", str(tmp_path / "a")])
        main(["run", "--config", cfg, "--out", str(tmp_path / "b"), "--seed", "99"])
        a = (tmp_path / "a" / "estimates.csv").read_bytes()
        assert a != (tmp_path / "b" / "estimates.csv").read_bytes()

    def test_output_env_override(self, tmp_path, monkeypatch):
        monkeypatch.setenv("SMCEVIDENCE_OUT", str(tmp_path / "env"))
        assert main(["run", "--config", write(tmp_path, SMALL)]) == 0
        assert (tmp_path / "env" / "estimates.csv").exists()

    def test_runtime_error_exit_code(self, tmp_path, capsys):
        text = SMALL + "[sampler.schedule]\ntolerance = 0.5\n"
        text = text.replace("n_particles = 100", "n_particles = 100\nmax_micro_steps = 0")
        assert main(["run", "--config", write(tmp_path, text), "--out", str(tmp_path)]) == 2
        assert "runtime error" in capsys.readouterr().err

    def test_smc1_writes_probabilities(self, tmp_path):
        text = ('seed = 3\n[model]\nkind = "gmm"\ndata = "builtin:gmm"\nr = [1, 2]\n'
                '[sampler]\nalgorithm = "smc1"\nn_particles = 100\n')
        out = tmp_path / "o"
        assert main(["run", "--config", write(tmp_path, text), "--out", str(out)]) == 0
        rows = read_csv(out / "model_probabilities.csv")
        assert rows[0] == ["model", "probability"]
        assert sum(float(r[1]) for r in rows[1:]) == pytest.approx(1.0)


class TestReplicate:
    def test_identical_replicates(self, tmp_path):
        cfg = write(tmp_path, "identical_replicates = true\n" + SMALL)
        out = tmp_path / "o"
        assert main(["replicate", "--config", cfg, "--out", str(out), "--replicates", "2"]) == 0
        rows = read_csv(out / "summary.csv")
        assert rows[0] == ["estimator", "mean", "sd", "R"]
        assert len(rows) - 1 == 3
        assert all(float(r[2]) == 0.0 and r[3] == "2" for r in rows[1:])

    def test_threads_do_not_change_output(self, tmp_path):
        cfg = write(tmp_path, SMALL)
        for d, k in (("a", "1"), ("b", "2")):
            assert main(["replicate", "--config", cfg, "--out", str(tmp_path / d),
                         "--replicates", "3", "--threads", k]) == 0
        for f in ("summary.csv", "replicates.csv"):
            assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()

    def test_needs_two(self, tmp_path):
        assert main(["replicate", "--config", write(tmp_path, SMALL), "--replicates", "1",
                     "--out", str(tmp_path)]) == 1


class TestBiasAndClt:
    def test_bias_table(self, tmp_path):
        text = SMALL + '[bias_table]\nrules = ["trapezoid", "boole"]\nrefinements = [1, 4]\n'
        out = tmp_path / "o"
        assert main(["bias-table", "--config", write(tmp_path, text), "--out", str(out),
                     "--replicates", "3"]) == 0
        rows = read_csv(out / "bias_table.csv")
        assert rows[0] == ["rule", "refinement", "mean_bias", "sd_bias", "R", "reference"]
        assert [(r[0], r[1]) for r in rows[1:]] == [("trapezoid", "1"), ("trapezoid", "4"),
                                                    ("boole", "1"), ("boole", "4")]

    def test_bias_table_rejects_unknown_rule(self, tmp_path):
        text = SMALL + '[bias_table]\nrules = ["gauss"]\n'
        assert main(["bias-table", "--config", write(tmp_path, text), "--out",
                     str(tmp_path)]) == 1

    def test_clt_check(self, tmp_path):
        out = tmp_path / "o"
        assert main(["clt-check", "--config", str(CONFIGS / "clt.toml"), "--out", str(out),
                     "--replicates", "200"]) == 0
        rows = read_csv(out / "clt.csv")
        assert rows[0] == ["N", "empirical", "predicted", "ratio"]
        assert [r[0] for r in rows[1:]] == ["256", "512", "1024"]

    def test_constant_test_function_flow(self, tmp_path):
        text = ('[model]\nkind = "finite_flow"\nprior = [0.2, 0.8]\nlikelihood = [2.0, 2.0]\n'
                'alphas = [0.0, 0.5, 1.0]\n[clt]\nN = [64]\nR = 50\n')
        out = tmp_path / "o"
        assert main(["clt-check", "--config", write(tmp_path, text), "--out", str(out)]) == 0
        row = read_csv(out / "clt.csv")[1]
        assert float(row[1]) == 0.0 and float(row[2]) == 0.0

    def test_clt_needs_flow(self, tmp_path):
        assert main(["clt-check", "--config", write(tmp_path, SMALL), "--out",
                     str(tmp_path)]) == 1


def test_gen_data(tmp_path):
    assert main(["gen-data", "--out", str(tmp_path)]) == 0
    for name, m in datasets.metadata().items():
        assert (tmp_path / m["file"]).read_bytes() == datasets.data_path(name).read_bytes()


def test_console_entry_point(tmp_path):
    res = subprocess.run([sys.executable, "-m", "smcevidence.cli", "run", "--config",
                          write(tmp_path, SMALL), "--out", str(tmp_path / "o")],
                         capture_output=True, text=True)
    assert res.returncode == 0
    assert res.stdout.startswith("direct\t")
