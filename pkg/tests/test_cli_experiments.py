import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from parnoise.cli import main
from parnoise.config import ConfigError, load_config, parse_config
from parnoise.experiments import (
    read_series,
    run_experiment,
    run_joint_id,
    run_order_id,
    run_power,
    run_single_fit,
    write_series,
)
from parnoise.model import NoiseSpec, ParSpec, benchmark_spec, simulate

ORDER_TOML = """
[experiment]
kind = "order-id"
seed = 11
replications = {reps}
threads = {threads}

[model]
benchmark = 1

[noise]
family = "gaussian"
sigma2 = 0.2
"""


def _cfg(kind, **sections):
    doc = {"experiment": {"kind": kind, "seed": 1}}
    for name, sec in sections.items():
        doc.setdefault(name, {}).update(sec)
    return parse_config(doc)


class TestConfig:
    def test_roundtrip_file(self, tmp_path):
        path = tmp_path / "c.toml"
        path.write_text(ORDER_TOML.format(reps=3, threads=1))
        cfg = load_config(path)
        assert cfg.kind == "order-id" and cfg.replications == 3
        np.testing.assert_array_equal(cfg.spec.phi, benchmark_spec(1).phi)
        assert cfg.noise == NoiseSpec.gaussian(0.2)
        assert cfg.echo()["experiment"]["seed"] == 11

    def test_joint_length_default_is_aligned(self):
        cfg = _cfg("joint-id", model={"benchmark": 2}, noise={"sigma2": 0.2})
        assert cfg.n_obs == 1205 and (cfg.n_obs - cfg.T_max) % 60 == 0
        assert _cfg("order-id", model={"benchmark": 2}, noise={"sigma2": 0.2}).n_obs == 1200

    def test_mixture_noise_defaults_to_benchmark_shape(self):
        cfg = _cfg("order-id", model={"benchmark": 2}, noise={"family": "mixture", "sigma2": 2.0})
        np.testing.assert_allclose(cfg.noise.variances, (1.0, 3.0))
        np.testing.assert_allclose(cfg.noise_shape.variances, (0.5, 1.5))

    @pytest.mark.parametrize(
        "doc,match",
        [
            ({"experiment": {"kind": "order-id"}}, "seed"),
            ({"experiment": {"seed": 1, "colour": "red"}}, "unknown key"),
            ({"experiment": {"seed": 1}, "extra": {}}, "unknown section"),
            ({"experiment": {"seed": 1, "kind": "dance"}}, "kind"),
            ({"experiment": {"seed": 1, "kind": "order-id"}}, "needs \\[model\\]"),
            ({"experiment": {"seed": 1, "kind": "power"}, "model": {"benchmark": 1}, "noise": {"sigma2": 1}}, "variances"),
            ({"experiment": {"seed": 1}, "model": {"benchmark": 1, "phi": [[0.1]]}}, "exactly one"),
            ({"experiment": {"seed": -1}}, "nonnegative"),
            ({"experiment": {"seed": 1}, "identification": {"density_path": "magic"}}, "density_path"),
        ],
    )
    def test_validation_errors(self, doc, match):
        with pytest.raises(ConfigError, match=match):
            parse_config(doc)

    def test_malformed_file(self, tmp_path):
        (tmp_path / "bad.toml").write_text("[experiment\nseed=")
        with pytest.raises(ConfigError, match="malformed"):
            load_config(tmp_path / "bad.toml")


class TestExperiments:
    def test_single_replication(self):
        cfg = _cfg("order-id", experiment={"replications": 1}, model={"benchmark": 1}, noise={"sigma2": 0.2})
        rep = run_order_id(cfg)
        assert len(rep.records) == 1 and rep.aggregate["fraction_correct"] in (0.0, 1.0)

    def test_aggregate_recomputable(self, tmp_path):
        cfg = _cfg("order-id", experiment={"replications": 5}, model={"benchmark": 2}, noise={"sigma2": 1.0})
        rep = run_order_id(cfg)
        rep.write(tmp_path)
        rows = list(csv.DictReader(open(tmp_path / "records.csv")))
        meta = json.loads((tmp_path / "report.json").read_text())
        assert meta["aggregate"]["fraction_correct"] == np.mean([int(r["correct"]) for r in rows])
        assert meta["config"] == cfg.raw and meta["version"] == "0.1.0"
        for r in rows:
            bics = {p: float(r[f"bic_p{p}"]) for p in (1, 2, 3)}
            assert int(r["p_opt"]) == min(bics, key=lambda p: (bics[p], p))

    def test_joint(self):
        cfg = _cfg(
            "joint-id",
            experiment={"replications": 2, "n_obs": 1205},
            model={"benchmark": 2},
            noise={"sigma2": 0.2},
            identification={"p_max": 4, "T_max": 5},
        )
        rep = run_joint_id(cfg)
        assert len([k for k in rep.records[0] if k.startswith("bic_")]) == 10
        assert rep.aggregate["fraction_joint"] == np.mean([r["correct_joint"] for r in rep.records])

    def test_power(self):
        cfg = _cfg(
            "power",
            experiment={"replications": 3, "n_obs": 400},
            model={"phi": [[0.4], [-0.6]]},
            noise={"sigma2": 1.0},
            validation={"m_boot": 20, "variances": [0.6, 1.4], "step": 0.5},
        )
        rep = run_power(cfg)
        assert [c["n"] for c in rep.aggregate["power_curve"]] == [3, 3]
        assert all(r["p_value"] * 20 == round(r["p_value"] * 20) for r in rep.records)

    def test_single_fit_from_file(self, tmp_path):
        y = simulate(benchmark_spec(1), NoiseSpec.gaussian(0.2), 300, seed=2).values
        write_series(tmp_path / "y.csv", y[:-1], T=4)
        vals, T = read_series(tmp_path / "y.csv")
        assert T == 4 and vals.size == 1199
        cfg = _cfg("single-fit", data={"path": str(tmp_path / "y.csv")})
        rep = run_single_fit(cfg)
        assert rep.aggregate["p_opt"] == 1
        assert any("trailing" in w for w in rep.aggregate["warnings"])

    def test_single_fit_constant_series(self, tmp_path):
        write_series(tmp_path / "c.csv", np.full(120, 2.0), T=2)
        rep = run_single_fit(_cfg("single-fit", data={"path": str(tmp_path / "c.csv")}, validation={"m_boot": 20}))
        assert rep.aggregate["estimation"]["diagnostics"]["degenerate_bound"]

    def test_threads_byte_identical(self, tmp_path):
        out = []
        for threads in (1, 2):
            path = tmp_path / f"c{threads}.toml"
            path.write_text(ORDER_TOML.format(reps=4, threads=threads))
            run_experiment(load_config(path)).write(tmp_path / f"o{threads}")
            out.append((tmp_path / f"o{threads}" / "records.csv").read_bytes())
        assert out[0] == out[1]


class TestCli:
    def test_exit_codes(self, tmp_path, capsys):
        (tmp_path / "bad.toml").write_text("[experiment]\nseed = 1\nwhat = 2\n")
        assert main(["experiment", "--config", str(tmp_path / "bad.toml")]) == 1
        assert "unknown key" in capsys.readouterr().err
        (tmp_path / "bad.csv").write_text("T=2\n1\nx\n")
        assert main(["estimate", "--data", str(tmp_path / "bad.csv"), "-p", "1"]) == 1
        (tmp_path / "short.csv").write_text("T=4\n1\n2\n3\n")
        assert main(["estimate", "--data", str(tmp_path / "short.csv"), "-p", "1"]) == 2

    def test_simulate_then_identify(self, tmp_path):
        cfg = tmp_path / "c.toml"
        cfg.write_text(ORDER_TOML.format(reps=1, threads=1).replace('"order-id"', '"simulate"'))
        assert main(["simulate", "--config", str(cfg), "--out", str(tmp_path / "sim")]) == 0
        assert main(["identify", "--data", str(tmp_path / "sim" / "series.csv"), "--out", str(tmp_path / "id")]) == 0
        result = json.loads((tmp_path / "id" / "identify.json").read_text())
        assert result["selected"] == {"p": 1, "T": 4}
        assert (tmp_path / "id" / "bic.csv").exists()

    def test_seed_override_changes_output(self, tmp_path):
        cfg = tmp_path / "c.toml"
        cfg.write_text(ORDER_TOML.format(reps=1, threads=1).replace('"order-id"', '"simulate"'))
        main(["simulate", "--config", str(cfg), "--out", str(tmp_path / "a")])
        main(["simulate", "--config", str(cfg), "--seed", "12", "--out", str(tmp_path / "b")])
        main(["simulate", "--config", str(cfg), "--out", str(tmp_path / "c")])
        a, b, c = ((tmp_path / d / "series.csv").read_bytes() for d in "abc")
        assert a == c and a != b

    def test_validate(self, tmp_path):
        y = simulate(ParSpec([[0.4], [-0.6]]), NoiseSpec.gaussian(1.0), 200, seed=3).values
        write_series(tmp_path / "y.csv", y, T=2)
        code = main(["validate", "--data", str(tmp_path / "y.csv"), "-p", "1", "--m-boot", "20", "--out", str(tmp_path)])
        assert code == 0
        out = json.loads((tmp_path / "validate.json").read_text())
        assert 0 <= out["gof"]["p_value"] <= 1

    def test_entry_point(self):
        res = subprocess.run([sys.executable, "-m", "parnoise.cli", "--version"], capture_output=True, text=True)
        assert res.returncode == 0 and "0.1.0" in res.stdout
