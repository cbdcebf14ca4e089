import json
import math

import numpy as np
import pytest

from blochsim import cli, io


def run(tmp_path, *argv, sub="out"):
    out = tmp_path / sub
    code = cli.main([*argv, "--out", str(out)])
    return code, out


class TestIO:
    def test_csv_round_trip(self, tmp_path):
        env = io.make_envelope("demo", {"a": np.float64(0.1), "b": [1, 2], "c": math.inf})
        cols = {"x": np.array([0.1, 1 / 3, math.nan]), "flag": [True, False, True],
                "n": np.array([1, 2, 3])}
        path = io.write_csv(tmp_path / "d.csv", cols, env)
        env2, back = io.read_csv(path)
        assert env2 == json.loads(json.dumps(env))
        assert env2["config"]["c"] == "inf"
        assert back["x"][1] == 1 / 3  # 17 significant digits round-trip
        assert math.isnan(back["x"][2])
        assert back["flag"].tolist() == [1, 0, 1]
        assert path.read_text().splitlines()[1] == "x,flag,n"

    def test_envelope_fields(self):
        env = io.make_envelope("x", {})
        assert env["schema_version"] == io.SCHEMA_VERSION
        assert env["build_id"].startswith("blochsim ")

    def test_unequal_columns(self, tmp_path):
        with pytest.raises(ValueError):
            io.write_csv(tmp_path / "d.csv", {"a": [1, 2], "b": [1]}, {})

    def test_json(self, tmp_path):
        p = io.write_json(tmp_path / "m.json", {"command": "x"}, {"v": np.arange(2)})
        assert io.read_json(p)["payload"]["v"] == [0, 1]
        assert io.read_envelope(p) == {"command": "x"}

    def test_missing_header(self, tmp_path):
        (tmp_path / "x.csv").write_text("a,b\n1,2\n")
        with pytest.raises(ValueError):
            io.read_envelope(tmp_path / "x.csv")


class TestValidation:
    def test_even_L_no_files(self, tmp_path):
        code, out = run(tmp_path, "stability-diagram", "--L", "4")
        assert code == cli.EXIT_CONFIG
        assert not out.exists()

    @pytest.mark.parametrize("argv", [
        ["meanfield-run", "--F", "-1"],
        ["ensemble-run", "--set", "count=0"],
        ["stability-diagram", "--set", "resolution=[1, 5]"],
        ["bogoliubov", "--set", "nonsense=1"],
        ["bogoliubov", "--set", "quasienergy=[0.4, 0.5, 2]"],
        ["compare", "--seed", "-1"],
        ["preset", "does-not-exist"],
    ])
    def test_rejected(self, tmp_path, argv):
        code, out = run(tmp_path, *argv)
        assert code == cli.EXIT_CONFIG
        assert not out.exists()

    def test_presets_validate(self):
        assert {"fig1", "fig2", "fig3", "fig4", "fig5", "fig6", "fig7", "figDa",
                "compare"} <= set(cli.preset_names())
        for name in cli.preset_names():
            for run_ in cli.load_preset(name)["runs"]:
                cli.resolve_config(run_["command"], run_["config"], {}, None)

    def test_preset_contents(self):
        fig7 = cli.load_preset("fig7")["runs"]
        assert sorted(r["config"]["F"] for r in fig7) == [0.1, 0.4, 10.0]
        for r in fig7:
            cfg = cli.resolve_config(r["command"], r["config"], {}, None)
            assert (cfg["N"], cfg["L"], cfg["J"]) == (15, 5, 1.0)
            assert cfg["W"] == pytest.approx(0.1 / 3)
        fig3 = cli.load_preset("fig3")["runs"]
        ens = [cli.resolve_config(r["command"], r["config"], {}, None) for r in fig3
               if r["command"] == "ensemble-run"]
        assert ens and all(c["count"] == 1000 for c in ens)


class TestCommands:
    def test_stability_diagram_resume(self, tmp_path):
        argv = ["stability-diagram", "--set", "resolution=[4, 3]", "--set", "overlay=true"]
        code, out = run(tmp_path, *argv)
        assert code == 0
        first = (out / "stability_diagram.csv").read_bytes()
        env, cols = io.read_csv(out / "stability_diagram.csv")
        assert list(cols) == ["F_over_J", "g_over_J", "nu", "F_cr_over_J"]
        assert len(cols["nu"]) == 12
        code, _ = run(tmp_path, *argv, "--resume")
        assert code == 0
        assert (out / "stability_diagram.csv").read_bytes() == first
        meta = io.read_json(out / "stability_diagram.json")["payload"]["meta"]
        assert meta["cells_computed"] == 0 and meta["cells_cached"] == 12

    def test_rerun_from_own_header(self, tmp_path):
        code, out = run(tmp_path, "stability-diagram", "--set", "resolution=[3, 2]")
        code, out2 = run(tmp_path, "stability-diagram", "--config",
                         str(out / "stability_diagram.json"), sub="again")
        assert code == 0
        assert ((out / "stability_diagram.csv").read_bytes()
                == (out2 / "stability_diagram.csv").read_bytes())
        code, out3 = run(tmp_path, "stability-diagram", "--config",
                         str(out / "stability_diagram.csv"), sub="third")
        assert (out3 / "stability_diagram.csv").read_bytes() == (out / "stability_diagram.csv").read_bytes()

    def test_ensemble_deterministic_across_threads(self, tmp_path):
        argv = ["ensemble-run", "--set", "count=12", "--set", "chunk=4", "--set", "t_max_TJ=1",
                "--set", "samples=11", "--set", "fit=false", "--seed", "9"]
        c1, o1 = run(tmp_path, *argv, "--threads", "1", sub="a")
        c2, o2 = run(tmp_path, *argv, "--threads", "2", sub="b")
        assert c1 == c2 == 0
        assert (o1 / "ensemble.csv").read_bytes() == (o2 / "ensemble.csv").read_bytes()
        env, cols = io.read_csv(o1 / "ensemble.csv")
        assert env["config"]["seed"] == 9
        assert list(cols)[:3] == ["t", "mean_p", "se_p"]

    def test_manybody_shares_ensemble_schema(self, tmp_path):
        code, out = run(tmp_path, "manybody-run", "--N", "3", "--L", "3", "--W", "0.1",
                        "--set", "t_max_TJ=1", "--set", "samples=5", "--set", "snapshot=true")
        assert code == 0
        _, cols = io.read_csv(out / "manybody.csv")
        assert list(cols)[:3] == ["t", "mean_p", "se_p"]
        assert [k for k in cols if k.startswith("pop_")] == ["pop_-1", "pop_0", "pop_1"]
        assert (out / "manybody_final.bin").exists()

    def test_meanfield_run(self, tmp_path):
        code, out = run(tmp_path, "meanfield-run", "--set", "t_max_TJ=2", "--set", "samples=21",
                        "--set", "lyapunov=true")
        assert code == 0
        _, cols = io.read_csv(out / "meanfield.csv")
        assert np.allclose(cols["p"], -np.sin(0.1 * cols["t"]), atol=1e-6)
        assert (out / "lyapunov.csv").exists()

    def test_bogoliubov(self, tmp_path):
        code, out = run(tmp_path, "bogoliubov", "--set", "F_scan=[0.3, 0.5, 3]",
                        "--set", 'quasienergy={"count": 2, "F": [0.4, 0.5, 2]}')
        assert code == 0
        for name in ("states.csv", "depletion_curve.csv", "quasienergy.csv", "bogoliubov.json"):
            assert (out / name).exists()

    def test_depletion_diagram(self, tmp_path):
        code, out = run(tmp_path, "depletion-diagram", "--set", "resolution=[2, 2]",
                        "--set", "F_range=[0.3, 2.0]", "--set", "g_range=[0.0, 0.1]")
        assert code == 0
        _, cols = io.read_csv(out / "depletion_diagram.csv")
        assert {"N_D", "saturated", "nu"} <= set(cols)

    def test_compare(self, tmp_path):
        code, out = run(tmp_path, "compare", "--N", "3", "--L", "3", "--W", "0.1",
                        "--set", "count=20", "--set", "t_max_TJ=1", "--set", "samples=11",
                        "--set", "window_TJ=1")
        assert code == 0
        payload = io.read_json(out / "compare.json")["payload"]
        assert payload["discrepancy"] >= 0
        _, cols = io.read_csv(out / "compare.csv")
        assert list(cols) == ["t", "p_ensemble", "se_ensemble", "p_manybody"]

    def test_numerical_failure_exit_code(self, tmp_path, monkeypatch):
        from blochsim import ensemble as en

        monkeypatch.setattr(en, "MAX_ATTEMPTS", 10)
        code, _ = run(tmp_path, "ensemble-run", "--N", "2000", "--L", "9", "--set", "count=1",
                      "--set", "t_max_TJ=1", "--set", "samples=3", "--set", "fit=false")
        assert code == cli.EXIT_NUMERIC
