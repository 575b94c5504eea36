import csv
import io
import json
import math

import pytest

from hamstab.cli import CONFIG_SCHEMA, SIM_COLUMNS, SWEEP_COLUMNS, main

RIK = {"builtin": "rikitake", "params": {"beta": 1.0}}


def write(tmp_path, cfg, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(cfg))
    return str(p)


def run(tmp_path, command, cfg, *extra):
    out = tmp_path / f"out-{command}"
    code = main([command, "--config", write(tmp_path, cfg), "--out", str(out), *extra])
    text = out.read_text() if out.exists() else ""
    return code, text


def rows(text):
    return list(csv.DictReader(io.StringIO(text)))


class TestSimulate:
    def test_conservation(self, tmp_path):
        cfg = {"system": RIK, "fiber": {"seed": [1, 1, 1]}, "perturbation": {"mode": "None"},
               "integrator": {"rtol": 1e-10, "atol": 1e-12}, "run": {"t_end": 20}}
        code, text = run(tmp_path, "simulate", cfg)
        assert code == 0
        assert text.splitlines()[0] == ",".join(SIM_COLUMNS)
        data = rows(text)
        assert max(abs(float(r["H_err"])) for r in data) <= 1e-6
        assert max(abs(float(r["C_err"])) for r in data) <= 1e-6
        assert all(r["dist_to_orbit"] == "" for r in data)

    def test_zero_length(self, tmp_path):
        cfg = {"system": RIK, "fiber": {"seed": [1, 1, 1]}, "run": {"t_end": 0}}
        code, text = run(tmp_path, "simulate", cfg)
        assert code == 0 and len(text.splitlines()) == 2
        assert rows(text)[0]["t"] == "0.0"

    def test_stabilized_offset(self, tmp_path):
        cfg = {"system": RIK, "fiber": {"seed": [1, 1, 1]},
               "perturbation": {"mode": "Full_Stabilize", "alpha": 0.2, "beta": 0.2},
               "integrator": {"method": "dop853", "rtol": 1e-12, "atol": 1e-14, "max_step": 0.05},
               "run": {"t_end": 60, "offset": 1e-2, "dt": 1.0}}
        code, text = run(tmp_path, "simulate", cfg)
        data = rows(text)
        assert code == 0 and len(data) == 61
        assert float(data[0]["dist_to_orbit"]) == pytest.approx(1e-2, rel=0.5)
        assert float(data[-1]["dist_to_orbit"]) <= 1e-6

    def test_byte_stable(self, tmp_path):
        cfg = {"system": RIK, "fiber": {"seed": [1, 1, 1]}, "run": {"t_end": 3, "orbit": True}}
        assert run(tmp_path, "simulate", cfg) == run(tmp_path, "simulate", cfg)

    def test_expression_system(self, tmp_path):
        cfg = {"system": {"H": "0.25*(-x^2+y^2)-beta*z", "C": "0.5*(x^2+y^2)+z^2",
                          "params": {"beta": 1.0}},
               "fiber": {"seed": [1, 1, 1]}, "perturbation": {"mode": "None"}, "run": {"t_end": 1}}
        code, text = run(tmp_path, "simulate", cfg)
        assert code == 0 and abs(float(rows(text)[-1]["H_err"])) <= 1e-8


class TestFloquet:
    def test_preserve_c(self, tmp_path):
        cfg = {"system": RIK, "fiber": {"h": -1, "c": 2, "guess": [1, 1, 1]},
               "perturbation": {"mode": "PreserveC_Stabilize"}}
        code, text = run(tmp_path, "floquet", cfg)
        rep = json.loads(text)
        assert code == 0 and rep["pass"]
        mods = [z["modulus"] for z in rep["floquet"]["computed"]]
        assert sum(abs(m - 1) <= 1e-3 for m in mods) == 2

    def test_destabilizing_flags_unstable(self, tmp_path):
        cfg = {"system": RIK, "fiber": {"seed": [1, 1, 1]},
               "perturbation": {"mode": "Full_Destabilize_FlipBeta"}}
        code, text = run(tmp_path, "floquet", cfg)
        rep = json.loads(text)
        assert code == 0 and rep["floquet"]["unstable"]
        assert max(z["modulus"] for z in rep["floquet"]["computed"]) > 1

    def test_harmonic(self, tmp_path):
        cfg = {"system": {"builtin": "harmonic2d"}, "fiber": {"h": 0.5, "c": 0, "guess": [1, 0, 0]},
               "perturbation": {"mode": "PreserveC_Stabilize", "alpha": 1}}
        code, text = run(tmp_path, "floquet", cfg)
        small = json.loads(text)["floquet"]["computed"][-1]["modulus"]
        assert code == 0 and abs(small - math.exp(-2 * math.pi)) <= 1e-4

    def test_threshold_failure_exit_code(self, tmp_path):
        cfg = {"system": RIK, "fiber": {"seed": [1, 1, 1]},
               "perturbation": {"mode": "PreserveH_Stabilize"}}
        code, text = run(tmp_path, "floquet", cfg, "--threshold", "multiplier=1e-9")
        assert code == 3 and json.loads(text)["pass"] is False

    def test_orbit_failure_exit_code(self, tmp_path):
        cfg = {"system": RIK, "fiber": {"seed": [1, 0, 1]},
               "perturbation": {"mode": "Full_Stabilize"}}
        assert run(tmp_path, "floquet", cfg)[0] == 2


class TestSweep:
    def test_alpha_scaling(self, tmp_path):
        cfg = {"system": RIK, "fiber": {"seed": [1, 1, 1]},
               "perturbation": {"mode": "PreserveC_Stabilize", "alpha": 0.1},
               "run": {"efolds": 20},
               "sweep": {"alpha_scale": [0.5, 1, 2], "offset": [1e-3]}}
        code, text = run(tmp_path, "sweep", cfg, "--workers", "2")
        data = rows(text)
        assert code == 0 and len(data) == 3
        assert text.splitlines()[0] == ",".join(SWEEP_COLUMNS)
        rates = [float(r["fitted_rate"]) for r in data]
        for scale, r in zip([0.5, 1, 2], rates):
            assert r / rates[1] == pytest.approx(scale, rel=0.1)
        assert all(r["pass"] == "true" for r in data)

    def test_offsets_converge(self, tmp_path):
        cfg = {"system": RIK, "fiber": {"seed": [1, 1, 1]},
               "perturbation": {"mode": "Full_Stabilize", "alpha": 0.2, "beta": 0.2},
               "run": {"efolds": 25}, "sweep": {"offset": [1e-3, 1e-2]}}
        code, text = run(tmp_path, "sweep", cfg)
        assert code == 0
        assert all(float(r["final_distance"]) <= 1e-6 for r in rows(text))

    def test_empty_grid(self, tmp_path):
        cfg = {"system": RIK, "fiber": {"seed": [1, 1, 1]}, "sweep": {"alpha_scale": []}}
        code, text = run(tmp_path, "sweep", cfg)
        assert code == 0 and text == ",".join(SWEEP_COLUMNS) + "\n"

    def test_failed_row_recorded(self, tmp_path):
        cfg = {"system": RIK, "fiber": {"seed": [1, 1, 1]},
               "perturbation": {"mode": "Full_Stabilize"},
               "sweep": {"fiber": [[-1, 2], [-1, 1]]}}
        code, text = run(tmp_path, "sweep", cfg)
        data = rows(text)
        assert code == 3 and len(data) == 2
        assert data[1]["pass"] == "false" and data[1]["error"]

    def test_workers_do_not_change_output(self, tmp_path):
        cfg = {"system": RIK, "fiber": {"seed": [1, 1, 1]},
               "perturbation": {"mode": "PreserveC_Stabilize", "alpha": 0.2},
               "run": {"efolds": 10}, "sweep": {"alpha_scale": [1, 2]}}
        assert run(tmp_path, "sweep", cfg) == run(tmp_path, "sweep", cfg, "--workers", "2")


class TestCheck:
    def test_preserve_c(self, tmp_path):
        cfg = {"system": RIK, "fiber": {"h": -1, "c": 2},
               "perturbation": {"mode": "PreserveC_Stabilize"}}
        code, text = run(tmp_path, "check", cfg)
        rep = json.loads(text)
        assert code == 0 and rep["checks"]["preserve_C"]["max_violation"] <= 1e-12
        assert rep["checks"]["rikitake_c_term"]["pass"] and rep["n_points"] == 1000

    def test_full(self, tmp_path):
        cfg = {"system": RIK, "fiber": {"h": -1, "c": 2}, "perturbation": {"mode": "Full_Stabilize"},
               "check": {"n": 200}}
        rep = json.loads(run(tmp_path, "check", cfg)[1])
        assert rep["checks"]["decay_H"]["pass"] and rep["checks"]["decay_C"]["pass"]

    def test_degenerate_box(self, tmp_path):
        cfg = {"system": RIK, "fiber": {"h": -1, "c": 2}, "perturbation": {"mode": "Full_Stabilize"},
               "check": {"n": 50, "box": [[0, 0], [0, 0], [-1, 1]]}}
        code, text = run(tmp_path, "check", cfg)
        rep = json.loads(text)
        assert code == 0 and rep["degenerate"] and "note" in rep

    def test_seed_recorded_and_stable(self, tmp_path):
        cfg = {"system": RIK, "fiber": {"h": -1, "c": 2}, "perturbation": {"mode": "Full_Stabilize"},
               "check": {"n": 50}}
        a = run(tmp_path, "check", cfg, "--seed", "11")
        assert a == run(tmp_path, "check", cfg, "--seed", "11")
        assert json.loads(a[1])["seed"] == 11


class TestErrors:
    def test_schema_error(self, tmp_path, capsys):
        cfg = {"system": RIK, "fiber": {"h": -1}}
        assert run(tmp_path, "check", cfg)[0] == 1
        assert "fiber" in capsys.readouterr().err

    def test_both_fiber_forms_rejected(self, tmp_path):
        cfg = {"system": RIK, "fiber": {"h": -1, "c": 2, "seed": [1, 1, 1]}}
        assert run(tmp_path, "check", cfg)[0] == 1

    def test_json_syntax_error_has_line(self, tmp_path, capsys):
        p = tmp_path / "bad.json"
        p.write_text('{\n  "system": {"builtin": "rikitake"},\n  "fiber" {}\n}')
        assert main(["check", "--config", str(p)]) == 1
        assert "bad.json:3:" in capsys.readouterr().err

    def test_expression_error(self, tmp_path, capsys):
        cfg = {"system": {"H": "x +* y", "C": "z"}, "fiber": {"h": 0, "c": 0}}
        assert run(tmp_path, "check", cfg)[0] == 1
        assert "position" in capsys.readouterr().err

    def test_bad_threshold(self, tmp_path):
        cfg = {"system": RIK, "fiber": {"h": -1, "c": 2}}
        assert run(tmp_path, "check", cfg, "--threshold", "bogus=1")[0] == 1

    def test_missing_file(self, tmp_path):
        assert main(["check", "--config", str(tmp_path / "nope.json")]) == 1

    def test_usage(self):
        assert main(["frobnicate"]) == 1

    def test_bad_rigid_body(self, tmp_path):
        cfg = {"system": {"builtin": "rigid_body", "params": {"i1": 1, "i2": 1, "i3": 2}},
               "fiber": {"h": 0, "c": 1}}
        assert run(tmp_path, "check", cfg)[0] == 1

    def test_schema_is_valid(self):
        import jsonschema

        jsonschema.Draft202012Validator.check_schema(CONFIG_SCHEMA)


@pytest.mark.parametrize("name", ["rikitake_floquet", "harmonic_floquet", "rikitake_check"])
def test_shipped_configs(name, tmp_path):
    from pathlib import Path

    path = Path(__file__).resolve().parent.parent / "configs" / f"{name}.json"
    command = "check" if "check" in name else "floquet"
    assert main([command, "--config", str(path), "--out", str(tmp_path / "o")]) == 0
