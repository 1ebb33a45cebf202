# test_cli.py
import csv
import json
import logging

import pytest

from superres_moments import __version__
from superres_moments import config as settings
from superres_moments.cli import EXIT_CONFIG, EXIT_NUMERIC, EXIT_OK, EXIT_VALIDATION, main


def read_csv(path):
    """Metadata comments, units and rows of a CSV result file."""
    metadata, body = {}, []
    with open(path, encoding="utf-8") as handle:
        for line in handle:
            if line.startswith("# "):
                key, _, value = line[2:].partition(": ")
                metadata[key] = json.loads(value)
            else:
                body.append(line)
    return metadata, list(csv.DictReader(body))


def sweep_document(**extra):
    document = {
        "command": "sweep-sensitivity",
        "scene": {"theta": 0.7853981633974483, "n_mean": 1.5},
        "basis": {"q_max": 2},
        "sweep": {"x": [0.1, 0.5, 1.0]},
        "methods": ["demux-exact", "demux-ideal-closed"],
    }
    document.update(extra)
    return document


def run(write_config, tmp_path, command, document, *flags):
    out = tmp_path / f"{command}.out"
    code = main([command, "--config", write_config(document), "--out", str(out), *flags])
    return code, out


class TestSweep:

    def test_engine_matches_closed_form(self, write_config, tmp_path):
        code, out = run(write_config, tmp_path, "sweep-sensitivity", sweep_document())
        assert code == EXIT_OK
        metadata, rows = read_csv(out)
        assert metadata["command"] == "sweep-sensitivity"
        assert metadata["version"] == __version__
        assert metadata["covariance_form"] == "complete"
        assert metadata["units"]["M_demux-exact"] == "1/waist^2"
        assert [float(r["x"]) for r in rows] == [0.1, 0.5, 1.0]
        for row in rows:
            assert float(row["M_demux-exact"]) == pytest.approx(float(row["M_demux-ideal-closed"]), rel=1e-9)
            assert float(row["d"]) == pytest.approx(2 * float(row["x"]))
        assert "m_22" in rows[0]

    def test_crosstalk_ensemble_columns(self, write_config, tmp_path):
        document = sweep_document(
            methods=["demux-exact", "demux-asymptotic"],
            noise={"crosstalk": {"power": 0.0017, "base_seed": 4, "count": 2}, "dark": {"sigma": 0.001}},
            misalignment={"d_s": 0.02, "theta_s": 0.5},
        )
        code, out = run(write_config, tmp_path, "sweep-sensitivity", document)
        assert code == EXIT_OK
        metadata, rows = read_csv(out)
        assert metadata["seeds"] == [[4, 0], [4, 1]]
        assert set(rows[0]) >= {"M_demux-exact_mean", "M_demux-exact_std", "M_demux-exact_count",
                                "M_demux-asymptotic"}
        assert all(row["M_demux-exact_count"] == "2" for row in rows)
        assert all(float(row["M_demux-exact_std"]) > 0 for row in rows)

    def test_yaml_config_matches_json_config(self, write_config, tmp_path):
        yaml_path = tmp_path / "sweep.yaml"
        yaml_path.write_text(
            "command: sweep-sensitivity\n"
            "scene: {theta: 0.7853981633974483, n_mean: 1.5}\n"
            "basis: {q_max: 2}\n"
            "sweep:\n"
            "  x: [0.1, 0.5, 1.0]\n"
            "methods: [demux-exact, demux-ideal-closed]\n"
        )
        from_yaml = tmp_path / "yaml.csv"
        from_json = tmp_path / "json.csv"
        assert main(["sweep-sensitivity", "--config", str(yaml_path), "--out", str(from_yaml)]) == EXIT_OK
        assert main(["sweep-sensitivity", "--config", write_config(sweep_document()), "--out", str(from_json)]) == EXIT_OK
        assert from_yaml.read_bytes() == from_json.read_bytes()

    def test_printed_covariance_form_is_recorded(self, write_config, tmp_path):
        code, out = run(write_config, tmp_path, "sweep-sensitivity", sweep_document(covariance_form="printed"))
        assert code == EXIT_OK
        metadata, _ = read_csv(out)
        assert metadata["covariance_form"] == "printed"
        assert metadata["config"]["covariance_form"] == "printed"

    def test_json_output(self, write_config, tmp_path):
        code, out = run(write_config, tmp_path, "sweep-sensitivity", sweep_document(), "--format", "json")
        assert code == EXIT_OK
        table = json.loads(out.read_text())
        assert table["columns"][:3] == ["x", "d", "M_demux-exact"]
        assert len(table["rows"]) == 3
        assert table["metadata"]["config"]["sweep"] == {"x": [0.1, 0.5, 1.0]}

    def test_reruns_are_byte_identical(self, write_config, tmp_path):
        document = sweep_document(noise={"crosstalk": {"power": 0.0017, "count": 2}})
        first = tmp_path / "first.csv"
        second = tmp_path / "second.csv"
        path = write_config(document)
        assert main(["sweep-sensitivity", "--config", path, "--out", str(first)]) == EXIT_OK
        assert main(["sweep-sensitivity", "--config", path, "--out", str(second), "--threads", "3"]) == EXIT_OK
        assert first.read_bytes() == second.read_bytes()

    def test_coefficients(self, write_config, tmp_path):
        document = sweep_document(command="coefficients", methods=["demux-ideal-closed"])
        code, out = run(write_config, tmp_path, "coefficients", document)
        assert code == EXIT_OK
        _, rows = read_csv(out)
        assert len(rows) == 3
        assert sum(float(row[f"m_{n}{m}"]) ** 2 for n in range(3) for m in range(3)
                   for row in rows[:1]) == pytest.approx(1.0)

    def test_coefficients_reject_methods_without_them(self, write_config, tmp_path):
        document = sweep_document(command="coefficients", methods=["direct-imaging"])
        code, _ = run(write_config, tmp_path, "coefficients", document)
        assert code == EXIT_CONFIG


class TestErrors:

    def test_empty_grid(self, write_config, tmp_path):
        code, out = run(write_config, tmp_path, "sweep-sensitivity", sweep_document(sweep={"x": []}))
        assert code == EXIT_CONFIG
        assert not out.exists()

    def test_invalid_syntax_reports_the_line(self, tmp_path, caplog):
        path = tmp_path / "broken.json"
        path.write_text('{\n  "command": "sweep-sensitivity",\n  "scene": {"n_mean": 1.5]\n}\n')
        with caplog.at_level(logging.ERROR):
            assert main(["sweep-sensitivity", "--config", str(path)]) == EXIT_CONFIG
        assert "line 3" in caplog.text

    def test_field_errors_name_the_field(self, write_config, tmp_path, caplog):
        document = sweep_document(scene={"n_mean": 1.5, "gamma": 1.5})
        with caplog.at_level(logging.ERROR):
            code, _ = run(write_config, tmp_path, "sweep-sensitivity", document)
        assert code == EXIT_CONFIG
        assert "field 'scene'" in caplog.text

    def test_command_mismatch(self, write_config, tmp_path):
        code, _ = run(write_config, tmp_path, "dmin", sweep_document())
        assert code == EXIT_CONFIG

    def test_zero_separation_is_a_numeric_failure(self, write_config, tmp_path):
        code, _ = run(write_config, tmp_path, "sweep-sensitivity", sweep_document(sweep={"x": [0.0]}))
        assert code == EXIT_NUMERIC

    def test_missing_config_file(self, tmp_path):
        assert main(["dmin", "--config", str(tmp_path / "absent.json")]) == EXIT_CONFIG

    def test_version_flag(self, capsys):
        with pytest.raises(SystemExit) as info:
            main(["--version"])
        assert info.value.code == 0
        assert __version__ in capsys.readouterr().out


class TestDmin:

    def test_ideal_closed_form_column(self, write_config, tmp_path):
        document = {
            "command": "dmin",
            "scene": {"theta": 0.5, "n_mean": 0.5},
            "dmin": {"sweep": "mu", "values": [1e4, 1e6], "method": "demux-ideal-closed",
                     "closed_forms": ["ideal"]},
        }
        code, out = run(write_config, tmp_path, "dmin", document)
        assert code == EXIT_OK
        _, rows = read_csv(out)
        assert [float(r["N_det"]) for r in rows] == [1e4, 1e6]
        for row in rows:
            assert row["count"] == "1"
            assert float(row["d_min_mean"]) == pytest.approx(float(row["d_min_ideal"]), rel=1e-2)
        assert float(rows[1]["d_min_mean"]) < float(rows[0]["d_min_mean"])

    def test_no_crossing(self, write_config, tmp_path):
        document = {
            "command": "dmin",
            "scene": {"n_mean": 1e-3},
            "dmin": {"sweep": "mu", "values": [1], "method": "demux-ideal-closed"},
        }
        code, _ = run(write_config, tmp_path, "dmin", document)
        assert code == EXIT_NUMERIC


def _validation_document(**validate):
    settings_block = {
        "q_max": [1],
        "x": [0.3],
        "gamma": [0.3],
        "cases": ["ideal", "dark-counts"],
        "z_max": 6.0,
        "rel_tol": 1e-8,
        "dense_n_p": 6,
    }
    settings_block.update(validate)
    return {
        "command": "validate",
        "scene": {"n_mean": 1.5},
        "mc": {"samples": 5000, "seed": 9},
        "validate": settings_block,
    }


class TestValidate:

    def test_passes(self, write_config, tmp_path):
        code, out = run(write_config, tmp_path, "validate", _validation_document())
        assert code == EXIT_OK
        metadata, rows = read_csv(out)
        assert metadata["passed"] is True
        assert metadata["failures"] == 0
        assert metadata["seeds"] == [[9, 0, 0], [9, 0, 1], [9, 1, 0], [9, 1, 1]]
        checks = {row["check"] for row in rows}
        assert checks == {"mc-beta", "mc-source", "mc-paths", "closed-vs-engine", "woodbury-vs-dense"}
        assert all(row["outcome"] == "pass" for row in rows)

    def test_injected_error_fails(self, write_config, tmp_path, caplog):
        document = _validation_document(cases=["ideal"], inject={"row": 0, "col": 1, "sigmas": 200})
        with caplog.at_level(logging.WARNING):
            code, out = run(write_config, tmp_path, "validate", document)
        assert code == EXIT_VALIDATION
        metadata, rows = read_csv(out)
        assert metadata["passed"] is False
        failed = [row for row in rows if row["outcome"] == "fail"]
        assert {row["check"] for row in failed} == {"mc-beta", "mc-source"}
        assert all(row["entry"] == "cov[00,01]" for row in failed)
        assert "cov[00,01]" in caplog.text


class TestOverrides:

    def test_environment_then_flag(self, write_config, tmp_path, monkeypatch):
        env_out = tmp_path / "env.csv"
        flag_out = tmp_path / "flag.csv"
        document = sweep_document(output={"path": str(tmp_path / "doc.csv")})
        path = write_config(document)
        monkeypatch.setattr(settings, "OUT_PATH", str(env_out))
        assert main(["sweep-sensitivity", "--config", path]) == EXIT_OK
        assert env_out.exists()
        assert not (tmp_path / "doc.csv").exists()
        assert main(["sweep-sensitivity", "--config", path, "--out", str(flag_out)]) == EXIT_OK
        assert flag_out.exists()

    def test_thread_override_from_environment(self, write_config, tmp_path, monkeypatch):
        monkeypatch.setattr(settings, "THREADS", "zero")
        code, _ = run(write_config, tmp_path, "sweep-sensitivity", sweep_document())
        assert code == EXIT_CONFIG
