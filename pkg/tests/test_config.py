# test_config.py
import json

import pytest

from superres_moments.config import load_config, parse_config
from superres_moments.errors import ConfigError

SWEEP_YAML = """\
command: sweep-sensitivity
scene:
  theta: 0.7853981633974483
  n_mean: 1.5
basis:
  q_max: 2
sweep:
  x: [0.1, 0.5, 1.0]
methods: [demux-exact, demux-ideal-closed]
"""


def write(tmp_path, text, name="config.yaml"):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


def test_yaml_and_json_documents_agree(tmp_path, write_config):
    from_yaml = load_config(write(tmp_path, SWEEP_YAML))
    document = {
        "command": "sweep-sensitivity",
        "scene": {"theta": 0.7853981633974483, "n_mean": 1.5},
        "basis": {"q_max": 2},
        "sweep": {"x": [0.1, 0.5, 1.0]},
        "methods": ["demux-exact", "demux-ideal-closed"],
    }
    from_json = load_config(write_config(document))
    assert from_yaml.document == from_json.document
    assert from_yaml.scene == from_json.scene
    assert from_yaml.x_values == from_json.x_values
    assert from_yaml.methods == ("demux-exact", "demux-ideal-closed")


def test_exponent_floats_without_a_dot_are_numbers(tmp_path):
    text = SWEEP_YAML.replace("n_mean: 1.5", "n_mean: 1e-06")
    assert load_config(write(tmp_path, text)).scene.n_mean == 1e-06
    path = write(tmp_path, json.dumps({"scene": {"n_mean": 2e-05}}), "exponent.json")
    assert load_config(path).scene.n_mean == 2e-05


def test_syntax_error_reports_line_and_column(tmp_path):
    text = "command: sweep-sensitivity\nscene:\n  n_mean: [1.5\nbasis: {q_max: 2}\n"
    with pytest.raises(ConfigError) as info:
        load_config(write(tmp_path, text))
    assert info.value.line is not None
    assert info.value.line >= 3
    assert "column" in str(info.value)


def test_field_error_reports_the_line_of_the_key(tmp_path):
    text = SWEEP_YAML.replace("n_mean: 1.5", "n_mean: bright")
    with pytest.raises(ConfigError) as info:
        load_config(write(tmp_path, text))
    assert info.value.field == "scene.n_mean"
    assert info.value.line == 4
    assert "[line 4, field 'scene.n_mean']" in str(info.value)


def test_field_error_inside_a_flow_mapping(tmp_path, write_config):
    document = {"command": "dmin", "scene": {"n_mean": 0.5},
                "dmin": {"sweep": "mu", "values": [1e4], "method": "rayleigh"}}
    with pytest.raises(ConfigError) as info:
        load_config(write_config(document))
    assert info.value.field == "dmin.method"
    assert info.value.line is not None


def test_empty_document(tmp_path):
    with pytest.raises(ConfigError, match="empty"):
        load_config(write(tmp_path, "# nothing here\n"))


def test_document_must_be_a_mapping(tmp_path):
    with pytest.raises(ConfigError, match="mapping"):
        load_config(write(tmp_path, "- 1\n- 2\n"))


def test_parsed_dicts_have_no_line_numbers():
    with pytest.raises(ConfigError) as info:
        parse_config({"scene": {"n_mean": "bright"}})
    assert info.value.field == "scene.n_mean"
    assert info.value.line is None
