import json

import pytest

from multilap import errors
from multilap.config import load_config, merge_config


def test_defaults_load_without_a_file():
    cfg = load_config(None)
    assert cfg["power"]["p"] == 1.0
    assert cfg["eig"]["k"] == 10
    assert cfg["fastsum"]["N"] == 64
    assert cfg["ac"]["omega0"] == 1000.0
    assert cfg["bench"]["sbm"]["setup"] == "noisy-pair"


def test_defaults_are_a_fresh_copy():
    a = load_config(None)
    a["power"]["p"] = -20.0
    b = load_config(None)
    assert b["power"]["p"] == 1.0


def test_merge_overrides_nested_values():
    cfg = merge_config({"power": {"p": -5.0}, "eig": {"k": 3}})
    assert cfg["power"]["p"] == -5.0
    assert cfg["eig"]["k"] == 3
    assert cfg["eig"]["tol"] == 1e-8  # untouched siblings keep defaults


def test_unknown_keys_report_dotted_location():
    with pytest.raises(errors.ConfigError, match=r"power\.pee"):
        merge_config({"power": {"pee": 1}})
    with pytest.raises(errors.ConfigError, match=r"bench\.sbm\.nope"):
        merge_config({"bench": {"sbm": {"nope": True}}})
    with pytest.raises(errors.ConfigError, match="whatever"):
        merge_config({"whatever": 1})


def test_section_type_mismatch_rejected():
    with pytest.raises(errors.ConfigError, match="power"):
        merge_config({"power": 3})


def test_grouping_groups_validated():
    ok = merge_config({"grouping": {"groups": [
        {"columns": [0, 1], "sigma": 1.0},
    ]}})
    assert ok["grouping"]["groups"][0]["sigma"] == 1.0
    with pytest.raises(errors.ConfigError, match="sigma"):
        merge_config({"grouping": {"groups": [{"columns": [0]}]}})
    with pytest.raises(errors.ConfigError, match="columns"):
        merge_config({"grouping": {"groups": [{"sigma": 1.0}]}})
    with pytest.raises(errors.ConfigError, match=r"groups\[0\]\.smoothing"):
        merge_config({"grouping": {"groups": [
            {"columns": [0], "sigma": 1.0, "smoothing": 2},
        ]}})
    with pytest.raises(errors.ConfigError):
        merge_config({"grouping": {"groups": []}})
    with pytest.raises(errors.ConfigError):
        merge_config({"grouping": {"groups": ["zap"]}})


def test_load_config_file_round_trip(tmp_path):
    path = tmp_path / "run.json"
    path.write_text(json.dumps({"power": {"p": -20.0}, "input": {"n_nodes": 7}}))
    cfg = load_config(path)
    assert cfg["power"]["p"] == -20.0
    assert cfg["input"]["n_nodes"] == 7


def test_load_config_bad_json_reports_position(tmp_path):
    path = tmp_path / "broken.json"
    path.write_text('{"power": {"p": }}')
    with pytest.raises(errors.ConfigError, match="line 1"):
        load_config(path)


def test_load_config_missing_file(tmp_path):
    with pytest.raises(errors.ConfigError, match="cannot read"):
        load_config(tmp_path / "nope.json")


def test_load_config_non_object_root(tmp_path):
    path = tmp_path / "lst.json"
    path.write_text("[1, 2]")
    with pytest.raises(errors.ConfigError, match="object"):
        load_config(path)
