import json

import pytest

from modelwatch.config import build_config, parse_config
from modelwatch.errors import ConfigError

from conftest import PIPELINE_SCHEMA_DOC


def minimal_doc():
    return {
        "schema": json.loads(json.dumps(PIPELINE_SCHEMA_DOC)),
        "data": {"reference": "ref.csv", "current": "cur.csv"},
    }


class TestBuildConfig:
    def test_minimal_config_gets_defaults(self):
        cfg = build_config(minimal_doc())
        assert cfg.seed == 0
        assert cfg.bins == 10
        assert cfg.thresholds["psi"] == (0.1, 0.25)
        assert cfg.thresholds["ks"] == (0.05, 0.01)
        assert cfg.concept_p_threshold == 0.01
        assert cfg.numeric_metrics == ("ks", "psi", "jsd", "wasserstein1")
        assert cfg.model_command is None

    def test_effective_echo_contains_defaults(self):
        cfg = build_config(minimal_doc())
        assert cfg.effective["thresholds"]["psi"] == {"warn": 0.1, "fail": 0.25}
        assert cfg.effective["concept_drift"]["k"] == 1

    def test_threshold_ordering_violation(self):
        doc = minimal_doc()
        doc["thresholds"] = {"psi": {"warn": 0.5, "fail": 0.2}}
        with pytest.raises(ConfigError) as exc:
            build_config(doc)
        assert exc.value.pointer == "/thresholds/psi"

    def test_p_value_threshold_ordering(self):
        doc = minimal_doc()
        doc["thresholds"] = {"ks": {"warn": 0.001, "fail": 0.05}}
        with pytest.raises(ConfigError) as exc:
            build_config(doc)
        assert exc.value.pointer == "/thresholds/ks"

    def test_unknown_metric_lists_valid_names(self):
        doc = minimal_doc()
        doc["drift"] = {"numeric_metrics": ["ks", "chi2"]}
        with pytest.raises(ConfigError) as exc:
            build_config(doc)
        assert "chi2" in str(exc.value)
        assert "psi" in str(exc.value)

    def test_unknown_threshold_key(self):
        doc = minimal_doc()
        doc["thresholds"] = {"nope": {"warn": 0.1, "fail": 0.2}}
        with pytest.raises(ConfigError):
            build_config(doc)

    def test_unknown_segmentation_feature(self):
        doc = minimal_doc()
        doc["segmentation"] = {"features": ["ghost"]}
        with pytest.raises(ConfigError) as exc:
            build_config(doc)
        assert exc.value.pointer == "/segmentation/features"

    def test_missing_data_key(self):
        doc = minimal_doc()
        del doc["data"]["current"]
        with pytest.raises(ConfigError) as exc:
            build_config(doc)
        assert exc.value.pointer == "/data/current"

    def test_invalid_residual_test(self):
        doc = minimal_doc()
        doc["concept_drift"] = {"residual_test": "anderson"}
        with pytest.raises(ConfigError):
            build_config(doc)

    def test_invalid_alpha(self):
        doc = minimal_doc()
        doc["conformal"] = {"alpha": 1.5}
        with pytest.raises(ConfigError):
            build_config(doc)

    def test_bad_schema_reported_with_pointer(self):
        doc = minimal_doc()
        doc["schema"]["columns"].append({"name": "x0", "kind": "numeric"})
        with pytest.raises(ConfigError) as exc:
            build_config(doc)
        assert exc.value.pointer == "/schema"


class TestParseConfig:
    def test_round_trip(self, tmp_path):
        path = tmp_path / "config.json"
        path.write_text(json.dumps(minimal_doc()))
        cfg = parse_config(path)
        assert cfg.reference_path == tmp_path / "ref.csv"
        assert cfg.current_path == tmp_path / "cur.csv"

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError):
            parse_config(tmp_path / "nope.json")

    def test_invalid_json(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text("{not json")
        with pytest.raises(ConfigError):
            parse_config(path)
