# Copyright (c) 2025-2026 Luc Vincent. All Rights Reserved.
"""
Tests for configuration loading and validation.
"""

import pytest
import yaml


class TestConfigValidation:
    """Test config validation logic."""

    def test_valid_config_passes(self, sample_config_yaml):
        """Valid config should load without errors."""
        from src.config import load_config, validate_config

        config = load_config(str(sample_config_yaml))
        errors = validate_config(config)

        assert len(errors) == 0, f"Unexpected errors: {errors}"
        assert config.command == "envelope-lln"
        assert config.trials == 1000

    def test_unknown_command(self, temp_dir, sample_config_dict):
        """Unknown command should produce error."""
        from src.config import load_config, validate_config

        sample_config_dict["command"] = "three-envelopes"
        config_path = temp_dir / "config.yaml"
        with open(config_path, 'w') as f:
            yaml.dump(sample_config_dict, f)

        errors = validate_config(load_config(str(config_path)))

        assert any("Unknown command" in e for e in errors)

    def test_k_max_above_limit(self, temp_dir, sample_config_dict):
        """k_max above 60 should produce error."""
        from src.config import load_config, validate_config

        sample_config_dict["k_max"] = 61
        config_path = temp_dir / "config.yaml"
        with open(config_path, 'w') as f:
            yaml.dump(sample_config_dict, f)

        errors = validate_config(load_config(str(config_path)))

        assert any("k_max" in e for e in errors)

    def test_inverted_grid(self, sample_config_dict):
        """grid_lo above grid_hi should produce error."""
        from src.config import config_from_dict, validate_config

        sample_config_dict.update({"grid_lo": 5.0, "grid_hi": 1.0})
        errors = validate_config(config_from_dict(sample_config_dict))

        assert any("grid_lo" in e for e in errors)

    def test_pin_needs_statistical(self, sample_config_dict):
        """The pin labeling should be rejected with the pure formulation."""
        from src.config import config_from_dict, validate_config

        sample_config_dict.update({"labeling": "pin", "formulation": "pure"})
        errors = validate_config(config_from_dict(sample_config_dict))

        assert any("pin" in e for e in errors)

    def test_bool_is_not_an_integer(self, sample_config_dict):
        """YAML booleans should not pass as trial counts."""
        from src.config import config_from_dict, validate_config

        sample_config_dict["trials"] = True
        errors = validate_config(config_from_dict(sample_config_dict))

        assert any("trials" in e for e in errors)

    @pytest.mark.parametrize("field_name,value", [
        ("seed", -1),
        ("chunk_size", 0),
        ("workers", 0),
        ("trace_stride", 0),
        ("alpha", -2.0),
        ("density_scale", 0.0),
        ("format", "xml"),
        ("criterion", "median"),
    ])
    def test_out_of_range_fields(self, sample_config_dict, field_name, value):
        """Each field should be checked on its own."""
        from src.config import config_from_dict, validate_config

        sample_config_dict[field_name] = value
        errors = validate_config(config_from_dict(sample_config_dict))

        assert len(errors) == 1, f"Expected one error, got {errors}"
        assert field_name in errors[0]


class TestConfigLoading:
    """Test finding and reading config files."""

    def test_unknown_keys_ignored(self, caplog):
        """Unknown keys should be dropped with a warning."""
        from src.config import config_from_dict

        config = config_from_dict({"command": "stpetersburg", "colour": "blue"})

        assert config.command == "stpetersburg"
        assert "colour" in caplog.text

    def test_dashed_keys(self):
        """Dashed keys should map onto field names."""
        from src.config import config_from_dict

        config = config_from_dict({"k-max": 20, "chunk-size": 128})

        assert config.k_max == 20
        assert config.chunk_size == 128

    def test_missing_explicit_file(self, temp_dir):
        """An explicit path that does not exist is an error."""
        from src.config import load_config
        from src.errors import ConfigError

        with pytest.raises(ConfigError, match="not found"):
            load_config(str(temp_dir / "absent.yaml"))

    def test_malformed_yaml(self, temp_dir):
        """Unparseable YAML is an error."""
        from src.config import load_config
        from src.errors import ConfigError

        config_path = temp_dir / "broken.yaml"
        config_path.write_text("command: [unclosed\n")

        with pytest.raises(ConfigError):
            load_config(str(config_path))

    def test_non_mapping_yaml(self, temp_dir):
        """A YAML list is not a config."""
        from src.config import load_config
        from src.errors import ConfigError

        config_path = temp_dir / "list.yaml"
        config_path.write_text("- one\n- two\n")

        with pytest.raises(ConfigError, match="mapping"):
            load_config(str(config_path))

    def test_no_file_uses_defaults(self, temp_dir, monkeypatch):
        """With no file in the search path, defaults apply."""
        from src import config as config_module

        monkeypatch.setattr(config_module, "DEFAULT_CONFIG_PATHS", [str(temp_dir / "none.yaml")])
        config = config_module.load_config()

        assert config.command == "envelope-naive"
        assert config.grid_n == 30000

    def test_save_and_reload(self, temp_dir, sample_config_yaml):
        """A saved config should load back to the same settings."""
        from src.config import config_to_dict, load_config, save_config

        config = load_config(str(sample_config_yaml))
        path = save_config(config, str(temp_dir / "nested" / "saved.yaml"))

        assert config_to_dict(load_config(path)) == config_to_dict(config)


class TestConfigDefaults:
    """Test default values."""

    def test_envelope_defaults(self):
        """Envelope defaults should match the documented grid."""
        from src.config import RunConfig

        config = RunConfig()
        assert config.grid_lo == 0.0
        assert config.grid_hi == 30.0
        assert config.grid_n == 30000
        assert config.grid_align == "right"
        assert config.density == "expon"
        assert config.alpha == 2.0

    def test_stpetersburg_defaults(self):
        """St. Petersburg defaults should be a shallow pure model."""
        from src.config import RunConfig

        config = RunConfig()
        assert config.k_max == 10
        assert config.m == 3
        assert config.formulation == "pure"
        assert config.labeling == "coin"

    def test_seed_from_environment(self, monkeypatch):
        """ENVELOPES_SEED should set the default seed."""
        from src.config import RunConfig

        monkeypatch.setenv("ENVELOPES_SEED", "99")
        assert RunConfig().seed == 99

    def test_seed_fallback(self, monkeypatch):
        """Without ENVELOPES_SEED the fallback seed is used."""
        from src.config import FALLBACK_SEED, RunConfig

        monkeypatch.delenv("ENVELOPES_SEED", raising=False)
        assert RunConfig().seed == FALLBACK_SEED

    def test_bad_seed_variable(self, monkeypatch):
        """A non-integer ENVELOPES_SEED is a config error."""
        from src.config import RunConfig
        from src.errors import ConfigError

        monkeypatch.setenv("ENVELOPES_SEED", "abc")
        with pytest.raises(ConfigError, match="ENVELOPES_SEED"):
            RunConfig()

    def test_runtime_fields_excluded(self):
        """Output destination should not be embedded in reports."""
        from src.config import RunConfig, config_to_dict

        config = RunConfig(output="out.json", format="json")
        assert "output" not in config_to_dict(config)
        assert config_to_dict(config, include_runtime=True)["output"] == "out.json"
