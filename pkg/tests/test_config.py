"""Run-configuration parsing, validation, and round-trips."""

import pytest

from diar.config import (
    DEFAULTS,
    RunConfig,
    parse_config,
    parse_value,
    serialize_config,
)
from diar.errors import ConfigError


class TestParsing:
    def test_types_inferred(self):
        text = "a = 3\nb = 2.5\nc = true\nd = hello\ne = 1e-4\n"
        values = parse_config(text)
        assert values == {"a": 3, "b": 2.5, "c": True, "d": "hello", "e": 1e-4}

    def test_comments_and_blanks_skipped(self):
        values = parse_config("# header\n\nx = 1  # trailing\n")
        assert values == {"x": 1}

    def test_missing_equals_rejected(self):
        with pytest.raises(ConfigError) as err:
            parse_config("just some text\n")
        assert "line 1" in str(err.value)

    def test_parse_serialize_parse_identity(self):
        values = {
            "model.attractor": "ta",
            "encoder.dropout": 0.1,
            "epochs": 25,
            "encoder.use_csv_token": True,
            "paths.out_dir": "runs/exp1",
        }
        assert parse_config(serialize_config(values)) == values

    def test_defaults_roundtrip(self):
        assert parse_config(serialize_config(DEFAULTS)) == DEFAULTS

    def test_value_parsing_edge_cases(self):
        assert parse_value("false") is False
        assert parse_value("10") == 10
        assert isinstance(parse_value("10.0"), float)
        assert parse_value("adam-fixed") == "adam-fixed"


class TestRunConfig:
    def test_defaults_validate(self):
        cfg = RunConfig({})
        assert cfg["model.attractor"] == "ta"
        assert cfg.encoder_config().model_dim == 256
        assert cfg.ta_config().num_decoder_layers == 3
        assert cfg.ta_config().combiner.variant == "amp"
        assert cfg.ta_config().combiner.alpha == 1.0

    def test_unknown_key_rejected(self):
        with pytest.raises(ConfigError) as err:
            RunConfig({"encoder.hidden": 7})
        assert "encoder.hidden" in str(err.value)

    def test_eda_csv_requires_token(self):
        with pytest.raises(ConfigError):
            RunConfig({"model.attractor": "eda_csv", "encoder.use_csv_token": False})

    def test_ta_csv_combiner_requires_token(self):
        with pytest.raises(ConfigError):
            RunConfig(
                {
                    "model.attractor": "ta",
                    "ta.combiner": "add",
                    "encoder.use_csv_token": False,
                }
            )
        RunConfig(
            {
                "model.attractor": "ta",
                "ta.combiner": "none",
                "encoder.use_csv_token": False,
            }
        )

    def test_beta_table_defaults_follow_speaker_count_pattern(self):
        table = RunConfig({}).beta_table()
        assert table == {1: 2.0, 2: 2.0, 3: 5.0, 4: 9.0}

    def test_explicit_betas_must_cover_range(self):
        cfg = RunConfig(
            {
                "simulate.speaker_min": 1,
                "simulate.speaker_max": 3,
                "simulate.beta.1": 2.0,
                "simulate.beta.2": 2.0,
            }
        )
        with pytest.raises(ConfigError) as err:
            cfg.beta_table()
        assert "simulate.beta.3" in str(err.value)

    def test_build_model_matches_attractor_kind(self):
        cfg = RunConfig(
            {
                "model.attractor": "eda",
                "encoder.num_blocks": 1,
                "encoder.model_dim": 16,
                "encoder.heads": 2,
                "encoder.ff_dim": 16,
                "encoder.conv_kernel": 3,
                "encoder.use_csv_token": False,
            }
        )
        model = cfg.build_model()
        assert model.kind == "eda"

    def test_invalid_nested_field_caught_at_validation(self):
        with pytest.raises(ConfigError):
            RunConfig({"encoder.heads": 5})  # does not divide 256
