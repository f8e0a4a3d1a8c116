"""Configuration validation, file round-trips, overrides, RNG streams."""

import dataclasses

import pytest

from decoyctl import config
from decoyctl.config import ConfigError, ExperimentConfig


class TestValidation:
    def test_defaults_are_valid(self):
        ExperimentConfig().validate()

    def test_collects_every_problem(self):
        cfg = ExperimentConfig(steps=-1, t_s=0.0, key_bits=8, k_a=-2)
        with pytest.raises(ConfigError) as exc:
            cfg.validate()
        assert len(exc.value.problems) == 4

    def test_single_decoy_pool_needs_override(self):
        with pytest.raises(ConfigError, match="unsafe"):
            ExperimentConfig(pool_size=1).validate()
        ExperimentConfig(pool_size=1, allow_single_decoy=True).validate()

    def test_attack_kind_checked(self):
        with pytest.raises(ConfigError, match="attack"):
            ExperimentConfig(attack="wiretap").validate()
        ExperimentConfig(attack="replay").validate()

    def test_endpoint_format(self):
        ExperimentConfig(endpoint="localhost:9401").validate()
        for bad in ("nonsense", ":123", "host:", "host:abc"):
            with pytest.raises(ConfigError, match="endpoint"):
                ExperimentConfig(endpoint=bad).validate()

    def test_referenced_files_must_exist(self, tmp_path):
        missing = str(tmp_path / "nope.txt")
        for field in ("key_file", "pool_file", "waypoint_file"):
            with pytest.raises(ConfigError, match="does not exist"):
                ExperimentConfig(**{field: missing}).validate()


class TestFiles:
    def test_roundtrip(self, tmp_path):
        cfg = ExperimentConfig(steps=123, n_d=3, attack="replay", seed=9)
        file = tmp_path / "cfg.json"
        config.save_config(file, cfg)
        assert config.load_config(file) == cfg

    def test_unknown_key_rejected(self, tmp_path):
        file = tmp_path / "cfg.json"
        file.write_text('{"steps": 10, "speling": 1}')
        with pytest.raises(ConfigError, match="unknown config key"):
            config.load_config(file)

    def test_malformed_json_rejected(self, tmp_path):
        file = tmp_path / "cfg.json"
        file.write_text("{steps: 10")
        with pytest.raises(ConfigError, match="not valid JSON"):
            config.load_config(file)
        file.write_text("[1, 2]")
        with pytest.raises(ConfigError, match="JSON object"):
            config.load_config(file)

    def test_missing_file_rejected(self, tmp_path):
        with pytest.raises(ConfigError, match="cannot read"):
            config.load_config(tmp_path / "absent.json")


class TestOverrides:
    def test_none_values_skipped(self):
        cfg = ExperimentConfig(steps=50, seed=3)
        out = config.apply_overrides(cfg, {"steps": 99, "seed": None, "n_d": 4})
        assert out.steps == 99
        assert out.seed == 3
        assert out.n_d == 4
        assert cfg.steps == 50  # original untouched

    def test_identity_when_empty(self):
        cfg = ExperimentConfig()
        assert config.apply_overrides(cfg, {}) == cfg


class TestDerived:
    def test_robot_params_and_gains(self):
        cfg = ExperimentConfig(t_s=0.2, b=0.05, k_p=3.0, k_i=0.1,
                               wheel_radius=0.03, axle_length=0.11)
        params = cfg.robot_params()
        assert (params.wheel_radius, params.axle_length) == (0.03, 0.11)
        assert (params.t_s, params.b) == (0.2, 0.05)
        gains = cfg.gains()
        assert (gains.k_p, gains.k_i, gains.t_s) == (3.0, 0.1, 0.2)

    def test_rng_streams_deterministic_and_distinct(self):
        cfg = ExperimentConfig(seed=5)
        assert cfg.rng("plant").random() == cfg.rng("plant").random()
        assert cfg.rng("plant").random() != cfg.rng("cloud").random()
        other = dataclasses.replace(cfg, seed=6)
        assert cfg.rng("plant").random() != other.rng("plant").random()
