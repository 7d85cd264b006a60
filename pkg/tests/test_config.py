from pathlib import Path

import pytest

from touchloc.config import ConfigError, ExperimentConfig, config_from_dict, dump_config, load_config

CONFIG_DIR = Path(__file__).resolve().parents[1] / "configs"


class TestRoundTrip:
    def test_default(self, tmp_path):
        p = tmp_path / "c.toml"
        p.write_text(dump_config(ExperimentConfig()))
        assert load_config(p) == ExperimentConfig()

    def test_modified(self, tmp_path):
        cfg = ExperimentConfig(particles=50, seeds=(3, 9), metrics=("hp",), lazy=False,
                               termination="mass", termination_value=0.9, output_dir='a "q" dir')
        p = tmp_path / "c.toml"
        p.write_text(dump_config(cfg))
        assert load_config(p) == cfg

    @pytest.mark.parametrize("path", sorted(CONFIG_DIR.glob("*.toml")), ids=lambda p: p.name)
    def test_shipped_configs_load(self, path):
        cfg = load_config(path)
        assert cfg.n_actions > 0


class TestStrictness:
    def test_unknown_key(self):
        with pytest.raises(ConfigError, match="unknown config key"):
            config_from_dict({"particle": 10})

    def test_nested_table(self, tmp_path):
        p = tmp_path / "c.toml"
        p.write_text("particles = 10\n[extra]\nx = 1\n")
        with pytest.raises(ConfigError, match="flat"):
            load_config(p)

    def test_bad_toml(self, tmp_path):
        p = tmp_path / "c.toml"
        p.write_text("particles = \n")
        with pytest.raises(ConfigError):
            load_config(p)

    @pytest.mark.parametrize("data", [
        {"particles": 1.5},
        {"particles": True},
        {"lazy": 1},
        {"d_T": "x"},
        {"seeds": 3},
        {"sensed_pose": [0, 0, 0]},
        {"scene": 3},
    ])
    def test_type_errors(self, data):
        with pytest.raises(ConfigError):
            config_from_dict(data)

    def test_int_promoted_to_float(self):
        assert config_from_dict({"d_T": 2}).d_T == 2.0

    def test_relative_mesh_path(self, tmp_path):
        cfg = config_from_dict({"scene": "m.obj"}, tmp_path)
        assert cfg.scene == str((tmp_path / "m.obj").resolve())


class TestValidation:
    @pytest.mark.parametrize("changes", [
        dict(particles=0),
        dict(n_human=0, n_sphere=0, n_normal=0, n_table=0),
        dict(n_human=4),
        dict(seeds=()),
        dict(seeds=(1, 1)),
        dict(metrics=()),
        dict(metrics=("ig", "foo")),
        dict(metrics=("human",), n_human=2),
        dict(termination="time"),
        dict(baseline_update="ig"),
        dict(rig="five"),
        dict(d_T=0.0),
        dict(sigma=-1.0),
        dict(prior_cov_diag=(0.03, 0.0, 0.03, 0.1)),
        dict(nocontact_multiplicity=0),
        dict(workers=0),
        dict(scene="mug"),
    ])
    def test_rejected(self, changes):
        with pytest.raises(ConfigError):
            ExperimentConfig(**changes)

    def test_action_counts(self):
        cfg = ExperimentConfig(n_human=3, n_sphere=1, n_normal=2, n_table=4)
        assert cfg.action_counts == dict(human=3, sphere=1, normal=2, table=4)
        assert cfg.n_actions == 10

    def test_replace_validates(self):
        with pytest.raises(ConfigError):
            ExperimentConfig().replace(particles=-1)
