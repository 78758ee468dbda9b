import pytest

from egan import config as cfg
from egan import dataset as ds


class TestConfigFile:
    def test_defaults_build_valid_configs(self):
        settings = cfg.merge_settings(None)
        train = cfg.build_train_config(settings, out_dir="/tmp/x")
        assert train.batch_size == 64
        assert train.steps == 6000
        assert train.synthetic is not None
        eval_config = cfg.build_evaluation_config(settings)
        assert eval_config.fid_repeats == 10

    def test_file_overrides_defaults(self, tmp_path):
        path = tmp_path / "c.ini"
        path.write_text("[train]\nsteps = 12\nbatch_size = 4\n\n[network]\nlatent_dim = 5\n")
        settings = cfg.merge_settings(cfg.load_config_file(path))
        assert settings["train"]["steps"] == 12
        assert settings["network"]["latent_dim"] == 5
        assert settings["train"]["seed"] == 0  # untouched default

    def test_flag_overrides_beat_file(self, tmp_path):
        path = tmp_path / "c.ini"
        path.write_text("[train]\nsteps = 12\n")
        settings = cfg.merge_settings(cfg.load_config_file(path), {"train": {"steps": 99}})
        assert settings["train"]["steps"] == 99

    def test_unknown_key_rejected(self, tmp_path):
        path = tmp_path / "c.ini"
        path.write_text("[train]\nwarp_speed = 9\n")
        with pytest.raises(cfg.ConfigError):
            cfg.load_config_file(path)

    def test_unparseable_value_rejected(self, tmp_path):
        path = tmp_path / "c.ini"
        path.write_text("[train]\nsteps = soon\n")
        with pytest.raises(cfg.ConfigError):
            cfg.load_config_file(path)

    def test_missing_file_rejected(self, tmp_path):
        with pytest.raises(cfg.ConfigError):
            cfg.load_config_file(tmp_path / "absent.ini")

    def test_settings_round_trip(self, tmp_path):
        settings = cfg.merge_settings(None, {"train": {"steps": 7}, "network": {"latent_dim": 3}})
        cfg.write_settings(settings, tmp_path / "echo.ini")
        back = cfg.merge_settings(cfg.load_config_file(tmp_path / "echo.ini"))
        assert back == settings

    def test_directory_kind_reads_schema(self, tmp_path):
        data = ds.generate_synthetic_dataset(ds.SyntheticConfig(n_images=4, seed=0))
        ds.save_dataset(data, ds.SYNTHETIC_SCHEMA, tmp_path / "d")
        settings = cfg.merge_settings(
            None, {"dataset": {"kind": "directory", "path": str(tmp_path / "d")}}
        )
        assert cfg.dataset_attribute_count(settings) == 4
        train = cfg.build_train_config(settings, out_dir="/tmp/x")
        assert train.dataset_dir == str(tmp_path / "d")
        assert train.synthetic is None

    def test_directory_kind_requires_path(self):
        settings = cfg.merge_settings(None, {"dataset": {"kind": "directory"}})
        with pytest.raises(cfg.ConfigError):
            cfg.build_train_config(settings, out_dir="/tmp/x")

    def test_connection_hidden_parsing(self):
        settings = cfg.merge_settings(None, {"network": {"connection_hidden": "64,32"}})
        network = cfg.build_network_config(settings)
        assert network.connection_hidden == (64, 32)
        settings = cfg.merge_settings(None, {"network": {"connection_hidden": ""}})
        assert cfg.build_network_config(settings).connection_hidden == ()
