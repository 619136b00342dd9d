import pytest

from cnnscope.config import ALL_VIEWS, RunConfig, build_config, parse_config_file


class TestParse:
    def test_file_and_overrides(self, tmp_path):
        cfg_file = tmp_path / "run.cfg"
        cfg_file.write_text(
            """
            # training setup
            lr = 0.01
            batch_size = 25
            epochs = 3
            views = "weight_grid,trajectory"
            prune_mode = auto
            """
        )
        cfg = build_config(parse_config_file(str(cfg_file)), {"lr": 0.002, "traj_dims": "3,4,5"})
        assert cfg.lr == 0.002  # flag wins over file
        assert cfg.batch_size == 25 and cfg.epochs == 3
        assert cfg.views == ("weight_grid", "trajectory")
        assert cfg.traj_dims == (3, 4, 5)
        assert cfg.prune_mode == "auto"

    def test_defaults(self):
        cfg = build_config()
        assert cfg.lr == 0.001 and cfg.batch_size == 50
        assert cfg.views == ALL_VIEWS
        assert cfg.pcc_threshold == 0.97
        assert cfg.prune_interval == 600
        assert cfg.snapshot_interval == 500

    def test_malformed_line(self, tmp_path):
        bad = tmp_path / "bad.cfg"
        bad.write_text("this is not a key value line\n")
        with pytest.raises(ValueError, match="expected"):
            parse_config_file(str(bad))

    def test_unknown_key(self):
        with pytest.raises(ValueError, match="unknown config key"):
            build_config({"warp_speed": 9})


class TestValidation:
    def test_lr_positive(self):
        with pytest.raises(ValueError, match="lr"):
            RunConfig(lr=0.0).validate()

    def test_dims_distinct(self):
        with pytest.raises(ValueError, match="distinct"):
            RunConfig(traj_dims=(0, 0, 1)).validate()

    def test_prune_interval_positive(self):
        with pytest.raises(ValueError):
            RunConfig(prune_interval=0).validate()

    def test_prune_mode_known(self):
        with pytest.raises(ValueError):
            RunConfig(prune_mode="sometimes").validate()

    def test_views_known(self):
        with pytest.raises(ValueError, match="unknown views"):
            RunConfig(views=("weight_grid", "sparkline")).validate()
