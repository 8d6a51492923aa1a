import pytest

from growprune.config import RunConfig, apply_overrides, load_config
from growprune.errors import ConfigError


class TestPaperDefaults:
    def test_server_schedule_defaults(self):
        sched = RunConfig(model_kind="server").schedule()
        assert sched.learning_rate == 0.005
        assert sched.batch_size == 256
        assert sched.plateau_patience == 50
        assert sched.dropout_rate == 0.2
        assert sched.seed_fill_rate == 0.2
        assert sched.growth_ratio == 0.2
        assert sched.growth_epochs == 3
        assert sched.initial_pruning_ratio == 0.2
        assert sched.pruning_ratio_floor == 0.01
        assert sched.momentum == 0.9
        assert sched.lr_decay_factor == 10.0

    def test_edge_schedule_defaults(self):
        sched = RunConfig(model_kind="edge").schedule()
        assert sched.learning_rate == 0.001
        assert sched.batch_size == 64
        assert sched.plateau_patience == 30
        # grow-and-prune settings are shared with the server recipe
        assert sched.seed_fill_rate == 0.2
        assert sched.growth_ratio == 0.2
        assert sched.initial_pruning_ratio == 0.2

    def test_reference_model_sizes_are_the_defaults(self):
        cfg = RunConfig()
        assert cfg.server_hidden_widths == (1024, 512, 256, 128, 64)
        assert cfg.edge_state_width == 96
        assert cfg.num_classes == 2

    def test_explicit_value_beats_kind_default(self):
        cfg = RunConfig(model_kind="edge", learning_rate=0.5)
        assert cfg.schedule().learning_rate == 0.5


class TestParsing:
    def test_config_file_round_trip(self, tmp_path):
        path = tmp_path / "run.cfg"
        path.write_text(
            "# comment\n"
            "model_kind=edge\n"
            "subjects_per_class=4,4\n"
            "edge_state_width=16   # inline comment\n"
            "stop_at_sparsity=0.9\n"
            "learning_rate=0.02\n"
            "\n")
        cfg = load_config(path)
        assert cfg.model_kind == "edge"
        assert cfg.subjects_per_class == (4, 4)
        assert cfg.edge_state_width == 16
        assert cfg.stop_at_sparsity == 0.9
        assert cfg.learning_rate == 0.02

    def test_none_spellings(self):
        cfg = RunConfig()
        apply_overrides(cfg, ["stop_at_sparsity=none", "batch_size=None"])
        assert cfg.stop_at_sparsity is None
        assert cfg.batch_size is None

    def test_unknown_key(self):
        with pytest.raises(ConfigError):
            apply_overrides(RunConfig(), ["nope=1"])

    def test_bad_int(self):
        with pytest.raises(ConfigError):
            apply_overrides(RunConfig(), ["growth_epochs=three"])

    def test_missing_equals_in_file(self, tmp_path):
        path = tmp_path / "bad.cfg"
        path.write_text("model_kind server\n")
        with pytest.raises(ConfigError):
            load_config(path)

    def test_bad_precision_rejected(self):
        cfg = RunConfig(precision="float16")
        with pytest.raises(ConfigError):
            cfg.dtype()

    def test_bad_kind_rejected(self):
        with pytest.raises(ConfigError):
            RunConfig(model_kind="tablet").schedule()
