from pathlib import Path

import pytest

from growprune.cli import main
from growprune.modelfile import load_model

TINY_TRAIN_CFG = """
# reduced server run on a tiny synthetic dataset
model_kind=server
num_classes=2
server_hidden_widths=8
seed_fill_rate=0.3
growth_epochs=1
growth_ratio=0.2
initial_pruning_ratio=0.2
learning_rate=0.02
plateau_patience=3
batch_size=16
dropout_rate=0.1
max_epochs_per_phase=12
lr_decays_per_phase=1
stop_at_sparsity=0.75
"""

SYNTH_ARGS = ["--set", "subjects_per_class=3,3", "--set", "duration_min_s=180",
              "--set", "duration_max_s=220", "--set", "separation=2.0"]


def _synth(out, seed=5):
    assert main(["synth", "--out", str(out), "--seed", str(seed), *SYNTH_ARGS]) == 0


@pytest.fixture(scope="module")
def dataset(tmp_path_factory):
    out = tmp_path_factory.mktemp("data") / "ds"
    _synth(out)
    return out


@pytest.fixture(scope="module")
def train_cfg(tmp_path_factory):
    path = tmp_path_factory.mktemp("cfg") / "train.cfg"
    path.write_text(TINY_TRAIN_CFG)
    return path


@pytest.fixture(scope="module")
def trained_model(tmp_path_factory, dataset, train_cfg):
    out = tmp_path_factory.mktemp("model") / "m.gpnn"
    code = main(["train", "--config", str(train_cfg), "--dataset", str(dataset),
                 "--out", str(out), "--seed", "5"])
    assert code == 0
    return out


def _dir_bytes(root):
    return {p.relative_to(root): p.read_bytes() for p in sorted(Path(root).rglob("*"))
            if p.is_file()}


class TestSynth:
    def test_census_line(self, capsys, tmp_path):
        _synth(tmp_path / "ds")
        out = capsys.readouterr().out
        assert "subjects=6" in out
        assert "class0=3 class1=3" in out

    def test_same_seed_byte_identical_directories(self, tmp_path):
        _synth(tmp_path / "a")
        _synth(tmp_path / "b")
        a, b = _dir_bytes(tmp_path / "a"), _dir_bytes(tmp_path / "b")
        assert list(a) == list(b)
        assert all(a[k] == b[k] for k in a)

    def test_synth_requires_out(self):
        assert main(["synth", "--seed", "1"]) == 1


class TestTrain:
    def test_writes_model_and_reports(self, trained_model):
        assert trained_model.exists()
        report = trained_model.with_suffix(".gpnn.report.csv")
        events = trained_model.with_suffix(".gpnn.events.csv")
        assert report.exists() and events.exists()
        header = report.read_text().splitlines()[0]
        assert header == "phase,epoch,train_loss,train_acc,val_loss,val_acc,lr,sparsity"
        assert "census" in events.read_text()

    def test_final_sparsity_hits_config_target(self, trained_model):
        model, _ = load_model(trained_model)
        assert model.sparsity() >= 0.75

    def test_three_class_training_gives_three_logits(self, tmp_path, train_cfg):
        ds = tmp_path / "ds3"
        assert main(["synth", "--out", str(ds), "--seed", "7",
                     "--set", "num_classes=3", "--set", "subjects_per_class=2,2,2",
                     "--set", "duration_min_s=150", "--set", "duration_max_s=180",
                     "--set", "separation=2.0"]) == 0
        out = tmp_path / "m3.gpnn"
        assert main(["train", "--config", str(train_cfg), "--dataset", str(ds),
                     "--out", str(out), "--seed", "7", "--set", "num_classes=3",
                     "--set", "max_epochs_per_phase=3",
                     "--set", "initial_pruning_ratio=0.005"]) == 0
        model, _ = load_model(out)
        assert model.num_classes == 3
        assert model.layers[-1].out_width == 3

    def test_class_count_mismatch_is_config_error(self, tmp_path, dataset, train_cfg):
        out = tmp_path / "bad.gpnn"
        code = main(["train", "--config", str(train_cfg), "--dataset", str(dataset),
                     "--out", str(out), "--seed", "5", "--set", "num_classes=3"])
        # 2-class data trains fine as 3-class; the reverse must fail
        assert code == 0
        ds3 = tmp_path / "ds3"
        main(["synth", "--out", str(ds3), "--seed", "7", "--set", "num_classes=3",
              "--set", "subjects_per_class=2,2,2", "--set", "duration_min_s=150",
              "--set", "duration_max_s=160", "--set", "separation=1.0"])
        code = main(["train", "--config", str(train_cfg), "--dataset", str(ds3),
                     "--out", str(out), "--seed", "5"])
        assert code == 1

    def test_missing_dataset_is_data_error(self, tmp_path, train_cfg):
        code = main(["train", "--config", str(train_cfg), "--dataset",
                     str(tmp_path / "nothing"), "--out", str(tmp_path / "m.gpnn"),
                     "--seed", "1"])
        assert code == 2

    def test_unknown_config_key_is_usage_error(self, tmp_path, dataset):
        code = main(["train", "--dataset", str(dataset), "--out",
                     str(tmp_path / "m.gpnn"), "--set", "bogus_key=1"])
        assert code == 1


class TestResume:
    def test_abort_after_growth_then_resume_matches_single_run(self, tmp_path, dataset, train_cfg):
        full = tmp_path / "full.gpnn"
        assert main(["train", "--config", str(train_cfg), "--dataset", str(dataset),
                     "--out", str(full), "--seed", "5"]) == 0
        split_run = tmp_path / "split.gpnn"
        assert main(["train", "--config", str(train_cfg), "--dataset", str(dataset),
                     "--out", str(split_run), "--seed", "5",
                     "--set", "stop_after_phase=1"]) == 0
        assert not split_run.exists()  # only the checkpoint, run is unfinished
        assert main(["train", "--config", str(train_cfg), "--dataset", str(dataset),
                     "--out", str(split_run), "--seed", "5", "--resume"]) == 0
        assert split_run.read_bytes() == full.read_bytes()
        assert (split_run.with_suffix(".gpnn.report.csv").read_bytes()
                == full.with_suffix(".gpnn.report.csv").read_bytes())


class TestEval:
    def test_text_output(self, capsys, dataset, trained_model):
        code = main(["eval", "--model", str(trained_model), "--dataset", str(dataset),
                     "--seed", "5", "--split", "val"])
        assert code == 0
        out = capsys.readouterr().out
        assert "confusion matrix" in out
        assert "accuracy:" in out
        assert "flops:" in out

    def test_csv_output_one_metric_per_line(self, capsys, dataset, trained_model):
        code = main(["eval", "--model", str(trained_model), "--dataset", str(dataset),
                     "--seed", "5", "--split", "test", "--format", "csv"])
        assert code == 0
        lines = capsys.readouterr().out.strip().splitlines()
        parsed = dict(line.split(",", 1) for line in lines)
        for key in ("accuracy", "fpr", "fnr", "f1", "params_nnz", "flops",
                    "cm_0_0", "cm_1_1"):
            assert key in parsed
        float(parsed["accuracy"])  # values parse as numbers

    def test_eval_is_deterministic(self, capsys, dataset, trained_model):
        args = ["eval", "--model", str(trained_model), "--dataset", str(dataset),
                "--seed", "5", "--format", "csv"]
        assert main(args) == 0
        first = capsys.readouterr().out
        assert main(args) == 0
        assert capsys.readouterr().out == first

    def test_train_split_accuracy_near_validation(self, capsys, dataset, trained_model):
        # converged run: training-split accuracy within 5 points of best val acc
        events = trained_model.with_suffix(".gpnn.events.csv").read_text()
        final = [line for line in events.splitlines() if line.startswith("final,best")]
        best_val = float(final[0].split("val_acc=")[1])
        assert main(["eval", "--model", str(trained_model), "--dataset", str(dataset),
                     "--seed", "5", "--split", "train", "--format", "csv"]) == 0
        out = dict(line.split(",", 1) for line in capsys.readouterr().out.splitlines())
        assert float(out["accuracy"]) >= best_val - 0.05

    def test_eval_reproduces_reported_best_val_accuracy(self, capsys, dataset, trained_model):
        events = trained_model.with_suffix(".gpnn.events.csv").read_text()
        final = [line for line in events.splitlines() if line.startswith("final,best")]
        recorded = float(final[0].split("val_acc=")[1])
        assert main(["eval", "--model", str(trained_model), "--dataset", str(dataset),
                     "--seed", "5", "--split", "val", "--format", "csv"]) == 0
        out = dict(line.split(",", 1) for line in capsys.readouterr().out.splitlines())
        assert float(out["accuracy"]) == recorded

    def test_missing_model_is_data_error(self, tmp_path, dataset):
        assert main(["eval", "--model", str(tmp_path / "no.gpnn"),
                     "--dataset", str(dataset), "--seed", "5"]) == 2


class TestInspectAndSweep:
    def test_inspect(self, capsys, trained_model):
        assert main(["inspect", "--model", str(trained_model)]) == 0
        out = capsys.readouterr().out
        assert "kind: server" in out
        assert "model sparsity:" in out

    def test_sweep_concatenates_metrics(self, tmp_path, dataset, train_cfg):
        cfg_a = tmp_path / "a.cfg"
        cfg_a.write_text(TINY_TRAIN_CFG + f"\ndataset={dataset}\nmax_epochs_per_phase=3\n"
                         "initial_pruning_ratio=0.005\n")
        cfg_b = tmp_path / "b.cfg"
        cfg_b.write_text(TINY_TRAIN_CFG + f"\ndataset={dataset}\nmax_epochs_per_phase=3\n"
                         "initial_pruning_ratio=0.005\nseed_fill_rate=0.5\n")
        out_dir = tmp_path / "sweep"
        assert main(["sweep", "--configs", str(cfg_a), str(cfg_b),
                     "--out", str(out_dir), "--seed", "5"]) == 0
        rows = (out_dir / "sweep.csv").read_text().splitlines()
        assert rows[0] == "config,name,value"
        tags = {row.split(",")[0] for row in rows[1:]}
        assert tags == {"a", "b"}


class TestDeterminism:
    def test_synth_train_eval_pipeline_is_reproducible(self, tmp_path, train_cfg, capsys):
        outputs = []
        for run in ("r1", "r2"):
            ds = tmp_path / run / "ds"
            model = tmp_path / run / "m.gpnn"
            model.parent.mkdir(parents=True)
            _synth(ds, seed=11)
            assert main(["train", "--config", str(train_cfg), "--dataset", str(ds),
                         "--out", str(model), "--seed", "11"]) == 0
            capsys.readouterr()
            assert main(["eval", "--model", str(model), "--dataset", str(ds),
                         "--seed", "11", "--format", "csv"]) == 0
            outputs.append((model.read_bytes(),
                            model.with_suffix(".gpnn.report.csv").read_bytes(),
                            model.with_suffix(".gpnn.events.csv").read_bytes(),
                            capsys.readouterr().out))
        assert outputs[0] == outputs[1]
