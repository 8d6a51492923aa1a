"""Command-line entry point: synth, train, eval, sweep, inspect."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import datapipe, modelfile, synthdata
from .config import RunConfig, apply_config_file, apply_overrides
from .errors import ConfigError, DataError, FormatError, GrowPruneError, ParameterError
from .metrics import binary_metrics, confusion, count_flops, multiclass_metrics, round_percent
from .models import build_edge, build_server, predict
from .synthesis import SplitArrays, grow_and_prune, seed_init

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2

# rng sub-domains, so each pipeline stage draws from an independent stream
_RNG_SYNTH, _RNG_SPLIT, _RNG_INIT, _RNG_SEEDMASK, _RNG_TRAIN = range(1, 6)


def _rng(cfg: RunConfig, domain: int) -> np.random.Generator:
    return np.random.default_rng([cfg.seed, domain])


def _build_config(args) -> RunConfig:
    cfg = RunConfig()
    if args.config:
        apply_config_file(cfg, args.config)
    apply_overrides(cfg, args.set)
    if args.seed is not None:
        cfg.seed = args.seed
    if getattr(args, "out", None):
        cfg.out = args.out
    if getattr(args, "dataset", None):
        cfg.dataset = args.dataset
    if getattr(args, "format", None):
        cfg.format = args.format
    if getattr(args, "split", None):
        cfg.split = args.split
    return cfg


def _synth_config(cfg: RunConfig) -> synthdata.SynthConfig:
    return synthdata.SynthConfig(
        num_classes=cfg.num_classes,
        subjects_per_class=cfg.subjects_per_class,
        duration_min_s=cfg.duration_min_s,
        duration_max_s=cfg.duration_max_s,
        separation=cfg.separation,
    )


def cmd_synth(args) -> int:
    cfg = _build_config(args)
    if not cfg.out:
        raise ConfigError("synth needs an output directory (--out)")
    subjects = synthdata.synth_generate(_synth_config(cfg), _rng(cfg, _RNG_SYNTH))
    datapipe.save_dataset(subjects, cfg.out)
    per_class: dict[int, int] = {}
    windows = 0
    for s in subjects:
        per_class[s.label] = per_class.get(s.label, 0) + 1
        windows += len(datapipe.subject_windows(s))
    census = " ".join(f"class{c}={n}" for c, n in sorted(per_class.items()))
    print(f"subjects={len(subjects)} {census} instances={windows}")
    print(f"dataset written to {cfg.out}")
    return EXIT_OK


def _prepare(cfg: RunConfig, scaler=None):
    subjects = datapipe.load_dataset(cfg.dataset)
    instances = []
    for subject in subjects:
        instances.extend(datapipe.subject_windows(subject))
    ds = datapipe.split(instances, rng=_rng(cfg, _RNG_SPLIT))
    ds.scaler = scaler if scaler is not None else datapipe.fit_scaler(ds.by_split("train"))
    ds.instances = [ds.scaler.apply(inst) for inst in ds.instances]
    return ds


def _encode_all(ds, kind) -> SplitArrays:
    x_train, y_train = datapipe.encode_split(ds, kind, "train")
    x_val, y_val = datapipe.encode_split(ds, kind, "val")
    x_test, y_test = datapipe.encode_split(ds, kind, "test")
    return SplitArrays(x_train, y_train, x_val, y_val, x_test, y_test)


def _build_model(cfg: RunConfig):
    rng = _rng(cfg, _RNG_INIT)
    if cfg.model_kind == "server":
        return build_server(cfg.num_classes, rng, hidden_widths=cfg.server_hidden_widths,
                            dropout_rate=cfg.dropout_rate, dtype=cfg.dtype())
    if cfg.model_kind == "edge":
        return build_edge(cfg.num_classes, rng, state_width=cfg.edge_state_width,
                          hidden_width=cfg.edge_hidden_width, dropout_rate=cfg.dropout_rate,
                          dtype=cfg.dtype())
    raise ConfigError(f"model_kind must be server or edge, got {cfg.model_kind!r}")


def cmd_train(args) -> int:
    cfg = _build_config(args)
    if not cfg.dataset or not cfg.out:
        raise ConfigError("train needs --dataset and --out")
    ds = _prepare(cfg)
    labels = {inst.label for inst in ds.instances}
    if max(labels) >= cfg.num_classes:
        raise ConfigError(
            f"dataset has labels {sorted(labels)} but config says {cfg.num_classes} classes")
    data = _encode_all(ds, cfg.model_kind)
    sched = cfg.schedule()
    out = Path(cfg.out)
    state = report = None
    if args.resume and modelfile.has_checkpoint(out):
        model, _, state, report = modelfile.load_checkpoint(out)
        print(f"resuming from phase {state.phase}")
    else:
        model = _build_model(cfg)
        seed_init(model, sched.seed_fill_rate, _rng(cfg, _RNG_SEEDMASK))

    def checkpoint(st, mdl, rpt):
        modelfile.save_checkpoint(out, st, mdl, ds.scaler, rpt)

    model, report, state = grow_and_prune(
        model, data, sched, _rng(cfg, _RNG_TRAIN), report=report, state=state,
        checkpoint_cb=checkpoint, stop_after_phase=cfg.stop_after_phase)
    if not state.done:
        print(f"stopped after phase {state.phase}; checkpoint kept at {out}.ckpt.*")
        return EXIT_OK
    modelfile.save_model(model, ds.scaler, out)
    report_path = Path(cfg.report) if cfg.report else out.with_suffix(out.suffix + ".report.csv")
    report_path.write_text(report.epochs_csv(timing=False))
    events_path = out.with_suffix(out.suffix + ".events.csv")
    events_path.write_text(report.events_csv())
    if cfg.timing:
        out.with_suffix(out.suffix + ".timing.csv").write_text(report.epochs_csv(timing=True))
    print(f"model written to {out}")
    print(f"best_val_acc={report.best_val_acc!r} sparsity={model.sparsity()!r}")
    return EXIT_OK


def _metric_lines(model, split_name, y, preds) -> tuple[list[str], list[str]]:
    cm = confusion(preds, y, model.num_classes)
    cost = count_flops(model, seq_len=datapipe.STEPS_PER_WINDOW)
    stats = (binary_metrics(cm) if model.num_classes == 2
             else multiclass_metrics(cm)).as_dict()
    text = [f"split: {split_name} ({len(y)} instances)",
            "confusion matrix (rows=label, cols=prediction):"]
    text += ["  " + " ".join(f"{v:6d}" for v in row) for row in cm.counts]
    for name, value in stats.items():
        shown = "undefined" if value is None else f"{round_percent(value)}%"
        text.append(f"{name}: {shown}")
    text += [f"params_dense: {cost.total_dense}", f"params_nnz: {cost.total_nnz}",
             f"sparsity: {cost.sparsity:.4f}", f"flops: {cost.flops}"]
    csv = []
    for i in range(cm.k):
        for j in range(cm.k):
            csv.append(f"cm_{i}_{j},{cm.counts[i, j]}")
    for name, value in stats.items():
        csv.append(f"{name},{'' if value is None else repr(value)}")
    csv += [f"params_dense,{cost.total_dense}", f"params_nnz,{cost.total_nnz}",
            f"sparsity,{cost.sparsity!r}", f"flops,{cost.flops}"]
    return text, csv


def cmd_eval(args) -> int:
    cfg = _build_config(args)
    if not args.model or not cfg.dataset:
        raise ConfigError("eval needs --model and --dataset")
    model, scaler = modelfile.load_model(args.model)
    if scaler is None:
        raise ConfigError("model file has no scaler; cannot preprocess the dataset")
    ds = _prepare(cfg, scaler=scaler)
    labels = {inst.label for inst in ds.instances}
    if max(labels) >= model.num_classes:
        raise ConfigError(
            f"dataset labels {sorted(labels)} exceed the model's {model.num_classes} classes")
    x, y = datapipe.encode_split(ds, model.kind, cfg.split)
    if len(y) == 0:
        raise DataError(f"split {cfg.split!r} is empty")
    preds = predict(model, x)
    text, csv = _metric_lines(model, cfg.split, y, preds)
    print("\n".join(csv if cfg.format == "csv" else text))
    return EXIT_OK


def cmd_sweep(args) -> int:
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    rows = ["config,name,value"]
    for config_path in args.configs:
        cfg = RunConfig()
        apply_config_file(cfg, config_path)
        apply_overrides(cfg, args.set)
        if args.seed is not None:
            cfg.seed = args.seed
        tag = Path(config_path).stem
        if not cfg.dataset:
            raise ConfigError(f"{config_path}: sweep configs must set dataset=")
        cfg.out = str(out_dir / f"{tag}.model")
        train_args = argparse.Namespace(config=config_path, set=args.set, seed=args.seed,
                                        out=cfg.out, dataset=cfg.dataset, format=None,
                                        split=None, resume=False)
        cmd_train(train_args)
        model, scaler = modelfile.load_model(cfg.out)
        ds = _prepare(cfg, scaler=scaler)
        x, y = datapipe.encode_split(ds, model.kind, "test")
        preds = predict(model, x)
        _, csv = _metric_lines(model, "test", y, preds)
        rows += [f"{tag},{line}" for line in csv]
    (out_dir / "sweep.csv").write_text("\n".join(rows) + "\n")
    print(f"sweep results in {out_dir / 'sweep.csv'}")
    return EXIT_OK


def cmd_inspect(args) -> int:
    print(modelfile.describe(args.model))
    return EXIT_OK


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        # argparse defaults to exit code 2; usage errors are exit 1 here
        self.print_usage(sys.stderr)
        raise ConfigError(message)


def _add_common(sub):
    sub.add_argument("--config", help="key=value config file")
    sub.add_argument("--seed", type=int, default=None)
    sub.add_argument("--set", action="append", metavar="KEY=VALUE",
                     help="override any config field (repeatable)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="growprune",
                     description="sparse network synthesis on multi-rate sensor windows")
    subs = parser.add_subparsers(dest="command", required=True)

    p = subs.add_parser("synth", help="generate a synthetic labeled dataset")
    _add_common(p)
    p.add_argument("--out", help="output dataset directory")

    p = subs.add_parser("train", help="grow-and-prune training run")
    _add_common(p)
    p.add_argument("--dataset", help="dataset directory")
    p.add_argument("--out", help="output model file")
    p.add_argument("--resume", action="store_true", help="continue from a phase checkpoint")

    p = subs.add_parser("eval", help="evaluate a model file on a dataset split")
    _add_common(p)
    p.add_argument("--model", required=True)
    p.add_argument("--dataset", help="dataset directory")
    p.add_argument("--split", choices=["train", "val", "test"], default=None)
    p.add_argument("--format", choices=["text", "csv"], default=None)

    p = subs.add_parser("sweep", help="run several configs and concatenate their metrics")
    _add_common(p)
    p.add_argument("--configs", nargs="+", required=True)
    p.add_argument("--out", required=True, help="output directory")

    p = subs.add_parser("inspect", help="print a model file's header and census")
    p.add_argument("--model", required=True)
    return parser


_COMMANDS = {"synth": cmd_synth, "train": cmd_train, "eval": cmd_eval,
             "sweep": cmd_sweep, "inspect": cmd_inspect}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return _COMMANDS[args.command](args)
    except (ConfigError, ParameterError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, FormatError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except GrowPruneError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
