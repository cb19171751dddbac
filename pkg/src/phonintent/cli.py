"""Command-line surface.

Exit codes everywhere: 0 success, 1 runtime failure, 2 usage error. Every
metric-producing command prints exactly one ``accuracy=<value>`` line as its
last line of standard output.

A plain-text config file (``key = value`` pairs, ``#`` comments) can seed any
subcommand's flags via ``--config-file``; explicit flags win over the file,
the file wins over built-in defaults.
"""

from __future__ import annotations

import argparse
import json
import shutil
import sys
from pathlib import Path

import numpy as np

from . import corpus
from .errors import DataError, ToolkitError
from .experiments import (
    CONFIGS,
    GridSettings,
    NamedConfig,
    cross_validate,
    emit_plot,
    emit_report,
    sweep_context,
    sweep_size,
)
from .frontend import FittedFrontend, FrontEndKind, FrontendSpec
from .net import ModelConfig, load_checkpoint, save_checkpoint
from .optim import TrainHyper
from .trainer import TrainedModel, evaluate, micro_gradcheck, predictions, train

GRADCHECK_THRESHOLD = 1e-4


class UsageError(Exception):
    pass


# ---------------------------------------------------------------------------
# Parser construction


def _add_config_file(sp):
    sp.add_argument("--config-file", help="plain-text key = value defaults for this command")


def _add_model_flags(sp):
    sp.add_argument("--config", default="C5", help="named configuration C1..C5, or 'custom'")
    sp.add_argument("--kernels", help="4 comma-separated odd kernel sizes (implies custom)")
    sp.add_argument("--dilations", help="4 comma-separated dilation rates (implies custom)")
    sp.add_argument("--channels", type=int, default=128, help="hidden width of all conv layers")
    sp.add_argument("--dropout", type=float, default=0.3)


def _add_hyper_flags(sp):
    sp.add_argument("--epochs", type=int, default=50)
    sp.add_argument("--batch-size", type=int, default=32)
    sp.add_argument("--lr", type=float, default=0.0015, help="initial learning rate")
    sp.add_argument("--lr-final", type=float, default=1e-6, help="learning rate at the last step")
    sp.add_argument("--weight-decay", type=float, default=1e-4)


def _add_frontend_flag(sp, multiple=False):
    if multiple:
        sp.add_argument("--frontends", default="phone,panphone,allo",
                        help="comma-separated subset of phone,panphone,allo")
    else:
        sp.add_argument("--frontend", choices=["phone", "panphone", "allo"], required=True)
    sp.add_argument("--panphone", help="feature table TSV (default: panphone.tsv next to the manifest)")
    sp.add_argument("--standardize-allo", action="store_true",
                    help="scale allo features by train-split statistics")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="phonintent",
        description="Intent classification from phonetic representations with dilated 1-D CNNs.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    commands = {}

    sp = sub.add_parser("synth", help="generate a synthetic corpus with a known oracle")
    sp.add_argument("--out", required=True, help="output directory")
    sp.add_argument("--classes", type=int, default=6)
    sp.add_argument("--per-class", type=int, default=64, help="training utterances per class")
    sp.add_argument("--eval-per-class", type=int, default=0,
                    help="additional held-out utterances per class (written to eval.jsonl)")
    sp.add_argument("--vocab", type=int, default=18)
    sp.add_argument("--sig-len", type=int, default=3)
    sp.add_argument("--t-min", type=int, default=20)
    sp.add_argument("--t-max", type=int, default=40)
    sp.add_argument("--emb-dim", type=int, default=32)
    sp.add_argument("--noise-sigma", type=float, default=0.25)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--name", default="synthetic")
    _add_config_file(sp)
    commands["synth"] = sp

    sp = sub.add_parser("train", help="train one model and write a checkpoint directory")
    sp.add_argument("--manifest", required=True)
    sp.add_argument("--dev-manifest", help="enables best-dev checkpoint selection")
    sp.add_argument("--out", required=True, help="model output directory")
    sp.add_argument("--seed", type=int, default=0)
    _add_frontend_flag(sp)
    _add_model_flags(sp)
    _add_hyper_flags(sp)
    _add_config_file(sp)
    commands["train"] = sp

    sp = sub.add_parser("eval", help="evaluate a trained model directory on a manifest")
    sp.add_argument("--model", required=True, help="directory written by train")
    sp.add_argument("--manifest", required=True)
    sp.add_argument("--out", help="optional directory for per-example predictions")
    _add_config_file(sp)
    commands["eval"] = sp

    sp = sub.add_parser("cv", help="k-fold cross-validation")
    sp.add_argument("--manifest", required=True)
    sp.add_argument("--k", type=int, default=5)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--out", help="optional report directory")
    sp.add_argument("--jobs", type=int, default=1)
    _add_frontend_flag(sp)
    _add_model_flags(sp)
    _add_hyper_flags(sp)
    _add_config_file(sp)
    commands["cv"] = sp

    sp = sub.add_parser("sweep-context", help="frontends x configurations accuracy grid")
    sp.add_argument("--manifest", required=True, help="training manifest")
    sp.add_argument("--eval-manifest", required=True)
    sp.add_argument("--dev-manifest")
    sp.add_argument("--configs", default="C1,C2,C3,C4,C5")
    sp.add_argument("--seeds", default="0,1,2,3,4")
    sp.add_argument("--downsample-to", type=int,
                    help="subsample the training corpus to N per class first")
    sp.add_argument("--downsample-seed", type=int, default=0)
    sp.add_argument("--jobs", type=int, default=1)
    sp.add_argument("--out", required=True, help="report directory")
    _add_frontend_flag(sp, multiple=True)
    _add_model_flags(sp)
    _add_hyper_flags(sp)
    _add_config_file(sp)
    commands["sweep-context"] = sp

    sp = sub.add_parser("sweep-size", help="accuracy versus training examples per class")
    sp.add_argument("--manifest", required=True, help="training pool manifest")
    sp.add_argument("--eval-manifest", required=True)
    sp.add_argument("--splits", default="32,64,128,256,512")
    sp.add_argument("--seeds", default="0,1,2,3,4")
    sp.add_argument("--subsample-seed", type=int, default=0)
    sp.add_argument("--jobs", type=int, default=1)
    sp.add_argument("--out", required=True, help="report directory")
    _add_frontend_flag(sp)
    _add_model_flags(sp)
    _add_hyper_flags(sp)
    _add_config_file(sp)
    commands["sweep-size"] = sp

    sp = sub.add_parser("gradcheck", help="finite-difference check of the full model")
    sp.add_argument("--frontend", choices=["all", "phone", "panphone", "allo"], default="all")
    sp.add_argument("--h", type=float, default=1e-4)
    sp.add_argument("--samples", type=int, default=20, help="coordinates sampled per parameter")
    sp.add_argument("--seed", type=int, default=0)
    _add_config_file(sp)
    commands["gradcheck"] = sp

    return parser, commands


# ---------------------------------------------------------------------------
# Config files


def load_config_file(path) -> dict[str, str]:
    values = {}
    for lineno, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected 'key = value'")
        key, value = line.split("=", 1)
        values[key.strip().replace("-", "_")] = value.strip()
    return values


def apply_config_defaults(sp, values: dict[str, str]) -> None:
    by_dest = {a.dest: a for a in sp._actions}
    defaults = {}
    for key, raw in values.items():
        if key == "config_file":
            continue
        action = by_dest.get(key)
        if action is None:
            raise UsageError(f"unknown config key {key!r}")
        if isinstance(action, argparse._StoreTrueAction):
            if raw.lower() not in ("0", "1", "true", "false", "yes", "no"):
                raise UsageError(f"config key {key!r}: expected a boolean, got {raw!r}")
            defaults[key] = raw.lower() in ("1", "true", "yes")
        elif action.type is not None:
            try:
                defaults[key] = action.type(raw)
            except ValueError:
                raise UsageError(f"config key {key!r}: bad value {raw!r}") from None
        else:
            defaults[key] = raw
    sp.set_defaults(**defaults)


# ---------------------------------------------------------------------------
# Shared helpers


def _int_list(raw: str, flag: str) -> list[int]:
    try:
        return [int(tok) for tok in raw.split(",") if tok.strip() != ""]
    except ValueError:
        raise UsageError(f"{flag}: expected comma-separated integers, got {raw!r}") from None


def _named_config(args) -> NamedConfig:
    if args.kernels or args.dilations:
        if not (args.kernels and args.dilations):
            raise UsageError("--kernels and --dilations must be given together")
        kernels = _int_list(args.kernels, "--kernels")
        dilations = _int_list(args.dilations, "--dilations")
        if len(kernels) != 4 or len(dilations) != 4:
            raise UsageError("--kernels and --dilations need exactly 4 entries")
        return NamedConfig("custom", tuple(kernels), tuple(dilations))
    if args.config not in CONFIGS:
        raise UsageError(f"--config must be one of {sorted(CONFIGS)} or set --kernels/--dilations")
    return CONFIGS[args.config]


def _frontend_kind(name: str) -> FrontEndKind:
    return FrontEndKind(name)


def _load_table(args, manifest_path) -> corpus.FeatureTable | None:
    if args.panphone:
        return corpus.load_panphone_table(args.panphone)
    default = Path(manifest_path).parent / "panphone.tsv"
    if default.exists():
        return corpus.load_panphone_table(default)
    return None


def _require_table(table, kind) -> None:
    if kind is FrontEndKind.PANPHONE and table is None:
        raise DataError("panphone front-end needs --panphone (no panphone.tsv found)")


def _hyper(args) -> TrainHyper:
    return TrainHyper(
        lr0=args.lr,
        lr_final=args.lr_final,
        weight_decay=args.weight_decay,
        batch_size=args.batch_size,
        epochs=args.epochs,
    )


def _settings(args, table) -> GridSettings:
    return GridSettings(
        hyper=_hyper(args),
        channels=args.channels,
        dropout=args.dropout,
        table=table,
        standardize_allo=args.standardize_allo,
        jobs=getattr(args, "jobs", 1),
    )


def _print_accuracy(value: float) -> None:
    print(f"accuracy={value}")


# ---------------------------------------------------------------------------
# Commands


def cmd_synth(args) -> int:
    try:
        if args.per_class < 1:
            raise DataError("per_class must be >= 1")
        if args.eval_per_class < 0:
            raise DataError("eval_per_class must be >= 0")
        spec = corpus.SyntheticSpec(
            n_classes=args.classes,
            per_class=args.per_class + args.eval_per_class,
            vocab_size=args.vocab,
            sig_len=args.sig_len,
            t_min=args.t_min,
            t_max=args.t_max,
            emb_dim=args.emb_dim,
            noise_sigma=args.noise_sigma,
        )
    except DataError as e:
        raise UsageError(str(e)) from None
    out = Path(args.out)
    data = corpus.generate_synthetic(spec, args.seed, name=args.name)
    if args.eval_per_class > 0:
        train_ds, eval_ds = corpus.partition_per_class(data, args.per_class)
        corpus.write_manifest(out / "eval.jsonl", eval_ds)
    else:
        train_ds = data
    corpus.write_manifest(out / "train.jsonl", train_ds)
    table = corpus.random_feature_table(corpus.synthetic_phones(spec), args.seed)
    corpus.write_panphone_table(out / "panphone.tsv", table)
    print(f"wrote {out / 'train.jsonl'}: {len(train_ds)} utterances, {args.classes} classes")
    if args.eval_per_class > 0:
        print(f"wrote {out / 'eval.jsonl'}: {args.classes * args.eval_per_class} utterances")
    print(f"wrote {out / 'panphone.tsv'}: {spec.vocab_size} phones")
    return 0


def _save_model_dir(out: Path, model: TrainedModel, record, args) -> None:
    out.mkdir(parents=True, exist_ok=True)
    save_checkpoint(out / "model.picm", model.cfg, model.params)
    (out / "labels.txt").write_text("\n".join(model.labels.labels) + "\n", encoding="utf-8")
    meta = {
        "frontend": model.frontend.kind.value,
        "config_name": args.config if not args.kernels else "custom",
        "standardize_allo": bool(model.frontend.allo_mean is not None),
        "seed": args.seed,
    }
    if model.frontend.phone_vocab is not None:
        (out / "phones.txt").write_text(
            "\n".join(model.frontend.phone_vocab.symbols) + "\n", encoding="utf-8"
        )
    if model.frontend.kind is FrontEndKind.PANPHONE:
        src = args.panphone or Path(args.manifest).parent / "panphone.tsv"
        shutil.copyfile(src, out / "panphone.tsv")
    if model.frontend.allo_mean is not None:
        lines = ["dim\tmean\tscale"]
        for i, (m, s) in enumerate(zip(model.frontend.allo_mean, model.frontend.allo_scale)):
            lines.append(f"{i}\t{m!r}\t{s!r}")
        (out / "allo_stats.tsv").write_text("\n".join(lines) + "\n", encoding="utf-8")
    (out / "meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    log_lines = []
    for epoch, (loss, acc) in enumerate(zip(record.train_loss, record.train_acc)):
        log_lines.append(json.dumps({"epoch": epoch, "train_loss": loss, "train_acc": acc}))
    log_lines.append(
        json.dumps(
            {
                "seed": record.seed,
                "final_dev_acc": record.final_dev_acc,
                "best_dev_acc": record.best_dev_acc,
                "best_epoch": record.best_epoch,
                "seconds": record.seconds,
            }
        )
    )
    (out / "runlog.jsonl").write_text("\n".join(log_lines) + "\n", encoding="utf-8")


def load_model_dir(path) -> TrainedModel:
    path = Path(path)
    meta = json.loads((path / "meta.json").read_text(encoding="utf-8"))
    cfg, params = load_checkpoint(path / "model.picm")
    labels = corpus.LabelVocab(
        tuple((path / "labels.txt").read_text(encoding="utf-8").splitlines())
    )
    kind = FrontEndKind(meta["frontend"])
    fitted = FittedFrontend(kind, cfg.input_dim)
    if kind is FrontEndKind.PHONE:
        fitted.phone_vocab = corpus.PhoneVocab(
            tuple((path / "phones.txt").read_text(encoding="utf-8").splitlines())
        )
    elif kind is FrontEndKind.PANPHONE:
        fitted.table = corpus.load_panphone_table(path / "panphone.tsv")
    elif meta.get("standardize_allo"):
        rows = (path / "allo_stats.tsv").read_text(encoding="utf-8").splitlines()[1:]
        stats = np.array([[float(c) for c in r.split("\t")[1:]] for r in rows])
        fitted.allo_mean, fitted.allo_scale = stats[:, 0], stats[:, 1]
    return TrainedModel(params, cfg, fitted, labels)


def cmd_train(args) -> int:
    named = _named_config(args)
    kind = _frontend_kind(args.frontend)
    data = corpus.load_manifest(args.manifest)
    dev = corpus.load_manifest(args.dev_manifest) if args.dev_manifest else None
    table = _load_table(args, args.manifest)
    _require_table(table, kind)
    labels = corpus.build_label_vocab(data)
    from .experiments import _input_dim  # reuse the grid's dimension rule

    cfg = ModelConfig(
        kernels=named.kernels,
        dilations=named.dilations,
        channels=args.channels,
        dropout_rate=args.dropout,
        input_dim=_input_dim(kind, data),
        n_classes=len(labels),
    )
    spec = FrontendSpec(kind, table=table, standardize_allo=args.standardize_allo)
    model, record = train(data, dev, spec, cfg, _hyper(args), args.seed, labels=labels)
    _save_model_dir(Path(args.out), model, record, args)
    headline = record.best_dev_acc if dev is not None else record.train_acc[-1]
    print(f"trained {len(data)} utterances for {args.epochs} epochs; model in {args.out}")
    _print_accuracy(headline)
    return 0


def cmd_eval(args) -> int:
    model = load_model_dir(args.model)
    data = corpus.load_manifest(args.manifest)
    preds = predictions(model, data)
    accuracy = sum(1 for _, t, p in preds if t == p) / len(preds)
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        lines = [json.dumps({"id": i, "label": t, "pred": p}) for i, t, p in preds]
        (out / "predictions.jsonl").write_text("\n".join(lines) + "\n", encoding="utf-8")
    _print_accuracy(accuracy)
    return 0


def cmd_cv(args) -> int:
    named = _named_config(args)
    kind = _frontend_kind(args.frontend)
    data = corpus.load_manifest(args.manifest)
    table = _load_table(args, args.manifest)
    _require_table(table, kind)
    result = cross_validate(data, args.k, kind, named, args.seed, _settings(args, table))
    for fold, acc in enumerate(result.fold_accuracies):
        print(f"fold {fold}: accuracy={acc} (n={result.fold_sizes[fold]})")
    if args.out:
        out = Path(args.out)
        emit_report(result.report, out, notes=("model selection: final epoch (cross-validation folds have no dev split)",))
        lines = [json.dumps({"id": i, "label": t, "pred": p}) for i, t, p in result.predictions]
        (out / "predictions.jsonl").write_text("\n".join(lines) + "\n", encoding="utf-8")
    _print_accuracy(result.mean_accuracy)
    return 0


def cmd_sweep_context(args) -> int:
    kinds = []
    for tok in args.frontends.split(","):
        tok = tok.strip()
        if tok not in ("phone", "panphone", "allo"):
            raise UsageError(f"--frontends: unknown front-end {tok!r}")
        kinds.append(FrontEndKind(tok))
    configs = []
    for tok in args.configs.split(","):
        tok = tok.strip()
        if tok not in CONFIGS:
            raise UsageError(f"--configs: unknown configuration {tok!r}")
        configs.append(CONFIGS[tok])
    seeds = _int_list(args.seeds, "--seeds")
    data = corpus.load_manifest(args.manifest)
    evalset = corpus.load_manifest(args.eval_manifest)
    dev = corpus.load_manifest(args.dev_manifest) if args.dev_manifest else None
    if args.downsample_to:
        data = corpus.subsample_per_class(data, args.downsample_to, args.downsample_seed)
    table = _load_table(args, args.manifest)
    if any(k is FrontEndKind.PANPHONE for k in kinds):
        _require_table(table, FrontEndKind.PANPHONE)
    report = sweep_context(data, evalset, kinds, configs, seeds, _settings(args, table), dev=dev)
    selection = "best-dev checkpoint" if dev is not None else "final epoch (no dev split)"
    emit_report(report, args.out, notes=(f"model selection: {selection}",))
    emit_plot(report, Path(args.out) / "plot.svg")
    best = max(report.cells(), key=lambda c: c["mean"])
    print(f"report in {args.out}; best cell {best['frontend']}/{best['config']}")
    _print_accuracy(best["mean"])
    return 0


def cmd_sweep_size(args) -> int:
    named = _named_config(args)
    kind = _frontend_kind(args.frontend)
    splits = _int_list(args.splits, "--splits")
    seeds = _int_list(args.seeds, "--seeds")
    pool = corpus.load_manifest(args.manifest)
    evalset = corpus.load_manifest(args.eval_manifest)
    table = _load_table(args, args.manifest)
    _require_table(table, kind)
    report = sweep_size(
        pool, evalset, kind, named, seeds, _settings(args, table),
        splits=splits, subsample_seed=args.subsample_seed,
    )
    emit_report(report, args.out, notes=("model selection: final epoch (no dev split)",))
    emit_plot(report, Path(args.out) / "plot.svg")
    cells = report.cells()
    largest = max(cells, key=lambda c: c["split"])
    print(f"report in {args.out}")
    _print_accuracy(largest["mean"])
    return 0


def cmd_gradcheck(args) -> int:
    kinds = (
        [FrontEndKind.PHONE, FrontEndKind.PANPHONE, FrontEndKind.ALLO]
        if args.frontend == "all"
        else [FrontEndKind(args.frontend)]
    )
    worst = 0.0
    for kind in kinds:
        err = micro_gradcheck(kind, h=args.h, seed=args.seed, samples_per_entry=args.samples)
        print(f"gradcheck {kind.value}: max_rel_err={err:.3e}")
        worst = max(worst, err)
    print(f"max_rel_err={worst:.3e}")
    return 0 if worst < GRADCHECK_THRESHOLD else 1


DISPATCH = {
    "synth": cmd_synth,
    "train": cmd_train,
    "eval": cmd_eval,
    "cv": cmd_cv,
    "sweep-context": cmd_sweep_context,
    "sweep-size": cmd_sweep_size,
    "gradcheck": cmd_gradcheck,
}


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser, commands = build_parser()
    try:
        args = parser.parse_args(argv)
        if getattr(args, "config_file", None):
            apply_config_defaults(commands[args.command], load_config_file(args.config_file))
            args = parser.parse_args(argv)  # explicit flags still win
    except SystemExit as e:
        return e.code if isinstance(e.code, int) else 2
    except UsageError as e:
        print(f"usage error: {e}", file=sys.stderr)
        return 2
    try:
        return DISPATCH[args.command](args)
    except UsageError as e:
        print(commands[args.command].format_usage(), file=sys.stderr, end="")
        print(f"usage error: {e}", file=sys.stderr)
        return 2
    except ToolkitError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


def entrypoint() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
