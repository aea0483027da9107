"""Command-line entry point wiring the whole pipeline.

Subcommands: ingest, train, eval, sweep, boxplot, gradcheck.  Runs are
configured by a single JSON file (unknown keys rejected) with a few flag
overrides; flags win.  All artifacts are plain CSV/JSONL/binary files with
no timestamps, so reruns with identical inputs are byte-identical.

Exit codes: 0 success, 2 input/schema error, 3 missing resource or
dimension mismatch, 4 numeric divergence, 5 gradient-check failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import checkpoint
from .cemb import CembError
from .checkpoint import CheckpointError
from .data import (
    DataError,
    boxplot_stats,
    clean_dataset,
    load_dataset,
    save_dataset,
)
from .encoder import (
    EncoderConfig,
    init_encoder_params,
    load_pretrained_embeddings,
)
from .heads import head_init
from .model import FrozenEmbeddingModel, LocalEncoderModel, MissingEmbeddingError
from .synth import synthetic_dataset
from .tokenizer import build_vocab, load_vocab, save_vocab
from .training import (
    NonFiniteLossError,
    TrainConfig,
    evaluate,
    gradient_check,
    history_csv_lines,
    predictions,
    sweep,
    sweep_csv_lines,
    train,
)

EXIT_OK = 0
EXIT_SCHEMA = 2
EXIT_MISSING = 3
EXIT_DIVERGED = 4
EXIT_GRADCHECK = 5


class ConfigError(ValueError):
    pass


_CONFIG_KEYS = {
    "data": str,
    "test_data": str,
    "out_dir": str,
    "head": str,
    "head_widths": list,
    "dropout_rate": float,
    "embed_dim": int,
    "num_heads": int,
    "num_layers": int,
    "ffn_mult": int,
    "encoder_mode": str,
    "pooling_mode": str,
    "embeddings": str,
    "vocab": str,
    "batch_size": int,
    "learning_rate": float,
    "epochs": int,
    "beta1": float,
    "beta2": float,
    "eps": float,
    "weight_decay": float,
    "seed": int,
    "val_fraction": float,
}

_DEFAULTS = {
    "head": "kan",
    "head_widths": None,
    "dropout_rate": 0.2,
    "embed_dim": 16,
    "num_heads": 2,
    "num_layers": 2,
    "ffn_mult": 4,
    "test_data": None,
    "embeddings": None,
    "vocab": None,
}


def load_config(path, overrides: dict | None = None) -> dict:
    """Parse and validate the run-config JSON; unknown keys are rejected."""
    try:
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON: {exc}") from None
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: config must be a JSON object")
    unknown = set(raw) - set(_CONFIG_KEYS)
    if unknown:
        raise ConfigError(f"{path}: unknown config keys {sorted(unknown)}")
    config = dict(_DEFAULTS)
    config.update(raw)
    if overrides:
        config.update({k: v for k, v in overrides.items() if v is not None})
    for key in ("data", "out_dir"):
        if not config.get(key):
            raise ConfigError(f"{path}: missing required key {key!r}")
    for key, value in config.items():
        expected = _CONFIG_KEYS.get(key)
        if value is None or expected is None:
            continue
        if expected is float and isinstance(value, int) and not isinstance(value, bool):
            config[key] = float(value)
        elif not isinstance(value, expected) or isinstance(value, bool):
            raise ConfigError(f"{path}: key {key!r} must be {expected.__name__}")
    for key in ("data", "test_data", "embeddings", "vocab"):
        value = config.get(key)
        if value is not None and not Path(value).exists():
            raise FileNotFoundError(f"{key} path does not exist: {value}")
    return config


def _train_config(config: dict) -> TrainConfig:
    kwargs = {}
    for name in (
        "batch_size",
        "learning_rate",
        "epochs",
        "beta1",
        "beta2",
        "eps",
        "weight_decay",
        "seed",
        "val_fraction",
        "encoder_mode",
        "pooling_mode",
    ):
        if config.get(name) is not None:
            kwargs[name] = config[name]
    return TrainConfig(**kwargs)


def _build_model(config: dict, dataset, head_widths=None, head_kind=None):
    """Construct the model named by the config; returns (model, vocab)."""
    cfg = _train_config(config)
    kind = head_kind or config["head"]
    widths = head_widths if head_widths is not None else config["head_widths"]
    if config["vocab"]:
        vocab = load_vocab(config["vocab"])
    else:
        corpus = sorted({c.smiles for f in dataset for c in f.components})
        vocab = build_vocab(corpus)
    if cfg.encoder_mode == "frozen":
        if not config["embeddings"]:
            raise ConfigError("frozen encoder_mode requires an embeddings path")
        if cfg.pooling_mode == "sep_join":
            raise ConfigError(
                "sep_join pooling needs a local encoder (encoder_mode=finetune)"
            )
        embeddings = load_pretrained_embeddings(config["embeddings"])
        if not embeddings:
            raise ConfigError(f"embeddings file has no records: {config['embeddings']}")
        width = next(iter(embeddings.values())).values.shape[1]
        head = head_init(
            kind, width, widths, seed=cfg.seed, dropout_rate=config["dropout_rate"]
        )
        return FrozenEmbeddingModel(embeddings, head), vocab
    enc_cfg = EncoderConfig(
        embed_dim=config["embed_dim"],
        num_heads=config["num_heads"],
        num_layers=config["num_layers"],
        ffn_mult=config["ffn_mult"],
    )
    enc_params = init_encoder_params(enc_cfg, len(vocab), seed=cfg.seed)
    head = head_init(
        kind,
        enc_cfg.embed_dim,
        widths,
        seed=cfg.seed,
        dropout_rate=config["dropout_rate"],
    )
    model = LocalEncoderModel(
        enc_cfg,
        enc_params,
        vocab,
        head,
        pooling_mode=cfg.pooling_mode,
        train_encoder=True,
    )
    return model, vocab


def _write_lines(path: Path, lines: list[str]) -> None:
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def cmd_ingest(args) -> int:
    dataset = load_dataset(args.data)
    cleaned, report = clean_dataset(dataset)
    save_dataset(cleaned, args.out)
    print(f"loaded {len(dataset)} formulations from {args.data}")
    for removed_id, kept_id in report.removed:
        print(f"removed duplicate {removed_id} (same formulation as {kept_id})")
    print(f"wrote {len(cleaned)} formulations to {args.out}")
    return EXIT_OK


def cmd_train(args) -> int:
    config = load_config(args.config, overrides={"seed": args.seed, "epochs": args.epochs})
    out_dir = Path(config["out_dir"])
    out_dir.mkdir(parents=True, exist_ok=True)
    dataset = load_dataset(config["data"])
    test_set = load_dataset(config["test_data"]) if config["test_data"] else None
    model, vocab = _build_model(config, dataset)
    cfg = _train_config(config)
    history = train(model, dataset, cfg, test_set=test_set)
    _write_lines(out_dir / "history.csv", history_csv_lines(history))
    checkpoint.save_params(out_dir / "model.ckpt", history.best_params)
    save_vocab(vocab, out_dir / "vocab.txt")
    resolved = {k: config[k] for k in sorted(config)}
    (out_dir / "config.resolved.json").write_text(
        json.dumps(resolved, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    best = history.epochs[history.best_epoch]
    line = (
        f"best epoch {history.best_epoch}: val loss {best.val_loss:.6g}"
    )
    if best.test_rmse is not None:
        line += f", test RMSE {best.test_rmse:.6g}"
    print(line)
    return EXIT_OK


def cmd_eval(args) -> int:
    ckpt_dir = Path(args.checkpoint).parent
    config_path = args.config or str(ckpt_dir / "config.resolved.json")
    overrides = {}
    if (ckpt_dir / "vocab.txt").exists():
        overrides["vocab"] = str(ckpt_dir / "vocab.txt")
    config = load_config(config_path, overrides=overrides)
    dataset = load_dataset(args.data)
    model, _vocab = _build_model(config, dataset)
    params = checkpoint.load_params(args.checkpoint)
    own = model.all_params()
    if set(params) != set(own):
        raise CheckpointShapeError(sorted(set(params) ^ set(own)))
    for name, value in params.items():
        if own[name].shape != value.shape:
            raise CheckpointShapeError([name])
    model.set_params(params)
    metric = evaluate(model, dataset)
    rows = predictions(model, dataset)
    out = Path(args.out) if args.out else Path(args.checkpoint).parent / "parity.csv"
    _write_lines(
        out,
        ["id,actual_lce,predicted_lce"]
        + [f"{i},{a!r},{p!r}" for i, a, p in rows],
    )
    print(f"RMSE {metric.rmse!r} over {len(rows)} formulations; parity data in {out}")
    return EXIT_OK


class CheckpointShapeError(ValueError):
    def __init__(self, names):
        super().__init__(f"checkpoint does not match model parameters: {names}")


def cmd_sweep(args) -> int:
    config = load_config(args.config, overrides={"seed": args.seed})
    out_dir = Path(config["out_dir"])
    out_dir.mkdir(parents=True, exist_ok=True)
    dataset = load_dataset(config["data"])
    if config["test_data"]:
        test_set = load_dataset(config["test_data"])
    else:
        raise ConfigError("sweep requires test_data in the config")
    depths = [int(d) for d in args.depths.split(",") if d]
    widths = [int(w) for w in args.widths.split(",") if w]
    head_kind = args.head

    def factory(depth: int, width: int):
        if head_kind == "mlp":
            head_widths = [width] * max(depth - 1, 0)
        else:
            head_widths = [width] * depth
        model, _ = _build_model(config, dataset, head_widths=head_widths, head_kind=head_kind)
        return model

    cfg = _train_config(config)
    results = sweep(factory, head_kind, dataset, test_set, depths, widths, cfg)
    out = out_dir / f"sweep_{head_kind}.csv"
    _write_lines(out, sweep_csv_lines(results))
    print(f"wrote {len(results)} sweep rows to {out}")
    return EXIT_OK


def cmd_boxplot(args) -> int:
    dataset = load_dataset(args.data)
    stats = boxplot_stats(dataset)
    lines = ["component_count,min,q25,median,q75,max,outliers"]
    for count in sorted(stats):
        s = stats[count]
        outliers = ";".join(repr(v) for v in s.outliers)
        lines.append(
            f"{count},{s.minimum!r},{s.q25!r},{s.median!r},{s.q75!r},{s.maximum!r},{outliers}"
        )
    if args.out:
        _write_lines(Path(args.out), lines)
        print(f"wrote box-plot stats to {args.out}")
    else:
        for line in lines:
            print(line)
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    dataset = synthetic_dataset(6, seed=args.seed, components_range=(2, 3))
    corpus = sorted({c.smiles for f in dataset for c in f.components})
    vocab = build_vocab(corpus)
    enc_cfg = EncoderConfig(embed_dim=16, num_heads=2, num_layers=2)
    enc_params = init_encoder_params(enc_cfg, len(vocab), seed=args.seed)
    head = head_init(args.head, enc_cfg.embed_dim, None, seed=args.seed)
    model = LocalEncoderModel(enc_cfg, enc_params, vocab, head)
    error = gradient_check(
        model,
        list(dataset.formulations[:4]),
        max_checks=200,
        seed=args.seed,
        corrupt=args.corrupt,
    )
    print(f"gradient check (float64): max relative error {error:.3e}")
    if error < 1e-4:
        print("PASS")
        return EXIT_OK
    print("FAIL")
    return EXIT_GRADCHECK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="elyte",
        description="Electrolyte LCE prediction pipeline",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="validate, clean and re-emit a dataset")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("train", help="fine-tune a head (and optionally encoder)")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--epochs", type=int, default=None)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint; write parity CSV")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--config", default=None)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("sweep", help="depth x width ablation grid")
    p.add_argument("--config", required=True)
    p.add_argument("--depths", required=True)
    p.add_argument("--widths", required=True)
    p.add_argument("--head", choices=("mlp", "kan"), required=True)
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("boxplot", help="LCE distribution stats per component count")
    p.add_argument("--data", required=True)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_boxplot)

    p = sub.add_parser("gradcheck", help="finite-difference gradient audit")
    p.add_argument("--head", choices=("mlp", "kan"), default="kan")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument(
        "--corrupt",
        action="store_true",
        help="perturb one analytic gradient; the check must then fail",
    )
    p.set_defaults(func=cmd_gradcheck)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (MissingEmbeddingError, CheckpointShapeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_MISSING
    except NonFiniteLossError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except (
        DataError,
        ConfigError,
        CembError,
        CheckpointError,
        FileNotFoundError,
        ValueError,
    ) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SCHEMA


def entrypoint() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
