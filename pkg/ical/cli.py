"""Command-line entry point.

Usage::

    ical synth --seed 7 --n 100 --out data/synth
    ical train --preset toy --data data/synth --epochs 60 --out runs/toy
    ical eval --data data/synth --checkpoint runs/toy/checkpoints/best.params
    ical predict --data data/synth --checkpoint runs/toy --dump-implicit
    ical gradcheck --seed 3
    ical params --preset paper

Every command reads an optional YAML config (``--config``, else ``config.yml`` in the
working directory); flags override it. Logs go to the console and ``<out>/run.log``.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 numeric failure.
"""

from __future__ import annotations

import argparse
import logging
import pathlib
import sys
import time
from typing import Any

from ical.autograd.gradcheck import check_gradients
from ical.autograd.random import derive_rng
from ical.config import RunConfig, load_run_config
from ical.data.batch import make_batch
from ical.data.dataset import Sample, load_dataset, write_image_dataset
from ical.data.synth import synth_generate, synth_symbols
from ical.errors import (
    CheckpointError,
    ConfigError,
    ContractError,
    DataError,
    InkmlParseError,
    LabelMissingError,
    MaskError,
    NumericError,
    ShapeError,
    UnknownTokenError,
)
from ical.infer.evaluate import predict
from ical.infer.metrics import aggregate, score_predictions, write_per_sample_csv
from ical.models.cost import BASE_IMAGE, estimate_cost
from ical.models.ical import ICALModel
from ical.presets import PRESETS, ModelConfig, get_preset
from ical.train import checkpoint
from ical.train.loss import LossToggles, total_loss
from ical.train.trainer import Trainer, TrainSettings
from ical.vocab import RESERVED, Vocab, build_vocab, default_vocab, tokenize

logger = logging.getLogger(__name__)

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4

DATA_ERRORS = (
    ShapeError,
    UnknownTokenError,
    InkmlParseError,
    LabelMissingError,
    DataError,
    CheckpointError,
    OSError,
)
NUMERIC_ERRORS = (NumericError, MaskError, ContractError)

VOCAB_FILE = "vocab.txt"
PREDICTIONS_FILE = "predictions.tsv"
IMPLICIT_FILE = "implicit.tsv"
METRICS_FILE = "metrics.txt"
PARAMS_FILE = "params.txt"


# ================================================================
# ------------------------- helpers ------------------------------
# ================================================================


def _toggles(cfg: RunConfig) -> LossToggles:
    return LossToggles(initial=cfg.initial_loss, implicit=cfg.implicit_loss, fusion=cfg.fusion_loss)


def _model_config(preset: str, use_iccm: bool) -> ModelConfig:
    config = get_preset(preset)
    return config.model_copy(update={"use_iccm": config.use_iccm and use_iccm})


def _require_data(cfg: RunConfig) -> pathlib.Path:
    if cfg.data_dir is None:
        logger.error(f"'{cfg.command}' needs a dataset: pass --data or set data_dir")
        raise ConfigError(f"data_dir is required for {cfg.command}")
    return cfg.data_dir


def _require_checkpoints(cfg: RunConfig) -> list[pathlib.Path]:
    if not cfg.checkpoint:
        logger.error(f"'{cfg.command}' needs --checkpoint")
        raise ConfigError(f"checkpoint is required for {cfg.command}")
    return cfg.checkpoint


def _training_vocab(cfg: RunConfig, samples: list[Sample]) -> Vocab:
    if cfg.vocab_path is not None:
        return Vocab.from_file(cfg.vocab_path)
    bundled = cfg.data_dir / VOCAB_FILE
    if bundled.is_file():
        return Vocab.from_file(bundled)
    logger.info("No vocabulary file given; building one from the training labels")
    return build_vocab(s.label for s in samples)


def _checkpoint_vocab(cfg: RunConfig, meta: dict[str, Any]) -> Vocab:
    if cfg.vocab_path is not None:
        return Vocab.from_file(cfg.vocab_path)
    if "vocab" in meta:
        return Vocab(meta["vocab"])
    if cfg.data_dir is not None and (cfg.data_dir / VOCAB_FILE).is_file():
        return Vocab.from_file(cfg.data_dir / VOCAB_FILE)
    return default_vocab()


def load_model(cfg: RunConfig, path: pathlib.Path) -> tuple[ICALModel, Vocab]:
    """Rebuilds the model a checkpoint was trained with and loads its parameters.

    Preset, ICCM presence and vocabulary come from the checkpoint's metadata when
    present, else from the run configuration.
    """
    meta = checkpoint.read_meta(path)
    vocab = _checkpoint_vocab(cfg, meta)
    config = _model_config(meta.get("preset", cfg.preset), meta.get("use_iccm", True))
    model = ICALModel.build(config, len(vocab), seed=cfg.seed, dtype=cfg.precision)
    checkpoint.load_params(path, model)
    logger.info(f"Loaded {checkpoint.params_path(path)}")
    return model, vocab


def _resume_location(path: pathlib.Path) -> tuple[pathlib.Path, str]:
    if path.is_dir():
        return path, checkpoint.LAST
    return path.parent, path.with_suffix("").name


# ================================================================
# ------------------------- commands -----------------------------
# ================================================================


def cmd_synth(cfg: RunConfig) -> int:
    """Writes ``n`` synthetic samples, their labels, a manifest and the vocabulary."""
    generated = synth_generate(cfg.seed, cfg.n)
    samples = [Sample(s.id, s.image, tokenize(s.label)) for s in generated]
    vocab = Vocab(synth_symbols())
    for sample in samples:
        vocab.encode(sample.tokens)
    write_image_dataset(cfg.out_dir, samples, {"generator": "synth", "seed": cfg.seed, "n": cfg.n})
    vocab.save(cfg.out_dir / VOCAB_FILE)
    logger.info(f"Wrote {len(samples)} samples to {cfg.out_dir}")
    return EXIT_OK


def cmd_train(cfg: RunConfig) -> int:
    """Trains on ``data_dir`` and validates on ``val_dir`` (the training set if unset)."""
    data_dir = _require_data(cfg)
    toggles = _toggles(cfg)
    train = load_dataset(data_dir, cfg.image_height, cfg.workers)
    val = load_dataset(cfg.val_dir, cfg.image_height, cfg.workers) if cfg.val_dir is not None else None
    vocab = _training_vocab(cfg, train)
    for sample in [*train, *(val or [])]:
        vocab.encode(sample.tokens)
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    vocab.save(cfg.out_dir / VOCAB_FILE)

    config = _model_config(cfg.preset, toggles.use_iccm)
    model = ICALModel.build(config, len(vocab), seed=cfg.seed, dtype=cfg.precision)
    settings = TrainSettings(
        seed=cfg.seed,
        batch_size=cfg.batch_size,
        epochs=cfg.epochs,
        lr=cfg.lr,
        momentum=cfg.momentum,
        weight_decay=cfg.weight_decay,
        patience=cfg.patience,
        lr_factor=cfg.lr_factor,
        eval_every=cfg.eval_every,
        max_len=cfg.max_len,
        workers=cfg.workers,
    )
    meta = {"preset": cfg.preset, "use_iccm": config.use_iccm, "vocab": vocab.symbols[len(RESERVED) :]}
    trainer = Trainer(model, vocab, train, val, toggles, settings, cfg.out_dir, meta=meta)
    if cfg.checkpoint:
        trainer.resume(*_resume_location(cfg.checkpoint[0]))
    logger.info(f"Training with loss components {', '.join(toggles.active)}")
    trainer.fit()
    logger.info(f"Best validation ExpRate: {trainer.best_exprate:.4f}")
    return EXIT_OK


def cmd_eval(cfg: RunConfig) -> int:
    """Evaluates each checkpoint; several checkpoints also get a mean/std summary."""
    data_dir = _require_data(cfg)
    samples = load_dataset(data_dir, cfg.image_height, cfg.workers)
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    results, lines = [], []
    for i, path in enumerate(_require_checkpoints(cfg)):
        model, vocab = load_model(cfg, path)
        predictions = predict(model, samples, vocab, cfg.beam, cfg.max_len, cfg.workers)
        result = score_predictions([p.tokens for p in predictions], [s.tokens for s in samples], [s.id for s in samples])
        truncated = sum(p.truncated for p in predictions)
        if truncated:
            logger.warning(f"{truncated} of {len(predictions)} decodes hit max_len {cfg.max_len}")
        write_per_sample_csv(
            cfg.out_dir / f"samples_{i}.csv", result, [p.text for p in predictions], [s.label for s in samples]
        )
        logger.info(f"{path}: exprate={result.exprate:.4f} leq1={result.leq1:.4f} leq2={result.leq2:.4f}")
        lines.append(f"# {path}\n{result.as_text()}")
        results.append(result)
    if len(results) > 1:
        summary = aggregate(results)
        lines.append("# aggregate\n" + "".join(f"{k}: {v}\n" for k, v in summary.items()))
        logger.info(
            f"Aggregate over {len(results)} runs: exprate {summary['exprate_mean']:.4f} "
            f"+/- {summary['exprate_std']:.4f}"
        )
    (cfg.out_dir / METRICS_FILE).write_text("\n".join(lines))
    return EXIT_OK


def cmd_predict(cfg: RunConfig, dump_implicit: bool = False) -> int:
    """Writes ``id<TAB>tokens`` per sample; optionally the ICCM stream and gate mean."""
    data_dir = _require_data(cfg)
    samples = load_dataset(data_dir, cfg.image_height, cfg.workers, require_label=False)
    model, vocab = load_model(cfg, _require_checkpoints(cfg)[0])
    predictions = predict(model, samples, vocab, cfg.beam, cfg.max_len, cfg.workers, with_implicit=dump_implicit)
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    (cfg.out_dir / PREDICTIONS_FILE).write_text("".join(f"{p.id}\t{p.text}\n" for p in predictions))
    if dump_implicit:
        if not model.has_iccm:
            logger.warning("Model has no ICCM; skipping the implicit dump")
        else:
            rows = [f"{p.id}\t{p.text}\t{' '.join(p.implicit)}\t{p.gate_mean:.6f}\n" for p in predictions]
            (cfg.out_dir / IMPLICIT_FILE).write_text("".join(rows))
    logger.info(f"Wrote {len(predictions)} predictions to {cfg.out_dir / PREDICTIONS_FILE}")
    return EXIT_OK


def cmd_gradcheck(cfg: RunConfig, entries: int = 2) -> int:
    """Finite-difference check of the full toy model at 64-bit on two synthetic images."""
    generated = synth_generate(cfg.seed, 2)
    vocab = Vocab(synth_symbols())
    batch = make_batch([Sample(s.id, s.image, tokenize(s.label)) for s in generated], vocab)
    model = ICALModel.build(_model_config("toy", True), len(vocab), seed=cfg.seed, dtype="float64")
    model.eval()
    toggles = _toggles(cfg)
    results = check_gradients(
        lambda: total_loss(model, batch, toggles)[0],
        dict(model.named_parameters()),
        max_entries=entries,
        rng=derive_rng(cfg.seed, "gradcheck"),
    )
    failed = [r for r in results if not r.passed]
    for r in failed:
        logger.error(f"{r.name}: max relative error {r.max_rel_error:.3e} over {r.checked} entries")
    logger.info(f"Gradient check: {len(results) - len(failed)}/{len(results)} tensors passed")
    return EXIT_NUMERIC if failed else EXIT_OK


def cmd_params(cfg: RunConfig) -> int:
    """Exact parameter count and the analytic FLOP estimate, with and without the ICCM."""
    vocab = Vocab.from_file(cfg.vocab_path) if cfg.vocab_path is not None else default_vocab()
    lines = []
    for use_iccm in (True, False):
        config = _model_config(cfg.preset, use_iccm)
        model = ICALModel.build(config, len(vocab), seed=cfg.seed)
        report = estimate_cost(config, len(vocab), BASE_IMAGE)
        title = "ical" if config.use_iccm else "baseline (no ICCM)"
        lines.append(
            f"# {cfg.preset} {title}, vocab {len(vocab)}, input {BASE_IMAGE}\n"
            f"exact params: {model.num_parameters()}\n{report.as_text()}"
        )
        logger.info(f"{title}: {model.num_parameters() / 1e6:.2f} M params, {report.total_flops / 1e9:.2f} GFLOPs")
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    (cfg.out_dir / PARAMS_FILE).write_text("\n".join(lines))
    return EXIT_OK


# ================================================================
# ------------------------ arguments -----------------------------
# ================================================================


def parse_args(argv: list[str] | None = None) -> argparse.Namespace:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=str, default=None, help="YAML run configuration.")
    common.add_argument("--seed", type=int, default=None, help="Root seed for every random stream.")
    common.add_argument("--preset", type=str, default=None, choices=sorted(PRESETS), help="Model preset.")
    common.add_argument("--out", dest="out_dir", type=str, default=None, help="Output directory.")
    common.add_argument("--data", dest="data_dir", type=str, default=None, help="Dataset directory.")
    common.add_argument("--vocab", dest="vocab_path", type=str, default=None, help="Vocabulary file.")
    common.add_argument(
        "--checkpoint",
        action="append",
        default=None,
        help="Checkpoint (.params file, stem or directory). Repeat for several runs.",
    )
    common.add_argument("--beam", type=int, default=None, help="Beam width. [default: 10]")
    common.add_argument("--max-len", dest="max_len", type=int, default=None, help="Decode length limit.")
    common.add_argument("--precision", type=str, default=None, choices=["float32", "float64"])
    common.add_argument("--workers", type=int, default=None, help="Threads for loading and decoding.")
    common.add_argument("--image-height", dest="image_height", type=int, default=None, help="InkML raster height.")
    common.add_argument(
        "--no-implicit-loss",
        dest="implicit_loss",
        action="store_const",
        const=False,
        default=None,
        help="Disable the weighted implicit cross-entropy.",
    )
    common.add_argument(
        "--no-fusion-loss",
        dest="fusion_loss",
        action="store_const",
        const=False,
        default=None,
        help="Disable the fusion cross-entropy.",
    )

    parser = argparse.ArgumentParser(prog="ical", description="Handwritten math expression recognition")
    sub = parser.add_subparsers(dest="command", required=True)

    synth = sub.add_parser("synth", parents=[common], help="Generate a synthetic dataset.")
    synth.add_argument("--n", type=int, default=None, help="Number of samples. [default: 100]")

    train = sub.add_parser("train", parents=[common], help="Train a model.")
    train.add_argument("--val", dest="val_dir", type=str, default=None, help="Validation dataset directory.")
    train.add_argument("--epochs", type=int, default=None)
    train.add_argument("--batch-size", dest="batch_size", type=int, default=None)
    train.add_argument("--lr", type=float, default=None)
    train.add_argument("--eval-every", dest="eval_every", type=int, default=None)

    sub.add_parser("eval", parents=[common], help="Score checkpoints against a labeled dataset.")

    pred = sub.add_parser("predict", parents=[common], help="Recognize every image of a dataset.")
    pred.add_argument("--dump-implicit", action="store_true", help="Also write the ICCM stream and gate mean.")

    grad = sub.add_parser("gradcheck", parents=[common], help="Finite-difference check of the toy model.")
    grad.add_argument("--entries", type=int, default=2, help="Entries checked per parameter tensor.")

    sub.add_parser("params", parents=[common], help="Parameter and FLOP report.")
    return parser.parse_args(argv)


CLI_ONLY = {"config", "dump_implicit", "entries"}


def setup_logging(out_dir: pathlib.Path | None) -> None:
    handlers: list[logging.Handler] = [logging.StreamHandler()]
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
        handlers.insert(0, logging.FileHandler(out_dir / "run.log"))
    logging.basicConfig(
        level=logging.INFO,
        handlers=handlers,
        format="%(asctime)s | %(levelname)-7s | %(message)s",
        datefmt="%d-%b-%Y %H:%M:%S",
        force=True,
    )


def run(args: argparse.Namespace) -> int:
    overrides = {k: v for k, v in vars(args).items() if k not in CLI_ONLY}
    cfg = load_run_config(args.config, overrides)
    setup_logging(cfg.out_dir)
    logger.info(f"Run configuration:\n{cfg.dump()}")
    if cfg.command == "synth":
        return cmd_synth(cfg)
    if cfg.command == "train":
        return cmd_train(cfg)
    if cfg.command == "eval":
        return cmd_eval(cfg)
    if cfg.command == "predict":
        return cmd_predict(cfg, args.dump_implicit)
    if cfg.command == "gradcheck":
        return cmd_gradcheck(cfg, args.entries)
    return cmd_params(cfg)


def main(argv: list[str] | None = None) -> int:
    args = parse_args(argv)
    time_start = time.time()
    try:
        code = run(args)
    except ConfigError as e:
        if not logging.getLogger().handlers:
            setup_logging(None)
        logger.error(f"Configuration error: {e}")
        return EXIT_CONFIG
    except NUMERIC_ERRORS as e:
        logger.error(f"Numeric failure: {e}")
        return EXIT_NUMERIC
    except DATA_ERRORS as e:
        logger.error(f"Data error: {e}")
        return EXIT_DATA
    logger.info(f"Total run time: {time.time() - time_start:.2f} seconds")
    return code


if __name__ == "__main__":
    sys.exit(main())
