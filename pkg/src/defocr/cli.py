"""Batch command-line front end: gen, train, eval, recognize, saliency.

Machine-readable results go to stdout (JSON or plain strings), diagnostics
to stderr.  Exit codes: 0 success, 2 input or configuration error,
3 training divergence.
"""

import argparse
import json
import sys

from .checkpoint import checkpoint_load, checkpoint_save
from .config import RunConfig, load_run_config
from .data import load_dataset, read_pgm, save_dataset, write_heatmap_pgm
from .errors import (
    CheckpointError,
    ConfigError,
    DimensionError,
    RefusalError,
    TrainingDiverged,
)
from .lexicon import load_lexicon
from .model import grad_cam, recognize, word_accuracy
from .synth import make_dataset
from .train import train


def _run_config(args) -> RunConfig:
    if getattr(args, "config", None):
        return load_run_config(args.config)
    return RunConfig()


def _required(flag_value, cfg: RunConfig, key: str, what: str):
    """Flag wins over the config's paths entry; either must be present."""
    value = flag_value or cfg.paths.get(key)
    if not value:
        raise ConfigError(f"no {what} given (use the flag or paths.{key!r} in the config)")
    return value


def _load_image(path, model_cfg):
    img = read_pgm(path)
    expected = (model_cfg.image_h, model_cfg.image_w)
    if img.shape != expected:
        raise ConfigError(
            f"{path}: image is {img.shape[1]}x{img.shape[0]}, "
            f"expected {expected[1]}x{expected[0]}"
        )
    return img[None, :, :]


def cmd_gen(args) -> int:
    cfg = _run_config(args)
    lex = load_lexicon(_required(args.lexicon, cfg, "lexicon", "lexicon file"))
    out_dir = _required(args.out_dir, cfg, "out_dir", "output directory")
    seed = cfg.train.seed if args.seed is None else args.seed
    samples = make_dataset(lex.words, args.count, seed, cfg.distort)
    save_dataset(out_dir, samples)
    print(f"wrote {len(samples)} samples to {out_dir}", file=sys.stderr)
    return 0


def cmd_train(args) -> int:
    cfg = _run_config(args)
    data_dir = _required(args.data, cfg, "data", "training data directory")
    val_dir = _required(args.val, cfg, "val", "validation data directory")
    out_path = _required(args.out_checkpoint, cfg, "checkpoint", "checkpoint path")
    dataset = load_dataset(data_dir)
    val_set = load_dataset(val_dir)

    def emit(row: dict) -> None:
        print(json.dumps(row), flush=True)

    params, _ = train(dataset, val_set, cfg.train, cfg.model, on_epoch=emit)
    checkpoint_save(params, cfg, out_path)
    print(f"checkpoint written to {out_path}", file=sys.stderr)
    return 0


def cmd_eval(args) -> int:
    params, run_cfg = checkpoint_load(args.checkpoint)
    dataset = load_dataset(args.data)
    lex = load_lexicon(args.lexicon) if args.lexicon else None
    use_crf = run_cfg.train.use_crf and not args.ablate_crf
    preds = [
        recognize(s.image, params, lexicon=lex, use_crf=use_crf) for s in dataset
    ]
    acc = word_accuracy(preds, [s.text for s in dataset])
    print(
        json.dumps(
            {
                "n": len(dataset),
                "word_accuracy": acc,
                "with_lexicon": lex is not None,
                "crf": use_crf,
            }
        )
    )
    return 0


def cmd_recognize(args) -> int:
    params, _ = checkpoint_load(args.checkpoint)
    image = _load_image(args.image, params.config)
    lex = load_lexicon(args.lexicon) if args.lexicon else None
    print(recognize(image, params, lexicon=lex))
    return 0


def cmd_saliency(args) -> int:
    params, _ = checkpoint_load(args.checkpoint)
    image = _load_image(args.image, params.config)
    write_heatmap_pgm(args.out, grad_cam(image, params))
    print(f"heatmap written to {args.out}", file=sys.stderr)
    return 0


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="defocr",
        description="Word-image recognizer: synthetic data, training, "
        "evaluation, recognition, and saliency maps.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="render a synthetic dataset")
    p.add_argument("--config", help="RunConfig JSON file")
    p.add_argument("--out-dir", help="directory for PGM images + labels.tsv")
    p.add_argument("--count", type=int, required=True, help="number of samples")
    p.add_argument("--lexicon", help="word list file, one word per line")
    p.add_argument("--seed", type=int, help="overrides the config's seed")
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("train", help="train a model and write a checkpoint")
    p.add_argument("--config", help="RunConfig JSON file")
    p.add_argument("--data", help="training dataset directory")
    p.add_argument("--val", help="validation dataset directory")
    p.add_argument("--out-checkpoint", help="where to write the checkpoint")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on a dataset")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True, help="dataset directory")
    p.add_argument("--lexicon", help="enable retrieval correction")
    p.add_argument(
        "--ablate-crf",
        action="store_true",
        help="decode with zero transitions (per-timestep argmax)",
    )
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("recognize", help="decode a single image")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--image", required=True, help="input PGM file")
    p.add_argument("--lexicon", help="enable retrieval correction")
    p.set_defaults(func=cmd_recognize)

    p = sub.add_parser("saliency", help="write a saliency heatmap PGM")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--image", required=True, help="input PGM file")
    p.add_argument("--out", required=True, help="output PGM path")
    p.set_defaults(func=cmd_saliency)

    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return args.func(args)
    except TrainingDiverged as ex:
        print(f"error: {ex}", file=sys.stderr)
        return 3
    except (ConfigError, DimensionError, RefusalError, CheckpointError, OSError) as ex:
        print(f"error: {ex}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
