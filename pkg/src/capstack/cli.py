"""Command-line surface: synth, train, caption, eval, augment, gradcheck.

Exit codes: 0 success, 2 usage or domain errors, 3 data/format errors.
A config file of key=value lines overrides built-in defaults; explicit flags
override the file.  Every run echoes its effective configuration to stderr.
"""

from __future__ import annotations

import argparse
import dataclasses
import os
import sys

import numpy as np

from .augment import random_perspective, read_ppm, write_ppm
from .captioner import (
    ModelConfig,
    beam_decode,
    build_model,
    collect_alphas,
    greedy_decode,
)
from .attention import alpha_records
from .errors import FormatError
from .features import (
    generate_synthetic_dataset,
    read_features,
    read_manifest,
    toy_patch_encode,
    write_features,
    write_manifest,
)
from .gradcheck import TINY_DIMS, model_gradcheck
from .metrics import bleu, cider, meteor_lite, read_caption_records
from .text import Vocabulary, build_vocab, load_embedding_file, tokenize
from .train import TrainConfig, build_samples, checkpoint_load, checkpoint_save, fit_loop

GRADCHECK_TOLERANCE = 1e-4


def read_config_file(path):
    """key=value lines; blank lines and #-comments are ignored."""
    config = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            key, sep, value = line.partition("=")
            if not sep or not key.strip():
                raise FormatError(f"{path}: line {lineno}: expected key=value")
            config[key.strip()] = value.strip()
    return config


def _convert(value, target_type):
    if target_type is bool:
        lowered = value.lower()
        if lowered in ("1", "true", "yes", "on"):
            return True
        if lowered in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"expected a boolean, got {value!r}")
    return target_type(value)


def _train_config(file_config, overrides):
    defaults = TrainConfig()
    known = {f.name: type(getattr(defaults, f.name)) for f in dataclasses.fields(TrainConfig)}
    kwargs = {}
    for key, raw in file_config.items():
        if key not in known:
            raise ValueError(f"unknown training config key {key!r}")
        kwargs[key] = _convert(raw, known[key])
    kwargs.update(overrides)
    return TrainConfig(**kwargs)


def _echo_config(command, settings):
    for key in sorted(settings):
        print(f"config: {command}.{key} = {settings[key]}", file=sys.stderr)


def cmd_synth(args):
    samples = generate_synthetic_dataset(args.n, args.seed, args.image_size, args.grid)
    _echo_config("synth", vars_of(args, ["n", "seed", "out_dir", "image_size", "grid"]))
    image_dir = os.path.join(args.out_dir, "images")
    os.makedirs(image_dir, exist_ok=True)
    feature_sets = []
    for s in samples:
        write_ppm(s.image, os.path.join(image_dir, f"{s.image_id}.ppm"))
        feature_sets.append(toy_patch_encode(s.image, args.grid, s.image_id))
    write_manifest(samples, os.path.join(args.out_dir, "manifest.tsv"))
    write_features(feature_sets, os.path.join(args.out_dir, "features.icfe"))
    vocab = build_vocab(
        [tokenize(c) for s in samples for c in s.captions], min_freq=1
    )
    vocab.save(os.path.join(args.out_dir, "vocab.txt"))
    print(f"wrote {len(samples)} samples to {args.out_dir}", file=sys.stderr)
    return 0


def vars_of(args, names):
    return {name: getattr(args, name) for name in names}


def cmd_train(args):
    file_config = read_config_file(args.config) if args.config else {}
    variant = args.variant or file_config.pop("variant", "soft_attention")
    file_config.pop("variant", None)
    cfg = _train_config(file_config, {})
    settings = dict(dataclasses.asdict(cfg), variant=variant, data=args.data,
                    out_checkpoint=args.out_checkpoint, embeddings=args.embeddings)
    _echo_config("train", settings)

    manifest = os.path.join(args.data, "manifest.tsv")
    if not os.path.exists(manifest):
        raise ValueError(f"no dataset at {args.data!r}: missing manifest.tsv")
    entries = read_manifest(manifest)
    features_by_id = {
        fs.image_id: fs.annotations
        for fs in read_features(os.path.join(args.data, "features.icfe"))
    }
    vocab = Vocabulary.load(os.path.join(args.data, "vocab.txt"))

    images_by_id = None
    image_dir = os.path.join(args.data, "images")
    if cfg.augment and os.path.isdir(image_dir):
        images_by_id = {
            image_id: read_ppm(os.path.join(image_dir, f"{image_id}.ppm"))
            for image_id, _, _ in entries
        }
    splits = build_samples(entries, features_by_id, vocab, cfg, images_by_id)
    if not splits["train"]:
        raise ValueError("dataset has no training split")
    val = splits["val"] or splits["train"]

    feat_dim = next(iter(features_by_id.values())).shape[1]
    pretrained = None
    if args.embeddings:
        pretrained = load_embedding_file(args.embeddings, vocab, cfg.embed_dim,
                                         seed=cfg.seed)
    model = build_model(
        ModelConfig(
            variant=variant,
            vocab_size=len(vocab),
            feat_dim=feat_dim,
            hidden_size=cfg.hidden_size,
            embed_dim=cfg.embed_dim,
            attention_dim=cfg.attention_dim,
            num_layers=cfg.num_layers,
            init_mlp_depth=cfg.init_mlp_depth,
            seed=cfg.seed,
        ),
        embeddings=pretrained,
    )
    log_path = args.out_checkpoint + ".log"
    if os.path.exists(log_path):
        os.remove(log_path)
    history, adam_state = fit_loop(model, vocab, splits["train"], val, cfg,
                                   log_path=log_path)
    checkpoint_save(args.out_checkpoint, model, vocab, adam_state,
                    extra_config={"n_max": cfg.n_max})
    last = history[-1]
    print(
        f"stopped after epoch {last.epoch}: train_loss={last.train_loss:.4f} "
        f"val_loss={last.val_loss:.4f} val_bleu4={last.val_bleu4:.4f}",
        file=sys.stderr,
    )
    return 0


def cmd_caption(args):
    model, vocab, _, stored = checkpoint_load(args.checkpoint)
    n_max = args.n_max if args.n_max is not None else int(stored.get("n_max", 30))
    _echo_config("caption", {
        "checkpoint": args.checkpoint, "features": args.features,
        "decode": args.decode, "beam_width": args.beam_width, "n_max": n_max,
        "dump_attention": args.dump_attention,
    })
    if args.dump_attention and model.config.variant != "soft_attention":
        raise ValueError(
            "--dump-attention needs a soft_attention checkpoint; "
            f"this one is {model.config.variant}"
        )
    sets = read_features(args.features)
    for fs in sets:
        if fs.annotations.shape[1] != model.config.feat_dim:
            raise FormatError(
                f"feature dimension {fs.annotations.shape[1]} does not match "
                f"the checkpoint's {model.config.feat_dim}"
            )
    alpha_fh = open(args.dump_attention, "w", encoding="utf-8") if args.dump_attention else None
    try:
        for fs in sets:
            if args.decode == "beam":
                result = beam_decode(model, fs, args.beam_width, n_max)
            else:
                result = greedy_decode(model, fs, n_max)
            text = " ".join(vocab.decode(result.tokens))
            print(f"{fs.image_id}\t{text}\t{result.logprob:.6f}")
            if alpha_fh:
                alphas = result.alphas
                if alphas is None:
                    ended = len(result.tokens) < n_max
                    alphas = collect_alphas(model, fs, result.tokens, ended)
                for line in alpha_records(fs.image_id, alphas):
                    alpha_fh.write(line + "\n")
    finally:
        if alpha_fh:
            alpha_fh.close()
    return 0


_METRICS = {
    "bleu1": lambda corpus: bleu(corpus, 1),
    "bleu2": lambda corpus: bleu(corpus, 2),
    "bleu3": lambda corpus: bleu(corpus, 3),
    "bleu4": lambda corpus: bleu(corpus, 4),
    "cider": cider,
    "meteor_lite": meteor_lite,
}


def cmd_eval(args):
    names = [m.strip() for m in args.metrics.split(",") if m.strip()]
    for name in names:
        if name not in _METRICS:
            raise ValueError(
                f"unknown metric {name!r}; choose from {', '.join(sorted(_METRICS))}"
            )
    _echo_config("eval", {"candidates": args.candidates,
                          "references": args.references, "metrics": args.metrics})
    candidates = {}
    order = []
    for image_id, flag, sentence in read_caption_records(args.candidates):
        if flag != "C":
            continue
        if image_id in candidates:
            raise ValueError(f"duplicate candidate for id {image_id!r}")
        candidates[image_id] = sentence
        order.append(image_id)
    references = {}
    for image_id, flag, sentence in read_caption_records(args.references):
        if flag == "R":
            references.setdefault(image_id, []).append(sentence)
    corpus = []
    for image_id in order:
        if image_id not in references:
            raise ValueError(f"no references for id {image_id!r}")
        corpus.append((
            tokenize(candidates[image_id]),
            [tokenize(r) for r in references[image_id]],
        ))
    if not corpus:
        raise ValueError("candidate file holds no C records")
    for name in names:
        print(f"{name}\t{_METRICS[name](corpus):.4f}")
    return 0


def cmd_augment(args):
    img = read_ppm(args.image)
    _echo_config("augment", vars_of(args, ["image", "seed", "distortion", "out"]))
    panels = [img]
    for k in range(1, 8):
        rng = np.random.default_rng((args.seed, k))
        panels.append(random_perspective(img, args.distortion, rng))
    rows = [np.hstack(panels[:4]), np.hstack(panels[4:])]
    write_ppm(np.vstack(rows), args.out)
    return 0


def cmd_gradcheck(args):
    file_config = read_config_file(args.config) if args.config else {}
    dims = dict(TINY_DIMS)
    extras = {"caption_len": 5, "seed": 0}
    for key, raw in file_config.items():
        if key in dims:
            dims[key] = int(raw)
        elif key in extras:
            extras[key] = int(raw)
        else:
            raise ValueError(f"unknown gradcheck config key {key!r}")
    _echo_config("gradcheck", dict(dims, **extras))
    worst = 0.0
    for variant in ("encoder_decoder", "soft_attention"):
        errors = model_gradcheck(
            variant,
            dims,
            caption_len=extras["caption_len"],
            seed=extras["seed"],
            corrupt=args.self_test_corrupt,
        )
        for group in sorted(errors):
            print(f"{variant}\t{group}\t{errors[group]:.3e}")
            worst = max(worst, errors[group])
    status = "PASS" if worst < GRADCHECK_TOLERANCE else "FAIL"
    print(f"max relative error {worst:.3e} -> {status}")
    return 0 if worst < GRADCHECK_TOLERANCE else 1


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="capstack",
        description="stacked-LSTM caption generation toolkit",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic shapes dataset")
    p.add_argument("--n", type=int, default=40)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--image-size", type=int, default=48)
    p.add_argument("--grid", type=int, default=3)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="train a caption model on a dataset directory")
    p.add_argument("--data", required=True)
    p.add_argument("--variant", choices=("encoder_decoder", "soft_attention"))
    p.add_argument("--config", help="key=value training config file")
    p.add_argument("--out-checkpoint", required=True)
    p.add_argument("--embeddings", help="pretrained text-format word vectors")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("caption", help="decode captions for a feature file")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--features", required=True)
    p.add_argument("--decode", choices=("greedy", "beam"), default="greedy")
    p.add_argument("--beam-width", type=int, default=3)
    p.add_argument("--n-max", type=int)
    p.add_argument("--dump-attention", metavar="PATH")
    p.set_defaults(func=cmd_caption)

    p = sub.add_parser("eval", help="score candidate captions against references")
    p.add_argument("--candidates", required=True)
    p.add_argument("--references", required=True)
    p.add_argument("--metrics", default="bleu1,bleu2,bleu3,bleu4,cider,meteor_lite")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("augment", help="write an 8-panel perspective preview grid")
    p.add_argument("--image", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--distortion", type=float, default=0.3)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_augment)

    p = sub.add_parser("gradcheck", help="finite-difference check of both variants")
    p.add_argument("--config", help="key=value dims override file")
    p.add_argument("--self-test-corrupt", action="store_true", help=argparse.SUPPRESS)
    p.set_defaults(func=cmd_gradcheck)

    return parser


def main(argv=None):
    args = _build_parser().parse_args(argv)
    try:
        return args.func(args)
    except FormatError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
