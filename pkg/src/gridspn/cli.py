"""Command-line frontend: validate, train, inpaint, classify, eval.

Progress records go to stdout one per line; errors to stderr.  Exit codes:
0 success (and `validate` of a valid network), 1 invalid network or failed
precondition, 2 usage/parse errors.
"""

import argparse
import os
import sys

import numpy as np

from . import backend, data
from .checkpoint import load_checkpoint, save_checkpoint
from .graph import check_validity, compile_network
from .inference import forward_marginal, inpaint_batch
from .leaves import equidistant_init, gaussian_log_prob, quantile_init
from .params import init_em_params, init_gradient_params
from .structure import (GaussianLeaf, NetworkSpec, StructureParseError,
                        parse_structure)
from .training import MODES, TrainConfig, train


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="gridspn",
        description="Convolutional sum-product networks: validate structures, "
                    "train generatively or discriminatively, inpaint, classify.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="check a structure file for validity")
    p.add_argument("--structure", required=True)
    p.add_argument("--shape", required=True, help="input grid, HxW")

    p = sub.add_parser("train", help="train a model and write a checkpoint")
    p.add_argument("--structure", required=True)
    p.add_argument("--images", required=True)
    p.add_argument("--labels")
    p.add_argument("--mode", choices=MODES, default="hard_em")
    p.add_argument("--epochs", type=int, default=15)
    p.add_argument("--batch", type=int, default=128)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--limit", type=int, help="use only the first N images")
    p.add_argument("--out", required=True, help="checkpoint path")
    p.add_argument("--threads", type=int, default=os.cpu_count())

    p = sub.add_parser("inpaint", help="complete occluded images, write PGMs")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--images", required=True)
    p.add_argument("--occlusion", choices=data.OCCLUSIONS, required=True)
    p.add_argument("--limit", type=int)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--threads", type=int, default=os.cpu_count())

    p = sub.add_parser("classify", help="accuracy and confusion counts")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--images", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--limit", type=int)
    p.add_argument("--threads", type=int, default=os.cpu_count())

    p = sub.add_parser("eval", help="mean test log-likelihood of a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--images", required=True)
    p.add_argument("--limit", type=int)
    p.add_argument("--threads", type=int, default=os.cpu_count())
    return parser


def _fail(message, code=1):
    print(message, file=sys.stderr)
    return code


def _load_dataset(args, need_labels=False):
    labels = getattr(args, "labels", None)
    dataset = data.load_idx(args.images, labels)
    if need_labels and dataset.labels is None:
        raise ValueError("this command needs --labels")
    if getattr(args, "limit", None):
        dataset = dataset.subset(np.arange(min(args.limit, len(dataset))))
    return dataset


def _parse_shape(text):
    h, _, w = text.partition("x")
    return int(h), int(w)


def cmd_validate(args) -> int:
    try:
        with open(args.structure) as f:
            text = f.read()
        h, w = _parse_shape(args.shape)
        spec = parse_structure(text, height=h, width=w)
    except (StructureParseError, ValueError) as exc:
        return _fail(f"parse error: {exc}", 2)
    report = check_validity(spec)
    print(report.format())
    return 0 if report.valid else 1


def cmd_train(args) -> int:
    dataset = _load_dataset(args, need_labels=args.mode == "adam")
    h, w = dataset.grid
    try:
        with open(args.structure) as f:
            text = f.read()
        spec = parse_structure(text, height=h, width=w)
    except (StructureParseError, ValueError) as exc:
        return _fail(f"parse error: {exc}", 2)
    try:
        plan = compile_network(spec)
    except ValueError as exc:
        return _fail(str(exc))
    if not isinstance(spec.leaf, GaussianLeaf):
        return _fail("training from images needs Gaussian leaves")
    if args.mode == "adam" and not spec.is_discriminative:
        return _fail("adam training needs a class-sum layer in the structure")
    if args.mode != "adam" and spec.is_discriminative:
        return _fail("hard EM is generative; this structure has class sums")

    normalized, _, _ = data.normalize_samplewise(dataset.images)
    k = spec.leaf.components
    if args.mode == "adam":
        leaf = equidistant_init(-1.5, 1.5, k, (h, w))
        params = init_gradient_params(plan, args.seed, leaf)
    else:
        leaf = quantile_init(normalized, k)
        params = init_em_params(plan, args.mode, leaf)
    config = TrainConfig(mode=args.mode, batch_size=args.batch,
                         epochs=args.epochs, seed=args.seed)
    train(plan, params, normalized, dataset.labels, config, progress=print)
    save_checkpoint(args.out, spec, params, args.seed)
    print(f"checkpoint written: {args.out}")
    return 0


def cmd_inpaint(args) -> int:
    ckpt = load_checkpoint(args.checkpoint)
    if ckpt.mode == "adam":
        return _fail("inpainting needs a generative (hard EM) checkpoint")
    dataset = _load_dataset(args)
    plan = ckpt.plan()
    if dataset.grid != (ckpt.spec.height, ckpt.spec.width):
        return _fail(f"dataset grid {dataset.grid} does not match the "
                     f"checkpoint ({ckpt.spec.height}, {ckpt.spec.width})")
    mask = data.apply_occlusion(dataset.grid, args.occlusion)
    os.makedirs(args.out, exist_ok=True)
    total = 0.0
    for start in range(0, len(dataset), 64):
        chunk = dataset.images[start:start + 64].astype(np.float64)
        normalized = np.empty_like(chunk)
        stats = []
        for i, img in enumerate(chunk):
            if args.occlusion == "none":
                normalized[i], mu, sd = data.normalize_samplewise(img)
            else:
                normalized[i], mu, sd = data.normalize_observed(img, mask)
            stats.append((mu, sd))
        completed = inpaint_batch(plan, ckpt.params, normalized, mask)
        for i, img in enumerate(completed):
            mu, sd = stats[i]
            pixels = np.clip(data.denormalize(img, mu, sd), 0.0, 255.0)
            if args.occlusion != "none":
                total += data.mse_occluded(pixels, chunk[i], mask)
            data.write_pgm(pixels, os.path.join(args.out, f"inpaint-{start + i:05d}.pgm"))
    mse = total / len(dataset) if args.occlusion != "none" else 0.0
    print(f"occlusion={args.occlusion} n={len(dataset)} mse={mse:.3f}")
    return 0


def _class_scores(plan, params, normalized):
    scores = []
    class_op = plan.class_op
    for start in range(0, normalized.shape[0], 256):
        leaf_t = gaussian_log_prob(normalized[start:start + 256], params.leaf)
        _, trace = forward_marginal(plan, params, leaf_t)
        scores.append(trace.activations[plan.ops.index(class_op) + 1])
    return np.concatenate(scores, axis=0)


def cmd_classify(args) -> int:
    ckpt = load_checkpoint(args.checkpoint)
    if ckpt.mode != "adam":
        return _fail("classification needs a discriminative (adam) checkpoint")
    dataset = _load_dataset(args, need_labels=True)
    plan = ckpt.plan()
    normalized, _, _ = data.normalize_samplewise(dataset.images)
    scores = _class_scores(plan, ckpt.params, normalized)
    predicted = scores.argmax(axis=1)
    k = scores.shape[1]
    accuracy = float((predicted == dataset.labels).mean())
    confusion = np.zeros((k, k), dtype=np.int64)
    np.add.at(confusion, (dataset.labels, predicted), 1)
    print(f"accuracy={accuracy:.4f}")
    for row in range(k):
        counts = " ".join(str(v) for v in confusion[row])
        print(f"confusion class={row} {counts}")
    return 0


def cmd_eval(args) -> int:
    ckpt = load_checkpoint(args.checkpoint)
    dataset = _load_dataset(args)
    plan = ckpt.plan()
    normalized, _, _ = data.normalize_samplewise(dataset.images)
    total = 0.0
    for start in range(0, len(dataset), 256):
        leaf_t = gaussian_log_prob(normalized[start:start + 256], ckpt.params.leaf)
        root, _ = forward_marginal(plan, ckpt.params, leaf_t)
        total += float(np.sum(root))
    print(f"n={len(dataset)} mean_loglik={total / len(dataset):.6f}")
    return 0


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    backend.set_num_threads(getattr(args, "threads", None) or os.cpu_count())
    handlers = {
        "validate": cmd_validate,
        "train": cmd_train,
        "inpaint": cmd_inpaint,
        "classify": cmd_classify,
        "eval": cmd_eval,
    }
    try:
        return handlers[args.command](args)
    except (ValueError, OSError) as exc:
        return _fail(str(exc))


if __name__ == "__main__":
    sys.exit(main())
