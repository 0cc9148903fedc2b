"""End-to-end model assembly: backbone -> embed + PE -> encoder -> head.

The head emits per-timestep label scores consumed by the CRF. Dropout
(one shared adaptive rate) is active at the encoder's internal sites
and on the pre-head projection, training mode only.
"""

from dataclasses import dataclass

import numpy as np

from .alphabet import decode_labels
from .backbone import (
    BackboneParams,
    backbone_backward,
    backbone_forward,
    final_feature_map,
    init_backbone,
    named_backbone_params,
)
from .config import ModelConfig
from .crf import CrfParams, viterbi, zero_crf
from .dropout import AdaptiveDropoutState, dropout_apply
from .encoder import (
    EncoderParams,
    encoder_backward,
    encoder_forward,
    init_encoder,
    named_encoder_params,
    sinusoidal_pe,
)
from .errors import DimensionError
from .lexicon import Lexicon, correct, default_max_dist
from .rng import SplitMix64


@dataclass
class ModelParams:
    backbone: BackboneParams
    embed: np.ndarray
    encoder: EncoderParams
    head_w: np.ndarray
    head_b: np.ndarray
    crf: CrfParams
    dropout: AdaptiveDropoutState
    config: ModelConfig


def init_params(
    rng: SplitMix64,
    config: ModelConfig = ModelConfig(),
    dropout: AdaptiveDropoutState = AdaptiveDropoutState(),
) -> ModelParams:
    """Fresh parameters in a fixed draw order; CRF starts at zero."""
    backbone = init_backbone(rng, config.backbone_config())
    c_last = config.channels[-1]
    a = float(np.sqrt(6.0 / (c_last + config.d)))
    embed = rng.uniform_array((c_last, config.d), -a, a)
    encoder = init_encoder(rng, config.d, config.d_ff, config.n_layers, config.n_heads)
    l = config.n_labels
    a = float(np.sqrt(6.0 / (config.d + l)))
    head_w = rng.uniform_array((config.d, l), -a, a)
    head_b = np.zeros(l)
    return ModelParams(
        backbone=backbone,
        embed=embed,
        encoder=encoder,
        head_w=head_w,
        head_b=head_b,
        crf=zero_crf(l),
        dropout=dropout,
        config=config,
    )


def named_parameters(params: ModelParams):
    """Yield every trainable (name, array) in a stable traversal order."""
    yield from named_backbone_params(params.backbone)
    yield "embed", params.embed
    yield from named_encoder_params(params.encoder)
    yield "head.weights", params.head_w
    yield "head.bias", params.head_b
    yield "crf.transitions", params.crf.transitions
    yield "crf.start", params.crf.start
    yield "crf.end", params.crf.end


def forward(
    image: np.ndarray,
    params: ModelParams,
    training: bool = False,
    rng: SplitMix64 = None,
):
    """Image [1, H, W] -> (emissions [T, L], ctx)."""
    cfg = params.config
    if image.shape != (1, cfg.image_h, cfg.image_w):
        raise DimensionError(
            f"image shape {image.shape} does not match "
            f"(1, {cfg.image_h}, {cfg.image_w})"
        )
    rate = params.dropout.rate if training else 0.0
    seq, bctx = backbone_forward(image, params.backbone)
    x = seq @ params.embed + sinusoidal_pe(seq.shape[0], params.embed.shape[1])
    enc, ectx = encoder_forward(x, params.encoder, rate, rng, training)
    hdrop, hmask = dropout_apply(enc, rate, rng, training)
    emissions = hdrop @ params.head_w + params.head_b
    ctx = (bctx, seq, ectx, hmask, hdrop)
    return emissions, ctx


def backward(ctx, params: ModelParams, grad_e: np.ndarray):
    """Returns (grads by parameter name, grad on the final feature map)."""
    bctx, seq, ectx, hmask, hdrop = ctx
    grads = {}
    grads["head.weights"] = hdrop.T @ grad_e
    grads["head.bias"] = grad_e.sum(axis=0)
    gh = (grad_e @ params.head_w.T) * hmask
    gx = encoder_backward(ectx, params.encoder, gh, grads)
    grads["embed"] = seq.T @ gx
    gseq = gx @ params.embed.T
    _, grad_map = backbone_backward(bctx, gseq, grads)
    return grads, grad_map


def recognize(
    image: np.ndarray,
    params: ModelParams,
    lexicon: Lexicon = None,
    max_dist: int = None,
    use_crf: bool = True,
) -> str:
    """Viterbi-decode the emissions, strip PAD, optionally lexicon-correct."""
    emissions, _ = forward(image, params)
    crf = params.crf if use_crf else zero_crf(emissions.shape[1])
    path, _ = viterbi(emissions, crf)
    text = decode_labels(path)
    if lexicon is not None and len(lexicon) > 0:
        dist = default_max_dist(text) if max_dist is None else max_dist
        text = correct(text, lexicon, dist)
    return text


def word_accuracy(preds, gts) -> float:
    """Fraction of case-insensitive exact matches."""
    if len(preds) != len(gts):
        raise DimensionError(
            f"{len(preds)} predictions vs {len(gts)} ground truths"
        )
    if not preds:
        raise DimensionError("word_accuracy needs at least one pair")
    hits = sum(1 for p, g in zip(preds, gts) if p.casefold() == g.casefold())
    return hits / len(preds)


def grad_cam(image: np.ndarray, params: ModelParams, target="predicted") -> np.ndarray:
    """Saliency over the final backbone map for a target label path.

    The target score is the CRF path score of `target` (or the Viterbi
    path); channel weights are spatial means of its gradient on the
    final feature map. Output is relu-ed and min-max normalized, with
    an all-zero map left untouched.
    """
    emissions, ctx = forward(image, params)
    if isinstance(target, str):
        if target != "predicted":
            raise DimensionError(f"unknown grad_cam target {target!r}")
        path, _ = viterbi(emissions, params.crf)
    else:
        path = list(target)
        if len(path) != emissions.shape[0]:
            raise DimensionError(
                f"target path length {len(path)} != {emissions.shape[0]} timesteps"
            )
    grad_e = np.zeros_like(emissions)
    grad_e[np.arange(len(path)), path] = 1.0
    _, grad_map = backward(ctx, params, grad_e)
    feature_map = final_feature_map(ctx[0])
    alpha = grad_map.mean(axis=(1, 2))
    heat = np.maximum(np.tensordot(alpha, feature_map, axes=(0, 0)), 0.0)
    lo, hi = float(heat.min()), float(heat.max())
    if hi > lo:
        return (heat - lo) / (hi - lo)
    if hi > 0.0:
        return np.ones_like(heat)
    return np.zeros_like(heat)
