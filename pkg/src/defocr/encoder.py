"""Pre-norm transformer encoder over the backbone's feature sequence.

Each layer applies bidirectional multi-head self-attention and a relu
FFN on layer-normed inputs, added back through residual paths. Dropout
(the shared adaptive rate) hits the MHA and FFN outputs before the add.
Positional information comes from the classic sinusoidal table, added
by the caller after the input embedding.
"""

from dataclasses import dataclass

import numpy as np

from .core import layer_norm, layer_norm_backward, softmax_rows, softmax_rows_backward
from .dropout import dropout_apply
from .errors import ConfigError
from .rng import SplitMix64

LN_EPS = 1e-5


@dataclass
class LayerParams:
    wq: np.ndarray
    bq: np.ndarray
    wk: np.ndarray
    bk: np.ndarray
    wv: np.ndarray
    bv: np.ndarray
    wo: np.ndarray
    bo: np.ndarray
    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray
    ln1_gain: np.ndarray
    ln1_bias: np.ndarray
    ln2_gain: np.ndarray
    ln2_bias: np.ndarray


@dataclass
class EncoderParams:
    layers: list
    n_heads: int

    def __post_init__(self) -> None:
        if self.layers:
            d = self.layers[0].wq.shape[0]
            if d % self.n_heads != 0:
                raise ConfigError(
                    f"model dim {d} not divisible by {self.n_heads} heads"
                )


def sinusoidal_pe(t_len: int, d: int) -> np.ndarray:
    """PE[t, 2i] = sin(t / 10000^(2i/d)), PE[t, 2i+1] = cos(same)."""
    if d % 2 != 0:
        raise ConfigError(f"positional encoding needs even dim, got {d}")
    pos = np.arange(t_len, dtype=np.float64)[:, None]
    freq = 10000.0 ** (-np.arange(0, d, 2, dtype=np.float64) / d)
    angles = pos * freq[None, :]
    pe = np.empty((t_len, d))
    pe[:, 0::2] = np.sin(angles)
    pe[:, 1::2] = np.cos(angles)
    return pe


def _xavier(rng: SplitMix64, fan_in: int, fan_out: int) -> np.ndarray:
    a = float(np.sqrt(6.0 / (fan_in + fan_out)))
    return rng.uniform_array((fan_in, fan_out), -a, a)


def init_encoder(
    rng: SplitMix64, d: int, d_ff: int, n_layers: int, n_heads: int
) -> EncoderParams:
    layers = []
    for _ in range(n_layers):
        layers.append(
            LayerParams(
                wq=_xavier(rng, d, d),
                bq=np.zeros(d),
                wk=_xavier(rng, d, d),
                bk=np.zeros(d),
                wv=_xavier(rng, d, d),
                bv=np.zeros(d),
                wo=_xavier(rng, d, d),
                bo=np.zeros(d),
                w1=_xavier(rng, d, d_ff),
                b1=np.zeros(d_ff),
                w2=_xavier(rng, d_ff, d),
                b2=np.zeros(d),
                ln1_gain=np.ones(d),
                ln1_bias=np.zeros(d),
                ln2_gain=np.ones(d),
                ln2_bias=np.zeros(d),
            )
        )
    return EncoderParams(layers=layers, n_heads=n_heads)


def _mha_ctx(x: np.ndarray, layer: LayerParams, n_heads: int):
    t_len, d = x.shape
    dh = d // n_heads
    scale = 1.0 / np.sqrt(dh)
    q = x @ layer.wq + layer.bq
    k = x @ layer.wk + layer.bk
    v = x @ layer.wv + layer.bv
    concat = np.empty((t_len, d))
    attns = []
    for i in range(n_heads):
        sl = slice(i * dh, (i + 1) * dh)
        a = softmax_rows(q[:, sl] @ k[:, sl].T * scale)
        concat[:, sl] = a @ v[:, sl]
        attns.append(a)
    out = concat @ layer.wo + layer.bo
    return out, (x, q, k, v, attns, concat)


def _mha_backward(ctx, layer: LayerParams, n_heads: int, grad_out: np.ndarray, grads: dict, prefix: str):
    x, q, k, v, attns, concat = ctx
    d = x.shape[1]
    dh = d // n_heads
    scale = 1.0 / np.sqrt(dh)
    grads[prefix + ".wo"] = concat.T @ grad_out
    grads[prefix + ".bo"] = grad_out.sum(axis=0)
    gconcat = grad_out @ layer.wo.T
    gq = np.empty_like(q)
    gk = np.empty_like(k)
    gv = np.empty_like(v)
    for i in range(n_heads):
        sl = slice(i * dh, (i + 1) * dh)
        a = attns[i]
        ghead = gconcat[:, sl]
        ga = ghead @ v[:, sl].T
        gv[:, sl] = a.T @ ghead
        gs = softmax_rows_backward(ga, a) * scale
        gq[:, sl] = gs @ k[:, sl]
        gk[:, sl] = gs.T @ q[:, sl]
    grads[prefix + ".wq"] = x.T @ gq
    grads[prefix + ".bq"] = gq.sum(axis=0)
    grads[prefix + ".wk"] = x.T @ gk
    grads[prefix + ".bk"] = gk.sum(axis=0)
    grads[prefix + ".wv"] = x.T @ gv
    grads[prefix + ".bv"] = gv.sum(axis=0)
    return gq @ layer.wq.T + gk @ layer.wk.T + gv @ layer.wv.T


def multi_head_attention(x: np.ndarray, params: EncoderParams, layer: int) -> np.ndarray:
    """Full bidirectional self-attention for one layer's parameters."""
    out, _ = _mha_ctx(x, params.layers[layer], params.n_heads)
    return out


def encoder_forward(
    x: np.ndarray,
    params: EncoderParams,
    rate: float = 0.0,
    rng: SplitMix64 = None,
    training: bool = False,
):
    """N pre-norm layers; returns (out, ctx). X must already carry PE."""
    if training and rng is None:
        raise ConfigError("encoder_forward in training mode needs an rng")
    layer_ctxs = []
    for layer in params.layers:
        x1 = x
        n1 = layer_norm(x1, layer.ln1_gain, layer.ln1_bias, LN_EPS)
        mha_out, mctx = _mha_ctx(n1, layer, params.n_heads)
        mha_drop, mmask = dropout_apply(mha_out, rate, rng, training)
        x2 = x1 + mha_drop
        n2 = layer_norm(x2, layer.ln2_gain, layer.ln2_bias, LN_EPS)
        pre = n2 @ layer.w1 + layer.b1
        act = np.maximum(pre, 0.0)
        ffn_out = act @ layer.w2 + layer.b2
        ffn_drop, fmask = dropout_apply(ffn_out, rate, rng, training)
        x = x2 + ffn_drop
        layer_ctxs.append((x1, n1, mctx, mmask, x2, n2, pre, act, fmask))
    return x, layer_ctxs


def encoder_backward(
    ctx, params: EncoderParams, grad_out: np.ndarray, grads: dict, prefix: str = "encoder"
) -> np.ndarray:
    """Gradient w.r.t. the encoder input; parameter grads keyed under prefix."""
    g = grad_out
    for li in range(len(params.layers) - 1, -1, -1):
        layer = params.layers[li]
        x1, n1, mctx, mmask, x2, n2, pre, act, fmask = ctx[li]
        base = f"{prefix}.layer{li}"
        # FFN residual: x = x2 + drop(W2 relu(W1 n2 + b1) + b2)
        gffn = g * fmask
        grads[base + ".w2"] = act.T @ gffn
        grads[base + ".b2"] = gffn.sum(axis=0)
        gact = gffn @ layer.w2.T
        gpre = gact * (pre > 0.0)
        grads[base + ".w1"] = n2.T @ gpre
        grads[base + ".b1"] = gpre.sum(axis=0)
        gn2 = gpre @ layer.w1.T
        gx2, ggain2, gbias2 = layer_norm_backward(gn2, x2, layer.ln2_gain, LN_EPS)
        grads[base + ".ln2_gain"] = ggain2
        grads[base + ".ln2_bias"] = gbias2
        g = g + gx2
        # MHA residual: x2 = x1 + drop(MHA(LN1(x1)))
        gmha = g * mmask
        gn1 = _mha_backward(mctx, layer, params.n_heads, gmha, grads, base)
        gx1, ggain1, gbias1 = layer_norm_backward(gn1, x1, layer.ln1_gain, LN_EPS)
        grads[base + ".ln1_gain"] = ggain1
        grads[base + ".ln1_bias"] = gbias1
        g = g + gx1
    return g


def named_encoder_params(params: EncoderParams, prefix: str = "encoder"):
    """Yield (name, array) pairs in a stable traversal order."""
    fields = (
        "wq", "bq", "wk", "bk", "wv", "bv", "wo", "bo",
        "w1", "b1", "w2", "b2",
        "ln1_gain", "ln1_bias", "ln2_gain", "ln2_bias",
    )
    for li, layer in enumerate(params.layers):
        for f in fields:
            yield f"{prefix}.layer{li}.{f}", getattr(layer, f)
