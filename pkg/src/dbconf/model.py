"""Dual-branch convolutional-Transformer EEG decoder.

A temporal branch turns pooled time patches into tokens for a Transformer
encoder; a spatial branch turns per-channel responses into tokens for a
second encoder, followed by channel attention. The two pooled features
are concatenated and classified by a 3-layer MLP.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields, replace

import numpy as np

from . import autodiff as ad
from . import rng as rngmod
from .autodiff import BatchNormState, ShapeError, Tensor

SPATIAL_FILTERS = 16
SPATIAL_KERNEL = 25
CLS_HIDDEN = (64, 32)


@dataclass
class ModelConfig:
    channels: int
    time_samples: int
    n_classes: int = 2
    embed_dim: int = 40           # F == D: conv filter count doubles as token width
    kernel_size: int = 25         # temporal depthwise kernel
    pool_window: int = 125
    n_temporal_layers: int = 2
    n_temporal_heads: int = 2
    n_spatial_layers: int = 2
    n_spatial_heads: int = 2
    ff_mult: int = 4
    p_embed: float = 0.5
    p_enc: float = 0.1
    p_cls: float = 0.5
    # ablation switches
    use_spatial_branch: bool = True
    use_positional_encoding: bool = True
    mean_pool_channels: bool = False

    @property
    def n_patches(self) -> int:
        return self.time_samples // self.pool_window

    @property
    def ff_dim(self) -> int:
        return self.ff_mult * self.embed_dim

    def validate(self):
        if self.channels < 1 or self.time_samples < 1 or self.n_classes < 2:
            raise ValueError("channels/time_samples/n_classes out of range")
        if self.embed_dim % self.n_temporal_heads != 0:
            raise ShapeError(
                f"embed_dim {self.embed_dim} not divisible by "
                f"{self.n_temporal_heads} temporal heads")
        if self.embed_dim % self.n_spatial_heads != 0:
            raise ShapeError(
                f"embed_dim {self.embed_dim} not divisible by "
                f"{self.n_spatial_heads} spatial heads")
        if self.n_patches < 1:
            raise ShapeError(
                f"pool window {self.pool_window} exceeds trial length "
                f"{self.time_samples}")
        if self.time_samples < SPATIAL_KERNEL:
            raise ShapeError(
                f"trial length {self.time_samples} shorter than the "
                f"spatial conv kernel ({SPATIAL_KERNEL})")

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        return cls(**d)


def table_config(channels=22, time_samples=1000, **overrides) -> ModelConfig:
    """The published motor-imagery configuration (patch 125, D=40, 2x2 layers/heads)."""
    return replace(ModelConfig(channels=channels, time_samples=time_samples),
                   **overrides)


def synth_model_config(channels=8, time_samples=512, **overrides) -> ModelConfig:
    """Default configuration for desk-scale synthetic data: smaller token
    width, patch window sized so eight patches cover the trial."""
    return replace(
        ModelConfig(channels=channels, time_samples=time_samples,
                    embed_dim=24, pool_window=max(1, time_samples // 8)),
        **overrides)


# -- parameter construction ---------------------------------------------------


def _uniform(rng, shape, fan_in):
    bound = np.sqrt(1.0 / fan_in)
    return Tensor(rng.uniform(-bound, bound, size=shape), requires_grad=True)


def _zeros(shape):
    return Tensor(np.zeros(shape), requires_grad=True)


def _ones(shape):
    return Tensor(np.ones(shape), requires_grad=True)


def _init_encoder(params, prefix, D, ff, rng):
    for nm in "qkvo":
        params[f"{prefix}.attn.w{nm}"] = _uniform(rng, (D, D), D)
        params[f"{prefix}.attn.b{nm}"] = _zeros((D,))
    params[f"{prefix}.ln1.gamma"] = _ones((D,))
    params[f"{prefix}.ln1.beta"] = _zeros((D,))
    params[f"{prefix}.ln2.gamma"] = _ones((D,))
    params[f"{prefix}.ln2.beta"] = _zeros((D,))
    params[f"{prefix}.ff.w1"] = _uniform(rng, (D, ff), D)
    params[f"{prefix}.ff.b1"] = _zeros((ff,))
    params[f"{prefix}.ff.w2"] = _uniform(rng, (ff, D), ff)
    params[f"{prefix}.ff.b2"] = _zeros((D,))


def init_params(cfg: ModelConfig, rng) -> tuple[dict, dict]:
    """Build the named parameter dict and batchnorm running-stat dict."""
    cfg.validate()
    C, D, K = cfg.channels, cfg.embed_dim, cfg.kernel_size
    params: dict[str, Tensor] = {}
    bn: dict[str, BatchNormState] = {}

    params["t_embed.pointwise.w"] = _uniform(rng, (D, C, 1), C)
    params["t_embed.bn1.gamma"] = _ones((D,))
    params["t_embed.bn1.beta"] = _zeros((D,))
    bn["t_embed.bn1"] = BatchNormState(D)
    params["t_embed.depthwise.w"] = _uniform(rng, (D, 1, K), K)
    params["t_embed.bn2.gamma"] = _ones((D,))
    params["t_embed.bn2.beta"] = _zeros((D,))
    bn["t_embed.bn2"] = BatchNormState(D)
    if cfg.use_positional_encoding:
        params["t_pos"] = Tensor(rng.normal(0.0, 0.02, (cfg.n_patches, D)),
                                 requires_grad=True)
    for l in range(cfg.n_temporal_layers):
        _init_encoder(params, f"t_enc{l}", D, cfg.ff_dim, rng)

    if cfg.use_spatial_branch:
        params["s_embed.conv.w"] = _uniform(
            rng, (SPATIAL_FILTERS, 1, SPATIAL_KERNEL), SPATIAL_KERNEL)
        params["s_embed.conv.b"] = _zeros((SPATIAL_FILTERS,))
        params["s_embed.proj.w"] = _uniform(rng, (SPATIAL_FILTERS, D),
                                            SPATIAL_FILTERS)
        params["s_embed.proj.b"] = _zeros((D,))
        if cfg.use_positional_encoding:
            params["s_pos"] = Tensor(rng.normal(0.0, 0.02, (C, D)),
                                     requires_grad=True)
        for l in range(cfg.n_spatial_layers):
            _init_encoder(params, f"s_enc{l}", D, cfg.ff_dim, rng)
        if not cfg.mean_pool_channels:
            params["attn_pool.w1"] = _uniform(rng, (D, D), D)
            params["attn_pool.w2"] = _uniform(rng, (D,), D)

    fused = 2 * D if cfg.use_spatial_branch else D
    dims = (fused,) + CLS_HIDDEN + (cfg.n_classes,)
    for i, (din, dout) in enumerate(zip(dims[:-1], dims[1:]), start=1):
        params[f"cls.w{i}"] = _uniform(rng, (din, dout), din)
        params[f"cls.b{i}"] = _zeros((dout,))
    return params, bn


# -- forward passes -----------------------------------------------------------


def multihead_attention(x, p, prefix, heads, training, p_drop, rng):
    """Scaled dot-product self-attention over (B, N, D) token sequences."""
    B, N, D = x.shape
    if D % heads != 0:
        raise ShapeError(f"embedding width {D} not divisible by {heads} heads")
    hd = D // heads
    q = ad.matmul(x, p[f"{prefix}.wq"]) + p[f"{prefix}.bq"]
    k = ad.matmul(x, p[f"{prefix}.wk"]) + p[f"{prefix}.bk"]
    v = ad.matmul(x, p[f"{prefix}.wv"]) + p[f"{prefix}.bv"]
    q = q.reshape(B, N, heads, hd).transpose(0, 2, 1, 3)
    k = k.reshape(B, N, heads, hd).transpose(0, 2, 1, 3)
    v = v.reshape(B, N, heads, hd).transpose(0, 2, 1, 3)
    scores = ad.scale(ad.matmul(q, k.transpose(0, 1, 3, 2)),
                      1.0 / np.sqrt(hd))
    att = ad.softmax(scores, axis=-1)
    out = ad.matmul(att, v).transpose(0, 2, 1, 3).reshape(B, N, D)
    out = ad.matmul(out, p[f"{prefix}.wo"]) + p[f"{prefix}.bo"]
    if training and p_drop > 0:
        out = ad.dropout(out, p_drop, rng)
    return out


def encoder_layer(x, params, prefix, heads, cfg, training, rng):
    """Post-norm Transformer encoder layer with a GELU feed-forward block."""
    h = multihead_attention(x, params, f"{prefix}.attn", heads, training,
                            cfg.p_enc, rng)
    y = ad.layernorm(x + h, params[f"{prefix}.ln1.gamma"],
                     params[f"{prefix}.ln1.beta"])
    ff = ad.gelu(ad.matmul(y, params[f"{prefix}.ff.w1"]) + params[f"{prefix}.ff.b1"])
    ff = ad.matmul(ff, params[f"{prefix}.ff.w2"]) + params[f"{prefix}.ff.b2"]
    if training and cfg.p_enc > 0:
        ff = ad.dropout(ff, cfg.p_enc, rng)
    return ad.layernorm(y + ff, params[f"{prefix}.ln2.gamma"],
                        params[f"{prefix}.ln2.beta"])


def temporal_patch_embed(x, params, bn, cfg, training, rng):
    """(B, C, T) -> (B, P, F) patch tokens.

    Pointwise channel-mixing conv, batchnorm, depthwise temporal conv
    (length-preserving), batchnorm + GELU + dropout, then window-mean
    pooling and a transpose to token-major order.
    """
    B, C, T = x.shape
    if C != cfg.channels or T != cfg.time_samples:
        raise ShapeError(
            f"input (C={C}, T={T}) does not match config "
            f"(C={cfg.channels}, T={cfg.time_samples})")
    h = ad.conv1d_grouped(x, params["t_embed.pointwise.w"])
    h = ad.batchnorm1d(h, params["t_embed.bn1.gamma"],
                       params["t_embed.bn1.beta"], bn["t_embed.bn1"],
                       training)
    K = cfg.kernel_size
    h = ad.conv1d_grouped(h, params["t_embed.depthwise.w"],
                          padding=((K - 1) // 2, K // 2),
                          groups=cfg.embed_dim)
    h = ad.batchnorm1d(h, params["t_embed.bn2.gamma"],
                       params["t_embed.bn2.beta"], bn["t_embed.bn2"],
                       training)
    h = ad.gelu(h)
    if training and cfg.p_embed > 0:
        h = ad.dropout(h, cfg.p_embed, rng)
    h = ad.avgpool1d(h, cfg.pool_window)
    return h.transpose(0, 2, 1)


def temporal_branch(x, params, bn, cfg, training, rng):
    """Temporal tokens through the encoder stack, mean-pooled to (B, D)."""
    z = temporal_patch_embed(x, params, bn, cfg, training, rng)
    if cfg.use_positional_encoding:
        z = z + params["t_pos"]
    for l in range(cfg.n_temporal_layers):
        z = encoder_layer(z, params, f"t_enc{l}", cfg.n_temporal_heads, cfg,
                          training, rng)
    return z.mean(axis=1)


def spatial_patch_embed(x, params, cfg):
    """(B, C, T) -> (B, C, D) channel tokens via a shared temporal filter bank.

    The per-channel length-25 correlation followed by a global average
    over valid positions is computed in its algebraically identical
    sliding-mean form: pooled conv output = kernel . window-means.
    """
    B, C, T = x.shape
    if T < SPATIAL_KERNEL:
        raise ShapeError(
            f"trial length {T} shorter than the spatial kernel "
            f"({SPATIAL_KERNEL})")
    s = ad.sliding_mean(x, SPATIAL_KERNEL)   # (B, C, K)
    wf = params["s_embed.conv.w"].reshape(SPATIAL_FILTERS, SPATIAL_KERNEL)
    h = ad.matmul(s, wf.transpose(1, 0)) + params["s_embed.conv.b"]
    return ad.matmul(h, params["s_embed.proj.w"]) + params["s_embed.proj.b"]


def channel_attention(z, w1, w2):
    """Score channels with w2^T tanh(W1 z), softmax-normalize, pool.

    Returns (weights (B, C), pooled (B, D)); weights rows sum to 1.
    """
    B, C, D = z.shape
    scores = ad.matmul(ad.tanh(ad.matmul(z, ad.transpose(w1, (1, 0)))),
                       w2.reshape(D, 1))     # (B, C, 1)
    alpha = ad.softmax(scores, axis=1)
    pooled = (alpha * z).sum(axis=1)
    return alpha.reshape(B, C), pooled


def spatial_branch(x, params, cfg, training, rng):
    """Channel tokens through the encoder stack, attention-pooled to (B, D)."""
    z = spatial_patch_embed(x, params, cfg)
    if cfg.use_positional_encoding:
        z = z + params["s_pos"]
    for l in range(cfg.n_spatial_layers):
        z = encoder_layer(z, params, f"s_enc{l}", cfg.n_spatial_heads, cfg,
                          training, rng)
    if cfg.mean_pool_channels:
        B, C, _ = z.shape
        weights = Tensor(np.full((B, C), 1.0 / C))
        return weights, z.mean(axis=1)
    return channel_attention(z, params["attn_pool.w1"],
                             params["attn_pool.w2"])


def forward(x, params, bn, cfg, training=False, rng=None):
    """Full model: returns (logits (B, Nc), channel weights (B, C) or None)."""
    x = ad.astensor(x)
    if training and rng is None and (cfg.p_embed or cfg.p_enc or cfg.p_cls):
        raise ValueError("training-mode forward needs an rng for dropout")
    ft = temporal_branch(x, params, bn, cfg, training, rng)
    if cfg.use_spatial_branch:
        weights, fs = spatial_branch(x, params, cfg, training, rng)
        fused = ad.concat([ft, fs], axis=1)
    else:
        weights, fused = None, ft
    h = fused
    n_layers = len(CLS_HIDDEN) + 1
    for i in range(1, n_layers + 1):
        h = ad.matmul(h, params[f"cls.w{i}"]) + params[f"cls.b{i}"]
        if i < n_layers:
            h = ad.elu(h)
            if training and cfg.p_cls > 0:
                h = ad.dropout(h, cfg.p_cls, rng)
    return h, weights


def loss(logits, labels):
    return ad.cross_entropy(logits, labels)


# -- bookkeeping ---------------------------------------------------------------


def parameter_count(cfg: ModelConfig) -> tuple[int, dict[str, int]]:
    """Closed-form trainable-scalar count with a per-block breakdown."""
    cfg.validate()
    C, D, K = cfg.channels, cfg.embed_dim, cfg.kernel_size
    ff = cfg.ff_dim
    enc_layer = (4 * (D * D + D)      # q/k/v/o projections with biases
                 + 2 * 2 * D          # two layernorms
                 + D * ff + ff + ff * D + D)
    breakdown = {
        "temporal.embed": C * D + 2 * D + D * K + 2 * D,
        "temporal.pos": cfg.n_patches * D if cfg.use_positional_encoding else 0,
        "temporal.encoder": cfg.n_temporal_layers * enc_layer,
    }
    if cfg.use_spatial_branch:
        breakdown["spatial.embed"] = (
            SPATIAL_FILTERS * SPATIAL_KERNEL + SPATIAL_FILTERS
            + SPATIAL_FILTERS * D + D)
        breakdown["spatial.pos"] = (C * D if cfg.use_positional_encoding
                                    else 0)
        breakdown["spatial.encoder"] = cfg.n_spatial_layers * enc_layer
        breakdown["channel_attention"] = (0 if cfg.mean_pool_channels
                                          else D * D + D)
    fused = 2 * D if cfg.use_spatial_branch else D
    dims = (fused,) + CLS_HIDDEN + (cfg.n_classes,)
    breakdown["classifier"] = sum(a * b + b for a, b in zip(dims[:-1], dims[1:]))
    return sum(breakdown.values()), breakdown


class Model:
    """Config + parameters + batchnorm state, with convenience calls."""

    def __init__(self, cfg: ModelConfig, seed: int = 0, params=None, bn=None):
        self.cfg = cfg
        if params is None:
            params, bn = init_params(cfg, rngmod.make_rng(seed, rngmod.INIT))
        self.params = params
        self.bn = bn

    def forward(self, x, training=False, rng=None):
        return forward(x, self.params, self.bn, self.cfg, training, rng)

    def predict(self, x, batch_size=256):
        """Eval-mode class predictions, scores and channel weights."""
        x = np.asarray(x, dtype=np.float64)
        logits, weights = [], []
        with ad.no_grad():
            for i in range(0, len(x), batch_size):
                lg, w = self.forward(x[i:i + batch_size])
                logits.append(lg.data)
                if w is not None:
                    weights.append(w.data)
        logits = np.concatenate(logits) if logits else np.zeros((0, self.cfg.n_classes))
        weights = np.concatenate(weights) if weights else None
        z = logits - logits.max(axis=1, keepdims=True)
        probs = np.exp(z)
        probs /= probs.sum(axis=1, keepdims=True)
        return logits.argmax(axis=1), probs, weights

    def n_parameters(self) -> int:
        return sum(p.size for p in self.params.values())
