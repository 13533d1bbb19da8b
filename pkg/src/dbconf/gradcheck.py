"""Central-finite-difference verification of autodiff gradients."""

from __future__ import annotations

import numpy as np

from .autodiff import Tensor, no_grad


def grad_check(f, x: Tensor, h: float = 1e-5) -> float:
    """Max relative error between autodiff and central differences.

    `f` must map the tensor to a scalar Tensor and be deterministic.
    Relative error uses denominator max(|analytic|, |numeric|, 1e-6)
    per coordinate; the floor keeps near-zero gradient components (at the
    central-difference noise level for an O(1) loss) from inflating the
    relative error while still bounding their absolute disagreement.
    """
    x.requires_grad = True
    x.grad = None
    y = f(x)
    if y.size != 1:
        raise ValueError(f"grad_check needs a scalar-valued f, got shape {y.shape}")
    y.backward()
    analytic = x.grad.copy() if x.grad is not None else np.zeros_like(x.data)

    flat = x.data.reshape(-1)
    numeric = np.zeros_like(flat)
    with no_grad():
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            fp = f(x).item()
            flat[i] = orig - h
            fm = f(x).item()
            flat[i] = orig
            numeric[i] = (fp - fm) / (2.0 * h)
    numeric = numeric.reshape(x.data.shape)

    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), 1e-6)
    return float(np.max(np.abs(analytic - numeric) / denom))


def small_check_config():
    """Tiny decoder configuration used for exhaustive gradient checks."""
    from .model import ModelConfig
    return ModelConfig(channels=3, time_samples=64, n_classes=2,
                       embed_dim=8, kernel_size=9, pool_window=16,
                       n_temporal_layers=1, n_temporal_heads=2,
                       n_spatial_layers=1, n_spatial_heads=2,
                       p_embed=0.0, p_enc=0.0, p_cls=0.0)


def model_grad_check(cfg=None, seed=0, batch=4, h=5e-5):
    """Finite-difference check of the full model loss, per parameter.

    Dropout must be disabled in `cfg`. Returns {parameter name: max
    relative error}; every trainable parameter appears exactly once.
    """
    from . import rng as rngmod
    from .autodiff import cross_entropy
    from .model import Model

    if cfg is None:
        cfg = small_check_config()
    if cfg.p_embed or cfg.p_enc or cfg.p_cls:
        raise ValueError("model_grad_check needs all dropout probabilities 0")
    data_rng = rngmod.make_rng(seed, 99)
    x = data_rng.standard_normal((batch, cfg.channels, cfg.time_samples))
    y = data_rng.integers(0, cfg.n_classes, size=batch)
    model = Model(cfg, seed=seed)

    def loss_fn(_):
        logits, _w = model.forward(x, training=True)
        return cross_entropy(logits, y)

    report = {}
    for name, p in model.params.items():
        for q in model.params.values():
            q.grad = None
        report[name] = grad_check(loss_fn, p, h=h)
    return report
