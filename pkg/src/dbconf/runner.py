"""Training/evaluation orchestration for the CO, CV, and LOSO protocols."""

from __future__ import annotations

import json
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import rng as rngmod
from .autodiff import cross_entropy
from .align import AlignState, align, align_online
from .dataio import TrialSet, split_co, split_cv, split_loso
from .metrics import MetricsReport, UndefinedMetricError, evaluate
from .model import Model, ModelConfig
from .optim import AdamState, adam_step, zero_grads

PROTOCOLS = ("CO", "CV", "LOSO")


@dataclass
class EAConfig:
    enabled: bool = True
    test_init: str = "first-trial"   # or "warmup-k"
    warmup: int = 5                  # k for the warmup-k policy
    scope: str = "training-only"     # or "whole-subject" (CO/CV reference)


@dataclass
class RunConfig:
    protocol: str = "CO"
    lr: float = 1e-3
    epochs: int = 100
    batch_size: int = 32
    seeds: tuple = (1, 2, 3, 4, 5)
    ea: EAConfig = field(default_factory=EAConfig)
    cv_folds: int = 5
    full_metrics: bool = False       # accuracy only by default
    out_dir: str | None = None

    def validate(self):
        if self.protocol not in PROTOCOLS:
            raise ValueError(f"unknown protocol {self.protocol!r}")
        if not self.seeds:
            raise ValueError("seeds list must be non-empty")
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be >= 1")


class DivergenceError(RuntimeError):
    pass


def train_one(model_cfg: ModelConfig, x_train, y_train, seed: int,
              lr=1e-3, epochs=100, batch_size=32):
    """Train a fresh model; returns (Model, per-epoch mean loss history).

    Mini-batches are reshuffled every epoch from a (seed, epoch)-derived
    stream; the final incomplete batch is kept. No early stopping.
    """
    x_train = np.asarray(x_train, dtype=np.float64)
    y_train = np.asarray(y_train)
    model = Model(model_cfg, seed=seed)
    state = AdamState(model.params, lr=lr)
    history = []
    n = len(x_train)
    for epoch in range(epochs):
        perm = rngmod.make_rng(seed, rngmod.SHUFFLE, epoch).permutation(n)
        drop_rng = rngmod.make_rng(seed, rngmod.DROPOUT, epoch)
        losses = []
        for b, lo in enumerate(range(0, n, batch_size)):
            idx = perm[lo:lo + batch_size]
            logits, _ = model.forward(x_train[idx], training=True,
                                      rng=drop_rng)
            lval = cross_entropy(logits, y_train[idx])
            if not np.isfinite(lval.item()):
                raise DivergenceError(
                    f"non-finite loss at epoch {epoch}, batch {b}")
            zero_grads(model.params)
            lval.backward()
            adam_step(model.params, state)
            losses.append(lval.item())
        history.append(float(np.mean(losses)))
    return model, history


def evaluate_model(model: Model, x, y, full=False) -> MetricsReport:
    preds, probs, _ = model.predict(x)
    scores = probs[:, 1] if model.cfg.n_classes == 2 else None
    try:
        return evaluate(preds, y, scores=scores, full=full)
    except UndefinedMetricError:
        return evaluate(preds, y, full=False)


# -- EA plumbing ----------------------------------------------------------------


def _chronological(ts: TrialSet, idx):
    """Order fold indices by recording time."""
    idx = np.asarray(idx)
    return idx[np.argsort(ts.chronological_index[idx], kind="stable")]


def prepare_within_subject(ts: TrialSet, train_idx, test_idx, ea: EAConfig):
    """Aligned (x_train, y_train, x_test, y_test) for one CO/CV fold.

    The training reference never sees test trials unless
    ea.scope == "whole-subject"; the test-side state starts empty and
    grows causally from revealed test trials only.
    """
    train_idx = _chronological(ts, train_idx)
    test_idx = _chronological(ts, test_idx)
    x_tr, y_tr = ts.trials[train_idx], ts.labels[train_idx]
    x_te, y_te = ts.trials[test_idx], ts.labels[test_idx]
    if ea.enabled:
        ref_trials = ts.trials if ea.scope == "whole-subject" else x_tr
        state = AlignState(ref_trials)
        x_tr = align(x_tr, state)
        warm = ea.warmup if ea.test_init == "warmup-k" else 1
        x_te = align_online(x_te, AlignState(), warmup=warm)
    return x_tr, y_tr, x_te, y_te


def prepare_loso(sets: list[TrialSet], test_subject: int, ea: EAConfig):
    """Aligned train/test arrays for one held-out subject."""
    train_x, train_y = [], []
    test_x = test_y = None
    for ts in sets:
        order = _chronological(ts, np.arange(ts.n_trials))
        x, y = ts.trials[order], ts.labels[order]
        if ts.subject_id == test_subject:
            if ea.enabled:
                warm = ea.warmup if ea.test_init == "warmup-k" else 1
                x = align_online(x, AlignState(), warmup=warm)
            test_x, test_y = x, y
        else:
            if ea.enabled:
                x = align(x, AlignState(x))
            train_x.append(x)
            train_y.append(y)
    return (np.concatenate(train_x), np.concatenate(train_y),
            test_x, test_y)


# -- protocol runs ----------------------------------------------------------------


@dataclass
class RunRecord:
    protocol: str
    seeds: tuple
    runs: list                        # dicts: subject, fold, seed, metrics
    mean_accuracy: float
    std_accuracy: float
    seed_accuracies: dict
    duration_s: float
    means: dict = field(default_factory=dict)

    def to_dict(self):
        return {
            "protocol": self.protocol,
            "seeds": list(self.seeds),
            "mean_accuracy": self.mean_accuracy,
            "std_accuracy": self.std_accuracy,
            "seed_accuracies": self.seed_accuracies,
            "duration_s": self.duration_s,
            "means": self.means,
            "runs": self.runs,
        }


def _run_task(args):
    (model_cfg, run_cfg, seed, subject, fold, xtr, ytr, xte, yte) = args
    model, history = train_one(model_cfg, xtr, ytr, seed,
                               lr=run_cfg.lr, epochs=run_cfg.epochs,
                               batch_size=run_cfg.batch_size)
    rep = evaluate_model(model, xte, yte, full=run_cfg.full_metrics)
    return {"subject": subject, "fold": fold, "seed": seed,
            "final_loss": history[-1], **rep.to_dict()}


def _n_workers() -> int:
    return max(1, int(os.environ.get("DBCONF_THREADS", "1")))


def run_protocol(run_cfg: RunConfig, model_cfg: ModelConfig,
                 sets: list[TrialSet]) -> RunRecord:
    """Seeded multi-run evaluation under one protocol.

    CO/CV average over folds then subjects within a seed; LOSO averages
    over held-out subjects. The reported mean/std are over seeds.
    """
    run_cfg.validate()
    t0 = time.time()
    tasks = []
    if run_cfg.protocol == "LOSO":
        if len(sets) < 2:
            raise ValueError("LOSO needs at least 2 subjects")
        for ts in sets:
            xtr, ytr, xte, yte = prepare_loso(sets, ts.subject_id, run_cfg.ea)
            for seed in run_cfg.seeds:
                tasks.append((model_cfg, run_cfg, seed, ts.subject_id, 0,
                              xtr, ytr, xte, yte))
    else:
        for ts in sets:
            plan = (split_co(ts) if run_cfg.protocol == "CO"
                    else split_cv(ts, run_cfg.cv_folds))
            for fold, (tr, te) in enumerate(plan.folds):
                xtr, ytr, xte, yte = prepare_within_subject(
                    ts, tr, te, run_cfg.ea)
                for seed in run_cfg.seeds:
                    tasks.append((model_cfg, run_cfg, seed, ts.subject_id,
                                  fold, xtr, ytr, xte, yte))

    workers = _n_workers()
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            runs = list(pool.map(_run_task, tasks))
    else:
        runs = [_run_task(t) for t in tasks]

    seed_acc = {}
    for seed in run_cfg.seeds:
        per_subject = {}
        for r in runs:
            if r["seed"] == seed:
                per_subject.setdefault(r["subject"], []).append(r["accuracy"])
        subj_means = [float(np.mean(v)) for v in per_subject.values()]
        seed_acc[seed] = float(np.mean(subj_means))
    accs = np.array([seed_acc[s] for s in run_cfg.seeds])
    means = {}
    for key in ("accuracy", "f1", "bca", "auc"):
        vals = [r[key] for r in runs if key in r]
        if len(vals) == len(runs):
            means[key] = float(np.mean(vals))
    return RunRecord(
        protocol=run_cfg.protocol, seeds=tuple(run_cfg.seeds), runs=runs,
        mean_accuracy=float(accs.mean()),
        std_accuracy=float(accs.std(ddof=0)),
        seed_accuracies={str(k): v for k, v in seed_acc.items()},
        duration_s=time.time() - t0, means=means)


# -- reporting / export ------------------------------------------------------------


def write_report(record: RunRecord, out_dir, stem="report"):
    """Flat key=value text plus a machine-readable JSON twin."""
    os.makedirs(out_dir, exist_ok=True)
    d = record.to_dict()
    lines = [f"protocol={d['protocol']}",
             f"seeds={','.join(str(s) for s in d['seeds'])}",
             f"mean_accuracy={d['mean_accuracy']:.4f}",
             f"std_accuracy={d['std_accuracy']:.4f}",
             f"duration_s={d['duration_s']:.2f}"]
    for k, v in d["means"].items():
        lines.append(f"mean_{k}={v:.4f}")
    for s, v in d["seed_accuracies"].items():
        lines.append(f"seed_{s}_accuracy={v:.4f}")
    txt_path = os.path.join(out_dir, f"{stem}.txt")
    with open(txt_path, "w") as f:
        f.write("\n".join(lines) + "\n")
    with open(os.path.join(out_dir, f"{stem}.json"), "w") as f:
        json.dump(d, f, indent=1)
    return txt_path


def export_attention(model: Model, ts: TrialSet, out_path):
    """Per-trial channel attention scores as CSV, plus per-channel means."""
    if not model.cfg.use_spatial_branch or model.cfg.mean_pool_channels:
        raise ValueError("model has no channel-attention module to export")
    if (ts.n_channels, ts.n_samples) != (model.cfg.channels,
                                         model.cfg.time_samples):
        raise ValueError(
            f"trialset (C={ts.n_channels}, T={ts.n_samples}) does not match "
            f"checkpoint (C={model.cfg.channels}, T={model.cfg.time_samples})")
    _, _, weights = model.predict(ts.trials)
    with open(out_path, "w") as f:
        f.write("trial," + ",".join(f"ch{c}" for c in range(ts.n_channels))
                + "\n")
        for i, row in enumerate(weights):
            f.write(f"{i}," + ",".join(f"{v:.12g}" for v in row) + "\n")
        mean = weights.mean(axis=0)
        f.write("mean," + ",".join(f"{v:.12g}" for v in mean) + "\n")
    return weights
