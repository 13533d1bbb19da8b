"""Euclidean alignment of EEG trials.

Each trial X (C x T) is left-multiplied by the inverse square root of
the subject's mean second-moment matrix mean(X_i X_i^T). AlignState keeps
the running sum so the reference can grow online as test trials arrive.
"""

from __future__ import annotations

import numpy as np


class AlignmentError(ValueError):
    pass


def reference_covariance(trials) -> np.ndarray:
    """Arithmetic mean of X_i X_i^T over the trial list (no mean removal)."""
    trials = list(trials)
    if not trials:
        raise AlignmentError("reference_covariance needs at least one trial")
    C = trials[0].shape[0]
    acc = np.zeros((C, C))
    for X in trials:
        if X.ndim != 2 or X.shape[0] != C:
            raise AlignmentError(
                f"trial shape {X.shape} inconsistent with {C} channels")
        acc += X @ X.T
    return acc / len(trials)


def inverse_sqrt(m: np.ndarray, epsilon: float | None = None) -> np.ndarray:
    """Symmetric inverse square root via eigendecomposition.

    Eigenvalues are floored at `epsilon` (default 1e-10 * trace/C) to
    guard rank-deficient references.
    """
    C = m.shape[0]
    scale = max(np.abs(m).max(), 1e-300)
    if np.abs(m - m.T).max() > 1e-8 * scale:
        raise AlignmentError("matrix is not symmetric within 1e-8 relative")
    if epsilon is None:
        epsilon = 1e-10 * np.trace(m) / C
        epsilon = max(epsilon, 1e-300)
    lam, q = np.linalg.eigh((m + m.T) / 2.0)
    return (q * (1.0 / np.sqrt(np.maximum(lam, epsilon)))) @ q.T


class AlignState:
    """Running reference for one subject; single writer, cached transform."""

    def __init__(self, trials=None, epsilon: float | None = None):
        self.sum_cov = None
        self.n = 0
        self.epsilon = epsilon
        self._cached_inv_sqrt = None
        if trials is not None:
            for X in trials:
                self.update(X)

    def update(self, trial: np.ndarray):
        """Fold one new trial into the reference (online update)."""
        if trial.ndim != 2:
            raise AlignmentError(f"trial must be C x T, got shape {trial.shape}")
        cov = trial @ trial.T
        if self.sum_cov is None:
            self.sum_cov = cov
        else:
            if cov.shape != self.sum_cov.shape:
                raise AlignmentError(
                    f"channel mismatch: trial gives {cov.shape}, "
                    f"state holds {self.sum_cov.shape}")
            self.sum_cov = self.sum_cov + cov
        self.n += 1
        self._cached_inv_sqrt = None

    @property
    def reference(self) -> np.ndarray:
        if self.n < 1:
            raise AlignmentError("no trials folded into AlignState yet")
        return self.sum_cov / self.n

    @property
    def inv_sqrt(self) -> np.ndarray:
        if self._cached_inv_sqrt is None:
            self._cached_inv_sqrt = inverse_sqrt(self.reference, self.epsilon)
        return self._cached_inv_sqrt

    def align(self, trial: np.ndarray) -> np.ndarray:
        if trial.shape[0] != self.sum_cov.shape[0]:
            raise AlignmentError(
                f"trial has {trial.shape[0]} channels, state expects "
                f"{self.sum_cov.shape[0]}")
        return self.inv_sqrt @ trial


def align(trials, state: AlignState) -> np.ndarray:
    """Align a (B, C, T) array or list of trials with a prepared state."""
    arr = np.asarray(trials, dtype=np.float64)
    if arr.shape[-2] != state.sum_cov.shape[0]:
        raise AlignmentError(
            f"trials have {arr.shape[-2]} channels, state expects "
            f"{state.sum_cov.shape[0]}")
    return np.einsum("ij,...jt->...it", state.inv_sqrt, arr)


def align_online(trials, state: AlignState | None = None,
                 warmup: int = 1) -> np.ndarray:
    """Causal test-time alignment.

    Trials arrive in order; each is folded into the state before being
    aligned with the updated reference. With `warmup` k > 1 the first k
    trials are folded before any alignment happens (they are then aligned
    with that warm reference), matching the warmup-k init policy.
    """
    arr = np.asarray(trials, dtype=np.float64)
    if state is None:
        state = AlignState()
    out = np.empty_like(arr)
    warm_end = 0
    if state.n == 0 and warmup > 1:
        warm_end = min(warmup, len(arr))
        for X in arr[:warm_end]:
            state.update(X)
        for i in range(warm_end):
            out[i] = state.align(arr[i])
    for i in range(warm_end, len(arr)):
        state.update(arr[i])
        out[i] = state.align(arr[i])
    return out
