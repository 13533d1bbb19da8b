"""Shared finite-difference oracles and fixtures."""
import numpy as np
import pytest

from dbconf.autodiff import Tensor, no_grad


def fd_grad(f, x, h=1e-6):
    """Central-difference gradient of scalar f w.r.t. numpy array x."""
    x = np.asarray(x, dtype=np.float64)
    g = np.zeros_like(x)
    it = np.nditer(x, flags=["multi_index"])
    with no_grad():
        while not it.finished:
            i = it.multi_index
            xp = x.copy(); xp[i] += h
            xm = x.copy(); xm[i] -= h
            g[i] = (f(xp) - f(xm)) / (2 * h)
            it.iternext()
    return g


def rel_err(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    denom = np.maximum(np.maximum(np.abs(a), np.abs(b)), 1e-8)
    return float(np.max(np.abs(a - b) / denom))


def check_grads(build, arrays, tol=1e-6, h=1e-6):
    """Compare analytic grads of scalar build(*tensors) against FD.

    `build` maps Tensors to a scalar Tensor; `arrays` is a dict of
    name -> numpy array. Returns max relative error over all inputs.
    """
    tensors = {k: Tensor(v, requires_grad=True) for k, v in arrays.items()}
    out = build(**tensors)
    out.backward()
    worst = 0.0
    for name, arr in arrays.items():
        def f(x, _name=name):
            alt = {k: Tensor(v) for k, v in arrays.items()}
            alt[_name] = Tensor(x)
            return build(**alt).item()
        fd = fd_grad(f, arr, h=h)
        worst = max(worst, rel_err(tensors[name].grad, fd))
    assert worst <= tol, f"max relative grad error {worst:.3e} > {tol}"
    return worst


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
