"""Pure-numpy fallback for the grouped conv1d kernels.

Same contracts as the compiled extension: inputs are pre-padded,
C-contiguous float64. Uses stride-trick windows plus batched matmul so
BLAS does the heavy lifting, with an elementwise fast path for the
fully-depthwise case (one input and one output channel per group).
"""

import numpy as np


def _windows(xp: np.ndarray, K: int, stride: int) -> np.ndarray:
    """Sliding view (B, Cin, Tout, K) over the padded time axis."""
    B, Cin, Tp = xp.shape
    Tout = (Tp - K) // stride + 1
    sb, sc, st = xp.strides
    return np.lib.stride_tricks.as_strided(
        xp, shape=(B, Cin, Tout, K), strides=(sb, sc, st * stride, st),
        writeable=False)


def conv1d_forward(xp, w, stride, groups):
    B, Cin, Tp = xp.shape
    Cout, cg, K = w.shape
    cog = Cout // groups
    Tout = (Tp - K) // stride + 1
    if cg == 1 and cog == 1:
        # depthwise: y[b,c,t] = sum_k w[c,0,k] * xp[b,c,t*s+k]
        win = _windows(xp, K, stride)             # (B, Cin, Tout, K)
        return np.einsum("bctk,ck->bct", win, w[:, 0, :], optimize=True)
    win = _windows(xp, K, stride).reshape(B, groups, cg, Tout, K)
    wg = w.reshape(groups, cog, cg * K)
    # (B, G, Tout, cg*K) x (G, cg*K, cog) -> (B, G, Tout, cog)
    col = win.transpose(0, 1, 3, 2, 4).reshape(B, groups, Tout, cg * K)
    y = np.matmul(col, wg.transpose(0, 2, 1))
    return np.ascontiguousarray(
        y.transpose(0, 1, 3, 2).reshape(B, Cout, Tout))


def conv1d_backward_x(gy, w, stride, groups, Tp):
    B, Cout, Tout = gy.shape
    cg, K = w.shape[1], w.shape[2]
    cog = Cout // groups
    Cin = groups * cg
    gx = np.zeros((B, Cin, Tp))
    gyg = gy.reshape(B, groups, cog, Tout)
    wg = w.reshape(groups, cog, cg, K)
    for k in range(K):
        # gx[b, g*cg+c, t*s+k] += sum_o w[g,o,c,k] * gy[b,g,o,t]
        contrib = np.einsum("goc,bgot->bgct", wg[:, :, :, k], gyg,
                            optimize=True)
        gx[:, :, k:k + stride * Tout:stride] += contrib.reshape(
            B, Cin, Tout)
    return gx


def conv1d_backward_w(gy, xp, stride, groups, K):
    B, Cout, Tout = gy.shape
    Cin = xp.shape[1]
    cg = Cin // groups
    cog = Cout // groups
    win = _windows(xp, K, stride).reshape(B, groups, cg, Tout, K)
    gyg = gy.reshape(B, groups, cog, Tout)
    gw = np.einsum("bgot,bgctk->gock", gyg, win, optimize=True)
    return np.ascontiguousarray(gw.reshape(Cout, cg, K))
