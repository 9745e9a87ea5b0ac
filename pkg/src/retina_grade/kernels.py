"""Hot inner loops, each in a numba and a pure-numpy flavour.

The public names (``analysis_rows``, ``label_components``, ...) are bound at
import time to the numba variants when ``_accel.NUMBA_ENABLED`` is true and
to the numpy variants otherwise. Both flavours stay importable under their
suffixed names so tests and the benchmark can compare them directly.

All kernels take and return plain ndarrays; argument checking happens in the
calling modules.
"""

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy import ndimage

from ._accel import NUMBA_ENABLED, njit

_STRUCT4 = ndimage.generate_binary_structure(2, 1)
_STRUCT8 = ndimage.generate_binary_structure(2, 2)


# --------------------------------------------------------------------------
# strided two-tap-bank analysis filter


def analysis_rows_numpy(padded, lowpass, highpass):
    """Stride-2 correlation of every row of ``padded`` with both taps."""
    width = lowpass.shape[0]
    windows = sliding_window_view(padded, width, axis=1)[:, ::2, :]
    return windows @ lowpass, windows @ highpass


@njit
def analysis_rows_numba(padded, lowpass, highpass):
    rows, length = padded.shape
    width = lowpass.shape[0]
    out_len = (length - width) // 2 + 1
    low = np.empty((rows, out_len))
    high = np.empty((rows, out_len))
    for r in range(rows):
        for k in range(out_len):
            base = 2 * k
            s_lo = 0.0
            s_hi = 0.0
            for t in range(width):
                v = padded[r, base + t]
                s_lo += lowpass[t] * v
                s_hi += highpass[t] * v
            low[r, k] = s_lo
            high[r, k] = s_hi
    return low, high


# --------------------------------------------------------------------------
# connected-component labelling


def label_components_numpy(bits, eight=True):
    """Label connected foreground regions.

    Returns ``(labels, sizes)`` where ``labels`` is 0 on background and
    ``sizes[k]`` is the pixel count of component ``k`` (``sizes[0] == 0``).
    """
    labels, n = ndimage.label(bits, structure=_STRUCT8 if eight else _STRUCT4)
    sizes = np.bincount(labels.ravel(), minlength=n + 1).astype(np.int64)
    sizes[0] = 0
    return labels.astype(np.int32), sizes


@njit
def label_components_numba(bits, eight=True):
    h, w = bits.shape
    labels = np.zeros((h, w), np.int32)
    sizes = np.zeros(h * w + 1, np.int64)
    stack = np.empty(h * w, np.int64)
    n = 0
    for i in range(h):
        for j in range(w):
            if not bits[i, j] or labels[i, j] != 0:
                continue
            n += 1
            labels[i, j] = n
            stack[0] = i * w + j
            top = 1
            count = 0
            while top > 0:
                top -= 1
                p = stack[top]
                pi = p // w
                pj = p - pi * w
                count += 1
                for di in range(-1, 2):
                    qi = pi + di
                    if qi < 0 or qi >= h:
                        continue
                    for dj in range(-1, 2):
                        if di == 0 and dj == 0:
                            continue
                        if not eight and di != 0 and dj != 0:
                            continue
                        qj = pj + dj
                        if qj < 0 or qj >= w:
                            continue
                        if bits[qi, qj] and labels[qi, qj] == 0:
                            labels[qi, qj] = n
                            stack[top] = qi * w + qj
                            top += 1
            sizes[n] = count
    return labels, sizes[: n + 1].copy()


# --------------------------------------------------------------------------
# ring histogram


def ring_histogram_numpy(bits, ring_index, rings):
    """Count true pixels per ring; ``ring_index`` holds 0-based ring ids."""
    return np.bincount(ring_index[bits], minlength=rings).astype(np.int64)


@njit
def ring_histogram_numba(bits, ring_index, rings):
    out = np.zeros(rings, np.int64)
    h, w = bits.shape
    for i in range(h):
        for j in range(w):
            if bits[i, j]:
                out[ring_index[i, j]] += 1
    return out


# --------------------------------------------------------------------------
# binarize -> drop small components -> ring counts, for many thresholds


def threshold_stack_numpy(values, thresholds, ring_index, rings, min_size, eight=True):
    out = np.zeros((thresholds.shape[0], rings), np.int64)
    for t, thr in enumerate(thresholds):
        labels, sizes = label_components_numpy(values > thr, eight)
        keep = sizes >= min_size
        keep[0] = False
        out[t] = ring_histogram_numpy(keep[labels], ring_index, rings)
    return out


@njit
def threshold_stack_numba(values, thresholds, ring_index, rings, min_size, eight=True):
    out = np.zeros((thresholds.shape[0], rings), np.int64)
    h, w = values.shape
    for t in range(thresholds.shape[0]):
        labels, sizes = label_components_numba(values > thresholds[t], eight)
        for i in range(h):
            for j in range(w):
                lab = labels[i, j]
                if lab > 0 and sizes[lab] >= min_size:
                    out[t, ring_index[i, j]] += 1
    return out


# --------------------------------------------------------------------------
# full-batch gradient descent for the sigmoid MLP
#
# Both flavours update W1, b1, W2, b2 in place and return -1 on success or
# the index of the epoch whose loss was non-finite.


def _sigmoid(z):
    return 1.0 / (1.0 + np.exp(-z))


def train_gd_numpy(X, T, W1, b1, W2, b2, lr, epochs):
    n, k = T.shape
    scale = 2.0 / (n * k)
    # non-finite values are reported through the return value instead
    with np.errstate(over="ignore", invalid="ignore"):
        for epoch in range(epochs):
            H = _sigmoid(X @ W1.T + b1)
            Y = _sigmoid(H @ W2.T + b2)
            diff = Y - T
            loss = np.mean(diff * diff)
            if not np.isfinite(loss):
                return epoch
            d2 = scale * diff * Y * (1.0 - Y)
            d1 = (d2 @ W2) * H * (1.0 - H)
            W2 -= lr * (d2.T @ H)
            b2 -= lr * d2.sum(axis=0)
            W1 -= lr * (d1.T @ X)
            b1 -= lr * d1.sum(axis=0)
    return -1


@njit
def train_gd_numba(X, T, W1, b1, W2, b2, lr, epochs):
    n, d = X.shape
    k = T.shape[1]
    hdim = W1.shape[0]
    scale = 2.0 / (n * k)
    gW1 = np.empty_like(W1)
    gb1 = np.empty_like(b1)
    gW2 = np.empty_like(W2)
    gb2 = np.empty_like(b2)
    hs = np.empty(hdim)
    d2 = np.empty(k)
    for epoch in range(epochs):
        gW1[:] = 0.0
        gb1[:] = 0.0
        gW2[:] = 0.0
        gb2[:] = 0.0
        loss = 0.0
        for s in range(n):
            for j in range(hdim):
                z = b1[j]
                for i in range(d):
                    z += W1[j, i] * X[s, i]
                hs[j] = 1.0 / (1.0 + np.exp(-z))
            for o in range(k):
                z = b2[o]
                for j in range(hdim):
                    z += W2[o, j] * hs[j]
                y = 1.0 / (1.0 + np.exp(-z))
                diff = y - T[s, o]
                loss += diff * diff
                d2[o] = scale * diff * y * (1.0 - y)
            for o in range(k):
                gb2[o] += d2[o]
                for j in range(hdim):
                    gW2[o, j] += d2[o] * hs[j]
            for j in range(hdim):
                dh = 0.0
                for o in range(k):
                    dh += d2[o] * W2[o, j]
                d1 = dh * hs[j] * (1.0 - hs[j])
                gb1[j] += d1
                for i in range(d):
                    gW1[j, i] += d1 * X[s, i]
        loss /= n * k
        if not np.isfinite(loss):
            return epoch
        for o in range(k):
            b2[o] -= lr * gb2[o]
            for j in range(hdim):
                W2[o, j] -= lr * gW2[o, j]
        for j in range(hdim):
            b1[j] -= lr * gb1[j]
            for i in range(d):
                W1[j, i] -= lr * gW1[j, i]
    return -1


if NUMBA_ENABLED:
    BACKEND = "numba"
    analysis_rows = analysis_rows_numba
    label_components = label_components_numba
    ring_histogram = ring_histogram_numba
    threshold_stack = threshold_stack_numba
    train_gd = train_gd_numba
else:
    BACKEND = "numpy"
    analysis_rows = analysis_rows_numpy
    label_components = label_components_numpy
    ring_histogram = ring_histogram_numpy
    threshold_stack = threshold_stack_numpy
    train_gd = train_gd_numpy
