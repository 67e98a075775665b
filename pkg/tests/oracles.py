"""Independent reference implementations used as test oracles.

These deliberately avoid the package's code paths: plain Python loops,
exact rational arithmetic and explicit convolution.
"""

import math
from fractions import Fraction

import numpy as np


def naive_ccc(x, y):
    """Two-pass CCC with population moments, one scalar at a time."""
    n = len(x)
    mx = sum(x) / n
    my = sum(y) / n
    sxx = sum((a - mx) ** 2 for a in x) / n
    syy = sum((b - my) ** 2 for b in y) / n
    sxy = sum((a - mx) * (b - my) for a, b in zip(x, y)) / n
    return 2 * sxy / (sxx + syy + (mx - my) ** 2)


def rational_centers(frame_count, fps, sample_rate=16000):
    """Exact analysis-window centers i * sr / fps as Fractions."""
    step = Fraction(sample_rate) / Fraction(str(fps))
    return [i * step for i in range(frame_count)]


def reflect_index(i, n):
    """Half-sample symmetric reflection (d c b a | a b c d | d c b a)."""
    period = 2 * n
    i = i % period
    return i if i < n else period - 1 - i


def gaussian_smooth_oracle(signal, sigma, truncate=3.0):
    radius = int(truncate * sigma + 0.5)
    taps = [math.exp(-0.5 * (k / sigma) ** 2) for k in range(-radius, radius + 1)]
    s = sum(taps)
    taps = [t / s for t in taps]
    n = len(signal)
    out = np.zeros(n)
    for i in range(n):
        out[i] = sum(taps[k + radius] * signal[reflect_index(i + k, n)] for k in range(-radius, radius + 1))
    return out


def central_difference(f, x, h=1e-4):
    x = np.array(x, dtype=np.float64)
    grad = np.zeros_like(x)
    for i in range(len(x)):
        xp, xm = x.copy(), x.copy()
        xp[i] += h
        xm[i] -= h
        grad[i] = (f(xp) - f(xm)) / (2 * h)
    return grad
