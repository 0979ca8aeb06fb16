"""Brute-force reference implementations shared by the test modules."""

import itertools

import numpy as np


def brute_isotonic(v, w):
    """Minimum-SSE monotone fit over every partition into consecutive blocks."""
    n = len(v)
    best, best_fit = np.inf, None
    for cuts in itertools.product((0, 1), repeat=n - 1):
        bounds = [0] + [i + 1 for i, c in enumerate(cuts) if c] + [n]
        means = [np.dot(v[a:b], w[a:b]) / w[a:b].sum() for a, b in zip(bounds, bounds[1:])]
        if any(m2 < m1 for m1, m2 in zip(means, means[1:])):
            continue
        fit = np.concatenate([np.full(b - a, m) for (a, b), m in
                              zip(zip(bounds, bounds[1:]), means)])
        sse = float(np.dot(w, (v - fit) ** 2))
        if sse < best:
            best, best_fit = sse, fit
    return best_fit
