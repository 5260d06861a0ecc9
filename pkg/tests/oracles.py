"""Brute-force reference implementations used across the test suite."""
import itertools
import math

import numpy as np


def plugin_mi(counts):
    """I(X;Y) by explicit loops over every cell; leading axes form X, last axis Y."""
    counts = np.asarray(counts, dtype=float)
    shape = counts.shape
    total = 0.0
    for idx in itertools.product(*(range(s) for s in shape)):
        total += counts[idx]
    px, py = {}, {}
    for idx in itertools.product(*(range(s) for s in shape)):
        x, y = idx[:-1], idx[-1]
        px[x] = px.get(x, 0.0) + counts[idx]
        py[y] = py.get(y, 0.0) + counts[idx]
    mi = 0.0
    for idx in itertools.product(*(range(s) for s in shape)):
        c = counts[idx]
        if c > 0:
            p = c / total
            mi += p * math.log(p / ((px[idx[:-1]] / total) * (py[idx[-1]] / total)))
    return mi


def plugin_entropy(counts):
    flat = [c for c in np.ravel(counts) if c > 0]
    total = sum(flat)
    return -sum(c / total * math.log(c / total) for c in flat)


def count_table(shape, *codes):
    table = np.zeros(shape)
    for cell in zip(*codes):
        table[tuple(int(c) for c in cell)] += 1
    return table
