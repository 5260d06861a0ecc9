"""Plug-in information statistics over discretized modality features.

All quantities are in nats.
"""
from __future__ import annotations

from dataclasses import dataclass, fields
from typing import Sequence

import numpy as np

from .errors import ConsistencyError, ParameterError

MODALITIES = ("t", "f", "s")


def mutual_information(counts) -> float:
    """Plug-in I(X;Y) from a contingency table.

    ``counts`` has shape ``(..., ny)``: every leading axis is part of X, the
    last axis is Y. A 3-way table ``(nx, nz, ny)`` therefore gives I(X,Z;Y).
    """
    c = np.asarray(counts, dtype=float)
    if c.ndim < 2:
        raise ParameterError("joint needs at least two axes")
    if np.any(c < 0) or not np.all(np.isfinite(c)):
        raise ParameterError("joint counts must be finite and nonnegative")
    c = c.reshape(-1, c.shape[-1])
    total = c.sum()
    if total <= 0:
        raise ParameterError("joint is empty")
    px = c.sum(axis=1, keepdims=True)
    py = c.sum(axis=0, keepdims=True)
    nz = c > 0
    # p(x,y)/(p(x)p(y)) = c * total / (cx * cy)
    ratio = (c * total)[nz] / (px * py)[nz]
    mi = float(np.sum(c[nz] * np.log(ratio)) / total)
    return max(mi, 0.0)


def entropy(counts) -> float:
    c = np.asarray(counts, dtype=float).ravel()
    p = c[c > 0] / c.sum()
    return float(-np.sum(p * np.log(p)))


def redundancy(joint_xy, joint_zy, joint_xzy) -> float:
    """R = I(X;Y) + I(Z;Y) - I(X,Z;Y); negative values mean synergy."""
    joint_xy, joint_zy, joint_xzy = (np.asarray(j) for j in (joint_xy, joint_zy, joint_xzy))
    ys = [j.reshape(-1, j.shape[-1]).sum(axis=0) for j in (joint_xy, joint_zy, joint_xzy)]
    if not all(y.shape == ys[0].shape and np.array_equal(y, ys[0]) for y in ys):
        raise ConsistencyError("joints disagree on the Y marginal")
    return mutual_information(joint_xy) + mutual_information(joint_zy) - mutual_information(joint_xzy)


def joint_counts(*codes: np.ndarray, sizes: Sequence[int]) -> np.ndarray:
    """Contingency table of integer code arrays with the given per-axis sizes."""
    flat = np.ravel_multi_index(tuple(np.asarray(c, dtype=int) for c in codes), tuple(sizes))
    return np.bincount(flat, minlength=int(np.prod(sizes))).reshape(tuple(sizes))


@dataclass(frozen=True)
class CfdStats:
    i_t: float
    i_f: float
    i_s: float
    r_tf: float
    r_fs: float
    r_st: float
    c_tfs: float

    def as_dict(self) -> dict[str, float]:
        return {f.name: getattr(self, f.name) for f in fields(self)}


def cfd_from_codes(codes_t, codes_f, codes_s, labels, n_bins: Sequence[int] | int | None = None) -> CfdStats:
    """CFD statistics from already-discretized modality codes."""
    codes = [np.asarray(c, dtype=int) for c in (codes_t, codes_f, codes_s)]
    y_values, y = np.unique(np.asarray(labels), return_inverse=True)
    if len(y_values) < 2:
        raise ParameterError("CFD statistics need at least two classes")
    if n_bins is None:
        sizes = [int(c.max()) + 1 for c in codes]
    elif np.isscalar(n_bins):
        sizes = [int(n_bins)] * 3
    else:
        sizes = [int(b) for b in n_bins]
    ny = len(y_values)
    single = [joint_counts(c, y, sizes=(b, ny)) for c, b in zip(codes, sizes)]
    info = [mutual_information(j) for j in single]

    def pair(a: int, b: int) -> float:
        j3 = joint_counts(codes[a], codes[b], y, sizes=(sizes[a], sizes[b], ny))
        return info[a] + info[b] - mutual_information(j3)

    r_tf, r_fs, r_st = pair(0, 1), pair(1, 2), pair(2, 0)
    c = info[0] + info[1] + info[2] - r_tf - r_fs - r_st
    return CfdStats(info[0], info[1], info[2], r_tf, r_fs, r_st, c)


def top_direction(x: np.ndarray, iters: int = 500, tol: float = 1e-13) -> np.ndarray:
    """Leading principal direction of centered rows by power iteration.

    Sign is fixed so the largest-magnitude component is positive.
    """
    x = np.asarray(x, dtype=float)
    x = x - x.mean(axis=0)
    cov = x.T @ x / max(len(x) - 1, 1)
    v = np.ones(cov.shape[0]) / np.sqrt(cov.shape[0])
    # start vector must not be orthogonal to the top eigenvector
    v = v + 1e-3 * np.cos(np.arange(cov.shape[0]))
    v /= np.linalg.norm(v)
    for _ in range(iters):
        w = cov @ v
        norm = np.linalg.norm(w)
        if norm == 0:
            break
        w /= norm
        done = np.linalg.norm(w - v) < tol
        v = w
        if done:
            break
    j = int(np.argmax(np.abs(v)))
    return v if v[j] >= 0 else -v


@dataclass(frozen=True)
class ModalityBinning:
    mean: np.ndarray
    direction: np.ndarray
    edges: np.ndarray

    @property
    def n_bins(self) -> int:
        return len(self.edges) + 1

    def project(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float).reshape(len(x), -1)
        return (x - self.mean) @ self.direction

    def codes(self, x: np.ndarray) -> np.ndarray:
        return np.searchsorted(self.edges, self.project(x), side="right")


@dataclass(frozen=True)
class BinningSpec:
    """Per-modality projection + equal-frequency bins, fit on real data only."""

    t: ModalityBinning
    f: ModalityBinning
    s: ModalityBinning

    @classmethod
    def fit(cls, real, n_bins: int = 8) -> "BinningSpec":
        if len(real) < n_bins:
            raise ParameterError(f"need at least {n_bins} samples to fit {n_bins} bins")
        parts = {}
        for name in MODALITIES:
            x = np.asarray(getattr(real, name), dtype=float).reshape(len(real), -1)
            mean = x.mean(axis=0)
            direction = top_direction(x)
            proj = (x - mean) @ direction
            qs = np.quantile(proj, np.arange(1, n_bins) / n_bins)
            parts[name] = ModalityBinning(mean, direction, np.unique(qs))
        return cls(**parts)

    def codes(self, data) -> list[np.ndarray]:
        return [getattr(self, name).codes(getattr(data, name)) for name in MODALITIES]

    def sizes(self) -> list[int]:
        return [getattr(self, name).n_bins for name in MODALITIES]


def cfd_stats(samples, spec: BinningSpec) -> CfdStats:
    """CFD statistics of a tri-modal set under a fixed binning."""
    labels = np.asarray(samples.labels)
    if len(np.unique(labels)) < 2:
        raise ParameterError("CFD statistics need at least two classes")
    if len(labels) < min(spec.sizes()):
        raise ParameterError("too few samples for the binning")
    return cfd_from_codes(*spec.codes(samples), labels, n_bins=spec.sizes())


def orthogonality_penalty(features: Sequence[np.ndarray], eps: float = 1e-12) -> float:
    """Sum over ordered pairs i != j of the squared mean normalized inner product.

    Each modality's batch features are mean-centered over the batch and every
    row scaled to unit norm before the per-sample inner products are averaged.
    """
    normed = []
    for x in features:
        x = np.asarray(x, dtype=float)
        x = x - x.mean(axis=0)
        normed.append(x / np.sqrt(np.sum(x * x, axis=1, keepdims=True) + eps))
    total = 0.0
    for i, a in enumerate(normed):
        for j, b in enumerate(normed):
            if i != j:
                total += float(np.mean(np.sum(a * b, axis=1))) ** 2
    return total


def cfd_loss(real: CfdStats, synth: CfdStats, features=None, lambda_orth: float = 0.1) -> float:
    gap = abs(real.c_tfs - synth.c_tfs)
    if features is None or lambda_orth == 0:
        return gap
    return gap + lambda_orth * orthogonality_penalty(features)
