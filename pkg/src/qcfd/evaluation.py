"""Evaluation protocol: reference encoder/classifier, fidelity metrics, normalized scores.

Set-level reductions use ``math.fsum`` so reports do not depend on sample order.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from . import autograd as ag
from .dsp import TriModalSet, power_spectrum
from .errors import DegenerateBaselineError, ParameterError
from .info import BinningSpec, CfdStats, cfd_stats
from .models import ReferenceModels
from .optim import Adam, AdamConfig

PROB_FLOOR = 1e-9
# plug-in C below this (nats) is rounding residue, not signal
C_FLOOR = 1e-9


def _fsum_mean(a: np.ndarray) -> np.ndarray:
    """Column means with exactly rounded sums (order independent)."""
    a = np.asarray(a, dtype=float)
    if a.ndim == 1:
        return np.float64(math.fsum(a) / len(a))
    return np.array([math.fsum(col) for col in a.T]) / len(a)


# ----------------------------------------------------------------------------
# reference models

def train_reference_models(real: TriModalSet, seed: int = 0, embed: int = 8, epochs: int = 150,
                           batch_size: int = 64, config: AdamConfig = AdamConfig()) -> ReferenceModels:
    """Fit per-modality encoders and a softmax classifier on real data, then freeze."""
    classes = real.classes
    if len(classes) < 2:
        raise ParameterError("reference models need at least two classes")
    rng = np.random.default_rng(seed)
    n = len(real)
    dims = (real.t.shape[1], real.f.shape[1], int(np.prod(real.s.shape[1:])))
    models = ReferenceModels.init(dims, embed=embed, n_classes=len(classes), rng=rng, seed=seed)
    targets = np.searchsorted(classes, real.labels)
    s_flat = real.s.reshape(n, -1)
    opt = Adam(models.params(), config)
    for _ in range(epochs):
        order = rng.permutation(n)
        for start in range(0, n, batch_size):
            idx = order[start:start + batch_size]
            logp = ag.log_softmax(models.logits(real.t[idx], real.f[idx], s_flat[idx]), axis=1)
            onehot = np.eye(len(classes))[targets[idx]]
            loss = -(logp * onehot).sum() * (1.0 / len(idx))
            opt.step(ag.grad(loss, opt.params))
    return models.freeze()


def accuracy(models: ReferenceModels, data: TriModalSet) -> float:
    pred = np.argmax(models.predict_proba(data), axis=1)
    return float(np.mean(pred == np.searchsorted(sorted(set(data.labels)), data.labels)))


# ----------------------------------------------------------------------------
# raw metrics

def embedding_variance(embeddings) -> float:
    """Mean over dimensions of the population variance across samples."""
    x = np.asarray(embeddings, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    if len(x) < 2:
        raise ParameterError("embedding variance needs at least two samples")
    mu = _fsum_mean(x)
    return float(math.fsum(_fsum_mean((x - mu) ** 2)) / x.shape[1])


def mean_predictive(probs: np.ndarray) -> np.ndarray:
    p = np.maximum(_fsum_mean(probs), PROB_FLOOR)
    return p / math.fsum(p)


def kl_divergence(p, q) -> float:
    p, q = np.asarray(p, dtype=float), np.asarray(q, dtype=float)
    nz = p > 0
    return max(float(math.fsum(p[nz] * np.log(p[nz] / q[nz]))), 0.0)


def plausibility_gap(models: ReferenceModels, real: TriModalSet, gen: TriModalSet) -> float:
    """KL(mean classifier output on real || mean output on generated), in nats."""
    if len(real) == 0 or len(gen) == 0:
        raise ParameterError("plausibility gap needs nonempty sets")
    return kl_divergence(mean_predictive(models.predict_proba(real)), mean_predictive(models.predict_proba(gen)))


@dataclass(frozen=True)
class MorphologyStats:
    p2p: float
    rms: float
    spectral_entropy: float


def spectral_entropy(t, window: int = 64, k: int = 32) -> np.ndarray:
    power = power_spectrum(t, window, k)
    total = power.sum(axis=-1, keepdims=True)
    q = np.divide(power, total, out=np.zeros_like(power), where=total > 0)
    logq = np.log(q, out=np.zeros_like(q), where=q > 0)
    h = -(q * logq).sum(axis=-1)
    return np.clip(h / np.log(power.shape[-1]), 0.0, 1.0) if power.shape[-1] > 1 else np.zeros_like(h)


def morphology_stats(t, window: int = 64, k: int = 32) -> MorphologyStats:
    t = np.asarray(t, dtype=float)
    if t.size == 0:
        raise ParameterError("empty signal")
    return MorphologyStats(
        float(t.max() - t.min()),
        float(np.sqrt(np.mean(t * t))),
        float(spectral_entropy(t, window, k)),
    )


def morphology_arrays(t: np.ndarray, window: int = 64, k: int = 32) -> dict[str, np.ndarray]:
    t = np.atleast_2d(np.asarray(t, dtype=float))
    return {
        "p2p": t.max(axis=1) - t.min(axis=1),
        "rms": np.sqrt(np.mean(t * t, axis=1)),
        "entropy": spectral_entropy(t, window, k),
    }


def rms_energy_error(real, gen) -> float:
    """100 * |mean rms(gen) - mean rms(real)| / mean rms(real)."""
    real_t = real.t if hasattr(real, "t") else np.asarray(real)
    gen_t = gen.t if hasattr(gen, "t") else np.asarray(gen)
    if len(real_t) == 0 or len(gen_t) == 0:
        raise ParameterError("rms energy error needs nonempty sets")
    real_rms = float(_fsum_mean(np.sqrt(np.mean(np.atleast_2d(real_t) ** 2, axis=1))))
    gen_rms = float(_fsum_mean(np.sqrt(np.mean(np.atleast_2d(gen_t) ** 2, axis=1))))
    if real_rms == 0:
        raise ParameterError("real mean rms is zero")
    return 100.0 * abs(gen_rms - real_rms) / real_rms


# ----------------------------------------------------------------------------
# normalized scores

@dataclass
class RawMetrics:
    name: str
    sigma2: float
    delta: float
    c_ratio: float
    e_rms: float


def _ratio(num: float, den: float, what: str, strict: bool) -> float:
    if den == 0:
        if strict:
            raise DegenerateBaselineError(f"baseline denominator for {what} is zero")
        return 0.0 if num == 0 else float("nan")
    return num / den


def normalized_scores(rows: Sequence[RawMetrics], sigma2_real: float, strict: bool = True) -> list[dict[str, float]]:
    """r_sigma, rho_delta, gamma, kappa for each row relative to ``rows[0]`` (the baseline).

    With ``strict=False`` a zero denominator yields 0 when the numerator is
    also zero (the model matches the baseline exactly) and NaN otherwise.
    """
    if not rows:
        raise ParameterError("no rows to score")
    base = rows[0]
    out = []
    for r in rows:
        out.append({
            "r_sigma": _ratio(r.sigma2 - sigma2_real, base.sigma2 - sigma2_real, "r_sigma", strict),
            "rho_delta": _ratio(base.delta - r.delta, base.delta, "rho_delta", strict),
            "gamma": _ratio(r.c_ratio, base.c_ratio, "gamma", strict),
            "kappa": _ratio(r.e_rms, base.e_rms, "kappa", strict),
        })
    return out


# ----------------------------------------------------------------------------
# full protocol

@dataclass
class EvalReport:
    name: str
    sigma2: float
    delta: float
    c_ratio: float
    e_rms: float
    r_sigma: float | None = None
    rho_delta: float | None = None
    gamma: float | None = None
    kappa: float | None = None
    cfd: CfdStats | None = None
    morphology: dict[str, np.ndarray] = field(default_factory=dict, repr=False)

    def morphology_summary(self) -> dict[str, dict[str, float]]:
        return {k: {"mean": float(_fsum_mean(v)), "std": float(math.sqrt(_fsum_mean((v - _fsum_mean(v)) ** 2)))}
                for k, v in self.morphology.items()}

    def table_row(self) -> dict[str, float | str | None]:
        return {
            "model": self.name, "sigma2": self.sigma2, "r_sigma": self.r_sigma, "delta": self.delta,
            "rho_delta": self.rho_delta, "c_ratio": self.c_ratio, "gamma": self.gamma,
            "e_rms": self.e_rms, "kappa": self.kappa,
        }

    def joint_rms_p2p(self) -> np.ndarray:
        """(rms, p2p) points sorted lexicographically."""
        pts = np.column_stack([self.morphology["rms"], self.morphology["p2p"]])
        return pts[np.lexsort((pts[:, 1], pts[:, 0]))]


@dataclass
class Evaluation:
    sigma2_real: float
    real_cfd: CfdStats
    real_morphology: dict[str, np.ndarray]
    reports: list[EvalReport]

    def real_joint_rms_p2p(self) -> np.ndarray:
        pts = np.column_stack([self.real_morphology["rms"], self.real_morphology["p2p"]])
        return pts[np.lexsort((pts[:, 1], pts[:, 0]))]


def evaluate(models: ReferenceModels, real: TriModalSet, synth_sets: Mapping[str, TriModalSet],
             spec: BinningSpec | None = None, window: int = 64, k: int = 32, n_bins: int = 8) -> Evaluation:
    """Score every synthetic set against ``real``; the first set is the baseline."""
    if not synth_sets:
        raise ParameterError("no synthetic sets to evaluate")
    for name, data in synth_sets.items():
        if len(data) == 0:
            raise ParameterError(f"synthetic set {name!r} is empty")
    spec = spec or BinningSpec.fit(real, n_bins)
    sigma2_real = embedding_variance(models.embed(real))
    real_cfd = cfd_stats(real, spec)
    reports = []
    for name, data in synth_sets.items():
        cfd = cfd_stats(data, spec)
        c_ratio = cfd.c_tfs / real_cfd.c_tfs if abs(real_cfd.c_tfs) > C_FLOOR else float("nan")
        reports.append(EvalReport(
            name=name,
            sigma2=embedding_variance(models.embed(data)),
            delta=plausibility_gap(models, real, data),
            c_ratio=c_ratio,
            e_rms=rms_energy_error(real, data),
            cfd=cfd,
            morphology=morphology_arrays(data.t, window, k),
        ))
    rows = [RawMetrics(r.name, r.sigma2, r.delta, r.c_ratio, r.e_rms) for r in reports]
    for report, scores in zip(reports, normalized_scores(rows, sigma2_real, strict=False)):
        report.r_sigma, report.rho_delta = scores["r_sigma"], scores["rho_delta"]
        report.gamma, report.kappa = scores["gamma"], scores["kappa"]
    return Evaluation(sigma2_real, real_cfd, morphology_arrays(real.t, window, k), reports)
