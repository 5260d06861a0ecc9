"""Parametric sum-of-Gaussians ECG beat simulator.

Each beat is the sum of five Gaussian lobes (P, Q, R, S, T) plus an optional
rectangular baseline shift over the ST segment. Because the waveform is closed
form, fiducial windows are known exactly, which downstream morphology losses
rely on.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from enum import IntEnum

import numpy as np

from .errors import DegenerateMorphologyError, ParameterError

WAVES = ("P", "Q", "R", "S", "T")


class Label(IntEnum):
    NORMAL = 0
    ST_SHIFT = 1


@dataclass(frozen=True)
class BeatParams:
    """Morphology of a single beat.

    Amplitudes are dimensionless (R wave ~ 1), centers and widths are in
    seconds, ordered as in ``WAVES``.
    """

    amplitudes: tuple[float, ...] = (0.12, -0.12, 1.0, -0.20, 0.30)
    centers: tuple[float, ...] = (0.20, 0.355, 0.38, 0.405, 0.65)
    widths: tuple[float, ...] = (0.025, 0.010, 0.012, 0.010, 0.040)
    st_offset: float = 0.0
    fs: float = 250.0
    duration: float = 1.024
    noise_std: float = 0.0

    @property
    def n_samples(self) -> int:
        return int(round(self.fs * self.duration))

    def validate(self) -> None:
        for name in ("amplitudes", "centers", "widths"):
            values = getattr(self, name)
            if len(values) != len(WAVES):
                raise ParameterError(f"{name} needs {len(WAVES)} entries, got {len(values)}")
            if not np.all(np.isfinite(values)):
                raise ParameterError(f"{name} must be finite")
        if min(self.widths) <= 0:
            raise ParameterError("wave widths must be positive")
        if self.fs <= 0 or self.duration <= 0:
            raise ParameterError("fs and duration must be positive")
        n = self.fs * self.duration
        if abs(n - round(n)) > 1e-9 or round(n) < 1:
            raise ParameterError(f"fs*duration must be a positive integer, got {n}")
        c = self.centers
        if not (0 <= c[0] and all(a < b for a, b in zip(c, c[1:])) and c[-1] < self.duration):
            raise ParameterError(f"wave centers must satisfy 0 <= P < Q < R < S < T < duration: {c}")
        if self.noise_std < 0 or not np.isfinite(self.st_offset):
            raise ParameterError("noise_std must be >= 0 and st_offset finite")

    def wave(self, name: str) -> tuple[float, float, float]:
        i = WAVES.index(name)
        return self.amplitudes[i], self.centers[i], self.widths[i]


@dataclass(frozen=True)
class BeatClass:
    """Class prototype plus per-beat jitter scales.

    ``amplitude_jitter`` is relative (fraction of each amplitude),
    ``center_jitter`` and ``width_jitter`` are absolute standard deviations in
    seconds and relative fractions respectively.
    """

    label: Label
    prototype: BeatParams
    amplitude_jitter: float = 0.1
    center_jitter: float = 0.004
    width_jitter: float = 0.05


@dataclass
class RawBeat:
    samples: np.ndarray
    label: Label
    qrs_window: tuple[int, int] | None = None
    st_window: tuple[int, int] | None = None
    fs: float = 250.0

    def __len__(self) -> int:
        return len(self.samples)


@dataclass(frozen=True)
class SimProfile:
    """Dataset-level simulator settings (two classes differing only in ST offset)."""

    base: BeatParams = field(default_factory=lambda: BeatParams(noise_std=0.02))
    st_offset: float = 0.15
    amplitude_jitter: float = 0.1
    center_jitter: float = 0.004
    width_jitter: float = 0.05

    def classes(self) -> tuple[BeatClass, BeatClass]:
        jitter = dict(
            amplitude_jitter=self.amplitude_jitter,
            center_jitter=self.center_jitter,
            width_jitter=self.width_jitter,
        )
        normal = dataclasses.replace(self.base, st_offset=0.0)
        shifted = dataclasses.replace(self.base, st_offset=self.st_offset)
        return (BeatClass(Label.NORMAL, normal, **jitter), BeatClass(Label.ST_SHIFT, shifted, **jitter))


def fiducial_windows(params: BeatParams) -> tuple[tuple[int, int], tuple[int, int]]:
    """Half-open sample ranges ``(qrs_window, st_window)``.

    The QRS window spans Q - 2 widths to S + 2 widths; the ST window runs from
    the end of QRS to T - 2 widths.
    """
    params.validate()
    fs = params.fs
    _, mu_q, b_q = params.wave("Q")
    _, mu_s, b_s = params.wave("S")
    _, mu_t, b_t = params.wave("T")
    qrs = (int(round((mu_q - 2 * b_q) * fs)), int(round((mu_s + 2 * b_s) * fs)))
    st = (qrs[1], int(round((mu_t - 2 * b_t) * fs)))
    n = params.n_samples
    if qrs[0] < 0 or qrs[0] >= qrs[1] or st[0] >= st[1] or st[1] > n:
        raise DegenerateMorphologyError(f"degenerate fiducial windows qrs={qrs} st={st} for n={n}")
    return qrs, st


def clean_waveform(params: BeatParams, t: np.ndarray) -> np.ndarray:
    """Noise-free Gaussian sum evaluated at times ``t`` (no ST shift)."""
    out = np.zeros_like(t, dtype=float)
    for a, mu, b in zip(params.amplitudes, params.centers, params.widths):
        out += a * np.exp(-((t - mu) ** 2) / (2 * b * b))
    return out


def synthesize_beat(params: BeatParams, jitter_seed: int) -> RawBeat:
    params.validate()
    qrs, st = fiducial_windows(params)
    n = params.n_samples
    t = np.arange(n) / params.fs
    samples = clean_waveform(params, t)
    samples[st[0]:st[1]] += params.st_offset
    if params.noise_std > 0:
        rng = np.random.default_rng(jitter_seed)
        samples += params.noise_std * rng.standard_normal(n)
    label = Label.ST_SHIFT if params.st_offset != 0 else Label.NORMAL
    return RawBeat(samples, label, qrs, st, params.fs)


def jitter_params(cls: BeatClass, rng: np.random.Generator) -> BeatParams:
    p = cls.prototype
    n = len(WAVES)
    amps = np.asarray(p.amplitudes) * (1 + cls.amplitude_jitter * rng.standard_normal(n))
    centers = np.asarray(p.centers) + cls.center_jitter * rng.standard_normal(n)
    widths = np.asarray(p.widths) * np.exp(cls.width_jitter * rng.standard_normal(n))
    return dataclasses.replace(
        p,
        amplitudes=tuple(float(a) for a in amps),
        centers=tuple(float(c) for c in centers),
        widths=tuple(float(w) for w in widths),
    )


def make_dataset(n_per_class: int, profile: SimProfile | None = None, seed: int = 0) -> list[RawBeat]:
    """Class-balanced list of ``2 * n_per_class`` jittered beats, labels interleaved."""
    if n_per_class < 1:
        raise ParameterError("n_per_class must be >= 1")
    profile = profile or SimProfile()
    rng = np.random.default_rng(seed)
    classes = profile.classes()
    beats = []
    for _ in range(n_per_class):
        for cls in classes:
            params = jitter_params(cls, rng)
            beat = synthesize_beat(params, int(rng.integers(2**63)))
            beat.label = cls.label
            beats.append(beat)
    return beats
