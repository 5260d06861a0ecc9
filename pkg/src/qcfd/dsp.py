"""Tri-modal preprocessing: time signal, averaged log spectrum, Morlet scalogram."""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from typing import Sequence

import numpy as np
from scipy import ndimage, signal

from .beats import Label, RawBeat
from .errors import ParameterError


@dataclass(frozen=True)
class DspProfile:
    fs: float = 250.0
    n: int = 256
    window: int = 64
    k: int = 32
    h: int = 16
    w: int = 64
    band: tuple[float, float] = (0.5, 40.0)
    baseline_window: float = 0.4
    w0: float = 6.0
    scale_band: tuple[float, float] = (1.0, 40.0)

    def validate(self) -> None:
        if self.window > self.n or self.window < 2 or self.window % 2:
            raise ParameterError(f"window must be even and <= n, got {self.window}")
        if not 1 <= self.k <= self.window // 2 + 1:
            raise ParameterError(f"k must be in [1, window/2 + 1], got {self.k}")
        if self.h < 2 or self.w < 2 or self.w > self.n:
            raise ParameterError("scalogram needs h, w >= 2 and w <= n")
        lo, hi = self.band
        if not 0 < lo < hi < self.fs / 2:
            raise ParameterError(f"band {self.band} outside (0, fs/2)")

    @property
    def s_shape(self) -> tuple[int, int]:
        return (self.h, self.w)


def desk_profile() -> DspProfile:
    return DspProfile()


def full_profile(k: int = 64, h: int = 32, w: int = 128) -> DspProfile:
    return DspProfile(n=1000, window=256, k=k, h=h, w=w)


# ----------------------------------------------------------------------------
# primitives

def dft(x) -> np.ndarray:
    """X[k] = sum_n x[n] exp(-2 pi i k n / len)."""
    x = np.asarray(x, dtype=complex)
    if x.shape[-1] < 1:
        raise ParameterError("dft needs at least one sample")
    return np.fft.fft(x, axis=-1)


def idft(X) -> np.ndarray:
    return np.fft.ifft(np.asarray(X, dtype=complex), axis=-1)


def hann(length: int) -> np.ndarray:
    """Periodic Hann window; 50%-overlapped copies sum exactly to one."""
    n = np.arange(length)
    return 0.5 - 0.5 * np.cos(2 * np.pi * n / length)


def frame_starts(n: int, window: int) -> np.ndarray:
    hop = window // 2
    return np.arange(0, n - window + 1, hop)


def stft(x: np.ndarray, window: int, taper: np.ndarray | None = None) -> np.ndarray:
    """Complex spectra of 50%-overlapping frames, shape ``(..., frames, window)``."""
    x = np.asarray(x, dtype=float)
    if taper is None:
        taper = hann(window)
    starts = frame_starts(x.shape[-1], window)
    idx = starts[:, None] + np.arange(window)[None, :]
    return dft(x[..., idx] * taper)


def bandpass_filter(x, fs: float, lo: float, hi: float, order: int = 4) -> np.ndarray:
    """Zero-phase Butterworth bandpass (forward-backward)."""
    if not 0 < lo < hi < fs / 2:
        raise ParameterError(f"band ({lo}, {hi}) must satisfy 0 < lo < hi < fs/2 = {fs / 2}")
    x = np.asarray(x, dtype=float)
    sos = signal.butter(order, [lo, hi], btype="bandpass", fs=fs, output="sos")
    padlen = min(3 * (2 * len(sos) + 1), x.shape[-1] - 1)
    return signal.sosfiltfilt(sos, x, axis=-1, padlen=padlen)


# ----------------------------------------------------------------------------
# modalities

def preprocess_time(beat: RawBeat | np.ndarray, n: int = 256, profile: DspProfile | None = None) -> np.ndarray:
    """Bandpass, subtract moving-median baseline, peak-normalize, pad/truncate to ``n``."""
    profile = profile or desk_profile()
    x = beat.samples if isinstance(beat, RawBeat) else np.asarray(beat, dtype=float)
    return _preprocess_time_rows(np.atleast_2d(x), n, profile)[0]


def _preprocess_time_rows(x: np.ndarray, n: int, profile: DspProfile) -> np.ndarray:
    if x.shape[-1] < 1:
        raise ParameterError("empty beat")
    y = bandpass_filter(x, profile.fs, *profile.band)
    win = int(round(profile.baseline_window * profile.fs)) | 1
    y = y - ndimage.median_filter(y, size=(1, win), mode="reflect")
    peak = np.max(np.abs(y), axis=-1, keepdims=True)
    y = np.divide(y, peak, out=np.zeros_like(y), where=peak > 0)
    out = np.zeros((y.shape[0], n))
    m = min(n, y.shape[-1])
    out[:, :m] = y[:, :m]
    return out


def stft_logmag(t, window: int = 64, k: int = 32) -> np.ndarray:
    """Frame-averaged log(1 + |STFT|), first ``k`` bins."""
    t = np.asarray(t, dtype=float)
    if window > t.shape[-1]:
        raise ParameterError(f"window {window} longer than signal {t.shape[-1]}")
    if not 1 <= k <= window // 2 + 1:
        raise ParameterError(f"k must be in [1, {window // 2 + 1}], got {k}")
    spec = np.abs(stft(t, window)[..., : window // 2 + 1])
    return np.log1p(spec).mean(axis=-2)[..., :k]


def power_spectrum(t, window: int = 64, k: int = 32) -> np.ndarray:
    """Frame-averaged power with a rectangular taper, first ``k`` bins.

    A rectangular taper keeps a constant signal entirely in bin 0.
    """
    t = np.asarray(t, dtype=float)
    window = min(window, t.shape[-1]) // 2 * 2 or 2
    spec = stft(t, window, taper=np.ones(window))[..., : window // 2 + 1]
    return (np.abs(spec) ** 2).mean(axis=-2)[..., :k]


def morlet(u: np.ndarray, w0: float = 6.0) -> np.ndarray:
    return np.pi ** -0.25 * np.exp(1j * w0 * u) * np.exp(-(u**2) / 2)


def scale_frequencies(fs: float, h: int, band=(1.0, 40.0), w0: float = 6.0) -> tuple[np.ndarray, np.ndarray]:
    """Scales (ascending) and their pseudo-frequencies (descending)."""
    freqs = np.geomspace(band[1], band[0], h)
    scales = w0 * fs / (2 * np.pi * freqs)
    return scales, freqs


def scalogram_columns(n: int, w: int) -> np.ndarray:
    return np.round(np.linspace(0, n - 1, w)).astype(int)


@lru_cache(maxsize=16)
def _cwt_kernel(n: int, fs: float, h: int, w: int, band: tuple[float, float], w0: float) -> np.ndarray:
    scales, _ = scale_frequencies(fs, h, band, w0)
    cols = scalogram_columns(n, w)
    k = np.arange(n)
    u = (k[:, None, None] - cols[None, None, :]) / scales[None, :, None]
    kern = np.conj(morlet(u, w0)) / scales[None, :, None]
    kern = kern.reshape(n, h * w)
    kern.setflags(write=False)
    return kern


@dataclass
class Scalogram:
    grid: np.ndarray
    scales: np.ndarray
    frequencies: np.ndarray
    columns: np.ndarray


def cwt_magnitude(t, h: int, w: int, fs: float = 250.0, band=(1.0, 40.0), w0: float = 6.0) -> np.ndarray:
    """|CWT| by direct convolution, rows = scales, columns subsampled to ``w``.

    Coefficients use 1/scale normalization so a sinusoid peaks at the row whose
    pseudo-frequency matches it.
    """
    t = np.asarray(t, dtype=float)
    n = t.shape[-1]
    if h < 2 or w < 2 or w > n:
        raise ParameterError(f"need h, w >= 2 and w <= {n}")
    kern = _cwt_kernel(n, float(fs), h, w, tuple(band), float(w0))
    return np.abs(t @ kern).reshape(t.shape[:-1] + (h, w))


def minmax(grid: np.ndarray) -> np.ndarray:
    axes = (-2, -1)
    lo = grid.min(axis=axes, keepdims=True)
    span = grid.max(axis=axes, keepdims=True) - lo
    return np.divide(grid - lo, span, out=np.zeros_like(grid), where=span > 0)


def morlet_scalogram(t, h: int = 16, w: int = 64, fs: float = 250.0, band=(1.0, 40.0), w0: float = 6.0) -> Scalogram:
    grid = minmax(cwt_magnitude(t, h, w, fs, band, w0))
    scales, freqs = scale_frequencies(fs, h, band, w0)
    return Scalogram(grid, scales, freqs, scalogram_columns(np.shape(t)[-1], w))


# ----------------------------------------------------------------------------
# aligned samples

@dataclass
class TriModalSample:
    t: np.ndarray
    f: np.ndarray
    s: np.ndarray
    label: Label
    qrs_window: tuple[int, int] | None = None
    st_window: tuple[int, int] | None = None


@dataclass
class TriModalSet:
    """Stacked tri-modal samples.

    Windows are stored as ``(n, 2)`` integer arrays, ``-1`` where absent.
    """

    t: np.ndarray
    f: np.ndarray
    s: np.ndarray
    labels: np.ndarray
    qrs: np.ndarray = field(default=None)
    st: np.ndarray = field(default=None)

    def __post_init__(self):
        n = len(self.labels)
        if self.qrs is None:
            self.qrs = np.full((n, 2), -1, dtype=int)
        if self.st is None:
            self.st = np.full((n, 2), -1, dtype=int)
        self.labels = np.asarray(self.labels, dtype=int)
        if not (len(self.t) == len(self.f) == len(self.s) == n):
            raise ParameterError("modalities and labels disagree in length")

    def __len__(self) -> int:
        return len(self.labels)

    def __getitem__(self, i: int) -> TriModalSample:
        qrs = tuple(int(v) for v in self.qrs[i]) if self.qrs[i, 0] >= 0 else None
        st = tuple(int(v) for v in self.st[i]) if self.st[i, 0] >= 0 else None
        return TriModalSample(self.t[i], self.f[i], self.s[i], Label(int(self.labels[i])), qrs, st)

    def subset(self, idx) -> "TriModalSet":
        idx = np.asarray(idx)
        return TriModalSet(self.t[idx], self.f[idx], self.s[idx], self.labels[idx], self.qrs[idx], self.st[idx])

    def of_class(self, label: int) -> "TriModalSet":
        return self.subset(np.flatnonzero(self.labels == label))

    @property
    def classes(self) -> list[int]:
        return sorted(set(int(v) for v in self.labels))

    def flat(self) -> np.ndarray:
        """Critic input layout: T, F, then S flattened row-major."""
        n = len(self)
        return np.concatenate([self.t, self.f, self.s.reshape(n, -1)], axis=1)

    @classmethod
    def from_samples(cls, samples: Sequence[TriModalSample]) -> "TriModalSet":
        qrs = np.array([s.qrs_window if s.qrs_window else (-1, -1) for s in samples], dtype=int).reshape(-1, 2)
        st = np.array([s.st_window if s.st_window else (-1, -1) for s in samples], dtype=int).reshape(-1, 2)
        return cls(
            np.stack([s.t for s in samples]),
            np.stack([s.f for s in samples]),
            np.stack([s.s for s in samples]),
            np.array([int(s.label) for s in samples]),
            qrs,
            st,
        )

    @staticmethod
    def concat(sets: Sequence["TriModalSet"]) -> "TriModalSet":
        return TriModalSet(
            *(np.concatenate([getattr(s, name) for s in sets]) for name in ("t", "f", "s", "labels", "qrs", "st"))
        )


def preprocess(beats: Sequence[RawBeat], profile: DspProfile | None = None) -> TriModalSet:
    """Vectorized ``to_trimodal`` over a list of beats.

    Beats of unequal length are processed in groups of equal length so zero
    padding never leaks into filtering.
    """
    profile = profile or desk_profile()
    profile.validate()
    if not beats:
        raise ParameterError("no beats to preprocess")
    t = np.zeros((len(beats), profile.n))
    lengths = np.array([len(b) for b in beats])
    for length in np.unique(lengths):
        idx = np.flatnonzero(lengths == length)
        raw = np.stack([beats[i].samples for i in idx])
        t[idx] = _preprocess_time_rows(raw, profile.n, profile)
    f = stft_logmag(t, profile.window, profile.k)
    s = minmax(cwt_magnitude(t, profile.h, profile.w, profile.fs, profile.scale_band, profile.w0))
    labels = np.array([int(b.label) for b in beats])
    qrs = np.array([b.qrs_window if b.qrs_window else (-1, -1) for b in beats], dtype=int)
    st = np.array([b.st_window if b.st_window else (-1, -1) for b in beats], dtype=int)
    return TriModalSet(t, f, s, labels, qrs, st)


def to_trimodal(beat: RawBeat, profile: DspProfile | None = None) -> TriModalSample:
    return preprocess([beat], profile)[0]
