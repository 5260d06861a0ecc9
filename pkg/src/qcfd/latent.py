"""Complex latent states, Hermitian interference operators and cross-branch mixing.

A latent vector z of length d = 3m is split into three blocks of m entries,
one per modality (time, frequency, scalogram). The modality amplitude of a
block is its Euclidean norm times the phase of the block's component sum,
which keeps sum |alpha|^2 = 1 whenever z is unit-norm.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import OperatorError, ParameterError, ShapeError

HERMITIAN_TOL = 1e-12


@dataclass(frozen=True)
class LatentState:
    z: np.ndarray  # complex, unit norm

    @property
    def amplitudes(self) -> np.ndarray:
        return block_amplitudes(self.z)


def block_amplitudes(z: np.ndarray) -> np.ndarray:
    """(..., 3m) complex -> (..., 3) complex amplitudes."""
    z = np.asarray(z, dtype=complex)
    d = z.shape[-1]
    if d % 3 or d == 0:
        raise ParameterError(f"latent length must be a positive multiple of 3, got {d}")
    blocks = z.reshape(z.shape[:-1] + (3, d // 3))
    r = np.sqrt(np.sum(np.abs(blocks) ** 2, axis=-1))
    total = blocks.sum(axis=-1)
    mag = np.abs(total)
    phase = np.divide(total, mag, out=np.ones_like(total), where=mag > 0)
    return r * phase


def normalize_latent(z_r, z_i) -> LatentState:
    z = np.asarray(z_r, dtype=float) + 1j * np.asarray(z_i, dtype=float)
    if z.shape[-1] % 3 or z.shape[-1] == 0:
        raise ParameterError(f"latent length must be a positive multiple of 3, got {z.shape[-1]}")
    norm = np.sqrt(np.sum(np.abs(z) ** 2, axis=-1, keepdims=True))
    if np.any(norm == 0):
        raise ParameterError("cannot normalize a zero latent vector")
    return LatentState(z / norm)


def sample_latent(d: int, seed: int | np.random.Generator) -> LatentState:
    """z_r, z_i ~ N(0, I), then l2-normalized."""
    if d < 3 or d % 3:
        raise ParameterError(f"d must be 3m with m >= 1, got {d}")
    rng = np.random.default_rng(seed)
    return normalize_latent(rng.standard_normal(d), rng.standard_normal(d))


def sample_latents(n: int, d: int, rng: np.random.Generator) -> np.ndarray:
    """Batch of ``n`` unit-norm complex latents, shape ``(n, d)``."""
    if d < 3 or d % 3:
        raise ParameterError(f"d must be 3m with m >= 1, got {d}")
    z = rng.standard_normal((n, d)) + 1j * rng.standard_normal((n, d))
    return z / np.linalg.norm(z, axis=1, keepdims=True)


@dataclass(frozen=True)
class InterferenceOperator:
    w: np.ndarray  # 3x3 complex

    def __post_init__(self):
        w = np.asarray(self.w, dtype=complex)
        if w.shape != (3, 3):
            raise OperatorError(f"operator must be 3x3, got {w.shape}")
        object.__setattr__(self, "w", w)

    def check(self) -> None:
        if np.max(np.abs(np.diag(self.w))) > HERMITIAN_TOL:
            raise OperatorError("operator diagonal must be zero")
        if np.max(np.abs(self.w - self.w.conj().T)) > HERMITIAN_TOL:
            raise OperatorError("operator is not Hermitian")

    @classmethod
    def from_couplings(cls, w_tf: complex = 0.3, w_fs: complex = 0.3, w_st: complex = 0.3) -> "InterferenceOperator":
        """Hermitian completion from the three upper couplings (T<-F, F<-S, S<-T)."""
        w = np.zeros((3, 3), dtype=complex)
        w[0, 1], w[1, 2], w[2, 0] = w_tf, w_fs, w_st
        w[1, 0], w[2, 1], w[0, 2] = np.conj(w_tf), np.conj(w_fs), np.conj(w_st)
        return cls(w)

    @classmethod
    def zeros(cls) -> "InterferenceOperator":
        return cls(np.zeros((3, 3), dtype=complex))

    def to_list(self) -> list[float]:
        """Row-major, real/imag interleaved (18 floats)."""
        return [float(v) for c in self.w.ravel() for v in (c.real, c.imag)]

    @classmethod
    def from_list(cls, values) -> "InterferenceOperator":
        values = np.asarray(values, dtype=float)
        if values.shape != (18,):
            raise OperatorError(f"expected 18 floats, got {values.shape}")
        op = cls((values[0::2] + 1j * values[1::2]).reshape(3, 3))
        op.check()
        return op


def _quadratic(alpha: np.ndarray, w: np.ndarray) -> np.ndarray:
    return np.einsum("...i,ij,...j->...", alpha.conj(), w, alpha)


def interference_energy(state, op: InterferenceOperator, return_residue: bool = False):
    """<psi|H|psi> on the normalized modality amplitudes.

    ``state`` may be a LatentState, a length-3 amplitude vector, or a batch of
    either as arrays. The imaginary residue is discarded.
    """
    op.check()
    if isinstance(state, LatentState):
        alpha = state.amplitudes
    else:
        alpha = np.asarray(state, dtype=complex)
        if alpha.shape[-1] != 3:
            alpha = block_amplitudes(alpha)
    norm = np.sqrt(np.sum(np.abs(alpha) ** 2, axis=-1, keepdims=True))
    alpha = np.divide(alpha, norm, out=np.zeros_like(alpha), where=norm > 0)
    e = _quadratic(alpha, op.w)
    if return_residue:
        return e.real, e.imag
    return e.real


def interference_loss(real_states, gen_states, op: InterferenceOperator) -> float:
    """|mean energy(real) - mean energy(gen)|."""
    real_e = np.atleast_1d(_batch_energy(real_states, op))
    gen_e = np.atleast_1d(_batch_energy(gen_states, op))
    if real_e.size == 0 or gen_e.size == 0:
        raise ParameterError("interference loss needs nonempty batches")
    return float(abs(real_e.mean() - gen_e.mean()))


def _batch_energy(states, op):
    if isinstance(states, LatentState):
        return interference_energy(states, op)
    if isinstance(states, (list, tuple)):
        if not states:
            return np.zeros(0)
        return np.array([interference_energy(s, op) for s in states])
    return interference_energy(np.asarray(states), op)


def cross_branch_mix(h_t, h_f, h_s, op: InterferenceOperator):
    """h_i + sum_{j != i} Re(w_ij) h_j for real activation vectors (or batches)."""
    hs = [np.asarray(h, dtype=float) for h in (h_t, h_f, h_s)]
    if not (hs[0].shape == hs[1].shape == hs[2].shape):
        raise ShapeError(f"branch shapes differ: {[h.shape for h in hs]}")
    coupling = op.w.real
    return tuple(
        hs[i] + sum(coupling[i, j] * hs[j] for j in range(3) if j != i) for i in range(3)
    )


class ProjectionEncoder:
    """Fixed random projection from tri-modal data to complex latent blocks.

    Block X of the latent is ``(P_re x + i P_im x)`` where ``x`` is modality X
    flattened; projections are Gaussian scaled by 1/sqrt(dim).
    """

    def __init__(self, dims: tuple[int, int, int], m: int = 8, seed: int = 0):
        rng = np.random.default_rng(seed)
        self.m = m
        self.dims = tuple(int(d) for d in dims)
        self.real = [rng.standard_normal((d, m)) / np.sqrt(d) for d in self.dims]
        self.imag = [rng.standard_normal((d, m)) / np.sqrt(d) for d in self.dims]

    def encode(self, t, f, s) -> np.ndarray:
        blocks = []
        for x, pr, pi in zip((t, f, s), self.real, self.imag):
            x = np.asarray(x, dtype=float).reshape(len(x), -1)
            blocks.append(x @ pr + 1j * (x @ pi))
        z = np.concatenate(blocks, axis=1)
        norm = np.linalg.norm(z, axis=1, keepdims=True)
        return np.divide(z, norm, out=np.zeros_like(z), where=norm > 0)
