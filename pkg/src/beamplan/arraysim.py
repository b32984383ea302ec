"""Half-wavelength ULA algebra: steering vectors, channels, SNR and codebooks.

Vectors and channel matrices are plain numpy arrays. A steering vector is a
complex array of shape ``(n,)``; a channel is ``(n_ue, n_bs)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import InvalidArgumentError

NEG_INF_DB = float("-inf")

# |w^H H f| below this fraction of its Cauchy-Schwarz bound counts as zero.
_ZERO_GAIN_RTOL = 1e-12


@dataclass(frozen=True)
class PathComponent:
    """One propagation path: complex small-scale gain plus azimuth angles."""

    gain: complex
    aod_rad: float
    aoa_rad: float

    def __post_init__(self):
        for name in ("aod_rad", "aoa_rad"):
            angle = getattr(self, name)
            if not math.isfinite(angle) or not -math.pi / 2 <= angle <= math.pi / 2:
                raise InvalidArgumentError(f"{name}={angle!r} outside [-pi/2, pi/2]")


@dataclass(frozen=True, eq=False)
class Codebook:
    """Beam codebook; ``beams[:, k]`` steers towards ``angles[k]``."""

    angles: np.ndarray
    beams: np.ndarray

    @property
    def size(self) -> int:
        return self.beams.shape[1]

    @property
    def n_elements(self) -> int:
        return self.beams.shape[0]

    @property
    def sines(self) -> np.ndarray:
        return np.sin(self.angles)

    def beam(self, k: int) -> np.ndarray:
        return self.beams[:, k]


def _check_count(n, what="n"):
    if isinstance(n, bool) or int(n) != n or n < 1:
        raise InvalidArgumentError(f"{what} must be a positive integer, got {n!r}")
    return int(n)


def array_response(angle_rad: float, n: int) -> np.ndarray:
    """Unit-norm ULA response ``(1/sqrt(n)) * exp(j*pi*m*sin(angle))``, m = 0..n-1."""
    n = _check_count(n)
    if not math.isfinite(angle_rad):
        raise InvalidArgumentError(f"angle must be finite, got {angle_rad!r}")
    m = np.arange(n)
    return np.exp(1j * np.pi * m * math.sin(angle_rad)) / math.sqrt(n)


def array_responses(angles_rad, n: int) -> np.ndarray:
    """Stacked responses, one column per angle; shape ``(n, len(angles))``."""
    angles = np.asarray(angles_rad, dtype=float)
    m = np.arange(n)[:, None]
    return np.exp(1j * np.pi * m * np.sin(angles)[None, :]) / math.sqrt(n)


def make_channel(paths: Sequence[PathComponent], n_bs: int, n_ue: int) -> np.ndarray:
    """Narrowband geometric channel ``sqrt(n_bs*n_ue/L) * sum_l h_l a_ue a_bs^H``."""
    n_bs = _check_count(n_bs, "n_bs")
    n_ue = _check_count(n_ue, "n_ue")
    if len(paths) == 0:
        raise InvalidArgumentError("at least one path is required; use zero_channel()")
    h = np.zeros((n_ue, n_bs), dtype=complex)
    for p in paths:
        h += p.gain * np.outer(array_response(p.aoa_rad, n_ue), array_response(p.aod_rad, n_bs).conj())
    return math.sqrt(n_bs * n_ue / len(paths)) * h


def zero_channel(n_bs: int, n_ue: int) -> np.ndarray:
    """Channel of a fully blocked link."""
    return np.zeros((_check_count(n_ue, "n_ue"), _check_count(n_bs, "n_bs")), dtype=complex)


def dbm_to_mw(dbm: float) -> float:
    return 10.0 ** (dbm / 10.0)


def snr_db(h: np.ndarray, f: np.ndarray, w: np.ndarray, p_dbm: float, noise_dbm: float) -> float:
    """``10*log10(p*|w^H H f|^2 / sigma^2)``; returns ``-inf`` for a null gain."""
    h = np.asarray(h)
    if h.ndim != 2 or f.shape != (h.shape[1],) or w.shape != (h.shape[0],):
        raise InvalidArgumentError(
            f"dimension mismatch: H{h.shape}, f{f.shape}, w{w.shape}"
        )
    g = np.vdot(w, h @ f)
    bound = np.linalg.norm(h) * np.linalg.norm(f) * np.linalg.norm(w)
    if abs(g) <= _ZERO_GAIN_RTOL * bound or bound == 0.0:
        return NEG_INF_DB
    linear = dbm_to_mw(p_dbm) * abs(g) ** 2 / dbm_to_mw(noise_dbm)
    return 10.0 * math.log10(linear)


def dft_codebook(n: int, size: int) -> Codebook:
    """Beams uniform in sin: ``sin(phi_k) = 2k/size - 1 + 1/size``."""
    n = _check_count(n)
    size = _check_count(size, "size")
    k = np.arange(size)
    angles = np.arcsin(2.0 * k / size - 1.0 + 1.0 / size)
    return Codebook(angles=angles, beams=array_responses(angles, n))


def beam_gains(h: np.ndarray, f_book: Codebook, w_book: Codebook) -> np.ndarray:
    """``|w_j^H H f_i|^2`` for every pair, indexed ``[f_index, w_index]``."""
    g = w_book.beams.conj().T @ h @ f_book.beams
    return np.abs(g.T) ** 2


def best_pair_exhaustive(
    h: np.ndarray,
    f_book: Codebook,
    w_book: Codebook,
    p_dbm: float = 10.0,
    noise_dbm: float = -94.0,
) -> tuple[int, int, float, int]:
    """Exhaustive sweep over all beam pairs.

    Returns:
        ``(f_index, w_index, snr_db, evaluations)``. Ties go to the smallest
        ``(f_index, w_index)`` in lexicographic order.
    """
    if f_book.size == 0 or w_book.size == 0:
        raise InvalidArgumentError("codebooks must be non-empty")
    gains = beam_gains(h, f_book, w_book)
    # argmax over a C-ordered [f, w] array returns the lexicographically first maximum
    flat = int(np.argmax(gains))
    fi, wi = divmod(flat, w_book.size)
    snr = snr_db(h, f_book.beam(fi), w_book.beam(wi), p_dbm, noise_dbm)
    return fi, wi, snr, f_book.size * w_book.size
