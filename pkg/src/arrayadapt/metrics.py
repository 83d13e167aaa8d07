"""Separation performance measures.

Two families: a blind measure (spectrum-weighted magnitude-squared
coherence of the two separated outputs, estimated from streaming Welch
spectra with recursive averaging) and an oracle measure (signal to
interference ratio from the per-source output components).
"""

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.signal import get_window

from .errors import ConfigError, DataError, UndefinedMeasureError

_ZERO_BIN_REL = 1e-12  # bins below this fraction of the peak power product are skipped


@dataclass(frozen=True)
class WelchConfig:
    window_length: int = 4096
    overlap_fraction: float = 0.5
    window_type: str = "hann"
    averaging_constant: float = 0.3

    def __post_init__(self):
        if self.window_length < 2:
            raise ConfigError(f"window_length must be >= 2, got {self.window_length}")
        if not (0.0 <= self.overlap_fraction < 1.0):
            raise ConfigError(f"overlap_fraction must be in [0, 1), got {self.overlap_fraction}")
        if not (0.0 < self.averaging_constant <= 1.0):
            raise ConfigError(f"averaging_constant must be in (0, 1], got {self.averaging_constant}")
        hop = self.window_length * (1.0 - self.overlap_fraction)
        if abs(hop - round(hop)) > 1e-9 or round(hop) < 1:
            raise ConfigError("overlap_fraction must give an integer hop size")

    @property
    def hop(self):
        return int(round(self.window_length * (1.0 - self.overlap_fraction)))

    @property
    def num_bins(self):
        return self.window_length // 2 + 1


@dataclass
class CoherenceEstimator:
    """Running auto/cross spectra of a two-channel output pair."""

    s11: np.ndarray
    s22: np.ndarray
    s12: np.ndarray
    segments_seen: int = 0

    @classmethod
    def create(cls, cfg):
        n = cfg.num_bins
        return cls(s11=np.zeros(n), s22=np.zeros(n), s12=np.zeros(n, dtype=complex))

    @property
    def num_bins(self):
        return len(self.s11)


def update_psd(est, y1, y2, cfg):
    """Fold one block of output samples into the running Welch spectra.

    Periodograms of the overlapped, tapered segments inside the block are
    averaged, then blended into the running spectra with the recursive
    averaging constant. The first update sets the spectra directly.
    """
    y1 = np.asarray(y1, dtype=float)
    y2 = np.asarray(y2, dtype=float)
    if y1.shape != y2.shape or y1.ndim != 1:
        raise DataError("update_psd expects two equal-length 1-D channels")
    if len(y1) < cfg.window_length:
        raise DataError(f"block of {len(y1)} samples is shorter than the {cfg.window_length}-sample window")
    if not (np.all(np.isfinite(y1)) and np.all(np.isfinite(y2))):
        raise DataError("non-finite samples in coherence update")

    win = get_window(cfg.window_type, cfg.window_length)
    scale = 1.0 / np.sum(win**2)
    hop = cfg.hop
    n_seg = 1 + (len(y1) - cfg.window_length) // hop

    p11 = np.zeros(cfg.num_bins)
    p22 = np.zeros(cfg.num_bins)
    p12 = np.zeros(cfg.num_bins, dtype=complex)
    for k in range(n_seg):
        seg = slice(k * hop, k * hop + cfg.window_length)
        x1 = np.fft.rfft(win * y1[seg])
        x2 = np.fft.rfft(win * y2[seg])
        p11 += (x1.real**2 + x1.imag**2)
        p22 += (x2.real**2 + x2.imag**2)
        p12 += x1 * np.conj(x2)
    p11 *= scale / n_seg
    p22 *= scale / n_seg
    p12 *= scale / n_seg

    if est.segments_seen == 0:
        est.s11, est.s22, est.s12 = p11, p22, p12
    else:
        a = cfg.averaging_constant
        est.s11 = (1.0 - a) * est.s11 + a * p11
        est.s22 = (1.0 - a) * est.s22 + a * p22
        est.s12 = (1.0 - a) * est.s12 + a * p12
    est.segments_seen += n_seg
    return est


def weighting(est):
    """Per-bin weights: arithmetic mean of the two auto spectra."""
    if est.segments_seen == 0:
        raise UndefinedMeasureError("no spectra accumulated yet")
    return 0.5 * (est.s11 + est.s22)


def weighted_msc(est):
    """Spectrum-weighted average of the per-bin magnitude-squared coherence.

    Bins whose power product is negligible relative to the strongest bin
    are excluded from numerator and normalizer alike.
    """
    w = weighting(est)
    prod = est.s11 * est.s22
    peak = prod.max()
    if peak <= 0:
        raise UndefinedMeasureError("all-zero spectra")
    active = prod >= _ZERO_BIN_REL * peak
    wsum = w[active].sum()
    if wsum <= 0:
        raise UndefinedMeasureError("zero total weight")
    coh = np.clip((est.s12[active].real**2 + est.s12[active].imag**2) / prod[active], 0.0, 1.0)
    return float(np.sum(w[active] * coh) / wsum)


def estimator_to_csv(est, path):
    """Dump the estimator state for debugging / plotting the weighting shape."""
    rows = np.column_stack([np.arange(est.num_bins), est.s11, est.s22, est.s12.real, est.s12.imag])
    np.savetxt(path, rows, delimiter=",", header="bin,s11,s22,re_s12,im_s12", comments="", fmt="%.10g")


@dataclass(frozen=True)
class SirReport:
    sir_per_output: tuple  # dB per output channel
    sir_mean: float  # dB

    def __post_init__(self):
        if len(self.sir_per_output) != 2:
            raise DataError("SirReport expects exactly two output channels")


def _component_array(components):
    c = np.asarray(components, dtype=float)
    if c.ndim != 3 or c.shape[0] != 2 or c.shape[1] != 2:
        raise DataError(f"components must have shape (2 outputs, 2 sources, n), got {c.shape}")
    if not np.all(np.isfinite(c)):
        raise DataError("non-finite component samples")
    return c


def sir(components, desired_assignment):
    """Signal-to-interference ratio per output and their arithmetic mean.

    components[o, s] is the contribution of source s at output o;
    desired_assignment[o] names the source counted as desired at output o.
    """
    c = _component_array(components)
    per_output = []
    for o in (0, 1):
        d = desired_assignment[o]
        e_des = float(np.sum(c[o, d] ** 2))
        e_int = float(np.sum(c[o, 1 - d] ** 2))
        if e_int == 0.0:
            per_output.append(math.inf if e_des > 0 else math.nan)
        elif e_des == 0.0:
            per_output.append(-math.inf)
        else:
            per_output.append(10.0 * math.log10(e_des / e_int))
    mean = (per_output[0] + per_output[1]) / 2.0
    return SirReport(sir_per_output=tuple(per_output), sir_mean=mean)


def default_assignment(components):
    """Map each output to the source it passes (the other is interference).

    Each output claims its dominant source; if both claim the same one,
    the permutation with the higher mean SIR wins, ties going to identity.
    """
    c = _component_array(components)
    energy = np.sum(c**2, axis=2)  # (output, source)
    claim = [int(np.argmax(energy[o])) for o in (0, 1)]
    if energy[0, 0] == energy[0, 1] and energy[1, 0] == energy[1, 1]:
        return (0, 1)
    if claim[0] != claim[1]:
        return tuple(claim)
    identity, swapped = sir(c, (0, 1)), sir(c, (1, 0))
    return (0, 1) if identity.sir_mean >= swapped.sir_mean else (1, 0)
