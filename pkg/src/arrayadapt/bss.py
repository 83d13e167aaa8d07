"""Block-online convolutive blind source separation for one microphone pair.

Frequency-domain second-order-statistics separation: per-bin 2x2 input
cross-power matrices are collected block by block (with exponential
forgetting across the block history) and jointly off-diagonalized per bin
by whitening against the weighted average cross-power followed by a
closed-form Jacobi rotation over the whitened set. Exploiting the
non-stationarity of the sources across blocks resolves the rotation that
plain decorrelation leaves free. Inter-bin permutations are aligned by
correlating bin-wise output power envelopes, and the scaling ambiguity is
resolved with the minimal-distortion principle so each output approximates
the source image at its own microphone.
"""

from collections import deque
from dataclasses import dataclass, field

import numpy as np
from scipy.signal import get_window, oaconvolve

from .errors import ConfigError, DataError

_MIN_STATS_BLOCKS = 2  # filters stay put until this many blocks of statistics exist
_SILENCE_REL = 1e-10  # block power below this fraction of the running power is treated as silence


@dataclass(frozen=True)
class BssConfig:
    filter_length: int = 1024
    fft_size: int = 2048
    block_length: int = 8192
    forgetting_factor: float = 0.95
    num_inner_iterations: int = 10
    regularization: float = 1e-6
    stats_blocks: int = 20  # covariance history jointly off-diagonalized

    def __post_init__(self):
        if self.filter_length < 2:
            raise ConfigError(f"filter_length must be >= 2, got {self.filter_length}")
        if self.fft_size < 2 * self.filter_length:
            raise ConfigError(
                f"fft_size must be >= 2*filter_length, got {self.fft_size} < {2 * self.filter_length}"
            )
        if self.block_length < self.filter_length:
            raise ConfigError("block_length must be >= filter_length")
        if not (0.0 < self.forgetting_factor <= 1.0):
            raise ConfigError("forgetting_factor must be in (0, 1]")
        if self.num_inner_iterations < 1:
            raise ConfigError("num_inner_iterations must be >= 1")
        if self.regularization < 0:
            raise ConfigError("regularization must be >= 0")
        if self.stats_blocks < 1:
            raise ConfigError("stats_blocks must be >= 1")

    @property
    def num_bins(self):
        return self.fft_size // 2 + 1


@dataclass
class BssState:
    config: BssConfig
    unmixing: np.ndarray  # (num_bins, 2, 2) complex
    cov_history: deque  # recent per-block (num_bins, 2, 2) cross-power matrices
    power_avg: float = 0.0
    blocks_processed: int = 0

    @property
    def delay(self):
        """Fixed group delay of the demixing filters, in samples."""
        return self.config.fft_size // 2


@dataclass
class BssOutputs:
    y: np.ndarray  # (2, n)
    components: np.ndarray | None  # (2 outputs, num_sources, n)
    delay: int


def bss_init(config):
    """Fresh state: identity unmixing, empty statistics."""
    w = np.zeros((config.num_bins, 2, 2), dtype=complex)
    w[:, 0, 0] = 1.0
    w[:, 1, 1] = 1.0
    return BssState(
        config=config,
        unmixing=w,
        cov_history=deque(maxlen=config.stats_blocks * covs_per_block(config)),
    )


_FRAMES_PER_COV = 2  # STFT frames averaged into one covariance snapshot


def _stft_hop(config):
    return config.fft_size // 4


def _block_covariances(block, config):
    """Per-bin 2x2 cross-power snapshots for one block.

    The block's STFT frames are averaged in small groups so that the
    snapshot sequence keeps the short-time non-stationarity the joint
    off-diagonalization feeds on. Returns a list of (num_bins, 2, 2)
    matrices.
    """
    win = get_window("hann", config.fft_size)
    hop = _stft_hop(config)
    n = block.shape[1]
    if n < config.fft_size:
        # zero-pad a short (still >= filter_length) block to one frame
        pad = np.zeros((2, config.fft_size))
        pad[:, :n] = block
        block = pad
        n = config.fft_size
    n_frames = 1 + (n - config.fft_size) // hop
    spec = np.empty((n_frames, config.num_bins, 2), dtype=complex)
    for k in range(n_frames):
        seg = block[:, k * hop : k * hop + config.fft_size] * win
        spec[k, :, 0] = np.fft.rfft(seg[0])
        spec[k, :, 1] = np.fft.rfft(seg[1])
    n_groups = max(1, n_frames // _FRAMES_PER_COV)
    out = []
    for g in range(n_groups):
        chunk = spec[g * _FRAMES_PER_COV : min((g + 1) * _FRAMES_PER_COV, n_frames)]
        out.append(np.einsum("kvi,kvj->vij", chunk, np.conj(chunk)) / chunk.shape[0])
    return out


def covs_per_block(config):
    """Covariance snapshots produced per adaptation block."""
    n_frames = max(1, 1 + (config.block_length - config.fft_size) // _stft_hop(config))
    return max(1, n_frames // _FRAMES_PER_COV)


def _joint_offdiagonalizer(covs, weights, reg, sweeps=1):
    """Per-bin unmixing matrices that jointly off-diagonalize a weighted set
    of 2x2 Hermitian cross-power matrices.

    covs has shape (B, num_bins, 2, 2). Whitening against the weighted
    average cross-power fixes two degrees of freedom; the remaining unitary
    rotation comes from the closed-form Jacobi angle that minimizes the
    summed off-diagonal power of the whitened set. One sweep is exact for
    two channels; extra sweeps are idempotent and kept only as a bound.
    """
    num_bins = covs.shape[1]
    cbar = np.einsum("b,bvij->vij", weights, covs)
    cbar[:, 0, 0] += reg
    cbar[:, 1, 1] += reg
    lam, v = np.linalg.eigh(cbar)
    lam = np.maximum(lam.real, 1e-30)
    # Q = cbar^(-1/2)
    q = np.einsum("vik,vk,vjk->vij", v, 1.0 / np.sqrt(lam), np.conj(v))
    w = q
    for _ in range(max(1, sweeps)):
        m = np.einsum("vij,bvjk,vlk->bvil", w, covs, np.conj(w))
        h = np.stack(
            [
                m[..., 0, 0] - m[..., 1, 1],
                m[..., 0, 1] + m[..., 1, 0],
                1j * (m[..., 1, 0] - m[..., 0, 1]),
            ],
            axis=-1,
        )  # (B, num_bins, 3)
        g = np.einsum("b,bvi,bvj->vij", weights, np.conj(h), h).real
        _, evec = np.linalg.eigh(g)
        xyz = evec[:, :, -1]
        xyz = np.where(xyz[:, :1] < 0, -xyz, xyz)
        x, y, z = xyz[:, 0], xyz[:, 1], xyz[:, 2]
        r = np.sqrt(x * x + y * y + z * z)
        # degenerate stats (all whitened matrices ~ identity): keep rotation at I
        ok = r > 1e-12 * np.maximum(1.0, np.abs(m[..., 0, 0]).max())
        r = np.where(ok, r, 1.0)
        x = np.where(ok, x, 1.0)
        c = np.sqrt((x + r) / (2.0 * r))
        s = np.where(ok, (y - 1j * z) / np.sqrt(2.0 * r * (x + r)), 0.0)
        rot = np.empty((num_bins, 2, 2), dtype=complex)
        rot[:, 0, 0] = c
        rot[:, 0, 1] = np.conj(s)
        rot[:, 1, 0] = -s
        rot[:, 1, 1] = c
        w = np.einsum("vij,vjk->vik", rot, w)
    return w


def bss_adapt_block(state, block):
    """Fold one two-channel block into the statistics and update the filters."""
    block = np.asarray(block, dtype=float)
    if block.ndim != 2 or block.shape[0] != 2:
        raise DataError(f"block must have shape (2, n), got {block.shape}")
    if block.shape[1] != state.config.block_length:
        raise DataError(
            f"block length {block.shape[1]} does not match configured {state.config.block_length}"
        )
    if not np.all(np.isfinite(block)):
        raise DataError("non-finite samples in adaptation block")

    cfg = state.config
    for c in _block_covariances(block, cfg):
        state.cov_history.append(c)

    p = float(np.mean(block**2))
    if state.blocks_processed == 0:
        state.power_avg = p
    else:
        lam = cfg.forgetting_factor
        state.power_avg = lam * state.power_avg + (1.0 - lam) * p
    state.blocks_processed += 1

    if p <= _SILENCE_REL * max(state.power_avg, 1e-30):
        return state  # nothing to learn from silence
    if len(state.cov_history) < _MIN_STATS_BLOCKS:
        return state  # single-snapshot statistics can be rank deficient

    covs = np.stack(state.cov_history)  # (B, num_bins, 2, 2)
    ages = np.arange(len(state.cov_history) - 1, -1, -1, dtype=float)
    weights = cfg.forgetting_factor ** (ages / covs_per_block(cfg))
    weights /= weights.sum()

    reg = cfg.regularization * float(np.mean(covs[..., 0, 0].real + covs[..., 1, 1].real)) / 2.0
    reg = max(reg, 1e-30)

    w = _joint_offdiagonalizer(covs, weights, reg, sweeps=min(cfg.num_inner_iterations, 2))
    w = _align_permutations(w, covs, weights)
    w = _minimal_distortion(w)
    state.unmixing = _project_filter_length(w, cfg.filter_length)
    return state


def _align_permutations(w, covs, weights, passes=3):
    """Resolve per-bin output permutations by correlating each bin's output
    power envelope (over the covariance history) with the power-weighted
    cross-bin centroid envelope."""
    if covs.shape[0] < 8:
        return w
    cy = np.einsum("vij,bvjk,vlk->bvil", w, covs, np.conj(w))
    env = np.stack([cy[..., 0, 0].real, cy[..., 1, 1].real], axis=-1)  # (B, v, 2)
    rel = env.sum(axis=(0, 2))
    total = rel.sum()
    if total <= 0:
        return w
    rel /= total
    env = np.log10(np.maximum(env, 1e-30))
    env -= env.mean(axis=0, keepdims=True)
    env /= np.maximum(env.std(axis=0, keepdims=True), 1e-12)
    for _ in range(passes):
        centroid = np.einsum("bvo,v->bo", env, rel)
        keep = np.einsum("bvo,bo->v", env, centroid)
        swap = np.einsum("bvo,bo->v", env[..., ::-1], centroid)
        flip = swap > keep
        if not np.any(flip):
            break
        w[flip] = w[flip][:, ::-1, :]
        env[:, flip] = env[:, flip][..., ::-1]
    return w


def _project_filter_length(w, filter_length):
    """Constrain the demixing responses to length-L FIR filters (L/2 causal
    plus L/2 anti-causal taps); pools per-bin estimates across frequency."""
    fft = (w.shape[0] - 1) * 2
    h = np.fft.irfft(w, n=fft, axis=0)
    h[filter_length // 2 : fft - filter_length // 2] = 0.0
    return np.fft.rfft(h, n=fft, axis=0)


def _minimal_distortion(w):
    """Rescale each row so output o approximates source o's image at mic o:
    W <- diag(W^{-1}) W per bin."""
    det = w[:, 0, 0] * w[:, 1, 1] - w[:, 0, 1] * w[:, 1, 0]
    # near-parallel rows would blow up the rescale; skip those bins
    scale_ref = np.abs(w[:, 0, 0] * w[:, 1, 1]) + np.abs(w[:, 0, 1] * w[:, 1, 0])
    ok = np.abs(det) > 0.05 * np.maximum(scale_ref, 1e-30)
    out = w.copy()
    inv00 = np.where(ok, w[:, 1, 1] / np.where(ok, det, 1.0), 1.0)
    inv11 = np.where(ok, w[:, 0, 0] / np.where(ok, det, 1.0), 1.0)
    out[:, 0, :] *= inv00[:, None]
    out[:, 1, :] *= inv11[:, None]
    return out


def demixing_filters(state):
    """Time-domain demixing filters, shape (2 out, 2 in, fft_size).

    Each filter carries a common group delay of fft_size/2 samples so that
    the non-causal part of the learned per-bin responses is representable.
    """
    cfg = state.config
    h = np.empty((2, 2, cfg.fft_size))
    for o in range(2):
        for i in range(2):
            h[o, i] = np.roll(np.fft.irfft(state.unmixing[:, o, i], n=cfg.fft_size), state.delay)
    return h


def bss_apply(state, signals, components=None):
    """Filter a two-channel signal (and optional per-source components)
    with the current demixing filters; exact linear convolution."""
    signals = np.asarray(signals, dtype=float)
    if signals.ndim != 2 or signals.shape[0] != 2:
        raise DataError(f"signals must have shape (2, n), got {signals.shape}")
    if not np.all(np.isfinite(signals)):
        raise DataError("non-finite samples")

    h = demixing_filters(state)
    n_out = signals.shape[1] + h.shape[2] - 1
    y = np.zeros((2, n_out))
    for o in range(2):
        for i in range(2):
            y[o] += oaconvolve(signals[i], h[o, i])

    comp_out = None
    if components is not None:
        comps = np.asarray(components, dtype=float)
        if comps.ndim != 3 or comps.shape[1] != 2 or comps.shape[2] != signals.shape[1]:
            raise DataError(
                f"components must have shape (num_sources, 2, {signals.shape[1]}), got {comps.shape}"
            )
        comp_out = np.zeros((2, comps.shape[0], n_out))
        for o in range(2):
            for s in range(comps.shape[0]):
                for i in range(2):
                    comp_out[o, s] += oaconvolve(comps[s, i], h[o, i])

    return BssOutputs(y=y, components=comp_out, delay=state.delay)


def export_filters(state, path):
    """CSV spectrum dump of the unmixing matrices (one row per bin)."""
    w = state.unmixing
    cols = [np.arange(w.shape[0])]
    header = ["bin"]
    for o in range(2):
        for i in range(2):
            cols += [w[:, o, i].real, w[:, o, i].imag]
            header += [f"re_w{o}{i}", f"im_w{o}{i}"]
    np.savetxt(path, np.column_stack(cols), delimiter=",", header=",".join(header), comments="", fmt="%.10g")


def import_filters(state, path):
    """Load unmixing matrices previously written by export_filters."""
    data = np.loadtxt(path, delimiter=",", skiprows=1)
    if data.shape[0] != state.config.num_bins or data.shape[1] != 9:
        raise DataError(f"{path}: expected {state.config.num_bins} rows x 9 columns, got {data.shape}")
    w = np.empty_like(state.unmixing)
    col = 1
    for o in range(2):
        for i in range(2):
            w[:, o, i] = data[:, col] + 1j * data[:, col + 1]
            col += 2
    state.unmixing = w
    return state
