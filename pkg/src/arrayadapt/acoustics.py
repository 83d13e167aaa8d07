"""Shoebox room simulation via the image method.

Generates room impulse responses for point sources and microphones in a
rectangular room, synthesizes multichannel microphone signals by
convolution, and keeps the per-source signal components around so that
oracle interference ratios can be evaluated downstream.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.signal import oaconvolve

from .errors import DataError, DomainError, InfeasibleRoomError

_SINC_HALF_WIDTH = 4  # taps of the windowed-sinc fractional delay (8-tap total)


@dataclass(frozen=True)
class SourceSpec:
    """A point source placed relative to the array center.

    angle_deg is measured from broadside (perpendicular to the array axis),
    positive toward the positive axis direction.
    """

    angle_deg: float
    distance: float
    signal: np.ndarray
    power_scale: float = 1.0

    def __post_init__(self):
        if self.distance <= 0:
            raise DomainError(f"source distance must be > 0, got {self.distance}")
        sig = np.asarray(self.signal, dtype=float)
        if sig.size == 0:
            raise DataError("source signal is empty")
        if not np.all(np.isfinite(sig)):
            raise DataError("source signal contains non-finite samples")
        object.__setattr__(self, "signal", sig)


@dataclass(frozen=True)
class RoomScenario:
    """Rectangular room with sources, the world being simulated."""

    dimensions: tuple  # (length, width, height) in meters
    t60: float
    fs: int
    sources: tuple = ()
    speed_of_sound: float = 343.0

    def __post_init__(self):
        dims = tuple(float(d) for d in self.dimensions)
        if len(dims) != 3 or any(d <= 0 for d in dims):
            raise DomainError(f"room dimensions must be 3 positive values, got {self.dimensions}")
        if self.t60 < 0:
            raise DomainError(f"t60 must be >= 0, got {self.t60}")
        if self.fs <= 0:
            raise DomainError(f"fs must be > 0, got {self.fs}")
        object.__setattr__(self, "dimensions", dims)
        object.__setattr__(self, "sources", tuple(self.sources))

    @property
    def volume(self):
        lx, ly, lz = self.dimensions
        return lx * ly * lz

    def contains(self, position):
        p = np.asarray(position, dtype=float)
        return bool(np.all(p > 0) and np.all(p < np.asarray(self.dimensions)))


@dataclass(frozen=True)
class ArrayGeometry:
    """Three-sensor linear array: a fixed center microphone flanked by two
    movable microphones at spacings d1 and d2 along the array axis."""

    center_position: tuple
    d1: float
    d2: float
    orientation: tuple = (1.0, 0.0, 0.0)

    def __post_init__(self):
        if self.d1 <= 0 or self.d2 <= 0:
            raise DomainError(f"spacings must be > 0, got d1={self.d1}, d2={self.d2}")
        u = np.asarray(self.orientation, dtype=float)
        n = np.linalg.norm(u)
        if n == 0:
            raise DomainError("orientation must be a nonzero vector")
        object.__setattr__(self, "orientation", tuple(u / n))
        object.__setattr__(self, "center_position", tuple(float(c) for c in self.center_position))

    def mic_positions(self):
        """Microphone positions as a (3, 3) array: [center - d1*u, center, center + d2*u]."""
        c = np.asarray(self.center_position)
        u = np.asarray(self.orientation)
        return np.stack([c - self.d1 * u, c, c + self.d2 * u])


@dataclass(frozen=True)
class RirSet:
    """Impulse responses indexed as rirs[source, microphone, sample]."""

    rirs: np.ndarray
    fs: int

    @property
    def length(self):
        return self.rirs.shape[2]


@dataclass(frozen=True)
class MicSignals:
    """Synthesized microphone signals plus their per-source decomposition.

    total[m] is exactly the sum over sources of per_source_components[s, m].
    """

    total: np.ndarray  # (num_mics, num_samples)
    per_source_components: np.ndarray  # (num_sources, num_mics, num_samples)
    fs: int


def _reflection_coefficient(scenario):
    """Uniform wall reflection coefficient from Sabine's formula.

    Sabine: T60 = 0.1611 V / (S alpha). The inversion is infeasible when
    the requested T60 would need absorption above 1 (walls cannot soak up
    more than the incident energy)."""
    lx, ly, lz = scenario.dimensions
    surface = 2.0 * (lx * ly + lx * lz + ly * lz)
    alpha = 0.1611 * scenario.volume / (surface * scenario.t60)
    if alpha >= 1.0:
        raise InfeasibleRoomError(
            f"t60={scenario.t60} s is unreachable for this room (needs absorption {alpha:.3f} > 1)"
        )
    beta = np.sqrt(1.0 - alpha)
    if not (0.0 <= beta < 1.0):
        raise InfeasibleRoomError(
            f"t60={scenario.t60} s requires wall reflection coefficient {beta:.3f} outside [0, 1)"
        )
    return beta


def rir_length(scenario):
    """Number of samples kept per impulse response."""
    return max(1024, int(np.ceil(1.25 * scenario.t60 * scenario.fs)))


def _dim_images(src, room_len, order):
    """1-D image coordinates and wall reflection counts for one dimension."""
    n = np.arange(-order, order + 1)
    even = src + 2.0 * n * room_len
    odd = -src + 2.0 * n * room_len
    coords = np.concatenate([even, odd])
    counts = np.concatenate([2 * np.abs(n), np.abs(2 * n - 1)])
    return coords, counts


def _deposit(h, delays, amplitudes):
    """Add fractionally delayed impulses to h via an 8-tap windowed sinc.

    Taps start one sample before the integer part of the delay so the
    response stays causal up to the documented 2-sample spread.
    """
    base = np.floor(delays).astype(np.int64) - 1
    for k in range(2 * _SINC_HALF_WIDTH):
        pos = base + k
        x = pos - delays
        w = np.where(np.abs(x) < _SINC_HALF_WIDTH,
                     0.5 * (1.0 + np.cos(np.pi * x / _SINC_HALF_WIDTH)), 0.0)
        val = amplitudes * np.sinc(x) * w
        mask = (pos >= 0) & (pos < h.shape[0])
        np.add.at(h, pos[mask], val[mask])


def generate_rir(scenario, source_position, mic_position):
    """Image-method impulse response from a source to a microphone.

    For t60 == 0 only the free-field direct path is returned.
    """
    src = np.asarray(source_position, dtype=float)
    mic = np.asarray(mic_position, dtype=float)
    if not scenario.contains(src):
        raise DomainError(f"source position {source_position} outside room {scenario.dimensions}")
    if not scenario.contains(mic):
        raise DomainError(f"mic position {mic_position} outside room {scenario.dimensions}")

    fs = scenario.fs
    c = scenario.speed_of_sound
    n_samples = rir_length(scenario)
    h = np.zeros(n_samples)

    if scenario.t60 == 0:
        dist = np.linalg.norm(src - mic)
        _deposit(h, np.array([dist / c * fs]), np.array([1.0 / (4.0 * np.pi * dist)]))
        return h

    beta = _reflection_coefficient(scenario)
    max_dist = c * (n_samples + 2 * _SINC_HALF_WIDTH) / fs

    coords = []
    counts = []
    for dim in range(3):
        order = int(np.ceil(max_dist / (2.0 * scenario.dimensions[dim]))) + 1
        co, ct = _dim_images(src[dim], scenario.dimensions[dim], order)
        coords.append(co - mic[dim])
        counts.append(ct)

    dx, dy, dz = coords
    cx, cy, cz = counts
    # broadcast over the 3-D image lattice
    d2 = (dx[:, None, None] ** 2 + dy[None, :, None] ** 2 + dz[None, None, :] ** 2)
    total_counts = (cx[:, None, None] + cy[None, :, None] + cz[None, None, :])
    dist = np.sqrt(d2).ravel()
    total_counts = total_counts.ravel()

    keep = dist <= max_dist
    dist = dist[keep]
    total_counts = total_counts[keep]

    amplitudes = beta ** total_counts / (4.0 * np.pi * dist)
    delays = dist / c * fs
    # fixed ordering keeps the accumulation bit-reproducible
    order_idx = np.lexsort((total_counts, dist))
    _deposit(h, delays[order_idx], amplitudes[order_idx])
    return h


def source_position(scenario, geometry, spec):
    """3-D position of a source given its angle/distance relative to the array.

    The source sits in the horizontal plane of the array axis; broadside is
    the horizontal direction perpendicular to the axis.
    """
    c = np.asarray(geometry.center_position)
    u = np.asarray(geometry.orientation)
    up = np.array([0.0, 0.0, 1.0])
    b = np.cross(up, u)
    nb = np.linalg.norm(b)
    if nb < 1e-12:
        raise DomainError("array axis must not be vertical")
    b /= nb
    a = np.deg2rad(spec.angle_deg)
    return c + spec.distance * (np.cos(a) * b + np.sin(a) * u)


def generate_rir_set(scenario, geometry, cache=None):
    """RIRs for every (source, microphone) pair of the given geometry.

    cache, when provided, maps rounded (source, mic) position keys to
    previously computed responses so that unchanged microphones are reused
    across geometry iterations.
    """
    mics = geometry.mic_positions()
    for m in mics:
        if not scenario.contains(m):
            raise DomainError(f"microphone at {tuple(m)} outside room {scenario.dimensions}")
    n = rir_length(scenario)
    rirs = np.zeros((len(scenario.sources), len(mics), n))
    for s, spec in enumerate(scenario.sources):
        spos = source_position(scenario, geometry, spec)
        for m, mpos in enumerate(mics):
            key = (tuple(np.round(spos, 9)), tuple(np.round(mpos, 9)))
            if cache is not None and key in cache:
                rirs[s, m] = cache[key]
            else:
                rirs[s, m] = generate_rir(scenario, spos, mpos)
                if cache is not None:
                    cache[key] = rirs[s, m]
    return RirSet(rirs=rirs, fs=scenario.fs)


def synthesize(scenario, geometry, rir_set=None, cache=None):
    """Convolve every source signal with its RIRs and sum per microphone."""
    if not scenario.sources:
        raise DataError("scenario has no sources")
    for spec in scenario.sources:
        if spec.signal.ndim != 1:
            raise DataError("source signals must be mono")
    if rir_set is None:
        rir_set = generate_rir_set(scenario, geometry, cache=cache)

    num_sources = len(scenario.sources)
    num_mics = rir_set.rirs.shape[1]
    sig_len = max(len(spec.signal) for spec in scenario.sources)
    out_len = sig_len + rir_set.length - 1

    components = np.zeros((num_sources, num_mics, out_len))
    for s, spec in enumerate(scenario.sources):
        x = spec.signal * spec.power_scale
        for m in range(num_mics):
            y = oaconvolve(x, rir_set.rirs[s, m])
            components[s, m, : len(y)] = y
    total = components.sum(axis=0)
    return MicSignals(total=total, per_source_components=components, fs=scenario.fs)


def critical_distance(scenario):
    """Distance at which direct and reverberant energy are equal."""
    if scenario.t60 <= 0:
        raise DomainError("critical distance is undefined for t60 = 0")
    return 0.057 * np.sqrt(scenario.volume / scenario.t60)


def schroeder_curve(h):
    """Backward-integrated energy decay, normalized to 1 at the start."""
    e = np.cumsum(h[::-1] ** 2)[::-1]
    if e[0] <= 0:
        raise DataError("impulse response has zero energy")
    return e / e[0]


def measure_t60(h, fs, fit_range=(-5.0, -25.0)):
    """Reverberation time from a line fit to the Schroeder decay in dB.

    The slope between fit_range dB points is extrapolated to -60 dB.
    """
    curve = schroeder_curve(h)
    db = 10.0 * np.log10(np.maximum(curve, 1e-30))
    hi, lo = fit_range
    idx = np.where((db <= hi) & (db >= lo))[0]
    if len(idx) < 2:
        raise DataError("decay range too short to fit a slope")
    t = idx / fs
    slope, _ = np.polyfit(t, db[idx], 1)
    if slope >= 0:
        raise DataError("energy decay is not decreasing")
    return -60.0 / slope
