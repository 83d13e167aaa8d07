"""Built-in test signals and WAV file handling.

The built-in generators produce seeded speech-shaped colored noise with
on/off amplitude modulation. The modulation emulates the non-stationarity
of speech, which the second-order separation stage needs; the spectral
envelope decays toward high frequencies like an average speech spectrum.
"""

import numpy as np
from scipy.io import wavfile
from scipy.signal import lfilter

from .errors import ConfigError, DataError

# (tilt cutoff Hz, resonance Hz, resonance Q) per voice preset
_PRESETS = {
    "low": (350.0, 140.0, 4.0),
    "high": (550.0, 230.0, 4.0),
}


def _one_pole_lowpass(x, fs, cutoff):
    a = np.exp(-2.0 * np.pi * cutoff / fs)
    return lfilter([1.0 - a], [1.0, -a], x)


def _resonator(x, fs, freq, q):
    w = 2.0 * np.pi * freq / fs
    r = np.exp(-w / (2.0 * q))
    b = [1.0 - r]
    a = [1.0, -2.0 * r * np.cos(w), r * r]
    return lfilter(b, a, x)


def _syllabic_gate(n, fs, rng, on_prob=0.7):
    """Random on/off envelope with 50-300 ms states and 20 ms cosine ramps."""
    env = np.zeros(n)
    ramp = max(1, int(0.02 * fs))
    pos = 0
    while pos < n:
        seg = int(rng.uniform(0.05, 0.3) * fs)
        level = 1.0 if rng.random() < on_prob else 0.03
        env[pos : pos + seg] = level
        pos += seg
    # smooth the steps
    kernel = 0.5 * (1.0 - np.cos(2.0 * np.pi * np.arange(1, ramp + 1) / (ramp + 1)))
    kernel /= kernel.sum()
    return np.convolve(env, kernel, mode="same")


def speech_shaped_noise(n_samples, fs, seed, preset="low"):
    """Deterministic speech-like colored noise, unit RMS over active parts."""
    if preset not in _PRESETS:
        raise ConfigError(f"unknown builtin preset {preset!r}, choose from {sorted(_PRESETS)}")
    cutoff, freq, q = _PRESETS[preset]
    rng = np.random.default_rng(seed)
    white = rng.standard_normal(n_samples)
    shaped = _one_pole_lowpass(white, fs, cutoff) + 0.5 * _resonator(white, fs, freq, q)
    shaped *= _syllabic_gate(n_samples, fs, rng)
    rms = np.sqrt(np.mean(shaped**2))
    if rms == 0:
        raise DataError("generated signal is silent")
    return shaped / rms


def builtin_signal(name, n_samples, fs, seed):
    """Resolve a 'builtin:<preset>' signal reference."""
    preset = name.split(":", 1)[1] if ":" in name else name
    # distinct sub-seed per preset so two sources never share a realization
    sub = sum(ord(ch) for ch in preset)
    return speech_shaped_noise(n_samples, fs, seed=np.random.SeedSequence([seed, sub]), preset=preset)


def read_wav(path, expected_fs):
    """Read a mono WAV (16-bit PCM or 32-bit float) as float64 samples."""
    fs, data = wavfile.read(path)
    if fs != expected_fs:
        raise DataError(f"{path}: sample rate {fs} Hz does not match configured {expected_fs} Hz")
    if data.ndim != 1:
        raise DataError(f"{path}: expected mono WAV, got {data.ndim} channels")
    if data.dtype == np.int16:
        return data.astype(np.float64) / 32768.0
    if data.dtype == np.float32:
        return data.astype(np.float64)
    raise DataError(f"{path}: unsupported sample format {data.dtype}, use 16-bit PCM or 32-bit float")


def write_wav(path, fs, channels):
    """Write float samples as a 32-bit float WAV; channels is (n,) or (C, n)."""
    data = np.asarray(channels, dtype=np.float32)
    if data.ndim == 2:
        data = data.T  # wavfile expects (n, C)
    wavfile.write(path, fs, data)
