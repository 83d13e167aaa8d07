"""Experiment orchestration.

Runs the full adaptation loop: per geometry iteration the microphone
signals are re-synthesized for the current spacings, each sub-array's
separation filters adapt block-wise over the segment, the blind coherence
measure and the per-block output selection are updated, and finally the
spacing state machine moves the inferior sub-array. Also provides the
fixed-spacing sweep experiment and plot-data export.
"""

import json
import warnings
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from .acoustics import ArrayGeometry, RoomScenario, SourceSpec, synthesize
from .adaptation import AdaptParams, AdaptationState, geometry_step, select_output
from .bss import BssConfig, bss_adapt_block, bss_apply, bss_init
from .errors import ConfigError, DataError
from .metrics import (CoherenceEstimator, WelchConfig, default_assignment, sir,
                      update_psd, weighted_msc)
from .sources import builtin_signal, read_wav, write_wav

# The configured recursive averaging constant is defined per this much
# audio; shorter update blocks get a proportionally smaller constant so
# the effective memory of the coherence estimate is block-size invariant.
_ALPHA_REF_SECONDS = 5.0


@dataclass(frozen=True)
class SourceConfig:
    """One sound source: a builtin preset name ('builtin:low'/'builtin:high')
    or a WAV file path, plus its placement relative to the array."""

    signal: str = "builtin:low"
    angle_deg: float = 20.0
    distance: float = 1.0
    power_scale: float = 1.0


@dataclass(frozen=True)
class ExperimentConfig:
    """Complete description of one experiment run."""

    room_dimensions: tuple = (4.5, 4.5, 2.5)
    t60: float = 0.2
    fs: int = 16000
    center_position: tuple = (2.25, 2.25, 1.2)
    orientation: tuple = (1.0, 0.0, 0.0)
    d1: float = 0.15
    d2: float = 0.20
    sources: tuple = (
        SourceConfig(signal="builtin:low", angle_deg=20.0),
        SourceConfig(signal="builtin:high", angle_deg=-20.0),
    )
    total_duration: float = 30.0
    sweep: tuple = ()
    sweep_repeats: int = 8
    seed: int = 0
    adapt: AdaptParams = field(default_factory=AdaptParams)
    bss: BssConfig = field(default_factory=BssConfig)
    welch: WelchConfig = field(default_factory=WelchConfig)
    trace_every_block: bool = True
    out_dir: str = ""

    def __post_init__(self):
        if len(self.sources) != 2:
            raise ConfigError(f"exactly two sources are required, got {len(self.sources)}")
        if self.total_duration < self.adapt.segment_seconds:
            raise ConfigError(
                f"total_duration {self.total_duration}s is shorter than one "
                f"{self.adapt.segment_seconds}s geometry iteration"
            )
        if self.bss.block_length < self.welch.window_length:
            raise ConfigError("bss.block_length must be >= welch.window_length")
        if self.sweep_repeats < 1:
            raise ConfigError("sweep_repeats must be >= 1")
        if any(d <= 0 for d in self.sweep):
            raise ConfigError("sweep spacings must be > 0")
        if self.d1 > self.d2:
            warnings.warn("initial d1 > d2; swapping the sub-array labels", stacklevel=2)
            d1, d2 = self.d2, self.d1
            object.__setattr__(self, "d1", d1)
            object.__setattr__(self, "d2", d2)
        object.__setattr__(self, "room_dimensions", tuple(self.room_dimensions))
        object.__setattr__(self, "center_position", tuple(self.center_position))
        object.__setattr__(self, "orientation", tuple(self.orientation))
        object.__setattr__(self, "sources", tuple(self.sources))
        object.__setattr__(self, "sweep", tuple(float(d) for d in self.sweep))


def _build_dataclass(cls, data, context):
    known = {f.name: f for f in fields(cls)}
    unknown = set(data) - set(known)
    if unknown:
        raise ConfigError(f"unknown {context} keys: {sorted(unknown)}")
    return cls(**data)


def config_from_dict(data):
    """Build an ExperimentConfig from a plain (JSON-shaped) dictionary."""
    if not isinstance(data, dict):
        raise ConfigError(f"config root must be an object, got {type(data).__name__}")
    data = dict(data)
    nested = {}
    for key, cls in (("adapt", AdaptParams), ("bss", BssConfig), ("welch", WelchConfig)):
        if key in data:
            sub = data.pop(key)
            if not isinstance(sub, dict):
                raise ConfigError(f"'{key}' must be an object")
            nested[key] = _build_dataclass(cls, sub, key)
    if "sources" in data:
        srcs = data.pop("sources")
        if not isinstance(srcs, list):
            raise ConfigError("'sources' must be a list")
        nested["sources"] = tuple(
            _build_dataclass(SourceConfig, s, "source") for s in srcs
        )
    return _build_dataclass(ExperimentConfig, {**data, **nested}, "config")


def load_config(path):
    """Read an experiment config from a JSON file."""
    try:
        with open(path) as fh:
            data = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    return config_from_dict(data)


@dataclass(frozen=True)
class TraceRow:
    """One per-block progress record of the adaptation run."""

    time: float  # seconds since experiment start
    j: int  # geometry iteration
    m: int  # block index within the iteration
    d1: float
    d2: float
    msc1: float
    msc2: float
    sir_mean1: float
    sir_mean2: float
    sir_mean_out: float  # sir_mean of the currently selected sub-array
    selected_output: int


TRACE_HEADER = "time,j,m,d1,d2,msc1,msc2,sir_mean1,sir_mean2,sir_mean_out,selected_output"


@dataclass(frozen=True)
class IterationRecord:
    """Per-geometry-iteration summary, recorded just before the spacing update."""

    j: int
    d1: float
    d2: float
    a1: int
    a2: int
    f1: float  # converged-filter coherence measure, sub-array 1
    f2: float
    sir_mean1: float
    sir_mean2: float
    selected_output: int
    sir_mean_out: float
    event: str  # spacing update applied after this record


@dataclass
class ExperimentResult:
    trace: list
    iterations: list
    state: AdaptationState
    audio: np.ndarray  # (2, n) selected separated output
    fs: int


def _source_signal(cfg, src, n_samples, seed):
    """Full-length source samples: builtin generator or WAV file."""
    name = src.signal
    if name.startswith("builtin:"):
        return builtin_signal(name, n_samples, cfg.fs, seed)
    data = read_wav(name, cfg.fs)
    if len(data) < n_samples:
        raise DataError(f"{name}: {len(data)} samples, need {n_samples}")
    return data[:n_samples]


def _scenario_for_segment(cfg, signals, start, stop):
    specs = tuple(
        SourceSpec(src.angle_deg, src.distance, sig[start:stop], src.power_scale)
        for src, sig in zip(cfg.sources, signals)
    )
    return RoomScenario(dimensions=cfg.room_dimensions, t60=cfg.t60, fs=cfg.fs, sources=specs)


def _block_alpha(cfg):
    block_seconds = cfg.bss.block_length / cfg.fs
    a = cfg.welch.averaging_constant
    if a >= 1.0:
        return 1.0
    return 1.0 - (1.0 - a) ** (block_seconds / _ALPHA_REF_SECONDS)


class _SubArrayPipeline:
    """Separation filters + streaming coherence state of one sub-array."""

    def __init__(self, cfg, spacing):
        self.cfg = cfg
        self.spacing = spacing
        self.stream_welch = replace(cfg.welch, averaging_constant=_block_alpha(cfg))
        self.reset(spacing)

    def reset(self, spacing):
        self.spacing = spacing
        self.bss = bss_init(self.cfg.bss)
        self.estimator = CoherenceEstimator.create(self.stream_welch)
        fft = self.cfg.bss.fft_size
        self.ctx = np.zeros((2, fft))
        self.comp_ctx = np.zeros((2, 2, fft))

    def process_block(self, x_block, comp_block):
        """Adapt on one block; returns (streaming msc, block msc, SirReport).

        The streaming value is the slow recursive average used for the
        trace; the block-local value compares the two sub-arrays fairly
        right after a reset, when the recursive average is still dominated
        by the unconverged start-up blocks.
        """
        fft = self.cfg.bss.fft_size
        n = x_block.shape[1]
        bss_adapt_block(self.bss, x_block)
        out = bss_apply(
            self.bss,
            np.concatenate([self.ctx, x_block], axis=1),
            components=np.concatenate([self.comp_ctx, comp_block], axis=2),
        )
        y = out.y[:, fft : fft + n]
        comp = out.components[:, :, fft : fft + n]
        update_psd(self.estimator, y[0], y[1], self.stream_welch)
        one_shot = replace(self.cfg.welch, averaging_constant=1.0)
        block_est = CoherenceEstimator.create(one_shot)
        update_psd(block_est, y[0], y[1], one_shot)
        self.ctx = x_block[:, -fft:]
        self.comp_ctx = comp_block[:, :, -fft:]
        report = sir(comp, default_assignment(comp))
        return weighted_msc(self.estimator), weighted_msc(block_est), report

    def final_measures(self, x, comps):
        """Converged-filter measures over the whole segment: one-shot
        spectrum-weighted coherence, oracle ratio, and the output audio."""
        n = x.shape[1]
        out = bss_apply(self.bss, x, components=comps)
        y = out.y[:, :n]
        comp = out.components[:, :, :n]
        one_shot = replace(self.cfg.welch, averaging_constant=1.0)
        est = CoherenceEstimator.create(one_shot)
        update_psd(est, y[0], y[1], one_shot)
        report = sir(comp, default_assignment(comp))
        return weighted_msc(est), report, y


def _sub_inputs(mic_signals, mic_indices, n):
    idx = list(mic_indices)
    x = mic_signals.total[idx, :n]
    comps = mic_signals.per_source_components[:, idx, :n]
    return x, comps


def run_adaptation_experiment(cfg, out_dir=None):
    """Run the full geometry adaptation loop.

    Per geometry iteration: re-synthesize the microphone signals for the
    current spacings from a fresh contiguous slice of the source material,
    adapt both sub-arrays block-wise, update the streaming coherence
    measures and the hysteresis-guarded output selection, then rank the
    sub-arrays by their converged-filter measures and move the inferior
    spacing. Deterministic for a given config and seed.
    """
    fs = cfg.fs
    seg_n = int(round(cfg.adapt.segment_seconds * fs))
    block = cfg.bss.block_length
    n_iters = int(cfg.total_duration * fs) // seg_n
    if n_iters < 1 or seg_n // block < 1:
        raise ConfigError("total_duration is too short for one geometry iteration")

    signals = [
        _source_signal(cfg, src, n_iters * seg_n, cfg.seed) for src in cfg.sources
    ]

    state = AdaptationState(d1=cfg.d1, d2=cfg.d2)
    pipelines = {
        1: _SubArrayPipeline(cfg, cfg.d1),
        2: _SubArrayPipeline(cfg, cfg.d2),
    }
    rir_cache = {}
    trace = []
    iterations = []
    audio_parts = []

    for j in range(n_iters):
        geometry = ArrayGeometry(
            center_position=cfg.center_position,
            d1=state.d1,
            d2=state.d2,
            orientation=cfg.orientation,
        )
        scenario = _scenario_for_segment(cfg, signals, j * seg_n, (j + 1) * seg_n)
        mic_signals = synthesize(scenario, geometry, cache=rir_cache)
        # sub-array 1: outer-left mic + center; sub-array 2: center + outer-right
        inputs = {
            1: _sub_inputs(mic_signals, (0, 1), seg_n),
            2: _sub_inputs(mic_signals, (1, 2), seg_n),
        }
        for k, spacing in ((1, state.d1), (2, state.d2)):
            if pipelines[k].spacing != spacing:
                pipelines[k].reset(spacing)

        n_blocks = seg_n // block
        for m in range(n_blocks):
            msc = {}
            block_msc = {}
            reports = {}
            for k in (1, 2):
                x, comps = inputs[k]
                sl = slice(m * block, (m + 1) * block)
                msc[k], block_msc[k], reports[k] = pipelines[k].process_block(
                    x[:, sl], comps[:, :, sl]
                )
            other = 3 - state.selected_output
            select_output(state, block_msc[state.selected_output], block_msc[other], cfg.adapt)
            if cfg.trace_every_block or m == n_blocks - 1:
                trace.append(TraceRow(
                    time=(j * seg_n + (m + 1) * block) / fs,
                    j=j,
                    m=m,
                    d1=state.d1,
                    d2=state.d2,
                    msc1=msc[1],
                    msc2=msc[2],
                    sir_mean1=reports[1].sir_mean,
                    sir_mean2=reports[2].sir_mean,
                    sir_mean_out=reports[state.selected_output].sir_mean,
                    selected_output=state.selected_output,
                ))

        finals = {k: pipelines[k].final_measures(*inputs[k]) for k in (1, 2)}
        f1, f2 = finals[1][0], finals[2][0]
        sel = state.selected_output
        iterations.append(IterationRecord(
            j=j,
            d1=state.d1,
            d2=state.d2,
            a1=state.a1,
            a2=state.a2,
            f1=f1,
            f2=f2,
            sir_mean1=finals[1][1].sir_mean,
            sir_mean2=finals[2][1].sir_mean,
            selected_output=sel,
            sir_mean_out=finals[sel][1].sir_mean,
            event="",
        ))
        audio_parts.append(finals[sel][2])
        geometry_step(state, f1, f2, cfg.adapt)
        iterations[-1] = replace(iterations[-1], event=state.last_event)

    audio = np.concatenate(audio_parts, axis=1)
    result = ExperimentResult(trace=trace, iterations=iterations, state=state,
                              audio=audio, fs=fs)
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        write_trace_csv(trace, out / "trace.csv")
        write_wav(out / "selected_output.wav", fs, audio)
        emit_plot_data(trace, out)
    return result


def write_trace_csv(trace, path):
    """Write the per-block trace with a documented, stable header."""
    with open(path, "w") as fh:
        fh.write(TRACE_HEADER + "\n")
        for r in trace:
            fh.write(
                "%.10g,%d,%d,%.10g,%.10g,%.10g,%.10g,%.10g,%.10g,%.10g,%d\n"
                % (r.time, r.j, r.m, r.d1, r.d2, r.msc1, r.msc2,
                   r.sir_mean1, r.sir_mean2, r.sir_mean_out, r.selected_output)
            )


@dataclass(frozen=True)
class SweepRow:
    spacing: float
    msc: float
    sir_mean: float


def run_spacing_sweep(cfg, out_dir=None):
    """Fixed-spacing experiment: for each spacing, adapt a two-microphone
    sub-array over one segment and record the converged-filter coherence
    and oracle ratio, averaged over seeded repetitions.
    """
    if not cfg.sweep:
        raise ConfigError("config has no sweep spacings")
    fs = cfg.fs
    seg_n = int(round(cfg.adapt.segment_seconds * fs))
    block = cfg.bss.block_length
    if seg_n // block < 1:
        raise ConfigError("segment_seconds too short for one block")

    rep_seeds = [
        int(np.random.SeedSequence([cfg.seed, rep]).generate_state(1)[0])
        for rep in range(cfg.sweep_repeats)
    ]
    rep_signals = [
        [_source_signal(cfg, src, seg_n, s) for src in cfg.sources] for s in rep_seeds
    ]

    rir_cache = {}
    rows = []
    for d in cfg.sweep:
        geometry = ArrayGeometry(
            center_position=cfg.center_position,
            d1=cfg.d1,
            d2=d,
            orientation=cfg.orientation,
        )
        mscs = []
        sirs = []
        for signals in rep_signals:
            scenario = _scenario_for_segment(cfg, signals, 0, seg_n)
            mic_signals = synthesize(scenario, geometry, cache=rir_cache)
            x, comps = _sub_inputs(mic_signals, (1, 2), seg_n)
            pipe = _SubArrayPipeline(cfg, d)
            for m in range(seg_n // block):
                sl = slice(m * block, (m + 1) * block)
                pipe.process_block(x[:, sl], comps[:, :, sl])
            msc, report, _ = pipe.final_measures(x, comps)
            mscs.append(msc)
            sirs.append(report.sir_mean)
        rows.append(SweepRow(spacing=d, msc=float(np.mean(mscs)),
                             sir_mean=float(np.mean(sirs))))

    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        with open(out / "sweep.csv", "w") as fh:
            fh.write("spacing,msc,sir_mean\n")
            for r in rows:
                fh.write("%.10g,%.10g,%.10g\n" % (r.spacing, r.msc, r.sir_mean))
    return rows


def emit_plot_data(trace, out_dir):
    """Write three tidy CSV series from a trace: coherence vs time, output
    ratio vs time with the selected-output overlay, spacings vs time."""
    if not trace:
        raise DataError("cannot emit plot data from an empty trace")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = (out / "msc_vs_time.csv", out / "sir_vs_time.csv", out / "spacing_vs_time.csv")
    with open(paths[0], "w") as fh:
        fh.write("time,msc1,msc2\n")
        for r in trace:
            fh.write("%.10g,%.10g,%.10g\n" % (r.time, r.msc1, r.msc2))
    with open(paths[1], "w") as fh:
        fh.write("time,sir_mean1,sir_mean2,sir_mean_out,selected_output\n")
        for r in trace:
            fh.write("%.10g,%.10g,%.10g,%.10g,%d\n"
                     % (r.time, r.sir_mean1, r.sir_mean2, r.sir_mean_out, r.selected_output))
    with open(paths[2], "w") as fh:
        fh.write("time,j,d1,d2\n")
        for r in trace:
            fh.write("%.10g,%d,%.10g,%.10g\n" % (r.time, r.j, r.d1, r.d2))
    return paths
