"""Blind adaptation of microphone-array spacings.

Two two-microphone sub-arrays run independent blind source separation;
a spectrum-weighted coherence of each sub-array's outputs ranks them
without reference signals, and a state machine iteratively moves the
inferior sub-array's spacing until separation stops improving.
"""

from .acoustics import (ArrayGeometry, MicSignals, RirSet, RoomScenario,
                        SourceSpec, critical_distance, generate_rir,
                        generate_rir_set, measure_t60, schroeder_curve,
                        source_position, synthesize)
from .adaptation import (AdaptParams, AdaptationState, a_max,
                         competitor_spacing, geometry_step, select_output)
from .bss import (BssConfig, BssOutputs, BssState, bss_adapt_block, bss_apply,
                  bss_init, demixing_filters, export_filters, import_filters)
from .errors import (ArrayAdaptError, ConfigError, DataError, DomainError,
                     InfeasibleRoomError, MeasurementError,
                     UndefinedMeasureError)
from .harness import (ExperimentConfig, ExperimentResult, IterationRecord,
                      SourceConfig, SweepRow, TraceRow, config_from_dict,
                      emit_plot_data, load_config, run_adaptation_experiment,
                      run_spacing_sweep, write_trace_csv)
from .metrics import (CoherenceEstimator, SirReport, WelchConfig,
                      default_assignment, estimator_to_csv, sir, update_psd,
                      weighted_msc, weighting)
from .sources import builtin_signal, read_wav, speech_shaped_noise, write_wav

__version__ = "0.1.0"
