"""Competitive spacing adaptation state machine.

At every geometry iteration the sub-array with the lower blind measure is
the superior one; the other sub-array's spacing is moved to an oscillating
competitor of the superior spacing. A sustained degradation of the
superior measure triggers doubling of the inferior spacing (aperture
reset), and the final output follows the superior sub-array with a streak
hysteresis against toggling.
"""

import math
from dataclasses import dataclass, field

from .errors import ConfigError, MeasurementError


@dataclass(frozen=True)
class AdaptParams:
    epsilon: float = 0.01  # spacing convergence threshold, meters
    t_max: int = 3  # degradation window, geometry steps
    m_max: int = 3  # output-switch hysteresis, data blocks
    d_min: float = 0.02  # meters
    d_max: float = 1.0  # meters
    segment_seconds: float = 10.0

    def __post_init__(self):
        if self.epsilon <= 0:
            raise ConfigError(f"epsilon must be > 0, got {self.epsilon}")
        if self.t_max < 1 or self.m_max < 1:
            raise ConfigError("t_max and m_max must be >= 1")
        if not (0 < self.d_min < self.d_max):
            raise ConfigError(f"need 0 < d_min < d_max, got {self.d_min}, {self.d_max}")
        if self.segment_seconds <= 0:
            raise ConfigError("segment_seconds must be > 0")


@dataclass
class AdaptationState:
    d1: float
    d2: float
    j: int = 0
    a1: int = 1
    a2: int = 1
    t: int = 0
    sup: int = 0  # last superior sub-array, 0 = none yet
    sup_history: list = field(default_factory=list)  # (j, d_sup, f_sup)
    history_anchor: int = 0  # history before this index is stale after a doubling
    selected_output: int = 1
    switch_streak: int = 0
    last_event: str = ""


def competitor_spacing(d_sup, a):
    """Oscillating competitor of the superior spacing for counter value a."""
    if d_sup <= 0:
        raise ConfigError(f"d_sup must be > 0, got {d_sup}")
    if a < 1:
        raise ConfigError(f"a must be >= 1, got {a}")
    return (1.0 + (-1.0) ** (a + 1) / (a + 1.0)) * d_sup


def a_max(d_sup, epsilon):
    """Smallest counter value whose competitor lands within epsilon of d_sup."""
    if d_sup <= 0 or epsilon <= 0:
        raise ConfigError("d_sup and epsilon must be > 0")
    return max(1, math.ceil(d_sup / epsilon) - 1)


def _degradation_fired(state, t_max):
    """True when the superior measure exceeded the value t_max steps back
    at each of the last t_max steps."""
    hist = state.sup_history
    if len(hist) - state.history_anchor < t_max + 1:
        return False
    base = hist[-(t_max + 1)][2]
    return all(hist[-(t_max - t)][2] > base for t in range(t_max))


def geometry_step(state, f1, f2, params):
    """One geometry iteration: rank the sub-arrays and move the inferior one."""
    if not (math.isfinite(f1) and math.isfinite(f2)):
        raise MeasurementError(f"non-finite measures f1={f1}, f2={f2}")

    if f1 < f2:
        sup = 1
    elif f2 < f1:
        sup = 2
    else:
        sup = state.sup if state.sup in (1, 2) else 1
    inf_ = 3 - sup
    state.sup = sup

    d_sup = state.d1 if sup == 1 else state.d2
    f_sup = f1 if sup == 1 else f2
    if sup == 1:
        state.a1 = 1
    else:
        state.a2 = 1

    state.sup_history.append((state.j, d_sup, f_sup))

    if _degradation_fired(state, params.t_max):
        new_d = 2.0 * (state.d1 if inf_ == 1 else state.d2)
        state.t = 0
        state.history_anchor = len(state.sup_history)
        event = "doubled"
    else:
        # running count of consecutive worsened steps, for traces
        hist = state.sup_history
        streak = 0
        for k in range(len(hist) - 1, state.history_anchor, -1):
            if hist[k][2] > hist[k - 1][2]:
                streak += 1
            else:
                break
        state.t = streak
        a_inf = state.a1 if inf_ == 1 else state.a2
        if a_inf > a_max(d_sup, params.epsilon):
            new_d = d_sup
            event = "held"
        else:
            new_d = competitor_spacing(d_sup, a_inf)
            if inf_ == 1:
                state.a1 += 1
            else:
                state.a2 += 1
            event = "competitor"

    clamped = min(max(new_d, params.d_min), params.d_max)
    if clamped != new_d:
        event = "clamped"
    if inf_ == 1:
        state.d1 = clamped
    else:
        state.d2 = clamped

    state.last_event = event
    state.j += 1
    return state


def select_output(state, f_selected_block, f_other_block, params):
    """Per-block output selection with m_max-block switch hysteresis."""
    if f_other_block < f_selected_block:
        state.switch_streak += 1
    else:
        state.switch_streak = 0
    if state.switch_streak >= params.m_max:
        state.selected_output = 3 - state.selected_output
        state.switch_streak = 0
    return state
