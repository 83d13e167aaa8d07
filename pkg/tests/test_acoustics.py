"""Room simulation tests: impulse response fidelity, geometry helpers,
decay measurement, and synthesis invariants."""

import numpy as np
import pytest

from arrayadapt import (ArrayGeometry, DomainError, InfeasibleRoomError,
                        RoomScenario, SourceSpec, critical_distance,
                        generate_rir, generate_rir_set, measure_t60,
                        schroeder_curve, source_position, synthesize)
from arrayadapt.acoustics import _reflection_coefficient, rir_length

FS = 16000


def desk_scenario(t60=0.2, sources=()):
    return RoomScenario(dimensions=(4.5, 4.5, 2.5), t60=t60, fs=FS, sources=sources)


def test_reflection_coefficient_value():
    # surface 2*(4.5*4.5 + 2*4.5*2.5) = 85.5 m^2, volume 50.625 m^3;
    # absorption 0.1611*50.625/(85.5*0.2) = 0.47694; reflection = sqrt(1 - absorption)
    beta = _reflection_coefficient(desk_scenario())
    assert beta == pytest.approx(np.sqrt(1.0 - 0.1611 * 50.625 / (85.5 * 0.2)), abs=1e-12)


def test_unreachably_short_t60_is_infeasible():
    with pytest.raises(InfeasibleRoomError):
        _reflection_coefficient(desk_scenario(t60=0.05))


def test_anechoic_rir_is_single_direct_path():
    scen = desk_scenario(t60=0.0)
    src = np.array([2.25, 3.25, 1.2])  # 1 m from the mic
    mic = np.array([2.25, 2.25, 1.2])
    h = generate_rir(scen, src, mic)
    peak = np.argmax(np.abs(h))
    assert peak == pytest.approx(FS / 343.0, abs=2)
    # the fractional delay spreads the pulse over a few taps; the tap sum
    # (DC gain) preserves the free-field 1/(4 pi d) amplitude
    assert np.sum(h) == pytest.approx(1.0 / (4.0 * np.pi), rel=0.05)
    # all energy concentrated around the direct-path arrival
    window = np.zeros_like(h)
    window[peak - 8 : peak + 8] = 1.0
    assert np.sum((h * window) ** 2) / np.sum(h**2) > 0.999


def test_direct_path_amplitude_follows_inverse_distance():
    scen = desk_scenario(t60=0.0)
    mic = np.array([2.25, 2.25, 1.2])
    h1 = generate_rir(scen, mic + [0.0, 0.5, 0.0], mic)
    h2 = generate_rir(scen, mic + [0.0, 1.0, 0.0], mic)
    assert np.sum(h1**2) == pytest.approx(4.0 * np.sum(h2**2), rel=0.05)


def test_rir_is_deterministic():
    scen = desk_scenario()
    src = np.array([2.25, 3.25, 1.2])
    mic = np.array([2.0, 2.25, 1.2])
    h1 = generate_rir(scen, src, mic)
    h2 = generate_rir(scen, src, mic)
    assert np.array_equal(h1, h2)


def test_positions_outside_room_rejected():
    scen = desk_scenario()
    inside = np.array([2.25, 2.25, 1.2])
    with pytest.raises(DomainError):
        generate_rir(scen, np.array([5.0, 2.25, 1.2]), inside)
    with pytest.raises(DomainError):
        generate_rir(scen, inside, np.array([2.25, -0.1, 1.2]))


def test_rir_length_covers_decay():
    assert rir_length(desk_scenario()) == int(np.ceil(1.25 * 0.2 * FS))
    assert rir_length(desk_scenario(t60=0.0)) == 1024


def test_measured_t60_matches_room_setting():
    scen = desk_scenario()
    src = np.array([2.25, 3.25, 1.2])
    mic = np.array([2.25, 2.25, 1.2])
    h = generate_rir(scen, src, mic)
    assert 0.16 <= measure_t60(h, FS) <= 0.24


def test_measured_t60_on_synthetic_exponential_decay():
    # envelope exp(-6.9078 t / T) gives an energy decay of 60 dB per T seconds
    target = 0.3
    rng = np.random.default_rng(7)
    t = np.arange(int(FS * 0.6)) / FS
    h = np.exp(-6.907755 * t / target) * rng.standard_normal(len(t))
    assert measure_t60(h, FS) == pytest.approx(target, rel=0.1)


def test_schroeder_curve_shape():
    rng = np.random.default_rng(3)
    h = np.exp(-20.0 * np.arange(2000) / FS) * rng.standard_normal(2000)
    curve = schroeder_curve(h)
    assert curve[0] == 1.0
    assert np.all(np.diff(curve) <= 1e-15)
    assert curve[-1] >= 0


def test_critical_distance_desk_room():
    # 0.057 * sqrt(50.625 / 0.2) = 0.90687...
    assert critical_distance(desk_scenario()) == pytest.approx(0.9069, abs=0.001)
    with pytest.raises(DomainError):
        critical_distance(desk_scenario(t60=0.0))


def test_mic_positions_layout():
    geom = ArrayGeometry(center_position=(2.0, 2.0, 1.0), d1=0.15, d2=0.20)
    mics = geom.mic_positions()
    assert np.allclose(mics[1], [2.0, 2.0, 1.0])
    assert np.linalg.norm(mics[0] - mics[1]) == pytest.approx(0.15)
    assert np.linalg.norm(mics[2] - mics[1]) == pytest.approx(0.20)
    assert np.allclose(mics[0], [1.85, 2.0, 1.0])
    assert np.allclose(mics[2], [2.20, 2.0, 1.0])


def test_source_position_angles():
    geom = ArrayGeometry(center_position=(2.25, 2.25, 1.2), d1=0.1, d2=0.1)
    scen = desk_scenario()
    sig = np.ones(8)
    broadside = source_position(scen, geom, SourceSpec(0.0, 1.0, sig))
    assert np.dot(broadside - np.array(geom.center_position), geom.orientation) == pytest.approx(0.0, abs=1e-12)
    assert np.linalg.norm(broadside - np.array(geom.center_position)) == pytest.approx(1.0)
    endfire = source_position(scen, geom, SourceSpec(90.0, 1.0, sig))
    assert np.allclose(endfire, np.array(geom.center_position) + np.array(geom.orientation))


def test_synthesis_total_is_exact_component_sum():
    rng = np.random.default_rng(11)
    specs = (
        SourceSpec(20.0, 1.0, rng.standard_normal(4000)),
        SourceSpec(-20.0, 1.0, rng.standard_normal(4000)),
    )
    scen = desk_scenario(sources=specs)
    geom = ArrayGeometry(center_position=(2.25, 2.25, 1.2), d1=0.15, d2=0.20)
    mic = synthesize(scen, geom)
    assert mic.total.shape[0] == 3
    assert mic.per_source_components.shape[:2] == (2, 3)
    assert np.array_equal(mic.total, mic.per_source_components.sum(axis=0))


def test_rir_cache_reuses_shared_microphones():
    rng = np.random.default_rng(5)
    specs = (SourceSpec(20.0, 1.0, rng.standard_normal(100)),
             SourceSpec(-20.0, 1.0, rng.standard_normal(100)))
    scen = desk_scenario(sources=specs)
    cache = {}
    g1 = ArrayGeometry(center_position=(2.25, 2.25, 1.2), d1=0.15, d2=0.20)
    set1 = generate_rir_set(scen, g1, cache=cache)
    n_after_first = len(cache)
    # moving only the right mic should re-compute only its two responses
    g2 = ArrayGeometry(center_position=(2.25, 2.25, 1.2), d1=0.15, d2=0.30)
    set2 = generate_rir_set(scen, g2, cache=cache)
    assert len(cache) == n_after_first + 2
    assert np.array_equal(set1.rirs[:, :2], set2.rirs[:, :2])
