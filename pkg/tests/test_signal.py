"""Grid and envelope primitives: exact conventions, checked against closed
forms computed independently in each test."""

from __future__ import annotations

import numpy as np
import pytest
from scipy.special import erfinv

from solitonlink.signal import (
    AliasingError,
    ComplexEnvelope,
    GridError,
    SignalGrid,
    average_power,
    butterworth_filter,
    delay,
    frequency_shift,
    make_grid,
    peak_power,
    power_bandwidth,
    spectral_centroid,
)

RATE = 256e9


def tone(grid: SignalGrid, f_hz: float, amp: float = 1.0) -> ComplexEnvelope:
    return ComplexEnvelope(grid, amp * np.exp(2j * np.pi * f_hz * grid.times))


def sech_env(grid: SignalGrid, t0: float, center: float) -> ComplexEnvelope:
    x = (grid.times - center) / t0
    return ComplexEnvelope(grid, 1.0 / np.cosh(x))


# ---------------------------------------------------------------------------
# grids


def test_make_grid_basics():
    g = make_grid(1e-9, RATE)
    assert g.n_samples == 256
    assert g.dt == pytest.approx(1.0 / RATE)
    assert g.duration == pytest.approx(1e-9)
    assert g.times[0] == 0.0
    np.testing.assert_allclose(g.frequencies, np.fft.fftfreq(256, 1.0 / RATE))


def test_make_grid_rejects_non_integer_sample_count():
    with pytest.raises(GridError):
        make_grid(1.0003e-9, RATE)


def test_make_grid_rejects_odd_sample_count():
    with pytest.raises(GridError):
        make_grid(257.0 / RATE, RATE)


def test_signal_grid_validation():
    with pytest.raises(GridError):
        SignalGrid(3, RATE)
    with pytest.raises(GridError):
        SignalGrid(0, RATE)
    with pytest.raises(GridError):
        SignalGrid(256, -1.0)


# ---------------------------------------------------------------------------
# envelopes


def test_envelope_shape_must_match_grid():
    g = make_grid(1e-9, RATE)
    with pytest.raises(GridError):
        ComplexEnvelope(g, np.zeros(255, dtype=complex))


def test_envelope_samples_are_defensive_and_frozen():
    g = make_grid(1e-9, RATE)
    src = np.ones(256, dtype=complex)
    env = ComplexEnvelope(g, src)
    src[0] = 99.0
    assert env.samples[0] == 1.0
    with pytest.raises(ValueError):
        env.samples[0] = 2.0


def test_energy_matches_parseval():
    g = make_grid(2e-9, RATE)
    rng = np.random.default_rng(5)
    env = ComplexEnvelope(g, rng.standard_normal(512) + 1j * rng.standard_normal(512))
    spectral = np.sum(np.abs(env.spectrum()) ** 2) / g.n_samples * g.dt
    assert env.energy() == pytest.approx(spectral, rel=1e-12)


def test_average_power_window_selects_samples():
    g = make_grid(1e-9, RATE)
    p = np.zeros(256)
    p[:128] = 4.0  # 2 W field over the first half
    env = ComplexEnvelope(g, np.sqrt(p).astype(complex))
    assert average_power(env) == pytest.approx(2.0)
    assert average_power(env, window=(0.0, 0.5e-9)) == pytest.approx(4.0)
    assert average_power(env, window=(0.5e-9, 1e-9)) == pytest.approx(0.0)
    assert average_power(env, window=(0.0, g.duration)) == pytest.approx(2.0)


def test_average_power_window_validation():
    g = make_grid(1e-9, RATE)
    env = tone(g, 0.0)
    with pytest.raises(ValueError):
        average_power(env, window=(-1e-12, 0.5e-9))
    with pytest.raises(ValueError):
        average_power(env, window=(0.0, 2e-9))
    with pytest.raises(ValueError):
        average_power(env, window=(0.5e-9, 0.5e-9))


def test_peak_power():
    g = make_grid(1e-9, RATE)
    s = np.zeros(256, dtype=complex)
    s[17] = 3.0 - 4.0j
    assert peak_power(ComplexEnvelope(g, s)) == pytest.approx(25.0)


# ---------------------------------------------------------------------------
# delay


def test_circular_delay_integer_samples_is_a_roll():
    g = make_grid(1e-9, RATE)
    rng = np.random.default_rng(11)
    env = ComplexEnvelope(g, rng.standard_normal(256) + 1j * rng.standard_normal(256))
    out = delay(env, 10 * g.dt, mode="circular")
    np.testing.assert_allclose(out.samples, np.roll(env.samples, 10), atol=1e-12)


def test_circular_delay_wraps_and_preserves_energy():
    g = make_grid(2e-9, RATE)
    env = sech_env(g, 20e-12, center=1.9e-9)  # pulse near the segment end
    out = delay(env, 0.3e-9, mode="circular")
    assert out.energy() == pytest.approx(env.energy(), rel=1e-9)
    # the peak must have wrapped to 0.2 ns
    t_peak = g.times[np.argmax(np.abs(out.samples))]
    assert t_peak == pytest.approx(0.2e-9, abs=2 * g.dt)


def test_circular_delay_fractional_moves_centroid():
    g = make_grid(2e-9, RATE)
    env = sech_env(g, 30e-12, center=1.0e-9)
    tau = 2.5 * g.dt
    out = delay(env, tau, mode="circular")
    t = g.times
    c0 = np.sum(t * np.abs(env.samples) ** 2) / np.sum(np.abs(env.samples) ** 2)
    c1 = np.sum(t * np.abs(out.samples) ** 2) / np.sum(np.abs(out.samples) ** 2)
    assert c1 - c0 == pytest.approx(tau, rel=1e-6)


def test_negative_circular_delay_advances():
    g = make_grid(1e-9, RATE)
    env = sech_env(g, 20e-12, center=0.5e-9)
    out = delay(env, -5 * g.dt, mode="circular")
    np.testing.assert_allclose(out.samples, np.roll(env.samples, -5), atol=1e-12)


def test_zero_fill_delay_loses_tail_and_zeroes_head():
    g = make_grid(2e-9, RATE)
    env = sech_env(g, 20e-12, center=1.8e-9)
    out = delay(env, 0.5e-9, mode="zero")
    # pulse center would land at 2.3 ns, off the segment: nearly all energy gone
    assert out.energy() < 0.05 * env.energy()
    # and the head is zero filled, not wrapped
    head = np.max(np.abs(out.samples[:64]))
    assert head < 1e-6 * np.max(np.abs(env.samples))


def test_zero_fill_delay_range_and_mode_validation():
    g = make_grid(1e-9, RATE)
    env = tone(g, 0.0)
    with pytest.raises(ValueError):
        delay(env, -1e-12, mode="zero")
    with pytest.raises(ValueError):
        delay(env, 2e-9, mode="zero")
    with pytest.raises(ValueError):
        delay(env, 1e-12, mode="sideways")


# ---------------------------------------------------------------------------
# frequency shift


def test_frequency_shift_moves_tone_exactly():
    g = make_grid(1e-9, RATE)
    env = tone(g, 5e9)
    out = frequency_shift(env, 10e9)
    np.testing.assert_allclose(out.samples, tone(g, 15e9).samples, atol=1e-12)
    assert out.center_offset == pytest.approx(10e9)


def test_frequency_shift_accumulates_center_offset():
    g = make_grid(1e-9, RATE)
    out = frequency_shift(frequency_shift(tone(g, 0.0), 15e9), -20e9)
    assert out.center_offset == pytest.approx(-5e9)


def test_frequency_shift_guards_nyquist():
    g = make_grid(1e-9, RATE)
    env = tone(g, 0.0)
    with pytest.raises(AliasingError):
        frequency_shift(env, 128e9)
    # in range alone, but not once the occupied band is accounted for
    frequency_shift(env, 120e9)
    with pytest.raises(AliasingError):
        frequency_shift(env, 120e9, occupied_bandwidth=20e9)


def test_frequency_shift_requires_commensurate_df():
    g = make_grid(1e-9, RATE)
    with pytest.raises(GridError):
        frequency_shift(tone(g, 0.0), 0.5e9)  # half a cycle over the segment


# ---------------------------------------------------------------------------
# bandwidth measures


def test_power_bandwidth_sech_closed_form():
    # a sech(t/T) field has power spectrum sech^2(pi^2 T f); the fraction
    # inside +-F is tanh(pi^2 T F), so the 99% full width is
    # 2 * atanh(0.99) / (pi^2 T)
    t0 = 38e-12
    g = make_grid(16e-9, RATE)
    env = sech_env(g, t0, center=8e-9)
    want = 2.0 * np.arctanh(0.99) / (np.pi**2 * t0)
    assert power_bandwidth(env, 0.99) == pytest.approx(want, rel=0.01)


def test_power_bandwidth_gaussian_closed_form():
    # field exp(-t^2 / (2 T^2)) has power spectrum exp(-4 pi^2 T^2 f^2);
    # solving erf for the 99% point gives a full width erfinv(0.99)/(pi T)
    t = 25e-12
    g = make_grid(8e-9, RATE)
    x = (g.times - 4e-9) / t
    env = ComplexEnvelope(g, np.exp(-0.5 * x * x))
    want = float(erfinv(0.99)) / (np.pi * t)
    assert power_bandwidth(env, 0.99) == pytest.approx(want, rel=0.01)


def test_power_bandwidth_grows_with_fraction():
    g = make_grid(8e-9, RATE)
    env = sech_env(g, 38e-12, center=4e-9)
    widths = [power_bandwidth(env, f) for f in (0.5, 0.9, 0.99)]
    assert widths[0] < widths[1] < widths[2]


def test_power_bandwidth_validation():
    g = make_grid(1e-9, RATE)
    with pytest.raises(ValueError):
        power_bandwidth(tone(g, 0.0), 1.0)
    with pytest.raises(ValueError):
        power_bandwidth(ComplexEnvelope(g, np.zeros(256, dtype=complex)), 0.99)


# ---------------------------------------------------------------------------
# filtering


def test_butterworth_magnitude_matches_closed_form():
    g = make_grid(2e-9, RATE)  # 0.5 GHz bins so every test tone is on-bin
    bw, order = 9e9, 4
    for f in (0.0, 4.5e9, 10e9, 20e9, 30e9):
        out = butterworth_filter(tone(g, f), bw, order)
        got = np.max(np.abs(out.samples))
        x = 2.0 * f / bw
        assert got == pytest.approx(1.0 / np.sqrt(1.0 + x ** (2 * order)), rel=1e-9)


def test_butterworth_half_width_point_is_3db():
    g = make_grid(2e-9, RATE)
    out = butterworth_filter(tone(g, 4.5e9), 9e9, 4)
    drop = -20.0 * np.log10(np.max(np.abs(out.samples)))
    assert drop == pytest.approx(10.0 * np.log10(2.0), abs=1e-9)


def test_butterworth_center_and_insertion_loss():
    g = make_grid(1e-9, RATE)
    out = butterworth_filter(tone(g, 15e9), 9e9, 4, center=15e9, insertion_loss_db=2.0)
    assert np.max(np.abs(out.samples)) == pytest.approx(10 ** (-2.0 / 20.0), rel=1e-9)
    # zero phase: a tone keeps its phase through the passband center
    assert np.angle(out.samples[0]) == pytest.approx(0.0, abs=1e-9)


def test_butterworth_validation():
    g = make_grid(1e-9, RATE)
    env = tone(g, 0.0)
    with pytest.raises(ValueError):
        butterworth_filter(env, 0.0, 4)
    with pytest.raises(ValueError):
        butterworth_filter(env, 9e9, 0)


def test_spectral_centroid_of_tone():
    g = make_grid(1e-9, RATE)
    assert spectral_centroid(tone(g, 7e9)) == pytest.approx(7e9)
    with pytest.raises(ValueError):
        spectral_centroid(ComplexEnvelope(g, np.zeros(256, dtype=complex)))
