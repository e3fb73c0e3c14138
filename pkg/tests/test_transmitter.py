"""Transmitter-side behavior: symbol mapping, drive calibration, the delay
lattice solver, and full four-channel assembly."""

from __future__ import annotations

import numpy as np
import pytest

from solitonlink.budget import transmitter_chain, watts_to_dbm
from solitonlink.signal import (
    ComplexEnvelope,
    SignalGrid,
    make_grid,
    peak_power,
    spectral_centroid,
)
from solitonlink.transmitter import (
    QPSK_POINTS,
    ChannelPlan,
    MzmParams,
    PulseParams,
    TimingError,
    TxError,
    assemble_tx,
    calibrate_drive,
    modulation_penalty_db,
    mzm_modulate,
    phase_noise,
    pilot_symbols,
    qpsk_demap,
    qpsk_map,
    soliton_drive,
    timing_solve,
)

RATE = 256e9


# ---------------------------------------------------------------------------
# symbols


def test_qpsk_map_all_four_points():
    bits = np.array([0, 0, 0, 1, 1, 0, 1, 1])
    s = qpsk_map(bits)
    r = np.sqrt(0.5)
    np.testing.assert_allclose(
        s, [r + 1j * r, -r + 1j * r, r - 1j * r, -r - 1j * r], atol=1e-12
    )
    np.testing.assert_allclose(np.abs(s), 1.0, atol=1e-12)


def test_qpsk_gray_adjacency():
    # walking the constellation by 90 degrees must flip exactly one bit
    angles = np.angle(QPSK_POINTS)
    order = np.argsort(angles)
    bits = qpsk_demap(QPSK_POINTS).reshape(-1, 2)
    for i in range(4):
        a, b = bits[order[i]], bits[order[(i + 1) % 4]]
        assert int(np.sum(a != b)) == 1


def test_qpsk_roundtrip_with_noise():
    rng = np.random.default_rng(3)
    bits = rng.integers(0, 2, size=400)
    s = qpsk_map(bits)
    noisy = s + 0.05 * (rng.standard_normal(200) + 1j * rng.standard_normal(200))
    np.testing.assert_array_equal(qpsk_demap(noisy), bits)


def test_pilot_symbols_deterministic_and_on_constellation():
    a = pilot_symbols(16)
    b = pilot_symbols(16)
    np.testing.assert_array_equal(a, b)
    assert a.shape == (16,)
    for x in a:
        assert np.min(np.abs(QPSK_POINTS - x)) < 1e-12
    # longer requests extend, they do not reshuffle
    np.testing.assert_array_equal(pilot_symbols(8), a[:8])


# ---------------------------------------------------------------------------
# drive and modulator


def test_calibrate_drive_hits_target_penalty(calibrated_mzm):
    assert calibrated_mzm.drive_gain == pytest.approx(1.8878120519, rel=1e-9)
    penalty = modulation_penalty_db(calibrated_mzm, PulseParams(), RATE)
    assert penalty == pytest.approx(13.5, abs=1e-6)


def test_calibrate_drive_unreachable_target():
    # a penalty this large would need a weaker drive than the bracket allows
    with pytest.raises(TxError):
        calibrate_drive(MzmParams(target_penalty_db=80.0), PulseParams(), RATE)


def test_mzm_requires_calibration():
    grid = SignalGrid(4096, RATE)
    v = np.zeros(4096)
    with pytest.raises(TxError):
        mzm_modulate(v, v, 1e-3, MzmParams(), grid)


def test_mzm_overdrive_is_an_error(calibrated_mzm):
    grid = SignalGrid(4096, RATE)
    sym = np.array([np.exp(1j * np.pi / 4)])
    vi, vq = soliton_drive(sym, grid, grid.duration, grid.duration / 2, PulseParams())
    hot = 1.5 * MzmParams(drive_gain=calibrated_mzm.drive_gain).vpi_v
    with pytest.raises(TxError):
        mzm_modulate(hot * vi / np.max(np.abs(vi)), vq, 1e-3, calibrated_mzm, grid)


def test_mzm_zero_drive_gives_dark_output(calibrated_mzm):
    grid = SignalGrid(1024, RATE)
    v = np.zeros(1024)
    env = mzm_modulate(v, v, 1e-3, calibrated_mzm, grid)
    assert peak_power(env) == 0.0


def test_soliton_drive_places_pulses_on_the_window_lattice():
    grid = make_grid(4e-9, RATE)
    pulse = PulseParams()
    syms = np.array([1.0, 1.0j, -1.0, -1.0j])
    vi, vq = soliton_drive(syms, grid, 1e-9, 0.5e-9, pulse)
    mag = np.abs(vi + 1j * vq)
    peaks = []
    for w in range(4):
        lo = w * 256
        peaks.append(lo + int(np.argmax(mag[lo:lo + 256])))
    centers = grid.times[np.array(peaks)]
    np.testing.assert_allclose(centers, 0.5e-9 + 1e-9 * np.arange(4), atol=grid.dt)
    # symbol phase lands on the drive pair
    assert vi[peaks[0]] == pytest.approx(pulse.drive_peak_v, rel=1e-6)
    assert vq[peaks[1]] == pytest.approx(pulse.drive_peak_v, rel=1e-6)


def test_soliton_drive_requires_commensurate_windows():
    grid = make_grid(4e-9, RATE)
    with pytest.raises(TxError):
        soliton_drive(np.ones(3), grid, 1.1e-9, 0.0, PulseParams())


def test_soliton_drive_requires_fine_sampling():
    coarse = SignalGrid(16, 4e9)  # dt = 250 ps, far above t0 / 8
    with pytest.raises(TxError):
        soliton_drive(np.ones(1), coarse, coarse.duration, 0.0, PulseParams())


# ---------------------------------------------------------------------------
# timing lattice


def enumerate_feasible_ps(spacing_ps: int, window_ps: int,
                          wg_ps=(300, 500)) -> list[tuple[int, int]]:
    """Brute force over the whole integer-ps lattice.

    Feasible means the four pulse positions show the requested pitch at
    least three times among their cyclic gaps and never sit closer than
    one pitch.
    """
    found = []
    for wg in wg_ps:
        for awg in range(window_ps):
            pos = sorted(
                p % window_ps for p in (wg, wg + awg, 0, awg)
            )
            gaps = [b - a for a, b in zip(pos, pos[1:])]
            gaps.append(window_ps - pos[-1] + pos[0])
            if sum(g == spacing_ps for g in gaps) >= 3 and min(gaps) >= spacing_ps:
                found.append((wg, awg))
    return found


@pytest.mark.parametrize(
    "spacing_ps,window_ps,expect_wg,expect_awg",
    [(250, 1000, 500, 250), (150, 600, 300, 150), (100, 500, 300, 100)],
)
def test_timing_solve_matches_enumeration(spacing_ps, window_ps, expect_wg, expect_awg):
    sol = timing_solve(spacing_ps * 1e-12, window_ps * 1e-12)
    wg = round(sol.tau_wg * 1e12)
    awg = round(sol.tau_awg * 1e12)
    assert (wg, awg) == (expect_wg, expect_awg)
    assert (wg, awg) in enumerate_feasible_ps(spacing_ps, window_ps)
    assert sol.n_nominal_gaps >= 3
    # the solver's reported geometry is self-consistent
    centers_ps = sorted(round(c * 1e12) % window_ps for c in sol.centers)
    gaps = [b - a for a, b in zip(centers_ps, centers_ps[1:])]
    gaps.append(window_ps - centers_ps[-1] + centers_ps[0])
    assert sum(g == spacing_ps for g in gaps) == sol.n_nominal_gaps
    # slack beyond the four pitch slots
    assert round(sol.down_time * 1e12) == window_ps - 4 * spacing_ps


def test_timing_solve_infeasible_names_nearest():
    with pytest.raises(TimingError) as err:
        timing_solve(240e-12, 1000e-12)
    assert "nearest workable spacing" in str(err.value)
    assert "250" in str(err.value)


def test_timing_solve_off_lattice_rejected():
    with pytest.raises(TimingError):
        timing_solve(250.4e-12, 1000e-12)
    with pytest.raises(TimingError):
        timing_solve(250e-12, 1000.2e-12)


# ---------------------------------------------------------------------------
# phase noise


def test_phase_noise_statistics():
    grid = make_grid(65536 / RATE, RATE)
    env = ComplexEnvelope(grid, np.ones(65536, dtype=complex))
    lw = 80e3
    out = phase_noise(env, lw, np.random.default_rng(9))
    phi = np.unwrap(np.angle(out.samples))
    assert phi[0] == pytest.approx(0.0, abs=1e-12)
    var = np.var(np.diff(phi))
    assert var == pytest.approx(2 * np.pi * lw * grid.dt, rel=0.05)
    # magnitude untouched
    np.testing.assert_allclose(np.abs(out.samples), 1.0, atol=1e-12)


def test_phase_noise_zero_linewidth_and_validation():
    grid = make_grid(1e-9, RATE)
    env = ComplexEnvelope(grid, np.ones(256, dtype=complex))
    out = phase_noise(env, 0.0, np.random.default_rng(1))
    np.testing.assert_array_equal(out.samples, env.samples)
    with pytest.raises(TxError):
        phase_noise(env, -1.0, np.random.default_rng(1))


def test_phase_noise_deterministic_per_seed():
    grid = make_grid(1e-9, RATE)
    env = ComplexEnvelope(grid, np.ones(256, dtype=complex))
    a = phase_noise(env, 80e3, np.random.default_rng(4))
    b = phase_noise(env, 80e3, np.random.default_rng(4))
    np.testing.assert_array_equal(a.samples, b.samples)


# ---------------------------------------------------------------------------
# channel plan and assembly


def test_channel_plan_validation():
    with pytest.raises(TxError):
        ChannelPlan(delta_f_hz=(-15e9, -5e9, 5e9))
    with pytest.raises(TxError):
        ChannelPlan(delta_f_hz=(-15e9, -5e9, 5e9, 5e9))


def test_mzm_params_validation():
    with pytest.raises(TxError):
        MzmParams(insertion_loss_db=4.5, target_penalty_db=4.0)


def _assembled(calibrated_mzm, mode="hardware-faithful", n_windows=12):
    timing = timing_solve(250e-12, 1000e-12)
    grid = make_grid(n_windows * 1e-9, RATE)
    rng = np.random.default_rng(21)
    n_streams = 2 if mode == "hardware-faithful" else 4
    streams = tuple(
        qpsk_map(rng.integers(0, 2, size=2 * n_windows)) for _ in range(n_streams)
    )
    out = assemble_tx(
        grid, streams, timing, ChannelPlan(), PulseParams(), calibrated_mzm,
        transmitter_chain(), mode=mode,
    )
    return out, streams


def test_assemble_tx_hardware_mode_shares_streams(calibrated_mzm):
    out, streams = _assembled(calibrated_mzm)
    assert out.mode == "hardware-faithful"
    assert out.n_windows == 12
    assert len(out.channels) == 4
    np.testing.assert_array_equal(out.channels[0].symbols, streams[0])
    np.testing.assert_array_equal(out.channels[2].symbols, streams[0])
    np.testing.assert_array_equal(out.channels[1].symbols, streams[1])
    np.testing.assert_array_equal(out.channels[3].symbols, streams[1])


def test_assemble_tx_idealized_mode_independent_streams(calibrated_mzm):
    out, streams = _assembled(calibrated_mzm, mode="idealized")
    for ch, s in zip(out.channels, streams):
        np.testing.assert_array_equal(ch.symbols, s)


def test_assemble_tx_centers_follow_the_lattice(calibrated_mzm):
    out, _ = _assembled(calibrated_mzm)
    timing = out.timing
    duration = 12e-9
    for k, ch in enumerate(out.channels):
        want = (timing.centers[k] + 1e-9 * np.arange(12)) % duration
        np.testing.assert_allclose(sorted(ch.centers), sorted(want), atol=1e-15)


def test_assemble_tx_peaks_are_equalized_near_ledger(calibrated_mzm):
    out, _ = _assembled(calibrated_mzm)
    peaks = np.array([ch.peak_dbm for ch in out.channels])
    # the ledger says -20.6 dBm per channel; the waveform peaks land close
    # (shaped pulses, electrical bandwidth, spectral filters all included)
    assert np.all(np.abs(peaks + 20.85) < 0.3)
    assert peaks.max() - peaks.min() < 0.1
    got = watts_to_dbm(peak_power(out.envelope))
    assert abs(got - peaks.max()) < 0.2
    # four symmetric lines leave the combined spectrum centered
    assert abs(spectral_centroid(out.envelope)) < 1.5e9


def test_assemble_tx_stream_count_must_match_mode(calibrated_mzm):
    timing = timing_solve(250e-12, 1000e-12)
    grid = make_grid(4e-9, RATE)
    syms = qpsk_map(np.zeros(8, dtype=int))
    with pytest.raises(TxError):
        assemble_tx(
            grid, (syms,), timing, ChannelPlan(), PulseParams(), calibrated_mzm,
            transmitter_chain(), mode="hardware-faithful",
        )
    with pytest.raises(TxError):
        assemble_tx(
            grid, (syms, syms, syms), timing, ChannelPlan(), PulseParams(),
            calibrated_mzm, transmitter_chain(), mode="idealized",
        )


def test_assemble_tx_rejects_unknown_mode(calibrated_mzm):
    timing = timing_solve(250e-12, 1000e-12)
    grid = make_grid(4e-9, RATE)
    syms = qpsk_map(np.zeros(8, dtype=int))
    with pytest.raises(TxError):
        assemble_tx(
            grid, (syms, syms), timing, ChannelPlan(), PulseParams(),
            calibrated_mzm, transmitter_chain(), mode="perfect",
        )
