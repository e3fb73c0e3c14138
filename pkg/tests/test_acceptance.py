"""End-to-end acceptance checks for the transmitter and link simulator.

Each test prints one verdict line and then asserts. Two checks document
known gaps between this implementation's measured behavior and the quoted
targets and currently fail on purpose rather than hide the mismatch:

* the 99% containment bandwidth of the 38 ps launch pulse measures about
  14.1 GHz (the hyperbolic-secant closed form agrees), not 8.8 GHz;
* the reported 75-span OSNR under the default average-power definition is
  about 19.3 dB, not 28 dB; a peak-power, single-quadrature reading would
  land near the quoted figure, so the gap is one of definitions.

See the README for the full analysis of both.
"""

from __future__ import annotations

import math

import numpy as np
import pytest
from scipy.special import gamma as gamma_fn

from solitonlink.config import ScenarioConfig, default_config
from solitonlink.fiber import (
    EdfaParams,
    FiberParams,
    StepControl,
    dispersion_length_km,
    fundamental_soliton,
    osnr_estimate,
    propagate_link,
    soliton_power,
    ssfm_span,
)
from solitonlink.harness import (
    _assemble_segment,
    _launch,
    budget_report,
    plan_segments,
    run_scenario,
    summarize,
)
from solitonlink.receiver import (
    NormalizationScales,
    NormalizedField,
    channel_compensate,
    extract_pulse,
    find_eigenvalue,
    zs_scatter,
)
from solitonlink.selftest import run_selftest
from solitonlink.signal import ComplexEnvelope, make_grid, peak_power, power_bandwidth
from solitonlink.transmitter import calibrate_drive, timing_solve

RATE = 256e9
T0 = 38e-12


def verdict(label: str, ok: bool, detail: str) -> None:
    print(f"[acceptance] {label}: {'PASS' if ok else 'FAIL'} ({detail})")
    assert ok, f"{label}: {detail}"


def sech_field(amplitude: float, half_width: float = 25.0,
               dtau: float = 0.004) -> NormalizedField:
    n = int(round(2 * half_width / dtau))
    tau = -half_width + dtau * np.arange(n)
    return NormalizedField(q=amplitude / np.cosh(tau), dtau=dtau, tau0=-half_width)


def rms_width(env: ComplexEnvelope) -> float:
    p = np.abs(env.samples) ** 2
    t = env.grid.times
    c = np.sum(t * p) / np.sum(p)
    return float(np.sqrt(np.sum((t - c) ** 2 * p) / np.sum(p)))


def test_budget_lands_every_channel_on_target():
    report, check = budget_report(default_config())
    finals = report.final_powers_dbm
    ok = (
        len(finals) == 4
        and all(abs(p - (-20.6)) <= 0.05 for p in finals)
        and check.limit_dbm == 16.0
        and abs(check.margin_db) <= 0.05
        and check.passed
    )
    verdict(
        "per-channel launch power and input power limit",
        ok,
        f"finals {[f'{p:.3f}' for p in finals]} dBm, "
        f"input-limit margin {check.margin_db:+.4f} dB",
    )


def test_launch_pulse_bandwidth_matches_quoted_value():
    grid = make_grid(65536 / RATE, RATE)
    env = fundamental_soliton(grid, FiberParams(), t0=T0)
    measured = power_bandwidth(env, 0.99)
    closed = 2.0 * math.atanh(0.99) / (math.pi**2 * T0)
    ok = abs(measured - 8.8e9) <= 0.2e9
    verdict(
        "99% containment bandwidth of the 38 ps pulse vs 8.8 GHz quote",
        ok,
        f"measured {measured / 1e9:.4f} GHz; hyperbolic-secant closed form "
        f"gives {closed / 1e9:.4f} GHz, so the quoted 8.8 GHz does not match "
        f"a 99% power containment of this pulse under any grid refinement",
    )


def test_scattering_agrees_with_the_gamma_function_oracle():
    def a_closed(amplitude: float, zeta: complex) -> complex:
        s = 0.5 - 1j * zeta
        return gamma_fn(s) ** 2 / (gamma_fn(s + amplitude) * gamma_fn(s - amplitude))

    worst_a = 0.0
    worst_eig = 0.0
    for amp in (0.8, 1.0, 1.4):
        nf = sech_field(amp)
        for z in np.linspace(-2.0, 2.0, 10):
            pt = zs_scatter(nf, complex(z))
            worst_a = max(worst_a, abs(pt.a - a_closed(amp, complex(z))))
        res = find_eigenvalue(nf)
        worst_eig = max(worst_eig, abs(res.point.zeta - 1j * (amp - 0.5)))
    ok = worst_a < 1e-6 and worst_eig < 1e-5
    verdict(
        "scattering coefficients against the closed form",
        ok,
        f"worst |a - closed form| {worst_a:.2e} (tol 1e-6), "
        f"worst eigenvalue error {worst_eig:.2e} (tol 1e-5)",
    )


def test_split_step_engine_reproduces_known_solutions():
    # dispersion-only pulse against the analytic spreading formula
    lin = FiberParams(alpha_db_per_km=0.0, gamma_per_w_km=0.0)
    grid = make_grid(8e-9, RATE)
    tc = 4e-9
    a0 = np.exp(-0.5 * ((grid.times - tc) / T0) ** 2).astype(complex)
    z_km = 500.0
    out = ssfm_span(ComplexEnvelope(grid, a0), lin, length_km=z_km)
    m = T0**2 - 1j * lin.beta2_s2_per_m * z_km * 1e3
    closed = T0 / np.sqrt(m) * np.exp(-0.5 * (grid.times - tc) ** 2 / m)
    lin_err = float(np.max(np.abs(out.samples - closed)) / np.max(np.abs(closed)))

    # balanced pulse shape held over twenty characteristic lengths
    fp = FiberParams(alpha_db_per_km=0.0)
    grid2 = make_grid(4e-9, RATE)
    sol0 = fundamental_soliton(grid2, fp, center=2e-9)
    sol = ssfm_span(
        sol0, fp, step=StepControl(mode="fixed", dz_km=1.0),
        length_km=20 * dispersion_length_km(fp, T0),
    )
    peak_drift = abs(peak_power(sol) / peak_power(sol0) - 1)
    width_drift = abs(rms_width(sol) / rms_width(sol0) - 1)

    # second-order convergence: each step halving cuts the error >= 4x
    grid3 = make_grid(12e-9, RATE)
    strong = fundamental_soliton(
        grid3, fp, center=6e-9, peak_power_w=soliton_power(fp, T0) * 1.2**2
    )

    def field_at(dz: float) -> np.ndarray:
        return ssfm_span(
            strong, fp, step=StepControl(mode="fixed", dz_km=dz), length_km=100.0
        ).samples

    ref = field_at(0.125)
    errs = {}
    for dz in (4.0, 2.0, 1.0):
        f = field_at(dz)
        errs[dz] = float(
            np.sqrt(np.sum(np.abs(f - ref) ** 2) / np.sum(np.abs(ref) ** 2))
        )
    ratios = (errs[4.0] / errs[2.0], errs[2.0] / errs[1.0])

    ok = (
        lin_err < 1e-3
        and peak_drift < 0.01
        and width_drift < 0.01
        and all(r >= 4.0 for r in ratios)
    )
    verdict(
        "split-step engine against closed forms and convergence order",
        ok,
        f"dispersion error {lin_err:.2e} (tol 1e-3), pulse drift over 7546 km "
        f"peak {peak_drift:.2e} / width {width_drift:.2e} (tol 1e-2), "
        f"halving ratios {ratios[0]:.3f}, {ratios[1]:.3f} (need >= 4)",
    )


def test_data_phase_is_distance_invariant_after_compensation():
    fp = FiberParams(alpha_db_per_km=0.0)
    grid = make_grid(12e-9, RATE)
    env0 = fundamental_soliton(grid, fp, center=6e-9)
    scales = NormalizationScales.from_fiber(fp, T0)
    phases = []
    for d in (0.0, 500.0, 1000.0, 1500.0):
        env = env0 if d == 0 else ssfm_span(
            env0, fp, step=StepControl(mode="fixed", dz_km=1.0), length_km=d
        )
        nf, _ = extract_pulse(env, 6e-9, 250e-12, 1000e-12, scales)
        res = find_eigenvalue(nf)
        comp = channel_compensate(res.point, d, scales)
        phases.append(float(np.angle(comp.b)))
    unwrapped = np.unwrap(np.array(phases))
    spread = float(unwrapped.max() - unwrapped.min())
    ok = spread < 1e-2
    verdict(
        "compensated data phase across 0/500/1000/1500 km",
        ok,
        f"spread {spread:.2e} rad (tol 1e-2)",
    )


def test_back_to_back_recovers_every_bit():
    cfg = ScenarioConfig(
        n_bits=4000, distances_km=(0.0,), seeds=(1,),
        mode="idealized", ase_enabled=False,
    )
    row = run_scenario(cfg)[0]
    bers = (row.ber_ch1, row.ber_ch2, row.ber_ch3, row.ber_ch4)
    ok = bers == (0.0, 0.0, 0.0, 0.0) and row.n_eigenvalue_failures == 0
    verdict(
        "noiseless 0 km transmit/receive at 4000 bits",
        ok,
        f"per-channel error rates {bers}, "
        f"{row.n_eigenvalue_failures} pulse-location failures",
    )


def _launch_noiseless_field():
    """Transmitter output boosted to the launch point without amplifier noise."""
    cfg = ScenarioConfig(
        n_bits=256, spacing=250e-12, window=1000e-12,
        distances_km=(50.0,), seeds=(1,), ase_enabled=False,
    )
    timing = timing_solve(cfg.spacing, cfg.window, delta_f_hz=cfg.plan.delta_f_hz)
    mzm = calibrate_drive(cfg.mzm, cfg.pulse, cfg.sample_rate)
    plan = plan_segments(cfg)[0]
    tx, _ = _assemble_segment(cfg, plan, timing, mzm, 0, 1, 0)
    env, rho0 = _launch(cfg, tx, 0, 1, 0)
    assert rho0 == 0.0
    return cfg, env


def test_osnr_drops_three_db_per_span_doubling():
    cfg, env = _launch_noiseless_field()
    ep = EdfaParams(
        gain_db=cfg.fiber.span_loss_db,
        noise_figure_db=cfg.noise_figure_db,
        ase_enabled=True,
    )
    rng = np.random.default_rng(123)
    state, rho, spans_done = env, 0.0, 0
    osnr_at = {}
    for target in (1, 2, 4, 8, 16):
        res = propagate_link(
            state, cfg.fiber, ep, target - spans_done,
            rng=rng, step=cfg.step, nyquist_guard=False,
        )
        state, spans_done = res.envelope, target
        rho += res.ase_psd_w_per_hz
        osnr_at[target] = osnr_estimate(state, rho, window=None)
    drops = [osnr_at[n] - osnr_at[2 * n] for n in (1, 2, 4, 8)]
    ok = all(abs(d - 3.01) <= 0.1 for d in drops)
    verdict(
        "OSNR cost of doubling the span count",
        ok,
        "drops " + ", ".join(f"{d:.3f}" for d in drops) + " dB (want 3.01 +- 0.1)",
    )


def test_reported_osnr_against_quoted_operating_point():
    cfg = ScenarioConfig(
        n_bits=256, spacing=250e-12, window=1000e-12,
        distances_km=(50.0,), seeds=(1,),
    )
    timing = timing_solve(cfg.spacing, cfg.window, delta_f_hz=cfg.plan.delta_f_hz)
    mzm = calibrate_drive(cfg.mzm, cfg.pulse, cfg.sample_rate)
    plan = plan_segments(cfg)[0]
    tx, _ = _assemble_segment(cfg, plan, timing, mzm, 0, 1, 0)
    env, rho0 = _launch(cfg, tx, 0, 1, 0)
    ep = EdfaParams(
        gain_db=cfg.fiber.span_loss_db,
        noise_figure_db=cfg.noise_figure_db,
        ase_enabled=True,
    )
    res = propagate_link(
        env, cfg.fiber, ep, 75,
        rng=np.random.default_rng(123), step=cfg.step, nyquist_guard=False,
    )
    osnr = osnr_estimate(res.envelope, rho0 + res.ase_psd_w_per_hz, window=None)
    ok = abs(osnr - 28.0) <= 3.0
    verdict(
        "reported 75-span OSNR vs the 28 dB quote",
        ok,
        f"measured {osnr:.2f} dB under the default definition (average signal "
        f"power over both noise quadratures in 12.5 GHz); the quote is only "
        f"reachable under a peak-power, single-quadrature reading, which is a "
        f"definition mismatch rather than a link-model error",
    )


@pytest.mark.slow
def test_reach_and_spacing_orderings_at_desk_scale():
    # wide spacing: reach past 1500 km and a soft-decision reach beyond the
    # hard-decision one
    cfg_wide = ScenarioConfig(
        n_bits=4000, spacing=250e-12, window=1000e-12,
        distances_km=(1500.0, 2000.0, 2500.0, 2900.0, 3250.0, 3500.0),
        seeds=(1, 2, 3),
    )
    wide = summarize(cfg_wide, run_scenario(cfg_wide, workers=4))
    hd, sd = wide.reach_km["hd"], wide.reach_km["sd"]

    # narrow spacing collides earlier: worse mean error rate at 1500 km
    mean_at_1500 = {}
    for dt_ps, tw_ps in ((100, 500), (250, 1000)):
        cfg = ScenarioConfig(
            n_bits=4000, spacing=dt_ps * 1e-12, window=tw_ps * 1e-12,
            distances_km=(1500.0,), seeds=tuple(range(1, 9)),
        )
        mean_at_1500[dt_ps] = summarize(
            cfg, run_scenario(cfg, workers=4)
        ).mean_ber[1500.0]

    # mid spacing: the error-rate curve ripples instead of rising smoothly
    cfg_mid = ScenarioConfig(
        n_bits=4000, spacing=150e-12, window=600e-12,
        distances_km=(1500.0, 1650.0, 1800.0, 1950.0, 2100.0, 2250.0, 2400.0, 2500.0),
        seeds=(1, 2, 3),
    )
    mid = summarize(cfg_mid, run_scenario(cfg_mid, workers=4))
    flagged = [d for d in mid.ripple_distances_km if 1500.0 <= d <= 2500.0]

    ok = (
        hd is not None and hd >= 1500.0
        and sd is not None and sd > hd
        and mean_at_1500[100] > mean_at_1500[250]
        and len(flagged) > 0
    )
    verdict(
        "reach and pulse-spacing behavior of the full link",
        ok,
        f"250 ps reach hd {hd} km / sd {sd} km; mean error rate at 1500 km "
        f"{mean_at_1500[100]:.3g} (100 ps) vs {mean_at_1500[250]:.3g} (250 ps); "
        f"150 ps ripple flagged at {flagged} km",
    )


def test_delay_network_solver_agrees_with_enumeration():
    def enumerate_feasible(spacing_ps: int, window_ps: int,
                           wg_ps=(300, 500)) -> list[tuple[int, int]]:
        found = []
        for wg in wg_ps:
            for awg in range(window_ps):
                pos = sorted(p % window_ps for p in (wg, wg + awg, 0, awg))
                gaps = [b - a for a, b in zip(pos, pos[1:])]
                gaps.append(window_ps - pos[-1] + pos[0])
                if sum(g == spacing_ps for g in gaps) >= 3 and min(gaps) >= spacing_ps:
                    found.append((wg, awg))
        return found

    results = []
    ok = True
    for spacing_ps, window_ps, want in (
        (250, 1000, (500, 250)),
        (150, 600, (300, 150)),
        (100, 500, (300, 100)),
    ):
        sol = timing_solve(spacing_ps * 1e-12, window_ps * 1e-12)
        got = (round(sol.tau_wg * 1e12), round(sol.tau_awg * 1e12))
        feasible = enumerate_feasible(spacing_ps, window_ps)
        results.append(f"{spacing_ps}/{window_ps} -> wg {got[0]} awg {got[1]}")
        ok = ok and got == want and got in feasible and sol.n_nominal_gaps >= 3
    verdict(
        "delay-network solver against brute-force enumeration",
        ok,
        "; ".join(results),
    )


def test_selftest_is_healthy_with_its_negative_control_armed():
    report = run_selftest(full=True)
    negatives = [r for r in report.results if r.expected_failure]
    ok = (
        report.all_ok
        and len(report.results) >= 12
        and len(negatives) == 1
        and not negatives[0].passed
    )
    verdict(
        "built-in oracle suite with armed negative control",
        ok,
        f"{len(report.results)} groups, all_ok {report.all_ok}, "
        f"negative control '{negatives[0].group if negatives else 'missing'}' "
        f"fails as designed: {not negatives[0].passed if negatives else False}",
    )
