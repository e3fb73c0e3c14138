"""Sweep orchestration: bits in, result rows and summaries out.

One scenario point (one seed) is a single continuous physical run: the
transmitter assembles a periodic segment, a launch amplifier lifts it to the
configured peak, and the link is propagated span by span to the farthest
requested distance with the intermediate distances tapped along the way.
Tapping costs nothing physically (the field at 1000 km is the field at
500 km continued) and keeps the sweep linear in the largest distance.

Segments are periodic worlds: the symbol train fills the whole grid with no
guard bands, and all delays and frequency shifts wrap.  The window planner
pads the requested window count with throwaway filler windows until the
segment is commensurate with the sample clock and every channel offset, and
until the FFT length is products of small primes; fillers carry random data
and are never scored.

Randomness is organized as named substreams of (master_seed, seed, segment):
data bits, transmitter phase noise, launch amplifier, and link amplifiers
draw from independent generators, so enabling one noise source never shifts
another's draws.
"""

from __future__ import annotations

import io
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from .budget import (
    cascade,
    check_input_power_limit,
    transmitter_chain,
    watts_to_dbm,
)
from .config import ConfigError, ScenarioConfig
from .fiber import (
    EdfaParams,
    assert_band_limited,
    edfa_amplify,
    group_delay_shift,
    osnr_estimate,
    propagate_link,
)
from .receiver import (
    NormalizationScales,
    decide_and_count,
    demux,
    receive_channel,
)
from .signal import ComplexEnvelope, SignalGrid, make_grid
from .transmitter import (
    TimingSolution,
    assemble_tx,
    calibrate_drive,
    pilot_symbols,
    qpsk_demap,
    qpsk_map,
    timing_solve,
)

# substream labels for SeedSequence spawning
_STREAM_BITS = 0
_STREAM_PHASE = 1
_STREAM_LAUNCH = 2
_STREAM_LINK = 3
_STREAM_FILLER = 4


@dataclass(frozen=True)
class ResultRow:
    distance_km: float
    dt_ps: float
    seed: int
    ber_ch1: float
    ber_ch2: float
    ber_ch3: float
    ber_ch4: float
    ber_avg: float
    osnr_db: float
    n_eigenvalue_failures: int


RESULT_COLUMNS = (
    "distance_km", "dt_ps", "seed", "ber_ch1", "ber_ch2", "ber_ch3",
    "ber_ch4", "ber_avg", "osnr_db", "n_eigenvalue_failures",
)


def _fmt(x) -> str:
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return f"{x:.9g}"


def rows_to_csv(rows: list[ResultRow]) -> str:
    buf = io.StringIO()
    buf.write(",".join(RESULT_COLUMNS) + "\n")
    for r in rows:
        buf.write(",".join(_fmt(getattr(r, c)) for c in RESULT_COLUMNS) + "\n")
    return buf.getvalue()


# ---------------------------------------------------------------------------
# window planning and segmentation

def _is_smooth(n: int) -> bool:
    for p in (2, 3, 5, 7):
        while n % p == 0:
            n //= p
    return n == 1


def _window_count_ok(n_windows: int, cfg: ScenarioConfig) -> bool:
    samples = n_windows * cfg.window * cfg.sample_rate
    n_int = round(samples)
    if abs(samples - n_int) > 1e-6 or n_int % 2 != 0:
        return False
    for f in cfg.plan.delta_f_hz:
        cycles = f * n_windows * cfg.window
        if abs(cycles - round(cycles)) > 1e-6:
            return False
    return True


@dataclass(frozen=True)
class SegmentPlan:
    """Window layout of one self-contained segment."""

    n_pilot: int
    n_data: int
    n_filler: int
    n_samples: int

    @property
    def n_windows(self) -> int:
        return self.n_pilot + self.n_data + self.n_filler


def plan_segments(cfg: ScenarioConfig) -> list[SegmentPlan]:
    """Split the run into segments that fit the sample-count cap.

    Each segment independently satisfies the commensurability rules; data
    windows are spread as evenly as possible.  Raises when even a single
    data window cannot be made to fit.
    """
    total_data = cfg.n_data_windows
    per_seg_cap = cfg.max_segment_samples
    n_segments = 1
    while True:
        data_hi = math.ceil(total_data / n_segments)
        plan = _plan_one_segment(cfg, data_hi)
        if plan is None:
            raise ConfigError(
                "no commensurate window count exists for this scenario; "
                "adjust tw_ps, the channel plan, or the sample rate"
            )
        if plan.n_samples <= per_seg_cap:
            break
        n_segments += 1
        if data_hi <= 1:
            raise ConfigError(
                f"segment cap {per_seg_cap} samples cannot hold even one "
                "timing window with its pilots"
            )
    out = []
    base = total_data // n_segments
    extra = total_data % n_segments
    for k in range(n_segments):
        n_data = base + (1 if k < extra else 0)
        if n_data == 0:
            continue
        seg = _plan_one_segment(cfg, n_data)
        if seg is None or seg.n_samples > per_seg_cap:
            raise ConfigError("segment planning failed to meet the sample cap")
        out.append(seg)
    return out


def _plan_one_segment(cfg: ScenarioConfig, n_data: int) -> SegmentPlan | None:
    needed = cfg.rx.pilot_len + n_data
    fallback = None
    for n_w in range(needed, needed + 4097):
        if not _window_count_ok(n_w, cfg):
            continue
        n_samples = round(n_w * cfg.window * cfg.sample_rate)
        if fallback is None:
            fallback = SegmentPlan(cfg.rx.pilot_len, n_data, n_w - needed, n_samples)
        if _is_smooth(n_samples):
            return SegmentPlan(cfg.rx.pilot_len, n_data, n_w - needed, n_samples)
    return fallback


# ---------------------------------------------------------------------------
# per-seed execution

def _rng(master_seed: int, seed: int, segment: int, stream: int) -> np.random.Generator:
    return np.random.default_rng(
        np.random.SeedSequence((master_seed, seed, segment, stream))
    )


@dataclass(frozen=True)
class SegmentTruth:
    """What was sent in one segment, for scoring and windowing."""

    data_bits: tuple[np.ndarray, ...]   # per channel, the scored bits
    plan: SegmentPlan


def _build_streams(
    cfg: ScenarioConfig,
    plan: SegmentPlan,
    master_seed: int,
    seed: int,
    segment: int,
) -> tuple[tuple[np.ndarray, ...], SegmentTruth]:
    """Symbol streams per modulator: pilot prefix, data, filler tail."""
    pilots = pilot_symbols(plan.n_pilot)
    bit_rng = _rng(master_seed, seed, segment, _STREAM_BITS)
    fill_rng = _rng(master_seed, seed, segment, _STREAM_FILLER)
    n_streams = 2 if cfg.mode == "hardware-faithful" else 4
    streams = []
    stream_bits = []
    for _ in range(n_streams):
        bits = bit_rng.integers(0, 2, size=2 * plan.n_data).astype(np.uint8)
        filler = qpsk_map(
            fill_rng.integers(0, 2, size=2 * plan.n_filler).astype(np.uint8)
        ) if plan.n_filler else np.empty(0, dtype=np.complex128)
        streams.append(np.concatenate([pilots, qpsk_map(bits), filler]))
        stream_bits.append(bits)
    if cfg.mode == "hardware-faithful":
        per_channel = (stream_bits[0], stream_bits[1], stream_bits[0], stream_bits[1])
    else:
        per_channel = tuple(stream_bits)
    return tuple(streams), SegmentTruth(data_bits=per_channel, plan=plan)


def _assemble_segment(
    cfg: ScenarioConfig,
    plan: SegmentPlan,
    timing: TimingSolution,
    mzm,
    master_seed: int,
    seed: int,
    segment: int,
):
    grid = SignalGrid(plan.n_samples, cfg.sample_rate)
    streams, truth = _build_streams(cfg, plan, master_seed, seed, segment)
    tx = assemble_tx(
        grid,
        streams,
        timing,
        cfg.plan,
        cfg.pulse,
        mzm,
        transmitter_chain(
            comb_power_dbm=cfg.plan.comb_power_dbm,
            modulation_penalty_db=cfg.mzm.target_penalty_db,
        ),
        mode=cfg.mode,
        rng=_rng(master_seed, seed, segment, _STREAM_PHASE),
        phase_noise_enabled=cfg.phase_noise_enabled,
    )
    return tx, truth


def _launch(cfg: ScenarioConfig, tx, master_seed: int, seed: int, segment: int):
    """Amplify the assembled field so channel peaks hit the launch target."""
    assert_band_limited(tx.envelope)
    measured_peak = max(c.peak_dbm for c in tx.channels)
    gain = cfg.launch_peak_dbm - measured_peak
    if gain < 0:
        raise ConfigError(
            f"assembled peak {measured_peak:.2f} dBm already exceeds the "
            f"launch target {cfg.launch_peak_dbm} dBm"
        )
    ep = EdfaParams(
        gain_db=gain,
        noise_figure_db=cfg.noise_figure_db,
        ase_enabled=cfg.ase_enabled,
    )
    rng = _rng(master_seed, seed, segment, _STREAM_LAUNCH)
    env, rho = edfa_amplify(tx.envelope, ep, rng=rng if cfg.ase_enabled else None)
    return env, rho


@dataclass
class _Checkpoint:
    distance_km: float
    envelope: ComplexEnvelope
    ase_psd: float


def _receive_checkpoint(
    cfg: ScenarioConfig,
    tx,
    truth: SegmentTruth,
    ckpt: _Checkpoint,
) -> tuple[np.ndarray, np.ndarray, int, float]:
    """Score one tapped distance: per-channel error weights and bit counts."""
    scales = NormalizationScales.from_fiber(cfg.fiber, cfg.pulse.t0)
    duration = ckpt.envelope.grid.duration
    pilots = pilot_symbols(truth.plan.n_pilot)
    weights = np.zeros(4)
    bits = np.zeros(4, dtype=np.int64)
    n_fail = 0
    osnr = osnr_estimate(
        ckpt.envelope, ckpt.ase_psd, window=(0.0, min(cfg.window, duration))
    )
    for ch in range(4):
        ch_truth = tx.channels[ch]
        drift = group_delay_shift(cfg.fiber, ch_truth.delta_f_hz, ckpt.distance_km)
        centers = (ch_truth.centers + drift) % duration
        out = receive_channel(
            ckpt.envelope,
            ch,
            ch_truth.delta_f_hz,
            centers,
            cfg.spacing,
            cfg.window,
            scales,
            ckpt.distance_km,
            cfg.rx,
            pilots,
        )
        lo = truth.plan.n_pilot
        hi = lo + truth.plan.n_data
        cnt = decide_and_count(
            out.symbols[lo:hi],
            truth.data_bits[ch],
            erased=out.erased[lo:hi],
            erasure_rate=cfg.rx.erasure_rate,
        )
        weights[ch] += cnt.error_weight
        bits[ch] += cnt.n_bits
        n_fail += int(out.erased[lo:hi].sum())
    return weights, bits, n_fail, osnr


def run_point(cfg: ScenarioConfig, seed: int, master_seed: int = 0) -> list[ResultRow]:
    """All requested distances for one seed, one continuous run per segment."""
    timing = timing_solve(cfg.spacing, cfg.window, delta_f_hz=cfg.plan.delta_f_hz)
    mzm = cfg.mzm if cfg.mzm.drive_gain is not None else calibrate_drive(
        cfg.mzm, cfg.pulse, cfg.sample_rate
    )
    segments = plan_segments(cfg)
    distances = sorted(cfg.distances_km)
    span = cfg.fiber.span_km
    ep = EdfaParams(
        gain_db=cfg.fiber.span_loss_db,
        noise_figure_db=cfg.noise_figure_db,
        ase_enabled=cfg.ase_enabled,
    )
    acc_w = {d: np.zeros(4) for d in distances}
    acc_b = {d: np.zeros(4, dtype=np.int64) for d in distances}
    acc_fail = {d: 0 for d in distances}
    acc_osnr = {d: [] for d in distances}

    for seg_idx, plan in enumerate(segments):
        tx, truth = _assemble_segment(
            cfg, plan, timing, mzm, master_seed, seed, seg_idx
        )
        env, rho0 = _launch(cfg, tx, master_seed, seed, seg_idx)
        checkpoints: list[_Checkpoint] = []
        if distances[0] == 0.0:
            checkpoints.append(_Checkpoint(0.0, env, rho0))
        want = {round(d / span): d for d in distances if d > 0.0}
        link_rng = _rng(master_seed, seed, seg_idx, _STREAM_LINK)

        def tap(k: int, partial) -> None:
            if (k + 1) in want:
                checkpoints.append(
                    _Checkpoint(
                        want[k + 1], partial.envelope, rho0 + partial.ase_psd_w_per_hz
                    )
                )

        n_spans = round(distances[-1] / span)
        if n_spans:
            propagate_link(
                env, cfg.fiber, ep, n_spans,
                rng=link_rng if cfg.ase_enabled else None,
                step=cfg.step,
                span_callback=tap,
                nyquist_guard=not cfg.ase_enabled,
            )
        for ckpt in checkpoints:
            w, b, f, osnr = _receive_checkpoint(cfg, tx, truth, ckpt)
            acc_w[ckpt.distance_km] += w
            acc_b[ckpt.distance_km] += b
            acc_fail[ckpt.distance_km] += f
            acc_osnr[ckpt.distance_km].append(osnr)

    rows = []
    for d in distances:
        w, b = acc_w[d], acc_b[d]
        bers = [float(w[i] / b[i]) if b[i] else 0.0 for i in range(4)]
        osnrs = acc_osnr[d]
        osnr = float(np.mean(osnrs)) if all(np.isfinite(osnrs)) else math.inf
        rows.append(
            ResultRow(
                distance_km=float(d),
                dt_ps=cfg.spacing * 1e12,
                seed=int(seed),
                ber_ch1=bers[0],
                ber_ch2=bers[1],
                ber_ch3=bers[2],
                ber_ch4=bers[3],
                ber_avg=float(w.sum() / b.sum()),
                osnr_db=osnr,
                n_eigenvalue_failures=int(acc_fail[d]),
            )
        )
    return rows


def run_scenario(
    cfg: ScenarioConfig,
    master_seed: int = 0,
    workers: int = 1,
) -> list[ResultRow]:
    """Full sweep over (distance x seed), rows in canonical order.

    Workers beyond one dispatch whole seeds to separate processes; results
    are identical either way because every random draw is keyed, and rows
    are sorted into (distance, seed) order regardless of completion order.
    """
    if workers < 1:
        raise ValueError(f"workers must be >= 1, got {workers}")
    if workers == 1 or len(cfg.seeds) == 1:
        nested = [run_point(cfg, s, master_seed) for s in cfg.seeds]
    else:
        with ProcessPoolExecutor(max_workers=min(workers, len(cfg.seeds))) as pool:
            futures = [
                pool.submit(run_point, cfg, s, master_seed) for s in cfg.seeds
            ]
            nested = [f.result() for f in futures]
    rows = [r for part in nested for r in part]
    rows.sort(key=lambda r: (r.distance_km, r.seed))
    return rows


# ---------------------------------------------------------------------------
# summary

@dataclass(frozen=True)
class ScenarioSummary:
    mean_ber: dict[float, float]
    reach_km: dict[str, float | None]
    ripple_distances_km: tuple[float, ...]

    def format_text(self, cfg: ScenarioConfig) -> str:
        lines = [
            f"scenario: dt={cfg.spacing * 1e12:g} ps, tw={cfg.window * 1e12:g} ps, "
            f"mode={cfg.mode}, n_bits={cfg.n_bits}, seeds={len(cfg.seeds)}",
            f"{'distance_km':>12s} {'mean_ber':>12s}",
        ]
        for d in sorted(self.mean_ber):
            lines.append(f"{d:12g} {self.mean_ber[d]:12.3e}")
        for name in ("hd", "sd"):
            reach = self.reach_km.get(name)
            shown = f"{reach:g} km" if reach is not None else "none"
            lines.append(f"reach [{name}]: {shown}")
        if self.ripple_distances_km:
            flagged = ", ".join(f"{d:g}" for d in self.ripple_distances_km)
            lines.append(f"non-monotonic ripple flagged at km: {flagged}")
        else:
            lines.append("non-monotonic ripple flagged at km: none")
        return "\n".join(lines)


def summarize(cfg: ScenarioConfig, rows: list[ResultRow]) -> ScenarioSummary:
    """Seed-averaged BER per distance, FEC reaches, and ripple flags.

    Reach is the farthest tested distance whose mean BER sits at or below
    the threshold; ripples (mean BER dropping with distance beyond what
    counting noise explains) are flagged, never failed, at the distance
    where the decline starts.
    """
    by_d: dict[float, list[ResultRow]] = {}
    for r in rows:
        by_d.setdefault(r.distance_km, []).append(r)
    mean_ber = {d: float(np.mean([r.ber_avg for r in rs])) for d, rs in by_d.items()}
    reach = {}
    for name, thr in (("hd", cfg.fec.hd), ("sd", cfg.fec.sd)):
        ok = [d for d, ber in mean_ber.items() if ber <= thr]
        reach[name] = max(ok) if ok else None
    ds = sorted(mean_ber)
    n_scored = cfg.n_bits * len(cfg.seeds)
    floor = 2.0 / n_scored
    ripples = []
    for i in range(len(ds) - 1):
        here, nxt = mean_ber[ds[i]], mean_ber[ds[i + 1]]
        if here > nxt * 1.1 + floor:
            ripples.append(ds[i])
    return ScenarioSummary(
        mean_ber=mean_ber,
        reach_km=reach,
        ripple_distances_km=tuple(ripples),
    )


# ---------------------------------------------------------------------------
# budget report and eye export

def budget_report(cfg: ScenarioConfig):
    """Ledger cascade, the input-power safety check, and launch gain."""
    chain = transmitter_chain(
        comb_power_dbm=cfg.plan.comb_power_dbm,
        modulation_penalty_db=cfg.mzm.target_penalty_db,
    )
    report = cascade(chain)
    check = check_input_power_limit(report)
    return report, check


def eye_export(
    cfg: ScenarioConfig,
    distance_km: float,
    channel: int,
    fold: str = "tw",
    master_seed: int = 0,
) -> str:
    """CSV of (folded time, field magnitude) for one channel at one distance.

    ``channel`` is 1-based as in reports.  ``fold`` selects the folding
    period: the pulse spacing or the full timing window.  The first
    configured seed and the first segment are used.
    """
    if channel not in (1, 2, 3, 4):
        raise ConfigError(f"channel must be 1..4, got {channel}")
    if fold not in ("dt", "tw"):
        raise ConfigError(f"fold must be 'dt' or 'tw', got {fold!r}")
    if distance_km not in cfg.distances_km:
        raise ConfigError(
            f"distance {distance_km} km is not among the configured distances"
        )
    seed = cfg.seeds[0]
    timing = timing_solve(cfg.spacing, cfg.window, delta_f_hz=cfg.plan.delta_f_hz)
    mzm = cfg.mzm if cfg.mzm.drive_gain is not None else calibrate_drive(
        cfg.mzm, cfg.pulse, cfg.sample_rate
    )
    plan = plan_segments(cfg)[0]
    tx, _ = _assemble_segment(cfg, plan, timing, mzm, master_seed, seed, 0)
    env, _rho = _launch(cfg, tx, master_seed, seed, 0)
    n_spans = round(distance_km / cfg.fiber.span_km)
    if n_spans:
        ep = EdfaParams(
            gain_db=cfg.fiber.span_loss_db,
            noise_figure_db=cfg.noise_figure_db,
            ase_enabled=cfg.ase_enabled,
        )
        res = propagate_link(
            env, cfg.fiber, ep, n_spans,
            rng=_rng(master_seed, seed, 0, _STREAM_LINK) if cfg.ase_enabled else None,
            step=cfg.step,
            nyquist_guard=not cfg.ase_enabled,
        )
        env = res.envelope
    base = demux(
        env, cfg.plan.delta_f_hz[channel - 1], cfg.rx.bandwidth_hz,
        cfg.rx.filter_order,
    )
    period = cfg.spacing if fold == "dt" else cfg.window
    t_fold = np.mod(base.grid.times, period)
    mag = np.abs(base.samples)
    buf = io.StringIO()
    buf.write("t_fold_s,field_magnitude\n")
    for t, m in zip(t_fold, mag):
        buf.write(f"{t:.9g},{m:.9g}\n")
    return buf.getvalue()
