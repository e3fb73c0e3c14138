"""Four-channel soliton transmitter: data mapping, modulators, timing.

The transmitter turns bit streams into one combined optical field.  Each
channel carries one sech-shaped pulse per timing window, QPSK-encoded in the
pulse's optical phase.  Two IQ modulators are driven by sech-profiled
electrical waveforms; each modulator feeds two channels, one routed directly
and one through an on-chip delay waveguide, so channel pairs share data in
the hardware-faithful mode.  An integer-picosecond lattice solver picks the
waveguide and arbitrary-waveform-generator delays that realize the requested
pulse spacing inside the timing window.

Channel indexing is 0-based in code and 1-based in reports.  Channels 0 and 1
are the delayed pair; channels 2 and 3 are direct.  The frequency plan lists
the per-channel offsets from the optical center in ascending channel order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.optimize import brentq

from .budget import (
    ComponentSpec,
    cascade,
    db_to_field_factor,
    dbm_to_watts,
    equalize_peaks,
    watts_to_dbm,
)
from .signal import (
    ComplexEnvelope,
    SignalGrid,
    butterworth_filter,
    delay,
    frequency_shift,
    peak_power,
    power_bandwidth,
)


class TxError(ValueError):
    """Raised for invalid transmitter setups (overdrive, bad streams, ...)."""


class TimingError(ValueError):
    """Raised when no delay assignment realizes the requested pulse spacing."""


# ---------------------------------------------------------------------------
# data mapping

QPSK_POINTS = np.exp(1j * np.pi * np.array([0.25, 0.75, 1.25, 1.75]))


def qpsk_map(bits: np.ndarray) -> np.ndarray:
    """Gray-coded QPSK: bit pairs to unit-circle points.

    (0,0) -> exp(i pi/4), (0,1) -> exp(i 3pi/4), (1,1) -> exp(i 5pi/4),
    (1,0) -> exp(i 7pi/4).  The first bit of each pair flips the imaginary
    sign, the second flips the real sign; adjacent constellation points
    differ in exactly one bit.
    """
    b = np.asarray(bits)
    if b.ndim != 1 or b.size % 2 != 0:
        raise ValueError(f"need a flat, even-length bit array, got shape {b.shape}")
    if not np.all((b == 0) | (b == 1)):
        raise ValueError("bits must be 0 or 1")
    first = b[0::2].astype(int)
    second = b[1::2].astype(int)
    re = (1 - 2 * second) / math.sqrt(2.0)
    im = (1 - 2 * first) / math.sqrt(2.0)
    return re + 1j * im


def qpsk_demap(symbols: np.ndarray) -> np.ndarray:
    """Nearest-point inverse of :func:`qpsk_map`."""
    s = np.asarray(symbols)
    out = np.empty(2 * s.size, dtype=np.uint8)
    out[0::2] = (s.imag < 0).astype(np.uint8)
    out[1::2] = (s.real < 0).astype(np.uint8)
    return out


def pilot_symbols(n: int) -> np.ndarray:
    """Fixed pilot prefix shared by transmitter and receiver.

    Deterministic by construction (seeded stream), so both ends can agree on
    it without side channels.
    """
    rng = np.random.default_rng(7701)
    bits = rng.integers(0, 2, size=2 * n).astype(np.uint8)
    return qpsk_map(bits)


# ---------------------------------------------------------------------------
# parameter bundles

@dataclass(frozen=True)
class ChannelPlan:
    """Comb-line frequency offsets and common source properties."""

    delta_f_hz: tuple[float, float, float, float] = (-15e9, -5e9, 5e9, 15e9)
    comb_power_dbm: float = -6.0
    linewidth_hz: float = 80e3

    def __post_init__(self) -> None:
        if len(self.delta_f_hz) != 4:
            raise TxError("the plan carries exactly four channels")
        if len(set(self.delta_f_hz)) != 4:
            raise TxError("channel offsets must be distinct")


@dataclass(frozen=True)
class PulseParams:
    """Sech pulse width and nominal electrical drive amplitude."""

    t0: float = 38e-12
    drive_peak_v: float = 1.0

    def __post_init__(self) -> None:
        if not self.t0 > 0:
            raise TxError(f"t0 must be positive, got {self.t0}")
        if not self.drive_peak_v > 0:
            raise TxError(f"drive_peak_v must be positive, got {self.drive_peak_v}")


@dataclass(frozen=True)
class MzmParams:
    """Null-biased IQ modulator with a bandwidth-limited electrical path.

    ``drive_gain`` scales the electrical drive before the sine transfer; it
    is normally set by :func:`calibrate_drive` so that a reference pulse
    comes out ``target_penalty_db`` below the carrier (intrinsic insertion
    loss included).
    """

    vpi_v: float = 5.57
    eo_bandwidth_hz: float = 14e9
    insertion_loss_db: float = 4.5
    target_penalty_db: float = 13.5
    drive_gain: float | None = None

    def __post_init__(self) -> None:
        if not self.vpi_v > 0:
            raise TxError(f"vpi must be positive, got {self.vpi_v}")
        if not self.eo_bandwidth_hz > 0:
            raise TxError(f"eo bandwidth must be positive, got {self.eo_bandwidth_hz}")
        if self.target_penalty_db < self.insertion_loss_db:
            raise TxError(
                "target penalty cannot be below the intrinsic insertion loss"
            )


# ---------------------------------------------------------------------------
# electrical drive and modulation

def soliton_drive(
    symbols: np.ndarray,
    grid: SignalGrid,
    window: float,
    base_offset: float,
    pulse: PulseParams,
) -> tuple[np.ndarray, np.ndarray]:
    """Sech-profiled I/Q drive voltages for one modulator.

    Pulse ``w`` is centered at ``base_offset + w * window`` (circularly on
    the grid) with in-phase amplitude Re(s_w) * drive_peak_v and quadrature
    Im(s_w) * drive_peak_v.  Tails are summed out to 45 pulse widths, far
    below any tolerance that matters, and wrap across the segment boundary.
    """
    s = np.asarray(symbols, dtype=np.complex128)
    n_w = s.size
    if n_w == 0:
        raise TxError("no symbols to modulate")
    if abs(n_w * window - grid.duration) > 1e-12 * max(1.0, grid.duration / 1e-9):
        raise TxError(
            f"{n_w} windows of {window} s do not tile the {grid.duration} s segment"
        )
    if grid.dt > pulse.t0 / 8.0:
        raise TxError(
            f"sample spacing {grid.dt} too coarse for t0 = {pulse.t0}; need >= 8 "
            "samples per pulse width"
        )
    half = int(math.ceil(45.0 * pulse.t0 / grid.dt))
    centers = base_offset + np.arange(n_w) * window
    base_idx = np.round(centers / grid.dt).astype(np.int64)
    rel = np.arange(-half, half + 1, dtype=np.int64)
    d = grid.duration
    vi = np.zeros(grid.n_samples)
    vq = np.zeros(grid.n_samples)
    amp = pulse.drive_peak_v
    block = 1024
    for lo in range(0, n_w, block):
        hi = min(lo + block, n_w)
        idx = (base_idx[lo:hi, None] + rel[None, :]) % grid.n_samples
        t_rel = idx * grid.dt - centers[lo:hi, None]
        t_rel = (t_rel + 0.5 * d) % d - 0.5 * d
        e = np.exp(-np.abs(t_rel) / pulse.t0)
        sech = 2.0 * e / (1.0 + e * e)
        np.add.at(vi, idx.ravel(), (amp * s.real[lo:hi, None] * sech).ravel())
        np.add.at(vq, idx.ravel(), (amp * s.imag[lo:hi, None] * sech).ravel())
    return vi, vq


def _electrical_lowpass(v: np.ndarray, grid: SignalGrid, f3db: float) -> np.ndarray:
    """Single-pole response of the drive electronics (real in, real out)."""
    h = 1.0 / (1.0 + 1j * grid.frequencies / f3db)
    return np.fft.ifft(np.fft.fft(v) * h).real


def mzm_modulate(
    drive_i: np.ndarray,
    drive_q: np.ndarray,
    carrier_power_w: float,
    mzm: MzmParams,
    grid: SignalGrid,
) -> ComplexEnvelope:
    """Null-biased IQ transfer applied to bandwidth-limited drives.

    Each arm maps voltage v to field factor sin(pi g v / (2 Vpi)); the two
    arms combine in quadrature with a 1/sqrt(2) combiner.  Driving any arm
    past |g v| = Vpi is an error: the transfer would fold over and the
    hardware equivalent is an overdriven modulator.
    """
    if mzm.drive_gain is None:
        raise TxError("drive_gain is unset; run calibrate_drive first")
    vi = _electrical_lowpass(np.asarray(drive_i, dtype=float), grid, mzm.eo_bandwidth_hz)
    vq = _electrical_lowpass(np.asarray(drive_q, dtype=float), grid, mzm.eo_bandwidth_hz)
    g = mzm.drive_gain
    vmax = max(float(np.max(np.abs(vi))), float(np.max(np.abs(vq))))
    if g * vmax > mzm.vpi_v * (1.0 + 1e-12):
        raise TxError(
            f"drive reaches {g * vmax:.3f} V against Vpi {mzm.vpi_v} V; "
            "the transfer would fold over"
        )
    k = math.pi * g / (2.0 * mzm.vpi_v)
    ti = np.sin(k * vi)
    tq = np.sin(k * vq)
    amp = math.sqrt(carrier_power_w) * db_to_field_factor(mzm.insertion_loss_db)
    field = amp * (ti + 1j * tq) / math.sqrt(2.0)
    return ComplexEnvelope(grid=grid, samples=field)


def modulation_penalty_db(
    mzm: MzmParams,
    pulse: PulseParams,
    sample_rate: float,
) -> float:
    """Peak attenuation (dB, carrier to output pulse peak) of a reference pulse.

    The reference is a single pulse with symbol exp(i pi/4) on a long private
    grid, drive electronics included, so the number captures insertion loss,
    modulation depth, and the electrical bandwidth limit together.
    """
    n = 4096
    grid = SignalGrid(n, sample_rate)
    sym = np.array([np.exp(1j * np.pi / 4)])
    vi, vq = soliton_drive(sym, grid, grid.duration, grid.duration / 2.0, pulse)
    env = mzm_modulate(vi, vq, 1.0, mzm, grid)
    return -10.0 * math.log10(peak_power(env))


def calibrate_drive(
    mzm: MzmParams,
    pulse: PulseParams,
    sample_rate: float,
) -> MzmParams:
    """Set ``drive_gain`` so the reference penalty hits the target.

    Monotone in the gain (more drive, higher peak, smaller penalty), so a
    bracketing root find is exact for practical purposes.  The upper bracket
    stops just short of overdrive, where the penalty bottoms out at the
    intrinsic insertion loss.
    """
    n = 4096
    grid = SignalGrid(n, sample_rate)
    sym = np.array([np.exp(1j * np.pi / 4)])
    vi, vq = soliton_drive(sym, grid, grid.duration, grid.duration / 2.0, pulse)
    vif = _electrical_lowpass(vi, grid, mzm.eo_bandwidth_hz)
    vqf = _electrical_lowpass(vq, grid, mzm.eo_bandwidth_hz)
    vmax = max(float(np.max(np.abs(vif))), float(np.max(np.abs(vqf))))
    g_hi = 0.999 * mzm.vpi_v / vmax

    def objective(g: float) -> float:
        test = replace(mzm, drive_gain=g)
        env = mzm_modulate(vi, vq, 1.0, test, grid)
        return -10.0 * math.log10(peak_power(env)) - mzm.target_penalty_db

    lo = 1e-3 * g_hi
    if objective(lo) < 0.0 or objective(g_hi) > 0.0:
        raise TxError(
            f"target penalty {mzm.target_penalty_db} dB is outside the reachable "
            "range of this modulator"
        )
    g = brentq(objective, lo, g_hi, xtol=1e-12, rtol=1e-14)
    return replace(mzm, drive_gain=float(g))


# ---------------------------------------------------------------------------
# timing lattice

@dataclass(frozen=True)
class TimingSolution:
    """Delay assignment realizing the pulse spacing inside one window.

    ``centers`` holds the per-channel pulse positions (seconds, modulo the
    window) in channel order.  ``gaps`` are the cyclic spacings in time
    order.  ``down_time`` is the idle remainder of the window beyond four
    nominal spacings.
    """

    window: float
    spacing: float
    tau_wg: float
    tau_awg: float
    centers: tuple[float, float, float, float]
    gaps: tuple[float, ...]
    down_time: float
    n_nominal_gaps: int


def _channel_positions_ps(tau_wg: int, tau_awg: int, window: int) -> tuple[int, ...]:
    """Channel order 0..3: (delayed A, delayed B, direct A, direct B)."""
    return (
        tau_wg % window,
        (tau_awg + tau_wg) % window,
        0,
        tau_awg % window,
    )


def timing_solve(
    spacing: float,
    window: float,
    wg_choices: tuple[float, ...] = (300e-12, 500e-12),
    delta_f_hz: tuple[float, float, float, float] = (-15e9, -5e9, 5e9, 15e9),
) -> TimingSolution:
    """Pick delay-waveguide and generator delays on the integer-ps lattice.

    A feasible assignment places the four pulses with cyclic gaps of exactly
    the requested spacing three times over, the fourth gap absorbing the
    window remainder (equal spacing when the window is four spacings).
    Among feasible assignments the solver prefers, in order: more nominal
    gaps; time order that walks the comb lines in wavelength order (the
    delay network is sized so neighboring pulses are also spectral
    neighbors, leaving the two band-edge channels adjacent and converging,
    which fixes the collision schedule the receiver window budget assumes);
    then the smallest generator delay for determinism.

    Raises :class:`TimingError` with the nearest workable spacing when the
    requested one cannot be realized.
    """

    def as_ps(x: float, name: str) -> int:
        v = x * 1e12
        if abs(v - round(v)) > 1e-6:
            raise TimingError(f"{name} must sit on the 1 ps lattice, got {x}")
        return int(round(v))

    win = as_ps(window, "window")
    spc = as_ps(spacing, "spacing")
    wgs = [as_ps(w, "waveguide delay") for w in wg_choices]
    if spc <= 0 or win <= 0:
        raise TimingError("spacing and window must be positive")
    comb_rank = {
        ch: r for r, ch in enumerate(sorted(range(4), key=lambda k: delta_f_hz[k]))
    }

    def best_for(spc_ps: int):
        if 4 * spc_ps > win:
            return None
        best = None
        for wg in wgs:
            for awg in range(win):
                pos = _channel_positions_ps(wg, awg, win)
                if len(set(pos)) != 4:
                    continue
                order = sorted(range(4), key=lambda k: pos[k])
                srt = [pos[k] for k in order]
                gaps = [srt[i + 1] - srt[i] for i in range(3)]
                gaps.append(win - srt[3] + srt[0])
                n_nom = sum(g == spc_ps for g in gaps)
                if n_nom < 3 or min(gaps) < spc_ps:
                    continue
                n_seq = sum(
                    comb_rank[order[(i + 1) % 4]] == (comb_rank[order[i]] + 1) % 4
                    for i in range(4)
                )
                key = (n_nom, n_seq, -awg)
                if best is None or key > best[0]:
                    best = (key, wg, awg, pos, tuple(gaps), n_nom)
        return best

    found = best_for(spc)
    if found is None:
        near = None
        for d in range(1, spc):
            for cand in (spc - d, spc + d):
                if cand > 0 and best_for(cand) is not None:
                    near = cand
                    break
            if near is not None:
                break
        hint = f"; nearest workable spacing is {near} ps" if near else ""
        raise TimingError(
            f"no delay assignment realizes {spc} ps spacing in a {win} ps window"
            f"{hint}"
        )
    _, wg, awg, pos, gaps, n_nom = found
    return TimingSolution(
        window=win * 1e-12,
        spacing=spc * 1e-12,
        tau_wg=wg * 1e-12,
        tau_awg=awg * 1e-12,
        centers=tuple(p * 1e-12 for p in pos),
        gaps=tuple(g * 1e-12 for g in gaps),
        down_time=(win - 4 * spc) * 1e-12,
        n_nominal_gaps=n_nom,
    )


# ---------------------------------------------------------------------------
# laser phase noise

def phase_noise(
    env: ComplexEnvelope,
    linewidth_hz: float,
    rng: np.random.Generator,
) -> ComplexEnvelope:
    """Wiener phase walk of the given Lorentzian linewidth.

    Increment variance is 2 pi * linewidth * dt per sample.  The walk starts
    at zero phase; an overall constant phase is unobservable downstream
    anyway.  All comb lines inherit the same seed laser phase, so one walk
    is applied to the combined field rather than one per channel.
    """
    if linewidth_hz < 0:
        raise TxError(f"linewidth must be >= 0, got {linewidth_hz}")
    if linewidth_hz == 0.0:
        return env
    n = env.grid.n_samples
    steps = math.sqrt(2.0 * math.pi * linewidth_hz * env.grid.dt) * rng.standard_normal(n)
    phi = np.cumsum(steps)
    phi -= phi[0]
    return env.with_samples(env.samples * np.exp(1j * phi))


# ---------------------------------------------------------------------------
# assembly

@dataclass(frozen=True)
class ChannelTruth:
    """Transmitted ground truth for one channel."""

    channel: int
    delta_f_hz: float
    symbols: np.ndarray
    centers: np.ndarray
    peak_dbm: float


@dataclass(frozen=True)
class TxOutput:
    envelope: ComplexEnvelope
    channels: tuple[ChannelTruth, ...]
    timing: TimingSolution
    n_windows: int
    mode: str


_DELAYED = (0, 1)
_STREAM_OF_CHANNEL = {0: 0, 1: 1, 2: 0, 3: 1}


def assemble_tx(
    grid: SignalGrid,
    streams: tuple[np.ndarray, ...],
    timing: TimingSolution,
    plan: ChannelPlan,
    pulse: PulseParams,
    mzm: MzmParams,
    chain: list[ComponentSpec] | tuple[ComponentSpec, ...],
    mode: str = "hardware-faithful",
    rng: np.random.Generator | None = None,
    phase_noise_enabled: bool = False,
) -> TxOutput:
    """Modulate, route, filter, equalize, and combine the four channels.

    ``streams`` carries one symbol array per modulator: two in the
    hardware-faithful mode (each lands on a direct and a delayed channel, so
    channel pairs 0/2 and 1/3 share data), four in the idealized mode (every
    channel gets independent data at the same lattice positions).

    The component chain is interpreted, not just summed: stages before the
    modulator set the carrier power into it, the modulator is the physical
    transfer above, filter stages become spectral responses at each
    channel's line, the delay waveguide contributes its loss (its timing is
    already in the lattice solution), fixed losses scale fields, and the
    static equalization entry is replaced by leveling of the actually
    measured peaks.
    """
    if mode == "hardware-faithful":
        if len(streams) != 2:
            raise TxError("hardware-faithful mode needs two modulator streams")
    elif mode == "idealized":
        if len(streams) != 4:
            raise TxError("idealized mode needs four independent streams")
    else:
        raise TxError(f"unknown mode {mode!r}")
    lengths = {len(s) for s in streams}
    if len(lengths) != 1:
        raise TxError("all streams must have the same number of symbols")
    n_w = lengths.pop()
    if abs(n_w * timing.window - grid.duration) > 1e-9 * grid.duration:
        raise TxError(
            f"{n_w} windows of {timing.window} s do not tile {grid.duration} s"
        )

    mod_idx = next(
        (i for i, c in enumerate(chain) if c.kind == "modulator"), None
    )
    if mod_idx is None:
        raise TxError("component chain has no modulator stage")
    pre = cascade(chain[: mod_idx], n_channels=4)
    carrier_w = [dbm_to_watts(p) for p in pre.final_powers_dbm]
    if mzm.drive_gain is None:
        mzm = calibrate_drive(mzm, pulse, grid.sample_rate)

    # One baseband envelope per modulator stream.  Stream 0 anchors the
    # window origin; stream 1 is offset by the generator delay.
    base_of_stream = {0: 0.0, 1: timing.tau_awg}
    if mode == "hardware-faithful":
        stream_env = {}
        for s_idx, syms in enumerate(streams):
            vi, vq = soliton_drive(syms, grid, timing.window, base_of_stream[s_idx], pulse)
            stream_env[s_idx] = mzm_modulate(vi, vq, 1.0, mzm, grid)

    channels = []
    shaped: list[ComplexEnvelope] = []
    for ch in range(4):
        s_idx = _STREAM_OF_CHANNEL[ch]
        extra = timing.tau_wg if ch in _DELAYED else 0.0
        if mode == "hardware-faithful":
            syms = streams[s_idx]
            env = stream_env[s_idx]
            env = env.with_samples(env.samples * math.sqrt(carrier_w[ch]))
            if extra:
                env = delay(env, extra, mode="circular")
        else:
            syms = streams[ch]
            vi, vq = soliton_drive(
                syms, grid, timing.window, base_of_stream[s_idx] + extra, pulse
            )
            env = mzm_modulate(vi, vq, carrier_w[ch], mzm, grid)
        occupied = power_bandwidth(env, fraction=0.9999)
        env = frequency_shift(env, plan.delta_f_hz[ch], occupied_bandwidth=occupied)
        for comp in chain[mod_idx + 1:]:
            applies = comp.applies_to is None or ch in comp.applies_to
            if not applies or comp.name.startswith("peak equalization"):
                continue
            if comp.kind == "filter":
                env = butterworth_filter(
                    env,
                    comp.bandwidth_hz,
                    comp.order,
                    center=plan.delta_f_hz[ch],
                    insertion_loss_db=comp.insertion_loss_db,
                )
            else:
                env = env.with_samples(
                    env.samples * db_to_field_factor(comp.insertion_loss_db)
                )
        shaped.append(env)
        centers = (base_of_stream[s_idx] + extra + np.arange(n_w) * timing.window) \
            % grid.duration
        channels.append((ch, syms, centers))

    peaks_dbm = np.array([watts_to_dbm(peak_power(e)) for e in shaped])
    atten = equalize_peaks(peaks_dbm)
    total = np.zeros(grid.n_samples, dtype=np.complex128)
    truths = []
    for (ch, syms, centers), env, att in zip(channels, shaped, atten):
        leveled = env.samples * db_to_field_factor(float(att))
        total += leveled
        truths.append(
            ChannelTruth(
                channel=ch,
                delta_f_hz=plan.delta_f_hz[ch],
                symbols=np.array(syms, dtype=np.complex128),
                centers=centers,
                peak_dbm=float(peaks_dbm[ch] - att),
            )
        )
    out = ComplexEnvelope(grid=grid, samples=total, center_offset=0.0)
    if phase_noise_enabled and plan.linewidth_hz > 0:
        if rng is None:
            raise TxError("phase noise enabled but no random generator given")
        out = phase_noise(out, plan.linewidth_hz, rng)
    return TxOutput(
        envelope=out,
        channels=tuple(truths),
        timing=timing,
        n_windows=n_w,
        mode=mode,
    )
