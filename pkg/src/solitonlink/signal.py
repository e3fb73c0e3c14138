"""Sampled complex-envelope container and the spectral utilities built on it.

Everything downstream (transmitter, fiber, receiver) passes fields around as
:class:`ComplexEnvelope` objects: a complex128 sample array tied to a
:class:`SignalGrid` that fixes the sample rate and duration.  Times are in
seconds, frequencies in Hz, powers in watts.  The time axis always starts at
zero, ``t[k] = k / sample_rate``, and the grid is treated as circular: the
segment is its own periodic world, so delays and frequency shifts wrap
instead of leaking off the ends.

Frequency-domain operations use the unitary-in-energy numpy FFT pair
(``fft``/``ifft`` with the default 1/n on the inverse), and all spectral
shaping in this package is zero phase: filters change magnitudes only, never
group delay.  Timing is owned by the delay network, not by filter phase.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np


class GridError(ValueError):
    """Raised when samples and grid disagree or a grid is unusable."""


class AliasingError(ValueError):
    """Raised when a frequency shift would push content past Nyquist."""


@dataclass(frozen=True)
class SignalGrid:
    """Uniform sampling grid for one self-contained (circular) segment.

    Parameters
    ----------
    n_samples : int
        Number of samples.  Must be even and at least 2 so the FFT bin
        layout has an unambiguous Nyquist bin.
    sample_rate : float
        Samples per second.
    """

    n_samples: int
    sample_rate: float

    def __post_init__(self) -> None:
        if self.n_samples < 2 or self.n_samples % 2 != 0:
            raise GridError(f"n_samples must be even and >= 2, got {self.n_samples}")
        if not self.sample_rate > 0:
            raise GridError(f"sample_rate must be positive, got {self.sample_rate}")

    @property
    def dt(self) -> float:
        """Sample spacing in seconds."""
        return 1.0 / self.sample_rate

    @property
    def duration(self) -> float:
        """Total segment duration in seconds."""
        return self.n_samples / self.sample_rate

    @property
    def times(self) -> np.ndarray:
        """Time axis in seconds, starting at zero."""
        return np.arange(self.n_samples) / self.sample_rate

    @property
    def frequencies(self) -> np.ndarray:
        """Baseband frequency axis in Hz, in FFT (wrapped) order."""
        return np.fft.fftfreq(self.n_samples, d=self.dt)


def make_grid(duration: float, sample_rate: float) -> SignalGrid:
    """Build a grid covering ``duration`` seconds at ``sample_rate``.

    ``duration * sample_rate`` must land on an even integer (within one part
    in 1e6 of a sample); anything else means the caller's segment is not
    commensurate with the sample clock and circular operations would break.
    """
    n_exact = duration * sample_rate
    n = int(round(n_exact))
    if abs(n_exact - n) > 1e-6:
        raise GridError(
            f"duration * sample_rate = {n_exact!r} is not an integer sample count"
        )
    if n % 2 != 0:
        raise GridError(f"duration * sample_rate = {n} must be even")
    return SignalGrid(n_samples=n, sample_rate=sample_rate)


@dataclass(frozen=True)
class ComplexEnvelope:
    """A sampled complex field envelope on a grid.

    ``center_offset`` records how far (Hz) this envelope's reference carrier
    sits from the system's optical center frequency; it is bookkeeping for
    mux/demux and does not affect the samples themselves.
    """

    grid: SignalGrid
    samples: np.ndarray
    center_offset: float = 0.0

    def __post_init__(self) -> None:
        arr = np.asarray(self.samples, dtype=np.complex128)
        if arr.ndim != 1 or arr.shape[0] != self.grid.n_samples:
            raise GridError(
                f"samples shape {np.shape(self.samples)} does not match grid "
                f"n_samples={self.grid.n_samples}"
            )
        arr = arr.copy()
        arr.flags.writeable = False
        object.__setattr__(self, "samples", arr)

    def power(self) -> np.ndarray:
        """Instantaneous power |A|^2 in watts, per sample."""
        return np.abs(self.samples) ** 2

    def energy(self) -> float:
        """Total energy in joules over the segment."""
        return float(np.sum(self.power()) * self.grid.dt)

    def spectrum(self) -> np.ndarray:
        """FFT of the samples (numpy convention, wrapped order)."""
        return np.fft.fft(self.samples)

    def with_samples(self, samples: np.ndarray) -> "ComplexEnvelope":
        """Same grid and carrier bookkeeping, new sample data."""
        return replace(self, samples=samples)


def average_power(env: ComplexEnvelope, window: tuple[float, float] | None = None) -> float:
    """Mean power in watts, over the whole segment or a [t0, t1) window.

    The window is given in seconds on the segment's own time axis and must
    be nonempty and inside the segment.
    """
    p = env.power()
    if window is None:
        return float(np.mean(p))
    t0, t1 = window
    if not (0.0 <= t0 < t1 <= env.grid.duration + 1e-12):
        raise ValueError(f"window {window} outside segment [0, {env.grid.duration})")
    i0 = int(round(t0 * env.grid.sample_rate))
    i1 = int(round(t1 * env.grid.sample_rate))
    if i1 <= i0:
        raise ValueError(f"window {window} spans no samples")
    return float(np.mean(p[i0:i1]))


def peak_power(env: ComplexEnvelope) -> float:
    """Largest instantaneous sample power in watts."""
    return float(np.max(env.power()))


def delay(env: ComplexEnvelope, tau: float, mode: str = "circular") -> ComplexEnvelope:
    """Shift the envelope later in time by ``tau`` seconds.

    ``circular`` applies an exact spectral phase ramp, so content that runs
    off the end wraps around to the start; this is the native operation for
    the periodic segments used everywhere in this package.  ``zero`` instead
    pads, shifts, and cuts, so content is lost off the end and zeros enter
    at the start; it requires ``0 <= tau <= duration``.

    A negative ``tau`` advances the envelope (circular mode only).
    """
    if mode == "circular":
        ph = np.exp(-2j * np.pi * env.grid.frequencies * tau)
        shifted = np.fft.ifft(env.spectrum() * ph)
        return env.with_samples(shifted)
    if mode == "zero":
        if not (0.0 <= tau <= env.grid.duration):
            raise ValueError(
                f"zero-fill delay needs 0 <= tau <= duration, got tau={tau}"
            )
        n = env.grid.n_samples
        pad = int(np.ceil(tau * env.grid.sample_rate)) + 1
        pad += pad % 2
        big = SignalGrid(n + pad, env.grid.sample_rate)
        buf = np.zeros(n + pad, dtype=np.complex128)
        buf[:n] = env.samples
        ph = np.exp(-2j * np.pi * big.frequencies * tau)
        shifted = np.fft.ifft(np.fft.fft(buf) * ph)
        return env.with_samples(shifted[:n])
    raise ValueError(f"unknown delay mode {mode!r}")


def frequency_shift(
    env: ComplexEnvelope,
    df: float,
    occupied_bandwidth: float | None = None,
) -> ComplexEnvelope:
    """Multiply by exp(+2j*pi*df*t) and update the carrier bookkeeping.

    A positive ``df`` moves the spectrum up.  The shift must stay strictly
    inside Nyquist; if the caller knows the envelope's occupied bandwidth it
    can pass it to also guard the spectral edges, which matters for clean
    transmitter-side shifts.  Receivers shifting noisy fields (noise fills
    the whole band by construction) should leave it unset.

    For the shift to respect the segment's circularity, ``df`` times the
    segment duration must be an integer; this is checked and enforced.
    """
    half = 0.5 * env.grid.sample_rate
    need = abs(df) + (0.5 * occupied_bandwidth if occupied_bandwidth else 0.0)
    if need >= half:
        raise AliasingError(
            f"shift of {df:.6g} Hz (edge demand {need:.6g} Hz) reaches Nyquist "
            f"{half:.6g} Hz"
        )
    cycles = df * env.grid.duration
    if abs(cycles - round(cycles)) > 1e-6:
        raise GridError(
            f"df = {df!r} Hz is not commensurate with the segment "
            f"(df * duration = {cycles!r} must be an integer)"
        )
    rot = np.exp(2j * np.pi * df * env.grid.times)
    return ComplexEnvelope(
        grid=env.grid,
        samples=env.samples * rot,
        center_offset=env.center_offset + df,
    )


def power_bandwidth(env: ComplexEnvelope, fraction: float = 0.99) -> float:
    """Smallest two-sided bandwidth (Hz) holding ``fraction`` of the power.

    The interval is centered on the power-weighted spectral centroid and
    grown symmetrically until it contains the requested fraction of total
    spectral power; the crossing bin is interpolated linearly so the answer
    varies smoothly with pulse width.
    """
    if not 0.0 < fraction < 1.0:
        raise ValueError(f"fraction must be in (0, 1), got {fraction}")
    spec = np.abs(env.spectrum()) ** 2
    total = float(np.sum(spec))
    if total == 0.0:
        raise ValueError("cannot measure bandwidth of an all-zero envelope")
    f = env.grid.frequencies
    centroid = float(np.sum(f * spec) / total)
    # Grow symmetric half-widths one bin spacing at a time.  Work on the
    # offset axis so wrap-around bins land where they should.
    off = f - centroid
    half_span = 0.5 * env.grid.sample_rate
    off = (off + half_span) % env.grid.sample_rate - half_span
    order = np.argsort(np.abs(off), kind="stable")
    cum = np.cumsum(spec[order]) / total
    k = int(np.searchsorted(cum, fraction))
    if k >= len(cum):
        k = len(cum) - 1
    width_k = 2.0 * abs(off[order[k]])
    if k == 0:
        return width_k
    width_prev = 2.0 * abs(off[order[k - 1]])
    c_prev, c_k = cum[k - 1], cum[k]
    if c_k <= c_prev:
        return width_k
    frac = (fraction - c_prev) / (c_k - c_prev)
    return width_prev + frac * (width_k - width_prev)


def butterworth_filter(
    env: ComplexEnvelope,
    bandwidth: float,
    order: int,
    center: float = 0.0,
    insertion_loss_db: float = 0.0,
) -> ComplexEnvelope:
    """Zero-phase Butterworth power response of the given full 3 dB width.

    |H(f)|^2 = L / (1 + (2 (f - fc) / B)^(2n)) with L the (linear) insertion
    loss at band center and ``center`` the passband center on the envelope's
    own baseband frequency axis.  Zero phase means filters here shape
    magnitude only; timing belongs to explicit delay elements.
    """
    if not bandwidth > 0:
        raise ValueError(f"bandwidth must be positive, got {bandwidth}")
    if order < 1:
        raise ValueError(f"order must be >= 1, got {order}")
    x = 2.0 * (env.grid.frequencies - center) / bandwidth
    mag = 10.0 ** (-insertion_loss_db / 20.0) / np.sqrt(1.0 + x ** (2 * order))
    out = np.fft.ifft(env.spectrum() * mag)
    return env.with_samples(out)


def spectral_centroid(env: ComplexEnvelope) -> float:
    """Power-weighted mean baseband frequency in Hz."""
    spec = np.abs(env.spectrum()) ** 2
    total = float(np.sum(spec))
    if total == 0.0:
        raise ValueError("cannot measure centroid of an all-zero envelope")
    return float(np.sum(env.grid.frequencies * spec) / total)
