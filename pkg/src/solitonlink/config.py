"""Scenario configuration: defaults, YAML loading, strict validation.

Config files are nested YAML with units spelled out in the key names
(``dt_ps``, ``span_km``, ``bandwidth_ghz``).  Unknown keys anywhere in the
tree are rejected outright; a silently ignored typo in a physics parameter
is worse than a crash.  Loaded values are converted once into the SI-ish
units the library uses and frozen into dataclasses.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import yaml

from .fiber import FiberParams, StepControl
from .receiver import RxParams
from .transmitter import ChannelPlan, MzmParams, PulseParams


class ConfigError(ValueError):
    """Bad configuration: unknown keys, wrong types, broken invariants."""


@dataclass(frozen=True)
class FecThresholds:
    hd: float = 3.8e-3
    sd: float = 2.0e-2

    def __post_init__(self) -> None:
        if not 0 < self.hd < self.sd < 1:
            raise ConfigError(
                f"FEC thresholds need 0 < hd < sd < 1, got hd={self.hd} sd={self.sd}"
            )


@dataclass(frozen=True)
class ScenarioConfig:
    """Everything one sweep needs, in library units (seconds, Hz, watts).

    ``n_bits`` counts scored bits across all four channels; with QPSK that
    is eight bits per timing window.  In the hardware-faithful mode the two
    modulators carry independent data and each modulator feeds two channels,
    so half as many information bits are drawn but every channel is still
    scored; the idealized mode gives all four channels independent data.
    """

    n_bits: int = 40000
    spacing: float = 250e-12
    window: float = 1000e-12
    distances_km: tuple[float, ...] = (500.0, 1000.0, 1500.0, 2000.0)
    seeds: tuple[int, ...] = (1, 2, 3)
    launch_peak_dbm: float = -0.3
    mode: str = "hardware-faithful"
    sample_rate: float = 256e9
    max_segment_samples: int = 4_194_304
    phase_noise_enabled: bool = False
    ase_enabled: bool = True
    noise_figure_db: float = 5.0
    fec: FecThresholds = field(default_factory=FecThresholds)
    plan: ChannelPlan = field(default_factory=ChannelPlan)
    pulse: PulseParams = field(default_factory=PulseParams)
    mzm: MzmParams = field(default_factory=MzmParams)
    fiber: FiberParams = field(default_factory=FiberParams)
    rx: RxParams = field(default_factory=RxParams)
    step: StepControl = field(default_factory=lambda: StepControl(mode="fixed", dz_km=1.0))

    def __post_init__(self) -> None:
        if self.n_bits <= 0 or self.n_bits % 8 != 0:
            raise ConfigError(
                f"n_bits must be a positive multiple of 8 (four channels, two "
                f"bits per symbol), got {self.n_bits}"
            )
        if not 0 < self.spacing <= self.window:
            raise ConfigError(
                f"need 0 < spacing <= window, got {self.spacing} / {self.window}"
            )
        if not self.distances_km:
            raise ConfigError("distances_km must not be empty")
        span = self.fiber.span_km
        for d in self.distances_km:
            if d < 0 or abs(d / span - round(d / span)) > 1e-9:
                raise ConfigError(
                    f"distance {d} km is not a non-negative multiple of the "
                    f"{span} km span"
                )
        if len(set(self.distances_km)) != len(self.distances_km):
            raise ConfigError("distances_km contains duplicates")
        if not self.seeds:
            raise ConfigError("seeds must not be empty")
        if len(set(self.seeds)) != len(self.seeds):
            raise ConfigError("seeds contains duplicates")
        if self.mode not in ("hardware-faithful", "idealized"):
            raise ConfigError(f"unknown mode {self.mode!r}")
        if not self.sample_rate > 0:
            raise ConfigError("sample_rate must be positive")
        if self.max_segment_samples < 1 << 14:
            raise ConfigError("max_segment_samples is too small to be useful")
        nyq = 0.5 * self.sample_rate
        worst = max(abs(f) for f in self.plan.delta_f_hz)
        if worst + 25e9 >= nyq:
            raise ConfigError(
                f"sample rate {self.sample_rate:.3g} S/s leaves no room above "
                f"the {worst:.3g} Hz outer channel"
            )

    @property
    def n_data_windows(self) -> int:
        return self.n_bits // 8


def default_config() -> ScenarioConfig:
    """Desk-scale defaults: quick sweeps with meaningful BER resolution."""
    return ScenarioConfig(n_bits=4000)


# ---------------------------------------------------------------------------
# YAML interface

def _require_mapping(obj, where: str) -> dict:
    if obj is None:
        return {}
    if not isinstance(obj, dict):
        raise ConfigError(f"{where} must be a mapping, got {type(obj).__name__}")
    return obj


def _check_keys(d: dict, allowed: tuple[str, ...], where: str) -> None:
    unknown = sorted(set(d) - set(allowed))
    if unknown:
        raise ConfigError(f"unknown key(s) in {where}: {', '.join(unknown)}")


def _number(d: dict, key: str, where: str, default):
    v = d.get(key, default)
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(f"{where}.{key} must be a number, got {v!r}")
    return float(v)


def _integer(d: dict, key: str, where: str, default):
    v = d.get(key, default)
    if isinstance(v, bool) or not isinstance(v, int):
        raise ConfigError(f"{where}.{key} must be an integer, got {v!r}")
    return int(v)


def _boolean(d: dict, key: str, where: str, default):
    v = d.get(key, default)
    if not isinstance(v, bool):
        raise ConfigError(f"{where}.{key} must be true or false, got {v!r}")
    return v


_TOP_KEYS = (
    "n_bits", "dt_ps", "tw_ps", "distances_km", "seeds", "launch_peak_dbm",
    "mode", "sample_rate_gsps", "max_segment_samples", "fec", "plan",
    "soliton", "mzm", "fiber", "edfa", "rx", "step",
)


def config_from_dict(raw: dict) -> ScenarioConfig:
    raw = _require_mapping(raw, "config")
    _check_keys(raw, _TOP_KEYS, "config")
    base = default_config()

    fec_d = _require_mapping(raw.get("fec"), "fec")
    _check_keys(fec_d, ("hd", "sd"), "fec")
    fec = FecThresholds(
        hd=_number(fec_d, "hd", "fec", base.fec.hd),
        sd=_number(fec_d, "sd", "fec", base.fec.sd),
    )

    plan_d = _require_mapping(raw.get("plan"), "plan")
    _check_keys(
        plan_d,
        ("delta_f_ghz", "comb_power_dbm", "linewidth_khz", "phase_noise"),
        "plan",
    )
    df = plan_d.get("delta_f_ghz", [f / 1e9 for f in base.plan.delta_f_hz])
    if not isinstance(df, (list, tuple)) or len(df) != 4:
        raise ConfigError("plan.delta_f_ghz must be a list of four numbers")
    plan = ChannelPlan(
        delta_f_hz=tuple(float(x) * 1e9 for x in df),
        comb_power_dbm=_number(plan_d, "comb_power_dbm", "plan",
                               base.plan.comb_power_dbm),
        linewidth_hz=_number(plan_d, "linewidth_khz", "plan",
                             base.plan.linewidth_hz / 1e3) * 1e3,
    )
    phase_noise_enabled = _boolean(plan_d, "phase_noise", "plan", False)

    sol_d = _require_mapping(raw.get("soliton"), "soliton")
    _check_keys(sol_d, ("t0_ps", "drive_peak_v"), "soliton")
    pulse = PulseParams(
        t0=_number(sol_d, "t0_ps", "soliton", base.pulse.t0 * 1e12) * 1e-12,
        drive_peak_v=_number(sol_d, "drive_peak_v", "soliton",
                             base.pulse.drive_peak_v),
    )

    mzm_d = _require_mapping(raw.get("mzm"), "mzm")
    _check_keys(
        mzm_d,
        ("vpi_v", "eo_bandwidth_ghz", "insertion_loss_db", "target_penalty_db"),
        "mzm",
    )
    mzm = MzmParams(
        vpi_v=_number(mzm_d, "vpi_v", "mzm", base.mzm.vpi_v),
        eo_bandwidth_hz=_number(mzm_d, "eo_bandwidth_ghz", "mzm",
                                base.mzm.eo_bandwidth_hz / 1e9) * 1e9,
        insertion_loss_db=_number(mzm_d, "insertion_loss_db", "mzm",
                                  base.mzm.insertion_loss_db),
        target_penalty_db=_number(mzm_d, "target_penalty_db", "mzm",
                                  base.mzm.target_penalty_db),
    )

    fib_d = _require_mapping(raw.get("fiber"), "fiber")
    _check_keys(
        fib_d,
        ("alpha_db_per_km", "beta2_ps2_per_km", "gamma_per_w_km", "span_km"),
        "fiber",
    )
    fiber = FiberParams(
        alpha_db_per_km=_number(fib_d, "alpha_db_per_km", "fiber",
                                base.fiber.alpha_db_per_km),
        beta2_ps2_per_km=_number(fib_d, "beta2_ps2_per_km", "fiber",
                                 base.fiber.beta2_ps2_per_km),
        gamma_per_w_km=_number(fib_d, "gamma_per_w_km", "fiber",
                               base.fiber.gamma_per_w_km),
        span_km=_number(fib_d, "span_km", "fiber", base.fiber.span_km),
    )

    edfa_d = _require_mapping(raw.get("edfa"), "edfa")
    _check_keys(edfa_d, ("noise_figure_db", "ase"), "edfa")
    nf = _number(edfa_d, "noise_figure_db", "edfa", base.noise_figure_db)
    ase = _boolean(edfa_d, "ase", "edfa", base.ase_enabled)

    rx_d = _require_mapping(raw.get("rx"), "rx")
    _check_keys(
        rx_d,
        ("bandwidth_ghz", "filter_order", "n_test_phases", "bps_window",
         "pilot_len", "erasure_rate", "b_mismatch_limit"),
        "rx",
    )
    rx = RxParams(
        bandwidth_hz=_number(rx_d, "bandwidth_ghz", "rx",
                             base.rx.bandwidth_hz / 1e9) * 1e9,
        filter_order=_integer(rx_d, "filter_order", "rx", base.rx.filter_order),
        n_test_phases=_integer(rx_d, "n_test_phases", "rx", base.rx.n_test_phases),
        bps_window=_integer(rx_d, "bps_window", "rx", base.rx.bps_window),
        pilot_len=_integer(rx_d, "pilot_len", "rx", base.rx.pilot_len),
        erasure_rate=_number(rx_d, "erasure_rate", "rx", base.rx.erasure_rate),
        b_mismatch_limit=_number(rx_d, "b_mismatch_limit", "rx",
                                 base.rx.b_mismatch_limit),
    )

    step_d = _require_mapping(raw.get("step"), "step")
    _check_keys(step_d, ("mode", "dz_km", "max_nl_phase_rad"), "step")
    step_mode = step_d.get("mode", base.step.mode)
    if step_mode not in ("fixed", "adaptive"):
        raise ConfigError(f"step.mode must be fixed or adaptive, got {step_mode!r}")
    step = StepControl(
        mode=step_mode,
        dz_km=_number(step_d, "dz_km", "step", base.step.dz_km),
        max_nl_phase_rad=_number(step_d, "max_nl_phase_rad", "step",
                                 base.step.max_nl_phase_rad),
    )

    distances = raw.get("distances_km", list(base.distances_km))
    if not isinstance(distances, (list, tuple)):
        raise ConfigError("distances_km must be a list of numbers")
    seeds = raw.get("seeds", list(base.seeds))
    if not isinstance(seeds, (list, tuple)) or not all(
        isinstance(s, int) and not isinstance(s, bool) for s in seeds
    ):
        raise ConfigError("seeds must be a list of integers")
    mode = raw.get("mode", base.mode)
    if not isinstance(mode, str):
        raise ConfigError(f"mode must be a string, got {mode!r}")

    try:
        return ScenarioConfig(
            n_bits=_integer(raw, "n_bits", "config", base.n_bits),
            spacing=_number(raw, "dt_ps", "config", base.spacing * 1e12) * 1e-12,
            window=_number(raw, "tw_ps", "config", base.window * 1e12) * 1e-12,
            distances_km=tuple(float(d) for d in distances),
            seeds=tuple(int(s) for s in seeds),
            launch_peak_dbm=_number(raw, "launch_peak_dbm", "config",
                                    base.launch_peak_dbm),
            mode=mode,
            sample_rate=_number(raw, "sample_rate_gsps", "config",
                                base.sample_rate / 1e9) * 1e9,
            max_segment_samples=_integer(raw, "max_segment_samples", "config",
                                         base.max_segment_samples),
            phase_noise_enabled=phase_noise_enabled,
            ase_enabled=ase,
            noise_figure_db=nf,
            fec=fec,
            plan=plan,
            pulse=pulse,
            mzm=mzm,
            fiber=fiber,
            rx=rx,
            step=step,
        )
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def config_to_dict(cfg: ScenarioConfig) -> dict:
    """Inverse of :func:`config_from_dict`, for dumping and round-trips."""
    return {
        "n_bits": cfg.n_bits,
        "dt_ps": cfg.spacing * 1e12,
        "tw_ps": cfg.window * 1e12,
        "distances_km": list(cfg.distances_km),
        "seeds": list(cfg.seeds),
        "launch_peak_dbm": cfg.launch_peak_dbm,
        "mode": cfg.mode,
        "sample_rate_gsps": cfg.sample_rate / 1e9,
        "max_segment_samples": cfg.max_segment_samples,
        "fec": {"hd": cfg.fec.hd, "sd": cfg.fec.sd},
        "plan": {
            "delta_f_ghz": [f / 1e9 for f in cfg.plan.delta_f_hz],
            "comb_power_dbm": cfg.plan.comb_power_dbm,
            "linewidth_khz": cfg.plan.linewidth_hz / 1e3,
            "phase_noise": cfg.phase_noise_enabled,
        },
        "soliton": {
            "t0_ps": cfg.pulse.t0 * 1e12,
            "drive_peak_v": cfg.pulse.drive_peak_v,
        },
        "mzm": {
            "vpi_v": cfg.mzm.vpi_v,
            "eo_bandwidth_ghz": cfg.mzm.eo_bandwidth_hz / 1e9,
            "insertion_loss_db": cfg.mzm.insertion_loss_db,
            "target_penalty_db": cfg.mzm.target_penalty_db,
        },
        "fiber": {
            "alpha_db_per_km": cfg.fiber.alpha_db_per_km,
            "beta2_ps2_per_km": cfg.fiber.beta2_ps2_per_km,
            "gamma_per_w_km": cfg.fiber.gamma_per_w_km,
            "span_km": cfg.fiber.span_km,
        },
        "edfa": {
            "noise_figure_db": cfg.noise_figure_db,
            "ase": cfg.ase_enabled,
        },
        "rx": {
            "bandwidth_ghz": cfg.rx.bandwidth_hz / 1e9,
            "filter_order": cfg.rx.filter_order,
            "n_test_phases": cfg.rx.n_test_phases,
            "bps_window": cfg.rx.bps_window,
            "pilot_len": cfg.rx.pilot_len,
            "erasure_rate": cfg.rx.erasure_rate,
            "b_mismatch_limit": cfg.rx.b_mismatch_limit,
        },
        "step": {
            "mode": cfg.step.mode,
            "dz_km": cfg.step.dz_km,
            "max_nl_phase_rad": cfg.step.max_nl_phase_rad,
        },
    }


def load_config(path) -> ScenarioConfig:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            raw = yaml.safe_load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse config {path}: {exc}") from exc
    return config_from_dict(raw if raw is not None else {})


def with_full_scale(cfg: ScenarioConfig) -> ScenarioConfig:
    """The --full variant: ten times the bits of the desk default."""
    return replace(cfg, n_bits=40000)
