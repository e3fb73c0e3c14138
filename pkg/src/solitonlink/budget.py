"""Optical power budget ledger for the transmitter chain.

Pure dB arithmetic: a chain of components is folded over per-channel peak
power levels, producing a stage-by-stage report that can be printed as a
table or written as CSV.  The ledger works in dBm and never touches sampled
fields; the waveform-level transmitter consumes numbers from it (carrier
power into the modulators, required launch gain) so there is exactly one
source of truth for the loss chain.

Sign conventions: losses are stored as positive dB numbers and subtracted;
an amplifier stage sets its outputs to an absolute target.  Safety margins
are signed as limit minus actual, so positive margin means headroom.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field

import numpy as np

COMPONENT_KINDS = (
    "source",
    "fixed-loss",
    "filter",
    "amplifier-to-target",
    "modulator",
    "splitter-combiner",
)


class BudgetError(ValueError):
    """Raised for malformed chains or impossible budget queries."""


def dbm_to_watts(p_dbm: float) -> float:
    return 1e-3 * 10.0 ** (p_dbm / 10.0)


def watts_to_dbm(p_w: float) -> float:
    if not p_w > 0:
        raise ValueError(f"need positive power for dBm, got {p_w}")
    return 10.0 * np.log10(p_w / 1e-3)


def db_to_field_factor(loss_db: float) -> float:
    """Field amplitude multiplier for a given power loss in dB."""
    return 10.0 ** (-loss_db / 20.0)


@dataclass(frozen=True)
class ComponentSpec:
    """One element of the transmitter chain.

    ``applies_to`` limits the stage to a subset of channel indices
    (0-based); None means all channels.  ``bandwidth_hz`` and ``order`` are
    carried for filter components so the waveform layer can build the
    matching spectral response; the ledger itself only uses the insertion
    loss.
    """

    name: str
    kind: str
    insertion_loss_db: float = 0.0
    target_power_dbm: float | None = None
    bandwidth_hz: float | None = None
    order: int | None = None
    applies_to: tuple[int, ...] | None = None

    def __post_init__(self) -> None:
        if self.kind not in COMPONENT_KINDS:
            raise BudgetError(f"unknown component kind {self.kind!r}")
        if self.kind in ("source", "amplifier-to-target"):
            if self.target_power_dbm is None:
                raise BudgetError(f"{self.name}: {self.kind} needs target_power_dbm")
        elif self.insertion_loss_db < 0:
            raise BudgetError(
                f"{self.name}: insertion loss must be >= 0 dB, got "
                f"{self.insertion_loss_db}"
            )


@dataclass(frozen=True)
class BudgetStage:
    """Per-channel peak powers (dBm) after one component."""

    name: str
    kind: str
    powers_dbm: tuple[float, ...]


@dataclass(frozen=True)
class LinkBudgetReport:
    components: tuple[ComponentSpec, ...]
    stages: tuple[BudgetStage, ...]
    n_channels: int

    @property
    def final_powers_dbm(self) -> tuple[float, ...]:
        return self.stages[-1].powers_dbm

    def stage_powers(self, name: str) -> tuple[float, ...]:
        for st in self.stages:
            if st.name == name:
                return st.powers_dbm
        raise BudgetError(f"no stage named {name!r}")

    def powers_entering(self, name: str) -> tuple[float, ...]:
        """Per-channel powers at the input of the named component."""
        for i, st in enumerate(self.stages):
            if st.name == name:
                if i == 0:
                    raise BudgetError(f"{name!r} is the source; nothing enters it")
                return self.stages[i - 1].powers_dbm
        raise BudgetError(f"no stage named {name!r}")

    def format_table(self) -> str:
        cols = " ".join(f"ch{k + 1:>7d}" for k in range(self.n_channels))
        lines = [f"{'stage':<28s} {'kind':<20s} {cols}"]
        for st in self.stages:
            p = " ".join(f"{x:9.2f}" for x in st.powers_dbm)
            lines.append(f"{st.name:<28s} {st.kind:<20s} {p}")
        return "\n".join(lines)

    def to_csv(self) -> str:
        buf = io.StringIO()
        heads = ",".join(f"ch{k + 1}_dbm" for k in range(self.n_channels))
        buf.write(f"stage,kind,{heads}\n")
        for st in self.stages:
            p = ",".join(f"{x:.9g}" for x in st.powers_dbm)
            buf.write(f"{st.name},{st.kind},{p}\n")
        return buf.getvalue()


def cascade(components: list[ComponentSpec] | tuple[ComponentSpec, ...],
            n_channels: int = 4) -> LinkBudgetReport:
    """Fold the chain over per-channel peak powers.

    The first component must be the source.  Stage names must be unique so
    they can be referenced by safety checks and by the waveform layer.
    """
    if not components:
        raise BudgetError("empty chain")
    if components[0].kind != "source":
        raise BudgetError("chain must start with a source component")
    names = [c.name for c in components]
    if len(set(names)) != len(names):
        raise BudgetError("stage names must be unique")

    powers = np.full(n_channels, components[0].target_power_dbm, dtype=float)
    stages = [BudgetStage(components[0].name, "source", tuple(powers))]
    for comp in components[1:]:
        if comp.kind == "source":
            raise BudgetError("only the first component may be a source")
        sel = (
            np.arange(n_channels)
            if comp.applies_to is None
            else np.asarray(comp.applies_to, dtype=int)
        )
        if sel.size and (sel.min() < 0 or sel.max() >= n_channels):
            raise BudgetError(f"{comp.name}: applies_to out of range")
        if comp.kind == "amplifier-to-target":
            powers[sel] = comp.target_power_dbm
        else:
            powers[sel] = powers[sel] - comp.insertion_loss_db
        stages.append(BudgetStage(comp.name, comp.kind, tuple(powers)))
    return LinkBudgetReport(tuple(components), tuple(stages), n_channels)


@dataclass(frozen=True)
class SafetyCheck:
    """Outcome of a total-power limit check at one point in the chain."""

    location: str
    total_dbm: float
    limit_dbm: float
    margin_db: float
    passed: bool


def check_input_power_limit(
    report: LinkBudgetReport,
    location: str = "input grating coupler",
    limit_dbm: float = 16.0,
    tolerance_db: float = 0.05,
) -> SafetyCheck:
    """Total optical power entering a component versus its damage limit.

    All channel powers at the component's input are summed in linear units.
    The margin is ``limit - total`` (positive = headroom); the check passes
    when the total does not exceed the limit by more than ``tolerance_db``,
    which absorbs the dB-rounding inherent in ledger arithmetic.
    """
    entering = report.powers_entering(location)
    total_w = sum(dbm_to_watts(p) for p in entering)
    total_dbm = float(watts_to_dbm(total_w))
    margin = limit_dbm - total_dbm
    return SafetyCheck(
        location=location,
        total_dbm=total_dbm,
        limit_dbm=limit_dbm,
        margin_db=margin,
        passed=bool(margin >= -tolerance_db),
    )


def required_launch_gain(report: LinkBudgetReport, target_peak_dbm: float) -> float:
    """Gain (dB) a launch amplifier must add to hit the per-channel target.

    Uses the worst (lowest) final per-channel power so every channel reaches
    at least the target when the chain is followed by peak equalization.
    """
    worst = min(report.final_powers_dbm)
    return target_peak_dbm - worst


def equalize_peaks(peaks_dbm: list[float] | tuple[float, ...] | np.ndarray) -> np.ndarray:
    """Per-channel attenuations (dB >= 0) that level all peaks to the minimum."""
    arr = np.asarray(peaks_dbm, dtype=float)
    if arr.size == 0:
        raise ValueError("no peaks to equalize")
    return arr - arr.min()


def transmitter_chain(
    comb_power_dbm: float = -6.0,
    line_amp_target_dbm: float = 10.0,
    modulation_penalty_db: float = 13.5,
    delayed_channels: tuple[int, ...] = (0, 1),
) -> list[ComponentSpec]:
    """The default four-channel photonic transmitter chain.

    Channel indices are 0-based; ``delayed_channels`` are the two channels
    routed through the on-chip delay waveguide (its 3 dB excess loss is what
    the later equalization stage levels back out).  The modulator stage
    carries the full peak attenuation through the null-biased IQ modulator:
    4.5 dB intrinsic insertion loss plus the modulation-depth penalty of the
    calibrated drive.
    """
    comps = [
        ComponentSpec("comb line", "source", target_power_dbm=comb_power_dbm),
        ComponentSpec("comb line filter", "fixed-loss", insertion_loss_db=2.0),
        ComponentSpec(
            "line boost amplifier", "amplifier-to-target",
            target_power_dbm=line_amp_target_dbm,
        ),
        ComponentSpec("input grating coupler", "fixed-loss", insertion_loss_db=3.0),
        ComponentSpec(
            "input ring filter", "filter",
            insertion_loss_db=1.6, bandwidth_hz=6.5e9, order=2,
        ),
        ComponentSpec("iq modulator", "modulator", insertion_loss_db=modulation_penalty_db),
        ComponentSpec(
            "delay waveguide", "fixed-loss",
            insertion_loss_db=3.0, applies_to=delayed_channels,
        ),
        ComponentSpec(
            "mux ring filter", "filter",
            insertion_loss_db=2.0, bandwidth_hz=17.5e9, order=4,
        ),
    ]
    # Level the peaks before combining: whatever spread the chain has built
    # up so far (the delay waveguide's excess loss, nominally) is taken out
    # of the hotter channels.
    probe = cascade(comps, n_channels=4)
    spread = equalize_peaks(probe.final_powers_dbm)
    for j, level in enumerate(sorted({round(s, 9) for s in spread if s > 1e-12})):
        hot = tuple(int(i) for i in np.nonzero(np.isclose(spread, level))[0])
        name = "peak equalization" if j == 0 else f"peak equalization {j + 1}"
        comps.append(
            ComponentSpec(
                name, "fixed-loss", insertion_loss_db=float(level), applies_to=hot,
            )
        )
    comps += [
        ComponentSpec("combiner", "splitter-combiner", insertion_loss_db=3.0),
        ComponentSpec("monitor taps", "fixed-loss", insertion_loss_db=1.5),
        ComponentSpec("output grating coupler", "fixed-loss", insertion_loss_db=3.0),
    ]
    return comps
