"""Analog memory state machine: pulse programming, DC hysteresis, read and energy.

The normalized state variable w runs from 0 (high-resistive) to 1
(low-resistive).  Pulse programming advances a discrete level counter on a
saturating-exponential staircase; the ramp protocols are represented by that
counter, not by pulse-level switching kinetics.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, replace
from enum import Enum
from pathlib import Path
from typing import Callable, NamedTuple, Sequence

import numpy as np
from scipy.optimize import curve_fit

from .conduction import ConductionParams, current
from .errors import FitError

PULSE_READ_VOLTAGE = 0.2  # V, read bias after programming pulses
DC_READ_VOLTAGE = 0.3     # V, read bias along the DC write loop


class UpdateScheme(Enum):
    """Programming scheme a pulse belongs to."""

    AMPLITUDE_RAMP = "amplitude_ramp"  # constant width, stepped amplitude
    WIDTH_RAMP = "width_ramp"          # constant amplitude, stepped width
    SINGLE = "single"


class Direction(Enum):
    POTENTIATE = "potentiate"
    DEPRESS = "depress"


@dataclass(frozen=True)
class PulseSpec:
    """One write stimulus: signed amplitude, width and owning scheme."""

    amplitude: float          # V, negative potentiates (top electrode negative)
    width: float              # s
    scheme: UpdateScheme = UpdateScheme.SINGLE

    def __post_init__(self) -> None:
        if not (np.isfinite(self.amplitude) and np.isfinite(self.width)):
            raise ValueError("pulse amplitude and width must be finite")
        if self.width <= 0:
            raise ValueError(f"pulse width must be > 0, got {self.width}")


@dataclass(frozen=True)
class DeviceParams:
    """Full calibration record of one junction.

    ``nu_p``/``nu_d`` are the staircase shape parameters of the
    amplitude-ramp scheme; the width-ramp scheme swaps them (its sharp
    direction is the opposite one).  Endpoint conductances derive from the
    conduction record scaled linearly by ``area``.
    """

    conduction: ConductionParams = ConductionParams()
    area: float = 14400.0          # um^2
    n_levels: int = 50             # pulses from one endpoint to the other
    nu_p: float = 1.9              # potentiation shape (amplitude-ramp)
    nu_d: float = 4.3              # depression shape (amplitude-ramp)
    v_set_full: float = -1.6       # V, DC write reaching full LRS
    v_reset_full: float = 2.4      # V, DC write reaching full HRS
    v_c_set: float = -0.6          # V, SET coercive voltage
    v_c_reset: float = 0.8         # V, RESET coercive voltage
    v_pulse_threshold: float = 1.3  # V, minimum |amplitude| that moves state
    t_width_ref: float = 50e-6     # s, reference pulse width
    hzo_thickness_nm: float = 10.0  # reporting only (coercive field)

    def __post_init__(self) -> None:
        if not (self.v_set_full <= self.v_c_set < 0 < self.v_c_reset <= self.v_reset_full):
            raise ValueError(
                "require v_set_full <= v_c_set < 0 < v_c_reset <= v_reset_full, got "
                f"{self.v_set_full}, {self.v_c_set}, {self.v_c_reset}, {self.v_reset_full}"
            )
        if self.n_levels < 2:
            raise ValueError(f"n_levels must be >= 2, got {self.n_levels}")
        if self.nu_p <= 0 or self.nu_d <= 0:
            raise ValueError("nu_p and nu_d must be > 0")
        if self.area <= 0:
            raise ValueError(f"area must be > 0, got {self.area}")
        if self.t_width_ref <= 0:
            raise ValueError(f"t_width_ref must be > 0, got {self.t_width_ref}")
        # A pulse-class threshold below a coercive voltage or below half of a
        # full write amplitude would break the half-select no-op contract.
        if not (self.v_pulse_threshold > max(abs(self.v_c_set), self.v_c_reset)):
            raise ValueError(
                f"v_pulse_threshold {self.v_pulse_threshold} must exceed both coercive "
                f"voltage magnitudes ({abs(self.v_c_set)}, {self.v_c_reset})"
            )
        if not (self.v_pulse_threshold > max(abs(self.v_set_full), self.v_reset_full) / 2):
            raise ValueError(
                f"v_pulse_threshold {self.v_pulse_threshold} must exceed half of every "
                f"write amplitude ({abs(self.v_set_full) / 2}, {self.v_reset_full / 2})"
            )

    @property
    def memory_window(self) -> float:
        """Separation of the two coercive voltages, in volts."""
        return self.v_c_reset - self.v_c_set

    @property
    def g_lrs(self) -> float:
        return self.conduction.g_lrs_ref * self.area / self.conduction.area_ref

    @property
    def g_hrs(self) -> float:
        return self.g_lrs / self.conduction.on_off

    def nu_for(self, scheme: UpdateScheme, direction: Direction) -> float:
        if scheme is UpdateScheme.WIDTH_RAMP:
            return self.nu_d if direction is Direction.POTENTIATE else self.nu_p
        return self.nu_p if direction is Direction.POTENTIATE else self.nu_d


@dataclass(frozen=True)
class DeviceState:
    """Analog memory state of one junction (a value; operations return new ones)."""

    w: float                  # normalized state, 0 = HRS, 1 = LRS
    g_hrs_dev: float          # S, this device's HRS endpoint
    g_lrs_dev: float          # S, this device's LRS endpoint

    def __post_init__(self) -> None:
        if not (0.0 <= self.w <= 1.0):
            raise ValueError(f"w must lie in [0, 1], got {self.w}")
        if not (0 < self.g_hrs_dev < self.g_lrs_dev):
            raise ValueError(
                f"endpoints must satisfy 0 < g_hrs_dev < g_lrs_dev, got "
                f"{self.g_hrs_dev}, {self.g_lrs_dev}"
            )

    @property
    def conductance(self) -> float:
        """Small-signal conductance at the current state, in siemens."""
        return self.g_hrs_dev + self.w * (self.g_lrs_dev - self.g_hrs_dev)

    @classmethod
    def fresh(cls, params: DeviceParams, w: float = 0.0) -> "DeviceState":
        """A nominal (unsampled) device of the given parameter set."""
        return cls(w=w, g_hrs_dev=params.g_hrs, g_lrs_dev=params.g_lrs)


def update_curve(x, nu: float, direction: Direction):
    """Normalized conductance after a normalized pulse count x in [0, 1].

    Potentiation rises as (1 - exp(-nu*x)) / (1 - exp(-nu)); depression is its
    mirror starting from 1.  Endpoints are exact by construction.
    """
    x_arr = np.asarray(x, dtype=float)
    if np.any((x_arr < 0) | (x_arr > 1)):
        raise ValueError("normalized count must lie in [0, 1]")
    if nu <= 0:
        raise ValueError(f"nu must be > 0, got {nu}")
    rise = np.expm1(-nu * x_arr) / np.expm1(-nu) + 0.0  # + 0.0 normalizes -0.0
    out = rise if direction is Direction.POTENTIATE else 1.0 - rise
    return float(out) if x_arr.ndim == 0 else out


def update_curve_inverse(g_norm, nu: float, direction: Direction):
    """Normalized count at which update_curve reaches g_norm."""
    g_arr = np.asarray(g_norm, dtype=float)
    rise = g_arr if direction is Direction.POTENTIATE else 1.0 - g_arr
    x = np.log1p(rise * np.expm1(-nu)) / (-nu)
    out = np.clip(x, 0.0, 1.0)
    return float(out) if g_arr.ndim == 0 else out


def step_weight(w, nu: float, direction: Direction, n_levels: int):
    """Advance w by one discrete staircase level in the given direction.

    The level counter is recovered from w (nearest level, so a noisy state
    neither stalls nor double-steps on average), incremented, and mapped back
    through the update curve; it saturates at the endpoint.  Works on scalars
    and arrays.
    """
    x = update_curve_inverse(w, nu, direction)
    k = np.minimum(np.round(np.asarray(x) * n_levels) + 1, n_levels)
    out = update_curve(k / n_levels, nu, direction)
    return float(out) if np.ndim(w) == 0 else out


def apply_pulse(state: DeviceState, pulse: PulseSpec, params: DeviceParams) -> DeviceState:
    """Apply one write pulse; below the voltage threshold the state is untouched.

    Negative amplitudes potentiate, positive ones depress.  Returns the input
    state object itself for sub-threshold pulses, so the no-op is exact.
    """
    if abs(pulse.amplitude) < params.v_pulse_threshold:
        return state
    direction = Direction.POTENTIATE if pulse.amplitude < 0 else Direction.DEPRESS
    nu = params.nu_for(pulse.scheme, direction)
    w_new = step_weight(state.w, nu, direction, params.n_levels)
    return replace(state, w=w_new)


class TracePoint(NamedTuple):
    count: int
    direction: str
    conductance: float  # S, measured at the pulse read voltage
    resistance: float   # ohm


TRACE_CSV_HEADER = ("count", "direction", "conductance_S", "resistance_ohm")


def run_sequence(
    state: DeviceState,
    scheme: UpdateScheme,
    n_pot: int,
    n_dep: int,
    params: DeviceParams,
    noise: Callable[[float], float] | None = None,
) -> tuple[list[TracePoint], DeviceState]:
    """Potentiation then depression staircase, read at +0.2 V after each pulse.

    Both branches include their count-0 (pre-pulse) read.  With ``noise`` set,
    each step's state increment is passed through it and the result clamped to
    [0, 1].  Returns the trace and the final state.
    """
    if not (0 <= n_pot <= params.n_levels and 0 <= n_dep <= params.n_levels):
        raise ValueError(f"pulse counts must lie in [0, {params.n_levels}]")

    t_ref = params.conduction.t_ref

    def read(count: int, direction: str) -> TracePoint:
        r = read_resistance(state, PULSE_READ_VOLTAGE, t_ref, params)
        return TracePoint(count, direction, PULSE_READ_VOLTAGE / r, r)

    def pulsed(amplitude: float) -> DeviceState:
        new = apply_pulse(state, PulseSpec(amplitude, params.t_width_ref, scheme), params)
        if noise is None:
            return new
        dw = noise(new.w - state.w)
        return replace(state, w=float(np.clip(state.w + dw, 0.0, 1.0)))

    points: list[TracePoint] = []
    points.append(read(0, "potentiation"))
    for i in range(1, n_pot + 1):
        state = pulsed(params.v_set_full)
        points.append(read(i, "potentiation"))
    points.append(read(0, "depression"))
    for i in range(1, n_dep + 1):
        state = pulsed(params.v_reset_full)
        points.append(read(i, "depression"))
    return points, state


def write_trace_csv(path: str | Path, points: Sequence[TracePoint]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(TRACE_CSV_HEADER)
        for p in points:
            writer.writerow([p.count, p.direction, f"{p.conductance:.12e}", f"{p.resistance:.12e}"])


def read_trace_csv(path: str | Path) -> list[TracePoint]:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = tuple(next(reader))
        if header != TRACE_CSV_HEADER:
            raise ValueError(f"unexpected trace header {header!r}")
        return [TracePoint(int(r[0]), r[1], float(r[2]), float(r[3])) for r in reader if r]


@dataclass(frozen=True)
class UpdateCurveFit:
    """Result of fitting a staircase to amplitude * (1 - exp(-nu * x))."""

    sigma0: float
    nu: float
    direction: Direction
    rms_residual: float
    warnings: tuple = ()


def fit_update_curve(counts: Sequence[float], conductances: Sequence[float]) -> UpdateCurveFit:
    """Least-squares fit of one staircase branch to the saturating exponential.

    Counts are normalized by their maximum and conductances by the branch
    extremes.  A non-monotone branch degrades the fit and is reported as a
    warning, not an error.
    """
    counts = np.asarray(counts, dtype=float)
    g = np.asarray(conductances, dtype=float)
    if counts.size != g.size or counts.size < 5:
        raise FitError(f"need >= 5 (count, conductance) points, got {counts.size}")
    if np.ptp(counts) == 0 or np.ptp(g) == 0:
        raise FitError("degenerate trace: counts or conductances are all equal")

    warnings: list[str] = []
    order = np.argsort(counts)
    counts, g = counts[order], g[order]
    x = counts / counts.max()
    g_norm = (g - g.min()) / (g.max() - g.min())
    rising = g[-1] >= g[0]
    direction = Direction.POTENTIATE if rising else Direction.DEPRESS
    y = g_norm if rising else 1.0 - g_norm
    if np.any(np.diff(y) < -1e-12):
        warnings.append("non-monotone trace; fit quality may be degraded")

    def family(xv, sigma0, nu):
        return sigma0 * -np.expm1(-nu * xv)

    popt, _ = curve_fit(
        family, x, y, p0=(1.0, 1.0),
        bounds=([1e-9, 1e-9], [np.inf, np.inf]),
        xtol=1e-14, ftol=1e-14, gtol=1e-14, maxfev=20000,
    )
    sigma0, nu = float(popt[0]), float(popt[1])
    rms = float(np.sqrt(np.mean((family(x, sigma0, nu) - y) ** 2)))
    return UpdateCurveFit(sigma0=sigma0, nu=nu, direction=direction,
                          rms_residual=rms, warnings=tuple(warnings))


def dc_write(state: DeviceState, v_write: float, params: DeviceParams) -> DeviceState:
    """One-sided saturating DC write; inside the memory window it is a no-op."""
    if not np.isfinite(v_write):
        raise ValueError(f"v_write must be finite, got {v_write}")
    if v_write <= params.v_c_set:
        target = min(1.0, (params.v_c_set - v_write) / (params.v_c_set - params.v_set_full))
        w = max(state.w, target)
    elif v_write >= params.v_c_reset:
        drop = min(1.0, (v_write - params.v_c_reset) / (params.v_reset_full - params.v_c_reset))
        w = min(state.w, 1.0 - drop)
    else:
        return state
    return replace(state, w=w) if w != state.w else state


@dataclass(frozen=True)
class HysteresisLoop:
    """Resistance read at +0.3 V along an up-then-down DC write sweep."""

    v_up: np.ndarray
    r_up: np.ndarray
    v_down: np.ndarray
    r_down: np.ndarray


def hysteresis_loop(params: DeviceParams, v_min: float, v_max: float, n_steps: int) -> HysteresisLoop:
    """Sweep the DC write voltage up then down, reading after every step.

    The sweep must start below the SET coercive voltage so the up branch
    leaves from a defined state; a v_max below the RESET coercive voltage
    yields a flat (non-switching) loop.
    """
    if not (v_min < params.v_c_set):
        raise ValueError(f"sweep must start below the SET coercive voltage {params.v_c_set}")
    if not (v_max > v_min):
        raise ValueError("v_max must exceed v_min")
    if n_steps < 2:
        raise ValueError("n_steps must be >= 2")
    t_ref = params.conduction.t_ref
    grid = np.linspace(v_min, v_max, n_steps)
    state = DeviceState.fresh(params)
    r_up = np.empty_like(grid)
    for i, v in enumerate(grid):
        state = dc_write(state, float(v), params)
        r_up[i] = read_resistance(state, DC_READ_VOLTAGE, t_ref, params)
    grid_down = grid[::-1].copy()
    r_down = np.empty_like(grid_down)
    for i, v in enumerate(grid_down):
        state = dc_write(state, float(v), params)
        r_down[i] = read_resistance(state, DC_READ_VOLTAGE, t_ref, params)
    return HysteresisLoop(v_up=grid, r_up=r_up, v_down=grid_down, r_down=r_down)


def extract_memory_window(loop: HysteresisLoop, rel_tol: float = 1e-6) -> tuple[float, float, float]:
    """Onset voltages of both transitions and their separation.

    The RESET onset is the largest up-sweep voltage still reading at the
    low-resistance plateau; the SET onset is the smallest down-sweep voltage
    still reading at the high-resistance plateau.
    """
    r_lrs = loop.r_up.min()
    on_plateau_up = np.nonzero(loop.r_up <= r_lrs * (1 + rel_tol))[0]
    v_reset_onset = float(loop.v_up[on_plateau_up.max()])
    r_hrs = loop.r_down.max()
    on_plateau_down = np.nonzero(loop.r_down >= r_hrs * (1 - rel_tol))[0]
    v_set_onset = float(loop.v_down[on_plateau_down.max()])
    return v_set_onset, v_reset_onset, v_reset_onset - v_set_onset


def read_resistance(state: DeviceState, v_read: float, t: float, params: DeviceParams) -> float:
    """Resistance v/I at the read bias, through the full conduction model."""
    if v_read == 0:
        raise ValueError("read voltage must be nonzero")
    return v_read / current(v_read, state.conductance, t, params.conduction)


def write_energy(state: DeviceState, pulse: PulseSpec) -> float:
    """Energy G * V^2 * t of one pulse at the small-signal state conductance.

    The field-enhanced branch is not extrapolated to write voltages; the
    small-signal conductance keeps the estimate within the model's validity.
    """
    return state.conductance * pulse.amplitude**2 * pulse.width


def scale_area(params: DeviceParams, new_area: float) -> DeviceParams:
    """Same junction at a different area: conductances scale, voltages do not."""
    if new_area <= 0:
        raise ValueError(f"area must be > 0, got {new_area}")
    return replace(params, area=new_area)
