"""Forward conduction model of a single junction and inverse parameter fitters.

The junction conducts Ohmically at low bias and with a field-enhanced
(Poole-Frenkel type) exponential above ``v_pf_min``.  Temperature enters
through a single Arrhenius activation factor referenced to ``t_ref``, so the
LRS/HRS current ratio is temperature independent by construction.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import FitError

K_B_EV = 8.617333262e-5  # Boltzmann constant, eV/K

# Upper edge of the read-sweep window; field-enhanced fits use data up to here.
V_READ_SWEEP_MAX = 0.3


@dataclass(frozen=True)
class ConductionParams:
    """Calibration constants of the junction conduction model.

    ``g_lrs_ref`` is the small-signal low-resistive-state conductance of a
    device of area ``area_ref`` at ``t_ref``; the high-resistive state is
    ``g_lrs_ref / on_off``.  Conductance scales linearly with device area.
    """

    g_lrs_ref: float = 1e-8      # S, LRS conductance at area_ref and t_ref
    on_off: float = 7.0          # LRS/HRS conductance ratio
    area_ref: float = 14400.0    # um^2
    e_a: float = 0.15            # eV, Ohmic activation energy
    beta: float = 0.4            # eV * V^-1/2, field-lowering coefficient
    v_ohmic_max: float = 0.1     # V, upper edge of the Ohmic regime
    v_pf_min: float = 0.2        # V, onset of the field-enhanced regime
    v_clamp: float = 1.0         # V, exponent frozen above this voltage
    t_ref: float = 300.0         # K

    def __post_init__(self) -> None:
        if not (self.g_lrs_ref > 0):
            raise ValueError(f"g_lrs_ref must be > 0, got {self.g_lrs_ref}")
        if not (self.on_off > 1):
            raise ValueError(f"on_off must be > 1, got {self.on_off}")
        if not (self.area_ref > 0):
            raise ValueError(f"area_ref must be > 0, got {self.area_ref}")
        if not (0 < self.v_ohmic_max <= self.v_pf_min < self.v_clamp):
            raise ValueError(
                "regime edges must satisfy 0 < v_ohmic_max <= v_pf_min < v_clamp, "
                f"got {self.v_ohmic_max}, {self.v_pf_min}, {self.v_clamp}"
            )
        if self.e_a < 0:
            raise ValueError(f"e_a must be >= 0, got {self.e_a}")
        if self.beta < 0:
            raise ValueError(f"beta must be >= 0, got {self.beta}")
        if not (self.t_ref > 0):
            raise ValueError(f"t_ref must be > 0, got {self.t_ref}")

    @property
    def g_hrs_ref(self) -> float:
        return self.g_lrs_ref / self.on_off


@dataclass(frozen=True)
class SweepRecord:
    """Measured or synthetic (voltage, current density, temperature) samples."""

    voltage: np.ndarray          # V
    current_density: np.ndarray  # A / um^2
    temperature: np.ndarray      # K

    CSV_HEADER = ("voltage_V", "current_density_A_per_um2", "temperature_K")

    def __post_init__(self) -> None:
        v = np.asarray(self.voltage, dtype=float)
        j = np.asarray(self.current_density, dtype=float)
        t = np.asarray(self.temperature, dtype=float)
        if not (v.shape == j.shape == t.shape) or v.ndim != 1:
            raise ValueError("voltage, current_density, temperature must be equal-length 1-D arrays")
        if not np.all(np.isfinite(v)):
            raise ValueError("voltages must be finite")
        if np.any(t <= 0):
            raise ValueError("temperatures must be > 0")
        object.__setattr__(self, "voltage", v)
        object.__setattr__(self, "current_density", j)
        object.__setattr__(self, "temperature", t)

    def __len__(self) -> int:
        return self.voltage.size

    def temperatures(self) -> np.ndarray:
        return np.unique(self.temperature)

    def restrict(self, v_min: float, v_max: float) -> "SweepRecord":
        """Keep samples with v_min <= |V| <= v_max."""
        mask = (np.abs(self.voltage) >= v_min) & (np.abs(self.voltage) <= v_max)
        return SweepRecord(self.voltage[mask], self.current_density[mask], self.temperature[mask])

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(self.CSV_HEADER)
            for v, j, t in zip(self.voltage, self.current_density, self.temperature):
                writer.writerow([f"{v:.17g}", f"{j:.17g}", f"{t:.17g}"])

    @classmethod
    def from_csv(cls, path: str | Path) -> "SweepRecord":
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = tuple(next(reader))
            if header != cls.CSV_HEADER:
                raise ValueError(f"unexpected sweep header {header!r}, want {cls.CSV_HEADER!r}")
            rows = [tuple(float(x) for x in row) for row in reader if row]
        if not rows:
            raise ValueError(f"no samples in {path}")
        v, j, t = (np.array(col) for col in zip(*rows))
        return cls(v, j, t)


def _check_finite(**values: float) -> None:
    for name, value in values.items():
        if not np.all(np.isfinite(value)):
            raise ValueError(f"{name} must be finite, got {value}")


def shape_factor(v, t: float, p: ConductionParams):
    """Field-enhancement multiplier h(v, t) of the conduction model.

    Equals 1 up to ``v_pf_min``, rises as exp(beta*(sqrt(v)-sqrt(v_pf_min))/kT)
    beyond it, and freezes at its ``v_clamp`` value above that.  Continuous and
    non-decreasing in v.  Accepts scalars or arrays of v >= 0.
    """
    v_arr = np.asarray(v, dtype=float)
    _check_finite(v=v_arr, t=t)
    if np.any(v_arr < 0):
        raise ValueError("shape_factor requires v >= 0")
    if t <= 0:
        raise ValueError(f"temperature must be > 0, got {t}")
    kt = K_B_EV * t
    v_eff = np.minimum(v_arr, p.v_clamp)
    h = np.where(
        v_arr <= p.v_pf_min,
        1.0,
        np.exp(p.beta * (np.sqrt(v_eff) - math.sqrt(p.v_pf_min)) / kt),
    )
    return float(h) if v_arr.ndim == 0 else h


def activation_factor(t: float, p: ConductionParams) -> float:
    """Arrhenius factor exp(-e_a * (1/kT - 1/kT_ref)); exactly 1 at t_ref."""
    if t <= 0:
        raise ValueError(f"temperature must be > 0, got {t}")
    return math.exp(-p.e_a * (1.0 / (K_B_EV * t) - 1.0 / (K_B_EV * p.t_ref)))


def current(v, g_state, t: float, p: ConductionParams):
    """Junction current in amperes at bias v for state conductance g_state.

    I = g_state * activation(t) * v * h(|v|, t).  Odd in v; at t_ref and
    |v| <= v_pf_min this reduces exactly to g_state * v.  Broadcasts over
    array-valued v and g_state.
    """
    v_arr = np.asarray(v, dtype=float)
    g_arr = np.asarray(g_state, dtype=float)
    _check_finite(v=v_arr, g_state=g_arr)
    if np.any(g_arr <= 0):
        raise ValueError("g_state must be > 0")
    i = g_arr * activation_factor(t, p) * v_arr * shape_factor(np.abs(v_arr), t, p)
    return float(i) if np.ndim(i) == 0 else i


def current_density_lrs(v, t: float, p: ConductionParams):
    """LRS current density (A/um^2) of the reference-area device."""
    return current(v, p.g_lrs_ref, t, p) / p.area_ref


def nonlinearity_ratio(v: float, t: float, p: ConductionParams) -> float:
    """Current ratio I(v)/I(v/2) at fixed state; the state conductance cancels."""
    if not np.isfinite(v) or not np.isfinite(v / 2):
        raise ValueError(f"v must be finite, got {v}")
    if v <= 0:
        raise ValueError(f"nonlinearity_ratio requires v > 0, got {v}")
    return current(v, 1.0, t, p) / current(v / 2, 1.0, t, p)


# ---------------------------------------------------------------------------
# Synthetic sweep generators (closed-loop counterparts of the fitters below)


def synthetic_ohmic_sweep(
    voltages: Sequence[float],
    temperatures: Sequence[float],
    e_a: float,
    ln_prefactor: float = 0.0,
    noise: float = 0.0,
    rng: np.random.Generator | None = None,
) -> SweepRecord:
    """Textbook Ohmic data J = exp(ln_prefactor) * V * exp(-e_a/kT).

    ``noise`` is the relative std of multiplicative Gaussian noise on J.
    """
    vv, tt = np.meshgrid(np.asarray(voltages, float), np.asarray(temperatures, float))
    vv, tt = vv.ravel(), tt.ravel()
    j = np.exp(ln_prefactor) * vv * np.exp(-e_a / (K_B_EV * tt))
    if noise > 0:
        if rng is None:
            raise ValueError("rng required when noise > 0")
        j = j * (1.0 + noise * rng.standard_normal(j.size))
    return SweepRecord(vv, j, tt)


def synthetic_pf_sweep(
    voltages: Sequence[float],
    temperatures: Sequence[float],
    phi_b: float,
    beta: float,
    ln_prefactor: float = 0.0,
    noise: float = 0.0,
    rng: np.random.Generator | None = None,
) -> SweepRecord:
    """Textbook field-enhanced data J = exp(ln_prefactor) * V * exp((beta*sqrt(V) - phi_b)/kT)."""
    vv, tt = np.meshgrid(np.asarray(voltages, float), np.asarray(temperatures, float))
    vv, tt = vv.ravel(), tt.ravel()
    j = np.exp(ln_prefactor) * vv * np.exp((beta * np.sqrt(vv) - phi_b) / (K_B_EV * tt))
    if noise > 0:
        if rng is None:
            raise ValueError("rng required when noise > 0")
        j = j * (1.0 + noise * rng.standard_normal(j.size))
    return SweepRecord(vv, j, tt)


# ---------------------------------------------------------------------------
# Inverse fitters


@dataclass(frozen=True)
class OhmicFit:
    """Result of the low-field Arrhenius extraction."""

    e_a: float                 # eV
    ln_prefactor: float        # ln of J/V extrapolated to 1/kT = 0
    max_flatness_residual: float  # max |ln(J/V) - mean| within one temperature
    r_squared: float           # of the Arrhenius regression
    per_temperature: tuple     # (T, mean ln(J/V), n_samples) rows
    warnings: tuple = ()


@dataclass(frozen=True)
class PooleFrenkelFit:
    """Result of the field-enhanced two-stage extraction."""

    phi_b: float               # eV, barrier from the intercept Arrhenius
    beta: float                # eV * V^-1/2, slope-derived, averaged over T
    ln_prefactor: float
    r_squared: float           # of the intercept-vs-1/kT regression
    per_temperature: tuple     # (T, slope, intercept, r2, beta_at_T) rows
    warnings: tuple = ()
    notes: tuple = ()


_ANCHOR_NOTE = (
    "barrier is read from the zero-field intercept; for data generated by the "
    "anchored forward model it equals e_a + beta*sqrt(v_pf_min), not e_a alone"
)


def _linear_fit(x: np.ndarray, y: np.ndarray) -> tuple[float, float, float]:
    """OLS slope, intercept and R^2 of y on x."""
    if np.ptp(x) == 0:
        raise FitError("singular regression: all abscissa values identical")
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid**2)) / ss_tot if ss_tot > 0 else 1.0
    return float(slope), float(intercept), r2


def _log_conductance_samples(data: SweepRecord) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Return (|V|, ln(J/V), T) with duplicate (V, T) pairs averaged in J."""
    v = np.abs(data.voltage)
    j = np.abs(data.current_density)
    t = data.temperature
    if np.any(v == 0):
        raise FitError("cannot fit ln(J/V) with zero-voltage samples")
    if np.any(j <= 0):
        raise FitError("current densities must be > 0 for log-space fitting")
    # Average duplicates so repeated sweep points carry unit weight.
    keys = np.stack([t, v], axis=1)
    uniq, inverse = np.unique(keys, axis=0, return_inverse=True)
    inverse = inverse.ravel()  # numpy 2.0 returns a column for axis-wise unique
    j_avg = np.zeros(len(uniq))
    counts = np.bincount(inverse, minlength=len(uniq))
    np.add.at(j_avg, inverse, j)
    j_avg /= counts
    t_u, v_u = uniq[:, 0], uniq[:, 1]
    return v_u, np.log(j_avg / v_u), t_u


def fit_ohmic(data: SweepRecord, residual_threshold: float = 0.05) -> OhmicFit:
    """Recover the activation energy from low-field sweeps.

    Within each temperature ln(J/V) must be constant in V (the max residual is
    reported and compared against ``residual_threshold``); the regression of
    its mean against 1/kT has slope -E_a.
    """
    v, y, t = _log_conductance_samples(data)
    temps = np.unique(t)
    if temps.size < 2:
        raise FitError(f"Arrhenius extraction needs >= 2 temperatures, got {temps.size}")
    warnings: list[str] = []
    means = []
    max_resid = 0.0
    rows = []
    for temp in temps:
        y_t = y[t == temp]
        mean = float(y_t.mean())
        max_resid = max(max_resid, float(np.max(np.abs(y_t - mean))) if y_t.size else 0.0)
        means.append(mean)
        rows.append((float(temp), mean, int(y_t.size)))
    if max_resid > residual_threshold:
        warnings.append(
            f"regime violation: ln(J/V) varies by {max_resid:.3g} within a temperature "
            f"(threshold {residual_threshold:.3g}); data may extend beyond the Ohmic regime"
        )
    x = 1.0 / (K_B_EV * temps)
    slope, intercept, r2 = _linear_fit(x, np.array(means))
    return OhmicFit(
        e_a=-slope,
        ln_prefactor=intercept,
        max_flatness_residual=max_resid,
        r_squared=r2,
        per_temperature=tuple(rows),
        warnings=tuple(warnings),
    )


def fit_poole_frenkel(data: SweepRecord) -> PooleFrenkelFit:
    """Recover barrier and field-lowering coefficient from high-field sweeps.

    Per temperature, ln(J/V) is regressed on sqrt(V): the slope is beta/kT and
    the intercept b_T carries the barrier.  Regressing b_T on 1/kT yields
    -phi_b as slope and the ln-prefactor as intercept.
    """
    v, y, t = _log_conductance_samples(data)
    temps = np.unique(t)
    if temps.size < 2:
        raise FitError(f"barrier extraction needs >= 2 temperatures, got {temps.size}")
    rows = []
    betas = []
    intercepts = []
    warnings: list[str] = []
    for temp in temps:
        sel = t == temp
        if np.unique(v[sel]).size < 3:
            raise FitError(
                f"need >= 3 distinct voltages per temperature, got {np.unique(v[sel]).size} at {temp} K"
            )
        slope, intercept, r2 = _linear_fit(np.sqrt(v[sel]), y[sel])
        kt = K_B_EV * temp
        rows.append((float(temp), slope, intercept, r2, slope * kt))
        betas.append(slope * kt)
        intercepts.append(intercept)
        if r2 < 0.9:
            warnings.append(f"poor sqrt(V) linearity at {temp} K (R^2 = {r2:.3f})")
    x = 1.0 / (K_B_EV * temps)
    slope_b, ln_c, r2_b = _linear_fit(x, np.array(intercepts))
    return PooleFrenkelFit(
        phi_b=-slope_b,
        beta=float(np.mean(betas)),
        ln_prefactor=ln_c,
        r_squared=r2_b,
        per_temperature=tuple(rows),
        warnings=tuple(warnings),
        notes=(_ANCHOR_NOTE,),
    )
