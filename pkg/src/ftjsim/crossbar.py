"""Crossbar array composition: half-biased writes, analog reads, sneak metrics.

Cell state is held as dense arrays (one entry per junction) so reads and
programming vectorize; the single-cell device operations remain the reference
semantics.  Wires are ideal (no line resistance) and unselected lines are
grounded during reads.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

import numpy as np

from .conduction import K_B_EV, V_READ_SWEEP_MAX, activation_factor, current, shape_factor
from .device import (
    DeviceParams,
    DeviceState,
    Direction,
    PulseSpec,
    UpdateScheme,
    apply_pulse,
    step_weight,
    update_curve,
)
from .errors import ConfigError
from .variability import VariabilityParams, sample_endpoint_arrays, truncated_normal

SNAPSHOT_CSV_HEADER = ("row", "col", "w", "g_S")


class BiasKind(Enum):
    V_HALF = "vhalf"


@dataclass(frozen=True)
class BiasScheme:
    """Write rails (+V/2 on the selected row, -V/2 on the selected column) and read bias."""

    kind: BiasKind = BiasKind.V_HALF
    v_write_pot: float = -1.6
    v_write_dep: float = 2.4
    v_read: float = 0.2

    def __post_init__(self) -> None:
        if self.v_read <= 0 or self.v_read > V_READ_SWEEP_MAX:
            raise ConfigError(f"v_read must lie in (0, {V_READ_SWEEP_MAX}] V, got {self.v_read}")

    def validate_against(self, params: DeviceParams) -> None:
        """Half-select levels must sit below the pulse threshold."""
        for name, v in (("v_write_pot", self.v_write_pot), ("v_write_dep", self.v_write_dep)):
            if abs(v) / 2 >= params.v_pulse_threshold:
                raise ConfigError(
                    f"half-select level |{name}|/2 = {abs(v) / 2} V reaches the pulse "
                    f"threshold {params.v_pulse_threshold} V; unselected cells would disturb"
                )


@dataclass
class DisturbReport:
    half_selected: int  # cells that saw +-V/2
    disturbed: int      # of those, cells whose state changed


@dataclass
class WriteVerifyReport:
    converged_fraction: float
    mean_iterations: float
    max_iterations: int
    clipped_cells: int
    warnings: tuple = ()


class Crossbar:
    """rows x cols array of junctions plus its bias scheme and noise model."""

    def __init__(
        self,
        w: np.ndarray,
        g_hrs: np.ndarray,
        g_lrs: np.ndarray,
        params: DeviceParams,
        vp: VariabilityParams,
        bias: BiasScheme,
        scheme: UpdateScheme,
        c2c_rng: np.random.Generator,
    ):
        if w.ndim != 2 or w.shape != g_hrs.shape or w.shape != g_lrs.shape:
            raise ValueError("state arrays must share one 2-D shape")
        if min(w.shape) < 1:
            raise ValueError("array dimensions must be >= 1")
        self.w = w
        self.g_hrs = g_hrs
        self.g_lrs = g_lrs
        self.params = params
        self.vp = vp
        self.bias = bias
        self.scheme = scheme
        self._c2c_rng = c2c_rng

    @property
    def rows(self) -> int:
        return self.w.shape[0]

    @property
    def cols(self) -> int:
        return self.w.shape[1]

    @classmethod
    def create(
        cls,
        rows: int,
        cols: int,
        params: DeviceParams,
        vp: VariabilityParams,
        bias: BiasScheme = BiasScheme(),
        scheme: UpdateScheme = UpdateScheme.AMPLITUDE_RAMP,
    ) -> "Crossbar":
        """Sample a fresh array; endpoints come from the population model."""
        if rows < 1 or cols < 1:
            raise ValueError("array dimensions must be >= 1")
        bias.validate_against(params)
        d2d_ss, c2c_ss = np.random.SeedSequence(vp.seed).spawn(2)
        g_hrs, g_lrs = sample_endpoint_arrays(rows * cols, params, vp, np.random.default_rng(d2d_ss))
        return cls(
            w=np.zeros((rows, cols)),
            g_hrs=g_hrs.reshape(rows, cols),
            g_lrs=g_lrs.reshape(rows, cols),
            params=params,
            vp=vp,
            bias=bias,
            scheme=scheme,
            c2c_rng=np.random.default_rng(c2c_ss),
        )

    def conductances(self) -> np.ndarray:
        """Small-signal conductance of every cell, in siemens."""
        return self.g_hrs + self.w * (self.g_lrs - self.g_hrs)

    def state_at(self, r: int, c: int) -> DeviceState:
        return DeviceState(w=float(self.w[r, c]), g_hrs_dev=float(self.g_hrs[r, c]),
                           g_lrs_dev=float(self.g_lrs[r, c]))

    def snapshot_csv(self, path: str | Path) -> None:
        g = self.conductances()
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(SNAPSHOT_CSV_HEADER)
            for r in range(self.rows):
                for c in range(self.cols):
                    writer.writerow([r, c, f"{self.w[r, c]:.12e}", f"{g[r, c]:.12e}"])

    def _normalized_targets(self, target: np.ndarray) -> tuple[np.ndarray, int]:
        """Targets mapped to w-space, clipped to the per-device span."""
        target = np.asarray(target, dtype=float)
        if target.shape != self.w.shape:
            raise ValueError(f"target shape {target.shape} != array shape {self.w.shape}")
        t_norm = (target - self.g_hrs) / (self.g_lrs - self.g_hrs)
        clipped = int(np.count_nonzero((t_norm < 0) | (t_norm > 1)))
        return np.clip(t_norm, 0.0, 1.0), clipped

    def set_conductances(self, target: np.ndarray) -> int:
        """Continuous (non-quantized, noiseless) programming; returns clip count.

        Idealized-programming path for analyses that separate quantization and
        noise from the mapping itself.
        """
        t_norm, clipped = self._normalized_targets(target)
        self.w[:] = t_norm
        return clipped


def write_cell(xbar: Crossbar, r: int, c: int, pulse: PulseSpec) -> DisturbReport:
    """Program one cell under the half-bias scheme; report half-select fallout.

    The selected cell sees the full amplitude; every other cell on its row or
    column sees half of it, passed through the same pulse response.  The array
    is updated in place.
    """
    if not (0 <= r < xbar.rows and 0 <= c < xbar.cols):
        raise IndexError(f"cell ({r}, {c}) out of bounds for {xbar.rows}x{xbar.cols}")
    if xbar.bias.kind is not BiasKind.V_HALF:
        raise ConfigError(f"unsupported bias scheme {xbar.bias.kind}")
    xbar.w[r, c] = apply_pulse(xbar.state_at(r, c), pulse, xbar.params).w

    half = pulse.amplitude / 2
    n_half = xbar.rows + xbar.cols - 2
    if abs(half) < xbar.params.v_pulse_threshold:
        # Exact no-op: unselected state arrays are not touched at all.
        return DisturbReport(half_selected=n_half, disturbed=0)

    direction = Direction.POTENTIATE if half < 0 else Direction.DEPRESS
    nu = xbar.params.nu_for(pulse.scheme, direction)
    disturbed = 0
    row_sel = np.ones(xbar.cols, dtype=bool)
    row_sel[c] = False
    col_sel = np.ones(xbar.rows, dtype=bool)
    col_sel[r] = False
    for sl in ((r, row_sel), (col_sel, c)):
        before = xbar.w[sl]
        after = step_weight(before, nu, direction, xbar.params.n_levels)
        disturbed += int(np.count_nonzero(after != before))
        xbar.w[sl] = after
    return DisturbReport(half_selected=n_half, disturbed=disturbed)


def _potentiation_levels(xbar: Crossbar) -> np.ndarray:
    n = xbar.params.n_levels
    nu = xbar.params.nu_for(xbar.scheme, Direction.POTENTIATE)
    return update_curve(np.arange(n + 1) / n, nu, Direction.POTENTIATE)


def program_open_loop(
    xbar: Crossbar, target: np.ndarray, rng: np.random.Generator | None = None
) -> Crossbar:
    """Pulse every cell (from the HRS) to the level nearest its target.

    Noiseless programming lands exactly on the staircase; with cycle-to-cycle
    noise enabled each step's increment is jittered and clamped.
    """
    t_norm, _ = xbar._normalized_targets(target)
    levels = _potentiation_levels(xbar)
    idx = np.searchsorted(levels, t_norm)
    idx = np.clip(idx, 1, len(levels) - 1)
    pick_lower = (t_norm - levels[idx - 1]) <= (levels[idx] - t_norm)
    k = np.where(pick_lower, idx - 1, idx)

    if xbar.vp.sigma_c2c == 0:
        xbar.w[:] = levels[k]
        return xbar
    rng = rng if rng is not None else xbar._c2c_rng
    w = np.zeros_like(xbar.w)
    for s in range(1, int(k.max()) + 1):
        mask = k >= s
        dw = levels[s] - levels[s - 1]
        eps = truncated_normal(rng, xbar.vp.sigma_c2c, size=int(mask.sum()))
        w[mask] = np.clip(w[mask] + dw * (1.0 + eps), 0.0, 1.0)
    xbar.w[:] = w
    return xbar


def program_write_verify(
    xbar: Crossbar,
    target: np.ndarray,
    tol: float = 0.05,
    max_iters: int = 200,
    rng: np.random.Generator | None = None,
) -> WriteVerifyReport:
    """Closed-loop programming: pulse toward the target, re-read, repeat.

    Each unconverged cell takes one staircase step toward its target per
    iteration and is re-read at the bias read voltage; it stops when the
    measured conductance is within ``tol`` relative or its iteration budget is
    exhausted (reported, not fatal).
    """
    if tol <= 0:
        raise ValueError(f"tol must be > 0, got {tol}")
    t_norm, clipped = xbar._normalized_targets(target)
    target_g = xbar.g_hrs + t_norm * (xbar.g_lrs - xbar.g_hrs)
    warnings: list[str] = []
    if clipped:
        warnings.append(f"{clipped} target(s) outside the device span were clipped")

    p = xbar.params
    nu_pot = p.nu_for(xbar.scheme, Direction.POTENTIATE)
    nu_dep = p.nu_for(xbar.scheme, Direction.DEPRESS)
    rng = rng if rng is not None else xbar._c2c_rng
    noisy = xbar.vp.sigma_c2c > 0
    # Measured conductance at the read bias is the state conductance times a
    # state-independent factor, so verification compares in state space.
    iters = np.zeros(xbar.w.shape, dtype=int)

    for _ in range(max_iters):
        g = xbar.conductances()
        active = np.abs(g - target_g) / target_g > tol
        if not active.any():
            break
        iters[active] += 1
        before = xbar.w.copy()
        for direction, nu, mask in (
            (Direction.POTENTIATE, nu_pot, active & (g < target_g)),
            (Direction.DEPRESS, nu_dep, active & (g >= target_g)),
        ):
            if not mask.any():
                continue
            stepped = step_weight(xbar.w[mask], nu, direction, p.n_levels)
            if noisy:
                dw = stepped - xbar.w[mask]
                eps = truncated_normal(rng, xbar.vp.sigma_c2c, size=int(mask.sum()))
                stepped = np.clip(xbar.w[mask] + dw * (1.0 + eps), 0.0, 1.0)
            xbar.w[mask] = stepped
        if np.array_equal(before, xbar.w):
            warnings.append("programming stalled at a saturated level before convergence")
            break

    g = xbar.conductances()
    converged = np.abs(g - target_g) / target_g <= tol
    return WriteVerifyReport(
        converged_fraction=float(converged.mean()),
        mean_iterations=float(iters.mean()),
        max_iterations=int(iters.max()),
        clipped_cells=clipped,
        warnings=tuple(warnings),
    )


def read_vmm(xbar: Crossbar, x: np.ndarray, t: float | None = None) -> np.ndarray:
    """Column currents for row voltages x (one vector or a batch of them).

    I_j = sum_i current(x_i, g_ij, t); within the Ohmic regime at the
    reference temperature this is exactly the conductance-matrix product.
    """
    t = xbar.params.conduction.t_ref if t is None else t
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != xbar.rows:
        raise ValueError(f"input length {x.shape[-1]} != rows {xbar.rows}")
    if np.any(np.abs(x) > V_READ_SWEEP_MAX):
        raise ValueError(f"read voltages must satisfy |v| <= {V_READ_SWEEP_MAX} V")
    p = xbar.params.conduction
    eff = x * activation_factor(t, p) * shape_factor(np.abs(x), t, p)
    return eff @ xbar.conductances()


class _JunctionIV:
    """Scalar I(V) of one junction with fast inversion.

    The conduction law is exactly linear below the enhancement onset and above
    the exponent clamp; the window in between is solved by a bracketed Newton
    iteration in log space.  Pure-math twin of ``conduction.current`` for the
    series-path solver's inner loop.
    """

    def __init__(self, g: float, t: float, p):
        self.base = g * activation_factor(t, p)
        self.c = p.beta / (K_B_EV * t)          # exponent slope vs sqrt(V)
        self.u0 = math.sqrt(p.v_pf_min)
        self.v_pf_min = p.v_pf_min
        self.v_clamp = p.v_clamp
        self.h_clamp = math.exp(self.c * (math.sqrt(p.v_clamp) - self.u0))
        self.i_onset = self.base * p.v_pf_min
        self.i_clamp = self.base * p.v_clamp * self.h_clamp

    def forward(self, v: float) -> float:
        if v <= self.v_pf_min:
            return self.base * v
        if v >= self.v_clamp:
            return self.base * v * self.h_clamp
        return self.base * v * math.exp(self.c * (math.sqrt(v) - self.u0))

    def slope(self, v: float) -> float:
        """dI/dV at v; positive everywhere."""
        if v <= self.v_pf_min:
            return self.base
        if v >= self.v_clamp:
            return self.base * self.h_clamp
        u = math.sqrt(v)
        return self.base * math.exp(self.c * (u - self.u0)) * (1.0 + self.c * u / 2.0)

    def invert(self, i_target: float) -> float:
        if i_target <= 0:
            return 0.0
        if i_target <= self.i_onset:
            return i_target / self.base
        if i_target >= self.i_clamp:
            return i_target / (self.base * self.h_clamp)
        ln_target = math.log(i_target / self.base)
        lo, hi = self.u0, math.sqrt(self.v_clamp)
        u = hi
        for _ in range(120):
            f = 2.0 * math.log(u) + self.c * (u - self.u0) - ln_target
            if f > 0:
                hi = u
            else:
                lo = u
            u_new = u - f / (2.0 / u + self.c)
            if not (lo < u_new < hi):
                u_new = 0.5 * (lo + hi)
            if abs(u_new - u) <= 1e-16 * u:
                u = u_new
                break
            u = u_new
        return u * u


def _series_current(gs: tuple[float, float, float], v_total: float, t: float, p) -> float:
    """Current through three junctions in series across v_total.

    Solved by a bracketed Newton iteration on the common current, using the
    analytic per-junction slopes.
    """
    devs = [_JunctionIV(g, t, p) for g in gs]
    i_hi = min(d.forward(v_total) for d in devs)
    lo, hi = 0.0, i_hi
    i = i_hi / 3.0
    for _ in range(200):
        biases = [d.invert(i) for d in devs]
        f = sum(biases) - v_total
        if f > 0:
            hi = i
        else:
            lo = i
        df = sum(1.0 / d.slope(v) for d, v in zip(devs, biases))
        i_new = i - f / df
        if not (lo < i_new < hi):
            i_new = 0.5 * (lo + hi)
        if abs(i_new - i) <= 4e-16 * i:
            i = i_new
            break
        i = i_new
    return i


def sneak_ratio(xbar: Crossbar, r: int, c: int, v_read: float, t: float | None = None) -> float:
    """Selected-cell current over the worst three-cell series sneak current.

    Every alternative route through one unselected row and column is solved as
    three junctions in series across the read voltage; the reported ratio uses
    the strongest such path.  A single row or column has no path (+inf).
    """
    if not (0 <= r < xbar.rows and 0 <= c < xbar.cols):
        raise IndexError(f"cell ({r}, {c}) out of bounds")
    if v_read <= 0 or not np.isfinite(v_read):
        raise ValueError(f"v_read must be positive and finite, got {v_read}")
    t = xbar.params.conduction.t_ref if t is None else t
    if xbar.rows < 2 or xbar.cols < 2:
        return float("inf")
    p = xbar.params.conduction
    g = xbar.conductances()
    i_selected = current(v_read, float(g[r, c]), t, p)
    worst = 0.0
    for r2 in range(xbar.rows):
        if r2 == r:
            continue
        for c2 in range(xbar.cols):
            if c2 == c:
                continue
            path = (float(g[r, c2]), float(g[r2, c2]), float(g[r2, c]))
            worst = max(worst, _series_current(path, v_read, t, p))
    return i_selected / worst
