"""Cycle-to-cycle noise, device-to-device dispersion and retention.

All randomness is driven by numpy Generators.  Population sampling spawns one
child stream per device from the generator it is handed, so device i's
endpoints depend only on the parent seed and on i, never on how the sampling
work is scheduled.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Callable

import numpy as np

from .device import DeviceParams, DeviceState

TRUNCATION_SIGMAS = 3.0


@dataclass(frozen=True)
class VariabilityParams:
    sigma_c2c: float = 0.10        # relative std of each update step
    sigma_d2d_hrs: float = 0.10    # std of ln(HRS conductance) across devices
    sigma_d2d_lrs: float = 0.10    # std of ln(LRS conductance) across devices
    drift_per_decade: float = 0.0  # relative conductance loss per decade of seconds
    seed: int = 12345

    def __post_init__(self) -> None:
        for name in ("sigma_c2c", "sigma_d2d_hrs", "sigma_d2d_lrs"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        if not (0 <= self.seed < 2**64):
            raise ValueError(f"seed must be an unsigned 64-bit integer, got {self.seed}")


def truncated_normal(rng: np.random.Generator, sigma: float, size: int | None = None):
    """Normal(0, sigma) samples truncated (by resampling) to +-3 sigma."""
    if sigma == 0:
        return 0.0 if size is None else np.zeros(size)
    n = 1 if size is None else size
    out = rng.normal(0.0, sigma, n)
    bound = TRUNCATION_SIGMAS * sigma
    bad = np.abs(out) > bound
    while bad.any():
        out[bad] = rng.normal(0.0, sigma, int(bad.sum()))
        bad = np.abs(out) > bound
    return float(out[0]) if size is None else out


def perturb_step(delta_w: float, vp: VariabilityParams, rng: np.random.Generator) -> float:
    """Multiplicative cycle-to-cycle jitter on one state increment."""
    return delta_w * (1.0 + truncated_normal(rng, vp.sigma_c2c))


def step_sampler(vp: VariabilityParams, rng: np.random.Generator) -> Callable[[float], float]:
    """Closure form of perturb_step, for sequence runners."""
    return lambda delta_w: perturb_step(delta_w, vp, rng)


def sample_endpoint_arrays(
    n: int, params: DeviceParams, vp: VariabilityParams, rng: np.random.Generator
) -> tuple[np.ndarray, np.ndarray]:
    """Per-device endpoint conductances with log-normal dispersion.

    Draws two normals per device from that device's own child stream; if a
    draw inverts the endpoint ordering the pair is swapped.
    """
    g_hrs = np.empty(n)
    g_lrs = np.empty(n)
    children = rng.spawn(n)
    for i, child in enumerate(children):
        g_hrs[i] = params.g_hrs * math.exp(child.normal(0.0, vp.sigma_d2d_hrs))
        g_lrs[i] = params.g_lrs * math.exp(child.normal(0.0, vp.sigma_d2d_lrs))
    inverted = g_hrs >= g_lrs
    if inverted.any():
        g_hrs[inverted], g_lrs[inverted] = g_lrs[inverted].copy(), g_hrs[inverted].copy()
    return g_hrs, g_lrs


def sample_population(
    n: int, params: DeviceParams, vp: VariabilityParams, rng: np.random.Generator
) -> list[DeviceState]:
    """n fresh devices with sampled endpoints, all starting at the HRS."""
    g_hrs, g_lrs = sample_endpoint_arrays(n, params, vp, rng)
    return [DeviceState(w=0.0, g_hrs_dev=float(h), g_lrs_dev=float(l))
            for h, l in zip(g_hrs, g_lrs)]


def apply_retention(state: DeviceState, elapsed_s: float, vp: VariabilityParams) -> DeviceState:
    """Conductance after a storage interval.

    Default drift is zero (the devices are retention-stable on the modeled
    timescales), so this is the identity.  With a nonzero rate the state
    conductance loses ``drift_per_decade`` per decade of seconds beyond 1 s,
    clamped at the endpoints.
    """
    if elapsed_s < 0 or not np.isfinite(elapsed_s):
        raise ValueError(f"elapsed time must be finite and >= 0, got {elapsed_s}")
    decades = math.log10(elapsed_s) if elapsed_s > 1.0 else 0.0
    if vp.drift_per_decade == 0.0 or decades == 0.0:
        return state
    g = state.conductance * (1.0 - vp.drift_per_decade * decades)
    span = state.g_lrs_dev - state.g_hrs_dev
    w = float(np.clip((g - state.g_hrs_dev) / span, 0.0, 1.0))
    return replace(state, w=w)


def derive_seed(master_seed: int, stream_index: int) -> int:
    """Stable 64-bit sub-seed: child ``stream_index`` of the master seed.

    Sub-seeds are SeedSequence(master, spawn_key=(index,)) states, so every
    consumer gets an independent stream from one top-level seed.
    """
    ss = np.random.SeedSequence(entropy=master_seed, spawn_key=(stream_index,))
    return int(ss.generate_state(1, np.uint64)[0])
