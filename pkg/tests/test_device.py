"""Device state-machine tests: update staircase, DC loop, read, energy, area."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ftjsim.conduction import K_B_EV, current
from ftjsim.device import (
    DeviceParams,
    DeviceState,
    Direction,
    PulseSpec,
    UpdateScheme,
    apply_pulse,
    dc_write,
    extract_memory_window,
    fit_update_curve,
    hysteresis_loop,
    read_resistance,
    read_trace_csv,
    run_sequence,
    scale_area,
    update_curve,
    update_curve_inverse,
    write_energy,
    write_trace_csv,
)
from ftjsim.errors import FitError

PARAMS = DeviceParams()
POT = Direction.POTENTIATE
DEP = Direction.DEPRESS


def full_pot_pulse(scheme=UpdateScheme.AMPLITUDE_RAMP):
    return PulseSpec(PARAMS.v_set_full, PARAMS.t_width_ref, scheme)


def full_dep_pulse(scheme=UpdateScheme.AMPLITUDE_RAMP):
    return PulseSpec(PARAMS.v_reset_full, PARAMS.t_width_ref, scheme)


class TestUpdateCurve:
    def test_potentiation_midpoint(self):
        # oracle: (1-exp(-0.95))/(1-exp(-1.9)) = 0.7211151780228631
        expected = (1 - math.exp(-0.95)) / (1 - math.exp(-1.9))
        assert update_curve(0.5, 1.9, POT) == pytest.approx(expected, rel=1e-12)
        assert expected == pytest.approx(0.7212, abs=2e-4)

    def test_depression_midpoint(self):
        # oracle: 1 - (1-exp(-2.15))/(1-exp(-4.3)) = 0.10433122311900134
        expected = 1 - (1 - math.exp(-2.15)) / (1 - math.exp(-4.3))
        assert update_curve(0.5, 4.3, DEP) == pytest.approx(expected, rel=1e-12)
        assert expected == pytest.approx(0.1043, abs=2e-4)

    @pytest.mark.parametrize("nu", [0.05, 0.5, 1.9, 4.3, 12.0])
    def test_endpoints_exact(self, nu):
        assert update_curve(0.0, nu, POT) == 0.0
        assert update_curve(1.0, nu, POT) == 1.0
        assert update_curve(0.0, nu, DEP) == 1.0
        assert update_curve(1.0, nu, DEP) == 0.0

    @pytest.mark.parametrize("nu", [1e-4, 1e-3, 0.01, 0.1, 0.5])
    def test_small_nu_converges_to_line(self, nu):
        x = np.linspace(0.0, 1.0, 501)
        assert np.max(np.abs(update_curve(x, nu, POT) - x)) < nu / 8
        assert np.max(np.abs(update_curve(x, nu, DEP) - (1 - x))) < nu / 8

    @given(x=st.floats(0.0, 1.0), nu=st.floats(0.01, 10.0))
    @settings(max_examples=200, deadline=None)
    def test_inverse_round_trip(self, x, nu):
        g = update_curve(x, nu, POT)
        assert update_curve_inverse(g, nu, POT) == pytest.approx(x, abs=1e-9)


class TestApplyPulse:
    def test_subthreshold_is_exact_noop(self):
        state = DeviceState.fresh(PARAMS, w=0.37)
        for amp in (-0.8, 0.8, 1.2, -1.2999, 0.0):
            out = apply_pulse(state, PulseSpec(amp, 50e-6), PARAMS)
            assert out is state  # bit-identical by construction

    def test_full_potentiation_reaches_lrs(self):
        state = DeviceState.fresh(PARAMS, w=0.0)
        for _ in range(PARAMS.n_levels):
            state = apply_pulse(state, full_pot_pulse(), PARAMS)
        assert state.w == 1.0
        assert state.conductance == state.g_lrs_dev

    def test_half_depression_level(self):
        # oracle: 25 of 50 depression steps at nu_d=4.3 -> normalized 0.10433...
        state = DeviceState.fresh(PARAMS, w=1.0)
        for _ in range(25):
            state = apply_pulse(state, full_dep_pulse(), PARAMS)
        expected = 1 - (1 - math.exp(-2.15)) / (1 - math.exp(-4.3))
        assert state.w == pytest.approx(expected, rel=1e-12)

    def test_saturation_at_endpoints(self):
        state = DeviceState.fresh(PARAMS, w=1.0)
        assert apply_pulse(state, full_pot_pulse(), PARAMS).w == 1.0
        state = DeviceState.fresh(PARAMS, w=0.0)
        assert apply_pulse(state, full_dep_pulse(), PARAMS).w == 0.0

    def test_direction_monotonicity(self):
        rng = np.random.default_rng(3)
        for w0 in rng.uniform(0, 1, 25):
            state = DeviceState.fresh(PARAMS, w=float(w0))
            assert apply_pulse(state, full_pot_pulse(), PARAMS).w >= state.w
            assert apply_pulse(state, full_dep_pulse(), PARAMS).w <= state.w

    def test_loop_closure(self):
        state = DeviceState.fresh(PARAMS, w=0.0)
        g0 = state.conductance
        for _ in range(PARAMS.n_levels):
            state = apply_pulse(state, full_pot_pulse(), PARAMS)
        for _ in range(PARAMS.n_levels):
            state = apply_pulse(state, full_dep_pulse(), PARAMS)
        assert state.conductance == pytest.approx(g0, rel=1e-12)

    def test_width_ramp_swaps_shapes(self):
        state = DeviceState.fresh(PARAMS, w=0.0)
        widthed = apply_pulse(state, full_pot_pulse(UpdateScheme.WIDTH_RAMP), PARAMS)
        assert widthed.w == pytest.approx(update_curve(1 / 50, 4.3, POT), rel=1e-12)

    def test_rejects_nonfinite(self):
        with pytest.raises(ValueError):
            PulseSpec(float("nan"), 50e-6)
        with pytest.raises(ValueError):
            PulseSpec(-1.6, 0.0)

    def test_w_stays_in_unit_interval(self):
        rng = np.random.default_rng(11)
        state = DeviceState.fresh(PARAMS, w=0.5)
        for _ in range(300):
            pulse = full_pot_pulse() if rng.random() < 0.5 else full_dep_pulse()
            state = apply_pulse(state, pulse, PARAMS)
            assert 0.0 <= state.w <= 1.0


class TestRunSequence:
    def test_full_loop_closes(self):
        start = DeviceState.fresh(PARAMS, w=0.0)
        trace, final = run_sequence(start, UpdateScheme.AMPLITUDE_RAMP,
                                    PARAMS.n_levels, PARAMS.n_levels, PARAMS)
        assert final.w == start.w
        assert final.conductance == pytest.approx(start.conductance, rel=1e-12)

    def test_trace_extremes_give_on_off(self):
        trace, _ = run_sequence(DeviceState.fresh(PARAMS), UpdateScheme.AMPLITUDE_RAMP,
                                PARAMS.n_levels, PARAMS.n_levels, PARAMS)
        g = np.array([pt.conductance for pt in trace])
        assert g.max() / g.min() == pytest.approx(PARAMS.conduction.on_off, rel=1e-12)

    def test_round_trip_nu_recovery(self):
        trace, _ = run_sequence(DeviceState.fresh(PARAMS), UpdateScheme.AMPLITUDE_RAMP,
                                PARAMS.n_levels, PARAMS.n_levels, PARAMS)
        pot = [pt for pt in trace if pt.direction == "potentiation"]
        dep = [pt for pt in trace if pt.direction == "depression"]
        fit_p = fit_update_curve([pt.count for pt in pot], [pt.conductance for pt in pot])
        fit_d = fit_update_curve([pt.count for pt in dep], [pt.conductance for pt in dep])
        assert fit_p.nu == pytest.approx(PARAMS.nu_p, rel=1e-6)
        assert fit_d.nu == pytest.approx(PARAMS.nu_d, rel=1e-6)
        assert fit_p.direction is POT and fit_d.direction is DEP

    def test_noise_perturbs_and_clamps(self):
        rng = np.random.default_rng(5)
        noise = lambda dw: dw * (1 + 0.3 * float(rng.standard_normal()))
        trace, final = run_sequence(DeviceState.fresh(PARAMS), UpdateScheme.AMPLITUDE_RAMP,
                                    50, 50, PARAMS, noise=noise)
        assert 0.0 <= final.w <= 1.0
        noiseless, _ = run_sequence(DeviceState.fresh(PARAMS), UpdateScheme.AMPLITUDE_RAMP,
                                    50, 50, PARAMS)
        assert any(a.conductance != b.conductance for a, b in zip(trace, noiseless))

    def test_noisy_staircase_is_unbiased(self):
        # The level counter rounds to the nearest level, so per-step noise
        # must not systematically stretch or compress the fitted staircase.
        from ftjsim.variability import VariabilityParams, step_sampler

        vp = VariabilityParams(sigma_c2c=0.10)
        errs = []
        for s in range(30):
            rng = np.random.default_rng(1000 + s)
            trace, _ = run_sequence(DeviceState.fresh(PARAMS), UpdateScheme.AMPLITUDE_RAMP,
                                    50, 0, PARAMS, noise=step_sampler(vp, rng))
            pot = [pt for pt in trace if pt.direction == "potentiation"]
            fit = fit_update_curve([pt.count for pt in pot], [pt.conductance for pt in pot])
            errs.append(abs(fit.nu / PARAMS.nu_p - 1))
        assert np.mean(errs) < 0.05

    def test_counts_validated(self):
        with pytest.raises(ValueError):
            run_sequence(DeviceState.fresh(PARAMS), UpdateScheme.AMPLITUDE_RAMP,
                         PARAMS.n_levels + 1, 0, PARAMS)

    def test_trace_csv_round_trip(self, tmp_path):
        trace, _ = run_sequence(DeviceState.fresh(PARAMS), UpdateScheme.AMPLITUDE_RAMP,
                                10, 10, PARAMS)
        path = tmp_path / "trace.csv"
        write_trace_csv(path, trace)
        back = read_trace_csv(path)
        assert len(back) == len(trace)
        assert back[3].count == trace[3].count
        assert back[3].conductance == pytest.approx(trace[3].conductance, rel=1e-11)


class TestFitUpdateCurve:
    @pytest.mark.parametrize("nu", [0.5, 1.9, 4.3])
    def test_noise_free_recovery(self, nu):
        params = DeviceParams(nu_p=nu, nu_d=nu)
        trace, _ = run_sequence(DeviceState.fresh(params), UpdateScheme.AMPLITUDE_RAMP,
                                50, 0, params)
        pot = [pt for pt in trace if pt.direction == "potentiation"]
        fit = fit_update_curve([pt.count for pt in pot], [pt.conductance for pt in pot])
        assert fit.nu == pytest.approx(nu, rel=1e-4)  # well inside the 0.1 % requirement

    def test_linear_limit(self):
        counts = np.arange(51)
        g = update_curve(counts / 50, 0.01, POT)
        line = counts / 50
        assert np.max(np.abs(g - line)) < 0.01  # within 1 % of a straight line
        fit = fit_update_curve(counts, g)
        assert fit.nu == pytest.approx(0.01, rel=1e-3)

    def test_noisy_recovery_statistics(self):
        rng = np.random.default_rng(17)
        errs = []
        for _ in range(100):
            counts = np.arange(51)
            g = update_curve(counts / 50, 1.9, POT)
            steps = np.diff(g) * (1 + 0.10 * rng.standard_normal(50))
            noisy = np.clip(np.concatenate([[0.0], np.cumsum(steps)]), 0, None)
            fit = fit_update_curve(counts, noisy)
            errs.append(abs(fit.nu / 1.9 - 1))
        assert np.mean(errs) < 0.25

    def test_non_monotone_warns_without_failing(self):
        counts = np.arange(10)
        g = update_curve(counts / 9, 1.9, POT)
        g[4], g[5] = g[5], g[4]
        fit = fit_update_curve(counts, g)
        assert any("non-monotone" in w for w in fit.warnings)

    def test_too_few_points_raises(self):
        with pytest.raises(FitError):
            fit_update_curve([0, 1, 2], [0.0, 0.5, 1.0])


class TestDcWrite:
    def test_full_set(self):
        state = DeviceState.fresh(PARAMS, w=0.0)
        assert dc_write(state, -1.6, PARAMS).w == 1.0

    def test_window_is_inert(self):
        state = DeviceState.fresh(PARAMS, w=1.0)
        for v in (-0.59, 0.0, 0.5, 0.79):
            assert dc_write(state, v, PARAMS) is state

    def test_default_reset_coercive_from_window(self):
        # v_c_reset = v_c_set + memory window = -0.6 + 1.4 = +0.8 V
        assert PARAMS.v_c_reset == pytest.approx(PARAMS.v_c_set + 1.4)
        assert PARAMS.memory_window == pytest.approx(1.4)

    def test_partial_and_one_sided(self):
        state = DeviceState.fresh(PARAMS, w=0.0)
        half_set = dc_write(state, -1.1, PARAMS)
        assert half_set.w == pytest.approx(0.5)
        # One-sided: a weaker SET never undoes a stronger one.
        assert dc_write(half_set, -0.7, PARAMS).w == half_set.w

    def test_full_reset(self):
        state = DeviceState.fresh(PARAMS, w=1.0)
        assert dc_write(state, 2.4, PARAMS).w == 0.0


class TestHysteresisLoop:
    def test_window_matches_coercive_separation(self):
        loop = hysteresis_loop(PARAMS, -2.0, 3.0, 101)  # 0.05 V grid
        v_set, v_reset, window = extract_memory_window(loop)
        assert abs(window - 1.4) <= 0.05 + 1e-12
        assert v_set == pytest.approx(-0.6, abs=0.05)
        assert v_reset == pytest.approx(0.8, abs=0.05)

    def test_flat_loop_below_reset(self):
        loop = hysteresis_loop(PARAMS, -2.0, 0.5, 41)
        np.testing.assert_allclose(loop.r_up, loop.r_up[0], rtol=1e-12)
        np.testing.assert_allclose(loop.r_down, loop.r_up[0], rtol=1e-12)

    def test_branch_ratio_at_zero_bias(self):
        loop = hysteresis_loop(PARAMS, -2.0, 3.0, 101)
        i_up = np.argmin(np.abs(loop.v_up))
        i_down = np.argmin(np.abs(loop.v_down))
        ratio = loop.r_down[i_down] / loop.r_up[i_up]
        assert ratio == pytest.approx(PARAMS.conduction.on_off, rel=1e-9)

    def test_requires_start_below_set_coercive(self):
        with pytest.raises(ValueError):
            hysteresis_loop(PARAMS, -0.5, 3.0, 41)


class TestReadResistance:
    def test_lrs_at_100mv(self):
        lrs = DeviceState.fresh(PARAMS, w=1.0)
        assert read_resistance(lrs, 0.1, 300.0, PARAMS) == pytest.approx(1.0e8, rel=1e-12)

    def test_hrs_at_100mv(self):
        hrs = DeviceState.fresh(PARAMS, w=0.0)
        assert read_resistance(hrs, 0.1, 300.0, PARAMS) == pytest.approx(7.0e8, rel=1e-12)

    def test_field_lowering_at_300mv(self):
        # oracle: resistance drops by h(0.3) = 4.7358 relative to the Ohmic value
        lrs = DeviceState.fresh(PARAMS, w=1.0)
        h = math.exp(0.4 * (math.sqrt(0.3) - math.sqrt(0.2)) / (K_B_EV * 300.0))
        assert read_resistance(lrs, 0.3, 300.0, PARAMS) == pytest.approx(1.0e8 / h, rel=1e-12)

    def test_zero_bias_rejected(self):
        with pytest.raises(ValueError):
            read_resistance(DeviceState.fresh(PARAMS), 0.0, 300.0, PARAMS)


class TestWriteEnergy:
    def test_depression_below_picojoule(self):
        # oracle: (1e-8/7) * 2.4^2 * 5e-5 = 4.1142857e-13 J
        hrs = DeviceState.fresh(PARAMS, w=0.0)
        e = write_energy(hrs, PulseSpec(2.4, 50e-6))
        assert e == pytest.approx((1e-8 / 7) * 2.4**2 * 50e-6, rel=1e-12)
        assert e < 1e-12

    def test_potentiation_energy(self):
        # oracle: 1e-8 * 1.6^2 * 5e-5 = 1.28e-12 J
        lrs = DeviceState.fresh(PARAMS, w=1.0)
        assert write_energy(lrs, PulseSpec(-1.6, 50e-6)) == pytest.approx(1.28e-12, rel=1e-12)

    def test_vanishing_width(self):
        lrs = DeviceState.fresh(PARAMS, w=1.0)
        assert write_energy(lrs, PulseSpec(-1.6, 1e-300)) == pytest.approx(0.0, abs=1e-300)


class TestScaleArea:
    def test_submicron_current_below_picoamp(self):
        # oracle: 1e-9 A * (1 um^2 / 14400 um^2) = 6.944e-14 A
        small = scale_area(PARAMS, 1.0)
        lrs = DeviceState.fresh(small, w=1.0)
        i = current(0.1, lrs.conductance, 300.0, small.conduction)
        assert i == pytest.approx(1e-9 / 14400, rel=1e-12)
        assert i < 1e-12

    def test_reference_area_is_identity(self):
        same = scale_area(PARAMS, PARAMS.conduction.area_ref)
        assert same.g_lrs == PARAMS.g_lrs
        assert same.g_hrs == PARAMS.g_hrs

    def test_doubling_area_doubles_current_everywhere(self):
        doubled = scale_area(PARAMS, 2 * PARAMS.area)
        for w in (0.0, 0.3, 1.0):
            for v in (0.05, 0.25, 0.5):
                for t in (300.0, 340.0):
                    i1 = current(v, DeviceState.fresh(PARAMS, w=w).conductance, t, PARAMS.conduction)
                    i2 = current(v, DeviceState.fresh(doubled, w=w).conductance, t, doubled.conduction)
                    assert i2 == pytest.approx(2 * i1, rel=1e-12)

    def test_voltages_unchanged(self):
        small = scale_area(PARAMS, 1.0)
        assert small.v_c_set == PARAMS.v_c_set
        assert small.v_pulse_threshold == PARAMS.v_pulse_threshold


class TestParamsValidation:
    def test_threshold_must_clear_half_select(self):
        with pytest.raises(ValueError):
            DeviceParams(v_pulse_threshold=1.1)  # 2.4/2 = 1.2 > 1.1

    def test_threshold_must_clear_coercive(self):
        with pytest.raises(ValueError):
            DeviceParams(v_c_reset=1.4, v_reset_full=2.4, v_pulse_threshold=1.3)

    def test_coercive_ordering(self):
        with pytest.raises(ValueError):
            DeviceParams(v_c_set=0.2)

    def test_state_bounds(self):
        with pytest.raises(ValueError):
            DeviceState(w=1.2, g_hrs_dev=1e-9, g_lrs_dev=1e-8)
        with pytest.raises(ValueError):
            DeviceState(w=0.5, g_hrs_dev=1e-8, g_lrs_dev=1e-9)
