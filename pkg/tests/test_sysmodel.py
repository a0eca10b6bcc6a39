import math

import numpy as np
import pytest

from negimag.signal import Signal, truncate
from negimag.sysmodel import (
    LTI,
    BUILTIN_NAMES,
    ModelError,
    Nonlinear,
    Parallel,
    RationalTF,
    Scaled,
    SimulationError,
    StateSpace,
    battery_response,
    builtin,
    dc_gain,
    freq_response,
    gain_estimate,
    instantaneous_gain,
    instantaneous_gain_info,
    routh_hurwitz_stable,
    simulate,
    simulate_batch,
    tf_to_ss,
)

from conftest import exp_signal


def lag():
    return LTI.from_tf((1.0,), (1.0, 1.0))


class TestRationalTF:
    @pytest.mark.parametrize(
        "den, stable",
        [((1, 1), True), ((1, 3, 2), True), ((1, 0, 1), False), ((1, -1), False),
         ((1, 2, 3, 4), True), ((1, 1, 1, 2), False), ((2.0,), True)],
    )
    def test_routh_hurwitz(self, den, stable):
        assert routh_hurwitz_stable(den) is stable
        if len(den) > 1:
            assert stable == bool(np.all(np.roots(den).real < 0))

    def test_rejects_unstable_and_improper(self):
        with pytest.raises(ModelError):
            RationalTF((1.0,), (1.0, -1.0))
        with pytest.raises(ModelError):
            RationalTF((1.0, 0.0, 0.0), (1.0, 1.0))


class TestRealization:
    def test_first_order_canonical(self):
        ss = tf_to_ss(RationalTF((1.0,), (1.0, 1.0)))
        assert ss.A.tolist() == [[-1.0]] and ss.B.tolist() == [[1.0]]
        assert ss.C.tolist() == [[1.0]] and ss.D.tolist() == [[0.0]]

    def test_static_gain(self):
        ss = tf_to_ss(RationalTF((1.0,), (1.0,)))
        assert ss.A.shape == (0, 0) and ss.D.tolist() == [[1.0]]

    def test_feedthrough_split(self):
        ss = tf_to_ss(RationalTF((-1.0, -2.0), (1.0, 1.0)))
        assert ss.D.tolist() == [[-1.0]]
        assert ss(0.0)[0, 0] == pytest.approx(-2.0)

    def test_frequency_fidelity(self):
        rng = np.random.default_rng(11)
        tf = RationalTF((0.5, -1.0, 2.0, 3.0), (1.0, 4.0, 6.0, 4.0))
        ss = tf_to_ss(tf)
        for w in rng.uniform(0.01, 100.0, 10):
            ref = tf(1j * w)
            assert abs(ss(1j * w)[0, 0] - ref) <= 1e-9 * abs(ref)


class TestFreqResponse:
    def test_examples(self):
        assert freq_response(builtin("C2"), 1.0)[0, 0] == pytest.approx(0.05 - 0.05j, abs=1e-15)
        assert dc_gain(LTI.from_tf((1.0,), (1.0, 2.0)))[0, 0] == pytest.approx(0.5)
        assert dc_gain(builtin("G"))[0, 0] == pytest.approx(-0.5)
        assert freq_response(builtin("4G"), math.inf)[0, 0] == -4.0

    def test_composites(self):
        sys_ = Parallel(Scaled(0.5, builtin("C3")), builtin("G"))
        assert dc_gain(sys_)[0, 0] == pytest.approx(0.5 - 0.5)

    def test_nonlinear_rejected(self):
        with pytest.raises(ModelError):
            freq_response(builtin("paper-P"), 1.0)


class TestSimulate:
    def test_zero_input_zero_output(self):
        for name in ("paper-P", "C4", "C1"):
            y, _ = simulate(builtin(name), Signal.zeros(1e-3, 2.0))
            assert np.all(y.samples == 0.0)

    def test_lag_convolution(self):
        y, _ = simulate(lag(), exp_signal(horizon=5.0))
        assert y.samples[1000, 0] == pytest.approx(math.exp(-1.0), abs=1e-6)

    def test_plant_integral_identity(self):
        u = exp_signal(horizon=40.0)
        y, _ = simulate(builtin("paper-P"), u)
        total = y.samples[:, 0] @ np.r_[0.5, np.ones(len(y) - 2), 0.5] * u.dt
        assert total == pytest.approx(1.0, abs=1e-2)

    def test_rk4_fourth_order(self):
        errs = []
        for dt in (0.04, 0.02, 0.01):
            u = exp_signal(dt=dt, horizon=4.0)
            y, _ = simulate(lag(), u)
            errs.append(np.max(np.abs(y.samples[:, 0] - u.t * np.exp(-u.t))))
        assert errs[0] / errs[1] >= 8 and errs[1] / errs[2] >= 8

    def test_nonlinear_rk4_matches_linear_path(self):
        # The same ODE through the expression path and the exact-step path.
        nl = Nonlinear.from_exprs(("-x1 + u1",), ("x1",))
        u = exp_signal(horizon=3.0)
        assert np.allclose(simulate(nl, u)[0].samples, simulate(lag(), u)[0].samples, rtol=1e-12, atol=1e-15)

    def test_causality(self, small_battery):
        u = Signal(small_battery.dt, small_battery[2].samples[:10001])
        for name in ("paper-P", "C1", "C5"):
            y_full, _ = simulate(builtin(name), u)
            y_cut, _ = simulate(builtin(name), truncate(u, 7.0))
            k = int(7.0 / u.dt)
            assert np.allclose(y_full.samples[: k + 1], y_cut.samples[: k + 1], rtol=0, atol=1e-12)

    def test_divergence_reported(self):
        blow = Nonlinear.from_exprs(("x1^2 + u1",), ("x1",))
        with pytest.raises(SimulationError) as info:
            simulate(blow, Signal.from_function(lambda t: np.full_like(t, 5.0), 1e-3, 5.0))
        assert info.value.time is not None

    def test_guard_reported(self):
        bad = Nonlinear.from_exprs(("-x1 + sqrt(u1)",), ("x1",))
        with pytest.raises(SimulationError):
            simulate(bad, Signal.from_function(lambda t: -t, 1e-3, 1.0))
        with pytest.raises(ModelError):
            Nonlinear.from_exprs(("u1/x1",), ("x1",))

    def test_dimension_mismatch(self):
        with pytest.raises(ModelError):
            simulate(lag(), Signal(1e-3, np.zeros((10, 2))))

    def test_battery_response_structure(self, small_battery):
        c5 = builtin("C5")
        direct, _ = simulate_batch(c5, list(small_battery))
        assembled = battery_response(c5, small_battery)
        assert np.allclose(direct, assembled, rtol=1e-12, atol=1e-14)
        half = battery_response(Scaled(0.5, builtin("paper-P")), small_battery)
        assert np.allclose(half, 0.5 * battery_response(builtin("paper-P"), small_battery), rtol=1e-15)


class TestNonlinearModel:
    def test_origin_must_be_equilibrium(self):
        with pytest.raises(ModelError):
            Nonlinear.from_exprs(("x1 + 1",), ("x1",))
        with pytest.raises(ModelError):
            Nonlinear.from_exprs(("-x1",), ("cos(x1)",))

    def test_variable_bounds(self):
        with pytest.raises(ModelError):
            Nonlinear.from_exprs(("-x2",), ("x1",))
        with pytest.raises(ModelError):
            Nonlinear.from_exprs(("-x1 + u2",), ("x1",))

    def test_feedthrough_flag(self):
        assert not builtin("paper-P").feedthrough
        assert Nonlinear.from_exprs(("-x1",), ("x1 + tanh(u1)",)).feedthrough

    def test_integrator_structure_detected(self):
        K = builtin("paper-P").dc_map()
        assert K.tolist() == [[1.0]]
        assert builtin("C5").dc_map()[0, 0] == pytest.approx(0.5)
        assert Nonlinear.from_exprs(("-x1^3 + u1",), ("x1",)).dc_map() is None


class TestGains:
    def test_exact_gains(self):
        assert instantaneous_gain(builtin("paper-P")) == 0.0
        assert instantaneous_gain(builtin("C1")) == 1.0
        assert instantaneous_gain(builtin("C4")) == 4.0
        assert instantaneous_gain(Scaled(0.25, builtin("C1"))) == 0.25

    def test_parallel_sum_flagged(self):
        info = instantaneous_gain_info(Parallel(builtin("C1"), builtin("G")))
        assert info.value == 2.0 and info.kind == "upper-bound"

    def test_probe_for_nonlinear_feedthrough(self):
        nl = Nonlinear.from_exprs(("-x1 + u1",), ("x1 + 0.5*u1",))
        info = instantaneous_gain_info(nl)
        assert info.kind == "probe"
        assert info.value == pytest.approx(0.5, abs=2e-2)

    def test_gain_estimate(self):
        slow = [Signal.from_function(lambda t: np.exp(-0.02 * t), 0.01, 400.0)]
        assert gain_estimate(lag(), slow) >= 0.9
        assert gain_estimate(builtin("zero"), slow) == 0.0
        assert gain_estimate(Scaled(0.5, builtin("unity")), slow) == pytest.approx(0.5)

    def test_gain_estimate_rejects_zero_input(self):
        with pytest.raises(ValueError):
            gain_estimate(lag(), [Signal.zeros(0.01, 1.0)])
        with pytest.raises(ValueError):
            gain_estimate(lag(), [])


class TestBuiltins:
    def test_all_build(self):
        for name in BUILTIN_NAMES:
            assert builtin(name).n == 1

    def test_examples(self):
        assert dc_gain(builtin("C2"))[0, 0] == pytest.approx(0.1)
        assert isinstance(builtin("C4"), Parallel)

    def test_unknown(self):
        with pytest.raises(ModelError):
            builtin("C9")

    def test_linearization_of_plant(self):
        # Small inputs see the linearized plant.
        u = exp_signal(horizon=10.0).scaled(1e-4)
        y_nl, _ = simulate(builtin("paper-P"), u)
        y_lin, _ = simulate(builtin("P-lin"), u)
        assert np.max(np.abs(y_nl.samples - y_lin.samples)) < 1e-12


def test_scaled_validation():
    with pytest.raises(ModelError):
        Scaled(1.5, lag())
    with pytest.raises(ModelError):
        Parallel(lag(), LTI(StateSpace(np.zeros((0, 0)), np.zeros((0, 2)), np.zeros((2, 0)), np.eye(2))))
