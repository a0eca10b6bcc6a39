import logging
import math

import numpy as np
import pytest

from negimag.battery import InputBattery
from negimag.ni_analysis import (
    BandConfig,
    NIVerdict,
    ccw_functional,
    check_ccw,
    check_ni,
    crosscheck_lti,
    example_identity_check,
    lti_ni_sweep,
)
from negimag.signal import Signal, rect_pulse
from negimag.sysmodel import LTI, ModelError, Parallel, Scaled, builtin, simulate

from conftest import exp_signal

NEG_LAG = LTI.from_tf((-1.0,), (1.0, 1.0), name="neg-lag")


class TestBandConfig:
    def test_defaults(self):
        b = BandConfig()
        assert b.omega_lo_star == 0.05 and b.omega_hi_star == 50.0
        assert b.omega_top == 80.0

    @pytest.mark.parametrize(
        "kw",
        [
            {"omega_lo_star": 0.0},
            {"omega_lo_star": 10.0, "omega_hi_star": 5.0},
            {"probe_bands": ((0.1, 50.0),)},
            {"probe_bands": ((0.05, 40.0),)},
            {"probe_bands": ()},
        ],
    )
    def test_rejects_bad_bands(self, kw):
        with pytest.raises(ValueError):
            BandConfig(**kw)


def test_not_ni_verdict_needs_witness():
    with pytest.raises(ValueError):
        NIVerdict("not-NI", 0.0)
    with pytest.raises(ValueError):
        NIVerdict("maybe", 0.0)


class TestCCWFunctional:
    def test_zero_output(self):
        u = exp_signal()
        y = Signal.zeros(u.dt, u.horizon)
        for T in (1.0, 5.0, None):
            assert ccw_functional(u, y, T) == 0.0

    def test_first_order_lag(self):
        # y = t e^{-t}; int (1 - t) e^{-2t} dt = 1/4
        u = exp_signal(horizon=40.0)
        y, _ = simulate(builtin("C3"), u)
        assert ccw_functional(u, y) == pytest.approx(0.25, abs=1e-3)

    @pytest.mark.parametrize("T", [0.5, 2.0, 10.0])
    def test_identity_is_exact_differential(self, T):
        u = exp_signal(dt=1e-3, horizon=10.0)
        expected = (math.exp(-2 * T) - 1.0) / 2.0
        assert ccw_functional(u, u, T) == pytest.approx(expected, abs=1e-5)
        assert ccw_functional(u, u, T) < 0


class TestCheckCCW:
    def test_paper_plant(self, battery):
        rep = check_ccw(builtin("paper-P"), battery)
        assert rep.passed
        assert rep.margins["min_full_horizon"] > 0
        assert rep.details["assumption1_evidence"]
        assert rep.details["assumption2_evidence"]
        assert "evidence" in rep.details["evidence_note"]

    def test_negative_lag_fails(self, small_battery):
        rep = check_ccw(NEG_LAG, small_battery)
        assert rep.status == "fail"
        assert rep.witness is not None

    def test_zero_system(self, small_battery):
        rep = check_ccw(builtin("zero"), small_battery)
        assert rep.passed
        assert rep.margins["min_value"] == 0.0
        assert rep.margins["min_full_horizon"] == 0.0

    def test_feedthrough_annotated(self, small_battery):
        rep = check_ccw(builtin("unity"), small_battery)
        assert "not established" in rep.details["nc_membership"]


class TestCheckNI:
    def test_lag_is_sni(self, small_battery):
        v = check_ni(builtin("C3"), small_battery)
        assert v.classification == "SNI"
        assert v.epsilon_hat > 0
        assert v.is_ni

    def test_identity_is_ni_not_sni(self, small_battery):
        v = check_ni(builtin("unity"), small_battery)
        assert v.classification == "NI"
        for band in v.details["bands"]:
            assert abs(band["min_r"]) < 1e-8

    def test_negative_lag_not_ni(self, small_battery):
        v = check_ni(NEG_LAG, small_battery)
        assert v.classification == "not-NI"
        assert v.witness is not None
        assert v.details["witness_scaled_violation"] < -1.0

    def test_paper_plant_not_falsified(self, battery):
        v = check_ni(builtin("paper-P"), battery)
        assert v.is_ni
        assert not v.flags

    def test_undecayed_outputs_inconclusive(self):
        # a pole at -0.01 is still far from settled after 40 s
        b = InputBattery(seed=1, count=4, horizon=40.0)
        v = check_ni(LTI.from_tf((0.01,), (1.0, 0.01)), b)
        assert v.classification == "inconclusive"

    def test_grid_must_cover_bands(self, small_battery):
        from negimag.signal import FreqGrid

        with pytest.raises(ValueError):
            check_ni(builtin("C2"), small_battery, grid=FreqGrid(60.0, 512))

    @pytest.mark.parametrize("tau", [0.25, 0.5, 1.0])
    def test_scale_invariance(self, small_battery, tau):
        base = check_ni(builtin("C2"), small_battery)
        scaled = check_ni(Scaled(tau, builtin("C2")), small_battery)
        assert scaled.classification == base.classification
        assert scaled.epsilon_hat == pytest.approx(tau * base.epsilon_hat, rel=1e-9)

    def test_monotone_bands(self, small_battery):
        sys = builtin("C2")
        mins = []
        for hi in (50.0, 60.0, 70.0, 80.0):
            bands = BandConfig(0.05, 50.0, ((0.05, hi),))
            v = check_ni(sys, small_battery, bands)
            assert v.classification == "SNI"
            mins.append(v.details["bands"][0]["min_r"])
        assert all(m > 0 for m in mins)
        assert all(b >= a - 1e-9 for a, b in zip(mins, mins[1:]))


@pytest.mark.parametrize("alpha, beta", [(1.0, 1.0), (0.3, 0.9), (0.0, 0.5), (0.0, 0.0)])
@pytest.mark.parametrize("g, h", [("C2", "G"), ("paper-P", "C3"), ("unity", "C2")])
def test_cone_closure(small_battery, g, h, alpha, beta):
    both = Parallel(Scaled(alpha, builtin(g)), Scaled(beta, builtin(h)))
    v = check_ni(both, small_battery)
    assert v.is_ni
    assert min(b["min_r"] for b in v.details["bands"]) >= -1e-6


class TestSweep:
    @pytest.mark.parametrize(
        "name, value",
        [("C3", 1.0), ("G", 0.4), ("C1", -1.0), ("C2", 0.1)],
    )
    def test_value_at_one(self, name, value):
        v = lti_ni_sweep(builtin(name), omega_grid=[1.0])
        assert v.details["min_eig"][0] == pytest.approx(value, rel=1e-12)

    def test_classifications(self):
        assert lti_ni_sweep(builtin("C3")).classification == "SNI"
        assert lti_ni_sweep(builtin("G")).classification == "SNI"
        assert lti_ni_sweep(builtin("unity")).classification == "NI"
        c1 = lti_ni_sweep(builtin("C1"))
        assert c1.classification == "not-NI"
        assert any("claim-mismatch" in f for f in c1.flags)

    def test_rejects_nonlinear(self):
        with pytest.raises(ModelError):
            lti_ni_sweep(builtin("paper-P"))


class TestCrosscheck:
    @pytest.mark.parametrize("name, cls", [("C2", "SNI"), ("unity", "NI"), ("C1", "not-NI")])
    def test_agreement(self, small_battery, name, cls):
        rep = crosscheck_lti(builtin(name), small_battery)
        assert rep.passed
        assert rep.details == {"sweep": cls, "battery": cls}

    def test_c1_flagged(self, small_battery):
        rep = crosscheck_lti(builtin("C1"), small_battery)
        assert any("claim-mismatch" in f for f in rep.flags)


class TestExampleIdentity:
    def test_zero_input(self):
        u = Signal.zeros(1e-3, 10.0)
        assert example_identity_check(u) == (0.0, 0.0)

    def test_exponential_input(self, caplog):
        u = exp_signal(horizon=40.0)
        with caplog.at_level(logging.WARNING, logger="negimag"):
            lhs, rhs = example_identity_check(u)
        assert lhs > 0 and rhs > 0
        # the two sides are recorded, not assumed equal
        if abs(lhs - rhs) > 0.05 * max(lhs, rhs):
            assert "identity gap" in caplog.text

    def test_pulse_input(self):
        u = rect_pulse(1e-3, 40.0, width=0.05)
        lhs, rhs = example_identity_check(u)
        assert np.isfinite(lhs) and np.isfinite(rhs)
