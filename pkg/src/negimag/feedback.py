"""Positive-feedback interconnections and stability verdicts.

The loop is::

    u1 = d1 + u2,   y1 = P u1,   y2 = d2 + y1,   u2 = C y2

Certification (premises of the stability results) is reported separately
from simulation diagnostics; a finite trace can only falsify stability.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .battery import InputBattery
from .expr import EvaluationError
from .iqc import XiConstraint, b_membership, bc_membership, complement, tau_form_extreme
from .ni_analysis import BandConfig, check_ccw, check_ni, lti_ni_sweep
from .report import VerdictReport, jsonable
from .signal import Signal, rect_pulse, trapezoid_weights
from .sysmodel import (
    ModelError,
    Scaled,
    SimulationError,
    dc_gain,
    freq_response,
    half_step_inputs,
    instantaneous_gain_info,
    scalar_realization,
)

__all__ = [
    "LoopTrace",
    "ImpulseResult",
    "StabilityVerdict",
    "wellposed_gate",
    "simulate_loop",
    "impulse_experiment",
    "tail_ratio",
    "check_theorem_sni2",
    "check_corollary_nl",
    "check_corollary_lti",
    "DEFAULT_TAU_GRID",
]

DEFAULT_TAU_GRID = (0.0, 0.25, 0.5, 0.75, 1.0)
OVERFLOW_LEVEL = 1e150


class LoopError(SimulationError):
    """The algebraic loop could not be resolved."""


@dataclass(frozen=True, eq=False)
class LoopTrace:
    d1: Signal
    d2: Signal
    u1: Signal
    y1: Signal
    y2: Signal
    u2: Signal
    overflow_time: float | None = None

    @property
    def t(self):
        return self.y1.t

    @property
    def complete(self):
        return self.overflow_time is None


@dataclass(frozen=True, eq=False)
class ImpulseResult:
    trace: LoopTrace
    tail_ratio: float
    peak: float
    label: str
    pulse_width: float
    horizon: float

    def to_dict(self):
        return {
            "label": self.label,
            "tail_ratio": jsonable(self.tail_ratio),
            "peak_abs_y1": jsonable(self.peak),
            "pulse_width": self.pulse_width,
            "horizon": self.horizon,
            "overflow_time": self.trace.overflow_time,
        }


@dataclass
class StabilityVerdict:
    rule: str
    premises: dict
    diagnostics: dict = field(default_factory=dict)
    flags: list = field(default_factory=list)

    @property
    def conclusion(self):
        ok = all(r.passed for r in self.premises.values())
        return "certified" if ok else "not-certified"

    @property
    def certified(self):
        return self.conclusion == "certified"

    def to_dict(self):
        return {
            "rule": self.rule,
            "conclusion": self.conclusion,
            "premises": {k: self.premises[k].to_dict() for k in sorted(self.premises)},
            "diagnostics": jsonable(self.diagnostics),
            "flags": sorted(set(self.flags)),
        }


# ---------------------------------------------------------------------------
# Well-posedness and loop simulation


def wellposed_gate(p, c, margin=1e-9):
    """Instantaneous-gain product must stay below one."""
    gp, gc = instantaneous_gain_info(p), instantaneous_gain_info(c)
    prod = gp.value * gc.value
    flags = [f"{kind} gain is an upper bound" for kind, g in (("P", gp), ("C", gc)) if g.kind == "upper-bound"]
    return VerdictReport(
        "wellposed",
        "pass" if prod < 1.0 - margin else "fail",
        {"gamma_p": gp.value, "gamma_c": gc.value, "product": prod},
        details={"gamma_p_kind": gp.kind, "gamma_c_kind": gc.kind},
        flags=flags,
    )


def _algebra_solver(rp, rc, max_iter, tol):
    """Return ``solve(xp, xc, d1, d2) -> (u1, y1, y2, u2)`` for the current states."""
    zero_p = [0.0] * rp.n
    zero_c = [0.0] * rc.n
    hp, hc = rp.h, rc.h

    if not rp.feedthrough:
        def solve(xp, xc, d1, d2):
            y1 = hp(xp, zero_p)
            y2 = [a + b for a, b in zip(d2, y1)]
            u2 = hc(xc, y2)
            return [a + b for a, b in zip(d1, u2)], y1, y2, u2
        return solve

    if not rc.feedthrough:
        def solve(xp, xc, d1, d2):
            u2 = hc(xc, zero_c)
            u1 = [a + b for a, b in zip(d1, u2)]
            y1 = hp(xp, u1)
            return u1, y1, [a + b for a, b in zip(d2, y1)], u2
        return solve

    def solve(xp, xc, d1, d2):
        u1 = list(d1)
        for _ in range(max_iter):
            y1 = hp(xp, u1)
            y2 = [a + b for a, b in zip(d2, y1)]
            u2 = hc(xc, y2)
            new = [a + b for a, b in zip(d1, u2)]
            step = max(abs(a - b) for a, b in zip(new, u1))
            u1 = new
            if step <= tol * (1.0 + max(abs(a) for a in u1)):
                y1 = hp(xp, u1)
                y2 = [a + b for a, b in zip(d2, y1)]
                return u1, y1, y2, hc(xc, y2)
        raise LoopError(f"algebraic loop did not converge in {max_iter} iterations")

    return solve


def simulate_loop(p, c, d1, d2=None, max_iter=50, tol=1e-12, gate=True):
    """RK4 on the joint state of ``P`` and ``C`` driven by ``(d1, d2)``.

    The algebraic part of the loop is solved at every stage: by substitution
    when at most one side has direct feedthrough, otherwise by fixed-point
    iteration (a contraction when the gain product is below one).

    Divergence does not raise: the trace is cut at the last finite sample and
    ``overflow_time`` records when the state left the representable range.
    """
    if gate:
        g = wellposed_gate(p, c)
        if not g.passed:
            raise ModelError(f"loop is not well posed: gain product {g.margins['product']:g} >= 1")
    if p.n != c.n:
        raise ModelError("P and C must share the signal dimension")
    d2 = d2 if d2 is not None else Signal(d1.dt, np.zeros_like(d1.samples))
    if d2.dt != d1.dt or len(d2) != len(d1) or d2.dim != d1.dim:
        raise ModelError("d1 and d2 must share a grid")
    if d1.dim != p.n:
        raise ModelError(f"disturbance dimension {d1.dim} does not match system dimension {p.n}")
    rp, rc = scalar_realization(p), scalar_realization(c)
    solve = _algebra_solver(rp, rc, max_iter, tol)
    fp, fc = rp.f, rc.f
    kp = rp.n_x
    dt, N = d1.dt, len(d1)
    D1, D2 = d1.samples.tolist(), d2.samples.tolist()
    M1, M2 = half_step_inputs(d1.samples).tolist(), half_step_inputs(d2.samples).tolist()
    half, sixth = dt / 2.0, dt / 6.0

    def deriv(x, a, b):
        xp, xc = x[:kp], x[kp:]
        u1, y1, y2, u2 = solve(xp, xc, a, b)
        return fp(xp, u1) + fc(xc, y2), (u1, y1, y2, u2)

    x = [0.0] * (rp.n_x + rc.n_x)
    rec = {k: [] for k in ("u1", "y1", "y2", "u2")}
    overflow = None
    last = N
    for k in range(N):
        a0, b0 = D1[k], D2[k]
        try:
            k1, sig = deriv(x, a0, b0)
        except (OverflowError, FloatingPointError):
            overflow, last = k * dt, k
            break
        except EvaluationError as exc:
            raise SimulationError(str(exc), time=k * dt) from exc
        if not all(math.isfinite(v) and abs(v) < OVERFLOW_LEVEL for s in sig for v in s):
            overflow, last = k * dt, k
            break
        for name, v in zip(("u1", "y1", "y2", "u2"), sig):
            rec[name].append(v)
        if k == N - 1:
            break
        a1, b1 = D1[k + 1], D2[k + 1]
        am, bm = M1[k], M2[k]
        try:
            k2, _ = deriv([xi + half * ki for xi, ki in zip(x, k1)], am, bm)
            k3, _ = deriv([xi + half * ki for xi, ki in zip(x, k2)], am, bm)
            k4, _ = deriv([xi + dt * ki for xi, ki in zip(x, k3)], a1, b1)
            x = [xi + sixth * (q1 + 2.0 * q2 + 2.0 * q3 + q4) for xi, q1, q2, q3, q4 in zip(x, k1, k2, k3, k4)]
        except (OverflowError, FloatingPointError):
            overflow, last = (k + 1) * dt, k + 1
            break
        except EvaluationError as exc:
            raise SimulationError(str(exc), time=k * dt) from exc
        if not all(math.isfinite(v) and abs(v) < OVERFLOW_LEVEL for v in x):
            overflow, last = (k + 1) * dt, k + 1
            break
    if last < 1:
        raise SimulationError("loop diverged at the first sample", time=0.0)
    n = p.n

    def sig(rows):
        return Signal(dt, np.asarray(rows, dtype=float).reshape(-1, n))

    return LoopTrace(
        Signal(dt, d1.samples[:last]),
        Signal(dt, d2.samples[:last]),
        sig(rec["u1"][:last]),
        sig(rec["y1"][:last]),
        sig(rec["y2"][:last]),
        sig(rec["u2"][:last]),
        overflow,
    )


def tail_ratio(y):
    """``int_{T/2}^T |y|^2 / int_0^{T/2} |y|^2`` (inf when the first half is zero)."""
    e = np.sum(y.samples**2, axis=1)
    mid = (len(e) - 1) // 2
    first = float(e[: mid + 1] @ trapezoid_weights(mid + 1)) * y.dt
    second = float(e[mid:] @ trapezoid_weights(len(e) - mid)) * y.dt
    if first == 0.0:
        return 0.0 if second == 0.0 else math.inf
    return second / first


@lru_cache(maxsize=32)
def _impulse_trace(p, c, pulse_width, horizon, dt):
    d1 = rect_pulse(dt, horizon, width=pulse_width, area=1.0, dim=p.n)
    return simulate_loop(p, c, d1)


def impulse_experiment(p, c, pulse_width=0.01, horizon=50.0, dt=1e-3, decay_below=0.1, grow_above=1.0):
    """Unit-area pulse into ``d1`` (``d2 = 0``) and a tail-energy label for ``y1``."""
    if not (0 < pulse_width < horizon):
        raise ValueError("pulse width must lie in (0, horizon)")
    if not decay_below <= grow_above:
        raise ValueError("decay threshold must not exceed growth threshold")
    trace = _impulse_trace(p, c, float(pulse_width), float(horizon), float(dt))
    R = tail_ratio(trace.y1)
    peak = float(np.max(np.abs(trace.y1.samples)))
    if not trace.complete:
        label = "growing/overflow"
    elif R < decay_below:
        label = "decaying"
    elif R > grow_above:
        label = "growing"
    else:
        label = "indeterminate"
    return ImpulseResult(trace, R, peak, label, float(pulse_width), float(horizon))


# ---------------------------------------------------------------------------
# Stability verdicts


def _ni_report(name, verdict, accept):
    return VerdictReport(
        name,
        "pass" if verdict.classification in accept else ("inconclusive" if verdict.classification == "inconclusive" else "fail"),
        {"epsilon_hat": verdict.epsilon_hat},
        witness=verdict.witness,
        details={"classification": verdict.classification, "required": list(accept)},
        flags=list(verdict.flags),
    )


def _tau_bc_premise(c, xi, battery, tau_grid, tol=1e-9):
    """``tau C`` in ``B_C(Xi, 0)`` on the tau grid, with exact interval analysis when possible."""
    c0 = xi.with_epsilon(0.0)
    reports = {tau: bc_membership(Scaled(tau, c), c0, battery) for tau in tau_grid}
    worst_tau = max(reports, key=lambda t: reports[t].margins["worst_slack"])
    ok = all(r.passed for r in reports.values())
    status = "pass" if ok else "fail"
    if any(r.status == "inconclusive" for r in reports.values()) and ok:
        status = "inconclusive"
    details = {
        "tau_grid": list(tau_grid),
        "per_tau_slack": {str(t): reports[t].margins["worst_slack"] for t in tau_grid},
    }
    K = c.dc_map()
    if K is not None:
        K = np.asarray(K, float)
        n = K.shape[0]
        X = complement(c0).xi
        X11, X12, X21, X22 = X[:n, :n], X[:n, n:], X[n:, :n], X[n:, n:]
        value, at = tau_form_extreme(X22, K.T @ X12 + X21 @ K, K.T @ X11 @ K, min(tau_grid), max(tau_grid), "max")
        details["tau_interval"] = "exact"
        details["interval_max_form"] = value
        details["interval_argmax_tau"] = at
        if value > tol and status == "pass":
            status = "fail"
    else:
        details["tau_interval"] = "grid only"
    return VerdictReport(
        "tau-bc-membership",
        status,
        {"worst_slack": reports[worst_tau].margins["worst_slack"], "worst_tau": worst_tau},
        witness=reports[worst_tau].witness,
        details=details,
        flags=sorted({f for r in reports.values() for f in r.flags}),
    )


def _diagnose(p, c, verdict, simulate):
    if not simulate:
        return
    if not verdict.premises["wellposed"].passed:
        verdict.diagnostics["impulse"] = {"label": "not simulated (loop not well posed)"}
        return
    try:
        verdict.diagnostics["impulse"] = impulse_experiment(p, c).to_dict()
    except SimulationError as exc:
        verdict.diagnostics["impulse"] = {"label": "simulation failed", "error": str(exc)}


def check_theorem_sni2(p, c, xi, battery=None, bands=None, tau_grid=DEFAULT_TAU_GRID, simulate=True):
    """Premises of the main stability theorem for ``P # C``.

    ``P`` must be SNI and in ``B(Xi, eps)`` with ``eps > 0``; ``C`` must be NI
    with ``tau C`` in ``B_C(Xi, 0)`` for all ``tau`` in ``[0, 1]``; and the
    instantaneous-gain product must be below one.
    """
    if xi.epsilon <= 0:
        raise ValueError("the theorem needs xi with a strictly positive epsilon")
    battery = battery or InputBattery()
    bands = bands or BandConfig()
    premises = {
        "p_sni": _ni_report("p-sni", check_ni(p, battery, bands), ("SNI",)),
        "p_in_B": b_membership(p, xi, battery),
        "c_ni": _ni_report("c-ni", check_ni(c, battery, bands), ("NI", "SNI")),
        "tau_c_in_BC": _tau_bc_premise(c, xi, battery, tau_grid),
        "wellposed": wellposed_gate(p, c),
    }
    v = StabilityVerdict("theorem", premises)
    v.flags.extend(f for r in premises.values() for f in r.flags)
    v.diagnostics["battery"] = {"seed": battery.seed, "count": battery.count}
    v.diagnostics["posture"] = "premises are tested on a finite battery (falsification, not proof)"
    _diagnose(p, c, v, simulate)
    return v


def _strict_form_report(name, G, xi, sign):
    """``sign * [G; I]^* Xi [G; I]`` must be negative definite."""
    n = G.shape[0]
    S = np.vstack([G, np.eye(n)]).astype(complex)
    M = S.conj().T @ xi @ S
    top = float(np.linalg.eigvalsh(sign * 0.5 * (M + M.conj().T))[-1])
    return VerdictReport(name, "pass" if top < 0.0 else "fail", {"max_eig": top})


def check_corollary_nl(p_lti, c_nl, xi, battery=None, tau_grid=DEFAULT_TAU_GRID, simulate=True):
    """Premises of the LTI-plant / nonlinear-controller corollary."""
    if not p_lti.is_lti:
        raise ModelError("the plant must be LTI for this rule")
    battery = battery or InputBattery()
    sweep = lti_ni_sweep(p_lti)
    ccw = check_ccw(c_nl, battery)
    # A controller with identically zero output is NI without Assumption 1.
    vacuous = ccw.details["zero_output"]
    assumption = VerdictReport(
        "c-assumption1",
        "pass" if ccw.details["assumption1_evidence"] or vacuous else "fail",
        {"min_full_horizon": ccw.margins["min_full_horizon"]},
        details={"note": ccw.details["evidence_note"], "vacuous_zero_output": vacuous},
    )
    gc = instantaneous_gain_info(c_nl)
    d_inf = float(np.linalg.norm(freq_response(p_lti, math.inf), 2))
    prod = gc.value * d_inf
    gain = VerdictReport(
        "gain-product",
        "pass" if prod < 1.0 - 1e-9 else "fail",
        {"gamma_c": gc.value, "sigma_p_inf": d_inf, "product": prod},
        flags=["C gain is an upper bound"] if gc.kind == "upper-bound" else [],
    )
    premises = {
        "p_sni_sweep": _ni_report("p-sni-sweep", sweep, ("SNI",)),
        "dc_condition": _strict_form_report("dc-condition", dc_gain(p_lti), xi.xi, 1.0),
        "c_ccw": ccw,
        "c_assumption1": assumption,
        "tau_c_in_BC": _tau_bc_premise(c_nl, xi, battery, tau_grid),
        "wellposed": gain,
    }
    v = StabilityVerdict("corollary-nl", premises)
    v.flags.extend(f for r in premises.values() for f in r.flags)
    v.diagnostics["battery"] = {"seed": battery.seed, "count": battery.count}
    _diagnose(p_lti, c_nl, v, simulate)
    return v


def _c_form_report(name, Cm, xi, taus):
    """``[I; tau C]^* Xi [I; tau C] >= 0`` for all tau in the hull of ``taus``."""
    n = Cm.shape[0]
    X11, X12, X21, X22 = xi[:n, :n], xi[:n, n:], xi[n:, :n], xi[n:, n:]
    F0, F1, F2 = X11, X12 @ Cm + Cm.conj().T @ X21, Cm.conj().T @ X22 @ Cm
    low, at = tau_form_extreme(F0, F1, F2, min(taus), max(taus), "min")
    grid_vals = []
    for t in taus:
        F = F0 + t * F1 + t * t * F2
        grid_vals.append(float(np.linalg.eigvalsh(0.5 * (F + F.conj().T))[0]))
    ok = low >= -1e-12 and min(grid_vals) >= -1e-12
    return VerdictReport(
        name,
        "pass" if ok else "fail",
        {"min_eig": min(low, min(grid_vals)), "argmin_tau": at},
        details={"grid_min_eig": dict(zip(map(str, taus), grid_vals))},
    )


def check_corollary_lti(p, c, xi0, xi_inf, tau_grid=DEFAULT_TAU_GRID, simulate=True):
    """Premises of the all-LTI corollary: four DC/high-frequency forms plus NI sweeps."""
    if not (p.is_lti and c.is_lti):
        raise ModelError("both systems must be LTI for this rule")
    X0 = xi0.xi if isinstance(xi0, XiConstraint) else XiConstraint(xi0).xi
    Xi = xi_inf.xi if isinstance(xi_inf, XiConstraint) else XiConstraint(xi_inf).xi
    P0, Pinf = freq_response(p, 0.0), freq_response(p, math.inf)
    C0, Cinf = freq_response(c, 0.0), freq_response(c, math.inf)
    taus = tuple(float(t) for t in tau_grid)
    premises = {
        "p_sni_sweep": _ni_report("p-sni-sweep", lti_ni_sweep(p), ("SNI",)),
        "c_ni_sweep": _ni_report("c-ni-sweep", lti_ni_sweep(c), ("NI", "SNI")),
        "p_form_j0": _strict_form_report("p-form-j0", P0, X0, 1.0),
        "p_form_jinf": _strict_form_report("p-form-jinf", Pinf, Xi, 1.0),
        "c_form_j0": _c_form_report("c-form-j0", C0, X0, taus),
        "c_form_jinf": _c_form_report("c-form-jinf", Cinf, Xi, taus),
        "wellposed": wellposed_gate(p, c),
    }
    v = StabilityVerdict("corollary-lti", premises)
    v.flags.extend(f for r in premises.values() for f in r.flags)
    _diagnose(p, c, v, simulate)
    return v
