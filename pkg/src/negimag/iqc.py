"""Xi-constrained operator sets, multipliers and the finite-frequency IQC inequalities.

For ``u`` in L1 with ``y = P u`` write ``u_bar = int u`` and ``y_bar = int y``.
``P`` belongs to ``B(Xi, eps)`` when ``[y_bar; u_bar]^T Xi [y_bar; u_bar] <=
-eps |u_bar|^2`` for every such ``u``; the complementary set ``B_C`` uses
``-J Xi J`` with the swap ``J = [[0, I], [I, 0]]``.
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass

import numpy as np

from .ni_analysis import BandConfig
from .report import VerdictReport
from .signal import FreqGrid, band_integral, fourier_array, trapezoid_weights
from .sysmodel import ModelError, battery_response, dc_gain

__all__ = [
    "XiConstraint",
    "MultiplierSet",
    "swap_matrix",
    "complement",
    "time_average",
    "b_membership",
    "bc_membership",
    "lti_b_condition",
    "tau_form_extreme",
    "construct_multipliers",
    "verify_prop_iqc",
    "XI1",
    "XI2",
]

log = logging.getLogger(__name__)

HERMITIAN_TOL = 1e-12
FORM_TOL = 1e-9
# Relative disagreement allowed between simulated and structural averages.
STRUCTURE_TOL = 1e-4


def _hermitian(m, what):
    m = np.atleast_2d(np.asarray(m, dtype=complex))
    if m.shape[0] != m.shape[1] or m.shape[0] % 2:
        raise ValueError(f"{what} must be a square 2n x 2n matrix, got shape {m.shape}")
    if np.max(np.abs(m - m.conj().T), initial=0.0) > HERMITIAN_TOL:
        raise ValueError(f"{what} is not Hermitian")
    return m


@dataclass(frozen=True, eq=False)
class XiConstraint:
    xi: np.ndarray
    epsilon: float = 0.0

    def __post_init__(self):
        m = _hermitian(self.xi, "xi")
        if not (self.epsilon >= 0 and math.isfinite(self.epsilon)):
            raise ValueError("epsilon must be a finite nonnegative number")
        m.setflags(write=False)
        object.__setattr__(self, "xi", m)
        object.__setattr__(self, "epsilon", float(self.epsilon))

    @property
    def n(self):
        return self.xi.shape[0] // 2

    def with_epsilon(self, eps):
        return XiConstraint(self.xi, eps)

    def __eq__(self, other):
        return (
            isinstance(other, XiConstraint)
            and self.epsilon == other.epsilon
            and np.array_equal(self.xi, other.xi)
        )

    def to_dict(self):
        real = np.all(self.xi.imag == 0)
        entries = self.xi.real.tolist() if real else [[[z.real, z.imag] for z in row] for row in self.xi]
        return {"xi": entries, "epsilon": self.epsilon}


XI1 = XiConstraint([[0.0, 1.0], [1.0, 0.0]])
XI2 = XiConstraint([[1.0, 0.0], [0.0, -1.0]])


def swap_matrix(n):
    Z, I = np.zeros((n, n)), np.eye(n)
    return np.block([[Z, I], [I, Z]])


def complement(c):
    """``(-J Xi J, eps)``; an involution."""
    J = swap_matrix(c.n)
    return XiConstraint(-(J @ c.xi @ J), c.epsilon)


def time_average(sig, level=1e-6):
    """Trapezoidal ``int_0^T u dt`` per component; warns if ``u`` has not decayed."""
    tail = np.max(np.abs(sig.samples[-max(1, len(sig) // 100):]))
    if tail > level:
        warnings.warn(
            f"signal has not decayed below {level:g} before the horizon (tail {tail:.3g})",
            RuntimeWarning,
            stacklevel=2,
        )
    return sig.samples.T @ trapezoid_weights(len(sig)) * sig.dt


def _forms(xi, ybar, ubar):
    """``z^* Xi z`` for each row, with ``z = [y_bar; u_bar]``."""
    z = np.concatenate([ybar, ubar], axis=1).astype(complex)
    return np.real(np.einsum("bi,ij,bj->b", np.conj(z), xi, z))


def _averages(arr, dt):
    return np.einsum("bnk,n->bk", arr, trapezoid_weights(arr.shape[1])) * dt


def b_membership(sys, c, battery, tol=FORM_TOL):
    """Test ``sys`` in ``B(Xi, eps)`` over the battery.

    When the system has an exact averaging structure (``y_bar = K u_bar``;
    see :meth:`SystemModel.dc_map`), the verdict uses the exact ``y_bar`` and
    the simulated averages serve as a consistency check.  Otherwise the
    simulated averages are used directly.
    """
    signals = list(battery)
    dt = signals[0].dt
    U = np.stack([s.samples for s in signals])
    Y = np.asarray(battery_response(sys, battery))
    if U.shape[2] != c.n:
        raise ValueError(f"xi is {2 * c.n}x{2 * c.n} but the system dimension is {U.shape[2]}")
    ubar = _averages(U, dt)
    ybar_meas = _averages(Y, dt)
    usq = np.sum(ubar**2, axis=1)
    valid = usq > 1e-18
    if not np.any(valid):
        raise ValueError("every battery input has |u_bar| ~ 0; B-membership is vacuous")
    q_meas = _forms(c.xi, ybar_meas, ubar)
    details = {"battery": {"seed": getattr(battery, "seed", None), "count": len(signals)}}
    flags = []
    K = sys.dc_map()
    status_override = None
    if K is not None:
        ybar = ubar @ np.asarray(K, float).T
        mismatch = np.max(np.abs(ybar_meas - ybar) / (1.0 + np.abs(ybar)))
        details["mode"] = "exact averaging structure"
        details["structure_mismatch"] = float(mismatch)
        if mismatch > STRUCTURE_TOL:
            status_override = "inconclusive"
            flags.append("simulated averages disagree with the averaging structure")
        q = _forms(c.xi, ybar, ubar)
        M = _dc_form(np.asarray(K, float), c.xi)
        details["dc_form_max_eig"] = float(np.linalg.eigvalsh(M)[-1])
    else:
        details["mode"] = "simulated averages"
        q = q_meas
    slack = q + c.epsilon * usq
    slack_v = np.where(valid, slack, -np.inf)
    worst = int(np.argmax(slack_v))
    passed = bool(slack_v[worst] <= tol)
    ratios = np.where(valid, -q_meas / np.where(valid, usq, 1.0), np.inf)
    k = int(np.argmin(ratios))
    margins = {
        "eps_meas": float(ratios[k]),
        "worst_slack": float(slack_v[worst]),
        "worst_form_per_energy": float(q[worst] / usq[worst]),
        "epsilon": c.epsilon,
    }
    status = "pass" if passed else "fail"
    if status_override:
        status = status_override
    details["worst_index"] = worst
    return VerdictReport(
        "b-membership",
        status,
        margins,
        witness=None if passed else signals[worst],
        details=details,
        flags=flags,
    )


def bc_membership(sys, c, battery, tol=FORM_TOL):
    rep = b_membership(sys, complement(c), battery, tol)
    rep.check = "bc-membership"
    return rep


def _dc_form(G0, xi):
    n = G0.shape[0]
    S = np.vstack([G0, np.eye(n)]).astype(complex)
    M = S.conj().T @ xi @ S
    return 0.5 * (M + M.conj().T)


def lti_b_condition(sys, c):
    """DC sufficient condition: ``[G(0); I]^T Xi [G(0); I] <= -eps I``."""
    if not sys.is_lti:
        raise ModelError("the DC condition needs an LTI system")
    M = _dc_form(dc_gain(sys), c.xi)
    top = float(np.linalg.eigvalsh(M)[-1])
    passed = top <= -c.epsilon + 1e-12
    return VerdictReport(
        "lti-b-condition",
        "pass" if passed else "fail",
        {"max_eig": top, "delta": -top, "epsilon": c.epsilon},
        details={"M": np.real(M) if np.all(M.imag == 0) else M.tolist()},
    )


def tau_form_extreme(F0, F1, F2, lo=0.0, hi=1.0, mode="max", samples=1001):
    """Extreme eigenvalue of ``F(tau) = F0 + tau F1 + tau^2 F2`` over ``[lo, hi]``.

    For 1x1 forms the scalar quadratic is optimised exactly (endpoints plus
    vertex).  Larger forms are sampled densely.  Returns ``(value, tau)``.
    """
    F0, F1, F2 = (np.atleast_2d(np.real_if_close(np.asarray(F, complex))) for F in (F0, F1, F2))
    pick = max if mode == "max" else min
    if F0.shape == (1, 1):
        a, b, c = float(np.real(F2[0, 0])), float(np.real(F1[0, 0])), float(np.real(F0[0, 0]))
        cands = [lo, hi]
        if a != 0.0:
            v = -b / (2 * a)
            if lo < v < hi:
                cands.append(v)
        vals = [(c + b * t + a * t * t, t) for t in cands]
        return pick(vals, key=lambda p: p[0])
    taus = np.linspace(lo, hi, samples)
    vals = []
    for t in taus:
        F = F0 + t * F1 + t * t * F2
        e = np.linalg.eigvalsh(0.5 * (F + F.conj().T))
        vals.append((float(e[-1] if mode == "max" else e[0]), float(t)))
    return pick(vals, key=lambda p: p[0])


@dataclass(frozen=True, eq=False)
class MultiplierSet:
    pi0: np.ndarray
    pi_inf: np.ndarray
    eps0: float
    eps_inf: float
    alpha: float

    def __post_init__(self):
        for name in ("pi0", "pi_inf"):
            m = _hermitian(getattr(self, name), name)
            m.setflags(write=False)
            object.__setattr__(self, name, m)
        if not (self.eps0 > 0 and self.eps_inf > 0 and self.alpha > 0):
            raise ValueError("eps0, eps_inf and alpha must be positive")

    @property
    def n(self):
        return self.pi0.shape[0] // 2

    def pi_m(self, omega):
        n = self.n
        Z, I = np.zeros((n, n)), np.eye(n)
        return np.block([[Z, 1j * omega * I], [-1j * omega * I, Z]])


def construct_multipliers(c, alpha, eps_inf):
    """Low- and high-frequency multipliers built from a strict Xi constraint."""
    if c.epsilon <= 0:
        raise ValueError("multiplier construction needs a strictly positive epsilon")
    if alpha <= 0 or eps_inf <= 0:
        raise ValueError("alpha and eps_inf must be positive")
    n = c.n
    Z, I = np.zeros((n, n)), np.eye(n)
    eps0 = c.epsilon / 3.0
    pi0 = c.xi + eps0 * np.block([[Z, Z], [Z, I]])
    pi_inf = np.block([[I, Z], [Z, -(eps_inf + alpha**2) * I]])
    return MultiplierSet(pi0, pi_inf, eps0, eps_inf, alpha)


def _band_forms(Ah, Bh, w, weight, lo, hi):
    """``Re int [a; b]^* W [a; b] dw`` for stacks of spectra ``(batch, M, n)``."""
    z = np.concatenate([Ah, Bh], axis=2)
    if callable(weight):
        W = np.stack([weight(om) for om in w])
        integrand = np.real(np.einsum("bki,kij,bkj->bk", np.conj(z), W, z))
    else:
        integrand = np.real(np.einsum("bki,ij,bkj->bk", np.conj(z), weight, z))
    return band_integral(w, integrand, lo, hi)


def verify_prop_iqc(p, c_sys, m, bands=None, battery=None, tau_grid=(0.0, 0.25, 0.5, 0.75, 1.0)):
    """Evaluate the four finite-frequency IQC inequalities on the battery.

    P-side (inputs ``u``, outputs ``P u``): the ``Pi0`` form over ``[0, lo*]``
    must not exceed ``-eps0 int |u_hat|^2``, and the ``Pi_inf`` form over
    ``[hi*, Nyquist]`` must not exceed ``-eps_inf int |u_hat|^2``.
    C-side (inputs ``y``, outputs ``tau C y``): the same forms must be
    nonnegative for every ``tau``.  The mid band ``[lo*, hi*]`` with the NI
    multiplier is reported as a diagnostic.
    """
    from .battery import InputBattery

    bands = bands or BandConfig()
    battery = battery or InputBattery()
    dt = battery.dt
    nyq = math.pi / dt
    lo, hi = bands.omega_lo_star, bands.omega_hi_star
    if nyq < hi:
        raise ValueError(f"Nyquist {nyq:g} rad/s lies below the upper band edge {hi:g}")
    U = battery.stacked()
    N = U.shape[1]
    grids = {
        "low": FreqGrid(lo, 256),
        "mid": FreqGrid(min(nyq, max(100.0, hi)), 4096),
        "high": FreqGrid(nyq, max(64, N // 2 + 2)),
    }
    Yp = np.asarray(battery_response(p, battery))
    Yc = np.asarray(battery_response(c_sys, battery))
    out = {}
    spectra = {}
    for key, g in grids.items():
        spectra[key] = (
            g.omegas,
            fourier_array(U, dt, g),
            fourier_array(Yp, dt, g),
            fourier_array(Yc, dt, g),
        )
    # P-side
    w, Uh, Yph, _ = spectra["low"]
    e_low = band_integral(w, np.sum(np.abs(Uh) ** 2, axis=2), 0.0, lo)
    s_low_p = _band_forms(Yph, Uh, w, m.pi0, 0.0, lo) + m.eps0 * e_low
    w, Uh, Yph, _ = spectra["high"]
    e_high = band_integral(w, np.sum(np.abs(Uh) ** 2, axis=2), hi, nyq)
    s_high_p = _band_forms(Yph, Uh, w, m.pi_inf, hi, nyq) + m.eps_inf * e_high
    w, Uh, Yph, _ = spectra["mid"]
    e_mid = band_integral(w, np.sum(np.abs(Uh) ** 2, axis=2), lo, hi)
    mid_p = _band_forms(Yph, Uh, w, m.pi_m, lo, hi)
    out["P_low"] = float(np.max(s_low_p))
    out["P_high"] = float(np.max(s_high_p))
    eps_m = float(np.min(-mid_p / np.where(e_mid > 0, e_mid, np.inf)))
    # C-side: input is the battery member, output tau * C(input)
    c_low, c_high, c_mid = [], [], []
    for tau in tau_grid:
        w, Uh, _, Ych = spectra["low"]
        c_low.append(_band_forms(Uh, tau * Ych, w, m.pi0, 0.0, lo))
        w, Uh, _, Ych = spectra["high"]
        c_high.append(_band_forms(Uh, tau * Ych, w, m.pi_inf, hi, nyq))
        w, Uh, _, Ych = spectra["mid"]
        c_mid.append(_band_forms(Uh, tau * Ych, w, m.pi_m, lo, hi))
    c_low, c_high, c_mid = np.array(c_low), np.array(c_high), np.array(c_mid)
    # Relative tolerance for exact zeros (tau = 0 or zero systems) against rounding.
    scale = 1e-12 * (1.0 + np.max(np.sum(U**2, axis=(1, 2))) * dt)
    out["C_low"] = float(np.min(c_low))
    out["C_high"] = float(np.min(c_high))
    primary_ok = (
        out["P_low"] <= scale
        and out["P_high"] <= scale
        and out["C_low"] >= -scale
        and out["C_high"] >= -scale
    )
    diag = {
        "mid_P_max": float(np.max(mid_p)),
        "mid_C_min": float(np.min(c_mid)),
        "eps_m_measured": eps_m,
    }
    flags = []
    if diag["mid_P_max"] > scale or diag["mid_C_min"] < -scale:
        flags.append("mid-band NI multiplier inequality violated on the battery")
    witness = None
    if not primary_ok:
        i = None
        if out["P_low"] > scale:
            i = int(np.argmax(s_low_p))
        elif out["P_high"] > scale:
            i = int(np.argmax(s_high_p))
        elif out["C_low"] < -scale:
            i = int(np.unravel_index(np.argmin(c_low), c_low.shape)[1])
        else:
            i = int(np.unravel_index(np.argmin(c_high), c_high.shape)[1])
        witness = battery[i]
    return VerdictReport(
        "prop-iqc",
        "pass" if primary_ok else "fail",
        out | {"tolerance": scale},
        witness=witness,
        details={
            "bands": {"low": [0.0, lo], "mid": [lo, hi], "high": [hi, nyq]},
            "nyquist_cap": nyq,
            "tau_grid": list(tau_grid),
            "diagnostics": diag,
            "battery": {"seed": battery.seed, "count": battery.count},
        },
        flags=flags,
    )
