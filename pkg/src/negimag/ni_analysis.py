"""Executable NI, SNI and CCW checks.

Every check that quantifies over inputs is falsification-oriented: it runs a
seeded :class:`~negimag.battery.InputBattery` and reports the battery used.
A verdict of "SNI" or "NI" means the property was not falsified on that
battery, with the measured margin.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .report import VerdictReport, jsonable
from .signal import (
    FreqGrid,
    Signal,
    band_integral,
    derivative,
    fourier_array,
    inner_integral,
    trapezoid_weights,
)
from .sysmodel import (
    REFERENCE_CLAIMS,
    ModelError,
    battery_response,
    builtin,
    freq_response,
    simulate,
)

__all__ = [
    "BandConfig",
    "NIVerdict",
    "ccw_functional",
    "check_ccw",
    "check_ni",
    "lti_ni_sweep",
    "crosscheck_lti",
    "example_identity_check",
    "claim_flags",
]

log = logging.getLogger(__name__)

EPS_MIN = 1e-4
CLASSES = ("SNI", "NI", "not-NI", "inconclusive")


@dataclass(frozen=True)
class BandConfig:
    """Finite-frequency bands ``[lo, hi]`` probed by the NI test."""

    omega_lo_star: float = 0.05
    omega_hi_star: float = 50.0
    probe_bands: tuple = ((0.05, 50.0), (0.02, 50.0), (0.05, 80.0), (0.02, 80.0))

    def __post_init__(self):
        if not 0.0 < self.omega_lo_star <= self.omega_hi_star:
            raise ValueError("need 0 < omega_lo_star <= omega_hi_star")
        bands = tuple(tuple(float(v) for v in b) for b in self.probe_bands)
        if not bands:
            raise ValueError("at least one probe band is required")
        for lo, hi in bands:
            if not (0.0 < lo <= self.omega_lo_star and hi >= self.omega_hi_star):
                raise ValueError(
                    f"probe band ({lo:g}, {hi:g}) must contain "
                    f"[{self.omega_lo_star:g}, {self.omega_hi_star:g}] and start above 0"
                )
        object.__setattr__(self, "probe_bands", bands)

    @property
    def omega_top(self):
        return max(hi for _, hi in self.probe_bands)


@dataclass
class NIVerdict:
    classification: str
    epsilon_hat: float
    worst_band: tuple | None = None
    witness: Signal | None = None
    details: dict = field(default_factory=dict)
    flags: list = field(default_factory=list)

    def __post_init__(self):
        if self.classification not in CLASSES:
            raise ValueError(f"unknown classification {self.classification!r}")
        if self.classification == "not-NI" and self.witness is None and "omega" not in self.details:
            raise ValueError("a not-NI verdict needs a witness")

    @property
    def is_ni(self):
        return self.classification in ("NI", "SNI")

    def to_dict(self, witness_ref=None):
        out = {
            "classification": self.classification,
            "epsilon_hat": self.epsilon_hat,
            "worst_band": list(self.worst_band) if self.worst_band else None,
            "details": jsonable(self.details),
            "flags": list(self.flags),
        }
        if self.witness is not None:
            out["witness"] = witness_ref or "present"
        return out


def claim_flags(name, classification):
    """Flags comparing a measured classification with the published one for ``name``."""
    claim = REFERENCE_CLAIMS.get(name)
    if claim is None or classification == "inconclusive":
        return []
    ok = classification == "SNI" if claim == "SNI" else classification in ("NI", "SNI")
    if ok:
        return []
    return [f"claim-mismatch: reference classification of {name} is {claim}, measured {classification}"]


# ---------------------------------------------------------------------------
# CCW


def ccw_functional(u, y, T=None):
    """``int_0^T <u, dy/dt> dt`` (full horizon when ``T`` is None)."""
    return inner_integral(u, derivative(y), T)


def _trapz_prefix_at(values, dt, T):
    """Trapezoid over ``[0, T]`` of each row of ``values`` (shape ``(B, N)``)."""
    N = values.shape[1]
    k = min(int(math.floor(T / dt + 1e-9)), N - 1)
    full = (values[:, : k + 1] @ trapezoid_weights(k + 1)) * dt
    frac = T - k * dt
    if k < N - 1 and frac > 1e-12 * dt:
        vT = values[:, k] + (values[:, k + 1] - values[:, k]) * frac / dt
        full = full + 0.5 * (values[:, k] + vT) * frac
    return full


def _norms(arr, dt):
    sq = np.sum(arr**2, axis=2)
    return np.sqrt(np.maximum(sq @ trapezoid_weights(sq.shape[1]) * dt, 0.0))


def check_ccw(sys, battery, ladder=(0.25, 0.5, 1.0), rel_tol=1e-6):
    """CCW functional over the battery and a ladder of truncation times.

    Passes when every value is at least ``-rel_tol * (1 + ||u|| ||y||)``.
    Strict positivity of the full-horizon values (Assumption 1) and nonzero
    output-derivative energy (Assumption 2) are reported as evidence only.
    """
    U = battery.stacked()
    Y = np.asarray(battery_response(sys, battery))
    dt = battery.dt
    dY = np.gradient(Y, dt, axis=1, edge_order=2)
    prod = np.sum(U * dY, axis=2)
    tol = rel_tol * (1.0 + _norms(U, dt) * _norms(Y, dt))
    horizon = dt * (U.shape[1] - 1)
    values = {f: _trapz_prefix_at(prod, dt, f * horizon) for f in ladder}
    scaled = np.min(np.stack([values[f] / tol for f in ladder]), axis=0)
    worst = int(np.argmin(scaled))
    worst_value = min(float(values[f][worst]) for f in ladder)
    passed = bool(np.all(scaled >= -1.0))
    full = values[max(ladder)]
    dy_energy = np.sum(dY**2, axis=2) @ trapezoid_weights(dY.shape[1]) * dt
    details = {
        "battery": {"seed": battery.seed, "count": battery.count},
        "ladder_seconds": [f * horizon for f in ladder],
        "assumption1_evidence": bool(np.all(full > tol)),
        "assumption2_evidence": bool(np.all(dy_energy > 1e-10)),
        "zero_output": bool(not np.any(Y)),
        "nc_membership": (
            "outputs are states or smooth maps of states (continuous)"
            if not sys.feedthrough
            else "not established: direct feedthrough lets output jumps follow input jumps"
        ),
        "evidence_note": "assumption evidence is empirical over the battery, not a proof",
    }
    margins = {
        "min_value": float(min(np.min(v) for v in values.values())),
        "min_full_horizon": float(np.min(full)),
        "worst_scaled": float(scaled[worst]),
    }
    return VerdictReport(
        "ccw",
        "pass" if passed else "fail",
        margins,
        witness=None if passed else battery[worst],
        details=details | {"worst_index": worst, "worst_value": worst_value},
    )


# ---------------------------------------------------------------------------
# Finite-frequency NI


def _decayed(Y, level=1e-3, floor=1e-9):
    """Outputs have settled: tail magnitude is small relative to the peak."""
    tail = max(1, Y.shape[1] // 100)
    peak = np.max(np.abs(Y), axis=(1, 2))
    end = np.max(np.abs(Y[:, -tail:]), axis=(1, 2))
    return end <= level * peak + floor


def check_ni(sys, battery, bands=None, eps_min=EPS_MIN, rel_tol=1e-6, grid=None):
    """Finite-frequency NI/SNI classification over a seeded battery.

    For each probe band and input ``u`` with ``y = sys(u)``, forms
    ``r = Re int <u_hat, jw y_hat> dw`` and ``e = int |u_hat|^2 dw``.
    SNI when ``min r/e >= eps_min``; not-NI when some ``r`` is below
    ``-rel_tol * (1 + ||u||^2)``; NI otherwise.
    """
    bands = bands or BandConfig()
    if len(battery) == 0:
        raise ValueError("empty battery")
    dt = battery.dt
    grid = grid or FreqGrid.default_for(dt, omega_cap=max(100.0, bands.omega_top))
    if grid.omega_max < bands.omega_top:
        raise ValueError(f"frequency grid ends at {grid.omega_max:g}, below the probe bands")
    U = battery.stacked()
    Y = np.asarray(battery_response(sys, battery))
    if not np.all(np.isfinite(Y)):
        return NIVerdict("inconclusive", 0.0, details={"reason": "non-finite outputs"})
    u_norm = _norms(U, dt)
    y_norm = _norms(Y, dt)
    details = {
        "battery": {"seed": battery.seed, "count": battery.count},
        "gain_lower_bound": float(np.max(y_norm / u_norm)),
        "eps_min": eps_min,
    }
    if not np.all(_decayed(Y)):
        details["reason"] = "outputs have not decayed within the horizon"
        return NIVerdict("inconclusive", 0.0, details=details)
    Uh = fourier_array(U, dt, grid)
    Yh = fourier_array(Y, dt, grid)
    w = grid.omegas
    r_int = np.real(np.sum(np.conj(Uh) * (1j * w[None, :, None]) * Yh, axis=2))
    e_int = np.sum(np.abs(Uh) ** 2, axis=2)
    tol = rel_tol * (1.0 + u_norm**2)
    worst_ratio, worst_band = math.inf, None
    worst_viol, viol_band, viol_idx = 0.0, None, None
    per_band = []
    for lo, hi in bands.probe_bands:
        r = band_integral(w, r_int, lo, hi)
        e = band_integral(w, e_int, lo, hi)
        ok = e > 1e-15
        ratios = np.where(ok, r / np.where(ok, e, 1.0), np.inf)
        i = int(np.argmin(ratios))
        per_band.append({"band": [lo, hi], "min_ratio": float(ratios[i]), "min_r": float(np.min(r))})
        if ratios[i] < worst_ratio:
            worst_ratio, worst_band = float(ratios[i]), (lo, hi)
        scaled = r / tol
        j = int(np.argmin(scaled))
        if scaled[j] < -1.0 and scaled[j] < worst_viol:
            worst_viol, viol_band, viol_idx = float(scaled[j]), (lo, hi), j
    details["bands"] = per_band
    details["min_ratio"] = worst_ratio
    if viol_idx is not None:
        cls, band, witness = "not-NI", viol_band, battery[viol_idx]
        details["witness_index"] = viol_idx
        details["witness_scaled_violation"] = worst_viol
    elif worst_ratio >= eps_min:
        cls, band, witness = "SNI", worst_band, None
    else:
        cls, band, witness = "NI", worst_band, None
    eps_hat = max(0.0, worst_ratio) if math.isfinite(worst_ratio) else 0.0
    verdict = NIVerdict(cls, eps_hat, band, witness, details)
    verdict.flags.extend(claim_flags(getattr(sys, "name", ""), cls))
    return verdict


def lti_ni_sweep(sys, omega_grid=None, tol=1e-10):
    """Smallest eigenvalue of ``j(G(jw) - G(jw)^*)`` over a log-spaced grid."""
    if not sys.is_lti:
        raise ModelError(f"{sys.name or 'system'} is not LTI; the sweep needs a frequency response")
    omegas = np.logspace(-2, 2, 256) if omega_grid is None else np.asarray(omega_grid, float)
    mins = np.empty(omegas.size)
    for k, om in enumerate(omegas):
        G = freq_response(sys, om)
        H = 1j * (G - G.conj().T)
        H = 0.5 * (H + H.conj().T)
        mins[k] = -2.0 * G[0, 0].imag if G.shape == (1, 1) else np.linalg.eigvalsh(H)[0]
    lowest = float(np.min(mins))
    if lowest > tol:
        cls = "SNI"
    elif lowest >= -tol:
        cls = "NI"
    else:
        cls = "not-NI"
    k = int(np.argmin(mins))
    margin = float(0.5 * np.min(omegas * mins))
    verdict = NIVerdict(
        cls,
        max(0.0, margin),
        (float(omegas[0]), float(omegas[-1])),
        details={
            "omega": omegas,
            "min_eig": mins,
            "lowest": lowest,
            "lowest_at": float(omegas[k]),
            "tol": tol,
        },
    )
    verdict.flags.extend(claim_flags(getattr(sys, "name", ""), cls))
    return verdict


def crosscheck_lti(sys, battery, bands=None):
    """Battery test and frequency sweep must classify an LTI system alike."""
    sweep = lti_ni_sweep(sys)
    test = check_ni(sys, battery, bands)
    agree = sweep.classification == test.classification
    margins = {"sweep_epsilon": sweep.epsilon_hat, "battery_epsilon": test.epsilon_hat,
               "sweep_lowest_eig": sweep.details["lowest"]}
    flags = sorted(set(sweep.flags) | set(test.flags))
    return VerdictReport(
        "crosscheck-lti",
        "pass" if agree else "fail",
        margins,
        witness=test.witness,
        details={"sweep": sweep.classification, "battery": test.classification},
        flags=flags,
    )


def example_identity_check(u):
    """Both sides of the closed-form CCW identity claimed for the reference plant.

    Returns ``(lhs, rhs)``: the simulated ``int u y' dt`` and the trapezoid of
    ``((u - y)^2 + u^2 y^2) / (1 + y^2)``.  No verdict is drawn.
    """
    y, _ = simulate(builtin("paper-P"), u)
    lhs = ccw_functional(u, y)
    uu, yy = u.samples[:, 0], y.samples[:, 0]
    g = ((uu - yy) ** 2 + uu**2 * yy**2) / (1.0 + yy**2)
    rhs = float(g @ trapezoid_weights(g.size) * u.dt)
    scale = max(abs(lhs), abs(rhs))
    if scale > 0 and abs(lhs - rhs) > 0.05 * scale:
        log.warning("CCW identity gap: lhs=%.6g rhs=%.6g (relative %.3g)", lhs, rhs, abs(lhs - rhs) / scale)
    return lhs, rhs
