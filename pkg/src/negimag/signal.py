"""Sampled signals, truncation, differentiation and one-sided Fourier transforms.

Signals live on a uniform grid ``t_m = m * dt`` starting at zero and are
interpreted as piecewise-linear functions supported on ``[0, T]``.  Every
integral in time and frequency uses the trapezoidal rule.

The Fourier transform follows the unitary one-sided convention::

    u_hat(jw) = 1/sqrt(2 pi) * int_0^inf u(t) exp(-j w t) dt

so that ``2 * int_0^inf |u_hat|^2 dw = ||u||_2^2`` for real signals.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.signal import czt

__all__ = [
    "Signal",
    "Spectrum",
    "FreqGrid",
    "SignalError",
    "truncate",
    "l2_norm",
    "derivative",
    "inner_integral",
    "fourier",
    "fourier_array",
    "band_quadratic",
    "band_energy",
    "band_integral",
    "trapezoid_weights",
]

_SQRT_2PI = math.sqrt(2.0 * math.pi)


class SignalError(ValueError):
    """Raised for malformed signals or incompatible grids."""


def _frozen(a, dtype=float):
    arr = np.array(a, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class Signal:
    """Uniformly sampled vector-valued signal on ``[0, dt * (len - 1)]``.

    ``samples`` has shape ``(N, n)``; a 1-D array is promoted to ``(N, 1)``.
    """

    dt: float
    samples: np.ndarray

    def __post_init__(self):
        if not (self.dt > 0 and math.isfinite(self.dt)):
            raise SignalError(f"dt must be a positive finite number, got {self.dt!r}")
        s = np.asarray(self.samples, dtype=float)
        if s.ndim == 1:
            s = s[:, None]
        if s.ndim != 2 or s.shape[0] < 1 or s.shape[1] < 1:
            raise SignalError(f"samples must have shape (N, n), got {s.shape}")
        object.__setattr__(self, "samples", _frozen(s))
        object.__setattr__(self, "dt", float(self.dt))

    @classmethod
    def from_function(cls, func, dt, horizon, dim=1):
        """Sample ``func(t)`` on ``[0, horizon]``; ``func`` must accept arrays."""
        t = time_grid(dt, horizon)
        vals = np.asarray(func(t), dtype=float)
        if vals.ndim == 1:
            vals = vals[:, None]
        if vals.shape[1] != dim:
            raise SignalError(f"function returned dimension {vals.shape[1]}, expected {dim}")
        return cls(dt, vals)

    @classmethod
    def zeros(cls, dt, horizon, dim=1):
        return cls(dt, np.zeros((len(time_grid(dt, horizon)), dim)))

    def __len__(self):
        return self.samples.shape[0]

    @property
    def dim(self):
        return self.samples.shape[1]

    @property
    def horizon(self):
        return self.dt * (len(self) - 1)

    @property
    def t(self):
        return np.arange(len(self)) * self.dt

    @property
    def nyquist(self):
        return math.pi / self.dt

    def scaled(self, k):
        return Signal(self.dt, k * self.samples)

    def __add__(self, other):
        _check_same_grid(self, other)
        return Signal(self.dt, self.samples + other.samples)

    def __sub__(self, other):
        _check_same_grid(self, other)
        return Signal(self.dt, self.samples - other.samples)

    def __mul__(self, k):
        return self.scaled(float(k))

    __rmul__ = __mul__

    def allclose(self, other, rtol=1e-12, atol=0.0):
        return (
            self.dt == other.dt
            and self.samples.shape == other.samples.shape
            and np.allclose(self.samples, other.samples, rtol=rtol, atol=atol)
        )


def time_grid(dt, horizon):
    n = int(round(horizon / dt))
    if n < 0:
        raise SignalError("horizon must be nonnegative")
    return np.arange(n + 1) * dt


def _check_same_grid(a, b):
    if a.dt != b.dt or a.samples.shape != b.samples.shape:
        raise SignalError(
            f"signals live on different grids: dt {a.dt} vs {b.dt}, shape "
            f"{a.samples.shape} vs {b.samples.shape}"
        )


def trapezoid_weights(n):
    w = np.ones(n)
    if n > 1:
        w[0] = w[-1] = 0.5
    else:
        w[0] = 0.0
    return w


@dataclass(frozen=True)
class FreqGrid:
    """Linear frequency grid ``omega_k = k * omega_max / (count - 1)``."""

    omega_max: float = 100.0
    count: int = 4096
    spacing: str = "linear"

    def __post_init__(self):
        if self.spacing != "linear":
            raise SignalError(f"unsupported grid spacing {self.spacing!r}")
        if self.count < 64:
            raise SignalError("a frequency grid needs at least 64 points")
        if not self.omega_max > 0:
            raise SignalError("omega_max must be positive")

    @property
    def omegas(self):
        return np.linspace(0.0, self.omega_max, self.count)

    @classmethod
    def default_for(cls, sig_or_dt, omega_cap=100.0, count=4096):
        dt = sig_or_dt.dt if isinstance(sig_or_dt, Signal) else float(sig_or_dt)
        return cls(min(omega_cap, math.pi / dt), count)

    @classmethod
    def full_band(cls, sig):
        """Grid up to Nyquist fine enough that band integrals of |u_hat|^2 are exact."""
        return cls(sig.nyquist, max(64, len(sig) // 2 + 2))


@dataclass(frozen=True, eq=False)
class Spectrum:
    freqs: np.ndarray
    values: np.ndarray
    nyquist: float = field(default=math.inf)

    def __post_init__(self):
        f = np.asarray(self.freqs, dtype=float)
        v = np.asarray(self.values, dtype=complex)
        if v.ndim == 1:
            v = v[:, None]
        if f.ndim != 1 or v.shape[0] != f.shape[0]:
            raise SignalError("values must align with freqs")
        if f.size and (f[0] < 0 or np.any(np.diff(f) <= 0)):
            raise SignalError("freqs must be nonnegative and strictly increasing")
        object.__setattr__(self, "freqs", _frozen(f))
        object.__setattr__(self, "values", _frozen(v, complex))

    @property
    def dim(self):
        return self.values.shape[1]


def truncate(sig, T):
    """Zero every sample with ``t > T``."""
    if T < 0:
        raise SignalError("truncation time must be nonnegative")
    keep = sig.t <= T + 1e-9 * sig.dt
    if keep.all():
        return sig
    out = np.where(keep[:, None], sig.samples, 0.0)
    return Signal(sig.dt, out)


def _trapz_upto(values, dt, T=None):
    """Trapezoid of a sampled scalar function on ``[0, T]`` (linear interpolation at T)."""
    n = values.shape[0]
    if n < 2:
        return 0.0
    horizon = dt * (n - 1)
    if T is None or T >= horizon:
        return float(np.dot(trapezoid_weights(n), values) * dt)
    if T <= 0:
        return 0.0
    k = int(math.floor(T / dt + 1e-9))
    full = float(np.dot(trapezoid_weights(k + 1), values[: k + 1]) * dt) if k >= 1 else 0.0
    frac = T - k * dt
    if frac > 1e-12 * dt:
        v_T = values[k] + (values[k + 1] - values[k]) * frac / dt
        full += 0.5 * (values[k] + v_T) * frac
    return full


def l2_norm(sig):
    return math.sqrt(max(_trapz_upto(np.sum(sig.samples**2, axis=1), sig.dt), 0.0))


def derivative(sig):
    """Second-order finite-difference derivative (central inside, one-sided at ends)."""
    if len(sig) < 3:
        raise SignalError("derivative needs at least 3 samples")
    return Signal(sig.dt, np.gradient(sig.samples, sig.dt, axis=0, edge_order=2))


def inner_integral(a, b, T=None):
    """Trapezoidal ``int_0^T <a(t), b(t)> dt``; ``T=None`` means the full horizon."""
    _check_same_grid(a, b)
    return _trapz_upto(np.sum(a.samples * b.samples, axis=1), a.dt, T)


def fourier_array(samples, dt, grid):
    """Transform of a stack of sample arrays along axis ``-2`` (time).

    ``samples`` has shape ``(..., N, n)``; the result has shape ``(..., count, n)``.
    """
    if grid.omega_max > math.pi / dt * (1 + 1e-12):
        raise SignalError(
            f"grid omega_max {grid.omega_max:g} exceeds Nyquist {math.pi / dt:g} rad/s"
        )
    samples = np.asarray(samples, dtype=float)
    weighted = samples * trapezoid_weights(samples.shape[-2])[:, None]
    step = grid.omega_max / (grid.count - 1)
    w = np.exp(-1j * step * dt)
    vals = czt(weighted, m=grid.count, w=w, a=1.0, axis=-2)
    return vals * (dt / _SQRT_2PI)


def fourier(sig, grid=None):
    """One-sided unitary Fourier transform of the trapezoid-weighted samples.

    Evaluated on a linear grid with the chirp-z transform, which is the exact
    DTFT of the weighted sample sequence at every grid frequency.
    """
    grid = grid or FreqGrid.default_for(sig)
    vals = fourier_array(sig.samples, sig.dt, grid)
    return Spectrum(grid.omegas, vals, nyquist=sig.nyquist)


def _interp_last(freqs, values, w):
    """Linear interpolation of ``values[..., :]`` (sampled on ``freqs``) at ``w``."""
    k = int(np.clip(np.searchsorted(freqs, w, side="right") - 1, 0, freqs.size - 2))
    frac = (w - freqs[k]) / (freqs[k + 1] - freqs[k])
    return values[..., k] + frac * (values[..., k + 1] - values[..., k])


def _band_integral(freqs, integrand, lo, hi):
    """Trapezoid of ``integrand`` (shape ``(..., M)``) over ``[lo, hi]``."""
    if hi < lo:
        raise SignalError("omega_lo must not exceed omega_hi")
    if lo < 0 or hi > freqs[-1] * (1 + 1e-12):
        raise SignalError(
            f"band [{lo:g}, {hi:g}] is outside the grid [0, {freqs[-1]:g}]"
        )
    integrand = np.asarray(integrand, dtype=float)
    hi = min(hi, freqs[-1])
    if hi == lo:
        return 0.0 if integrand.ndim == 1 else np.zeros(integrand.shape[:-1])
    inside = (freqs > lo) & (freqs < hi)
    x = np.concatenate(([lo], freqs[inside], [hi]))
    y = np.concatenate(
        (
            _interp_last(freqs, integrand, lo)[..., None],
            integrand[..., inside],
            _interp_last(freqs, integrand, hi)[..., None],
        ),
        axis=-1,
    )
    out = np.trapezoid(y, x, axis=-1)
    return float(out) if out.ndim == 0 else out


def band_integral(freqs, integrand, omega_lo, omega_hi):
    """Trapezoidal band integral of sampled integrand(s) along the last axis."""
    return _band_integral(np.asarray(freqs, dtype=float), integrand, omega_lo, omega_hi)


def _check_same_freqs(a, b):
    if a.freqs.shape != b.freqs.shape or not np.array_equal(a.freqs, b.freqs):
        raise SignalError("spectra are on different frequency grids")
    if a.dim != b.dim:
        raise SignalError("spectra have different dimensions")


def band_quadratic(u_hat, y_hat, omega_lo, omega_hi):
    """``Re int_lo^hi <u_hat(jw), jw y_hat(jw)> dw``."""
    _check_same_freqs(u_hat, y_hat)
    w = u_hat.freqs
    integrand = np.real(np.sum(np.conj(u_hat.values) * (1j * w[:, None]) * y_hat.values, axis=1))
    return _band_integral(w, integrand, omega_lo, omega_hi)


def band_energy(u_hat, omega_lo, omega_hi):
    """``int_lo^hi |u_hat(jw)|^2 dw``."""
    integrand = np.sum(np.abs(u_hat.values) ** 2, axis=1)
    return _band_integral(u_hat.freqs, integrand, omega_lo, omega_hi)


def band_form(a_hat, b_hat, weight, omega_lo, omega_hi):
    """``Re int [a; b]^* W(w) [a; b] dw`` for a constant or callable 2n x 2n weight."""
    _check_same_freqs(a_hat, b_hat)
    w = a_hat.freqs
    z = np.concatenate([a_hat.values, b_hat.values], axis=1)
    if callable(weight):
        W = np.stack([np.asarray(weight(om), dtype=complex) for om in w])
        integrand = np.real(np.einsum("ki,kij,kj->k", np.conj(z), W, z))
    else:
        W = np.asarray(weight, dtype=complex)
        integrand = np.real(np.einsum("ki,ij,kj->k", np.conj(z), W, z))
    return _band_integral(w, integrand, omega_lo, omega_hi)


def rect_pulse(dt, horizon, width=0.01, area=1.0, start=0.0, dim=1):
    """Rectangular pulse whose trapezoidal (and piecewise-linear) area is exactly ``area``.

    Samples strictly inside the pulse carry ``area / width``; grid points on a
    jump carry the midpoint value, except at ``t = 0`` where the signal starts.
    """
    t = time_grid(dt, horizon)
    h = area / width
    eps = 1e-9 * dt
    vals = np.where((t > start + eps) & (t < start + width - eps), h, 0.0)
    on_start = np.abs(t - start) <= eps
    on_end = np.abs(t - (start + width)) <= eps
    vals = np.where(on_start, h if start <= eps else h / 2, vals)
    vals = np.where(on_end, h / 2, vals)
    return Signal(dt, np.repeat(vals[:, None], dim, axis=1))
