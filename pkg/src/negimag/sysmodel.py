"""System models: rational transfer functions, state-space realizations,
nonlinear expression-defined systems, and their scalings and parallel sums.

All systems start from the zero state.  Simulation is classical fixed-step
RK4 at the input's sampling step.  The input at half steps comes from a
cubic through four samples ending at the step's right end, which keeps the
scheme fourth-order for smooth inputs and causal after the first few
samples.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache

import numpy as np

from .expr import EvaluationError, Expr, compile_scalar, compile_vector, parse_dynamics
from .signal import Signal, l2_norm

__all__ = [
    "ModelError",
    "SimulationError",
    "RationalTF",
    "StateSpace",
    "NonlinearStateSpace",
    "SystemModel",
    "LTI",
    "Nonlinear",
    "Scaled",
    "Parallel",
    "routh_hurwitz_stable",
    "tf_to_ss",
    "half_step_inputs",
    "freq_response",
    "dc_gain",
    "simulate",
    "simulate_batch",
    "battery_response",
    "scalar_realization",
    "instantaneous_gain",
    "instantaneous_gain_info",
    "gain_estimate",
    "builtin",
    "BUILTIN_NAMES",
    "REFERENCE_CLAIMS",
]


class ModelError(ValueError):
    """Invalid system definition."""


class SimulationError(RuntimeError):
    """Integration produced NaN/inf or an expression guard tripped."""

    def __init__(self, message, time=None):
        super().__init__(message if time is None else f"{message} at t={time:.6g} s")
        self.time = time


# ---------------------------------------------------------------------------
# Rational transfer functions


def _trim(coeffs):
    c = [float(v) for v in coeffs]
    while len(c) > 1 and c[0] == 0.0:
        c.pop(0)
    return c


def routh_hurwitz_stable(den):
    """True iff every root of ``den`` (descending powers) has negative real part.

    The Routh array is built in exact rational arithmetic from the binary
    values of the coefficients, so the test is free of rounding.
    """
    c = [Fraction(v) for v in _trim(den)]
    if c[0] < 0:
        c = [-v for v in c]
    if any(v <= 0 for v in c):
        return False
    n = len(c) - 1
    if n == 0:
        return True
    row0 = c[0::2]
    row1 = c[1::2]
    rows = [row0, row1 + [Fraction(0)] * (len(row0) - len(row1))]
    for _ in range(n - 1):
        a, b = rows[-2], rows[-1]
        if b[0] == 0:
            return False
        nxt = [(b[0] * a[i + 1] - a[0] * b[i + 1]) / b[0] for i in range(len(a) - 1)]
        nxt.append(Fraction(0))
        rows.append(nxt)
    return all(r[0] > 0 for r in rows[: n + 1])


@dataclass(frozen=True)
class RationalTF:
    """Scalar stable proper transfer function ``num(s) / den(s)``."""

    num: tuple
    den: tuple

    def __post_init__(self):
        num, den = _trim(self.num), _trim(self.den)
        if den == [0.0]:
            raise ModelError("denominator is identically zero")
        if len(num) > len(den):
            raise ModelError("transfer function is improper (deg num > deg den)")
        if not all(math.isfinite(v) for v in num + den):
            raise ModelError("coefficients must be finite")
        if not routh_hurwitz_stable(den):
            raise ModelError(f"denominator {den} has roots outside the open left half-plane")
        object.__setattr__(self, "num", tuple(num))
        object.__setattr__(self, "den", tuple(den))

    def __call__(self, s):
        return np.polyval(self.num, s) / np.polyval(self.den, s)

    @property
    def order(self):
        return len(self.den) - 1


@dataclass(frozen=True, eq=False)
class StateSpace:
    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: np.ndarray

    def __post_init__(self):
        D = np.atleast_2d(np.asarray(self.D, dtype=float))
        n = D.shape[0]
        if D.shape != (n, n):
            raise ModelError("D must be square (n x n)")
        A = np.asarray(self.A, dtype=float)
        A = np.atleast_2d(A) if A.size else np.zeros((0, 0))
        nx = A.shape[0]
        B = np.asarray(self.B, dtype=float).reshape(nx, n)
        C = np.asarray(self.C, dtype=float).reshape(n, nx)
        if A.shape != (nx, nx):
            raise ModelError("A must be square")
        for name, m in (("A", A), ("B", B), ("C", C), ("D", D)):
            m.setflags(write=False)
            object.__setattr__(self, name, m)

    @property
    def n_x(self):
        return self.A.shape[0]

    @property
    def n(self):
        return self.D.shape[0]

    def __call__(self, s):
        """Frequency response ``C (sI - A)^-1 B + D`` at complex ``s``."""
        if self.n_x == 0:
            return self.D.astype(complex)
        return self.C @ np.linalg.solve(s * np.eye(self.n_x) - self.A, self.B) + self.D


def tf_to_ss(tf):
    """Controllable canonical realization of a scalar :class:`RationalTF`."""
    if not isinstance(tf, RationalTF):
        raise ModelError("tf_to_ss expects a RationalTF")
    den = np.array(tf.den) / tf.den[0]
    num = np.array(tf.num) / tf.den[0]
    n = len(den) - 1
    num = np.concatenate([np.zeros(n + 1 - len(num)), num])
    d = num[0]
    rem = num[1:] - d * den[1:]
    A = np.zeros((n, n))
    if n:
        A[:-1, 1:] = np.eye(n - 1)
        A[-1, :] = -den[1:][::-1]
    B = np.zeros((n, 1))
    if n:
        B[-1, 0] = 1.0
    C = rem[::-1].reshape(1, n)
    return StateSpace(A, B, C, [[d]])


@dataclass(frozen=True, eq=False)
class NonlinearStateSpace:
    """``x' = f(x, u)``, ``y = h(x, u)``, ``x(0) = 0`` with parsed expressions."""

    n_x: int
    n: int
    f_exprs: tuple
    h_exprs: tuple

    def __post_init__(self):
        f = tuple(e if isinstance(e, Expr) else parse_dynamics(e) for e in self.f_exprs)
        h = tuple(e if isinstance(e, Expr) else parse_dynamics(e) for e in self.h_exprs)
        if len(f) != self.n_x or len(h) != self.n:
            raise ModelError(f"need {self.n_x} state equations and {self.n} output equations")
        for e in f + h:
            if e.max_index("x") > self.n_x or e.max_index("u") > self.n:
                raise ModelError(f"{e.text!r} refers to a variable beyond x{self.n_x}/u{self.n}")
        object.__setattr__(self, "f_exprs", f)
        object.__setattr__(self, "h_exprs", h)
        x0, u0 = np.zeros(self.n_x), np.zeros(self.n)
        try:
            f0 = [e(x0, u0) for e in f]
            h0 = [e(x0, u0) for e in h]
        except EvaluationError as exc:
            raise ModelError(f"cannot evaluate at the origin: {exc}") from exc
        if any(abs(float(v)) > 0 for v in f0 + h0):
            raise ModelError("f(0, 0) and h(0, 0) must vanish (zero input must give zero output)")

    @property
    def feedthrough_free(self):
        return not any(e.uses_input for e in self.h_exprs)


# ---------------------------------------------------------------------------
# Realizations used by the integrators


@dataclass(eq=False)
class Realization:
    n_x: int
    n: int
    f: object  # (x[B, n_x], u[B, n]) -> dx[B, n_x]
    h: object  # (x[B, n_x], u[B, n]) -> y[B, n]
    feedthrough: bool
    linear: tuple | None = None  # (A, B, C, D) when the whole realization is LTI


def _linear_realization(A, B, C, D):
    At, Bt, Ct, Dt = A.T.copy(), B.T.copy(), C.T.copy(), D.T.copy()
    has_d = bool(np.any(D != 0))

    def f(x, u):
        return x @ At + u @ Bt

    if has_d:
        def h(x, u):
            return x @ Ct + u @ Dt
    else:
        def h(x, u):
            return x @ Ct

    return Realization(A.shape[0], D.shape[0], f, h, has_d, (A, B, C, D))


def _nonlinear_realization(m):
    fv = compile_vector(m.f_exprs)
    hv = compile_vector(m.h_exprs)

    def f(x, u):
        out = np.empty(x.shape)
        for j, col in enumerate(fv(x, u)):
            out[..., j] = col
        return out

    def h(x, u):
        out = np.empty(x.shape[:-1] + (m.n,))
        for j, col in enumerate(hv(x, u)):
            out[..., j] = col
        return out

    return Realization(m.n_x, m.n, f, h, not m.feedthrough_free)


def _scaled_realization(tau, r):
    lin = None
    if r.linear is not None:
        A, B, C, D = r.linear
        lin = (A, B, tau * C, tau * D)
        return _linear_realization(*lin)
    h = r.h
    return Realization(r.n_x, r.n, r.f, lambda x, u: tau * h(x, u), r.feedthrough, None)


def _parallel_realization(a, b):
    if a.linear is not None and b.linear is not None:
        A1, B1, C1, D1 = a.linear
        A2, B2, C2, D2 = b.linear
        nx1, nx2 = A1.shape[0], A2.shape[0]
        A = np.zeros((nx1 + nx2, nx1 + nx2))
        A[:nx1, :nx1] = A1
        A[nx1:, nx1:] = A2
        return _linear_realization(A, np.vstack([B1, B2]), np.hstack([C1, C2]), D1 + D2)
    k = a.n_x

    def f(x, u):
        return np.concatenate([a.f(x[..., :k], u), b.f(x[..., k:], u)], axis=-1)

    def h(x, u):
        return a.h(x[..., :k], u) + b.h(x[..., k:], u)

    return Realization(a.n_x + b.n_x, a.n, f, h, a.feedthrough or b.feedthrough, None)


# ---------------------------------------------------------------------------
# System model variants


class SystemModel:
    """Causal operator with zero initial state.  Subclasses are immutable."""

    name: str = ""

    @property
    def n(self):
        raise NotImplementedError

    @property
    def is_lti(self):
        return self.realization.linear is not None

    @property
    def feedthrough(self):
        return self.realization.feedthrough

    def dc_map(self):
        """Exact matrix ``K`` with ``int y = K int u`` for decaying L1 inputs, or None."""
        raise NotImplementedError

    def scaled(self, tau):
        return Scaled(tau, self)

    def __add__(self, other):
        return Parallel(self, other)

    def describe(self):
        raise NotImplementedError


@dataclass(frozen=True, eq=False)
class LTI(SystemModel):
    ss: StateSpace
    tf: RationalTF | None = None
    name: str = ""

    @classmethod
    def from_tf(cls, num, den, name=""):
        tf = RationalTF(tuple(num), tuple(den))
        return cls(tf_to_ss(tf), tf, name)

    @property
    def n(self):
        return self.ss.n

    @property
    def realization(self):
        return _realization(self)

    def dc_map(self):
        return np.real(self.ss(0.0))

    def describe(self):
        if self.tf is not None:
            return {"tf": {"num": list(self.tf.num), "den": list(self.tf.den)}}
        return {"ss": {k: getattr(self.ss, k).tolist() for k in "ABCD"}}


@dataclass(frozen=True, eq=False)
class Nonlinear(SystemModel):
    model: NonlinearStateSpace
    name: str = ""

    @classmethod
    def from_exprs(cls, f, h, n=1, name=""):
        return cls(NonlinearStateSpace(len(f), n, tuple(f), tuple(h)), name)

    @property
    def n(self):
        return self.model.n

    @property
    def realization(self):
        return _realization(self)

    def dc_map(self):
        return _integrator_dc_map(self.model)

    def describe(self):
        m = self.model
        return {
            "nonlinear": {
                "n_x": m.n_x,
                "n": m.n,
                "f": [e.text for e in m.f_exprs],
                "h": [e.text for e in m.h_exprs],
            }
        }


@dataclass(frozen=True, eq=False)
class Scaled(SystemModel):
    tau: float
    inner: SystemModel
    name: str = ""

    def __post_init__(self):
        if not 0.0 <= self.tau <= 1.0:
            raise ModelError(f"scale factor must lie in [0, 1], got {self.tau}")

    @property
    def n(self):
        return self.inner.n

    @property
    def realization(self):
        return _realization(self)

    def dc_map(self):
        k = self.inner.dc_map()
        return None if k is None else self.tau * k

    def describe(self):
        return {"scaled": {"tau": self.tau, "of": self.inner.name or self.inner.describe()}}


@dataclass(frozen=True, eq=False)
class Parallel(SystemModel):
    left: SystemModel
    right: SystemModel
    name: str = ""

    def __post_init__(self):
        if self.left.n != self.right.n:
            raise ModelError("parallel operands must share the input/output dimension")

    @property
    def n(self):
        return self.left.n

    @property
    def realization(self):
        return _realization(self)

    def dc_map(self):
        a, b = self.left.dc_map(), self.right.dc_map()
        return None if a is None or b is None else a + b

    def describe(self):
        return {
            "parallel": [
                self.left.name or self.left.describe(),
                self.right.name or self.right.describe(),
            ]
        }


@lru_cache(maxsize=256)
def _realization(sys):
    if isinstance(sys, LTI):
        s = sys.ss
        return _linear_realization(s.A, s.B, s.C, s.D)
    if isinstance(sys, Nonlinear):
        return _nonlinear_realization(sys.model)
    if isinstance(sys, Scaled):
        return _scaled_realization(sys.tau, sys.inner.realization)
    if isinstance(sys, Parallel):
        return _parallel_realization(sys.left.realization, sys.right.realization)
    raise ModelError(f"unknown system variant {type(sys).__name__}")


def _integrator_dc_map(m, probes=64, seed=12345):
    """Find ``K`` such that some state obeys ``x_k' = h_i(x, u) - (K u)_i`` exactly.

    Then ``int y_i = (K int u)_i + x_k(inf) - x_k(0) = (K int u)_i`` whenever
    the state decays.  The identity is tested on random probe points.
    """
    rng = np.random.default_rng(seed)
    x = rng.normal(scale=2.0, size=(probes, m.n_x))
    u = rng.normal(scale=2.0, size=(probes, m.n))
    K = np.zeros((m.n, m.n))
    try:
        for i, h in enumerate(m.h_exprs):
            hv = h(x, u)
            for fk in m.f_exprs:
                g = hv - fk(x, u)
                coef, *_ = np.linalg.lstsq(u, g, rcond=None)
                # Prefer the rounded coefficients when they satisfy the identity too.
                snapped = np.round(coef, 10)
                if np.max(np.abs(u @ snapped - g)) <= 1e-12 * (1 + np.max(np.abs(g))):
                    coef = snapped
                if np.max(np.abs(u @ coef - g)) <= 1e-12 * (1 + np.max(np.abs(g))):
                    K[i] = coef
                    break
            else:
                return None
    except EvaluationError:
        return None
    return K


# ---------------------------------------------------------------------------
# Frequency response and simulation


def _lti_matrices(sys):
    r = sys.realization
    if r.linear is None:
        raise ModelError(f"{sys.name or type(sys).__name__} is not LTI")
    return r.linear


def freq_response(sys, omega):
    """``C (j omega I - A)^-1 B + D`` for an LTI-composed system (n x n complex)."""
    A, B, C, D = _lti_matrices(sys)
    if A.shape[0] == 0:
        return D.astype(complex)
    if np.isinf(omega):
        return D.astype(complex)
    s = 1j * float(omega)
    return C @ np.linalg.solve(s * np.eye(A.shape[0]) - A, B) + D


def dc_gain(sys):
    return np.real(freq_response(sys, 0.0))


def _rk4_linear_step(A, B, dt):
    """Matrices of one RK4 step for ``x' = A x + B u``.

    Returns ``(Phi, G0, Gm, G1)`` with ``x+ = Phi x + G0 u0 + Gm um + G1 u1``
    where ``um`` is the input at the half step.
    """
    nx = A.shape[0]
    I = np.eye(nx)
    h = dt
    A2 = A @ A
    A3 = A2 @ A
    A4 = A3 @ A
    Phi = I + h * A + h**2 / 2 * A2 + h**3 / 6 * A3 + h**4 / 24 * A4
    # Stage derivatives w.r.t. (u0, um, u1), expanded by hand from the RK4 tableau.
    k1_u0 = B
    k2_u0 = h / 2 * A @ k1_u0
    k2_um = B
    k3_u0 = h / 2 * A @ k2_u0
    k3_um = B + h / 2 * A @ k2_um
    k4_u0 = h * A @ k3_u0
    k4_um = h * A @ k3_um
    k4_u1 = B
    G0 = h / 6 * (k1_u0 + 2 * k2_u0 + 2 * k3_u0 + k4_u0)
    Gm = h / 6 * (2 * k2_um + 2 * k3_um + k4_um)
    G1 = h / 6 * k4_u1
    return Phi, G0, Gm, G1


def half_step_inputs(U):
    """Input values midway between samples along axis 1.

    Uses the cubic through samples ``k-2 .. k+1``, so the step from ``t_k``
    to ``t_k+1`` reads no sample beyond ``t_k+1``.  The first two steps use
    the cubic through the first four samples.  ``U`` has shape
    ``(..., N, n)``; the result has ``N - 1`` rows.
    """
    U = np.asarray(U, dtype=float)
    N = U.shape[-2]
    if N < 4:
        return 0.5 * (U[..., :-1, :] + U[..., 1:, :])
    M = np.empty(U.shape[:-2] + (N - 1, U.shape[-1]))
    M[..., 2:, :] = (U[..., :-3, :] - 5.0 * U[..., 1:-2, :] + 15.0 * U[..., 2:-1, :] + 5.0 * U[..., 3:, :]) / 16.0
    M[..., 0, :] = (5.0 * U[..., 0, :] + 15.0 * U[..., 1, :] - 5.0 * U[..., 2, :] + U[..., 3, :]) / 16.0
    M[..., 1, :] = (9.0 * (U[..., 1, :] + U[..., 2, :]) - U[..., 0, :] - U[..., 3, :]) / 16.0
    return M


def _check_finite(x, k, dt):
    if not np.all(np.isfinite(x)) or np.max(np.abs(x), initial=0.0) > 1e150:
        raise SimulationError("state diverged", time=k * dt)


def _integrate(r, U, dt, keep_states=True):
    """RK4 over a batch of inputs ``U`` with shape ``(batch, N, n)``."""
    nb, N, _ = U.shape
    X = np.zeros((nb, N, r.n_x)) if keep_states or r.linear is None else None
    if r.n_x == 0:
        Y = r.h(np.zeros((nb, N, 0)), U)
        return Y, np.zeros((nb, N, 0))
    if r.linear is not None:
        A, B, C, D = r.linear
        Phi, G0, Gm, G1 = _rk4_linear_step(A, B, dt)
        drive = U[:, :-1] @ G0.T + half_step_inputs(U) @ Gm.T + U[:, 1:] @ G1.T
        PhiT = Phi.T
        Xs = np.zeros((nb, N, r.n_x))
        x = np.zeros((nb, r.n_x))
        for k in range(N - 1):
            x = x @ PhiT + drive[:, k]
            Xs[:, k + 1] = x
            if k % 1000 == 999:
                _check_finite(x, k + 1, dt)
        _check_finite(x, N - 1, dt)
        Y = Xs @ C.T + U @ D.T
        return Y, Xs
    f = r.f
    x = np.zeros((nb, r.n_x))
    half = dt / 2
    UM = half_step_inputs(U)
    try:
        for k in range(N - 1):
            u0 = U[:, k]
            u1 = U[:, k + 1]
            um = UM[:, k]
            k1 = f(x, u0)
            k2 = f(x + half * k1, um)
            k3 = f(x + half * k2, um)
            k4 = f(x + dt * k3, u1)
            x = x + (dt / 6) * (k1 + 2 * k2 + 2 * k3 + k4)
            X[:, k + 1] = x
            if k % 500 == 499:
                _check_finite(x, k + 1, dt)
    except EvaluationError as exc:
        raise SimulationError(str(exc), time=k * dt) from exc
    except FloatingPointError as exc:
        raise SimulationError(str(exc), time=k * dt) from exc
    _check_finite(x, N - 1, dt)
    try:
        Y = r.h(X, U)
    except EvaluationError as exc:
        raise SimulationError(str(exc)) from exc
    return Y, X


def simulate_batch(sys, inputs, dt=None):
    """Simulate many inputs at once.

    ``inputs`` is a sequence of :class:`Signal` on a common grid or an array
    of shape ``(batch, N, n)`` (then ``dt`` is required).  Returns output and
    state arrays of shapes ``(batch, N, n)`` and ``(batch, N, n_x)``.
    """
    if isinstance(inputs, np.ndarray):
        U = np.asarray(inputs, dtype=float)
        if dt is None:
            raise ValueError("dt is required for array inputs")
    else:
        inputs = list(inputs)
        dt = inputs[0].dt
        for s in inputs:
            if s.dt != dt or len(s) != len(inputs[0]):
                raise ValueError("batch inputs must share a grid")
        U = np.stack([s.samples for s in inputs])
    if U.shape[2] != sys.n:
        raise ModelError(f"input dimension {U.shape[2]} does not match system dimension {sys.n}")
    try:
        with np.errstate(over="raise", invalid="raise"):
            return _integrate(sys.realization, U, dt)
    except FloatingPointError as exc:
        raise SimulationError(f"floating-point failure during integration: {exc}") from exc


@lru_cache(maxsize=24)
def _leaf_battery_output(sys, battery):
    Y, _ = simulate_batch(sys, battery.signals)
    Y.setflags(write=False)
    return Y


def battery_response(sys, inputs):
    """Outputs ``(batch, N, n)`` of ``sys`` for every member of ``inputs``.

    Scaled and parallel systems are assembled from their parts, which is
    exactly what RK4 on the block-diagonal realization computes.  Leaf
    responses to a hashable battery are cached.
    """
    if isinstance(sys, Scaled):
        return sys.tau * battery_response(sys.inner, inputs)
    if isinstance(sys, Parallel):
        return battery_response(sys.left, inputs) + battery_response(sys.right, inputs)
    if hasattr(inputs, "key"):
        return _leaf_battery_output(sys, inputs)
    Y, _ = simulate_batch(sys, list(inputs))
    return Y


def simulate(sys, u):
    """Return ``(output, states)`` Signals for input ``u`` from zero initial state."""
    Y, X = simulate_batch(sys, [u])
    states = Signal(u.dt, X[0]) if X.shape[2] else Signal(u.dt, np.zeros((len(u), 1)))
    return Signal(u.dt, Y[0]), states


# ---------------------------------------------------------------------------
# Single-trajectory (plain float) realizations, used by the loop integrator


@dataclass(frozen=True)
class ScalarRealization:
    """``f`` and ``h`` acting on lists of floats; cheap per call for one trajectory."""

    n_x: int
    n: int
    f: object
    h: object
    feedthrough: bool


def _affine_source(M, N, xs="x", us="u"):
    rows = []
    for i in range(M.shape[0] if M.size else N.shape[0]):
        terms = [f"{float(M[i, j])!r}*{xs}[{j}]" for j in range(M.shape[1]) if M[i, j] != 0.0]
        terms += [f"{float(N[i, k])!r}*{us}[{k}]" for k in range(N.shape[1]) if N[i, k] != 0.0]
        rows.append(" + ".join(terms) or "0.0")
    return "lambda x, u: [" + ", ".join(rows) + "]"


@lru_cache(maxsize=64)
def scalar_realization(sys):
    if isinstance(sys, LTI):
        A, B, C, D = sys.ss.A, sys.ss.B, sys.ss.C, sys.ss.D
        n, nx = D.shape[0], A.shape[0]
        f = eval(_affine_source(A, B)) if nx else (lambda x, u: [])
        h = eval(_affine_source(C if nx else np.zeros((n, 0)), D))
        return ScalarRealization(nx, n, f, h, bool(np.any(D != 0)))
    if isinstance(sys, Nonlinear):
        m = sys.model
        return ScalarRealization(
            m.n_x, m.n, compile_scalar(m.f_exprs), compile_scalar(m.h_exprs), not m.feedthrough_free
        )
    if isinstance(sys, Scaled):
        r, tau = scalar_realization(sys.inner), sys.tau
        rh = r.h
        return ScalarRealization(
            r.n_x, r.n, r.f, lambda x, u: [tau * v for v in rh(x, u)], r.feedthrough and tau != 0
        )
    if isinstance(sys, Parallel):
        a, b = scalar_realization(sys.left), scalar_realization(sys.right)
        k = a.n_x
        af, bf, ah, bh = a.f, b.f, a.h, b.h

        def f(x, u):
            return af(x[:k], u) + bf(x[k:], u)

        def h(x, u):
            return [p + q for p, q in zip(ah(x[:k], u), bh(x[k:], u))]

        return ScalarRealization(a.n_x + b.n_x, a.n, f, h, a.feedthrough or b.feedthrough)
    raise ModelError(f"unknown system variant {type(sys).__name__}")


# ---------------------------------------------------------------------------
# Gains


@dataclass(frozen=True)
class GainInfo:
    value: float
    kind: str  # "exact", "upper-bound" or "probe"
    notes: tuple = field(default_factory=tuple)


def instantaneous_gain_info(sys):
    if isinstance(sys, LTI):
        return GainInfo(float(np.linalg.norm(sys.ss.D, 2)) if sys.ss.D.size else 0.0, "exact")
    if isinstance(sys, Nonlinear):
        if sys.model.feedthrough_free:
            return GainInfo(0.0, "exact")
        return GainInfo(_probe_gain(sys), "probe")
    if isinstance(sys, Scaled):
        inner = instantaneous_gain_info(sys.inner)
        return GainInfo(sys.tau * inner.value, inner.kind, inner.notes)
    if isinstance(sys, Parallel):
        a, b = instantaneous_gain_info(sys.left), instantaneous_gain_info(sys.right)
        if a.value == 0.0 or b.value == 0.0:
            kind = a.kind if b.value == 0.0 else b.kind
            return GainInfo(a.value + b.value, kind, a.notes + b.notes)
        return GainInfo(
            a.value + b.value, "upper-bound", a.notes + b.notes + ("parallel sum bounds the gain",)
        )
    raise ModelError(f"unknown system variant {type(sys).__name__}")


def instantaneous_gain(sys):
    """Uniform instantaneous gain (exact for LTI and feedthrough-free systems)."""
    return instantaneous_gain_info(sys).value


def _probe_gain(sys, windows=(0.1, 0.05, 0.025), amplitudes=(0.1, 1.0, 10.0), steps=200):
    best = 0.0
    for a in amplitudes:
        ratios = []
        for w in windows:
            dt = w / steps
            u = Signal(dt, np.full((steps + 1, sys.n), a))
            try:
                y, _ = simulate(sys, u)
            except SimulationError as exc:
                raise SimulationError(f"instantaneous-gain probe diverged: {exc}") from exc
            ratios.append(l2_norm(y) / l2_norm(u))
        slope, intercept = np.polyfit(np.array(windows), np.array(ratios), 1)
        best = max(best, float(intercept), 0.0)
    return best


def gain_estimate(sys, battery):
    """Lower bound on the L2 gain: max of ``||y|| / ||u||`` over the battery."""
    signals = list(battery)
    if not signals:
        raise ValueError("empty battery")
    norms = [l2_norm(s) for s in signals]
    if min(norms) == 0.0:
        raise ValueError("battery contains a zero-norm input")
    Y, _ = simulate_batch(sys, signals)
    dt = signals[0].dt
    return max(l2_norm(Signal(dt, Y[i])) / norms[i] for i in range(len(signals)))


# ---------------------------------------------------------------------------
# Built-in systems

PAPER_P_F = ("x2 - u1", "-3*x1 - x2/(1 + x2^2) + u1")
PAPER_P_H = ("x2",)

# Published NI classifications of the built-in systems; reports compare against these.
REFERENCE_CLAIMS = {
    "paper-P": "NI",
    "P-lin": "SNI",
    "C1": "SNI",
    "C2": "SNI",
    "C3": "SNI",
    "G": "SNI",
    "4G": "SNI",
    "C4": "SNI",
    "C5": "SNI",
}


def _make_builtin(name):
    if name == "paper-P":
        return Nonlinear.from_exprs(PAPER_P_F, PAPER_P_H, name=name)
    if name == "P-lin":
        ss = StateSpace([[0.0, 1.0], [-3.0, -1.0]], [[-1.0], [1.0]], [[0.0, 1.0]], [[0.0]])
        return LTI(ss, RationalTF((1.0, 3.0), (1.0, 1.0, 3.0)), name)
    tfs = {
        "C1": ((-1.0, -2.0), (1.0, 1.0)),
        "C2": ((0.1,), (1.0, 1.0)),
        "C3": ((1.0,), (1.0, 1.0)),
        "G": ((-1.0, -1.0), (1.0, 2.0)),
        "4G": ((-4.0, -4.0), (1.0, 2.0)),
        "unity": ((1.0,), (1.0,)),
        "zero": ((0.0,), (1.0,)),
    }
    if name in tfs:
        return LTI.from_tf(*tfs[name], name=name)
    if name == "C4":
        return Parallel(builtin("paper-P"), builtin("4G"), name="C4")
    if name == "C5":
        return Parallel(builtin("paper-P"), builtin("G"), name="C5")
    raise ModelError(f"unknown builtin system {name!r}; choose from {', '.join(BUILTIN_NAMES)}")


BUILTIN_NAMES = ("paper-P", "P-lin", "C1", "C2", "C3", "C4", "C5", "G", "4G", "unity", "zero")
_BUILTINS = {}


def builtin(name):
    """Named system from the reference set (``paper-P``, ``C1`` .. ``C5``, ``G``, ...)."""
    if name not in _BUILTINS:
        _BUILTINS[name] = _make_builtin(name)
    return _BUILTINS[name]
