"""Benchmark ODE systems, fixed-step integration, and one-step tangent propagators.

Two continuous-time systems are built in: the fast-slow FitzHugh-Nagumo
oscillator (dimension 2) and the Lorenz 63 system (dimension 3).  Both come
with analytic Jacobians so that tangent dynamics can be integrated alongside
the state with the same RK4 samples.

Vector fields and Jacobians are vectorized: they accept a single state of
shape ``(dim,)`` or a batch of states of shape ``(n, dim)``.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import NumericalError

__all__ = [
    "OdeModel",
    "TimeSeries",
    "IntegrationBlowupError",
    "fitzhugh_nagumo",
    "lorenz63",
    "make_model",
    "model_defaults",
    "MODEL_REGISTRY",
    "rk4_step",
    "simulate",
    "tangent_propagator",
    "tangent_propagators",
    "read_series_csv",
    "write_series_csv",
]


class IntegrationBlowupError(NumericalError):
    """The integrator produced a non-finite state."""

    def __init__(self, t: float, state: np.ndarray):
        self.t = t
        self.state = np.asarray(state)
        super().__init__(
            f"integration blew up at t={t:.6g}, state={np.array2string(self.state, precision=6)}"
        )


@dataclass(frozen=True)
class OdeModel:
    """A continuous-time system dx/dt = f(x) with an analytic Jacobian.

    ``vector_field`` and ``jacobian`` must broadcast over a leading batch
    axis: ``(n, dim) -> (n, dim)`` and ``(n, dim) -> (n, dim, dim)``.
    """

    name: str
    dim: int
    params: dict[str, float]
    vector_field: Callable[[np.ndarray], np.ndarray]
    jacobian: Callable[[np.ndarray], np.ndarray]


@dataclass
class TimeSeries:
    """Uniformly sampled multivariate observations.

    values has shape (T, dim) with T >= 2; all entries must be finite.
    """

    dt: float
    t0: float
    values: np.ndarray

    def __post_init__(self):
        self.values = np.atleast_2d(np.asarray(self.values, dtype=float))
        if self.values.ndim != 2:
            raise ValueError("values must be a (T, dim) array")
        if self.values.shape[0] < 2:
            raise ValueError("a time series needs at least 2 samples")
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("time series contains non-finite entries")

    def __len__(self) -> int:
        return self.values.shape[0]

    @property
    def dim(self) -> int:
        return self.values.shape[1]

    @property
    def times(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(len(self))

    def column(self, j: int) -> "TimeSeries":
        """Extract a single observable as a scalar series."""
        return TimeSeries(self.dt, self.t0, self.values[:, j : j + 1].copy())


def _fhn_field(epsilon: float, a: float, b: float):
    def vf(state):
        s = np.asarray(state, dtype=float)
        x, y = s[..., 0], s[..., 1]
        return np.stack([(x - x**3 / 3.0 - y) / epsilon, x + a - b * y], axis=-1)

    def jac(state):
        s = np.asarray(state, dtype=float)
        x = s[..., 0]
        out = np.empty(s.shape[:-1] + (2, 2))
        out[..., 0, 0] = (1.0 - x**2) / epsilon
        out[..., 0, 1] = -1.0 / epsilon
        out[..., 1, 0] = 1.0
        out[..., 1, 1] = -b
        return out

    return vf, jac


def fitzhugh_nagumo(epsilon: float = 0.01, a: float = 0.4, b: float = 0.3) -> OdeModel:
    """Fast-slow FitzHugh-Nagumo oscillator in the slow time scale.

    dx/dt = (x - x^3/3 - y)/epsilon,  dy/dt = x + a - b*y.
    """
    vf, jac = _fhn_field(epsilon, a, b)
    return OdeModel("fhn", 2, {"epsilon": epsilon, "a": a, "b": b}, vf, jac)


def _lorenz_field(sigma: float, rho: float, beta: float):
    def vf(state):
        s = np.asarray(state, dtype=float)
        x, y, z = s[..., 0], s[..., 1], s[..., 2]
        return np.stack(
            [sigma * (y - x), x * (rho - z) - y, x * y - beta * z], axis=-1
        )

    def jac(state):
        s = np.asarray(state, dtype=float)
        x, y, z = s[..., 0], s[..., 1], s[..., 2]
        out = np.zeros(s.shape[:-1] + (3, 3))
        out[..., 0, 0] = -sigma
        out[..., 0, 1] = sigma
        out[..., 1, 0] = rho - z
        out[..., 1, 1] = -1.0
        out[..., 1, 2] = -x
        out[..., 2, 0] = y
        out[..., 2, 1] = x
        out[..., 2, 2] = -beta
        return out

    return vf, jac


def lorenz63(sigma: float = 10.0, rho: float = 28.0, beta: float = 8.0 / 3.0) -> OdeModel:
    """Lorenz 63 system; the defaults give the classic chaotic attractor."""
    vf, jac = _lorenz_field(sigma, rho, beta)
    return OdeModel("lorenz63", 3, {"sigma": sigma, "rho": rho, "beta": beta}, vf, jac)


MODEL_REGISTRY: dict[str, Callable[..., OdeModel]] = {
    "fhn": fitzhugh_nagumo,
    "lorenz63": lorenz63,
}

# Per-model simulation defaults: step size, trajectory length, transient to
# discard before analysis, and a starting point.  FHN reaches its relaxation
# cycle within one period, so no transient is discarded there.
_DEFAULTS = {
    "fhn": {"dt": 0.003, "steps": 4000, "discard": 0, "x0": (-1.0, 1.0)},
    "lorenz63": {"dt": 0.01, "steps": 20000, "discard": 10000, "x0": (1.0, 1.0, 1.0)},
}


def make_model(name: str, **params) -> OdeModel:
    """Build a registered model, overriding any of its default parameters."""
    try:
        factory = MODEL_REGISTRY[name]
    except KeyError:
        raise KeyError(f"unknown model {name!r}; known: {sorted(MODEL_REGISTRY)}") from None
    return factory(**params)


def model_defaults(name: str) -> dict:
    """Simulation defaults (dt, steps, discard, x0) for a registered model."""
    return dict(_DEFAULTS[name])


def _rk4_stages(model: OdeModel, state: np.ndarray, dt: float):
    """RK4 stage states and stage derivatives for the base flow."""
    f1 = model.vector_field(state)
    s2 = state + 0.5 * dt * f1
    f2 = model.vector_field(s2)
    s3 = state + 0.5 * dt * f2
    f3 = model.vector_field(s3)
    s4 = state + dt * f3
    f4 = model.vector_field(s4)
    return (state, s2, s3, s4), (f1, f2, f3, f4)


def rk4_step(model: OdeModel, state: np.ndarray, dt: float) -> np.ndarray:
    """Advance the state by one classical fourth-order Runge-Kutta step."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    state = np.asarray(state, dtype=float)
    if state.shape[-1] != model.dim:
        raise ValueError(f"state dimension {state.shape[-1]} != model dim {model.dim}")
    _, (f1, f2, f3, f4) = _rk4_stages(model, state, dt)
    out = state + (dt / 6.0) * (f1 + 2.0 * f2 + 2.0 * f3 + f4)
    if not np.all(np.isfinite(out)):
        raise IntegrationBlowupError(0.0, state)
    return out


def simulate(
    model: OdeModel,
    x0,
    dt: float,
    steps: int,
    discard: int = 0,
    t0: float = 0.0,
) -> TimeSeries:
    """Integrate a trajectory, keeping `steps` samples after an initial transient.

    The first retained sample is the state after `discard` steps; `steps`
    counts the retained samples, so the result has length `steps`.
    """
    if steps < 2:
        raise ValueError("steps must be >= 2")
    if discard < 0:
        raise ValueError("discard must be >= 0")
    x = np.asarray(x0, dtype=float)
    if x.shape != (model.dim,):
        raise ValueError(f"x0 must have shape ({model.dim},)")
    out = np.empty((steps, model.dim))
    for k in range(discard + steps - 1):
        kept = k - discard
        if kept >= 0:
            out[kept] = x
        x = rk4_step(model, x, dt)
        if not np.all(np.isfinite(x)):
            raise IntegrationBlowupError(t0 + (k + 1) * dt, x)
    out[steps - 1] = x
    return TimeSeries(dt, t0 + discard * dt, out)


def tangent_propagators(model: OdeModel, states: np.ndarray, dt: float) -> np.ndarray:
    """One-step tangent propagators at each of a batch of states.

    Integrates the variational equation dM/dt = J(x(t)) M, M(0) = I, with the
    same RK4 stages as the base flow, so state and tangent share samples.
    Returns an array of shape (n, dim, dim).
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    states = np.atleast_2d(np.asarray(states, dtype=float))
    d = model.dim
    if states.shape[-1] != d:
        raise ValueError(f"state dimension {states.shape[-1]} != model dim {d}")
    (s1, s2, s3, s4), _ = _rk4_stages(model, states, dt)
    j1 = model.jacobian(s1)
    j2 = model.jacobian(s2)
    j3 = model.jacobian(s3)
    j4 = model.jacobian(s4)
    eye = np.broadcast_to(np.eye(d), j1.shape)
    k1 = j1
    k2 = j2 @ (eye + 0.5 * dt * k1)
    k3 = j3 @ (eye + 0.5 * dt * k2)
    k4 = j4 @ (eye + dt * k3)
    out = eye + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    if not np.all(np.isfinite(out)):
        raise IntegrationBlowupError(0.0, states)
    return out


def tangent_propagator(model: OdeModel, state, dt: float) -> np.ndarray:
    """One-step tangent propagator at a single state; shape (dim, dim)."""
    return tangent_propagators(model, np.asarray(state, dtype=float)[None, :], dt)[0]


# ---------------------------------------------------------------------------
# CSV serialization: header `t,x1,...,xd`, full double precision.

def write_series_csv(series: TimeSeries, path) -> None:
    with open(path, "w", newline="") as fh:
        _write_series(series, fh)


def _write_series(series: TimeSeries, fh) -> None:
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(["t"] + [f"x{j + 1}" for j in range(series.dim)])
    times = series.times
    for k in range(len(series)):
        writer.writerow(
            [f"{times[k]:.17g}"] + [f"{v:.17g}" for v in series.values[k]]
        )


def series_csv_text(series: TimeSeries) -> str:
    buf = io.StringIO()
    _write_series(series, buf)
    return buf.getvalue()


def read_series_csv(path, dt: float | None = None) -> TimeSeries:
    """Read a time series from CSV.

    Understands the toolkit's own format (header `t,x1,...`).  For external
    data, any numeric CSV works: a header whose first column is `t` (or
    `time`) is treated as a time column; otherwise every column is an
    observable.  Headerless numeric files are accepted.  If no time column is
    present, `dt` is used (default 1.0).
    """
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r and any(c.strip() for c in r)]
    if not rows:
        raise ValueError(f"{path}: empty CSV")
    header = rows[0]
    has_header = not _all_numeric(header)
    data_rows = rows[1:] if has_header else rows
    if not data_rows:
        raise ValueError(f"{path}: no data rows")
    data = np.array([[float(c) for c in r] for r in data_rows])
    time_col = has_header and header[0].strip().lower() in ("t", "time")
    if time_col:
        times, values = data[:, 0], data[:, 1:]
        if len(times) < 2:
            raise ValueError(f"{path}: need at least 2 rows")
        steps = np.diff(times)
        step = float(np.median(steps))
        if step <= 0 or not np.allclose(steps, step, rtol=1e-6, atol=1e-12):
            raise ValueError(f"{path}: time column is not uniformly sampled")
        return TimeSeries(step, float(times[0]), values)
    return TimeSeries(dt if dt is not None else 1.0, 0.0, data)


def _all_numeric(row) -> bool:
    try:
        for cell in row:
            float(cell)
    except ValueError:
        return False
    return True
