"""One-step tangent propagators and overflow-safe products of them.

A cocycle source yields the linear map that carries tangent perturbations from
step t to t+1.  Two constructions are provided: analytic Jacobian propagators
along an ODE trajectory, and companion matrices of a fitted piecewise-VAR
model selected by the hard assignment.  Long products of these maps are
evaluated with per-step QR re-orthonormalization so that strongly contracting
or expanding directions neither underflow nor swamp each other.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .dynsys import OdeModel, TimeSeries, tangent_propagators
from .errors import NumericalError
from .fembv import ClusterParams, FittedModel

__all__ = [
    "CocycleSource",
    "StabilizedProduct",
    "RankCollapseError",
    "companion_matrix",
    "var_cocycle",
    "analytic_cocycle",
    "constant_cocycle",
    "stabilized_product",
]


class RankCollapseError(NumericalError):
    """A cocycle product lost rank (a QR diagonal entry underflowed)."""


@dataclass(frozen=True)
class CocycleSource:
    """A finite sequence of one-step tangent maps along a trajectory.

    matrices[t] maps perturbations at step t to step t+1; valid t is
    0..n_steps-1.  time_unit is the physical duration of one step, used to
    convert per-step growth rates into rates per unit time.
    """

    kind: str
    matrices: np.ndarray
    time_unit: float = 1.0
    t0: float = 0.0

    def __post_init__(self):
        m = np.asarray(self.matrices, dtype=float)
        if m.ndim != 3 or m.shape[1] != m.shape[2]:
            raise ValueError("matrices must have shape (n_steps, D, D)")
        if not np.all(np.isfinite(m)):
            raise ValueError("cocycle contains non-finite one-step maps")
        if self.time_unit <= 0:
            raise ValueError("time_unit must be positive")
        object.__setattr__(self, "matrices", m)

    @property
    def n_steps(self) -> int:
        return self.matrices.shape[0]

    @property
    def dim_tangent(self) -> int:
        return self.matrices.shape[1]

    def step(self, t: int) -> np.ndarray:
        """The one-step map from t to t+1."""
        if not 0 <= t < self.n_steps:
            raise IndexError(f"step index {t} outside range [0, {self.n_steps})")
        return self.matrices[t]

    def block(self, t_start: int, n_steps: int) -> np.ndarray:
        """The maps for steps t_start .. t_start+n_steps-1, oldest first."""
        if n_steps < 1:
            raise ValueError("n_steps must be >= 1")
        if t_start < 0 or t_start + n_steps > self.n_steps:
            raise IndexError(
                f"window [{t_start}, {t_start + n_steps}) outside range [0, {self.n_steps})"
            )
        return self.matrices[t_start : t_start + n_steps]


def companion_matrix(theta: ClusterParams) -> np.ndarray:
    """One-step linear map of a VAR(m) model on stacked histories.

    Top block row holds the lag matrices A_1..A_m; identity blocks sit on the
    block subdiagonal.  For m=1 this is just A_1.  The offset mu is dropped:
    perturbations do not feel constant terms.
    """
    d, m = theta.dim, theta.order
    if m == 1:
        return theta.coeffs[0].copy()
    out = np.zeros((d * m, d * m))
    for tau, A in enumerate(theta.coeffs):
        out[:d, tau * d : (tau + 1) * d] = A
    idx = np.arange(d * (m - 1))
    out[d + idx, idx] = 1.0
    return out


def var_cocycle(model: FittedModel, series: TimeSeries) -> CocycleSource:
    """Cocycle of a fitted piecewise-VAR model along its series.

    The map from step t to t+1 is the companion matrix of the cluster active
    at t+1.  One unit of discrete time spans series.dt.
    """
    labels = model.affiliation.hard_labels
    if labels.shape[0] != len(series):
        raise ValueError(
            f"model affiliation length {labels.shape[0]} != series length {len(series)}"
        )
    comps = np.stack([companion_matrix(c) for c in model.clusters])
    d, m = model.dim, model.order
    if m >= 2:
        shift = np.zeros((d * m, d * m))
        idx = np.arange(d * (m - 1))
        shift[d + idx, idx] = 1.0
        for comp in comps:
            if not np.array_equal(comp[d:], shift[d:]):
                raise ValueError("companion matrix lost its shift structure")
    return CocycleSource(
        "var-companion", comps[labels[1:]], time_unit=series.dt, t0=series.t0
    )


def analytic_cocycle(model: OdeModel, traj: TimeSeries) -> CocycleSource:
    """Cocycle of Jacobian propagators along an ODE trajectory."""
    mats = tangent_propagators(model, traj.values[:-1], traj.dt)
    return CocycleSource("analytic", mats, time_unit=traj.dt, t0=traj.t0)


def constant_cocycle(matrix: np.ndarray, n_steps: int, time_unit: float = 1.0) -> CocycleSource:
    """A source repeating one fixed map; for tests and linear systems."""
    matrix = np.asarray(matrix, dtype=float)
    return CocycleSource(
        "constant", np.broadcast_to(matrix, (n_steps,) + matrix.shape).copy(),
        time_unit=time_unit,
    )


@dataclass
class StabilizedProduct:
    """QR-compressed product of one-step maps applied to a seed basis.

    The product P satisfies P @ seed = Q @ R where Q is column-orthonormal
    and R is the accumulated triangular factor.  log_growth[j] sums the log
    magnitudes of the j-th diagonal entry over all steps.  When the R factor
    is kept, it is rescaled to unit max magnitude and log_scale holds the log
    of the factor pulled out.
    """

    Q: np.ndarray
    log_growth: np.ndarray
    n_steps: int
    r_factor: np.ndarray | None = None
    log_scale: float = 0.0

    def __post_init__(self):
        k = self.Q.shape[1]
        if np.max(np.abs(self.Q.T @ self.Q - np.eye(k))) > 1e-10:
            raise ValueError("Q columns are not orthonormal")


def stabilized_product(
    source: CocycleSource,
    t_start: int,
    n_steps: int,
    seed_basis: np.ndarray | None = None,
    keep_r: bool = False,
) -> StabilizedProduct:
    """Apply n_steps one-step maps to a basis, re-orthonormalizing each step.

    Signs are fixed so every R diagonal is nonnegative.  A diagonal entry
    below 1e-300 means a direction collapsed; that raises rather than
    silently degrading.
    """
    D = source.dim_tangent
    if seed_basis is None:
        seed_basis = np.eye(D)
    Q = np.asarray(seed_basis, dtype=float)
    if Q.ndim != 2 or Q.shape[0] != D or Q.shape[1] > D:
        raise ValueError(f"seed basis must be ({D}, k<= {D})")
    k = Q.shape[1]
    if np.max(np.abs(Q.T @ Q - np.eye(k))) > 1e-8:
        raise ValueError("seed basis must have orthonormal columns")
    block = source.block(t_start, n_steps)
    log_growth = np.zeros(k)
    r_acc = np.eye(k) if keep_r else None
    log_scale = 0.0
    for M in block:
        Q, R = np.linalg.qr(M @ Q)
        s = np.sign(np.diagonal(R)).copy()
        s[s == 0] = 1.0
        Q = Q * s
        R = R * s[:, None]
        diag = np.diagonal(R)
        if np.any(diag < 1e-300):
            j = int(np.argmin(diag))
            raise RankCollapseError(
                f"direction {j} collapsed at step {t_start + 1}..{t_start + n_steps} "
                f"(|R_jj|={diag[j]:.3g})"
            )
        log_growth += np.log(diag)
        if keep_r:
            r_acc = R @ r_acc
            scale = np.max(np.abs(r_acc))
            r_acc /= scale
            log_scale += np.log(scale)
    return StabilizedProduct(Q, log_growth, n_steps, r_acc, log_scale)
