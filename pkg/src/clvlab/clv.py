"""Covariant Lyapunov vectors and finite-time exponents from cocycle sources.

The vectors at time t are found by intersecting two filtrations of tangent
space: the expanding one carried in from the past and the contracting one
read off from the future.  Concretely,

  1. a stabilized product over the N steps ending at t - n builds an
     orthonormal basis ordered by decreasing stretch; its leading j columns
     span the nested past subspaces (the left singular directions of the
     window product, to which the re-orthonormalized basis converges),
  2. those subspaces are pushed forward the remaining n steps with per-step
     re-orthonormalization, which turns the orthogonal directions into
     covariant ones,
  3. the transposed one-step maps of the M steps after t, applied newest
     first, build the right singular basis of the future product the same
     way; columns j..d span the future subspaces,
  4. the j-th vector is the principal direction shared by the j-th past and
     future subspaces (their dimensions sum to d + 1, so a one-dimensional
     intersection exists generically),
  5. each vector's finite-time exponent is the average log growth of its
     image over the M future steps.

Singular bases are taken from the QR iterations rather than from an SVD of
the accumulated window product: the latter is exact only in infinite
precision, since window singular values routinely spread beyond 1e16 and
leave every subdominant singular direction numerically undetermined.

Everything is computed for batches of time points at once: numpy's stacked
QR and SVD turn the per-point loops into a single loop over window offsets.
A QR-based spectrum estimator over long windows is included for validation.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field

import numpy as np

from .cocycle import CocycleSource, RankCollapseError
from .errors import NumericalError

__all__ = [
    "ClvParams",
    "ClvResult",
    "ClvSeries",
    "NoIntersectionError",
    "MultiplicityWarning",
    "le_spectrum_qr",
    "clv_at",
    "clv_series",
]

VECTORS_FORMAT_VERSION = 1

# Minimum principal cosine for a past/future subspace pair to count as
# intersecting; below it the filtrations have numerically come apart.
INTERSECTION_TOL = 1e-6

# Relative singular-value gap under which directions are flagged as
# effectively degenerate (the returned vectors are then basis-dependent).
MULTIPLICITY_GAP = 1e-12


class NoIntersectionError(NumericalError):
    """A past and a future filtration subspace failed to intersect."""


class MultiplicityWarning(UserWarning):
    """Singular spectrum nearly degenerate; affected vectors are arbitrary."""


@dataclass(frozen=True)
class ClvParams:
    """Window sizes for the vector computation at one time point.

    past_steps grows the expanding filtration, future_steps the contracting
    one (defaults to past_steps), and correction_steps is the length of the
    push-forward that makes the past directions covariant.  Zero correction
    steps returns the raw singular directions, useful as a diagnostic.
    """

    past_steps: int
    future_steps: int | None = None
    correction_steps: int = 0

    def __post_init__(self):
        if self.future_steps is None:
            object.__setattr__(self, "future_steps", self.past_steps)
        if self.past_steps < 1 or self.future_steps < 1:
            raise ValueError("past_steps and future_steps must be >= 1")
        if self.correction_steps < 0:
            raise ValueError("correction_steps must be >= 0")

    @property
    def margin_before(self) -> int:
        return self.past_steps + self.correction_steps

    @property
    def margin_after(self) -> int:
        return self.future_steps


@dataclass
class ClvResult:
    """Unit covariant vectors, exponents, and pairwise alignment at one step.

    vectors[:, j] is the j-th vector, columns ordered by decreasing
    finite-time exponent.  ftle is per unit time of the source.  angles[i, j]
    is the absolute cosine between vectors i and j.
    """

    t: int
    vectors: np.ndarray
    ftle: np.ndarray
    angles: np.ndarray

    def __post_init__(self):
        d = self.vectors.shape[1]
        norms = np.linalg.norm(self.vectors, axis=0)
        if np.max(np.abs(norms - 1.0)) > 1e-10:
            raise ValueError("vector columns must be unit norm")
        if np.any(np.diff(self.ftle) > 1e-12):
            raise ValueError("ftle must be sorted non-increasing")
        if self.angles.shape != (d, d):
            raise ValueError("angles must be square")
        if np.max(np.abs(self.angles - self.angles.T)) > 1e-12:
            raise ValueError("angles must be symmetric")
        if np.max(np.abs(np.diagonal(self.angles) - 1.0)) > 1e-12:
            raise ValueError("angles diagonal must be 1")
        if np.min(self.angles) < 0 or np.max(self.angles) > 1:
            raise ValueError("angles must lie in [0, 1]")

    @property
    def dim(self) -> int:
        return self.vectors.shape[0]

    def theta(self, i: int, j: int) -> float:
        """Alignment |cos| between vectors i and j (1-based)."""
        return float(self.angles[i - 1, j - 1])


def _check_coverage(source: CocycleSource, ts: np.ndarray, params: ClvParams) -> None:
    lo = int(ts.min()) - params.margin_before
    hi = int(ts.max()) + params.margin_after
    if lo < 0 or hi > source.n_steps:
        raise IndexError(
            f"windows [{lo}, {hi}) exceed the source range [0, {source.n_steps}); "
            f"each point t needs [t - {params.margin_before}, t + {params.margin_after}]"
        )


def _batched_product(source, starts, n_steps, Q, adjoint=False):
    """Stabilized products over per-point windows, one batched QR per offset.

    Q is the (P, D, k) stack of seed bases, replaced by the orthonormal
    image.  With adjoint=True the transposed maps are applied newest first,
    which grows the right singular basis of the forward window product.
    Returns (Q, log_growth, collapsed); collapsed flags points whose product
    lost rank instead of raising.
    """
    P, _, k = Q.shape
    log_growth = np.zeros((P, k))
    collapsed = np.zeros(P, dtype=bool)
    for i in range(n_steps):
        idx = starts + (n_steps - 1 - i if adjoint else i)
        M = source.matrices[idx]
        if adjoint:
            M = np.swapaxes(M, 1, 2)
        Q, R = np.linalg.qr(M @ Q)
        s = np.sign(np.diagonal(R, axis1=-2, axis2=-1)).copy()
        s[s == 0] = 1.0
        Q = Q * s[:, None, :]
        R = R * s[:, :, None]
        diag = np.abs(np.diagonal(R, axis1=-2, axis2=-1))
        collapsed |= np.any(diag < 1e-300, axis=1)
        with np.errstate(divide="ignore"):
            log_growth += np.log(diag)
    return Q, log_growth, collapsed


def _fix_signs(phi: np.ndarray) -> np.ndarray:
    """Leading nonzero component of each row vector made positive."""
    mag = np.abs(phi)
    thresh = 1e-12 * np.max(mag, axis=1, keepdims=True)
    first = np.argmax(mag > thresh, axis=1)
    lead = phi[np.arange(phi.shape[0]), first]
    s = np.sign(lead)
    s[s == 0] = 1.0
    return phi * s[:, None]


def _degenerate_count(log_growth: np.ndarray) -> int:
    """Points whose window growth rates have a near-vanishing gap somewhere."""
    with np.errstate(invalid="ignore"):
        gap = np.abs(log_growth[:, :-1] - log_growth[:, 1:])
    return int(np.count_nonzero(np.any(gap < MULTIPLICITY_GAP, axis=1)))


def _clv_core(source: CocycleSource, ts: np.ndarray, params: ClvParams):
    """Vectors, exponents, angles and failure records for a batch of points."""
    P = ts.shape[0]
    D = source.dim_tangent
    N, M, n = params.past_steps, params.future_steps, params.correction_steps
    _check_coverage(source, ts, params)
    eye = np.broadcast_to(np.eye(D), (P, D, D)).copy()

    # columns ordered by decreasing past stretch
    basis_past, lg_past, col_past = _batched_product(source, ts - n - N, N, eye.copy())
    n_deg = _degenerate_count(lg_past)

    if n > 0:
        pushed, _, col_push = _batched_product(source, ts - n, n, basis_past)
    else:
        pushed, col_push = basis_past, np.zeros(P, dtype=bool)

    # right singular basis of the future window, decreasing stretch first
    future, lg_fut, col_fut = _batched_product(source, ts, M, eye.copy(), adjoint=True)
    n_deg += _degenerate_count(lg_fut)
    if n_deg:
        warnings.warn(
            f"nearly degenerate singular spectrum at {n_deg} of {2 * P} window "
            "decompositions; affected vectors are basis-dependent",
            MultiplicityWarning,
            stacklevel=3,
        )

    vectors = np.empty((P, D, D))
    cosines = np.empty((P, D))
    for jj in range(D):
        B1 = pushed[:, :, : jj + 1]
        B2 = future[:, :, jj:]
        Uj, sj, _ = np.linalg.svd(np.swapaxes(B1, 1, 2) @ B2)
        cosines[:, jj] = sj[:, 0]
        phi = (B1 @ Uj[:, :, :1])[:, :, 0]
        vectors[:, :, jj] = _fix_signs(phi)

    # exponent of each vector: flag-seeded QR push through the future window.
    # Renormalizing columns independently is unstable (contamination of a
    # stable column grows like the top rate); orthogonalizing keeps each
    # R diagonal tracking its own vector's growth.
    V, _ = np.linalg.qr(vectors)
    growth = np.zeros((P, D))
    dead = np.zeros(P, dtype=bool)
    for i in range(M):
        V, R = np.linalg.qr(source.matrices[ts + i] @ V)
        diag = np.abs(np.diagonal(R, axis1=-2, axis2=-1))
        dead |= np.any(diag == 0, axis=1)
        with np.errstate(divide="ignore"):
            growth += np.log(np.where(diag > 0, diag, 1.0))
    ftle = growth / (M * source.time_unit)

    order = np.argsort(-ftle, axis=1, kind="stable")
    ftle = np.take_along_axis(ftle, order, axis=1)
    vectors = np.take_along_axis(vectors, order[:, None, :], axis=2)
    angles = np.clip(np.abs(np.swapaxes(vectors, 1, 2) @ vectors), 0.0, 1.0)
    angles = 0.5 * (angles + np.swapaxes(angles, 1, 2))
    idx = np.arange(D)
    angles[:, idx, idx] = 1.0

    errors: dict[int, str] = {}
    collapsed = col_past | col_push | col_fut | dead
    for p in np.flatnonzero(collapsed):
        errors[int(ts[p])] = "tangent product lost rank inside the window"
    bad = cosines < 1.0 - INTERSECTION_TOL
    for p in np.flatnonzero(np.any(bad, axis=1) & ~collapsed):
        jj = int(np.flatnonzero(bad[p])[0])
        errors[int(ts[p])] = (
            f"filtrations do not intersect for vector {jj + 1} "
            f"(principal cosine {cosines[p, jj]:.6g})"
        )
    finite = np.all(np.isfinite(ftle), axis=1) & np.all(
        np.isfinite(vectors), axis=(1, 2)
    )
    for p in np.flatnonzero(~finite):
        errors.setdefault(int(ts[p]), "non-finite result")
    ok = np.array([int(t) not in errors for t in ts])
    return vectors, ftle, angles, ok, errors


@dataclass
class ClvSeries:
    """Vector computations over many time points, failures marked missing."""

    params: ClvParams
    kind: str
    time_unit: float
    t0: float
    indices: np.ndarray
    results: list[ClvResult | None]
    errors: dict[int, str] = field(default_factory=dict)

    @property
    def times(self) -> np.ndarray:
        return self.t0 + self.indices * self.time_unit

    @property
    def ok_mask(self) -> np.ndarray:
        return np.array([r is not None for r in self.results])

    @property
    def n_valid(self) -> int:
        return int(np.count_nonzero(self.ok_mask))

    @property
    def dim(self) -> int:
        for r in self.results:
            if r is not None:
                return r.dim
        raise ValueError("series contains no valid point")

    def ftle_matrix(self) -> np.ndarray:
        """(n_points, dim) exponents, rows of failed points NaN."""
        d = self.dim
        out = np.full((len(self.results), d), np.nan)
        for i, r in enumerate(self.results):
            if r is not None:
                out[i] = r.ftle
        return out

    def theta_series(self, i: int, j: int) -> np.ndarray:
        """Alignment |cos| between vectors i and j (1-based) over time."""
        out = np.full(len(self.results), np.nan)
        for k, r in enumerate(self.results):
            if r is not None:
                out[k] = r.theta(i, j)
        return out

    def csv_text(self) -> str:
        d = self.dim
        pairs = [(i, j) for i in range(1, d + 1) for j in range(i + 1, d + 1)]
        cols = (
            ["t"]
            + [f"ftle_{k}" for k in range(1, d + 1)]
            + [f"theta_{i}{j}" for i, j in pairs]
            + ["ok_flag"]
        )
        lines = [",".join(cols)]
        for time, r in zip(self.times, self.results):
            if r is None:
                vals = ["nan"] * (d + len(pairs)) + ["0"]
            else:
                vals = ["%.17g" % v for v in r.ftle]
                vals += ["%.17g" % r.theta(i, j) for i, j in pairs]
                vals += ["1"]
            lines.append(",".join(["%.17g" % time] + vals))
        return "\n".join(lines) + "\n"

    def write_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write(self.csv_text())

    def vectors_json_dict(self) -> dict:
        return {
            "format_version": VECTORS_FORMAT_VERSION,
            "kind": self.kind,
            "time_unit": self.time_unit,
            "t0": self.t0,
            "params": {
                "past_steps": self.params.past_steps,
                "future_steps": self.params.future_steps,
                "correction_steps": self.params.correction_steps,
            },
            "indices": self.indices.tolist(),
            "vectors": [
                None if r is None else r.vectors.tolist() for r in self.results
            ],
            "errors": {str(k): v for k, v in sorted(self.errors.items())},
        }

    def save_vectors_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.vectors_json_dict(), fh, indent=1)
            fh.write("\n")


def clv_at(source: CocycleSource, t: int, params: ClvParams) -> ClvResult:
    """Covariant vectors, exponents, and alignment at one time point.

    The source must cover [t - past_steps - correction_steps, t + future_steps].
    Raises on rank collapse or a failed subspace intersection; emits
    MultiplicityWarning when the filtration spectrum is nearly degenerate.
    """
    ts = np.array([int(t)])
    vectors, ftle, angles, ok, errors = _clv_core(source, ts, params)
    if not ok[0]:
        msg = errors[int(t)]
        if "intersect" in msg:
            raise NoIntersectionError(f"t={t}: {msg}")
        raise RankCollapseError(f"t={t}: {msg}")
    return ClvResult(int(t), vectors[0], ftle[0], angles[0])


def clv_series(source: CocycleSource, t_range, params: ClvParams) -> ClvSeries:
    """Vector computations over a range of points; per-point failures recorded.

    Failed points appear as None in results and as messages in errors, so a
    few bad windows never abort a long sweep.
    """
    ts = np.asarray(list(t_range), dtype=int)
    if ts.size == 0:
        raise ValueError("t_range is empty")
    vectors, ftle, angles, ok, errors = _clv_core(source, ts, params)
    results: list[ClvResult | None] = []
    for p, t in enumerate(ts):
        if ok[p]:
            results.append(ClvResult(int(t), vectors[p], ftle[p], angles[p]))
        else:
            results.append(None)
    return ClvSeries(
        params=params,
        kind=source.kind,
        time_unit=source.time_unit,
        t0=source.t0,
        indices=ts,
        results=results,
        errors=errors,
    )


def le_spectrum_qr(source: CocycleSource, t_start: int, n_steps: int) -> np.ndarray:
    """Lyapunov spectrum estimate from one long re-orthonormalized product.

    Returns per-unit-time rates sorted in decreasing order; convergence is
    the caller's concern (long windows needed for chaotic sources).
    """
    from .cocycle import stabilized_product

    res = stabilized_product(source, t_start, n_steps)
    rates = res.log_growth / (n_steps * source.time_unit)
    return np.sort(rates)[::-1]
