"""Transition diagnostics built on covariant-vector series.

The workhorse quantity is the alignment |cos| between two covariant vectors
over time: transitions between metastable states announce themselves as
spikes of alignment between the most unstable and the near-neutral vector.
On top of it sit state-conditioned mean differences (do the two regimes
differ in within-state alignment?), a total-variation noisiness score, the
alignment of the near-neutral vector with the flow direction, and a grid
search over window sizes producing matrices of these statistics.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace

import numpy as np

from .clv import ClvSeries
from .dynsys import OdeModel, TimeSeries
from .errors import NumericalError

__all__ = [
    "AlignmentSeries",
    "MetricSpec",
    "GridSearchReport",
    "InsufficientDataError",
    "GridSearchError",
    "alignment_cosine",
    "near_neutral_index",
    "alignment_series",
    "delta_state_means",
    "wing_label",
    "wing_labels",
    "total_variation",
    "flow_alignment",
    "surrogate_flow_alignment",
    "gridsearch",
]

LEFT_WING = 0
RIGHT_WING = 1

# Points with |tangent| below this are marked missing instead of divided by.
ZERO_TANGENT = 1e-12

# Points closer than this to a hard state switch are excluded from
# state-conditioned means; the averages describe behaviour within a state.
EXCLUSION_WINDOW = 10

MIN_COVERAGE = 0.5


class InsufficientDataError(NumericalError):
    """An aggregate had no usable points for one of its conditions."""


class GridSearchError(NumericalError):
    """Every cell of a grid search failed."""


def alignment_cosine(u, v) -> float:
    """Absolute cosine of the angle between two vectors, in [0, 1]."""
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    nu = np.linalg.norm(u)
    nv = np.linalg.norm(v)
    if nu == 0.0 or nv == 0.0:
        raise ValueError("alignment of a zero vector is undefined")
    return float(min(abs(u @ v) / (nu * nv), 1.0))


@dataclass
class AlignmentSeries:
    """Per-time-point alignment values with optional state labels and extras.

    theta holds |cos| values in [0, 1], NaN marking points whose vector
    computation failed.  state carries a regime label per point (all zero
    when no labelling applies).  flow_theta optionally carries the alignment
    of a chosen vector with the flow tangent; surrogate_tangent records
    whether that tangent was a finite-difference stand-in.
    """

    indices: np.ndarray
    theta: np.ndarray
    state: np.ndarray
    flow_theta: np.ndarray | None = None
    surrogate_tangent: bool = False
    time_unit: float = 1.0
    t0: float = 0.0

    def __post_init__(self):
        self.indices = np.asarray(self.indices, dtype=int)
        self.theta = np.asarray(self.theta, dtype=float)
        self.state = np.asarray(self.state, dtype=int)
        if self.flow_theta is not None:
            self.flow_theta = np.asarray(self.flow_theta, dtype=float)
            if self.flow_theta.shape != self.indices.shape:
                raise ValueError("flow_theta length differs from indices")
        if self.theta.shape != self.indices.shape or self.state.shape != self.indices.shape:
            raise ValueError("indices, theta, and state must have equal length")
        valid = np.isfinite(self.theta)
        if np.any(self.theta[valid] < 0) or np.any(self.theta[valid] > 1):
            raise ValueError("theta values must lie in [0, 1]")

    def __len__(self) -> int:
        return self.indices.shape[0]

    @property
    def times(self) -> np.ndarray:
        return self.t0 + self.indices * self.time_unit

    @property
    def valid_mask(self) -> np.ndarray:
        return np.isfinite(self.theta)

    @property
    def coverage(self) -> float:
        """Fraction of points whose value is present."""
        return float(np.mean(self.valid_mask))

    def with_states(self, state) -> "AlignmentSeries":
        return replace(self, state=np.asarray(state, dtype=int))

    def with_flow(self, flow: "AlignmentSeries") -> "AlignmentSeries":
        if not np.array_equal(flow.indices, self.indices):
            raise ValueError("flow series computed on different time points")
        return replace(
            self, flow_theta=flow.theta, surrogate_tangent=flow.surrogate_tangent
        )

    def csv_text(self) -> str:
        lines = ["t,theta12,state,flow_theta"]
        flow = (
            self.flow_theta
            if self.flow_theta is not None
            else np.full(len(self), np.nan)
        )
        for time, th, st, fl in zip(self.times, self.theta, self.state, flow):
            lines.append("%.17g,%.17g,%d,%.17g" % (time, th, st, fl))
        return "\n".join(lines) + "\n"

    def write_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write(self.csv_text())


def near_neutral_index(ftle: np.ndarray, mode: str = "auto") -> int:
    """1-based position of the vector treated as near-neutral.

    For three-dimensional systems the second vector is the conventional
    choice; "min_abs" instead picks the smallest |exponent|, and "auto"
    falls back to it whenever the dimension is not 3.
    """
    ftle = np.asarray(ftle, dtype=float)
    if mode not in ("auto", "second", "min_abs"):
        raise ValueError(f"unknown near-neutral mode {mode!r}")
    if mode == "second" or (mode == "auto" and ftle.shape[-1] == 3):
        return 2
    return int(np.argmin(np.abs(ftle))) + 1


def _series_near_neutral(clvs: ClvSeries, mode: str = "auto") -> int:
    for r in clvs.results:
        if r is not None:
            return near_neutral_index(r.ftle, mode)
    raise InsufficientDataError("no valid points to pick a near-neutral index from")


def alignment_series(
    clvs: ClvSeries, i: int = 1, j: int | None = None, state=None
) -> AlignmentSeries:
    """Alignment |cos| between vectors i and j over time; failures become NaN.

    i defaults to the most unstable vector; j to the near-neutral one.
    Optional state labels (one per point) are attached for downstream
    conditioning.
    """
    if j is None:
        j = _series_near_neutral(clvs)
    theta = clvs.theta_series(i, j) if i != j else np.where(
        clvs.ok_mask, 1.0, np.nan
    )
    n = len(clvs.results)
    state_arr = np.zeros(n, dtype=int) if state is None else np.asarray(state, dtype=int)
    return AlignmentSeries(
        indices=clvs.indices,
        theta=theta,
        state=state_arr,
        time_unit=clvs.time_unit,
        t0=clvs.t0,
    )


def _exclusion_mask(state: np.ndarray, window: int) -> np.ndarray:
    """True for points within `window` positions of a state switch."""
    out = np.zeros(state.shape[0], dtype=bool)
    switches = np.flatnonzero(state[1:] != state[:-1]) + 1
    for k in switches:
        out[max(0, k - window) : min(state.shape[0], k + window)] = True
    return out


def delta_state_means(
    series: AlignmentSeries,
    state_a: int,
    state_b: int,
    exclusion_window: int = EXCLUSION_WINDOW,
) -> float:
    """mean(theta | state_a) - mean(theta | state_b) away from switches.

    Points within exclusion_window of a label switch and failed points are
    dropped.  Raises when either state has no usable points or when overall
    coverage is below 50%.
    """
    if series.coverage < MIN_COVERAGE:
        raise InsufficientDataError(
            f"only {series.coverage:.0%} of points are valid; aggregate unreliable"
        )
    keep = series.valid_mask & ~_exclusion_mask(series.state, exclusion_window)
    sel_a = keep & (series.state == state_a)
    sel_b = keep & (series.state == state_b)
    if not np.any(sel_a) or not np.any(sel_b):
        empty = state_a if not np.any(sel_a) else state_b
        raise InsufficientDataError(f"state {empty} has no usable points")
    return float(np.mean(series.theta[sel_a]) - np.mean(series.theta[sel_b]))


def wing_label(state) -> int:
    """Attractor wing of a 3-component state: 0 for x < 0, else 1."""
    return LEFT_WING if float(np.asarray(state)[0]) < 0 else RIGHT_WING


def wing_labels(values: np.ndarray) -> np.ndarray:
    """Vectorized wing_label over rows of a (T, 3) state array."""
    return np.where(np.asarray(values)[:, 0] < 0, LEFT_WING, RIGHT_WING)


def total_variation(series: AlignmentSeries) -> float:
    """Sum of |theta(k+1) - theta(k)| over consecutive valid pairs."""
    if len(series) < 2:
        raise ValueError("total variation needs at least 2 points")
    th = series.theta
    pair = np.isfinite(th[:-1]) & np.isfinite(th[1:])
    return float(np.sum(np.abs(np.diff(th))[pair]))


def _flow_series(
    clvs: ClvSeries, tangents: np.ndarray, j: int | None, surrogate: bool
) -> AlignmentSeries:
    if j is None:
        j = _series_near_neutral(clvs)
    theta = np.full(len(clvs.results), np.nan)
    for k, r in enumerate(clvs.results):
        if r is None:
            continue
        f = tangents[k]
        if np.linalg.norm(f) < ZERO_TANGENT:
            continue  # no meaningful direction at a near-stationary point
        theta[k] = alignment_cosine(f, r.vectors[:, j - 1])
    return AlignmentSeries(
        indices=clvs.indices,
        theta=theta,
        state=np.zeros(len(clvs.results), dtype=int),
        surrogate_tangent=surrogate,
        time_unit=clvs.time_unit,
        t0=clvs.t0,
    )


def flow_alignment(
    traj: TimeSeries, model: OdeModel, clvs: ClvSeries, j: int | None = None
) -> AlignmentSeries:
    """Alignment of vector j (near-neutral by default) with the flow tangent.

    The tangent is the vector field evaluated on the trajectory.  Points
    where it nearly vanishes are marked missing.
    """
    tangents = model.vector_field(traj.values[clvs.indices])
    return _flow_series(clvs, tangents, j, surrogate=False)


def surrogate_flow_alignment(
    series: TimeSeries, order: int, clvs: ClvSeries, j: int | None = None
) -> AlignmentSeries:
    """Flow alignment for companion-form vectors, with a surrogate tangent.

    A fitted-model cocycle has no analytic flow, so the tangent at step t is
    the one-step finite difference of the stacked history vector
    (x_t, ..., x_{t-order+1}), newest block first, matching the companion
    state layout.  Outputs are labelled surrogate_tangent=True.
    """
    x = series.values
    T, d = x.shape
    if np.any(clvs.indices < order) or np.any(clvs.indices + 1 >= T):
        raise IndexError(
            f"surrogate tangent needs steps {order} <= t < {T - 1}"
        )
    blocks = [x[clvs.indices + 1 - tau] - x[clvs.indices - tau] for tau in range(order)]
    tangents = np.concatenate(blocks, axis=1)
    return _flow_series(clvs, tangents, j, surrogate=True)


@dataclass(frozen=True)
class MetricSpec:
    """Which statistics a grid search evaluates on each cell's series.

    pair selects the two vectors for the alignment series.  state supplies
    per-point labels (aligned with the grid's t_range); state_a/state_b the
    two conditions for the mean difference.
    """

    pair: tuple[int, int] = (1, 2)
    state: np.ndarray | None = None
    state_a: int = 0
    state_b: int = 1
    compute_delta: bool = True
    compute_tv: bool = True
    exclusion_window: int = EXCLUSION_WINDOW


@dataclass
class GridSearchReport:
    """Statistic matrices over a (past window) x (correction steps) grid."""

    N_values: np.ndarray
    n_values: np.ndarray
    delta: np.ndarray
    tv: np.ndarray
    failures: np.ndarray
    messages: dict[tuple[int, int], str] = field(default_factory=dict)

    def __post_init__(self):
        self.N_values = np.asarray(self.N_values, dtype=int)
        self.n_values = np.asarray(self.n_values, dtype=int)
        shape = (self.N_values.shape[0], self.n_values.shape[0])
        for name in ("delta", "tv", "failures"):
            arr = np.asarray(getattr(self, name))
            if arr.shape != shape:
                raise ValueError(f"{name} matrix must have shape {shape}")

    def _matrix_csv(self, mat: np.ndarray, fmt: str) -> str:
        header = "N," + ",".join(f"n={n}" for n in self.n_values)
        lines = [header]
        for i, N in enumerate(self.N_values):
            lines.append(",".join([str(N)] + [fmt % v for v in mat[i]]))
        return "\n".join(lines) + "\n"

    def delta_csv(self) -> str:
        return self._matrix_csv(self.delta, "%.17g")

    def tv_csv(self) -> str:
        return self._matrix_csv(self.tv, "%.17g")

    def failures_csv(self) -> str:
        return self._matrix_csv(self.failures.astype(int), "%d")

    def manifest_dict(self, spec: MetricSpec | None = None) -> dict:
        out = {
            "N_values": self.N_values.tolist(),
            "n_values": self.n_values.tolist(),
            "n_failures": int(np.count_nonzero(self.failures)),
            "messages": {f"N={k[0]},n={k[1]}": v for k, v in sorted(self.messages.items())},
        }
        if spec is not None:
            out["metric_spec"] = {
                "pair": list(spec.pair),
                "state_a": spec.state_a,
                "state_b": spec.state_b,
                "compute_delta": spec.compute_delta,
                "compute_tv": spec.compute_tv,
                "exclusion_window": spec.exclusion_window,
                "has_state_labels": spec.state is not None,
            }
        return out

    def write(self, out_dir, spec: MetricSpec | None = None) -> list:
        """Write delta.csv, tv.csv, failures.csv, and gridsearch.json."""
        from pathlib import Path

        out_dir = Path(out_dir)
        written = []
        for name, text in (
            ("delta.csv", self.delta_csv()),
            ("tv.csv", self.tv_csv()),
            ("failures.csv", self.failures_csv()),
        ):
            p = out_dir / name
            p.write_text(text)
            written.append(p)
        p = out_dir / "gridsearch.json"
        with open(p, "w") as fh:
            json.dump(self.manifest_dict(spec), fh, indent=1)
            fh.write("\n")
        written.append(p)
        return written


def _grid_cell(source, t_range, N, n, spec: MetricSpec):
    from .clv import ClvParams, clv_series

    series = clv_series(source, t_range, ClvParams(N, correction_steps=n))
    aligned = alignment_series(series, spec.pair[0], spec.pair[1], state=spec.state)
    delta = np.nan
    tv = np.nan
    if spec.compute_delta:
        delta = delta_state_means(
            aligned, spec.state_a, spec.state_b, spec.exclusion_window
        )
    if spec.compute_tv:
        tv = total_variation(aligned)
    return delta, tv


def gridsearch(
    source,
    t_range,
    N_values,
    n_values,
    spec: MetricSpec | None = None,
    threads: int = 1,
) -> GridSearchReport:
    """Evaluate the alignment statistics for every (N, n) window combination.

    Cells fail independently (recorded in failures/messages); only a fully
    failed grid raises.  Cells are embarrassingly parallel; threads > 1
    distributes them, and assembly stays deterministic either way.
    """
    if spec is None:
        spec = MetricSpec()
    N_values = np.asarray(list(N_values), dtype=int)
    n_values = np.asarray(list(n_values), dtype=int)
    if N_values.size == 0 or n_values.size == 0:
        raise ValueError("grid axes must be non-empty")
    ts = list(t_range)
    shape = (N_values.shape[0], n_values.shape[0])
    delta = np.full(shape, np.nan)
    tv = np.full(shape, np.nan)
    failures = np.zeros(shape, dtype=bool)
    messages: dict[tuple[int, int], str] = {}

    cells = [(a, b) for a in range(shape[0]) for b in range(shape[1])]

    def run(cell):
        a, b = cell
        return _grid_cell(source, ts, int(N_values[a]), int(n_values[b]), spec)

    if threads > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=threads) as pool:
            outcomes = list(pool.map(_safe, [run] * len(cells), cells))
    else:
        outcomes = [_safe(run, cell) for cell in cells]

    for (a, b), outcome in zip(cells, outcomes):
        if isinstance(outcome, str):
            failures[a, b] = True
            messages[(int(N_values[a]), int(n_values[b]))] = outcome
        else:
            delta[a, b], tv[a, b] = outcome
    if np.all(failures):
        raise GridSearchError(
            "every grid cell failed; first message: "
            + next(iter(messages.values()))
        )
    return GridSearchReport(N_values, n_values, delta, tv, failures, messages)


def _safe(fn, cell):
    try:
        return fn(cell)
    except (NumericalError, IndexError, ValueError) as exc:
        return f"{type(exc).__name__}: {exc}"
