"""Piecewise vector autoregression with a bounded number of regime switches.

A time series is explained by `n_clusters` locally stationary VAR(order)
models together with a hard assignment of every time step to one model.  The
assignment sequence is constrained in total variation: each hard switch adds
one unit to each of the two clusters involved, and the combined budget is
derived from a target average persistence, so a budget of C admits at most
C // 2 hard switches.  Fitting alternates two exact subproblem solvers,

  * weighted least squares for the VAR parameters given the assignment,
  * dynamic programming over (time, cluster, switches used) for the
    assignment given the parameters,

so the loss never increases across iterations.  Several random restarts guard
against local minima.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .dynsys import TimeSeries
from .errors import NumericalError

__all__ = [
    "ClusterParams",
    "Affiliation",
    "FittedModel",
    "LCurveResult",
    "ConditioningError",
    "DegenerateClusterError",
    "bv_budget",
    "model_distance",
    "total_loss",
    "fit_var_weighted",
    "optimize_affiliations",
    "fit_fembv",
    "reconstruct",
    "lcurve_select_p",
    "simulate_var",
]

FORMAT_VERSION = 1

# Reconstructions are flagged as divergent when any cluster's one-step linear
# map has spectral radius above this.
DIVERGENCE_RADIUS = 1.05


class ConditioningError(NumericalError):
    """The least-squares normal matrix is singular beyond the ridge floor."""


class DegenerateClusterError(NumericalError):
    """A cluster repeatedly lost all of its assigned samples."""


@dataclass
class ClusterParams:
    """Parameters of one VAR model: offset, lag matrices, residual covariance."""

    mu: np.ndarray
    coeffs: list[np.ndarray]
    sigma: np.ndarray

    def __post_init__(self):
        self.mu = np.asarray(self.mu, dtype=float).reshape(-1)
        d = self.mu.shape[0]
        self.coeffs = [np.asarray(A, dtype=float) for A in self.coeffs]
        for A in self.coeffs:
            if A.shape != (d, d):
                raise ValueError(f"lag matrix shape {A.shape} != ({d}, {d})")
        self.sigma = np.asarray(self.sigma, dtype=float)
        if self.sigma.shape != (d, d):
            raise ValueError(f"sigma shape {self.sigma.shape} != ({d}, {d})")
        if not all(np.all(np.isfinite(a)) for a in (self.mu, self.sigma, *self.coeffs)):
            raise ValueError("cluster parameters must be finite")
        if np.max(np.abs(self.sigma - self.sigma.T)) > 1e-12:
            raise ValueError("sigma must be symmetric")
        if np.min(np.linalg.eigvalsh(self.sigma)) < -1e-10:
            raise ValueError("sigma must be positive semidefinite")

    @property
    def dim(self) -> int:
        return self.mu.shape[0]

    @property
    def order(self) -> int:
        return len(self.coeffs)

    def predict(self, history: np.ndarray) -> np.ndarray:
        """One-step prediction from `history`, rows ordered oldest to newest."""
        h = np.atleast_2d(np.asarray(history, dtype=float))
        out = np.broadcast_to(self.mu, h.shape[:-2] + (self.dim,)).copy()
        for tau, A in enumerate(self.coeffs, start=1):
            out += h[..., -tau, :] @ A.T
        return out


@dataclass
class Affiliation:
    """Hard assignment of time steps to clusters, stored as a stochastic matrix.

    gamma has shape (T, n_clusters); rows sum to 1 and entries are {0, 1}
    after fitting.  hard_labels is the per-row argmax.  tv_bound, when given,
    caps each cluster's total variation sum_t |gamma_i(t+1) - gamma_i(t)|;
    note that one hard switch adds 1 to the total variation of each of the
    two clusters involved.
    """

    gamma: np.ndarray
    tv_bound: int | None = None

    def __post_init__(self):
        self.gamma = np.asarray(self.gamma, dtype=float)
        if self.gamma.ndim != 2:
            raise ValueError("gamma must be a (T, n_clusters) matrix")
        if np.min(self.gamma) < 0:
            raise ValueError("gamma entries must be nonnegative")
        rows = self.gamma.sum(axis=1)
        if np.max(np.abs(rows - 1.0)) > 1e-12:
            raise ValueError("gamma rows must sum to 1")
        if self.tv_bound is not None:
            tv = self.total_variation_per_cluster()
            if np.max(tv) > self.tv_bound + 1e-9:
                raise ValueError(
                    f"per-cluster total variation {tv.max():.3g} exceeds "
                    f"the bound {self.tv_bound}"
                )

    @classmethod
    def from_labels(cls, labels, n_clusters: int, tv_bound: int | None = None):
        labels = np.asarray(labels, dtype=int)
        gamma = np.zeros((labels.shape[0], n_clusters))
        gamma[np.arange(labels.shape[0]), labels] = 1.0
        return cls(gamma, tv_bound)

    @property
    def n_clusters(self) -> int:
        return self.gamma.shape[1]

    def __len__(self) -> int:
        return self.gamma.shape[0]

    @property
    def hard_labels(self) -> np.ndarray:
        return np.argmax(self.gamma, axis=1)

    def total_variation_per_cluster(self) -> np.ndarray:
        return np.abs(np.diff(self.gamma, axis=0)).sum(axis=0)

    def n_switches(self) -> int:
        lab = self.hard_labels
        return int(np.count_nonzero(lab[1:] != lab[:-1]))


def bv_budget(n_samples: int, persistence: float) -> int:
    """Total-variation budget for a series length and target average persistence.

    budget = round(T / p) - 1.  The budget counts total-variation units summed
    over clusters, and one hard switch costs two units (the cluster switched
    away from and the one switched to), so it admits at most budget // 2 hard
    switches: a sequence of runs of average length 2 p.
    """
    if persistence <= 0:
        raise ValueError("persistence must be positive")
    budget = round(n_samples / persistence) - 1
    if budget < 0:
        raise ValueError(
            f"persistence {persistence} exceeds series length {n_samples}; "
            "the switching budget would be negative"
        )
    return budget


@dataclass
class FittedModel:
    """Result of a piecewise-VAR fit."""

    clusters: list[ClusterParams]
    affiliation: Affiliation
    n_clusters: int
    order: int
    persistence: float
    budget: int
    loss_trace: np.ndarray
    seed: int
    dt: float = 1.0
    t0: float = 0.0
    spectral_radii: np.ndarray = field(default=None)
    n_reseeds: int = 0

    def __post_init__(self):
        self.loss_trace = np.asarray(self.loss_trace, dtype=float)
        if np.any(np.diff(self.loss_trace) > 0):
            raise ValueError("loss trace must be non-increasing")
        if self.spectral_radii is None:
            from .cocycle import companion_matrix  # deferred: cocycle imports this module

            self.spectral_radii = np.array(
                [
                    np.max(np.abs(np.linalg.eigvals(companion_matrix(c))))
                    for c in self.clusters
                ]
            )

    @property
    def final_loss(self) -> float:
        return float(self.loss_trace[-1])

    @property
    def divergent(self) -> np.ndarray:
        """Per-cluster flag: one-step map spectral radius above the safe bound."""
        return self.spectral_radii > DIVERGENCE_RADIUS

    @property
    def dim(self) -> int:
        return self.clusters[0].dim

    def summary(self) -> str:
        lines = [
            f"clusters={self.n_clusters} order={self.order} "
            f"persistence={self.persistence:g} budget={self.budget} "
            f"(max {self.budget // 2} switches)",
            f"final loss {self.final_loss:.6g} after {len(self.loss_trace)} iterations "
            f"(seed {self.seed}, {self.affiliation.n_switches()} switches used)",
        ]
        for i, (c, rho) in enumerate(zip(self.clusters, self.spectral_radii)):
            share = float(np.mean(self.affiliation.hard_labels == i))
            tag = "  DIVERGENT" if rho > DIVERGENCE_RADIUS else ""
            lines.append(
                f"  cluster {i}: share {share:.1%}, spectral radius {rho:.4f}{tag}"
            )
        return "\n".join(lines)

    def to_json_dict(self) -> dict:
        return {
            "format_version": FORMAT_VERSION,
            "hyper": {
                "n_clusters": self.n_clusters,
                "order": self.order,
                "persistence": self.persistence,
                "bv_budget": self.budget,
            },
            "clusters": [
                {
                    "mu": c.mu.tolist(),
                    "coeffs": [A.tolist() for A in c.coeffs],
                    "sigma": c.sigma.tolist(),
                }
                for c in self.clusters
            ],
            "hard_labels": self.affiliation.hard_labels.tolist(),
            "loss_trace": self.loss_trace.tolist(),
            "seed": self.seed,
            "dt": self.dt,
            "t0": self.t0,
            "spectral_radii": self.spectral_radii.tolist(),
            "divergent": self.divergent.tolist(),
        }

    def save_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_json_dict(), fh, indent=1)
            fh.write("\n")

    @classmethod
    def from_json_dict(cls, d: dict) -> "FittedModel":
        if d.get("format_version") != FORMAT_VERSION:
            raise ValueError(f"unsupported model format_version {d.get('format_version')!r}")
        clusters = [
            ClusterParams(c["mu"], c["coeffs"], c["sigma"]) for c in d["clusters"]
        ]
        hyper = d["hyper"]
        return cls(
            clusters=clusters,
            affiliation=Affiliation.from_labels(
                d["hard_labels"], hyper["n_clusters"], hyper["bv_budget"]
            ),
            n_clusters=hyper["n_clusters"],
            order=hyper["order"],
            persistence=hyper["persistence"],
            budget=hyper["bv_budget"],
            loss_trace=d["loss_trace"],
            seed=d["seed"],
            dt=d.get("dt", 1.0),
            t0=d.get("t0", 0.0),
            spectral_radii=np.asarray(d["spectral_radii"], dtype=float),
        )

    @classmethod
    def load_json(cls, path) -> "FittedModel":
        with open(path) as fh:
            return cls.from_json_dict(json.load(fh))


# ---------------------------------------------------------------------------
# Loss pieces

def model_distance(x_window: np.ndarray, theta: ClusterParams) -> float:
    """Squared norm of the one-step prediction residual.

    `x_window` holds the last order+1 observations, oldest first; the final
    row is the value being predicted.
    """
    w = np.atleast_2d(np.asarray(x_window, dtype=float))
    if w.shape[0] != theta.order + 1:
        raise ValueError(
            f"window must hold order+1 = {theta.order + 1} rows, got {w.shape[0]}"
        )
    resid = w[-1] - theta.predict(w[:-1]) if theta.order else w[-1] - theta.mu
    return float(resid @ resid)


def _design(series: TimeSeries, order: int):
    """Design matrix and targets for one-step regression.

    Row t (for t = order..T-1) is [1, x_{t-1}, ..., x_{t-order}]; the target
    is x_t.  Returns (X, Y) with X of shape (T-order, 1+order*dim).
    """
    v = series.values
    T, d = v.shape
    n = T - order
    if n < 2:
        raise ValueError(f"series of length {T} too short for order {order}")
    X = np.empty((n, 1 + order * d))
    X[:, 0] = 1.0
    for tau in range(1, order + 1):
        X[:, 1 + (tau - 1) * d : 1 + tau * d] = v[order - tau : T - tau]
    return X, v[order:]


def _params_from_B(B: np.ndarray, sigma: np.ndarray, order: int, dim: int) -> ClusterParams:
    mu = B[0]
    coeffs = [B[1 + (tau - 1) * dim : 1 + tau * dim].T for tau in range(1, order + 1)]
    return ClusterParams(mu, coeffs, sigma)


def _cluster_costs(X: np.ndarray, Y: np.ndarray, clusters: list[ClusterParams]) -> np.ndarray:
    """Per-step squared residual of each cluster model; shape (T-order, K)."""
    out = np.empty((X.shape[0], len(clusters)))
    for i, c in enumerate(clusters):
        B = np.vstack([c.mu[None, :]] + [A.T for A in c.coeffs])
        resid = Y - X @ B
        out[:, i] = np.einsum("ij,ij->i", resid, resid)
    return out


def total_loss(series: TimeSeries, clusters: list[ClusterParams], affiliation: Affiliation) -> float:
    """Assignment-weighted sum of squared prediction residuals over t >= order.

    The first `order` steps have no full history and carry zero weight.
    """
    order = clusters[0].order
    if len(affiliation) != len(series):
        raise ValueError(
            f"affiliation length {len(affiliation)} != series length {len(series)}"
        )
    if affiliation.n_clusters != len(clusters):
        raise ValueError("affiliation width does not match number of clusters")
    X, Y = _design(series, order)
    costs = _cluster_costs(X, Y, clusters)
    return float(np.sum(affiliation.gamma[order:] * costs))


# ---------------------------------------------------------------------------
# Subproblem 1: VAR parameters by weighted least squares

def fit_var_weighted(series: TimeSeries, weights: np.ndarray, order: int) -> ClusterParams:
    """Weighted least-squares VAR(order) fit.

    `weights` has one entry per time step; the first `order` entries are
    ignored (no full history).  A small ridge term keeps the normal equations
    solvable when histories are collinear.
    """
    X, Y = _design(series, order)
    w = np.asarray(weights, dtype=float).reshape(-1)
    if w.shape[0] != len(series):
        raise ValueError(f"weights length {w.shape[0]} != series length {len(series)}")
    if np.min(w) < 0:
        raise ValueError("weights must be nonnegative")
    return _solve_weighted(X, Y, w[order:], len(series), order, series.dim)


def _solve_weighted(X, Y, w, T, order, dim) -> ClusterParams:
    wsum = float(w.sum())
    if wsum <= 0:
        raise ConditioningError("all weights are zero")
    n_params = X.shape[1]
    if np.count_nonzero(w) < n_params:
        raise ConditioningError(
            f"only {np.count_nonzero(w)} weighted samples for {n_params} parameters"
        )
    Xw = X * w[:, None]
    G = X.T @ Xw
    lam = 1e-8 * float(np.einsum("ij,ij->", X, X)) / T
    G[np.diag_indices_from(G)] += lam
    try:
        B = np.linalg.solve(G, X.T @ (Y * w[:, None]))
    except np.linalg.LinAlgError as exc:
        raise ConditioningError(f"normal equations unsolvable: {exc}") from exc
    if not np.all(np.isfinite(B)):
        raise ConditioningError("non-finite least-squares solution")
    resid = Y - X @ B
    sigma = (resid * w[:, None]).T @ resid / wsum
    sigma = 0.5 * (sigma + sigma.T)
    return _params_from_B(B, sigma, order, dim)


# ---------------------------------------------------------------------------
# Subproblem 2: optimal assignment under a switch budget (exact DP)

def _dp_labels(costs: np.ndarray, budget: int) -> np.ndarray:
    """Minimum-cost label sequence with at most `budget` switches.

    costs has shape (n, K).  Dynamic programming over (cluster, switches
    used); dp[k, s] is the best cost of a prefix ending in label k using at
    most s switches.  Ties prefer keeping the current label.
    """
    n, K = costs.shape
    if budget >= n - 1:  # constraint vacuous: every step picks its best cluster
        return costs.argmin(axis=1)
    S = budget
    dp = np.tile(costs[0][:, None], (1, S + 1))
    stay = np.empty((n - 1, K, S + 1), dtype=bool)
    prev_label = np.empty((n - 1, S + 1), dtype=np.int32)
    for t in range(1, n):
        best_prev = dp.min(axis=0)
        prev_label[t - 1] = dp.argmin(axis=0)
        switched = np.empty((K, S + 1))
        switched[:, 0] = np.inf
        switched[:, 1:] = best_prev[None, :-1]
        stay_t = dp <= switched
        dp = costs[t][:, None] + np.where(stay_t, dp, switched)
        stay[t - 1] = stay_t
    labels = np.empty(n, dtype=np.int64)
    s = S
    k = int(dp[:, S].argmin())
    labels[-1] = k
    for t in range(n - 1, 0, -1):
        if not stay[t - 1, k, s]:
            k = int(prev_label[t - 1, s - 1])
            s -= 1
        labels[t - 1] = k
    return labels


def optimize_affiliations(
    series: TimeSeries,
    clusters: list[ClusterParams],
    max_switches: int,
    tv_bound: int | None = None,
) -> Affiliation:
    """Optimal hard assignment of steps to clusters with at most `max_switches` switches.

    Exact solution via dynamic programming in O(T * K * max_switches).  The
    first `order` steps carry no cost and copy the first decided label, so
    they never add a switch.  `tv_bound` is recorded on the result; it
    defaults to 2 * max_switches, the total variation each cluster could at
    most accumulate.
    """
    if max_switches < 0:
        raise ValueError("max_switches must be >= 0")
    order = clusters[0].order
    X, Y = _design(series, order)
    costs = _cluster_costs(X, Y, clusters)
    lab = _dp_labels(costs, max_switches)
    labels = np.concatenate([np.full(order, lab[0]), lab])
    if tv_bound is None:
        tv_bound = 2 * max_switches
    return Affiliation.from_labels(labels, len(clusters), tv_bound)


# ---------------------------------------------------------------------------
# Full alternating fit

def _with_sigma(c: ClusterParams, X, Y, w) -> ClusterParams:
    B = np.vstack([c.mu[None, :]] + [A.T for A in c.coeffs])
    resid = Y - X @ B
    sigma = (resid * w[:, None]).T @ resid / w.sum()
    return ClusterParams(c.mu, c.coeffs, 0.5 * (sigma + sigma.T))


def _random_labels(
    rng: np.random.Generator, T: int, K: int, order: int, max_switches: int, min_block: int
) -> np.ndarray:
    """Random contiguous-block labels with every cluster usably present.

    Blocks sized like the expected regime duration break the symmetry between
    clusters much better than per-step coin flips, whose cluster-wise sample
    mixes are nearly identical.  Every cluster is guaranteed at least
    `min_block` contiguous samples when the series allows it.
    """
    n = T - order
    n_seg = int(min(max_switches + 1, n))
    if n_seg <= 1:
        eff = np.full(n, rng.integers(0, K))
    else:
        cuts = np.sort(rng.choice(np.arange(1, n), size=n_seg - 1, replace=False))
        lengths = np.diff(np.concatenate([[0], cuts, [n]]))
        eff = np.repeat(rng.integers(0, K, size=n_seg), lengths)
    counts = np.bincount(eff, minlength=K)
    if np.any(counts < min_block) and n >= min_block:
        for k in np.flatnonzero(counts < min_block):
            start = int(rng.integers(0, n - min_block + 1))
            eff[start : start + min_block] = k
        if np.any(np.bincount(eff, minlength=K) < min_block) and n >= K * min_block:
            eff = (np.arange(n) * K) // n  # striped fallback, guaranteed coverage
    return np.concatenate([np.full(order, eff[0]), eff])


def _fit_once(
    series: TimeSeries,
    n_clusters: int,
    order: int,
    persistence: float,
    budget: int,
    rng: np.random.Generator,
    seed: int,
    max_iter: int,
    tol: float,
):
    X, Y = _design(series, order)
    T, d = series.values.shape
    n = X.shape[0]
    # the budget counts total-variation units; a hard switch spends two
    max_switches = budget // 2
    labels = _random_labels(rng, T, n_clusters, order, max_switches, X.shape[1] + 2)
    gamma = np.zeros((T, n_clusters))
    gamma[np.arange(T), labels] = 1.0
    clusters = None
    affiliation = None
    trace: list[float] = []
    n_reseeds = 0
    for _ in range(max_iter):
        new_clusters = []
        for i in range(n_clusters):
            w = gamma[order:, i]
            if np.count_nonzero(w) < X.shape[1] + 1:
                # cluster lost (nearly) every sample: re-seed on the worst-fit steps
                n_reseeds += 1
                if n_reseeds > 3:
                    raise DegenerateClusterError(
                        f"cluster {i} lost all samples more than 3 times"
                    )
                ref = new_clusters[0] if new_clusters else (clusters[i] if clusters else None)
                if ref is None:
                    raise DegenerateClusterError(
                        f"cluster {i} empty at initialization; series too short for {n_clusters} clusters"
                    )
                bad = np.argsort(_cluster_costs(X, Y, [ref])[:, 0])
                take = max(X.shape[1] + 1, n // (4 * n_clusters))
                w = np.zeros(n)
                w[bad[-take:]] = 1.0
            new_clusters.append(_solve_weighted(X, Y, w, T, order, d))
        new_aff = optimize_affiliations(series, new_clusters, max_switches, tv_bound=budget)
        loss = float(np.sum(new_aff.gamma[order:] * _cluster_costs(X, Y, new_clusters)))
        if trace and loss > trace[-1]:
            break  # keep the previous, better state
        clusters, affiliation = new_clusters, new_aff
        gamma = affiliation.gamma
        done = bool(trace) and (trace[-1] - loss) <= tol * max(trace[-1], 1e-300)
        trace.append(loss)
        if done:
            break
    # a valid fit leaves no cluster unused
    final_w = gamma[order:]
    if np.any(final_w.sum(axis=0) <= 0):
        empty = int(np.flatnonzero(final_w.sum(axis=0) <= 0)[0])
        raise DegenerateClusterError(f"cluster {empty} owns no samples at convergence")
    # sigma describes residuals under the final assignment, which the last
    # parameter fit predates; recompute it so model and assignment agree
    clusters = [
        _with_sigma(c, X, Y, final_w[:, i]) for i, c in enumerate(clusters)
    ]
    return FittedModel(
        clusters=clusters,
        affiliation=affiliation,
        n_clusters=n_clusters,
        order=order,
        persistence=persistence,
        budget=budget,
        loss_trace=np.asarray(trace),
        seed=seed,
        dt=series.dt,
        t0=series.t0,
        n_reseeds=n_reseeds,
    )


def fit_fembv(
    series: TimeSeries,
    n_clusters: int,
    order: int,
    persistence: float,
    restarts: int = 10,
    seed: int = 0,
    max_iter: int = 100,
    tol: float = 1e-8,
) -> FittedModel:
    """Fit the piecewise-VAR model, keeping the best of several random restarts.

    The total-variation budget is round(T / persistence) - 1, which admits
    half that many hard switches.  Restarts draw their initial assignments
    from independent streams of `seed`; the result is deterministic for
    fixed inputs.
    """
    if n_clusters < 1:
        raise ValueError("n_clusters must be >= 1")
    if order < 1:
        raise ValueError("order must be >= 1")
    if restarts < 1:
        raise ValueError("restarts must be >= 1")
    budget = bv_budget(len(series), persistence)
    streams = np.random.SeedSequence(seed).spawn(restarts)
    best = None
    failures: list[str] = []
    for r, ss in enumerate(streams):
        rng = np.random.default_rng(ss)
        try:
            model = _fit_once(
                series, n_clusters, order, persistence, budget, rng, seed, max_iter, tol
            )
        except (DegenerateClusterError, ConditioningError) as exc:
            failures.append(f"restart {r}: {exc}")
            continue
        if best is None or model.final_loss < best.final_loss:
            best = model
    if best is None:
        raise DegenerateClusterError(
            "all restarts degenerated: " + "; ".join(failures)
        )
    return best


def reconstruct(series: TimeSeries, model: FittedModel) -> TimeSeries:
    """One-step-ahead predictions from the assigned cluster, using observed history.

    The first `order` steps have no full history and are copied from the data.
    """
    order = model.order
    X, Y = _design(series, order)
    labels = model.affiliation.hard_labels
    if labels.shape[0] != len(series):
        raise ValueError("model affiliation does not match series length")
    out = series.values.copy()
    for i, c in enumerate(model.clusters):
        B = np.vstack([c.mu[None, :]] + [A.T for A in c.coeffs])
        rows = labels[order:] == i
        out[order:][rows] = (X @ B)[rows]
    return TimeSeries(series.dt, series.t0, out)


# ---------------------------------------------------------------------------
# Persistence selection by the corner of the loss-vs-persistence curve

@dataclass
class LCurveResult:
    p_star: float
    persistences: np.ndarray
    losses: np.ndarray
    curvature: np.ndarray
    no_knee: bool
    warnings: list[str]

    @property
    def curve(self) -> np.ndarray:
        return np.column_stack([self.persistences, self.losses])


def lcurve_select_p(
    series: TimeSeries,
    n_clusters: int,
    order: int,
    p_grid,
    restarts: int = 10,
    seed: int = 0,
    fit=None,
) -> LCurveResult:
    """Pick the persistence at the sharpest corner of the loss-vs-persistence curve.

    Fits one model per grid value; both axes are min-max normalized and the
    corner is the interior point with the largest change of slope.  A maximal
    slope change below 1e-3 means the curve has no clear corner; the result is
    flagged but a value is still returned.
    """
    p_grid = np.asarray(sorted(p_grid), dtype=float)
    if p_grid.shape[0] < 4:
        raise ValueError("need at least 4 persistence values")
    if np.unique(p_grid).shape[0] != p_grid.shape[0]:
        raise ValueError("persistence grid values must be distinct")
    if fit is None:
        fit = lambda p: fit_fembv(
            series, n_clusters, order, p, restarts=restarts, seed=seed
        ).final_loss
    losses = np.array([fit(float(p)) for p in p_grid])
    warns: list[str] = []
    if np.any(np.diff(losses) < 0):
        warns.append(
            "loss is not monotone in persistence; restarts may be too few"
        )
    x = (p_grid - p_grid[0]) / (p_grid[-1] - p_grid[0])
    span = losses.max() - losses.min()
    y = (losses - losses.min()) / span if span > 0 else np.zeros_like(losses)
    slopes = np.diff(y) / np.diff(x)
    curvature = np.abs(np.diff(slopes))
    k = int(np.argmax(curvature)) + 1
    no_knee = float(curvature.max()) < 1e-3
    if no_knee:
        warns.append("no clear edge point: curvature below 1e-3 everywhere")
    return LCurveResult(float(p_grid[k]), p_grid, losses, curvature, no_knee, warns)


# ---------------------------------------------------------------------------
# Synthetic data with known ground truth (tests, examples)

def simulate_var(
    clusters: list[ClusterParams],
    labels: np.ndarray,
    rng: np.random.Generator,
    init: np.ndarray | None = None,
    dt: float = 1.0,
):
    """Generate a switching-VAR series with recorded innovations.

    `labels[t]` names the cluster generating step t; the first `order` steps
    come from `init` (default: standard normal draws).  Returns
    (series, noise) where noise[t] is the innovation injected at step t
    (zero rows for the seeded steps).
    """
    labels = np.asarray(labels, dtype=int)
    T = labels.shape[0]
    d = clusters[0].dim
    order = clusters[0].order
    roots = []
    for c in clusters:
        vals, vecs = np.linalg.eigh(c.sigma)
        roots.append(vecs @ np.diag(np.sqrt(np.clip(vals, 0, None))) @ vecs.T)
    out = np.empty((T, d))
    out[:order] = rng.standard_normal((order, d)) if init is None else np.asarray(init, float)
    noise = np.zeros((T, d))
    for t in range(order, T):
        c = clusters[labels[t]]
        eps = roots[labels[t]] @ rng.standard_normal(d)
        noise[t] = eps
        out[t] = c.predict(out[t - order : t]) + eps
    if not np.all(np.isfinite(out)):
        raise NumericalError("synthetic VAR sample diverged; check coefficient stability")
    return TimeSeries(dt, 0.0, out), noise
