import numpy as np
import pytest

from clvlab.analysis import (
    AlignmentSeries,
    GridSearchError,
    GridSearchReport,
    InsufficientDataError,
    MetricSpec,
    alignment_cosine,
    alignment_series,
    delta_state_means,
    flow_alignment,
    gridsearch,
    near_neutral_index,
    surrogate_flow_alignment,
    total_variation,
    wing_label,
    wing_labels,
)
from clvlab.clv import ClvParams, clv_series
from clvlab.cocycle import CocycleSource, analytic_cocycle, constant_cocycle, var_cocycle
from clvlab.dynsys import OdeModel, TimeSeries, simulate
from clvlab.fembv import Affiliation, ClusterParams, FittedModel, simulate_var


def limit_cycle_model():
    """Planar flow with an attracting unit circle; on it the tangent is neutral."""

    def f(x):
        r2 = np.sum(x**2, axis=-1, keepdims=True)
        base = x * (1.0 - r2)
        rot = np.stack([-x[..., 1], x[..., 0]], axis=-1)
        return base + rot

    def J(x):
        xx, yy = x[..., 0], x[..., 1]
        out = np.empty(x.shape[:-1] + (2, 2))
        out[..., 0, 0] = 1.0 - 3.0 * xx**2 - yy**2
        out[..., 0, 1] = -2.0 * xx * yy - 1.0
        out[..., 1, 0] = -2.0 * xx * yy + 1.0
        out[..., 1, 1] = 1.0 - xx**2 - 3.0 * yy**2
        return out

    return OdeModel(name="cycle", dim=2, params={}, vector_field=f, jacobian=J)


def make_series(theta, state=None, indices=None):
    theta = np.asarray(theta, dtype=float)
    n = theta.shape[0]
    return AlignmentSeries(
        indices=np.arange(n) if indices is None else indices,
        theta=theta,
        state=np.zeros(n, dtype=int) if state is None else np.asarray(state),
    )


class TestAlignmentCosine:
    def test_equal_vectors(self):
        assert alignment_cosine([1.0, 2.0], [1.0, 2.0]) == pytest.approx(1.0)

    def test_orthogonal(self):
        assert alignment_cosine([1.0, 0.0], [0.0, 3.0]) == pytest.approx(0.0)

    def test_45_degrees(self):
        assert alignment_cosine([1.0, 0.0], [1.0, 1.0]) == pytest.approx(0.70710678, abs=1e-8)

    def test_zero_vector_rejected(self):
        with pytest.raises(ValueError, match="zero"):
            alignment_cosine([0.0, 0.0], [1.0, 0.0])

    def test_scale_invariance(self):
        rng = np.random.default_rng(0)
        u, v = rng.normal(size=2), rng.normal(size=2)
        u, v = rng.normal(size=3), rng.normal(size=3)
        base = alignment_cosine(u, v)
        for a, b in [(2.0, 3.0), (-1.0, 5.0), (1e-8, 1e8)]:
            assert alignment_cosine(a * u, b * v) == pytest.approx(base, abs=1e-12)


class TestNearNeutral:
    def test_three_dim_defaults_to_second(self):
        assert near_neutral_index([0.9, 0.005, -14.5]) == 2

    def test_other_dims_use_min_abs(self):
        assert near_neutral_index([0.7, -0.001]) == 2
        assert near_neutral_index([0.001, -2.0]) == 1

    def test_explicit_modes(self):
        assert near_neutral_index([0.5, 0.4, 0.0], mode="min_abs") == 3
        assert near_neutral_index([0.5, 0.4], mode="second") == 2
        with pytest.raises(ValueError):
            near_neutral_index([0.5], mode="whatever")


class TestAlignmentSeries:
    def diag_series(self, n_fail=0):
        mats = np.tile(np.diag([2.0, 1.0, 0.5]), (80, 1, 1))
        if n_fail:
            mats[40] = np.zeros((3, 3))
        src = CocycleSource("constant", mats)
        return clv_series(src, range(30, 50), ClvParams(10, correction_steps=2))

    def test_constant_diagonal_orthogonal(self):
        s = alignment_series(self.diag_series(), 1, 3)
        assert s.coverage == 1.0
        np.testing.assert_allclose(s.theta, 0.0, atol=1e-10)

    def test_identical_indices_give_one(self):
        s = alignment_series(self.diag_series(), 2, 2)
        np.testing.assert_allclose(s.theta, 1.0)

    def test_default_pair_is_near_neutral(self):
        clvs = self.diag_series()
        auto = alignment_series(clvs)
        explicit = alignment_series(clvs, 1, 2)
        np.testing.assert_array_equal(
            np.nan_to_num(auto.theta), np.nan_to_num(explicit.theta)
        )

    def test_missing_points_propagate(self):
        clvs = self.diag_series(n_fail=1)
        s = alignment_series(clvs, 1, 2)
        assert 0 < s.coverage < 1
        assert np.all(np.isnan(s.theta[~clvs.ok_mask]))

    def test_state_attached(self):
        clvs = self.diag_series()
        labels = np.arange(20) % 2
        s = alignment_series(clvs, 1, 2, state=labels)
        np.testing.assert_array_equal(s.state, labels)

    def test_validation(self):
        with pytest.raises(ValueError, match="equal length"):
            AlignmentSeries(np.arange(3), np.zeros(2), np.zeros(3, dtype=int))
        with pytest.raises(ValueError, match="0, 1"):
            make_series([0.5, 1.4])

    def test_csv(self, tmp_path):
        s = make_series([0.25, np.nan, 0.75], state=[0, 0, 1])
        text = s.csv_text()
        lines = text.strip().split("\n")
        assert lines[0] == "t,theta12,state,flow_theta"
        assert len(lines) == 4
        p = tmp_path / "angles.csv"
        s.write_csv(p)
        assert p.read_text() == text


class TestDeltaStateMeans:
    def test_identical_distributions(self):
        th = np.tile([0.3, 0.7], 40)
        state = np.repeat([0, 1], 40)
        assert delta_state_means(make_series(th, state), 0, 1) == pytest.approx(0.0)

    def test_separated_states(self):
        th = np.concatenate([np.ones(40), np.zeros(40)])
        state = np.repeat([0, 1], 40)
        assert delta_state_means(make_series(th, state), 0, 1) == pytest.approx(1.0)

    def test_antisymmetry(self):
        rng = np.random.default_rng(1)
        th = rng.uniform(size=80)
        state = np.repeat([0, 1], 40)
        s = make_series(th, state)
        assert delta_state_means(s, 0, 1) == pytest.approx(-delta_state_means(s, 1, 0))

    def test_switch_window_excluded(self):
        # poison the 10 points on each side of the switch; they must not count
        th = np.concatenate([np.full(40, 0.8), np.full(40, 0.2)])
        th[30:50] = 1.0
        state = np.repeat([0, 1], 40)
        d = delta_state_means(make_series(th, state), 0, 1)
        assert d == pytest.approx(0.6)

    def test_empty_state_raises(self):
        s = make_series(np.full(40, 0.5), np.zeros(40, dtype=int))
        with pytest.raises(InsufficientDataError, match="state 1"):
            delta_state_means(s, 0, 1)

    def test_low_coverage_raises(self):
        th = np.full(40, np.nan)
        th[:10] = 0.5
        s = make_series(th, np.repeat([0, 1], 20))
        with pytest.raises(InsufficientDataError, match="valid"):
            delta_state_means(s, 0, 1)


class TestWingLabel:
    def test_left_right(self):
        assert wing_label((-1.0, 0.0, 20.0)) == 0
        assert wing_label((1.0, 0.0, 20.0)) == 1
        assert wing_label((0.0, 0.0, 20.0)) == 1

    def test_symmetry_flip(self):
        s = np.array([2.3, -1.0, 15.0])
        flipped = np.array([-s[0], -s[1], s[2]])
        assert wing_label(s) != wing_label(flipped)

    def test_vectorized(self):
        vals = np.array([[-1.0, 0, 0], [2.0, 0, 0], [0.0, 0, 0]])
        np.testing.assert_array_equal(wing_labels(vals), [0, 1, 1])


class TestTotalVariation:
    def test_constant(self):
        assert total_variation(make_series(np.full(10, 0.4))) == 0.0

    def test_zigzag(self):
        assert total_variation(make_series([0.0, 1.0, 0.0])) == pytest.approx(2.0)

    def test_alternating(self):
        L = 9
        th = np.arange(L) % 2
        assert total_variation(make_series(th)) == pytest.approx(L - 1)

    def test_nan_pairs_skipped(self):
        assert total_variation(make_series([0.0, np.nan, 1.0, 0.5])) == pytest.approx(0.5)

    def test_time_reversal_invariance(self):
        rng = np.random.default_rng(2)
        th = rng.uniform(size=30)
        assert total_variation(make_series(th)) == pytest.approx(
            total_variation(make_series(th[::-1]))
        )

    def test_needs_two_points(self):
        with pytest.raises(ValueError):
            total_variation(make_series([0.5]))


def rotation_setup():
    """Harmonic oscillator on an exact circular orbit, window starts on period marks."""
    dt = np.pi / 100.0
    k = np.arange(501)
    values = np.stack([np.sin(k * dt), np.cos(k * dt)], axis=-1)
    model = OdeModel(
        name="oscillator",
        dim=2,
        params={},
        vector_field=lambda x: np.stack([x[..., 1], -x[..., 0]], axis=-1),
        jacobian=lambda x: np.broadcast_to(
            np.array([[0.0, 1.0], [-1.0, 0.0]]), x.shape[:-1] + (2, 2)
        ).copy(),
    )
    return TimeSeries(dt, 0.0, values), model


_CYCLE_CACHE = {}


def cycle_clvs():
    if not _CYCLE_CACHE:
        model = limit_cycle_model()
        traj = simulate(model, (1.0, 0.0), 0.02, 1600, discard=1000)
        src = analytic_cocycle(model, traj)
        params = ClvParams(600, future_steps=100, correction_steps=10)
        _CYCLE_CACHE["all"] = (traj, model, clv_series(src, range(620, 1480, 40), params))
    return _CYCLE_CACHE["all"]


class TestFlowAlignment:
    def test_neutral_vector_tracks_pure_rotation_flow(self):
        # on the attracting circle the motion is unit-speed rotation and the
        # single neutral vector is the flow direction
        traj, model, clvs = cycle_clvs()
        assert clvs.n_valid == len(clvs.results)
        s = flow_alignment(traj, model, clvs, j=1)
        assert not s.surrogate_tangent
        assert s.coverage == 1.0
        assert np.min(s.theta) > 1.0 - 1e-6

    def test_most_stable_index_reported_without_error(self):
        traj, model, clvs = cycle_clvs()
        s = flow_alignment(traj, model, clvs, j=2)
        assert np.all((s.theta >= 0) & (s.theta <= 1))

    def test_degenerate_isometry_keeps_flow_in_span(self):
        # an isometry makes both vectors neutral (tie flagged as a warning);
        # anchoring windows on half-periods puts the flow direction in the
        # returned pair even though the tie-break may order them either way
        traj, model = rotation_setup()
        src = analytic_cocycle(model, traj)
        with pytest.warns(UserWarning):
            clvs = clv_series(
                src, [100, 200, 300], ClvParams(80, future_steps=100, correction_steps=20)
            )
        a = flow_alignment(traj, model, clvs, j=1)
        b = flow_alignment(traj, model, clvs, j=2)
        assert np.min(np.maximum(a.theta, b.theta)) > 1.0 - 1e-6

    def test_default_index_is_neutral_in_2d(self):
        traj, model, clvs = cycle_clvs()
        auto = flow_alignment(traj, model, clvs)
        # exponents are (0, -2); min |ftle| picks the neutral one
        explicit = flow_alignment(traj, model, clvs, j=1)
        np.testing.assert_array_equal(auto.theta, explicit.theta)

    def test_near_zero_field_marked_missing(self):
        saddle = OdeModel(
            name="saddle",
            dim=2,
            params={},
            vector_field=lambda x: np.stack([x[..., 0], -x[..., 1]], axis=-1),
            jacobian=lambda x: np.broadcast_to(np.diag([1.0, -1.0]), x.shape[:-1] + (2, 2)).copy(),
        )
        src = constant_cocycle(np.diag([2.0, 0.5]), 60)
        clvs = clv_series(src, range(25, 30), ClvParams(20, correction_steps=2))
        vals = np.ones((60, 2))
        vals[27] = 0.0  # stationary point: no flow direction there
        traj = TimeSeries(1.0, 0.0, vals)
        s = flow_alignment(traj, saddle, clvs, j=1)
        assert np.isnan(s.theta[2])
        assert np.isfinite(s.theta[s.indices != 27]).all()


class TestSurrogateFlowAlignment:
    def fitted(self):
        c = ClusterParams(
            [0.0, 0.0],
            [np.array([[0.9, 0.2], [-0.1, 0.7]]), 0.05 * np.eye(2)],
            0.01 * np.eye(2),
        )
        labels = np.zeros(400, dtype=int)
        series, _ = simulate_var([c], labels, np.random.default_rng(3))
        model = FittedModel(
            clusters=[c],
            affiliation=Affiliation.from_labels(labels, 1),
            n_clusters=1,
            order=2,
            persistence=400.0,
            budget=0,
            loss_trace=[0.0],
            seed=0,
        )
        return series, model

    def test_surrogate_matches_manual_stack(self):
        series, model = self.fitted()
        src = var_cocycle(model, series)
        clvs = clv_series(src, range(100, 120), ClvParams(40, correction_steps=5))
        s = surrogate_flow_alignment(series, 2, clvs, j=1)
        assert s.surrogate_tangent
        x = series.values
        t = int(clvs.indices[0])
        manual = np.concatenate([x[t + 1] - x[t], x[t] - x[t - 1]])
        r = clvs.results[0]
        assert s.theta[0] == pytest.approx(alignment_cosine(manual, r.vectors[:, 0]))

    def test_index_bounds(self):
        series, model = self.fitted()
        src = var_cocycle(model, series)
        clvs = clv_series(src, range(100, 110), ClvParams(40, correction_steps=5))
        short = TimeSeries(series.dt, series.t0, series.values[:105])
        with pytest.raises(IndexError):
            surrogate_flow_alignment(short, 2, clvs)


class TestGridsearch:
    def source(self):
        return constant_cocycle(np.diag([2.0, 1.0, 0.5]), 160)

    def test_single_cell_matches_direct(self):
        src = self.source()
        ts = range(60, 100)
        state = (np.arange(40) >= 20).astype(int)
        spec = MetricSpec(pair=(1, 3), state=state)
        rep = gridsearch(src, ts, [20], [3], spec)
        assert rep.delta.shape == (1, 1)
        clvs = clv_series(src, ts, ClvParams(20, correction_steps=3))
        aligned = alignment_series(clvs, 1, 3, state=state)
        assert rep.delta[0, 0] == pytest.approx(delta_state_means(aligned, 0, 1))
        assert rep.tv[0, 0] == pytest.approx(total_variation(aligned))

    def test_constant_source_all_zero(self):
        state = (np.arange(40) >= 20).astype(int)
        rep = gridsearch(
            self.source(), range(60, 100), [10, 20], [1, 3, 5], MetricSpec(state=state)
        )
        assert rep.delta.shape == (2, 3)
        np.testing.assert_allclose(rep.delta, 0.0, atol=1e-12)
        np.testing.assert_allclose(rep.tv, 0.0, atol=1e-12)
        assert not rep.failures.any()

    def test_partial_failures_flagged(self):
        state = (np.arange(40) >= 20).astype(int)
        rep = gridsearch(
            self.source(), range(60, 100), [20, 500], [3], MetricSpec(state=state)
        )
        assert not rep.failures[0, 0]
        assert rep.failures[1, 0]
        assert np.isnan(rep.delta[1, 0])
        assert (500, 3) in rep.messages

    def test_all_failed_raises(self):
        with pytest.raises(GridSearchError):
            gridsearch(self.source(), range(60, 100), [500, 600], [3], MetricSpec())

    def test_threaded_matches_serial(self):
        state = (np.arange(40) >= 20).astype(int)
        spec = MetricSpec(state=state)
        a = gridsearch(self.source(), range(60, 100), [10, 20], [1, 3], spec)
        b = gridsearch(self.source(), range(60, 100), [10, 20], [1, 3], spec, threads=3)
        np.testing.assert_array_equal(a.delta, b.delta)
        np.testing.assert_array_equal(a.tv, b.tv)
        np.testing.assert_array_equal(a.failures, b.failures)

    def test_write_report(self, tmp_path):
        state = (np.arange(40) >= 20).astype(int)
        spec = MetricSpec(state=state)
        rep = gridsearch(self.source(), range(60, 100), [10, 20], [1, 3], spec)
        files = rep.write(tmp_path, spec)
        names = sorted(p.name for p in files)
        assert names == ["delta.csv", "failures.csv", "gridsearch.json", "tv.csv"]
        delta_lines = (tmp_path / "delta.csv").read_text().strip().split("\n")
        assert delta_lines[0] == "N,n=1,n=3"
        assert len(delta_lines) == 3
        import json

        manifest = json.loads((tmp_path / "gridsearch.json").read_text())
        assert manifest["N_values"] == [10, 20]
        assert manifest["metric_spec"]["has_state_labels"]

    def test_shape_validation(self):
        with pytest.raises(ValueError, match="shape"):
            GridSearchReport(
                [10, 20], [1], np.zeros((1, 1)), np.zeros((2, 1)), np.zeros((2, 1), dtype=bool)
            )
        with pytest.raises(ValueError, match="non-empty"):
            gridsearch(self.source(), range(60, 100), [], [3])
