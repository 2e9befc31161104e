import numpy as np
import pytest

from clvlab.clv import (
    ClvParams,
    ClvResult,
    MultiplicityWarning,
    NoIntersectionError,
    clv_at,
    clv_series,
    le_spectrum_qr,
)
from clvlab.cocycle import CocycleSource, RankCollapseError, analytic_cocycle, constant_cocycle
from clvlab.dynsys import lorenz63, simulate


def rotation(theta=0.3):
    c, s = np.cos(theta), np.sin(theta)
    return np.array([[c, -s], [s, c]])


class TestClvParams:
    def test_future_defaults_to_past(self):
        p = ClvParams(past_steps=10, correction_steps=3)
        assert p.future_steps == 10
        assert p.margin_before == 13 and p.margin_after == 10

    def test_validation(self):
        with pytest.raises(ValueError):
            ClvParams(past_steps=0)
        with pytest.raises(ValueError):
            ClvParams(past_steps=5, future_steps=0)
        with pytest.raises(ValueError):
            ClvParams(past_steps=5, correction_steps=-1)


class TestClvResultValidation:
    def test_requires_unit_columns(self):
        with pytest.raises(ValueError, match="unit"):
            ClvResult(0, 2.0 * np.eye(2), np.array([1.0, 0.0]), np.eye(2))

    def test_requires_sorted_ftle(self):
        v = np.eye(2)
        with pytest.raises(ValueError, match="non-increasing"):
            ClvResult(0, v, np.array([0.0, 1.0]), np.eye(2))

    def test_angle_checks(self):
        v = np.eye(2)
        f = np.array([1.0, 0.0])
        with pytest.raises(ValueError, match="symmetric"):
            ClvResult(0, v, f, np.array([[1.0, 0.3], [0.2, 1.0]]))
        with pytest.raises(ValueError, match="diagonal"):
            ClvResult(0, v, f, np.array([[0.9, 0.2], [0.2, 0.9]]))


class TestSpectrumQr:
    def test_constant_diagonal(self):
        src = constant_cocycle(np.diag([2.0, 0.5]), 50)
        np.testing.assert_allclose(
            le_spectrum_qr(src, 0, 50), [np.log(2.0), np.log(0.5)], atol=1e-10
        )

    def test_rotation_is_neutral(self):
        src = constant_cocycle(rotation(), 200)
        np.testing.assert_allclose(le_spectrum_qr(src, 0, 200), [0.0, 0.0], atol=1e-8)

    def test_time_unit_scaling(self):
        src = constant_cocycle(np.diag([2.0, 0.5]), 50, time_unit=0.1)
        np.testing.assert_allclose(
            le_spectrum_qr(src, 0, 50), [np.log(2.0) / 0.1, np.log(0.5) / 0.1], atol=1e-9
        )

    def test_lorenz_spectrum_short(self):
        traj = simulate(lorenz63(), (1.0, 1.0, 1.0), 0.01, 20000, discard=5000)
        spec = le_spectrum_qr(analytic_cocycle(lorenz63(), traj), 0, 19999)
        assert abs(spec[0] - 0.9) < 0.15
        assert abs(spec[1]) < 0.1
        assert abs(spec[2] + 14.5) < 1.5


class TestClvAtConstant:
    def test_diagonal_source(self):
        src = constant_cocycle(np.diag([2.0, 0.5]), 60)
        res = clv_at(src, 25, ClvParams(20, correction_steps=3))
        np.testing.assert_allclose(res.vectors, np.eye(2), atol=1e-10)
        np.testing.assert_allclose(res.ftle, [np.log(2.0), np.log(0.5)], atol=1e-10)
        assert res.theta(1, 2) == pytest.approx(0.0, abs=1e-10)

    def test_diagonal_source_time_unit(self):
        src = constant_cocycle(np.diag([2.0, 0.5]), 60, time_unit=0.5)
        res = clv_at(src, 25, ClvParams(20, correction_steps=3))
        np.testing.assert_allclose(
            res.ftle, [np.log(2.0) / 0.5, np.log(0.5) / 0.5], atol=1e-10
        )

    def test_triangular_source_eigenvectors(self):
        A = np.array([[2.0, 1.0], [0.0, 0.5]])
        src = constant_cocycle(A, 80)
        res = clv_at(src, 40, ClvParams(20, correction_steps=3))
        np.testing.assert_allclose(res.vectors[:, 0], [1.0, 0.0], atol=1e-4)
        v2 = np.array([1.0, -1.5]) / np.linalg.norm([1.0, -1.5])
        np.testing.assert_allclose(res.vectors[:, 1], v2, atol=1e-4)
        assert res.ftle[0] == pytest.approx(np.log(2.0), abs=1e-8)
        # the contracting exponent is read off a growth measurement that
        # re-amplifies any trace of the expanding direction, so it is coarse
        assert res.ftle[1] == pytest.approx(np.log(0.5), abs=0.05)

    def test_general_eigenvector_convergence(self):
        # distinct moduli with >= 2x gaps: vectors converge to eigenvectors
        V = np.array([[1.0, 1.0, 0.3], [0.0, 1.0, 1.0], [0.5, 0.0, 1.0]])
        lam = np.array([2.0, 0.9, 0.3])
        A = V @ np.diag(lam) @ np.linalg.inv(V)
        src = constant_cocycle(A, 160)
        res = clv_at(src, 80, ClvParams(50, correction_steps=5))
        # growth-measured exponents of subdominant vectors can misorder the
        # columns, so match each eigenvector to its best-aligned column
        taken = set()
        for j in range(3):
            v = V[:, j] / np.linalg.norm(V[:, j])
            aligns = np.abs(v @ res.vectors)
            k = int(np.argmax(aligns))
            assert 1.0 - aligns[k] < 1e-3
            taken.add(k)
        assert taken == {0, 1, 2}
        assert res.ftle[0] == pytest.approx(np.log(2.0), abs=1e-6)

    def test_zero_correction_keeps_leading_past_direction(self):
        A = np.array([[2.0, 1.0], [0.0, 0.5]])
        src = constant_cocycle(A, 80)
        res = clv_at(src, 40, ClvParams(20, correction_steps=0))
        # no push-forward: the first vector is the top past stretch direction
        np.testing.assert_allclose(res.vectors[:, 0], [1.0, 0.0], atol=1e-4)
        np.testing.assert_allclose(np.linalg.norm(res.vectors, axis=0), 1.0, atol=1e-10)

    def test_coverage_error(self):
        src = constant_cocycle(np.diag([2.0, 0.5]), 30)
        with pytest.raises(IndexError, match="range"):
            clv_at(src, 5, ClvParams(20, correction_steps=3))
        with pytest.raises(IndexError, match="range"):
            clv_at(src, 25, ClvParams(10, correction_steps=0))


class TestCovariance:
    def test_constant_source_covariance(self):
        A = np.random.default_rng(3).normal(size=(3, 3))
        src = constant_cocycle(A, 200)
        params = ClvParams(50, correction_steps=5)
        r0 = clv_at(src, 90, params)
        r1 = clv_at(src, 91, params)
        for j in range(3):
            img = A @ r0.vectors[:, j]
            cos = abs(img @ r1.vectors[:, j]) / np.linalg.norm(img)
            assert 1.0 - cos < 1e-8

    def test_lorenz_covariance_median(self):
        traj = simulate(lorenz63(), (1.0, 1.0, 1.0), 0.01, 600, discard=3000)
        src = analytic_cocycle(lorenz63(), traj)
        params = ClvParams(100, correction_steps=10)
        series = clv_series(src, range(150, 450, 3), params)
        assert series.n_valid > 80
        mism = {1: [], 2: []}
        for res in series.results:
            if res is None:
                continue
            t = res.t
            nxt = clv_at(src, t + 1, params)
            for j in (1, 2):
                img = src.step(t) @ res.vectors[:, j - 1]
                cos = abs(img @ nxt.vectors[:, j - 1]) / np.linalg.norm(img)
                mism[j].append(1.0 - cos)
        for j in (1, 2):
            assert np.median(mism[j]) < 0.05


class TestClvSeries:
    def test_constant_source_time_invariant(self):
        A = np.array([[1.5, 0.3], [0.1, 0.4]])
        src = constant_cocycle(A, 120)
        series = clv_series(src, range(40, 60), ClvParams(30, correction_steps=4))
        assert series.n_valid == 20
        base = series.results[0]
        for r in series.results[1:]:
            np.testing.assert_allclose(r.vectors, base.vectors, atol=1e-8)
            np.testing.assert_allclose(r.ftle, base.ftle, atol=1e-8)

    def test_time_reversed_diagonal_negates_and_swaps(self):
        fwd = constant_cocycle(np.diag([3.0, 0.5]), 60)
        rev = constant_cocycle(np.diag([1.0 / 3.0, 2.0]), 60)
        p = ClvParams(20, correction_steps=2)
        f = clv_at(fwd, 30, p)
        r = clv_at(rev, 30, p)
        np.testing.assert_allclose(r.ftle, -f.ftle[::-1], atol=1e-10)

    def test_failed_points_marked_missing(self):
        mats = np.tile(np.diag([2.0, 0.5]), (80, 1, 1))
        mats[40] = np.diag([1.0, 0.0])  # one singular step mid-series
        src = CocycleSource("constant", mats)
        series = clv_series(src, range(15, 65), ClvParams(10, correction_steps=2))
        ok = series.ok_mask
        # windows covering step 40 fail: t - 12 <= 40 < t + 10
        expect_bad = {t for t in range(15, 65) if t - 12 <= 40 < t + 10}
        assert {int(t) for t in series.indices[~ok]} == expect_bad
        assert all("rank" in series.errors[t] for t in expect_bad)
        assert series.n_valid == 50 - len(expect_bad)

    def test_clv_at_raises_on_rank_collapse(self):
        mats = np.tile(np.diag([2.0, 0.5]), (40, 1, 1))
        mats[20] = np.diag([1.0, 0.0])
        src = CocycleSource("constant", mats)
        with pytest.raises(RankCollapseError, match="rank"):
            clv_at(src, 22, ClvParams(10, correction_steps=2))

    def test_ftle_matrix_and_theta_series(self):
        src = constant_cocycle(np.diag([2.0, 0.5]), 60)
        series = clv_series(src, range(25, 30), ClvParams(20, correction_steps=2))
        F = series.ftle_matrix()
        assert F.shape == (5, 2)
        np.testing.assert_allclose(F[:, 0], np.log(2.0), atol=1e-10)
        th = series.theta_series(1, 2)
        np.testing.assert_allclose(th, 0.0, atol=1e-10)


class TestMultiplicity:
    def test_identity_source_warns(self):
        src = constant_cocycle(np.eye(2), 40)
        with pytest.warns(MultiplicityWarning):
            clv_at(src, 20, ClvParams(10, correction_steps=2))


class TestAngles:
    def test_scaling_invariance(self):
        A = np.random.default_rng(3).normal(size=(3, 3))
        src = constant_cocycle(A, 120)
        res = clv_at(src, 60, ClvParams(40, correction_steps=5))
        rng = np.random.default_rng(0)
        for i in range(3):
            for j in range(3):
                a = res.vectors[:, i] * rng.uniform(0.1, 10.0)
                b = res.vectors[:, j] * rng.uniform(0.1, 10.0)
                cos = abs(a @ b) / (np.linalg.norm(a) * np.linalg.norm(b))
                assert cos == pytest.approx(res.angles[i, j], abs=1e-12)

    def test_angle_matrix_structure(self):
        A = np.random.default_rng(7).normal(size=(3, 3))
        res = clv_at(constant_cocycle(A, 120), 60, ClvParams(40, correction_steps=5))
        np.testing.assert_allclose(res.angles, res.angles.T)
        np.testing.assert_allclose(np.diagonal(res.angles), 1.0)
        assert np.all(res.angles >= 0) and np.all(res.angles <= 1)


class TestSerialization:
    def series(self):
        mats = np.tile(np.diag([2.0, 0.5]), (60, 1, 1))
        mats[40] = np.diag([1.0, 0.0])  # make one window fail
        src = CocycleSource("constant", mats, time_unit=0.1, t0=5.0)
        return clv_series(src, range(20, 40), ClvParams(10, correction_steps=2))

    def test_csv_layout(self):
        series = self.series()
        text = series.csv_text()
        lines = text.strip().split("\n")
        assert lines[0] == "t,ftle_1,ftle_2,theta_12,ok_flag"
        assert len(lines) == 21
        data = np.genfromtxt(text.split("\n"), delimiter=",", skip_header=1)
        assert data.shape == (20, 5)
        ok = data[:, -1] == 1
        assert np.all(np.isnan(data[~ok, 1]))
        np.testing.assert_allclose(data[ok, 1], np.log(2.0) / 0.1, atol=1e-9)
        np.testing.assert_allclose(data[:, 0], 5.0 + np.arange(20, 40) * 0.1)

    def test_csv_roundtrip_file(self, tmp_path):
        series = self.series()
        p = tmp_path / "clv.csv"
        series.write_csv(p)
        assert p.read_text() == series.csv_text()

    def test_vectors_json(self, tmp_path):
        series = self.series()
        d = series.vectors_json_dict()
        assert d["format_version"] == 1
        assert d["params"]["past_steps"] == 10
        n_null = sum(1 for v in d["vectors"] if v is None)
        assert n_null == len(series.results) - series.n_valid > 0
        p = tmp_path / "vectors.json"
        series.save_vectors_json(p)
        import json

        back = json.loads(p.read_text())
        assert back["indices"] == list(range(20, 40))
