import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from conicpen.batteries import cone_battery, fd_gradient, polar_samples
from conicpen.cones import (ConeError, EigenError, Lorentz, Nonpos, Product, Psd, Zero,
                            cone_from_json, cone_to_json, dist_to_cone, dist_to_polar,
                            eigen_sym, membership, moreau_check, parse_cone, penalty_grad_chain,
                            penalty_value, project, project_polar, smat, svec)

CONES = [
    Zero(3),
    Nonpos(4),
    Lorentz(1),
    Lorentz(3),
    Psd(2),
    Psd(3),
    Product((Zero(1), Nonpos(2), Lorentz(3))),
    Product((Nonpos(1), Psd(2))),
]


def lorentz2_grid(n=2001, radius=2.0):
    """Dense grid over the part of Lorentz(2) with t <= radius."""
    pts = []
    for t in np.linspace(0.0, radius, n // 4):
        for s in np.linspace(-t, t, 41):
            pts.append((t, s))
    return np.array(pts)


class TestProjection:
    def test_nonpos_clamp(self):
        np.testing.assert_array_equal(project(Nonpos(2), [3.0, -2.0]), [0.0, -2.0])

    def test_lorentz_against_dense_sampling(self):
        z = np.array([0.0, 1.0])
        grid = lorentz2_grid()
        nearest = grid[np.argmin(np.linalg.norm(grid - z, axis=1))]
        p = project(Lorentz(2), z)
        np.testing.assert_allclose(p, [0.5, 0.5], atol=1e-15)
        assert np.linalg.norm(p - nearest) < 2e-2
        assert np.linalg.norm(z - p) <= np.min(np.linalg.norm(grid - z, axis=1)) + 1e-15

    def test_psd_diagonal_clamp(self):
        p = project(Psd(2), svec(np.diag([1.0, -2.0])))
        np.testing.assert_allclose(p, svec(np.diag([1.0, 0.0])), atol=1e-14)

    def test_lorentz_one_is_half_line(self):
        np.testing.assert_array_equal(project(Lorentz(1), [-3.0]), [0.0])
        np.testing.assert_array_equal(project(Lorentz(1), [2.0]), [2.0])

    def test_lorentz_polar_region_goes_to_origin(self):
        np.testing.assert_array_equal(project(Lorentz(3), [-5.0, 1.0, 1.0]), [0.0, 0.0, 0.0])

    def test_dimension_mismatch(self):
        with pytest.raises(ConeError):
            project(Nonpos(2), [1.0, 2.0, 3.0])


class TestPolar:
    def test_zero_polar_is_everything(self):
        np.testing.assert_array_equal(project_polar(Zero(2), [3.0, -2.0]), [3.0, -2.0])

    def test_nonpos(self):
        np.testing.assert_array_equal(project_polar(Nonpos(2), [3.0, -2.0]), [3.0, 0.0])

    def test_lorentz(self):
        np.testing.assert_allclose(project_polar(Lorentz(2), [0.0, 1.0]), [-0.5, 0.5], atol=1e-15)


class TestDistance:
    def test_nonpos(self):
        assert dist_to_cone(Nonpos(2), [3.0, -2.0]) == 3.0

    def test_zero(self):
        assert dist_to_cone(Zero(1), [5.0]) == 5.0

    def test_lorentz_against_dense_sampling(self):
        z = np.array([0.0, 1.0])
        grid = lorentz2_grid()
        sampled = np.min(np.linalg.norm(grid - z, axis=1))
        d = dist_to_cone(Lorentz(2), z)
        assert d == pytest.approx(math.sqrt(2) / 2, abs=1e-15)
        assert d <= sampled + 1e-15
        assert sampled - d < 1e-3

    @pytest.mark.parametrize("K", [Nonpos(2), Lorentz(2), Lorentz(3)])
    def test_polar_distance_against_sampling(self, K):
        rng = np.random.default_rng(7)
        W = polar_samples(K, rng, 200000)
        W *= 10.0 ** rng.uniform(-1.5, 0.7, (len(W), 1))
        for lam in rng.standard_normal((5, K.dim)):
            sampled = np.min(np.linalg.norm(W - lam, axis=1))
            d = dist_to_polar(K, lam)
            assert d <= sampled + 1e-12
            assert sampled - d < 0.1

    def test_is_norm_of_complement(self):
        rng = np.random.default_rng(1)
        for K in CONES:
            for z in rng.standard_normal((20, K.dim)):
                assert dist_to_cone(K, z) == float(np.linalg.norm(z - project(K, z)))


class TestMembership:
    def test_lorentz(self):
        assert membership(Lorentz(3), [2.0, 1.0, 1.0], 1e-12)

    def test_zero(self):
        assert not membership(Zero(2), [0.0, 1e-3], 1e-6)

    def test_psd_indefinite(self):
        assert not membership(Psd(2), svec(np.array([[1.0, 2.0], [2.0, 1.0]])), 1e-9)


class TestMoreau:
    def test_nonpos_example(self):
        assert moreau_check(Nonpos(2), [3.0, -2.0]) == (0.0, 0.0)

    def test_lorentz_example(self):
        recon, orth = moreau_check(Lorentz(2), [0.0, 1.0])
        assert recon == 0.0 and orth == 0.0

    def test_members_have_zero_polar_part(self):
        rng = np.random.default_rng(2)
        for K in CONES:
            for c in K.sample(rng, 20):
                assert moreau_check(K, c) == (0.0, 0.0) or np.linalg.norm(project_polar(K, c)) < 1e-12

    @pytest.mark.parametrize("K", CONES, ids=repr)
    def test_battery(self, K):
        res = cone_battery(K, samples=200, seed=11, members=50, grad_samples=50)
        assert res["pass"], res["max_residuals"]


vectors = arrays(np.float64, 3, elements=st.floats(-1e3, 1e3, allow_nan=False))


class TestProperties:
    @settings(max_examples=200, deadline=None)
    @given(vectors, st.floats(1e-3, 1e3))
    def test_lorentz_homogeneity_and_idempotence(self, z, alpha):
        K = Lorentz(3)
        p = project(K, z)
        np.testing.assert_allclose(project(K, p), p, atol=1e-10 * (1 + np.linalg.norm(z)))
        np.testing.assert_allclose(project(K, alpha * z), alpha * p,
                                   atol=1e-10 * (1 + alpha * np.linalg.norm(z)))

    @settings(max_examples=200, deadline=None)
    @given(vectors, vectors)
    def test_lorentz_is_nonexpansive(self, a, b):
        K = Lorentz(3)
        lhs = np.linalg.norm(project(K, a) - project(K, b))
        assert lhs <= np.linalg.norm(a - b) * (1 + 1e-12) + 1e-12

    @settings(max_examples=100, deadline=None)
    @given(arrays(np.float64, 6, elements=st.floats(-100, 100, allow_nan=False)))
    def test_psd_projection_is_psd_and_orthogonal(self, z):
        K = Psd(3)
        p = project(K, z)
        w = z - p
        assert eigen_sym(smat(p)).values[-1] >= -1e-9 * (1 + np.linalg.norm(z))
        assert eigen_sym(smat(w)).values[0] <= 1e-9 * (1 + np.linalg.norm(z))
        assert abs(p @ w) <= 1e-8 * (1 + z @ z)


class TestSvec:
    def test_trace_identity(self):
        rng = np.random.default_rng(5)
        for s in range(1, 6):
            for _ in range(20):
                A = rng.standard_normal((s, s))
                B = rng.standard_normal((s, s))
                A, B = A + A.T, B + B.T
                assert svec(A) @ svec(B) == pytest.approx(np.trace(A @ B), abs=1e-12 * (1 + abs(np.trace(A @ B))))

    def test_layout_is_column_major_lower(self):
        A = np.array([[1.0, 2.0, 3.0], [2.0, 4.0, 5.0], [3.0, 5.0, 6.0]])
        r2 = math.sqrt(2)
        np.testing.assert_allclose(svec(A), [1.0, 2 * r2, 3 * r2, 4.0, 5 * r2, 6.0])
        np.testing.assert_allclose(smat(svec(A)), A)

    def test_bad_length(self):
        with pytest.raises(ConeError):
            smat(np.ones(4))


class TestEigen:
    def test_diagonal(self):
        pair = eigen_sym(np.diag([1.0, -2.0]))
        np.testing.assert_array_equal(pair.values, [1.0, -2.0])
        np.testing.assert_array_equal(np.abs(pair.vectors), np.eye(2))

    def test_swap_matrix(self):
        pair = eigen_sym(np.array([[0.0, 1.0], [1.0, 0.0]]))
        np.testing.assert_allclose(pair.values, [1.0, -1.0], atol=1e-15)

    def test_identity(self):
        pair = eigen_sym(np.eye(3))
        np.testing.assert_array_equal(pair.values, [1.0, 1.0, 1.0])
        np.testing.assert_allclose(pair.vectors.T @ pair.vectors, np.eye(3), atol=1e-15)

    def test_random_reconstruction(self):
        rng = np.random.default_rng(9)
        for s in (2, 3, 5, 8):
            A = rng.standard_normal((s, s))
            A = A + A.T
            lam, Q = eigen_sym(A)
            np.testing.assert_allclose(Q @ np.diag(lam) @ Q.T, A, atol=1e-11)
            np.testing.assert_allclose(Q.T @ Q, np.eye(s), atol=1e-12)
            assert np.all(np.diff(lam) <= 0)
            # independent oracle
            np.testing.assert_allclose(lam, np.linalg.eigvalsh(A)[::-1], atol=1e-11)

    def test_sweep_cap(self):
        A = np.array([[1.0, 2.0], [2.0, 3.0]])
        with pytest.raises(EigenError):
            eigen_sym(A, max_sweeps=0)


class TestPenalty:
    def test_value_and_chain_rule_example(self):
        K = Zero(1)
        assert penalty_value(K, [2.0]) == 4.0
        np.testing.assert_array_equal(penalty_grad_chain(K, [2.0], [[-2.0, -2.0]]), [-8.0, -8.0])

    def test_feasible_point(self):
        assert penalty_value(Nonpos(1), [-3.0]) == 0.0
        np.testing.assert_array_equal(penalty_grad_chain(Nonpos(1), [-3.0], [[1.0]]), [0.0])

    def test_gradient_matches_finite_differences(self):
        K = Lorentz(3)
        rng = np.random.default_rng(4)
        for z in rng.standard_normal((50, 3)):
            fd = fd_gradient(lambda v: penalty_value(K, v), z)
            exact = 2.0 * project_polar(K, z)
            assert np.linalg.norm(fd - exact) <= 1e-5 * max(np.linalg.norm(exact), 1e-8)

    def test_shape_check(self):
        with pytest.raises(ConeError):
            penalty_grad_chain(Zero(2), [1.0, 1.0], [[1.0, 0.0]])


class TestDescriptors:
    @pytest.mark.parametrize("K", CONES, ids=repr)
    def test_json_roundtrip(self, K):
        assert cone_from_json(cone_to_json(K)) == K

    def test_dims(self):
        assert Psd(3).dim == 6
        assert Product((Zero(1), Nonpos(2), Lorentz(3))).dim == 6

    @pytest.mark.parametrize("text, K", [
        ("lorentz:3", Lorentz(3)),
        ("psd:2", Psd(2)),
        ("zero:1,nonpos:1", Product((Zero(1), Nonpos(1)))),
        ('{"type": "nonpos", "dim": 2}', Nonpos(2)),
    ])
    def test_parse(self, text, K):
        assert parse_cone(text) == K

    @pytest.mark.parametrize("text", ["cube:3", "lorentz", "psd:0", '{"type": "psd", "order": 2, "dim": 4}', ""])
    def test_parse_errors(self, text):
        with pytest.raises(ConeError):
            parse_cone(text)
