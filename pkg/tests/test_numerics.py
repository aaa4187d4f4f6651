import math
import warnings

import numpy as np
import pytest
from hypothesis import given, strategies as st

from fdsurvey.errors import ContractError
from fdsurvey.numerics import (
    RngStream,
    TimeGrid,
    as_symmetric,
    empirical_quantile,
    standard_normals,
    sym_eig,
    trapezoid,
    trapezoid_rows,
)

from oracles import jacobi_eigenvalues


class TestTimeGrid:
    def test_uniform(self):
        g = TimeGrid.uniform(5, 2.0)
        assert g.d == 5 and g.T == 2.0
        np.testing.assert_allclose(g.points, [0, 0.5, 1, 1.5, 2])
        assert g.min_spacing == pytest.approx(0.5)

    @pytest.mark.parametrize("pts", [[0.0], [0.1, 0.5], [0, 0.5, 0.5], [0, 0.6, 0.4], [0, np.nan]])
    def test_invalid(self, pts):
        with pytest.raises(ContractError):
            TimeGrid(np.array(pts, dtype=float))

    def test_irregular_spacing_warns(self):
        with pytest.warns(UserWarning):
            TimeGrid(np.array([0.0, 0.001, 1.0]))

    def test_equality_and_hash(self):
        a, b = TimeGrid.uniform(7), TimeGrid.uniform(7)
        assert a == b and hash(a) == hash(b)
        assert a != TimeGrid.uniform(8)
        assert a.same_as(b)

    def test_read_only(self):
        g = TimeGrid.uniform(4)
        with pytest.raises(ValueError):
            g.points[0] = 1.0


class TestTrapezoid:
    def test_constant(self):
        irregular = TimeGrid(np.array([0.0, 0.1, 0.35, 0.6, 1.0]))
        assert trapezoid(np.ones(5), irregular) == pytest.approx(1.0, abs=1e-15)

    def test_linear(self, grid11):
        assert trapezoid(grid11.points, grid11) == pytest.approx(0.5, abs=1e-15)

    def test_quadratic(self):
        g = TimeGrid.uniform(101)
        assert abs(trapezoid(g.points**2, g) - 1 / 3) < 2e-5

    def test_rows_match_scalar(self, rng, grid11):
        V = rng.normal(size=(4, 11))
        np.testing.assert_allclose(trapezoid_rows(V, grid11), [trapezoid(v, grid11) for v in V], rtol=1e-13)

    def test_shape_mismatch(self, grid11):
        with pytest.raises(ContractError):
            trapezoid(np.ones(10), grid11)


class TestEmpiricalQuantile:
    def test_examples(self):
        assert empirical_quantile([1, 2, 3, 4, 5], 0.95) == 5
        assert empirical_quantile([7], 0.3) == 7
        assert empirical_quantile([1, 2, 3, 4], 0.5) == 2
        assert empirical_quantile(np.arange(1, 101), 0.95) == 95

    def test_shuffled(self, rng):
        assert empirical_quantile(rng.permutation(np.arange(1, 101)), 0.5) == 50

    @given(st.lists(st.floats(-1e6, 1e6), min_size=1, max_size=60), st.floats(0.001, 0.999))
    def test_matches_sort_oracle(self, xs, p):
        k = math.ceil(round(p * len(xs), 9))
        assert empirical_quantile(xs, p) == sorted(xs)[max(k, 1) - 1]

    @pytest.mark.parametrize("p", [0.0, 1.0, -0.1])
    def test_bad_p(self, p):
        with pytest.raises(ContractError):
            empirical_quantile([1, 2], p)

    def test_empty(self):
        with pytest.raises(ContractError):
            empirical_quantile([], 0.5)


class TestSymEig:
    def test_identity(self):
        w, _ = sym_eig(np.eye(3))
        np.testing.assert_allclose(w, [1, 1, 1])

    def test_diagonal(self):
        w, V = sym_eig(np.diag([1.0, 4.0]))
        np.testing.assert_allclose(w, [4, 1])
        np.testing.assert_allclose(np.abs(V), [[0, 1], [1, 0]], atol=1e-15)

    def test_reconstruction_and_jacobi(self, rng):
        B = rng.normal(size=(8, 8))
        A = (B + B.T) / 2
        w, V = sym_eig(A)
        np.testing.assert_allclose(V @ np.diag(w) @ V.T, A, atol=1e-12)
        np.testing.assert_allclose(V.T @ V, np.eye(8), atol=1e-12)
        wj, _ = jacobi_eigenvalues(A)
        np.testing.assert_allclose(w, wj, atol=1e-10)

    def test_rejects_asymmetric(self):
        with pytest.raises(ContractError):
            sym_eig(np.array([[1.0, 2.0], [0.0, 1.0]]))

    def test_as_symmetric_rejects_nonfinite(self):
        with pytest.raises(ContractError):
            as_symmetric(np.array([[np.inf]]))


class TestRngStream:
    def test_determinism(self):
        a = standard_normals(RngStream(3, 5), 10)
        b = standard_normals(RngStream(3, 5), 10)
        assert np.array_equal(a, b)

    def test_distinct_keys_differ(self):
        base = standard_normals(RngStream(3, 5), 10)
        for other in (RngStream(4, 5), RngStream(3, 6), RngStream(3, 5, namespace=1), RngStream(3, 5).child(0)):
            assert not np.array_equal(base, standard_normals(other, 10))

    def test_empty(self):
        assert standard_normals(RngStream(0), 0).shape == (0,)

    def test_moments(self):
        z = standard_normals(RngStream(11, 1), 10**6)
        assert abs(z.mean()) < 0.005
        assert abs(z.var() - 1) < 0.01

    @pytest.mark.parametrize("kw", [dict(seed=-1), dict(seed=0, stream_id=-2), dict(seed=1.5)])
    def test_invalid(self, kw):
        with pytest.raises(ContractError):
            RngStream(**kw)
