import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from amfir import certainty, compute_prototypes, distances, posterior

finite_rows = arrays(
    np.float64,
    st.integers(min_value=2, max_value=10),
    elements=st.floats(min_value=0.0, max_value=50.0),
)


class TestPrototypes:
    def test_single_shot_is_the_support_feature(self, rng):
        feats = rng.normal(size=(3, 4))
        protos = compute_prototypes(feats, np.array([0, 1, 2]), 3)
        assert np.array_equal(protos, feats)

    def test_opposite_vectors_cancel(self, rng):
        v = rng.normal(size=5)
        protos = compute_prototypes(np.stack([v, -v]), np.array([0, 0]), 1)
        assert np.allclose(protos[0], 0.0, atol=1e-15)

    def test_matches_direct_mean(self, rng):
        feats = rng.normal(size=(6, 3))
        labels = np.array([0, 0, 0, 1, 1, 1])
        protos = compute_prototypes(feats, labels, 2)
        assert np.allclose(protos[0], feats[:3].sum(axis=0) / 3)
        assert np.allclose(protos[1], feats[3:].sum(axis=0) / 3)

    def test_empty_class(self, rng):
        with pytest.raises(ValueError):
            compute_prototypes(rng.normal(size=(2, 3)), np.array([0, 0]), 2)


class TestDistances:
    def test_coincident_point(self):
        q = np.array([[1.0, 2.0]])
        assert distances(q, q)[0, 0] == 0.0

    def test_hand_values(self):
        q = np.array([[0.0, 0.0]])
        t = np.array([[3.0, 4.0]])
        assert distances(q, t, "sq_euclidean")[0, 0] == pytest.approx(25.0)
        assert distances(q, t, "euclidean")[0, 0] == pytest.approx(5.0)

    def test_permuting_prototypes_permutes_columns(self, rng):
        q = rng.normal(size=(4, 3))
        t = rng.normal(size=(5, 3))
        perm = rng.permutation(5)
        assert np.array_equal(distances(q, t)[:, perm], distances(q, t[perm]))

    def test_dim_mismatch(self):
        with pytest.raises(ValueError):
            distances(np.zeros((1, 2)), np.zeros((1, 3)))


class TestPosterior:
    def test_constant_row_is_uniform(self):
        for c in (0.0, 3.7, 1e6):
            p = posterior(np.full(5, c))
            assert np.allclose(p, 0.2)

    def test_hand_softmax(self):
        p = posterior(np.array([0.0, np.log(3)]))
        assert np.allclose(p, [0.75, 0.25])

    def test_shift_invariance(self, rng):
        row = rng.uniform(0, 10, size=7)
        assert np.abs(posterior(row + 1000.0) - posterior(row)).max() < 1e-12

    def test_huge_distances_stay_finite(self):
        p = posterior(np.array([1e308, 1e308, 0.0]))
        assert np.isfinite(p).all() and p.sum() == pytest.approx(1.0)

    @settings(max_examples=300, deadline=None)
    @given(finite_rows)
    def test_simplex_property(self, row):
        p = posterior(row)
        assert abs(p.sum() - 1.0) < 1e-9
        assert (p > 0).all() and (p < 1.0 + 1e-12).all()

    def test_monotonicity_in_one_distance(self, rng):
        row = rng.uniform(0, 5, size=6)
        p0 = posterior(row)
        row2 = row.copy()
        row2[2] -= 0.5
        p1 = posterior(row2)
        assert p1[2] > p0[2]


class TestCertainty:
    def test_uniform(self):
        assert certainty(np.full(5, 0.2)) == pytest.approx(0.2)

    def test_hand_value(self):
        assert certainty(np.array([0.75, 0.25])) == pytest.approx(0.75)

    def test_permutation_invariant(self, rng):
        p = posterior(rng.uniform(0, 3, size=8))
        assert certainty(p) == certainty(p[rng.permutation(8)])

    @settings(max_examples=200, deadline=None)
    @given(finite_rows)
    def test_lower_bound_one_over_n(self, row):
        p = posterior(row)
        assert certainty(p) >= 1.0 / len(row) - 1e-12

    def test_equality_iff_uniform(self):
        n = 4
        assert certainty(posterior(np.zeros(n))) == pytest.approx(1.0 / n, abs=1e-12)
        assert certainty(posterior(np.array([0.0, 0.1, 0.0, 0.0]))) > 1.0 / n + 1e-12
