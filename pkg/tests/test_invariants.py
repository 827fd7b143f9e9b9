"""v-values, granule invariants, and the full pairwise matrix."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_binary_dataset
from oracles import domination_fraction, mc_pair_integral

from lugsi import (
    DataError,
    Dataset,
    MeasureSpec,
    granule_v_vectors,
    kmeans_granulate,
    unit_granule_invariants,
    v_matrix,
    v_value,
)


class TestVValue:
    def test_origin_is_one(self):
        assert v_value(np.zeros(4), MeasureSpec.uniform()) == 1.0

    def test_product_formula(self):
        assert v_value([0.5, 0.5], MeasureSpec.uniform()) == pytest.approx(0.25)

    def test_empirical_domination_count(self):
        refs = np.array([[0.2, 0.4], [0.5, 0.5], [0.1, 0.9]])
        measure = MeasureSpec.empirical(refs)
        point = [0.2, 0.4]
        assert v_value(point, measure) == pytest.approx(2.0 / 3.0)
        assert v_value(point, measure) == pytest.approx(domination_fraction(point, refs))

    def test_outside_cube_rejected_for_uniform(self):
        with pytest.raises(DataError, match="unit cube"):
            v_value([1.5, 0.2], MeasureSpec.uniform())

    def test_empirical_requires_references(self):
        with pytest.raises(DataError):
            MeasureSpec("empirical")

    @given(st.lists(st.floats(0, 1), min_size=1, max_size=6), st.integers(0, 5), st.floats(0, 1))
    @settings(max_examples=50, deadline=None)
    def test_uniform_monotone_in_every_coordinate(self, coords, index, bump):
        point = np.array(coords)
        j = index % point.size
        raised = point.copy()
        raised[j] = min(1.0, raised[j] + bump)
        measure = MeasureSpec.uniform()
        assert v_value(raised, measure) <= v_value(point, measure) + 1e-12

    def test_matches_closed_form(self, rng):
        point = rng.random(5)
        assert v_value(point, MeasureSpec.uniform()) == pytest.approx(
            np.prod(1.0 - point), rel=1e-12
        )


class TestGranuleVVectors:
    def test_single_granule_is_full_vector(self, rng):
        data = random_binary_dataset(rng, 15, 3)
        g = kmeans_granulate(data, 1, seed=0)
        invs = granule_v_vectors(data, g, MeasureSpec.uniform())
        assert len(invs) == 1
        expected = np.prod(1.0 - data.features, axis=1)
        np.testing.assert_allclose(invs[0].v, expected[g.granule_members[0]], rtol=1e-12)

    def test_all_points_at_origin(self):
        data = Dataset(np.zeros((6, 2)), np.array([1, 0, 1, 1, 0, 1]))
        g = kmeans_granulate(data, 1, seed=0)
        invs = granule_v_vectors(data, g, MeasureSpec.uniform())
        np.testing.assert_array_equal(invs[0].v, np.ones(6))
        assert invs[0].target == pytest.approx(4.0)

    def test_targets_match_bruteforce_loop(self, rng):
        data = random_binary_dataset(rng, 10, 2)
        g = kmeans_granulate(data, 3, seed=1)
        invs = granule_v_vectors(data, g, MeasureSpec.uniform())
        for k, members in enumerate(g.granule_members):
            total = 0.0
            for i in members:
                total += np.prod(1.0 - data.features[i]) * data.labels[i]
            assert invs[k].target == pytest.approx(total, rel=1e-12)

    def test_entries_lie_in_unit_interval(self, rng):
        data = random_binary_dataset(rng, 30, 4)
        g = kmeans_granulate(data, 5, seed=2)
        for measure in (MeasureSpec.uniform(), MeasureSpec.empirical(data.features)):
            for inv in granule_v_vectors(data, g, measure):
                assert inv.v.min() >= 0.0 and inv.v.max() <= 1.0

    def test_unit_invariants(self, rng):
        data = random_binary_dataset(rng, 20, 3)
        g = kmeans_granulate(data, 4, seed=3)
        invs = unit_granule_invariants(data, g)
        for k, members in enumerate(g.granule_members):
            np.testing.assert_array_equal(invs[k].v, np.ones(members.size))
            assert invs[k].target == pytest.approx(float(data.labels[members].sum()))


class TestVMatrix:
    def test_one_dimensional_pair(self):
        data = Dataset(np.array([[0.2], [0.5]]), np.array([0, 1]))
        V = v_matrix(data, MeasureSpec.uniform())
        assert V[0, 1] == pytest.approx(0.5)
        assert V[1, 0] == pytest.approx(0.5)

    def test_diagonal_at_origin(self):
        data = Dataset(np.zeros((3, 4)), np.array([0, 1, 0]))
        V = v_matrix(data, MeasureSpec.uniform())
        np.testing.assert_allclose(np.diag(V), np.ones(3))

    def test_against_monte_carlo_oracle(self, rng):
        data = random_binary_dataset(rng, 5, 3)
        V = v_matrix(data, MeasureSpec.uniform())
        for i in range(5):
            for j in range(i, 5):
                estimate, se = mc_pair_integral(
                    data.features[i], data.features[j], samples=1_000_000, seed=17 + i * 5 + j
                )
                assert abs(V[i, j] - estimate) <= 3.0 * se + 1e-9, (i, j)

    def test_symmetric_and_psd(self, rng):
        data = random_binary_dataset(rng, 20, 3)
        for measure in (MeasureSpec.uniform(), MeasureSpec.empirical(data.features)):
            V = v_matrix(data, measure)
            np.testing.assert_array_equal(V, V.T)
            eigenvalues = np.linalg.eigvalsh(V)
            assert eigenvalues.min() >= -1e-10

    def test_empirical_counts(self):
        data = Dataset(np.array([[0.1, 0.1], [0.9, 0.9]]), np.array([0, 1]))
        refs = np.array([[0.5, 0.5], [1.0, 1.0]])
        V = v_matrix(data, MeasureSpec.empirical(refs))
        # both refs dominate point 0; only (1,1) dominates point 1
        assert V[0, 0] == pytest.approx(1.0)
        assert V[0, 1] == pytest.approx(0.5)
        assert V[1, 1] == pytest.approx(0.5)

    def test_row_cap(self, rng):
        data = random_binary_dataset(rng, 40, 2)
        with pytest.raises(DataError, match="cap"):
            v_matrix(data, MeasureSpec.uniform(), max_rows=30)


class TestRankOneIdentity:
    def test_compressed_equals_materialized(self, rng):
        data = random_binary_dataset(rng, 18, 4)
        g = kmeans_granulate(data, 3, seed=4)
        invs = granule_v_vectors(data, g, MeasureSpec.uniform())
        for k, members in enumerate(g.granule_members):
            Xk = data.features[members]
            v = invs[k].v
            lhs = Xk.T @ np.outer(v, v) @ Xk
            u = Xk.T @ v
            rhs = np.outer(u, u)
            np.testing.assert_allclose(lhs, rhs, rtol=1e-12, atol=1e-14)
