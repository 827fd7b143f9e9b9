"""Closed-form solver contracts, degenerate modes, and oracle cross-checks."""

import numpy as np
import pytest

from conftest import random_binary_dataset, singleton_granulation
from oracles import (
    dense_kernel_fit,
    dense_linear_fit,
    explicit_objective_kernel,
    explicit_objective_linear,
    fd_gradient_norm,
)

from lugsi import (
    DataError,
    Dataset,
    KernelSpec,
    MeasureSpec,
    NumericError,
    decision_value,
    decision_values,
    fit_kernel_lugsi,
    fit_linear_lugsi,
    fit_lssvm,
    fit_vsvm,
    granule_v_vectors,
    gram_block,
    kmeans_granulate,
    load_model,
    predict_label,
    predict_labels,
    save_model,
    solve_spd,
    unit_granule_invariants,
    v_value,
)
from lugsi.solver import model_document
from lugsi.serialize import dump_document


def fitted_linear(seed, l=14, n=3, m=3, gamma=0.3):
    data = random_binary_dataset(np.random.default_rng(seed), l, n)
    g = kmeans_granulate(data, m, seed=seed)
    invs = granule_v_vectors(data, g, MeasureSpec.uniform())
    model, diag = fit_linear_lugsi(data, g, invs, gamma)
    return data, g, invs, model, diag


class TestSolveSpd:
    def test_identity(self, rng):
        rhs = rng.standard_normal(5)
        np.testing.assert_allclose(solve_spd(np.eye(5), rhs), rhs)

    def test_scaled_identity(self):
        np.testing.assert_allclose(
            solve_spd(2.0 * np.eye(2), np.array([4.0, 6.0])), [2.0, 3.0]
        )

    def test_random_spd_residual(self, rng):
        B = rng.standard_normal((10, 10))
        M = B @ B.T + 0.5 * np.eye(10)
        rhs = rng.standard_normal((10, 2))
        z = solve_spd(M, rhs)
        residual = np.linalg.norm(M @ z - rhs)
        assert residual <= 1e-8 * np.linalg.norm(rhs)

    def test_non_finite_rejected(self):
        with pytest.raises(NumericError, match="non-finite"):
            solve_spd(np.array([[np.inf, 0.0], [0.0, 1.0]]), np.ones(2))

    def test_indefinite_reports_minor(self):
        M = np.diag([1.0, -1.0])
        with pytest.raises(NumericError, match="minor"):
            solve_spd(M, np.ones(2))


class TestFitLinear:
    def test_all_labels_one(self, rng):
        data = Dataset(rng.random((10, 3)), np.ones(10, dtype=int))
        g = kmeans_granulate(data, 3, seed=0)
        invs = granule_v_vectors(data, g, MeasureSpec.uniform())
        model, diag = fit_linear_lugsi(data, g, invs, gamma=0.5)
        np.testing.assert_array_equal(model.w, np.zeros(3))
        assert model.b == 1.0
        assert diag.objective_value == pytest.approx(0.0, abs=1e-20)

    def test_all_labels_zero(self, rng):
        data = Dataset(rng.random((10, 3)), np.zeros(10, dtype=int))
        g = kmeans_granulate(data, 2, seed=0)
        invs = granule_v_vectors(data, g, MeasureSpec.uniform())
        model, _ = fit_linear_lugsi(data, g, invs, gamma=0.5)
        np.testing.assert_array_equal(model.w, np.zeros(3))
        assert model.b == 0.0

    def test_spec_instance_matches_dense_oracle(self):
        gen = np.random.default_rng(123)
        data = random_binary_dataset(gen, 6, 2)
        g = kmeans_granulate(data, 2, seed=0)
        invs = granule_v_vectors(data, g, MeasureSpec.uniform())
        model, _ = fit_linear_lugsi(data, g, invs, gamma=0.1)
        w, b = dense_linear_fit(
            data.features, data.labels, g.granule_members, [inv.v for inv in invs], 0.1
        )
        np.testing.assert_allclose(model.w, w, rtol=1e-10, atol=1e-12)
        assert model.b == pytest.approx(b, rel=1e-10, abs=1e-12)

    def test_half_solutions_compose(self, rng):
        _, _, _, model, _ = fitted_linear(5)
        np.testing.assert_allclose(model.w, model.w_b - model.b * model.w_c, rtol=1e-12)

    def test_objective_matches_explicit_materialization(self):
        data, g, invs, model, diag = fitted_linear(7)
        explicit = explicit_objective_linear(
            data.features, data.labels, g.granule_members,
            [inv.v for inv in invs], model.gamma, model.w, model.b,
        )
        assert diag.objective_value == pytest.approx(explicit, rel=1e-12)

    def test_stationarity_via_independent_fd(self):
        data, g, invs, model, diag = fitted_linear(9)

        def objective(theta):
            return explicit_objective_linear(
                data.features, data.labels, g.granule_members,
                [inv.v for inv in invs], model.gamma, theta[:-1], theta[-1],
            )

        norm = fd_gradient_norm(objective, np.append(model.w, model.b))
        assert norm <= 1e-5 * (1.0 + abs(diag.objective_value))
        assert diag.gradient_norm <= 1e-5 * (1.0 + abs(diag.objective_value))

    def test_fit_is_global_minimum_probe(self):
        data, g, invs, model, diag = fitted_linear(11)
        gen = np.random.default_rng(0)
        theta = np.append(model.w, model.b)
        for _ in range(100):
            direction = gen.standard_normal(theta.size)
            direction *= gen.uniform(0.0, 1.0) / max(np.linalg.norm(direction), 1e-12)
            perturbed = theta + direction
            value = explicit_objective_linear(
                data.features, data.labels, g.granule_members,
                [inv.v for inv in invs], model.gamma, perturbed[:-1], perturbed[-1],
            )
            assert value >= diag.objective_value - 1e-10

    def test_bias_fallback_on_degenerate_system(self):
        # every row has a coordinate at 1, so every uniform v-value is 0
        features = np.array([[1.0, 0.2], [1.0, 0.8], [0.3, 1.0], [0.9, 1.0]])
        data = Dataset(features, np.array([0, 1, 0, 1]))
        g = kmeans_granulate(data, 2, seed=0)
        invs = granule_v_vectors(data, g, MeasureSpec.uniform())
        model, diag = fit_linear_lugsi(data, g, invs, gamma=0.1)
        assert diag.bias_fallback
        assert model.b == 0.0

    def test_gamma_must_be_positive(self):
        data, g, invs, _, _ = fitted_linear(13)
        with pytest.raises(DataError, match="gamma"):
            fit_linear_lugsi(data, g, invs, gamma=0.0)

    def test_misaligned_invariants_rejected(self):
        data, g, invs, _, _ = fitted_linear(15)
        with pytest.raises(DataError):
            fit_linear_lugsi(data, g, invs[:-1], gamma=0.1)

    def test_deterministic_serialized_bytes(self):
        first = fitted_linear(17)[3]
        second = fitted_linear(17)[3]
        assert dump_document(model_document(first)) == dump_document(model_document(second))


class TestFitKernel:
    def test_all_labels_one(self, rng):
        data = Dataset(rng.random((8, 2)), np.ones(8, dtype=int))
        g = kmeans_granulate(data, 2, seed=0)
        invs = granule_v_vectors(data, g, MeasureSpec.uniform())
        model, _ = fit_kernel_lugsi(data, g, invs, KernelSpec("rbf", delta=1.0), gamma=0.5)
        np.testing.assert_array_equal(model.A, np.zeros(8))
        assert model.c == 1.0

    def test_spec_instance_matches_dense_oracle(self):
        gen = np.random.default_rng(321)
        data = random_binary_dataset(gen, 8, 2)
        g = kmeans_granulate(data, 2, seed=0)
        invs = granule_v_vectors(data, g, MeasureSpec.uniform())
        spec = KernelSpec("rbf", delta=1.0)
        model, _ = fit_kernel_lugsi(data, g, invs, spec, gamma=0.5)
        K = gram_block(spec, data.features, data.features)
        A, c = dense_kernel_fit(
            K, data.labels, g.granule_members, [inv.v for inv in invs], 0.5
        )
        np.testing.assert_allclose(model.A, A, rtol=1e-10, atol=1e-12)
        assert model.c == pytest.approx(c, rel=1e-10, abs=1e-12)

    def test_stationarity_via_independent_fd(self):
        gen = np.random.default_rng(55)
        data = random_binary_dataset(gen, 12, 3)
        g = kmeans_granulate(data, 3, seed=1)
        invs = granule_v_vectors(data, g, MeasureSpec.uniform())
        spec = KernelSpec("rbf", delta=0.8)
        model, diag = fit_kernel_lugsi(data, g, invs, spec, gamma=0.4)
        K = gram_block(spec, data.features, data.features)

        def objective(theta):
            return explicit_objective_kernel(
                K, data.labels, g.granule_members,
                [inv.v for inv in invs], model.gamma, theta[:-1], theta[-1],
            )

        norm = fd_gradient_norm(objective, np.append(model.A, model.c))
        assert norm <= 1e-5 * (1.0 + abs(diag.objective_value))
        assert diag.gradient_norm <= 1e-5 * (1.0 + abs(diag.objective_value))

    def test_linear_kernel_labels_match_linear_solver(self):
        # the two parameterizations regularize different norms, so their
        # decision functions only coincide in the small-gamma limit with
        # enough granules to pin the affine fit; there the training-set
        # labels must agree
        for seed in range(20):
            gen = np.random.default_rng(1000 + seed)
            l, n = 24, 3
            X = gen.random((l, n))
            direction = gen.standard_normal(n)
            direction /= np.linalg.norm(direction)
            score = X @ direction
            score -= np.median(score)
            keep = np.abs(score) > 0.1
            if keep.sum() < 10 or len(set((score[keep] > 0).tolist())) < 2:
                continue
            data = Dataset(X[keep], (score[keep] > 0).astype(int))
            g = kmeans_granulate(data, data.l, seed=seed)
            invs = granule_v_vectors(data, g, MeasureSpec.uniform())
            linear_model, _ = fit_linear_lugsi(data, g, invs, gamma=1e-8)
            kernel_model, _ = fit_kernel_lugsi(
                data, g, invs, KernelSpec("linear"), gamma=1e-8
            )
            values_linear = decision_values(linear_model, data.features)
            values_kernel = decision_values(kernel_model, data.features)
            np.testing.assert_allclose(values_linear, values_kernel, atol=1e-3)
            np.testing.assert_array_equal(
                predict_labels(linear_model, data.features),
                predict_labels(kernel_model, data.features),
            )

    def test_row_cap(self, rng):
        data = random_binary_dataset(rng, 30, 2)
        g = kmeans_granulate(data, 2, seed=0)
        invs = granule_v_vectors(data, g, MeasureSpec.uniform())
        with pytest.raises(DataError, match="cap"):
            fit_kernel_lugsi(data, g, invs, KernelSpec("rbf", delta=1.0), 0.1, max_system_rows=20)


class TestLssvm:
    def test_equals_singleton_unit_granulation(self):
        for seed in range(20):
            gen = np.random.default_rng(2000 + seed)
            data = random_binary_dataset(gen, int(gen.integers(5, 25)), int(gen.integers(1, 5)))
            gamma = float(gen.uniform(0.01, 2.0))
            g = singleton_granulation(data)
            invs = unit_granule_invariants(data, g)
            reference, _ = fit_linear_lugsi(data, g, invs, gamma)
            model, _ = fit_lssvm(data, gamma)
            np.testing.assert_allclose(model.w, reference.w, rtol=1e-10, atol=1e-12)
            assert model.b == pytest.approx(reference.b, rel=1e-10, abs=1e-12)

    def test_all_labels_one(self, rng):
        data = Dataset(rng.random((9, 2)), np.ones(9, dtype=int))
        model, _ = fit_lssvm(data, gamma=0.3)
        np.testing.assert_array_equal(model.w, np.zeros(2))
        assert model.b == 1.0

    def test_large_gamma_limit(self):
        data = Dataset(np.array([[0.1], [0.9]]), np.array([0, 1]))
        gamma = 1e6
        model, _ = fit_lssvm(data, gamma)
        # oracle: closed form of the ridge normal equations at this gamma
        X, y = data.features, data.labels.astype(float)
        l = data.l
        M = X.T @ X + gamma * l * np.eye(1)
        w_b = np.linalg.solve(M, X.T @ y)
        w_c = np.linalg.solve(M, X.T @ np.ones(l))
        b = (y.sum() - (X @ w_b).sum()) / (l - (X @ w_c).sum())
        np.testing.assert_allclose(model.w, w_b - b * w_c, rtol=1e-10)
        assert model.b == pytest.approx(b, rel=1e-10)
        assert abs(model.w[0]) < 1e-3
        assert model.b == pytest.approx(y.mean(), abs=1e-3)

    def test_kernel_mode_equals_granulated_fit(self):
        gen = np.random.default_rng(77)
        data = random_binary_dataset(gen, 12, 2)
        spec = KernelSpec("rbf", delta=0.7)
        gamma = 0.2
        g = singleton_granulation(data)
        invs = unit_granule_invariants(data, g)
        reference, _ = fit_kernel_lugsi(data, g, invs, spec, gamma)
        model, _ = fit_lssvm(data, gamma, kernel=spec)
        np.testing.assert_allclose(model.A, reference.A, rtol=1e-10, atol=1e-12)
        assert model.c == pytest.approx(reference.c, rel=1e-10, abs=1e-12)


class TestVsvm:
    def test_identity_matrix_matches_lssvm_convention(self):
        # the granulated regularizer accumulates over granules, so the
        # identity-weighted equivalence holds at gamma_vsvm = l * gamma
        for seed in range(10):
            gen = np.random.default_rng(3000 + seed)
            data = random_binary_dataset(gen, int(gen.integers(5, 20)), 3)
            gamma = float(gen.uniform(0.05, 1.0))
            lssvm_model, _ = fit_lssvm(data, gamma)
            vsvm_model, _ = fit_vsvm(data, np.eye(data.l), gamma * data.l)
            np.testing.assert_allclose(vsvm_model.w, lssvm_model.w, rtol=1e-10, atol=1e-12)
            assert vsvm_model.b == pytest.approx(lssvm_model.b, rel=1e-10, abs=1e-12)

    def test_rank_one_v_matches_single_granule(self):
        for seed in range(20):
            gen = np.random.default_rng(4000 + seed)
            data = random_binary_dataset(gen, int(gen.integers(5, 25)), int(gen.integers(1, 5)))
            gamma = float(gen.uniform(0.01, 2.0))
            g = kmeans_granulate(data, 1, seed=0)
            invs = granule_v_vectors(data, g, MeasureSpec.uniform())
            reference, _ = fit_linear_lugsi(data, g, invs, gamma)
            v_full = np.array([v_value(x, MeasureSpec.uniform()) for x in data.features])
            model, _ = fit_vsvm(data, np.outer(v_full, v_full), gamma)
            np.testing.assert_allclose(model.w, reference.w, rtol=1e-10, atol=1e-12)
            assert model.b == pytest.approx(reference.b, rel=1e-10, abs=1e-12)

    def test_all_labels_one(self, rng):
        data = Dataset(rng.random((7, 2)), np.ones(7, dtype=int))
        model, _ = fit_vsvm(data, np.eye(7), gamma=0.4)
        np.testing.assert_array_equal(model.w, np.zeros(2))
        assert model.b == 1.0

    def test_non_psd_rejected(self, rng):
        data = random_binary_dataset(rng, 6, 2)
        V = np.eye(6)
        V[0, 0] = -1.0
        with pytest.raises(DataError, match="positive semidefinite"):
            fit_vsvm(data, V, gamma=0.1)

    def test_asymmetric_rejected(self, rng):
        data = random_binary_dataset(rng, 5, 2)
        V = np.eye(5)
        V[0, 1] = 0.5
        with pytest.raises(DataError, match="symmetric"):
            fit_vsvm(data, V, gamma=0.1)

    def test_kernel_mode_stationary(self, rng):
        data = random_binary_dataset(rng, 10, 2)
        spec = KernelSpec("rbf", delta=1.0)
        V = np.diag(np.linspace(0.5, 1.5, 10))
        model, diag = fit_vsvm(data, V, gamma=0.3, kernel=spec)
        assert diag.gradient_norm <= 1e-5 * (1.0 + abs(diag.objective_value))


class TestPrediction:
    def test_constant_linear_model(self):
        _, _, _, model, _ = fitted_linear(19)
        constant = type(model)(
            w=np.zeros(model.w.shape[0]), b=1.0,
            w_b=np.zeros(model.w.shape[0]), w_c=np.zeros(model.w.shape[0]),
            gamma=1.0, m=1, seed=0, scaling=model.scaling,
        )
        assert decision_value(constant, np.full(model.w.shape[0], 0.3)) == 1.0

    def test_kernel_constant_offset(self, rng):
        data = random_binary_dataset(rng, 6, 2)
        g = kmeans_granulate(data, 2, seed=0)
        invs = granule_v_vectors(data, g, MeasureSpec.uniform())
        model, _ = fit_kernel_lugsi(data, g, invs, KernelSpec("rbf", delta=1.0), 0.5)
        constant = type(model)(
            A=np.zeros(6), c=0.3, A_b=np.zeros(6), A_c=np.zeros(6),
            training_points=model.training_points, kernel=model.kernel,
            gamma=1.0, m=1, seed=0, scaling=model.scaling,
        )
        assert decision_value(constant, data.features[0]) == pytest.approx(0.3)

    def test_threshold_rule(self):
        _, _, _, model, _ = fitted_linear(21, n=1)
        # synthesize models whose decision value is exactly the target
        for value, label in ((0.5, 1), (0.49, 0), (0.51, 1)):
            stub = type(model)(
                w=np.zeros(1), b=value, w_b=np.zeros(1), w_c=np.zeros(1),
                gamma=1.0, m=1, seed=0, scaling=model.scaling,
            )
            assert predict_label(stub, np.array([0.2])) == label

    def test_batch_matches_single(self):
        data, _, _, model, _ = fitted_linear(23)
        batch = decision_values(model, data.features)
        for i in range(data.l):
            assert batch[i] == pytest.approx(decision_value(model, data.features[i]), rel=1e-15)

    def test_dimension_mismatch(self):
        _, _, _, model, _ = fitted_linear(25, n=3)
        with pytest.raises(DataError, match="dimension mismatch"):
            decision_value(model, np.ones(4))


class TestSerialization:
    def test_linear_roundtrip_bitwise(self, tmp_path):
        _, _, _, model, _ = fitted_linear(27)
        path = tmp_path / "model.json"
        save_model(model, path)
        loaded = load_model(path)
        assert loaded.w.tobytes() == model.w.tobytes()
        assert loaded.b == model.b
        assert loaded.w_b.tobytes() == model.w_b.tobytes()
        assert loaded.w_c.tobytes() == model.w_c.tobytes()
        assert loaded.scaling.minimum.tobytes() == model.scaling.minimum.tobytes()
        save_model(loaded, tmp_path / "again.json")
        assert (tmp_path / "again.json").read_bytes() == path.read_bytes()

    def test_kernel_roundtrip_bitwise(self, tmp_path, rng):
        data = random_binary_dataset(rng, 9, 3)
        g = kmeans_granulate(data, 3, seed=0)
        invs = granule_v_vectors(data, g, MeasureSpec.uniform())
        model, _ = fit_kernel_lugsi(data, g, invs, KernelSpec("rbf", delta=0.5), 0.2)
        path = tmp_path / "model.json"
        save_model(model, path)
        loaded = load_model(path)
        assert loaded.A.tobytes() == model.A.tobytes()
        assert loaded.c == model.c
        assert loaded.training_points.tobytes() == model.training_points.tobytes()
        assert loaded.kernel == model.kernel
        values_original = decision_values(model, data.features)
        values_loaded = decision_values(loaded, data.features)
        assert values_original.tobytes() == values_loaded.tobytes()
