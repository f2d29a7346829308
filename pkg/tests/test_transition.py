import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from detect_correct.errors import EmptyEvidenceError
from detect_correct.nn import backward_from_logits, ce_loss_per_sample, forward, forward_with_cache, init_model
from detect_correct.noise import NoiseSpec, ground_truth_matrix
from detect_correct.transition import (
    TransitionParams,
    corrected_distribution,
    init_from_predictions,
    matrix_error,
    params_from_matrix,
    read_matrix_csv,
    selective_logit_grad,
    selective_loss,
    transition_gradient,
    uniform_matrix,
    update_transition,
    write_matrix_csv,
)
from fdcheck import max_rel_error, numeric_grad
from oracles import random_probs, random_stochastic, simulate_flagged

T2 = np.array([[0.8, 0.2], [0.2, 0.8]])


class TestInit:
    def test_single_count(self):
        t = init_from_predictions([2], [5], [1], 10, blend=0.0)
        expected = np.full((10, 10), 0.1)
        expected[2] = np.eye(10)[5]
        np.testing.assert_array_equal(t, expected)

    def test_unflagged_ignored(self):
        a = init_from_predictions([0, 1, 2], [0, 2, 1], [1, 0, 0], 3, blend=0.0)
        b = init_from_predictions([0], [0], [1], 3, blend=0.0)
        np.testing.assert_array_equal(a, b)

    def test_blend_positive(self):
        t = init_from_predictions([0], [1], [1], 3)
        assert np.all(t > 0)
        np.testing.assert_allclose(t.sum(axis=1), 1.0, atol=1e-12)
        assert t[0, 1] == pytest.approx(0.99 + 0.01 / 3)

    def test_empty_evidence(self):
        with pytest.raises(EmptyEvidenceError):
            init_from_predictions([0, 1], [1, 0], [0, 0], 2)

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            init_from_predictions([0, 1], [1], [1, 1], 2)

    def test_recovers_pair_matrix(self):
        t_true = ground_truth_matrix(NoiseSpec("pair", 0.2), 10)
        clean, observed = simulate_flagged(t_true, 1000, seed=0)
        t = init_from_predictions(clean, observed, np.ones(1000), 10)
        assert matrix_error(t, t_true) <= 0.05


class TestParams:
    def test_round_trip(self):
        t = 0.99 * np.eye(4) + 0.01 * uniform_matrix(4)
        np.testing.assert_allclose(params_from_matrix(t).matrix, t, atol=1e-9)

    def test_uniform(self):
        p = params_from_matrix(uniform_matrix(3))
        assert np.all(p.scores == p.scores[0, 0])
        np.testing.assert_allclose(p.matrix, 1 / 3)

    def test_zero_entry(self):
        with pytest.raises(ValueError):
            params_from_matrix(np.eye(2))

    @settings(max_examples=50, deadline=None)
    @given(seed=st.integers(0, 2**31), c=st.integers(2, 12))
    def test_random_round_trip(self, seed, c):
        t = random_stochastic(c, np.random.default_rng(seed))
        assert np.max(np.abs(params_from_matrix(t).matrix - t)) < 1e-9


class TestCorrectedDistribution:
    def test_identity(self):
        p = np.array([0.1, 0.6, 0.3])
        np.testing.assert_array_equal(corrected_distribution(np.eye(3), p), p)

    def test_hand(self):
        np.testing.assert_allclose(corrected_distribution(T2, [0.9, 0.1]), [0.74, 0.26])

    @settings(max_examples=50, deadline=None)
    @given(seed=st.integers(0, 2**31), c=st.integers(2, 12))
    def test_simplex(self, seed, c):
        rng = np.random.default_rng(seed)
        q = corrected_distribution(random_stochastic(c, rng), random_probs(1, c, rng)[0])
        assert np.all(q >= 0)
        assert abs(q.sum() - 1) < 1e-12


class TestSelectiveLoss:
    def test_clean_branch(self):
        assert selective_loss([[0.2, 0.8]], [1], [0], T2)[0] == pytest.approx(0.2231436, abs=1e-7)

    def test_corrected_branch(self):
        assert selective_loss([[0.9, 0.1]], [1], [1], T2)[0] == pytest.approx(1.34707, abs=1e-5)

    def test_unflagged_is_ce_exactly(self):
        rng = np.random.default_rng(0)
        p, y = random_probs(20, 5, rng), rng.integers(0, 5, 20)
        np.testing.assert_array_equal(selective_loss(p, y, np.zeros(20), random_stochastic(5, rng)),
                                      ce_loss_per_sample(p, y))

    @settings(max_examples=50, deadline=None)
    @given(seed=st.integers(0, 2**31), c=st.integers(2, 10), b=st.integers(1, 30))
    def test_identity_matches_ce(self, seed, c, b):
        rng = np.random.default_rng(seed)
        p, y = random_probs(b, c, rng), rng.integers(0, c, b)
        flags = rng.integers(0, 2, b)
        np.testing.assert_allclose(selective_loss(p, y, flags, np.eye(c)),
                                   ce_loss_per_sample(p, y), rtol=0, atol=1e-12)

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            selective_loss([[0.5, 0.5]], [0, 1], [0], T2)


def _mean_selective(model, x, y, flags, params):
    return float(np.mean(selective_loss(forward(model, x), y, flags, params.matrix)))


class TestGradients:
    def test_transition_fd(self):
        rng = np.random.default_rng(1)
        p, y = random_probs(6, 3, rng), rng.integers(0, 3, 6)
        flags = np.array([1, 0, 1, 1, 0, 1])
        params = TransitionParams(rng.standard_normal((3, 3)))
        g = transition_gradient(p, y, flags, params)
        num = numeric_grad(lambda: float(np.mean(selective_loss(p, y, flags, params.matrix))),
                           [params.scores])
        assert max_rel_error([g], num) < 1e-4

    def test_model_fd(self):
        rng = np.random.default_rng(2)
        model = init_model([5, 4, 3], 0)
        x, y = rng.standard_normal((8, 5)), rng.integers(0, 3, 8)
        flags = rng.integers(0, 2, 8)
        params = TransitionParams(rng.standard_normal((3, 3)))
        probs, acts = forward_with_cache(model, x)
        g = backward_from_logits(model, acts, selective_logit_grad(probs, y, flags, params.matrix))
        num = numeric_grad(lambda: _mean_selective(model, x, y, flags, params), model.parameters())
        assert max_rel_error(g.parameters(), num) < 1e-4

    def test_no_flags_zero(self):
        rng = np.random.default_rng(3)
        g = transition_gradient(random_probs(5, 4, rng), rng.integers(0, 4, 5), np.zeros(5),
                                TransitionParams(rng.standard_normal((4, 4))))
        assert np.all(g == 0)

    def test_weights_linear(self):
        rng = np.random.default_rng(4)
        p, y = random_probs(6, 3, rng), rng.integers(0, 3, 6)
        params = TransitionParams(rng.standard_normal((3, 3)))
        a = transition_gradient(p, y, np.ones(6), params)
        b = transition_gradient(p, y, np.ones(6), params, weights=np.full(6, 2.0))
        np.testing.assert_allclose(b, 2 * a, rtol=1e-13)

    def test_clean_rows_plain_ce(self):
        rng = np.random.default_rng(5)
        p, y = random_probs(4, 3, rng), np.array([0, 1, 2, 0])
        dz = selective_logit_grad(p, y, np.zeros(4), random_stochastic(3, rng))
        np.testing.assert_array_equal(dz, p - np.eye(3)[y])


class TestUpdate:
    def test_zero_grad(self):
        params = TransitionParams(np.log(random_stochastic(3, np.random.default_rng(0))))
        before = params.matrix
        update_transition(params, np.zeros((3, 3)), 1e-4)
        np.testing.assert_array_equal(params.matrix, before)

    def test_positive_lr(self):
        with pytest.raises(ValueError):
            update_transition(TransitionParams(np.zeros((2, 2))), np.zeros((2, 2)), 0.0)

    def test_descent_and_row_sums(self):
        rng = np.random.default_rng(6)
        p, y = random_probs(32, 4, rng), rng.integers(0, 4, 32)
        flags = np.ones(32)
        params = params_from_matrix(0.97 * np.roll(np.eye(4), 1, axis=1) + 0.03 * uniform_matrix(4))
        losses = [float(np.mean(selective_loss(p, y, flags, params.matrix)))]
        for _ in range(500):
            update_transition(params, transition_gradient(p, y, flags, params), 1e-2)
            np.testing.assert_allclose(params.matrix.sum(axis=1), 1.0, atol=1e-9)
            losses.append(float(np.mean(selective_loss(p, y, flags, params.matrix))))
        assert np.all(np.diff(losses) < 0)


class TestMatrixError:
    def test_identical(self):
        assert matrix_error(T2, T2) == 0.0

    def test_identity_vs_uniform(self):
        assert matrix_error(np.eye(2), uniform_matrix(2)) == pytest.approx(0.5)

    def test_symmetric(self):
        rng = np.random.default_rng(0)
        a, b = random_stochastic(5, rng), random_stochastic(5, rng)
        assert matrix_error(a, b) == matrix_error(b, a)

    def test_shape(self):
        with pytest.raises(ValueError):
            matrix_error(np.eye(2), np.eye(3))

    def test_csv_round_trip(self, tmp_path):
        t = random_stochastic(4, np.random.default_rng(1))
        write_matrix_csv(t, tmp_path / "t.csv")
        assert read_matrix_csv(tmp_path / "t.csv").tobytes() == t.tobytes()
