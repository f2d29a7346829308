import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from detect_correct.data import make_blobs
from detect_correct.nn import init_model
from detect_correct.noise import NoiseSpec, inject_noise
from detect_correct.pretrain import (
    CyclicSchedule,
    LossHistory,
    aggregate_losses,
    lr_at,
    per_sample_losses,
    pretrain,
    read_history_csv,
    write_history_csv,
)


class TestSchedule:
    def test_cycle_start(self):
        assert lr_at(CyclicSchedule(), 0) == 1e-2

    def test_cycle_end(self):
        assert lr_at(CyclicSchedule(), 9) == pytest.approx(1e-3, abs=1e-15)

    def test_interpolation(self):
        assert lr_at(CyclicSchedule(0.01, 0.001, 10), 4) == pytest.approx(0.01 - 4 / 9 * 0.009)

    def test_reset(self):
        s = CyclicSchedule()
        assert lr_at(s, 10) == lr_at(s, 0)

    def test_triangular(self):
        s = CyclicSchedule(0.01, 0.001, 5, "triangular")
        assert [lr_at(s, e) for e in range(5)] == pytest.approx([0.001, 0.0055, 0.01, 0.0055, 0.001])

    @pytest.mark.parametrize("kw", [dict(lr_min=0.02), dict(lr_min=-1.0), dict(cycle_epochs=0),
                                    dict(shape="cosine")])
    def test_invalid(self, kw):
        with pytest.raises(ValueError):
            CyclicSchedule(**kw)

    def test_negative_epoch(self):
        with pytest.raises(ValueError):
            lr_at(CyclicSchedule(), -1)

    @settings(max_examples=80, deadline=None)
    @given(lo=st.floats(1e-6, 1.0), ratio=st.floats(1.0, 100.0), k=st.integers(1, 30),
           e=st.integers(0, 1000), shape=st.sampled_from(["sawtooth", "triangular"]))
    def test_bounded_and_periodic(self, lo, ratio, k, e, shape):
        s = CyclicSchedule(lo * ratio, lo, k, shape)
        lr = lr_at(s, e)
        assert lo - 1e-15 <= lr <= lo * ratio + 1e-15
        assert lr == lr_at(s, e + k)


def _noisy_blobs(seed=0, rate=0.2):
    ds = make_blobs(4, 100, 10, 3.0, seed)
    return inject_noise(ds, NoiseSpec("symmetric", rate), seed)


class TestPretrain:
    def test_history_shape(self):
        ds = _noisy_blobs()
        _, h = pretrain(init_model([10, 8, 4], 0), ds, CyclicSchedule(), 3, 32, 0)
        assert (h.num_samples, h.num_epochs) == (400, 3)

    def test_frozen_zero_output_gives_log_c(self):
        ds = _noisy_blobs()
        m = init_model([10, 8, 4], 0)
        m.weights[-1][:] = 0.0
        _, h = pretrain(m, ds, CyclicSchedule(0.0, 0.0), 2, 50, 0)
        np.testing.assert_allclose(h.losses, np.log(4), rtol=0, atol=1e-12)

    def test_flipped_samples_have_higher_loss(self):
        ds = _noisy_blobs(seed=3)
        _, h = pretrain(init_model([10, 32, 4], 3), ds, CyclicSchedule(), 20, 32, 3)
        final = h.losses[:, -1]
        assert final[ds.flip_mask].mean() > final[~ds.flip_mask].mean()

    def test_columns_are_eval_losses_of_checkpoints(self):
        ds = _noisy_blobs()
        snaps = []
        _, h = pretrain(init_model([10, 8, 4], 0), ds, CyclicSchedule(), 4, 32, 0,
                        callback=lambda e, m: snaps.append(m.copy()))
        for e, m in enumerate(snaps):
            np.testing.assert_allclose(per_sample_losses(m, ds), h.losses[:, e], rtol=0, atol=1e-9)

    def test_deterministic(self):
        ds = _noisy_blobs()
        runs = [pretrain(init_model([10, 8, 4], 1), ds, CyclicSchedule(), 3, 16, 7) for _ in range(2)]
        assert runs[0][1].losses.tobytes() == runs[1][1].losses.tobytes()
        for p, q in zip(runs[0][0].parameters(), runs[1][0].parameters()):
            assert p.tobytes() == q.tobytes()

    def test_seed_changes_batch_order(self):
        ds = _noisy_blobs()
        a = pretrain(init_model([10, 8, 4], 1), ds, CyclicSchedule(), 2, 16, 7)[1]
        b = pretrain(init_model([10, 8, 4], 1), ds, CyclicSchedule(), 2, 16, 8)[1]
        assert not np.array_equal(a.losses, b.losses)

    def test_zero_epochs(self):
        with pytest.raises(ValueError):
            pretrain(init_model([10, 4], 0), _noisy_blobs(), CyclicSchedule(), 0, 16, 0)


class TestHistory:
    @pytest.mark.parametrize("bad", [[[1.0, -0.1]], [[np.nan]], [[np.inf]], [1.0, 2.0]])
    def test_invalid(self, bad):
        with pytest.raises(ValueError):
            LossHistory(np.array(bad))

    def test_csv_round_trip(self, tmp_path):
        h = LossHistory(np.random.default_rng(0).random((5, 3)) * 7)
        write_history_csv(h, tmp_path / "h.csv")
        assert (tmp_path / "h.csv").read_text().splitlines()[0] == "sample_index,epoch,loss"
        assert read_history_csv(tmp_path / "h.csv").losses.tobytes() == h.losses.tobytes()


class TestAggregate:
    def test_single_column(self):
        h = LossHistory(np.array([[0.3], [1.2]]))
        np.testing.assert_array_equal(aggregate_losses(h, 0), [0.3, 1.2])

    def test_constant_row(self):
        assert aggregate_losses(LossHistory(np.full((1, 6), 2.5)), 3)[0] == 2.5

    def test_arithmetic(self):
        assert aggregate_losses(LossHistory(np.array([[1.0, 2, 3, 4]])), 2)[0] == 3.5

    def test_burn_in_too_large(self):
        with pytest.raises(ValueError):
            aggregate_losses(LossHistory(np.ones((2, 3))), 3)

    @settings(max_examples=50, deadline=None)
    @given(a=arrays(np.float64, st.tuples(st.integers(1, 20), st.integers(1, 8)),
                    elements=st.floats(0, 50)),
           data=st.data())
    def test_permutation_equivariant(self, a, data):
        burn = data.draw(st.integers(0, a.shape[1] - 1))
        perm = data.draw(st.permutations(range(a.shape[0])))
        full = aggregate_losses(LossHistory(a), burn)
        np.testing.assert_array_equal(aggregate_losses(LossHistory(a[list(perm)]), burn),
                                      full[list(perm)])
