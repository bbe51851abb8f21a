import numpy as np
import pytest

from gradprune import ParameterError, generate_batch, make_rng, make_task
from gradprune.tasks import CORPUS, target_variance


class TestAddingProblem:
    def test_target_is_sum_of_marked_values(self):
        task = make_task("adding", 12, 5)
        xs, targets = generate_batch(task, make_rng(0))
        for b in range(5):
            marked = np.nonzero(xs[:, b, 1] == 1.0)[0]
            assert marked.size == 2
            assert targets[b, 0] == pytest.approx(xs[marked, b, 0].sum(), abs=1e-6)

    def test_exactly_two_markers(self):
        task = make_task("adding", 20, 64)
        xs, _ = generate_batch(task, make_rng(1))
        counts = (xs[:, :, 1] == 1.0).sum(axis=0)
        np.testing.assert_array_equal(counts, np.full(64, 2))

    def test_fixed_seed_reproduces_batch(self):
        task = make_task("adding", 10, 4)
        xs1, t1 = generate_batch(task, make_rng(42))
        xs2, t2 = generate_batch(task, make_rng(42))
        np.testing.assert_array_equal(xs1, xs2)
        np.testing.assert_array_equal(t1, t2)

    def test_values_in_range(self):
        task = make_task("adding", 16, 32)
        xs, _ = generate_batch(task, make_rng(2))
        assert np.all((xs[:, :, 0] >= -1.0) & (xs[:, :, 0] < 1.0))

    def test_target_variance_near_two_thirds(self):
        # values ~ U(-1, 1): Var(a + b) = 2/3
        task = make_task("adding", 16, 8)
        var = target_variance(task, make_rng(3), n_samples=4000)
        assert 0.5 < var < 0.85


class TestCharLm:
    def test_targets_are_inputs_shifted_by_one(self):
        task = make_task("char-lm", 8, 6)
        xs, targets = generate_batch(task, make_rng(0))
        codes = xs.argmax(axis=2)  # (T, B)
        np.testing.assert_array_equal(codes[1:], targets[:-1])

    def test_one_hot_inputs(self):
        task = make_task("char-lm", 12, 4)
        xs, _ = generate_batch(task, make_rng(1))
        np.testing.assert_array_equal(xs.sum(axis=2), np.ones((12, 4), dtype=np.float32))

    def test_vocab_covers_corpus(self):
        task = make_task("char-lm", 4, 2)
        assert set(CORPUS) == set(task.vocab)
        assert task.input_dim == len(task.vocab) == task.output_dim

    def test_corpus_size_bounded(self):
        assert 0 < len(CORPUS.encode()) <= 100_000

    def test_deterministic(self):
        task = make_task("char-lm", 6, 3)
        a = generate_batch(task, make_rng(9))
        b = generate_batch(task, make_rng(9))
        np.testing.assert_array_equal(a[0], b[0])
        np.testing.assert_array_equal(a[1], b[1])


def test_invalid_task_parameters():
    with pytest.raises(ParameterError):
        make_task("mnist", 10, 4)
    with pytest.raises(ParameterError):
        make_task("adding", 1, 4)
    with pytest.raises(ParameterError):
        make_task("adding", 10, 0)
