"""Synthetic training tasks.

Two desk-scale tasks drive the experiments:

* "adding" - sequence regression.  Each input step is a (value, marker)
  pair with the value drawn uniformly from [-1, 1); exactly two steps
  carry marker 1 (one in each half of the sequence) and the target is
  the sum of their values.  Trained with mean squared error.
* "char-lm" - next-character prediction over a small embedded corpus,
  one-hot inputs, targets shifted by one position.  Trained with
  cross entropy at every timestep.

Batch generation is a pure function of the task and the generator state,
so a fixed seed reproduces identical batches.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ParameterError

CORPUS = """\
The workshop at the end of the lane kept its lights on long after the
rest of the street had gone quiet. Inside, rows of small machines ticked
and settled, each one repeating the same patient routine: take a
measurement, compare it with the last, write the difference in a ledger
with a pencil worn down to a stub. Nobody remembered who had started the
ledger, but everybody agreed it would be unwise to stop.

On clear mornings the apprentice arrived first. She swept the filings
from under the lathe, checked the tension of every belt, and read the
previous night's ledger over a cup of tea that always went cold before
she finished. The numbers drifted slowly, the way a river moves in
midsummer, and it took a careful eye to tell an honest drift from a
loose screw. When she found a loose screw she tightened it a quarter
turn and made a note, because a quarter turn today was cheaper than a
seized bearing in the winter.

The foreman liked to say that a machine never lies, it only answers a
different question than the one you asked. He said it while holding a
gauge up to the light, and the apprentice wrote it down the first time
and rolled her eyes every time after. Still, the saying held. When the
big press began to stamp its sheets a hair short, the fault was not in
the press at all but in a rail that had been oiled twice by two people
who did not speak to one another. After that they kept one oil can and
one list, and the press went back to telling the truth.

In autumn the orders doubled and the shop took on a second shift. The
night crew learned the machines by sound: the happy clatter of the small
punch, the low hum of the grinder when its wheel ran true, the hesitant
knock that meant a coupling wanted grease. Sound was a kind of ledger
too, written in the air and erased at dawn, and the two shifts traded
notes in the margin of the real one so nothing would be lost between
them.

By the first snow the street outside was silent by eight, and the
workshop settled into its winter rhythm. The apprentice, no longer new,
taught the newest hire how to sweep the filings and how to read the
drift, and she caught herself repeating the foreman's saying word for
word. The hire wrote it down. The machines ticked and settled, the
ledger grew by a page a week, and the lights at the end of the lane
stayed on, steady as a held breath, until spring.
"""


@dataclass(frozen=True)
class Task:
    """Declarative description of a batch source."""

    variant: str
    seq_len: int
    batch_size: int
    input_dim: int
    output_dim: int
    loss: str          # "mse" or "xent"
    output_mode: str   # "last" or "all"
    vocab: str = ""    # char-lm only


def make_task(variant, seq_len, batch_size):
    if seq_len < 2:
        raise ParameterError(f"seq_len must be >= 2, got {seq_len}")
    if batch_size < 1:
        raise ParameterError(f"batch_size must be >= 1, got {batch_size}")
    if variant == "adding":
        return Task(variant, seq_len, batch_size, 2, 1, "mse", "last")
    if variant == "char-lm":
        vocab = "".join(sorted(set(CORPUS)))
        return Task(variant, seq_len, batch_size, len(vocab), len(vocab), "xent", "all", vocab)
    raise ParameterError(f"unknown task variant {variant!r}")


def generate_batch(task, rng):
    """One (inputs, targets) batch; inputs are (T, B, input_dim) float32."""
    if task.variant == "adding":
        return _adding_batch(task, rng)
    return _char_batch(task, rng)


def _adding_batch(task, rng):
    t_len, b = task.seq_len, task.batch_size
    xs = np.zeros((t_len, b, 2), dtype=np.float32)
    xs[:, :, 0] = rng.uniform(-1.0, 1.0, size=(t_len, b)).astype(np.float32)
    half = t_len // 2
    first = rng.integers(0, half, size=b)
    second = rng.integers(half, t_len, size=b)
    cols = np.arange(b)
    xs[first, cols, 1] = 1.0
    xs[second, cols, 1] = 1.0
    targets = (xs[first, cols, 0] + xs[second, cols, 0]).reshape(b, 1)
    return xs, targets


def _char_batch(task, rng):
    t_len, b = task.seq_len, task.batch_size
    codes = _corpus_codes(task.vocab)
    starts = rng.integers(0, len(codes) - t_len - 1, size=b)
    idx = starts[None, :] + np.arange(t_len)[:, None]  # (T, B)
    xs = np.zeros((t_len, b, task.input_dim), dtype=np.float32)
    window = codes[idx]
    t_grid, b_grid = np.meshgrid(np.arange(t_len), np.arange(b), indexing="ij")
    xs[t_grid, b_grid, window] = 1.0
    targets = codes[idx + 1]
    return xs, targets


_CODES_CACHE = {}


def _corpus_codes(vocab):
    codes = _CODES_CACHE.get(vocab)
    if codes is None:
        table = {c: i for i, c in enumerate(vocab)}
        codes = np.array([table[c] for c in CORPUS], dtype=np.int64)
        _CODES_CACHE[vocab] = codes
    return codes


def target_variance(task, rng, n_samples=1000):
    """Empirical variance of the regression target (adding task only)."""
    if task.variant != "adding":
        raise ParameterError("target_variance is defined for the adding task")
    probe = Task("adding", task.seq_len, n_samples, 2, 1, "mse", "last")
    _, targets = _adding_batch(probe, rng)
    return float(np.var(targets.astype(np.float64)))
