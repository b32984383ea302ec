from __future__ import annotations

from fractions import Fraction

import numpy as np
import pytest

from beamplan.arraysim import dft_codebook
from beamplan.skeleton import PathSkeleton
from beamplan.stochastic import process_from_labels

# 8-element grid; distinct grid angles give orthogonal responses at critical sampling
N = 8
GRID = np.arcsin(2.0 * np.arange(N) / N - 1.0 + 1.0 / N)


def sk(*beams):
    """Skeleton from grid indices; ``None`` marks a blocked slot."""
    return PathSkeleton(tuple(None if b is None else (float(GRID[b]), float(GRID[b])) for b in beams))


def frozen(labels):
    """Single-state exact process with a fixed skeleton per location."""
    return process_from_labels([(s,) for s in labels], [[1]], [1], N, N)


def random_exact_process(rng, M, A, null_prob=0.15, n_beams=3):
    rows = []
    for _ in range(M):
        row = []
        for _ in range(A):
            row.append(sk(None) if rng.random() < null_prob else sk(int(rng.integers(0, n_beams))))
        rows.append(tuple(row))

    def law():
        w = rng.integers(0, 4, size=A)
        if w.sum() == 0:
            w[rng.integers(0, A)] = 1
        return [Fraction(int(v), int(w.sum())) for v in w]

    return process_from_labels(rows, [law() for _ in range(A)], law(), N, N)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def books_small():
    return dft_codebook(N, N), dft_codebook(N, N)
