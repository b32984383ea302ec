from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from beamplan.arraysim import PathComponent, dft_codebook
from beamplan.errors import InvalidArgumentError
from beamplan.skeleton import (
    PathSkeleton,
    dequantize_skeleton,
    extract_skeleton,
    nearest_beam,
    quantize_skeleton,
    skeleton_distance,
    skeleton_distance_matrix,
)

from conftest import GRID, N, sk

angle = st.floats(-math.pi / 2, math.pi / 2, allow_nan=False)
pair = st.one_of(st.none(), st.tuples(angle, angle))
skel3 = st.tuples(pair, pair, pair).map(PathSkeleton)


def test_extract_top_paths():
    paths = [PathComponent(g, 0.1 * i, -0.1 * i) for i, g in enumerate([0.5, 3.0, 1.0, 2.0, 0.1])]
    got = extract_skeleton(paths, 3)
    assert got.pairs == ((0.1, -0.1), (0.30000000000000004, -0.30000000000000004), (0.2, -0.2))


def test_extract_padding_and_ties():
    assert extract_skeleton([PathComponent(1.0, 0.2, 0.3)], 3).pairs == ((0.2, 0.3), None, None)
    tie = extract_skeleton([PathComponent(1.0, 0.4, 0.0), PathComponent(-1.0, -0.4, 0.1)], 2)
    assert tie.pairs == ((-0.4, 0.1), (0.4, 0.0))
    with pytest.raises(InvalidArgumentError):
        extract_skeleton([], 0)


def test_distance_examples():
    s = sk(0, 3, 5)
    assert skeleton_distance(s, s, N, N) == pytest.approx(3.0, abs=1e-12)
    assert skeleton_distance(sk(0, 1, 2), sk(3, 4, 5), N, N) == pytest.approx(0.0, abs=1e-12)
    a = PathSkeleton(((0.0, 0.2),))
    b = PathSkeleton(((math.asin(2 / 64), 0.2),))
    # Dirichlet kernel |sin(n x / 2) / (n sin(x / 2))| with x = pi * (sin a - sin b)
    x = math.pi * (2 / 64)
    expect = abs(math.sin(64 * x / 2) / (64 * math.sin(x / 2)))
    direct = abs(sum(np.exp(1j * math.pi * m * (2 / 64)) for m in range(64))) / 64
    assert skeleton_distance(a, b, 64, 4) == pytest.approx(expect, abs=1e-12)
    assert skeleton_distance(a, b, 64, 4) == pytest.approx(direct, abs=1e-12)


def test_distance_rejects_mismatched_L():
    with pytest.raises(InvalidArgumentError):
        skeleton_distance(sk(0), sk(0, 1), N, N)


@given(skel3, skel3)
def test_distance_range_and_symmetry(a, b):
    d = skeleton_distance(a, b, 16, 4)
    assert -1e-12 <= d <= 3 + 1e-12
    assert d == pytest.approx(skeleton_distance(b, a, 16, 4), abs=1e-12)


@given(skel3)
def test_self_distance(a):
    d = skeleton_distance(a, a, 16, 4)
    nonnull = sum(p is not None for p in a.pairs)
    assert d == pytest.approx(nonnull, abs=1e-12)
    assert (abs(d - 3) <= 1e-12) == a.null_free


@given(skel3, skel3, st.integers(0, 2))
def test_null_monotone(a, b, i):
    nulled = PathSkeleton(tuple(None if j == i else p for j, p in enumerate(b.pairs)))
    assert skeleton_distance(a, nulled, 16, 4) <= skeleton_distance(a, b, 16, 4) + 1e-12


def test_distance_matrix_matches_scalar(rng):
    rows = [sk(*rng.integers(0, N, 2)) for _ in range(3)] + [sk(None, 2)]
    cols = [sk(*rng.integers(0, N, 2)) for _ in range(2)]
    mat = skeleton_distance_matrix(rows, cols, N, 4)
    for i, r in enumerate(rows):
        for j, c in enumerate(cols):
            assert mat[i, j] == pytest.approx(skeleton_distance(r, c, N, 4), abs=1e-12)


def test_quantize_on_grid_and_midpoint():
    book = dft_codebook(8, 16)
    for k in range(16):
        assert nearest_beam(float(book.angles[k]), book) == k
    mid = math.asin((book.sines[4] + book.sines[5]) / 2)
    assert nearest_beam(mid, book) == 4
    q = quantize_skeleton(PathSkeleton(((float(book.angles[3]), mid), None)), book, book)
    assert q.pairs == ((3, 4), None)


def test_quantize_within_half_step(rng):
    book = dft_codebook(16, 32)
    half = 1.0 / 32
    for phi in rng.uniform(-math.pi / 2, math.pi / 2, 200):
        k = nearest_beam(phi, book)
        assert abs(math.sin(phi) - book.sines[k]) <= half + 1e-12
        # scan oracle
        best = min(range(32), key=lambda j: (abs(math.sin(phi) - book.sines[j]), j))
        assert abs(math.sin(phi) - book.sines[best]) == pytest.approx(abs(math.sin(phi) - book.sines[k]), abs=1e-12)


def test_quantize_idempotent_on_grid():
    book = dft_codebook(N, N)
    s = sk(1, None, 6)
    back = dequantize_skeleton(quantize_skeleton(s, book, book), book, book)
    assert quantize_skeleton(back, book, book) == quantize_skeleton(s, book, book)
    np.testing.assert_allclose([p[0] for p in back.pairs if p], [GRID[1], GRID[6]], atol=1e-12)
