from math import comb

import numpy as np
import pytest

from gopmm.arrangement import (Arrangement, DegenerateArrangementError, enumerate_regions,
                               find_root_region, interior_point, preprocess, signs_at,
                               strict_hyperplanes)
from oracles import central_fixture, oracle_regions, sample_signs


def lines_through(center, angles):
    A = np.column_stack([np.cos(angles), np.sin(angles)])
    return np.column_stack([A, -A @ center])


def test_preprocess_merges_positive_multiple():
    arr = preprocess([[1, 2, 3], [2, 4, 6]])
    assert arr.size == 1
    assert arr.position == ((0, 1), (0, 1))
    np.testing.assert_allclose(np.linalg.norm(np.r_[arr.A[0], arr.b[0]]), 1.0)


def test_preprocess_merges_negative_multiple():
    arr = preprocess([[1, 0, 0], [-2, 0, 0]])
    assert arr.size == 1
    assert arr.position == ((0, 1), (0, -1))


def test_preprocess_drops_trivial_rows():
    arr = preprocess([[0, 0, 0], [1e-13, 0, -1e-14], [0, 1, 0]])
    assert arr.size == 1
    assert arr.position[:2] == (None, None)


def test_preprocess_noisy_duplicates():
    rng = np.random.default_rng(0)
    H = rng.normal(size=(40, 5))
    dup = H[:10] * (1 + 1e-12 * rng.normal(size=(10, 5))) * rng.choice([-3.0, 0.5], size=(10, 1))
    arr = preprocess(np.vstack([H, dup]))
    assert arr.size == 40


def test_preprocess_all_trivial_is_empty():
    arr = preprocess(np.zeros((3, 4)))
    assert arr.empty
    assert enumerate_regions(arr) == [()]


def test_expand_respects_orientation():
    arr = preprocess([[1, 0, 0], [0, 0, 0], [-2, 0, 0], [0, 1, 0]])
    np.testing.assert_array_equal(arr.expand((1, 0)), [1, 0, 0, 0])
    np.testing.assert_array_equal(arr.expand((0, 1)), [0, 0, 1, 1])


def test_expanded_labels_match_original_signs():
    rng = np.random.default_rng(4)
    base = rng.normal(size=(4, 3))
    H = np.vstack([base, -2.5 * base[1], 0 * base[0], 3 * base[2]])
    arr = preprocess(H)
    for p in rng.uniform(-1, 1, size=(200, 2)):
        label = arr.expand(signs_at(arr, p))
        vals = H[:, :2] @ p + H[:, 2]
        for r, pos in enumerate(arr.position):
            if pos is not None:
                assert label[r] == int(vals[r] <= 0)


def test_interior_point_one_dimensional():
    arr = Arrangement(A=np.array([[1.0]]), b=np.array([0.0]), position=((0, 1),))
    x, z = interior_point((0,), arr, P=1.0)
    assert z == pytest.approx(0.5)
    assert x[0] == pytest.approx(0.5)


def test_interior_point_contradictory_near_duplicates():
    arr = Arrangement(A=np.array([[1.0], [1.0 + 1e-13]]), b=np.array([0.0, 1e-13]),
                      position=((0, 1), (1, 1)))
    found = interior_point((1, 0), arr, P=1.0)
    assert found is None or found[1] <= 1e-8


def test_root_single_hyperplane():
    arr = preprocess([[1.0, 0.0]])
    bits = find_root_region(arr, np.zeros(1))
    assert bits in {(0,), (1,)}
    assert interior_point(bits, arr)[1] > 0


def test_root_three_concurrent_lines():
    arr = preprocess(lines_through(np.zeros(2), np.array([0.1, 1.2, 2.3])))
    root = find_root_region(arr, np.zeros(2), seed=3)
    assert root in set(enumerate_regions(arr))


def test_root_matches_sampled_sign():
    A, b, center = central_fixture(2)
    arr = preprocess(np.column_stack([A, b]))
    root = find_root_region(arr, center, seed=0)
    assert root in oracle_regions(arr.A, arr.b, center, augment=False, n_uniform=200_000)


def test_root_degenerate_raises():
    arr = preprocess([[1.0, 0.0]])
    with pytest.raises(DegenerateArrangementError):
        find_root_region(arr, np.zeros(1), within=(np.array([[1.0], [-1.0]]), np.zeros(2)))


def test_one_hyperplane_two_regions_both_strict():
    arr = preprocess([[1.0, 0.0]])
    regions = enumerate_regions(arr)
    assert regions == [(0,), (1,)]
    for r in regions:
        assert strict_hyperplanes(r, arr) == [0]


@pytest.mark.parametrize("n", [1, 2, 3, 5, 8])
def test_planar_central_arrangement_has_2n_sectors(n):
    rng = np.random.default_rng(n)
    center = rng.uniform(-0.3, 0.3, size=2)
    angles = np.sort(rng.uniform(0, np.pi, size=n))
    arr = preprocess(lines_through(center, angles))
    regions = enumerate_regions(arr, 1.0, center)
    assert len(regions) == 2 * n
    for r in regions:
        assert len(strict_hyperplanes(r, arr)) == min(n, 2)


def test_regions_are_certified_and_unique():
    A, b, center = central_fixture(5)
    arr = preprocess(np.column_stack([A, b]))
    regions = enumerate_regions(arr, 1.0, center)
    assert len(set(regions)) == len(regions) <= 2 ** arr.size
    for r in regions:
        assert interior_point(r, arr)[1] > 1e-8


def test_strict_hyperplanes_agree_with_sampling():
    A, b, center = central_fixture(7)
    arr = preprocess(np.column_stack([A, b]))
    sampled = oracle_regions(arr.A, arr.b, center)
    for r in enumerate_regions(arr, 1.0, center):
        flips = {h for h in range(arr.size)
                 if r[:h] + (1 - r[h],) + r[h + 1:] in sampled}
        assert set(strict_hyperplanes(r, arr)) == flips


@pytest.mark.parametrize("seed", [0, 1, 3, 4, 6])
def test_enumeration_matches_sampling_oracle(seed):
    A, b, center = central_fixture(seed)
    arr = preprocess(np.column_stack([A, b]))
    assert set(enumerate_regions(arr, 1.0, center)) == oracle_regions(arr.A, arr.b, center)


def test_enumeration_independent_of_root():
    A, b, center = central_fixture(8)
    arr = preprocess(np.column_stack([A, b]))
    ref = enumerate_regions(arr, 1.0, center, seed=0)
    rng = np.random.default_rng(1)
    for k in range(10):
        start = rng.uniform(-0.9, 0.9, size=arr.dim)
        assert enumerate_regions(arr, 1.0, start, seed=100 + k) == ref


def test_enumeration_within_polytope():
    center = np.array([0.1, -0.2])
    arr = preprocess(lines_through(center, np.array([0.3, 1.4, 2.5])))
    # half-plane x0 + x1 >= 0.3, which excludes the common point (unit-normalized)
    C = np.array([[-1.0, -1.0]]) / np.sqrt(2)
    e = np.array([0.3]) / np.sqrt(2)
    got = set(enumerate_regions(arr, 1.0, center, within=(C, e)))
    rng = np.random.default_rng(0)
    pts = rng.uniform(-1, 1, size=(200_000, 2))
    pts = pts[pts @ C[0] + e[0] < 0]
    assert got == sample_signs(arr.A, arr.b, pts)
    assert got < set(enumerate_regions(arr, 1.0, center))


@pytest.mark.parametrize("seed", range(20))
def test_generic_central_count(seed):
    # n hyperplanes in general position through one interior point of R^d
    A, b, center = central_fixture(seed)
    n, d = A.shape
    arr = preprocess(np.column_stack([A, b]))
    expected = 2 * sum(comb(n - 1, i) for i in range(d))
    assert len(enumerate_regions(arr, 1.0, center)) == expected
