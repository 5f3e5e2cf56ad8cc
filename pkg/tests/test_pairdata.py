import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mvrank.errors import DataError, InputError, ShapeError
from mvrank.pairdata import (
    AlignedViews,
    PairDataset,
    RankedView,
    align_views,
    balance_classes,
    pairwise_transform,
    relevance_from_ranks,
)


def view(vid, keys, X, r):
    return RankedView(vid, keys, np.asarray(X, float), r)


def random_aligned(rng, n=6, dims=(2, 3), ties=False):
    keys = [f"k{i}" for i in range(n)]
    views = []
    for v, d in enumerate(dims):
        r = rng.integers(1, 4, size=n) if ties else rng.permutation(n) + 1
        views.append(view(v, keys, rng.standard_normal((n, d)), r))
    return align_views(views)


def test_ranked_view_invariants():
    with pytest.raises(DataError):
        view(0, ["a", "a"], np.zeros((2, 1)), [1, 2])
    with pytest.raises(DataError):
        view(0, ["a", "b"], np.zeros((2, 1)), [0, 2])
    with pytest.raises(ShapeError):
        view(0, ["a", "b"], np.zeros((3, 1)), [1, 2])


def test_align_full_overlap():
    a = view(0, ["x", "y", "z"], np.eye(3), [1, 2, 3])
    b = view(1, ["x", "y", "z"], np.eye(3), [3, 2, 1])
    out = align_views([a, b])
    assert out.n == 3
    assert np.array_equal(out.r_bar, [2, 2, 2])


def test_align_intersection_in_first_view_order():
    a = view(0, ["a", "b", "c"], [[1], [2], [3]], [1, 2, 3])
    b = view(1, ["d", "c", "b"], [[4], [3], [2]], [1, 2, 3])
    out = align_views([a, b])
    assert out.keys == ["b", "c"]
    assert np.array_equal(out.views[1].X[:, 0], [2, 3])
    assert np.array_equal(out.views[1].r, [3, 2])


def test_align_hand_average():
    keys = ["p", "q", "s"]
    views = [view(v, keys, np.zeros((3, 1)), r) for v, r in enumerate(([1, 2, 3], [1, 3, 2], [1, 2, 3]))]
    assert np.allclose(align_views(views).r_bar, [1, 7 / 3, 8 / 3])


def test_align_errors():
    a = view(0, ["a"], [[1]], [1])
    with pytest.raises(DataError):
        align_views([a, view(1, ["b"], [[1]], [1])])
    with pytest.raises(InputError):
        align_views([a])


def test_align_idempotent(rng):
    once = random_aligned(rng)
    twice = align_views(once.views)
    assert twice.keys == once.keys
    assert all(np.array_equal(a.X, b.X) for a, b in zip(once.views, twice.views))
    assert np.array_equal(twice.r_bar, once.r_bar)


def test_r_bar_bounds(rng):
    al = random_aligned(rng, n=20, dims=(1, 1, 1), ties=True)
    R = np.vstack([v.r for v in al.views])
    assert np.all(R.min(axis=0) <= al.r_bar) and np.all(al.r_bar <= R.max(axis=0))


def test_relevance_cases():
    r = np.array([5.0, 2.0, 7.0, 3.0, 2.0])
    assert relevance_from_ranks(r, 0, 1) == 1
    assert relevance_from_ranks(r, 1, 4) == 1
    assert relevance_from_ranks(r, 3, 2) == 0
    with pytest.raises(InputError):
        relevance_from_ranks(r, 2, 2)


def test_transform_direct_substitution():
    a = view(0, ["q", "i"], [[1, 0], [0, 1]], [1, 2])
    b = view(1, ["q", "i"], [[0], [0]], [1, 2])
    pairs = pairwise_transform(align_views([a, b]), queries=[0])
    assert np.array_equal(pairs.X[0], [[1, -1]])
    assert pairs.y_bar.tolist() == [0]
    assert pairs.y[0].tolist() == [0]
    assert pairs.query_of_pair.tolist() == [0]


def test_transform_counts(rng):
    al = random_aligned(rng, n=3)
    assert pairwise_transform(al, queries=[1]).n_pairs == 2
    assert pairwise_transform(al).n_pairs == 3 * 2
    with pytest.raises(InputError):
        pairwise_transform(al, queries=[])
    with pytest.raises(InputError):
        pairwise_transform(al, queries=[3])


def test_transform_query_sampling(rng):
    al = random_aligned(rng, n=10)
    pairs = pairwise_transform(al, max_pairs_per_query=4, rng=np.random.default_rng(0))
    assert pairs.n_pairs == 40
    assert np.all(np.bincount(pairs.query_of_pair) == 4)
    with pytest.raises(InputError):
        pairwise_transform(al, max_pairs_per_query=4)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**31 - 1), n=st.integers(2, 8))
def test_transform_antisymmetry(seed, n):
    al = random_aligned(np.random.default_rng(seed), n=n)
    pairs = pairwise_transform(al)
    index = {tuple(p): m for m, p in enumerate(pairs.pairs)}
    for (q, i), m in index.items():
        m2 = index[(i, q)]
        for v in range(al.n_views):
            assert np.array_equal(pairs.X[v][m], -pairs.X[v][m2])
            # per-view ranks are permutations, hence untied
            assert pairs.y[v][m] == 1 - pairs.y[v][m2]
        if al.r_bar[q] != al.r_bar[i]:
            assert pairs.y_bar[m] == 1 - pairs.y_bar[m2]


def make_pairs(y_bar, rng, dims=(2, 3)):
    M = len(y_bar)
    y_bar = np.asarray(y_bar, dtype=np.int64)
    return PairDataset(
        [rng.standard_normal((M, d)) for d in dims],
        [y_bar.copy() for _ in dims],
        y_bar,
        np.arange(M),
        np.column_stack([np.arange(M), np.arange(M) + 1]),
    )


def test_balance_all_zero(rng):
    pairs = make_pairs(np.zeros(10), rng)
    out = balance_classes(pairs, seed=0)
    flipped = out.y_bar == 1
    assert flipped.sum() == 5
    for v in range(2):
        assert np.array_equal(out.X[v][flipped], -pairs.X[v][flipped])
        assert np.array_equal(out.X[v][~flipped], pairs.X[v][~flipped])
        assert np.array_equal(out.y[v], out.y_bar)
    assert np.array_equal(out.pairs[flipped], pairs.pairs[flipped][:, ::-1])
    assert np.array_equal(out.query_of_pair[flipped], out.pairs[flipped, 0])


def test_balance_noop_when_balanced(rng):
    pairs = make_pairs([0, 1, 1, 0], rng)
    assert balance_classes(pairs, seed=3) is pairs


@settings(max_examples=50, deadline=None)
@given(labels=st.lists(st.integers(0, 1), min_size=1, max_size=40), seed=st.integers(0, 1000))
def test_balance_properties(labels, seed):
    rng = np.random.default_rng(seed)
    pairs = make_pairs(labels, rng)
    out = balance_classes(pairs, seed)
    n1 = int(out.y_bar.sum())
    assert (out.n_pairs - n1) - n1 in (-1, 0, 1)
    assert out.n_pairs == pairs.n_pairs
    changed = out.y_bar != pairs.y_bar
    for v in range(pairs.n_views):
        assert np.array_equal(np.abs(out.X[v]), np.abs(pairs.X[v]))
        assert np.array_equal(out.y[v] != pairs.y[v], changed)
    assert balance_classes(pairs, seed).y_bar.tolist() == out.y_bar.tolist()


def test_take_subsets_every_field(rng):
    pairs = make_pairs([0, 1, 0, 1, 1], rng)
    sub = pairs.take([4, 0])
    assert sub.n_pairs == 2 and sub.dims == [2, 3]
    assert sub.y_bar.tolist() == [1, 0]
    assert np.array_equal(sub.X[1], pairs.X[1][[4, 0]])


def test_aligned_subset(rng):
    al = random_aligned(rng, n=5)
    sub = al.subset([3, 1])
    assert isinstance(sub, AlignedViews)
    assert sub.keys == [al.keys[3], al.keys[1]]
    assert np.array_equal(sub.r_bar, al.r_bar[[3, 1]])
