import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from sklearn.metrics import adjusted_rand_score

from vatensor.metrics import (
    adjusted_rand_index,
    cause_dendrogram,
    cause_dissimilarity,
    csmf_accuracy,
    top_cause_accuracy,
)


def test_csmf_accuracy_hand_cases():
    pi = np.array([0.5, 0.3, 0.2])
    assert csmf_accuracy(pi, pi) == 1.0
    assert csmf_accuracy([0.3, 0.4, 0.3], pi) == pytest.approx(0.75, abs=1e-15)
    assert csmf_accuracy([0.0, 1.0], [1.0, 0.0]) == 0.0


def test_csmf_accuracy_rejects_bad_input():
    with pytest.raises(ValueError):
        csmf_accuracy([0.5, 0.5], [0.3, 0.3, 0.4])
    with pytest.raises(ValueError):
        csmf_accuracy([0.5, 0.6], [0.5, 0.5])


simplex = st.integers(2, 8).flatmap(
    lambda C: st.tuples(st.lists(st.floats(0.01, 10), min_size=C, max_size=C),
                        st.lists(st.floats(0.01, 10), min_size=C, max_size=C)))


@settings(max_examples=200, deadline=None)
@given(simplex)
def test_csmf_accuracy_in_unit_interval(pair):
    a, b = (np.array(v) / np.sum(v) for v in pair)
    acc = csmf_accuracy(a, b)
    assert -1e-12 <= acc <= 1 + 1e-12


def test_top_cause_accuracy():
    assert top_cause_accuracy([0, 1, 2, 2], [0, 1, 1, 2]) == 0.75
    with pytest.raises(ValueError):
        top_cause_accuracy([0, 1], [0])


def test_ari_identical_and_permuted():
    a = [0, 0, 1, 1, 2, 2, 2]
    assert adjusted_rand_index(a, a) == 1.0
    assert adjusted_rand_index(a, [5, 5, 3, 3, 9, 9, 9]) == 1.0


def test_ari_hand_contingency_example():
    # table [[1,1],[1,1]]: index 0, expected (2*2)/6, max 2 -> ARI = -0.5
    assert adjusted_rand_index([1, 1, 2, 2], [1, 2, 1, 2]) == pytest.approx(-0.5, abs=1e-15)


def test_ari_trivial_partitions():
    assert adjusted_rand_index([0, 0, 0], [1, 1, 1]) == 1.0
    assert adjusted_rand_index([0, 1, 2], [2, 0, 1]) == 1.0
    with pytest.raises(ValueError):
        adjusted_rand_index([0, 1], [0, 1, 2])


@settings(max_examples=200, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 4), st.integers(0, 4)), min_size=2, max_size=40))
def test_ari_matches_reference_and_is_symmetric(pairs):
    a, b = (np.array(v) for v in zip(*pairs))
    ours = adjusted_rand_index(a, b)
    assert ours == pytest.approx(adjusted_rand_score(a, b), abs=1e-12)
    assert ours == pytest.approx(adjusted_rand_index(b, a), abs=1e-12)
    assert ours <= 1 + 1e-12


def test_dendrogram_groups_identical_causes():
    s = np.array([[0, 0, 1, 1, 2, 2],
                  [1, 1, 0, 0, 2, 2],   # same partition as cause 0
                  [0, 1, 2, 0, 1, 2],
                  [0, 1, 2, 0, 1, 2]])
    d = cause_dissimilarity(s)
    assert d[0, 1] == 0.0 and d[2, 3] == 0.0 and d[0, 2] > 0
    assert np.allclose(d, d.T) and np.all(np.diag(d) == 0)
    tree = cause_dendrogram(s, names=["a", "b", "c", "d"])
    first_two = {frozenset((m["left"], m["right"])) for m in tree.merges[:2]}
    assert first_two == {frozenset((0, 1)), frozenset((2, 3))}
    assert tree.newick().endswith(";") and "a:" in tree.newick()
    assert tree.to_json()["leaves"] == ["a", "b", "c", "d"]


def test_dendrogram_linkage_methods():
    rng = np.random.default_rng(0)
    s = rng.integers(0, 3, size=(5, 8))
    for method in ("average", "single", "complete"):
        tree = cause_dendrogram(s, method=method)
        assert len(tree.merges) == 4 and tree.merges[-1]["size"] == 5


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(2, 8))
def test_dendrogram_heights_nondecreasing(seed, C):
    s = np.random.default_rng(seed).integers(0, 3, size=(C, 6))
    tree = cause_dendrogram(s)
    heights = [m["height"] for m in tree.merges]
    assert len(heights) == C - 1 and tree.merges[-1]["size"] == C
    assert all(b >= a - 1e-12 for a, b in zip(heights, heights[1:]))
