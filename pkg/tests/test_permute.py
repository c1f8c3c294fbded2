from __future__ import annotations

import itertools

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from prpo.dataset import TabularExample
from prpo.errors import ArityMismatchError
from prpo.permute import (
    Permutation,
    apply_permutation,
    identity,
    sample_permutations,
)


def invert_by_index(perm: Permutation) -> Permutation:
    # independent oracle: position j of the inverse holds where j was sent
    inv = [None] * perm.n
    for out_slot, in_slot in enumerate(perm.order):
        inv[in_slot] = out_slot
    return Permutation(tuple(inv))


def example_of(n: int) -> TabularExample:
    return TabularExample(tuple((f"f{i}", str(10 * i)) for i in range(n)), "lab")


def test_invalid_permutation_rejected():
    with pytest.raises(ValueError):
        Permutation((0, 0, 1))
    with pytest.raises(ValueError):
        Permutation((1, 2, 3))


def test_single_feature_yields_identities():
    result = sample_permutations(1, 4, seed=0)
    assert len(result.perms) == 4
    assert all(p.order == (0,) for p in result.perms)
    assert result.includes_identity


def test_three_features_distinct_members():
    result = sample_permutations(3, 4, seed=11)
    assert result.perms[0].is_identity()
    all_orders = set(itertools.permutations(range(3)))
    orders = [p.order for p in result.perms]
    assert set(orders) <= all_orders
    assert len(set(orders)) == 4  # identity + 3 distinct others out of 5


def test_eight_features_distinct_members():
    result = sample_permutations(8, 4, seed=5)
    orders = [p.order for p in result.perms]
    assert orders[0] == tuple(range(8))
    assert len(set(orders)) == 4


def test_small_group_with_replacement():
    # n=2 has only 2 orderings, so m=4 must repeat; identity stays first
    result = sample_permutations(2, 4, seed=9)
    assert len(result.perms) == 4
    assert result.perms[0].is_identity()
    assert result.includes_identity


def test_sampling_is_deterministic_per_seed():
    a = sample_permutations(6, 4, seed=123)
    b = sample_permutations(6, 4, seed=123)
    c = sample_permutations(6, 4, seed=124)
    assert [p.order for p in a.perms] == [p.order for p in b.perms]
    assert [p.order for p in a.perms] != [p.order for p in c.perms]


def test_apply_identity():
    ex = example_of(4)
    assert apply_permutation(ex, identity(4)) == ex


def test_apply_reorders():
    ex = TabularExample((("a", "1"), ("b", "2"), ("c", "3")), "y")
    out = apply_permutation(ex, Permutation((2, 0, 1)))
    assert out.features == (("c", "3"), ("a", "1"), ("b", "2"))
    assert out.label == "y"


def test_apply_then_inverse_restores():
    ex = example_of(5)
    perm = Permutation((3, 1, 4, 0, 2))
    assert apply_permutation(apply_permutation(ex, perm), invert_by_index(perm)) == ex


def test_arity_mismatch():
    with pytest.raises(ArityMismatchError):
        apply_permutation(example_of(3), identity(4))


@settings(max_examples=200)
@given(st.integers(1, 7), st.integers(0, 2**32 - 1))
def test_label_and_multiset_preserved(n, seed):
    ex = example_of(n)
    perms = sample_permutations(n, 4, seed).perms
    for perm in perms:
        out = apply_permutation(ex, perm)
        assert out.label == ex.label
        assert sorted(out.features) == sorted(ex.features)


@settings(max_examples=100)
@given(st.permutations(list(range(5))), st.permutations(list(range(5))))
def test_composition_group_property(p_order, q_order):
    ex = example_of(5)
    p, q = Permutation(tuple(p_order)), Permutation(tuple(q_order))
    chained = apply_permutation(apply_permutation(ex, p), q)
    composed = apply_permutation(ex, q.compose(p))
    assert chained == composed
