"""Property tests for the relational operators."""

import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st

from sqlvs import relops
from sqlvs.relops import AggSpec, JoinSpec
from sqlvs.table import Table


def _table(keys, vals):
    return Table.from_pairs([("k", "int64", keys), ("v", "int64", vals)])


small_ints = st.lists(st.integers(0, 7), min_size=0, max_size=64)


@settings(max_examples=60, deadline=None)
@given(lk=small_ints, rk=small_ints)
def test_semi_anti_partition_left(lk, rk):
    left = _table(lk, list(range(len(lk))))
    right = Table.from_pairs([("rk", "int64", rk)])
    spec_semi = JoinSpec("semi", ["k"], ["rk"])
    spec_anti = JoinSpec("anti", ["k"], ["rk"])
    semi = relops.hash_join(left, right, spec_semi)
    anti = relops.hash_join(left, right, spec_anti)
    got = sorted(list(semi.column("v")) + list(anti.column("v")))
    assert got == sorted(left.column("v"))


@settings(max_examples=60, deadline=None)
@given(lk=small_ints, rk=small_ints, kind=st.sampled_from(["inner", "left", "semi", "anti"]))
def test_join_multiset_equals_nested_loop(lk, rk, kind):
    left = _table(lk, list(range(len(lk))))
    right = Table.from_pairs([("rk", "int64", rk), ("rv", "int64", list(range(len(rk))))])
    spec = JoinSpec(kind, ["k"], ["rk"])
    got = relops.hash_join(left, right, spec)
    got_rows = sorted(got.row_tuple(i) for i in range(got.row_count))
    expected = []
    for i in range(left.row_count):
        matches = [j for j in range(right.row_count) if rk[j] == lk[i]]
        if kind == "inner":
            expected += [left.row_tuple(i) + right.row_tuple(j) for j in matches]
        elif kind == "left":
            expected += ([left.row_tuple(i) + right.row_tuple(j) for j in matches]
                         or [left.row_tuple(i) + (None, None)])
        elif kind == "semi":
            expected += [left.row_tuple(i)] if matches else []
        else:
            expected += [] if matches else [left.row_tuple(i)]
    assert got_rows == sorted(expected)


@settings(max_examples=50, deadline=None)
@given(
    data=st.lists(st.tuples(st.integers(0, 4),
                            st.floats(-1e6, 1e6, allow_nan=False, width=32)),
                  min_size=0, max_size=50),
    seed=st.integers(0, 1000),
)
def test_group_sum_permutation_invariant(data, seed):
    keys = [k for k, _ in data]
    vals = [float(v) for _, v in data]
    t1 = Table.from_pairs([("g", "int64", keys), ("x", "float64", vals)])
    perm = np.random.default_rng(seed).permutation(len(data))
    t2 = Table.from_pairs([("g", "int64", [keys[i] for i in perm]),
                           ("x", "float64", [vals[i] for i in perm])])
    spec = AggSpec(["g"], [("sum", "x", "s")])
    out1 = relops.group_aggregate(t1, spec)
    out2 = relops.group_aggregate(t2, spec)
    assert list(out1.column("g")) == list(out2.column("g"))
    # exact summation makes this bit-equal, not approximately equal
    assert list(out1.column("s")) == list(out2.column("s"))
