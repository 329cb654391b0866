import math

import numpy as np
import pytest

from sqlvs import relops
from sqlvs.errors import SchemaError
from sqlvs.relops import AggSpec, JoinSpec
from sqlvs.table import Table


@pytest.fixture
def lineitems():
    rng = np.random.default_rng(7)
    n = 100
    return Table.from_pairs([
        ("qty", "int64", rng.integers(1, 51, n)),
        ("price", "float64", np.round(rng.uniform(1, 100, n), 2)),
        ("grp", "int64", rng.integers(0, 5, n)),
    ])


def test_filter_identity_and_empty(lineitems):
    assert relops.filter(lineitems, "true").row_count == lineitems.row_count
    assert relops.filter(lineitems, "false").row_count == 0


def test_filter_matches_row_scan_oracle(lineitems):
    out = relops.filter(lineitems, "qty > 30")
    qty = np.asarray(lineitems.column("qty"))
    expected_rows = [i for i in range(lineitems.row_count) if qty[i] > 30]
    assert out.row_count == len(expected_rows)
    assert list(out.column("qty")) == [qty[i] for i in expected_rows]


def _nested_loop_join(left, right, spec):
    """Reference semantics: multiset of output row tuples."""
    lk = [np.asarray(left.column(k)) for k in spec.left_keys]
    rk = [np.asarray(right.column(k)) for k in spec.right_keys]
    out = []
    for i in range(left.row_count):
        matches = [j for j in range(right.row_count)
                   if all(lk[c][i] == rk[c][j] for c in range(len(lk)))]
        if spec.kind == "inner":
            out.extend(left.row_tuple(i) + right.row_tuple(j) for j in matches)
        elif spec.kind == "left":
            if matches:
                out.extend(left.row_tuple(i) + right.row_tuple(j) for j in matches)
            else:
                out.append(left.row_tuple(i) + (None,) * len(right.schema.names))
        elif spec.kind == "semi" and matches:
            out.append(left.row_tuple(i))
        elif spec.kind == "anti" and not matches:
            out.append(left.row_tuple(i))
    return sorted(out, key=repr)


def _to_tuples(table, null_right_from=None):
    return sorted((table.row_tuple(i) for i in range(table.row_count)), key=repr)


@pytest.mark.parametrize("kind", ["inner", "left", "semi", "anti"])
@pytest.mark.parametrize("seed", [0, 1, 2])
def test_join_matches_nested_loop(kind, seed):
    rng = np.random.default_rng(seed)
    left = Table.from_pairs([
        ("k", "int64", rng.integers(0, 6, 17)),
        ("l", "float64", rng.normal(size=17)),
    ])
    right = Table.from_pairs([
        ("rk", "int64", rng.integers(0, 6, 11)),
        ("r", "int64", rng.integers(0, 100, 11)),
    ])
    spec = JoinSpec(kind, ["k"], ["rk"])
    got = relops.hash_join(left, right, spec)
    assert _to_tuples(got) == _nested_loop_join(left, right, spec)


def test_join_output_order_left_major():
    left = Table.from_pairs([("k", "int64", [2, 1, 2])])
    right = Table.from_pairs([("rk", "int64", [2, 9, 2, 1])])
    out = relops.hash_join(left, right, JoinSpec("inner", ["k"], ["rk"]))
    # left order, matches in right-row order
    assert list(out.column("k")) == [2, 2, 1, 2, 2]


def test_semi_all_match_keeps_left():
    left = Table.from_pairs([("k", "int64", [1, 2, 2])])
    right = Table.from_pairs([("rk", "int64", [1, 2])])
    out = relops.hash_join(left, right, JoinSpec("semi", ["k"], ["rk"]))
    assert list(out.column("k")) == [1, 2, 2]


def test_anti_empty_right_keeps_left():
    left = Table.from_pairs([("k", "int64", [1, 2, 2])])
    right = Table.from_pairs([("rk", "int64", [])])
    out = relops.hash_join(left, right, JoinSpec("anti", ["k"], ["rk"]))
    assert list(out.column("k")) == [1, 2, 2]


def test_left_join_nulls_and_composite_keys():
    left = Table.from_pairs([("a", "int64", [1, 2]), ("b", "string", ["x", "y"])])
    right = Table.from_pairs([("ra", "int64", [1, 1]), ("rb", "string", ["x", "z"]),
                              ("v", "float64", [10.0, 20.0])])
    out = relops.hash_join(left, right, JoinSpec("left", ["a", "b"], ["ra", "rb"]))
    assert out.row_count == 2
    assert list(out.mask("v")) == [True, False]


def test_join_key_type_mismatch():
    left = Table.from_pairs([("k", "int64", [1])])
    right = Table.from_pairs([("rk", "string", ["1"])])
    with pytest.raises(SchemaError):
        relops.hash_join(left, right, JoinSpec("inner", ["k"], ["rk"]))


def test_null_keys_never_match():
    left = Table(Table.from_pairs([("k", "int64", [1, 2])]).schema,
                 {"k": [1, 2]}, {"k": np.array([True, False])})
    right = Table.from_pairs([("rk", "int64", [1, 2])])
    inner = relops.hash_join(left, right, JoinSpec("inner", ["k"], ["rk"]))
    assert inner.row_count == 1
    anti = relops.hash_join(left, right, JoinSpec("anti", ["k"], ["rk"]))
    assert anti.row_count == 1  # the null-key row has no match


def test_group_aggregate_empty():
    t = Table.from_pairs([("g", "int64", []), ("x", "float64", [])])
    out = relops.group_aggregate(t, AggSpec(["g"], [("count", "x", "n")]))
    assert out.row_count == 0


def test_group_sum_simple():
    t = Table.from_pairs([("g", "int64", [1, 1]), ("x", "float64", [1.0, 2.5])])
    out = relops.group_aggregate(t, AggSpec(["g"], [("sum", "x", "s")]))
    assert list(out.column("s")) == [3.5]


def test_double_aggregation_matches_scan_oracle(lineitems):
    spec1 = AggSpec(["grp"], [("count", "*", "n"), ("sum", "price", "total"),
                              ("min", "qty", "lo"), ("max", "qty", "hi"),
                              ("avg", "price", "mean")])
    lvl1 = relops.group_aggregate(lineitems, spec1)
    grp = np.asarray(lineitems.column("grp"))
    price = np.asarray(lineitems.column("price"))
    qty = np.asarray(lineitems.column("qty"))
    for i, g in enumerate(lvl1.column("grp")):
        rows = grp == g
        assert lvl1.column("n")[i] == rows.sum()
        assert lvl1.column("total")[i] == math.fsum(price[rows])
        assert lvl1.column("lo")[i] == qty[rows].min()
        assert lvl1.column("hi")[i] == qty[rows].max()
        assert lvl1.column("mean")[i] == pytest.approx(price[rows].mean())
    # second level over the first, sorted deterministic output
    lvl2 = relops.group_aggregate(lvl1, AggSpec([], [("sum", "n", "rows")]))
    assert list(lvl2.column("rows")) == [lineitems.row_count]


def test_aggregate_skips_nulls():
    t = Table(Table.from_pairs([("g", "int64", [1, 1, 1]), ("x", "int64", [5, 7, 9])]).schema,
              {"g": [1, 1, 1], "x": [5, 7, 9]},
              {"x": np.array([True, False, True])})
    out = relops.group_aggregate(t, AggSpec(["g"], [
        ("count", "x", "n"), ("sum", "x", "s"), ("count", "*", "rows")]))
    assert list(out.column("n")) == [2]
    assert list(out.column("s")) == [14]
    assert list(out.column("rows")) == [3]


def test_aggregate_output_sorted_by_keys():
    t = Table.from_pairs([("g", "string", ["b", "a", "b", "a", "c"]),
                          ("h", "int64", [2, 9, 1, 9, 0]),
                          ("x", "int64", [1, 1, 1, 1, 1])])
    out = relops.group_aggregate(t, AggSpec(["g", "h"], [("count", "*", "n")]))
    keys = list(zip(out.column("g"), out.column("h")))
    assert keys == sorted(keys)


def test_sort_limit_stability_and_ties():
    t = Table.from_pairs([("a", "int64", [1, 1, 0, 1]), ("i", "int64", [0, 1, 2, 3])])
    out = relops.sort_limit(t, [("a", "asc")])
    assert list(out.column("i")) == [2, 0, 1, 3]
    assert relops.sort_limit(t, [("a", "asc")], limit=0).row_count == 0
    already = relops.sort_limit(out, [("a", "asc")])
    assert list(already.column("i")) == [2, 0, 1, 3]


def test_sort_desc_and_strings():
    t = Table.from_pairs([("s", "string", ["b", "a", "c"]), ("x", "int64", [1, 2, 3])])
    out = relops.sort_limit(t, [("s", "desc")], limit=2)
    assert list(out.column("s")) == ["c", "b"]


def test_sort_matches_comparison_oracle():
    rng = np.random.default_rng(3)
    vals = rng.permutation(50).astype(float)
    t = Table.from_pairs([("d", "float64", vals)])
    out = relops.sort_limit(t, [("d", "asc")])
    assert list(out.column("d")) == sorted(vals.tolist())
