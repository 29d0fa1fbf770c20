import itertools
import json
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from pinndae import registry
from pinndae.errors import ArgumentError
from pinndae.structural import (IncidenceMatrix, build_incidence, full_column_rank, render,
                                verdict_json)

GOLDEN = Path(__file__).parent / "golden"

# toy DAE: a: x1' = x1 + x2, b: x2' = 3 x1, c: 0 = x1 x2 + y
TOY = {"a": ["x1", "x2"], "b": ["x1"], "c": ["x1", "x2", "y"]}


def reference_matrices():
    """(name, matrix, expected verdict, expected circled (row, column) pairs)."""
    out = [("toy", build_incidence(TOY, ["x2", "y"], ["x1", "x2", "y"]), True,
            {("a", "x2"), ("c", "y")})]
    for variant, name, circles in [
        ("pinn-a", "cstr-pinn-a", {("eq_cA", "rA"), ("eq_cB", "rB")}),
        ("pinn-b", "cstr-pinn-b", {("eq_cA", "r1"), ("eq_cB", "r2"), ("eq_T", "r3")}),
        ("pinn-c", "cstr-pinn-c", {("eq_cA", "k1"), ("eq_cB", "k2"), ("eq_T", "k3")}),
    ]:
        out.append((name, registry.system("cstr", variant).incidence(), True, circles))
    ks = {("eq_cA", "k1"), ("eq_cB", "k2"), ("eq_T", "k3")}
    out.append(("cstr-pinn-c-s1", registry.system("cstr", "pinn-c", 1).incidence(), False, set()))
    out.append(("cstr-pinn-c-s2", registry.system("cstr", "pinn-c", 2).incidence(), True,
                ks | {("eq_TK", "T")}))
    out.append(("cstr-pinn-c-s3", registry.system("cstr", "pinn-c", 3).incidence(), True,
                ks | {("eq_TK", "TK")}))
    out.append(("separator", registry.system("separator", "pinn-base").incidence(), True,
                {("eq_hDPZ", "Vc"), ("eq_haq", "Vs")}))
    out.append(("counterexample-sm5", registry.system("counterexample-sm5", "pinn").incidence(), False, set()))
    out.append(("counterexample-sm6", registry.system("counterexample-sm6", "pinn").incidence(), True,
                {("ce2-1", "x1"), ("ce2-2", "x2")}))
    return out


@pytest.mark.parametrize("name,matrix,verdict,circles", reference_matrices(),
                         ids=[m[0] for m in reference_matrices()])
def test_reference_matrices(name, matrix, verdict, circles):
    result = full_column_rank(matrix)
    assert result.full_column_rank is verdict
    if verdict:
        assert {(r, c) for c, r in result.assignment.items()} == circles
    text = render(matrix, result)
    assert text == (GOLDEN / f"{name}.txt").read_text()
    assert text == render(matrix, full_column_rank(matrix))


def test_crosses_of_reference_matrices():
    ca_unmeasured = registry.system("cstr", "pinn-c", 1).incidence()
    assert ca_unmeasured.columns == ["cA", "k1", "k2", "k3"]
    assert ca_unmeasured.entries.astype(int).tolist() == [[1, 1, 0, 1], [1, 1, 1, 0], [1, 1, 1, 1],
                                                [0, 0, 0, 0]]
    sep_m = registry.system("separator", "pinn-d32").incidence()
    assert sep_m.entries.astype(int).tolist() == [[0, 0], [1, 0], [1, 1]]
    for variant in ("pinn-base", "pinn-d32", "pinn-d32-rv"):
        other = registry.system("separator", variant).incidence()
        assert np.array_equal(other.entries, sep_m.entries)
    sm5 = registry.system("counterexample-sm5", "pinn").incidence()
    assert sm5.entries.astype(int).tolist() == [[1, 1], [0, 0], [0, 0]]


def test_rank_deficient_render_has_no_circles():
    text = render(registry.system("cstr", "pinn-c", 1).incidence())
    assert "(x)" not in text
    assert text.endswith("full column rank: no")


def test_time_derivative_is_not_an_occurrence():
    # x2 only appears on the left of its own equation
    m = build_incidence({"a": ["x1"], "b": ["x1"]}, ["x2"], ["x1", "x2"])
    assert not full_column_rank(m).full_column_rank


def test_unknown_labels_and_duplicates():
    with pytest.raises(ArgumentError):
        build_incidence({"a": ["x1"]}, ["zz"], ["x1"])
    with pytest.raises(ArgumentError):
        build_incidence({"a": ["zz"]}, ["x1"], ["x1"])
    with pytest.raises(ArgumentError):
        build_incidence({"a": ["x1"]}, ["x1", "x1"])
    with pytest.raises(ArgumentError):
        IncidenceMatrix(["a", "a"], ["x"], np.zeros((2, 1)))


def test_verdict_json_is_stable():
    m = build_incidence(TOY, ["x2", "y"])
    r = full_column_rank(m)
    doc = json.loads(verdict_json(m, r))
    assert doc["full_column_rank"] and doc["assignment"] == {"x2": "a", "y": "c"}
    assert verdict_json(m, r) == verdict_json(m, full_column_rank(m))


def brute_force_matching(E: np.ndarray) -> int:
    n_rows, n_cols = E.shape
    best = 0
    for k in range(min(n_rows, n_cols), 0, -1):
        for cols in itertools.combinations(range(n_cols), k):
            for rows in itertools.permutations(range(n_rows), k):
                if all(E[r, c] for r, c in zip(rows, cols)):
                    return k
    return best


@settings(max_examples=150, deadline=None)
@given(st.integers(1, 5), st.integers(1, 5), st.data())
def test_matching_size_matches_exhaustive_search(n_rows, n_cols, data):
    bits = data.draw(st.lists(st.booleans(), min_size=n_rows * n_cols,
                              max_size=n_rows * n_cols))
    E = np.array(bits, dtype=bool).reshape(n_rows, n_cols)
    m = IncidenceMatrix([f"r{i}" for i in range(n_rows)], [f"c{j}" for j in range(n_cols)], E)
    res = full_column_rank(m)
    assert res.size == brute_force_matching(E)
    assert res.full_column_rank == (res.size == n_cols)
    rows_used = list(res.assignment.values())
    assert len(set(rows_used)) == len(rows_used)
    for c, r in res.assignment.items():
        assert E[m.rows.index(r), m.columns.index(c)]
