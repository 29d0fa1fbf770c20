"""Incidence-matrix screening of which unmeasured states a PINN may recover.

Rows are the right-hand sides of the known equations, columns the unmeasured
states.  A state counts as occurring in an equation only if it appears on
the right-hand side; the time derivative on the left is not an occurrence.
A matching that covers every column (full structural column rank) is taken
as the indicator that estimation may work.  The indicator is a heuristic: it
is neither necessary nor sufficient.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .errors import ArgumentError


@dataclass
class IncidenceMatrix:
    rows: list[str]
    columns: list[str]
    entries: np.ndarray  # bool, rows x columns

    def __post_init__(self):
        if len(set(self.rows)) != len(self.rows) or len(set(self.columns)) != len(self.columns):
            raise ArgumentError("row and column labels must be unique")
        self.entries = np.asarray(self.entries, dtype=bool).reshape(len(self.rows), len(self.columns))

    @classmethod
    def from_lists(cls, rows, columns, crosses: Sequence[tuple[str, str]]) -> IncidenceMatrix:
        E = np.zeros((len(rows), len(columns)), dtype=bool)
        for r, c in crosses:
            E[list(rows).index(r), list(columns).index(c)] = True
        return cls(list(rows), list(columns), E)

    def crosses(self) -> list[tuple[str, str]]:
        return [(self.rows[i], self.columns[j]) for i, j in zip(*np.nonzero(self.entries))]


@dataclass
class MatchingResult:
    full_column_rank: bool
    assignment: dict[str, str]  # column -> row
    unmatched_columns: list[str] = field(default_factory=list)

    @property
    def size(self) -> int:
        return len(self.assignment)


def build_incidence(occurrences: Mapping[str, Sequence[str]], unmeasured: Sequence[str],
                    declared: Sequence[str] | None = None) -> IncidenceMatrix:
    """Incidence matrix from per-equation right-hand-side occurrence sets.

    ``occurrences`` maps equation labels (f rows first, then g rows) to the
    states appearing on that right-hand side; ``declared`` lists every state
    name the model knows, measured or not.
    """
    unmeasured = list(unmeasured)
    if len(set(unmeasured)) != len(unmeasured):
        raise ArgumentError("unmeasured state labels must be distinct")
    known = set(declared) if declared is not None else None
    if known is not None:
        for name in unmeasured:
            if name not in known:
                raise ArgumentError(f"unknown state {name!r}")
    rows = list(occurrences)
    E = np.zeros((len(rows), len(unmeasured)), dtype=bool)
    for i, eq in enumerate(rows):
        for name in occurrences[eq]:
            if known is not None and name not in known:
                raise ArgumentError(f"equation {eq!r} references unknown state {name!r}")
            if name in unmeasured:
                E[i, unmeasured.index(name)] = True
    return IncidenceMatrix(rows, unmeasured, E)


def full_column_rank(matrix: IncidenceMatrix) -> MatchingResult:
    """Maximum bipartite matching by augmenting paths (Kuhn).

    Columns are processed left to right.  Candidate rows are tried sparsest
    first (fewest crosses), ties by row order, and free rows are taken before
    any rematching is attempted.  This makes the witness deterministic and
    equal to the hand-drawn assignments for the reference matrices.
    """
    E = matrix.entries
    n_rows, n_cols = E.shape
    degree = E.sum(axis=1)
    cand = [sorted(np.nonzero(E[:, j])[0].tolist(), key=lambda i: (degree[i], i))
            for j in range(n_cols)]
    row_owner = [-1] * n_rows

    def augment(j, seen) -> bool:
        for i in cand[j]:
            if row_owner[i] == -1:
                row_owner[i] = j
                return True
        for i in cand[j]:
            if i in seen:
                continue
            seen.add(i)
            if augment(row_owner[i], seen):
                row_owner[i] = j
                return True
        return False

    for j in range(n_cols):
        augment(j, set())

    assignment = {matrix.columns[j]: matrix.rows[i]
                  for i, j in enumerate(row_owner) if j != -1}
    assignment = {c: assignment[c] for c in matrix.columns if c in assignment}
    unmatched = [c for c in matrix.columns if c not in assignment]
    return MatchingResult(not unmatched and n_cols > 0, assignment, unmatched)


def render(matrix: IncidenceMatrix, result: MatchingResult | None = None) -> str:
    """Text table: ``x`` marks an occurrence, ``(x)`` the matched one.

    Circles are only drawn when the matching covers every column; a partial
    matching is no witness of anything.
    """
    if result is None:
        result = full_column_rank(matrix)
    circled = set()
    if result.full_column_rank:
        circled = {(r, c) for c, r in result.assignment.items()}
    head = ["equation", *matrix.columns]
    body = []
    for i, r in enumerate(matrix.rows):
        cells = [r]
        for j, c in enumerate(matrix.columns):
            if not matrix.entries[i, j]:
                cells.append("")
            else:
                cells.append("(x)" if (r, c) in circled else "x")
        body.append(cells)
    widths = [max(len(row[k]) for row in [head, *body]) for k in range(len(head))]

    def fmt(cells):
        first = cells[0].ljust(widths[0])
        rest = [c.center(max(w, 3)) for c, w in zip(cells[1:], widths[1:])]
        return " | ".join([first, *rest]).rstrip()

    lines = [fmt(head), "-+-".join("-" * max(w, 3) if k else "-" * w
                                    for k, w in enumerate(widths))]
    lines += [fmt(row) for row in body]
    verdict = "yes" if result.full_column_rank else "no"
    lines.append(f"full column rank: {verdict}")
    return "\n".join(lines)


def verdict_json(matrix: IncidenceMatrix, result: MatchingResult) -> str:
    return json.dumps({
        "schema": 1,
        "rows": matrix.rows,
        "columns": matrix.columns,
        "crosses": [list(c) for c in matrix.crosses()],
        "full_column_rank": result.full_column_rank,
        "assignment": result.assignment,
        "unmatched_columns": result.unmatched_columns,
    }, sort_keys=True)
