"""Linear algebra kernels.

``SparseEchelon`` is incremental Gaussian elimination over ``Fraction`` on
sparse rows (dicts column -> coefficient).  Columns are ranked by an
integer priority; the pivot of a row is its highest-priority entry.  Rows
are reduced top-down against existing pivots before insertion, so the
remainder of a vector is unique: it contains only non-pivot columns.

``jacobi_svd`` is one-sided (Hestenes) Jacobi for small dense matrices.
"""

from __future__ import annotations

import heapq
from fractions import Fraction
from typing import Callable, Hashable, Mapping

import numpy as np


class SparseEchelon:
    def __init__(self, priority: Callable[[Hashable], int]):
        self.priority = priority
        self.rows: dict[Hashable, dict[Hashable, Fraction]] = {}

    @property
    def rank(self) -> int:
        return len(self.rows)

    @property
    def pivots(self):
        return self.rows.keys()

    def reduce(self, vec: Mapping[Hashable, Fraction], trace: list | None = None) -> dict:
        """Remainder of ``vec`` modulo the row span.

        If ``trace`` is a list, the pivots used are appended to it in order.
        """
        work = {k: Fraction(v) for k, v in vec.items() if v != 0}
        heap = [(-self.priority(k), i, k) for i, k in enumerate(work)]
        heapq.heapify(heap)
        seen = set()
        counter = len(heap)
        out = {}
        while heap:
            _, _, col = heapq.heappop(heap)
            if col in seen:
                continue
            seen.add(col)
            c = work.get(col, 0)
            if c == 0:
                continue
            row = self.rows.get(col)
            if row is None:
                out[col] = c
                continue
            if trace is not None:
                trace.append(col)
            for k, v in row.items():
                if k == col:
                    continue
                nv = work.get(k, 0) - c * v
                if k not in work:
                    counter += 1
                    heapq.heappush(heap, (-self.priority(k), counter, k))
                work[k] = nv
            work[col] = 0
        return out

    def add(self, vec: Mapping[Hashable, Fraction]) -> Hashable | None:
        """Insert ``vec``; return the new pivot column or None if dependent."""
        rem = self.reduce(vec)
        if not rem:
            return None
        piv = max(rem, key=self.priority)
        inv = 1 / rem[piv]
        self.rows[piv] = {k: v * inv for k, v in rem.items()}
        return piv


def exact_rank(vectors, columns) -> tuple[int, list[int]]:
    """Rank of rational vectors (dicts) and the indices of a maximal independent prefix-greedy subset."""
    order = {c: i for i, c in enumerate(columns)}
    ech = SparseEchelon(lambda c: -order[c])
    chosen = []
    for idx, v in enumerate(vectors):
        if ech.add(v) is not None:
            chosen.append(idx)
    return ech.rank, chosen


def jacobi_svd(a, tol: float = 1e-15, max_sweeps: int = 60) -> np.ndarray:
    """Singular values of ``a`` (descending) by one-sided Jacobi rotations.

    Orthogonalizes the columns of a copy of ``a`` pairwise until every pair
    has relative inner product below ``tol``; the singular values are then
    the column norms.  Accurate to high relative precision for small dense
    matrices.
    """
    u = np.array(a, dtype=float, copy=True)
    if u.ndim != 2:
        raise ValueError("expected a matrix")
    if u.shape[0] < u.shape[1]:
        u = u.T.copy()
    m, n = u.shape
    for _ in range(max_sweeps):
        rotated = False
        for p in range(n - 1):
            for q in range(p + 1, n):
                alpha = u[:, p] @ u[:, p]
                beta = u[:, q] @ u[:, q]
                gamma = u[:, p] @ u[:, q]
                if gamma == 0.0 or abs(gamma) <= tol * np.sqrt(alpha * beta):
                    continue
                rotated = True
                zeta = (beta - alpha) / (2.0 * gamma)
                t = np.copysign(1.0, zeta) / (abs(zeta) + np.sqrt(1.0 + zeta * zeta))
                c = 1.0 / np.sqrt(1.0 + t * t)
                s = c * t
                up = u[:, p].copy()
                u[:, p] = c * up - s * u[:, q]
                u[:, q] = s * up + c * u[:, q]
        if not rotated:
            break
    sv = np.sqrt(np.einsum("ij,ij->j", u, u))
    return np.sort(sv)[::-1]
