"""Numerical rank certificates and structured matrix products.

Every rank decision in this package flows through :func:`numerical_rank`,
which thresholds singular values relative to the largest one.  Population
probability tensors are exact to double precision, so the spurious singular
values of a structurally rank-deficient unfolding sit near ``1e-15 * sigma_1``
while true signal stays many orders of magnitude above the default cut.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations

import numpy as np

from .errors import SizeBudgetError

#: Default relative singular-value cut for rank decisions on exact tensors.
DEFAULT_TOL_REL = 1e-8

#: Column-count cap for the combinatorial Kruskal-rank search.
KRUSKAL_MAX_COLS = 12


@dataclass(frozen=True)
class RankReport:
    """Outcome of a thresholded numerical-rank computation.

    Attributes
    ----------
    singular_values : np.ndarray
        All ``min(m, n)`` singular values, descending.
    numerical_rank : int
        ``#{i : sigma_i > threshold_used * sigma_1}``.
    threshold_used : float
        The relative tolerance applied.
    gap_ratio : float
        ``sigma_r / sigma_{r+1}`` at the cut ``r = numerical_rank``;
        ``inf`` when the cut sits at the end of the spectrum or the next
        singular value is exactly zero.
    """

    singular_values: np.ndarray = field(repr=False)
    numerical_rank: int
    threshold_used: float
    gap_ratio: float


def numerical_rank(matrix: np.ndarray, tol_rel: float = DEFAULT_TOL_REL) -> RankReport:
    """SVD-based numerical rank with a relative threshold.

    Parameters
    ----------
    matrix : array_like
        Real matrix with finite entries.
    tol_rel : float
        Relative cut in ``(0, 1)``; singular values above
        ``tol_rel * sigma_1`` count toward the rank.
    """
    m = np.asarray(matrix, dtype=np.float64)
    if m.ndim != 2 or m.size == 0:
        raise ValueError("numerical_rank expects a nonempty 2-d array")
    if not np.all(np.isfinite(m)):
        raise ValueError("matrix contains non-finite entries")
    if not 0.0 < tol_rel < 1.0:
        raise ValueError("tol_rel must lie in (0, 1)")

    s = np.linalg.svd(m, compute_uv=False)
    rank = int(np.sum(s > tol_rel * s[0]))
    if 0 < rank < s.size and s[rank] > 0.0:
        gap = float(s[rank - 1] / s[rank])
    else:
        gap = float("inf")
    return RankReport(
        singular_values=s, numerical_rank=rank, threshold_used=tol_rel, gap_ratio=gap
    )


def kronecker(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Kronecker product ``a (x) b`` (block matrix ``a[i, j] * b``)."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim != 2 or b.ndim != 2:
        raise ValueError("kronecker expects 2-d arrays")
    return np.kron(a, b)


def khatri_rao(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Column-wise Kronecker product; operands must share a column count."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim != 2 or b.ndim != 2:
        raise ValueError("khatri_rao expects 2-d arrays")
    if a.shape[1] != b.shape[1]:
        raise ValueError(
            f"column counts differ: {a.shape[1]} vs {b.shape[1]}"
        )
    return np.einsum("ic,jc->ijc", a, b).reshape(a.shape[0] * b.shape[0], a.shape[1])


def kruskal_rank(matrix: np.ndarray, tol_rel: float = DEFAULT_TOL_REL) -> int:
    """Largest ``r`` such that every ``r`` columns are linearly independent.

    Exhaustive subset search; refuses matrices with more than
    ``KRUSKAL_MAX_COLS`` columns.  A matrix with a (numerically) zero column
    has Kruskal rank 0.
    """
    m = np.asarray(matrix, dtype=np.float64)
    if m.ndim != 2 or m.size == 0:
        raise ValueError("kruskal_rank expects a nonempty 2-d array")
    ncols = m.shape[1]
    if ncols > KRUSKAL_MAX_COLS:
        raise SizeBudgetError(
            f"kruskal_rank supports at most {KRUSKAL_MAX_COLS} columns, got {ncols}"
        )
    cap = min(m.shape)
    for r in range(1, cap + 1):
        for cols in combinations(range(ncols), r):
            if numerical_rank(m[:, cols], tol_rel).numerical_rank < r:
                return r - 1
    return cap
