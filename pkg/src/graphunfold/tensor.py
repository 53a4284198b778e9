"""Population probability tensors, marginals, unfoldings, and latent tables.

The joint pmf of the ``J`` observed variables is stored flat in the global
mixed-radix order (first variable most significant), which coincides with
NumPy's C-order ravel of a ``(V,) * J`` array.  Unfolding reshapes a
marginal of the tensor into a matrix whose rows and columns are indexed by
configurations of two disjoint variable groups; every structural statement
the recovery module certifies is a rank statement about such matrices.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import reduce

import numpy as np

from ._indexing import all_configs, subcode
from .errors import SizeBudgetError
from .model import Cpt, LatentJoint

#: Default size budgets for materializing a population tensor.
MAX_CELLS = 2**24
MAX_LATENT_CONFIGS = 2**20

#: Mass-conservation tolerance for tensors.
TENSOR_MASS_TOL = 1e-10


@dataclass(frozen=True)
class PopTensor:
    """Flat ``V^J`` joint pmf of ``J`` observed variables with ``V`` levels."""

    num_modes: int
    levels: int
    data: np.ndarray

    def __post_init__(self):
        d = np.asarray(self.data, dtype=np.float64)
        if d.shape != (self.levels**self.num_modes,):
            raise ValueError("tensor data has wrong length")
        if (d < 0).any():
            raise ValueError("tensor has negative entries")
        if abs(d.sum() - 1.0) > TENSOR_MASS_TOL:
            raise ValueError("tensor mass differs from 1 beyond tolerance")
        d = np.ascontiguousarray(d)
        d.setflags(write=False)
        object.__setattr__(self, "data", d)

    def as_ndarray(self) -> np.ndarray:
        """View of the data shaped ``(V,) * J``."""
        return self.data.reshape((self.levels,) * self.num_modes)


@dataclass(frozen=True)
class UnfoldedMatrix:
    """Joint probability table of two disjoint observed-variable groups.

    Entry ``(r, c)`` is ``P(Y_{row_group} = decode(r), Y_{col_group} = decode(c))``.
    """

    row_group: tuple[int, ...]
    col_group: tuple[int, ...]
    matrix: np.ndarray


@dataclass(frozen=True)
class LatentJointTable:
    """Joint probability table of two (possibly overlapping) latent groups.

    Entries for configurations that disagree on the overlap are zero; with
    identical groups the table is diagonal.
    """

    set1: tuple[int, ...]
    set2: tuple[int, ...]
    matrix: np.ndarray


def population_tensor(
    latent: LatentJoint,
    cpts: list[Cpt],
    max_cells: int = MAX_CELLS,
    max_latent_configs: int = MAX_LATENT_CONFIGS,
) -> PopTensor:
    """Exact joint pmf of the observed variables.

    Marginalizes the latent vector by direct summation in ascending
    mixed-radix order, so the result is bit-reproducible regardless of any
    surrounding parallelism.

    Raises
    ------
    SizeBudgetError
        When ``V^J`` or ``H^K`` exceeds its budget.
    """
    J = len(cpts)
    if J < 1:
        raise ValueError("need at least one observed variable")
    V = cpts[0].table.shape[0]
    H, K = latent.latent_levels, latent.num_latent
    if V**J > max_cells:
        raise SizeBudgetError(f"V^J = {V}^{J} exceeds the cell budget {max_cells}")
    if H**K > max_latent_configs:
        raise SizeBudgetError(
            f"H^K = {H}^{K} exceeds the latent-config budget {max_latent_configs}"
        )

    full = np.arange(H**K)
    col_codes = [subcode(full, H, K, cpt.parents) for cpt in cpts]
    data = np.zeros(V**J)
    for idx in range(H**K):
        p = latent.probabilities[idx]
        if p == 0.0:
            continue
        cols = [cpt.table[:, codes[idx]] for cpt, codes in zip(cpts, col_codes)]
        data += p * reduce(np.kron, cols)
    return PopTensor(num_modes=J, levels=V, data=data)


def marginal(t: PopTensor, modes) -> PopTensor:
    """Marginal pmf tensor of the variables in ``modes`` (sorted ascending)."""
    modes = sorted(set(int(m) for m in modes))
    if not modes:
        raise ValueError("modes must be nonempty")
    if modes[0] < 0 or modes[-1] >= t.num_modes:
        raise ValueError("modes out of range")
    drop = tuple(i for i in range(t.num_modes) if i not in modes)
    data = t.as_ndarray().sum(axis=drop).ravel()
    return PopTensor(num_modes=len(modes), levels=t.levels, data=data)


def unfold(t: PopTensor, row_group, col_group) -> UnfoldedMatrix:
    """Matrix unfolding with the given row and column groups.

    Variables outside both groups are summed out first; rows and columns are
    then indexed mixed-radix over the ascending-sorted groups.  Equivalent to
    marginalizing to ``row_group | col_group`` and reshaping.
    """
    rows = sorted(set(int(i) for i in row_group))
    cols = sorted(set(int(i) for i in col_group))
    if not rows or not cols:
        raise ValueError("row and column groups must be nonempty")
    if set(rows) & set(cols):
        raise ValueError("row and column groups must be disjoint")
    if min(rows + cols) < 0 or max(rows + cols) >= t.num_modes:
        raise ValueError("group indices out of range")

    keep = sorted(rows + cols)
    drop = tuple(i for i in range(t.num_modes) if i not in keep)
    arr = t.as_ndarray().sum(axis=drop)
    perm = [keep.index(i) for i in rows + cols]
    V = t.levels
    matrix = arr.transpose(perm).reshape(V ** len(rows), V ** len(cols))
    return UnfoldedMatrix(row_group=tuple(rows), col_group=tuple(cols),
                          matrix=np.ascontiguousarray(matrix))


def latent_joint_table(latent: LatentJoint, set1, set2) -> LatentJointTable:
    """Joint probability table ``P(A_{set1}, A_{set2})``; overlap allowed."""
    s1 = sorted(set(int(i) for i in set1))
    s2 = sorted(set(int(i) for i in set2))
    if not s1 or not s2:
        raise ValueError("both index sets must be nonempty")
    K, H = latent.num_latent, latent.latent_levels
    if min(s1 + s2) < 0 or max(s1 + s2) >= K:
        raise ValueError("latent indices out of range")
    full = np.arange(H**K)
    r = subcode(full, H, K, s1)
    c = subcode(full, H, K, s2)
    table = np.zeros((H ** len(s1), H ** len(s2)))
    np.add.at(table, (r, c), latent.probabilities)
    return LatentJointTable(set1=tuple(s1), set2=tuple(s2), matrix=table)


def conditional_matrix(cpts: list[Cpt], observed, latents, latent_levels: int) -> np.ndarray:
    """Explicit conditional table ``P(Y_observed | A_latents)``.

    Rows are indexed mixed-radix over the ascending observed group, columns
    over the ascending latent group, which must contain every parent of the
    group.  Materializes a ``V^|observed| x H^|latents|`` array, so this is a
    test oracle and factorization helper, not a recovery-path primitive.
    """
    obs = sorted(set(int(j) for j in observed))
    lats = sorted(set(int(k) for k in latents))
    by_index = {c.observed_index: c for c in cpts}
    H = latent_levels
    needed = set()
    for j in obs:
        needed.update(by_index[j].parents)
    if not needed <= set(lats):
        raise ValueError("latent group must contain every parent of the observed group")

    n_cols = H ** len(lats)
    full = np.arange(n_cols)
    mat = np.ones((1, n_cols))
    for j in obs:
        cpt = by_index[j]
        positions = [lats.index(k) for k in cpt.parents]
        codes = subcode(full, H, len(lats), positions)
        block = cpt.table[:, codes]
        mat = (mat[:, None, :] * block[None, :, :]).reshape(-1, n_cols)
    return mat


# ---------------------------------------------------------------------------
# Tensor dumps
# ---------------------------------------------------------------------------

_HEADER_PREFIX = "PTENSOR v1"


def dump_tensor(t: PopTensor, path, fmt: str = "binary") -> None:
    """Write ``PTENSOR v1`` dump: a text header line, then the entries in
    row-major order as text (one per line) or little-endian 8-byte floats."""
    header = f"{_HEADER_PREFIX} {t.num_modes} {t.levels}\n"
    if fmt == "csv":
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(header)
            for x in t.data:
                fh.write(f"{float(x)!r}\n")
    elif fmt == "binary":
        with open(path, "wb") as fh:
            fh.write(header.encode("ascii"))
            fh.write(t.data.astype("<f8").tobytes())
    else:
        raise ValueError(f"unknown tensor format {fmt!r}")


def load_tensor(path) -> PopTensor:
    """Read a ``PTENSOR v1`` dump, sniffing text vs binary payload."""
    with open(path, "rb") as fh:
        raw = fh.read()
    newline = raw.find(b"\n")
    if newline < 0:
        raise ValueError("missing tensor header line")
    try:
        header = raw[:newline].decode("ascii")
    except UnicodeDecodeError as exc:
        raise ValueError("unreadable tensor header") from exc
    parts = header.split()
    if len(parts) != 4 or " ".join(parts[:2]) != _HEADER_PREFIX:
        raise ValueError(f"bad tensor header {header!r}")
    num_modes, levels = int(parts[2]), int(parts[3])
    n = levels**num_modes
    payload = raw[newline + 1 :]
    if len(payload) == 8 * n:
        data = np.frombuffer(payload, dtype="<f8").astype(np.float64)
    else:
        lines = payload.decode("ascii").split()
        if len(lines) != n:
            raise ValueError(f"expected {n} entries, found {len(lines)}")
        data = np.array([float(x) for x in lines])
    return PopTensor(num_modes=num_modes, levels=levels, data=data)
