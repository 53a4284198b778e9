"""Constructive recovery of the loading graph from a probability tensor.

Stage 1 tests every pair of observed variables: the pair unfolding (pair as
row group, everything else as column group) has rank at most ``H`` exactly
when both variables are pure children of one shared latent variable.
Connected components of the pass relation therefore reveal the number of
latent variables and all pure children.  Stage 2 then certifies each
remaining (variable, latent) membership through one further unfolding whose
rank exceeds ``H^(K-1)`` exactly when the edge is present.

Both stages reduce to thresholded rank decisions on small matrices; the
decision rule is pluggable so the finite-sample pipeline can reuse the
identical control flow with a spectral-gap rule instead of the exact
relative-tolerance rule.
"""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from itertools import combinations
from typing import Callable

import numpy as np

from .linalg import DEFAULT_TOL_REL, RankReport, numerical_rank
from .tensor import PopTensor, unfold

#: A rank decision: matrix and threshold in, (report, decided rank, rank <= threshold) out.
RankDecider = Callable[[np.ndarray, int], tuple[RankReport, int, bool]]


def relative_rank_decider(tol_rel: float = DEFAULT_TOL_REL) -> RankDecider:
    """Exact-tensor decision rule: threshold the relative-tolerance numerical rank."""

    def decide(matrix: np.ndarray, threshold: int):
        report = numerical_rank(matrix, tol_rel)
        return report, report.numerical_rank, report.numerical_rank <= threshold

    return decide


@dataclass(frozen=True)
class PairTestRecord:
    """Stage-1 certificate for one pair of observed variables."""

    pair: tuple[int, int]
    col_group: tuple[int, ...]
    rank_report: RankReport
    rank: int
    passed: bool


@dataclass(frozen=True)
class MembershipTestRecord:
    """Stage-2 certificate for one (observed variable, latent column) pair."""

    observed: int
    latent: int
    row_group: tuple[int, ...]
    col_group: tuple[int, ...]
    rank_report: RankReport
    rank: int
    member: bool


@dataclass(frozen=True)
class RecoveryResult:
    """Estimated latent count, loading graph, and full per-test diagnostics.

    Columns of ``G_hat`` are ordered by the smallest member of each pure
    group, so the result is deterministic; the truth is recovered up to this
    canonical column permutation.
    """

    K_hat: int
    G_hat: np.ndarray
    pure_groups: tuple[tuple[int, ...], ...]
    pair_records: tuple[PairTestRecord, ...] = field(repr=False)
    stage2_records: tuple[MembershipTestRecord, ...] = field(repr=False)
    warnings: tuple[str, ...]


def _run_ordered(tasks, worker, threads: int):
    """Apply ``worker`` over ``tasks`` keeping task order in the output."""
    if threads > 1 and len(tasks) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(worker, tasks))
    return [worker(task) for task in tasks]


def pair_rank_marginal(
    t: PopTensor, j1: int, j2: int, subset, tol_rel: float = DEFAULT_TOL_REL
) -> RankReport:
    """Rank certificate of the pair unfolding restricted to column group ``subset``.

    ``subset`` must avoid ``j1`` and ``j2`` and contain at least two
    variables.  For a pure pair this rank stays at most ``H`` for every
    subset; a subset containing a complete set of pure children pushes the
    rank of any non-pure pair above ``H``.
    """
    s = sorted(set(int(i) for i in subset))
    if j1 == j2:
        raise ValueError("pair indices must differ")
    if len(s) < 2:
        raise ValueError("column subset needs at least two variables")
    if {int(j1), int(j2)} & set(s):
        raise ValueError("column subset must avoid the pair")
    return numerical_rank(unfold(t, (j1, j2), s).matrix, tol_rel)


def _pair_decision(t, pair, H, decider, marginal_order):
    """Best (most adversarial) rank certificate for one pair."""
    j1, j2 = pair
    rest = [i for i in range(t.num_modes) if i not in pair]
    if not rest:
        # J == 2: the unfolding degenerates to one column, which always
        # stays within rank H
        report, rank, passed = decider(t.data.reshape(-1, 1), H)
        return PairTestRecord(pair=pair, col_group=(), rank_report=report,
                              rank=rank, passed=passed)
    if marginal_order is None:
        groups = [tuple(rest)]
    else:
        groups = [s for s in combinations(rest, marginal_order - 2)]
    best = None
    for cols in groups:
        report, rank, passed = decider(unfold(t, pair, cols).matrix, H)
        if best is None or rank > best[2]:
            best = (cols, report, rank, passed)
        if not passed:
            break  # one failing subset already settles the pair
    cols, report, rank, passed = best
    return PairTestRecord(pair=pair, col_group=cols, rank_report=report,
                          rank=rank, passed=passed)


def find_pure_children(
    t: PopTensor,
    latent_levels: int,
    tol_rel: float = DEFAULT_TOL_REL,
    *,
    decider: RankDecider | None = None,
    marginal_order: int | None = None,
    threads: int = 1,
) -> tuple[int, tuple[tuple[int, ...], ...], tuple[PairTestRecord, ...], tuple[str, ...]]:
    """Stage 1: find the latent count and all pure children via pair tests.

    Tests every pair of observed variables, builds the undirected pass graph,
    and returns its connected components of size at least two as pure groups
    (ordered by smallest member).  Components are additionally verified to be
    cliques; a non-clique component signals a regularity violation and is
    reported as a warning, never an error.

    With ``marginal_order=m`` the pair test inspects every column group of
    size ``m - 2`` instead of the full complement and passes only when all of
    them stay within rank ``H``; order ``2K`` is enough to reproduce the
    full-tensor decision.
    """
    J = t.num_modes
    if J < 2:
        raise ValueError("need at least two observed variables")
    if marginal_order is not None and not 4 <= marginal_order <= J:
        raise ValueError("marginal order must lie in [4, J]")
    if decider is None:
        decider = relative_rank_decider(tol_rel)

    pairs = list(combinations(range(J), 2))
    records = _run_ordered(
        pairs, lambda p: _pair_decision(t, p, latent_levels, decider, marginal_order),
        threads,
    )

    adjacency = {j: set() for j in range(J)}
    for rec in records:
        if rec.passed:
            adjacency[rec.pair[0]].add(rec.pair[1])
            adjacency[rec.pair[1]].add(rec.pair[0])

    seen: set[int] = set()
    groups = []
    for j in range(J):
        if j in seen:
            continue
        stack, comp = [j], {j}
        while stack:
            for nb in adjacency[stack.pop()]:
                if nb not in comp:
                    comp.add(nb)
                    stack.append(nb)
        seen |= comp
        if len(comp) >= 2:
            groups.append(tuple(sorted(comp)))
    groups.sort(key=lambda g: g[0])

    warnings = []
    passed_pairs = {rec.pair for rec in records if rec.passed}
    for g in groups:
        missing = [p for p in combinations(g, 2) if p not in passed_pairs]
        if missing:
            warnings.append(
                f"pure group {g} is not a clique (missing pairs {missing}); "
                "regularity violation suspected"
            )
    return len(groups), tuple(groups), tuple(records), tuple(warnings)


def fill_multi_parent_rows(
    t: PopTensor,
    pure_groups,
    latent_levels: int,
    tol_rel: float = DEFAULT_TOL_REL,
    *,
    decider: RankDecider | None = None,
    threads: int = 1,
) -> tuple[dict[int, np.ndarray], tuple[MembershipTestRecord, ...], tuple[str, ...]]:
    """Stage 2: certify each (unassigned variable, latent) membership.

    Takes the first member of each pure group as the base representative and
    the second as the probe column set.  For variable ``j`` and latent ``k``,
    the unfolding with row group (base set minus ``k``'s representative, plus
    ``j``) against the probe set has rank above ``H^(K-1)`` exactly when
    ``j`` loads on latent ``k``.
    """
    groups = [tuple(g) for g in pure_groups]
    if any(len(g) < 2 for g in groups):
        raise ValueError("every pure group needs at least two members")
    if decider is None:
        decider = relative_rank_decider(tol_rel)

    K = len(groups)
    H = latent_levels
    base = [g[0] for g in groups]
    probe = tuple(sorted(g[1] for g in groups))
    assigned = {j for g in groups for j in g}
    free = [j for j in range(t.num_modes) if j not in assigned]
    threshold = H ** (K - 1)

    tasks = [(j, k) for j in free for k in range(K)]

    def worker(task):
        j, k = task
        row_group = tuple(sorted([b for i, b in enumerate(base) if i != k] + [j]))
        report, rank, passed = decider(unfold(t, row_group, probe).matrix, threshold)
        return MembershipTestRecord(
            observed=j, latent=k, row_group=row_group, col_group=probe,
            rank_report=report, rank=rank, member=not passed,
        )

    records = _run_ordered(tasks, worker, threads)

    rows: dict[int, np.ndarray] = {}
    warnings = []
    for j in free:
        row = np.zeros(K, dtype=np.int8)
        for rec in records:
            if rec.observed == j and rec.member:
                row[rec.latent] = 1
        count = int(row.sum())
        if count == 0:
            warnings.append(
                f"variable {j}: no latent connection certified; row left empty "
                "(regularity violation suspected)"
            )
        elif count == 1:
            warnings.append(
                f"variable {j}: membership certificate returned a single "
                "connection, but an undetected pure child is inconsistent with "
                "stage 1; regularity violation suspected"
            )
        rows[j] = row
    return rows, tuple(records), tuple(warnings)


def recover_graph(
    t: PopTensor,
    latent_levels: int,
    tol_rel: float = DEFAULT_TOL_REL,
    *,
    decider: RankDecider | None = None,
    marginal_order: int | None = None,
    threads: int = 1,
) -> RecoveryResult:
    """Recover the latent count and the full loading graph from a tensor.

    The number of latent levels ``H`` is required input: every certificate
    thresholds a rank against ``H`` or ``H^(K-1)``, so a wrong ``H`` silently
    changes every decision.

    Returns
    -------
    RecoveryResult
        ``K_hat`` latent variables, a ``J x K_hat`` binary graph with columns
        in canonical (smallest-pure-member) order, the pure groups, all rank
        certificates, and any warnings raised along the way.
    """
    K_hat, groups, pair_records, warnings1 = find_pure_children(
        t, latent_levels, tol_rel, decider=decider,
        marginal_order=marginal_order, threads=threads,
    )
    J = t.num_modes
    g_hat = np.zeros((J, K_hat), dtype=np.int8)
    for k, group in enumerate(groups):
        for j in group:
            g_hat[j, k] = 1

    stage2_records: tuple[MembershipTestRecord, ...] = ()
    warnings2: tuple[str, ...] = ()
    assigned = {j for g in groups for j in g}
    free = [j for j in range(J) if j not in assigned]
    if free and K_hat > 0:
        rows, stage2_records, warnings2 = fill_multi_parent_rows(
            t, groups, latent_levels, tol_rel, decider=decider, threads=threads,
        )
        for j, row in rows.items():
            g_hat[j] = row
    elif free:
        warnings2 = tuple(
            f"variable {j}: no pure structure found anywhere; row left empty"
            for j in free
        )

    return RecoveryResult(
        K_hat=K_hat,
        G_hat=g_hat,
        pure_groups=groups,
        pair_records=tuple(pair_records),
        stage2_records=tuple(stage2_records),
        warnings=tuple(warnings1) + tuple(warnings2),
    )


def result_to_json(result: RecoveryResult) -> str:
    """Canonical JSON document for a recovery result."""
    diagnostics = []
    for rec in result.pair_records:
        diagnostics.append({
            "stage": 1,
            "row_group": list(rec.pair),
            "col_group": list(rec.col_group),
            "singular_values": [float(s) for s in rec.rank_report.singular_values],
            "rank": rec.rank,
            "passed": rec.passed,
        })
    for rec in result.stage2_records:
        diagnostics.append({
            "stage": 2,
            "observed": rec.observed,
            "latent": rec.latent,
            "row_group": list(rec.row_group),
            "col_group": list(rec.col_group),
            "singular_values": [float(s) for s in rec.rank_report.singular_values],
            "rank": rec.rank,
            "passed": bool(rec.member),
        })
    doc = {
        "K_hat": result.K_hat,
        "G_hat": [int(x) for x in result.G_hat.ravel()],
        "pure_groups": [list(g) for g in result.pure_groups],
        "diagnostics": diagnostics,
        "warnings": list(result.warnings),
    }
    return json.dumps(doc, indent=2, sort_keys=True)
