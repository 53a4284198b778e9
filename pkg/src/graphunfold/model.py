"""Discrete latent bipartite graphical models.

A model couples a binary loading graph between ``K`` latent and ``J``
observed categorical variables with a conditional family for each observed
variable given its connected latents.  Directed families (noisy-or and the
link-function effect models) have marginally independent latents; the
energy-based family induces a generally dependent latent joint.

Everything compiles down to one pair of objects consumed by the tensor
module: a :class:`LatentJoint` (the joint pmf of the latent vector) and one
:class:`Cpt` per observed variable.  All containers are immutable after
construction and all operations are pure, so compiled models can be shared
freely across threads.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import reduce
from itertools import combinations
from typing import Union

import numpy as np

from ._indexing import all_configs, encode, subcode
from .errors import GenerationError, NumericOverflowError, ParameterDomainError
from .linalg import DEFAULT_TOL_REL, numerical_rank

#: Default equality tolerance for the edge-influence check.
DEFAULT_TOL_EQ = 1e-9

#: Mass-conservation tolerance for compiled probability tables.
MASS_TOL = 1e-12

LINK_NAMES = ("identity", "logistic", "probit")

FAMILY_NAMES = (
    "noisy-or",
    "main-effect",
    "all-effect",
    "main-interaction",
    "general-rbm",
    "explicit-cpts",
)


def _apply_link(link: str, x: np.ndarray) -> np.ndarray:
    if link == "identity":
        return np.asarray(x, dtype=np.float64)
    if link == "logistic":
        return 1.0 / (1.0 + np.exp(-np.asarray(x, dtype=np.float64)))
    if link == "probit":
        return np.array(
            [0.5 * (1.0 + math.erf(v / math.sqrt(2.0))) for v in np.atleast_1d(x)],
            dtype=np.float64,
        )
    raise ValueError(f"unknown link {link!r}; expected one of {LINK_NAMES}")


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


# ---------------------------------------------------------------------------
# Domain types
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class BipartiteGraph:
    """Binary loading graph between ``J`` observed and ``K`` latent variables.

    ``edges[j, k] == 1`` links observed variable ``j`` to latent variable
    ``k``.  Every observed variable must have at least one connection.
    """

    edges: np.ndarray

    def __post_init__(self):
        e = np.asarray(self.edges)
        if e.ndim != 2 or e.shape[0] < 1 or e.shape[1] < 1:
            raise ValueError("edges must be a nonempty J x K matrix")
        if not np.isin(e, (0, 1)).all():
            raise ValueError("edges must be binary")
        if (e.sum(axis=1) < 1).any():
            raise ValueError("every observed variable needs at least one connection")
        object.__setattr__(self, "edges", _frozen(e.astype(np.int8)))

    @property
    def num_observed(self) -> int:
        return self.edges.shape[0]

    @property
    def num_latent(self) -> int:
        return self.edges.shape[1]

    def connected(self, j: int) -> tuple[int, ...]:
        """Sorted latent indices connected to observed variable ``j``."""
        return tuple(int(k) for k in np.flatnonzero(self.edges[j]))


@dataclass(frozen=True)
class CardinalitySpec:
    """Category counts: ``V`` per observed variable, ``H`` per latent one."""

    observed_levels: int
    latent_levels: int

    def __post_init__(self):
        if self.latent_levels < 2 or self.observed_levels < 2:
            raise ValueError("both level counts must be at least 2")
        if self.observed_levels < self.latent_levels:
            raise ValueError("observed_levels must be >= latent_levels")


@dataclass(frozen=True)
class NoisyOr:
    """``P(Y_j = 0 | a) = exp(-(leak_j + sum_k w_jk * a_k))``; binary observed."""

    weights: dict[tuple[int, int], float]
    leak: dict[int, float] = field(default_factory=dict)


@dataclass(frozen=True)
class MainEffect:
    """``P(Y_j = 0 | a) = f(sum_k w_jk * a_k)``; binary observed."""

    link: str
    weights: dict[tuple[int, int], float]


@dataclass(frozen=True)
class AllEffect:
    """``P(Y_j = 1 | a) = f(sum_{S subset of co(j)} beta_{j,S} prod_{k in S} a_k)``.

    ``coefficients`` is keyed by ``(j, S)`` with ``S`` a sorted tuple of
    latent indices; a coefficient must be present for every subset of every
    ``co(j)``, the empty set included.
    """

    link: str
    coefficients: dict[tuple[int, tuple[int, ...]], float]


@dataclass(frozen=True)
class MainInteraction:
    """Main effects plus the single top-order interaction of all of ``co(j)``."""

    link: str
    intercept: dict[int, float]
    weights: dict[tuple[int, int], float]
    top_order: dict[int, float]


@dataclass(frozen=True)
class GeneralRbm:
    """Pairwise energy model over the bipartite graph.

    ``pair_energies[(j, k)]`` is a ``V x H`` table of interaction energies,
    ``observed_bias`` is ``J x V``, ``latent_bias`` is ``K x H``.  Latents
    are generally dependent under this family.
    """

    pair_energies: dict[tuple[int, int], np.ndarray]
    observed_bias: np.ndarray
    latent_bias: np.ndarray


@dataclass(frozen=True)
class ExplicitCpts:
    """Raw column-stochastic tables, one ``V x H^|co(j)|`` array per ``j``."""

    tables: dict[int, np.ndarray]


FamilyParams = Union[
    NoisyOr, MainEffect, AllEffect, MainInteraction, GeneralRbm, ExplicitCpts
]

#: Latent layer specification: per-variable marginals (directed families),
#: the literal string "rbm-induced", or an explicit joint pmf of length H^K
#: (explicit-cpts models only).
LatentSpec = Union[tuple, list, str, np.ndarray]


@dataclass(frozen=True)
class LatentJoint:
    """Joint pmf of the latent vector, flat over mixed-radix configurations."""

    probabilities: np.ndarray
    num_latent: int
    latent_levels: int

    def __post_init__(self):
        p = np.asarray(self.probabilities, dtype=np.float64)
        if p.shape != (self.latent_levels**self.num_latent,):
            raise ValueError("latent joint has wrong length")
        if (p < 0).any():
            raise ValueError("latent joint has negative entries")
        if abs(p.sum() - 1.0) > MASS_TOL:
            raise ValueError("latent joint does not sum to 1")
        object.__setattr__(self, "probabilities", _frozen(p))

    def marginal(self, k: int) -> np.ndarray:
        """Univariate marginal pmf of latent variable ``k``."""
        H, K = self.latent_levels, self.num_latent
        shaped = self.probabilities.reshape((H,) * K)
        axes = tuple(i for i in range(K) if i != k)
        return shaped.sum(axis=axes)


@dataclass(frozen=True)
class Cpt:
    """Conditional table ``P(Y_j | A_{co(j)})``, one column per parent config.

    Columns follow the global mixed-radix convention over the ascending
    parent set; each column sums to one.
    """

    observed_index: int
    parents: tuple[int, ...]
    table: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.table, dtype=np.float64)
        if t.ndim != 2:
            raise ValueError("cpt table must be 2-d")
        if tuple(self.parents) != tuple(sorted(set(self.parents))):
            raise ValueError("parents must be sorted and unique")
        if (t < 0).any():
            raise ValueError("cpt has negative entries")
        if np.abs(t.sum(axis=0) - 1.0).max() > MASS_TOL:
            raise ValueError("cpt columns must sum to 1")
        object.__setattr__(self, "parents", tuple(int(k) for k in self.parents))
        object.__setattr__(self, "table", _frozen(t))


@dataclass(frozen=True)
class ModelSpec:
    """Full generative model: graph + cardinalities + family + latent layer."""

    graph: BipartiteGraph
    cards: CardinalitySpec
    family: FamilyParams
    latent: LatentSpec
    seed: int | None = None


# ---------------------------------------------------------------------------
# Compilation
# ---------------------------------------------------------------------------


def _check_edge_keys(keys, graph: BipartiteGraph, what: str) -> None:
    expected = {
        (j, k)
        for j in range(graph.num_observed)
        for k in graph.connected(j)
    }
    got = set(keys)
    if got != expected:
        missing = sorted(expected - got)
        extra = sorted(got - expected)
        raise ValueError(f"{what} keys do not match the edge set "
                         f"(missing {missing}, extra {extra})")


def _binary_table(p_zero: np.ndarray, link_name: str) -> np.ndarray:
    p_zero = np.asarray(p_zero, dtype=np.float64)
    if (p_zero < 0).any() or (p_zero > 1).any():
        raise ParameterDomainError(
            f"{link_name} link produced probabilities outside [0, 1]"
        )
    return np.vstack([p_zero, 1.0 - p_zero])


def _cpt_noisy_or(fam: NoisyOr, j, parents, cfgs) -> np.ndarray:
    w = np.array([fam.weights[(j, k)] for k in parents])
    p0 = np.exp(-(fam.leak.get(j, 0.0) + cfgs @ w))
    return _binary_table(p0, "exponential")


def _cpt_main_effect(fam: MainEffect, j, parents, cfgs) -> np.ndarray:
    w = np.array([fam.weights[(j, k)] for k in parents])
    return _binary_table(_apply_link(fam.link, cfgs @ w), fam.link)


def _cpt_all_effect(fam: AllEffect, j, parents, cfgs) -> np.ndarray:
    eta = np.zeros(len(cfgs))
    for (jj, subset), beta in fam.coefficients.items():
        if jj != j:
            continue
        pos = [parents.index(k) for k in subset]
        eta += beta * np.prod(cfgs[:, pos], axis=1) if pos else beta
    p1 = _apply_link(fam.link, eta)
    table = _binary_table(p1, fam.link)
    return table[::-1]  # link gives P(Y=1); rows are (P(Y=0), P(Y=1))


def _cpt_main_interaction(fam: MainInteraction, j, parents, cfgs) -> np.ndarray:
    w = np.array([fam.weights[(j, k)] for k in parents])
    eta = fam.intercept[j] + cfgs @ w + fam.top_order[j] * np.prod(cfgs, axis=1)
    table = _binary_table(_apply_link(fam.link, eta), fam.link)
    return table[::-1]


def _rbm_column_weights(fam: GeneralRbm, j: int, parents, cfgs) -> np.ndarray:
    """Unnormalized ``exp`` response of Y_j, shape ``(V, n_configs)``."""
    energy = fam.observed_bias[j][:, None] + sum(
        np.asarray(fam.pair_energies[(j, k)], dtype=np.float64)[:, cfgs[:, i]]
        for i, k in enumerate(parents)
    )
    with np.errstate(over="ignore"):
        w = np.exp(energy)
    if not np.all(np.isfinite(w)):
        raise NumericOverflowError(
            f"energy normalizer for observed variable {j} overflowed; "
            "recenter the energies"
        )
    return w


def _compile_rbm(spec: ModelSpec) -> tuple[LatentJoint, list[Cpt]]:
    graph, cards, fam = spec.graph, spec.cards, spec.family
    J, K = graph.num_observed, graph.num_latent
    V, H = cards.observed_levels, cards.latent_levels

    cpts = []
    log_nu = np.zeros(H**K)
    full = np.arange(H**K)
    for j in range(J):
        parents = graph.connected(j)
        cfgs = all_configs(H, len(parents))
        weights = _rbm_column_weights(fam, j, parents, cfgs)
        z = weights.sum(axis=0)
        cpts.append(Cpt(j, parents, weights / z))
        # The joint over (Y, A) factors per observed variable once A is
        # fixed, so the latent joint picks up one per-variable normalizer
        # per configuration of that variable's neighbors.
        log_nu += np.log(z)[subcode(full, H, K, parents)]
    lat = np.asarray(fam.latent_bias, dtype=np.float64)
    for k in range(K):
        log_nu += lat[k][subcode(full, H, K, [k])]
    with np.errstate(over="ignore"):
        nu = np.exp(log_nu)
    total = nu.sum()
    if not np.isfinite(total) or total <= 0.0:
        raise NumericOverflowError(
            "latent normalizer overflowed; recenter the energies"
        )
    return LatentJoint(nu / total, K, H), cpts


_BINARY_BUILDERS = {
    NoisyOr: _cpt_noisy_or,
    MainEffect: _cpt_main_effect,
    AllEffect: _cpt_all_effect,
    MainInteraction: _cpt_main_interaction,
}


def validate_model(spec: ModelSpec) -> None:
    """Check dimension and index-set consistency; raise ``ValueError`` on defects."""
    graph, cards, fam = spec.graph, spec.cards, spec.family
    J, K = graph.num_observed, graph.num_latent
    V, H = cards.observed_levels, cards.latent_levels

    if isinstance(fam, (NoisyOr, MainEffect, AllEffect, MainInteraction)):
        if V != 2:
            raise ValueError(f"{type(fam).__name__} requires binary observed variables")
        if isinstance(fam, (MainEffect, AllEffect, MainInteraction)):
            if fam.link not in LINK_NAMES:
                raise ValueError(f"unknown link {fam.link!r}")
        if isinstance(fam, (NoisyOr, MainEffect)):
            _check_edge_keys(fam.weights.keys(), graph, "weight")
        if isinstance(fam, MainInteraction):
            _check_edge_keys(fam.weights.keys(), graph, "weight")
            if set(fam.intercept) != set(range(J)) or set(fam.top_order) != set(range(J)):
                raise ValueError("intercept and top_order need one entry per j")
        if isinstance(fam, AllEffect):
            expected = {
                (j, subset)
                for j in range(J)
                for m in range(len(graph.connected(j)) + 1)
                for subset in _subsets(graph.connected(j), m)
            }
            if set(fam.coefficients) != expected:
                raise ValueError("all-effect coefficients must cover every "
                                 "subset of every connected set exactly")
        if not (isinstance(spec.latent, (list, tuple)) and len(spec.latent) == K):
            raise ValueError("directed families need one marginal pmf per latent")
        for k, pmf in enumerate(spec.latent):
            p = np.asarray(pmf, dtype=np.float64)
            if p.shape != (H,) or (p < 0).any() or abs(p.sum() - 1.0) > MASS_TOL:
                raise ValueError(f"marginal for latent {k} is not a pmf of length {H}")
    elif isinstance(fam, GeneralRbm):
        _check_edge_keys(fam.pair_energies.keys(), graph, "pair energy")
        for (j, k), e in fam.pair_energies.items():
            if np.asarray(e).shape != (V, H):
                raise ValueError(f"pair energy ({j},{k}) must be {V} x {H}")
        if np.asarray(fam.observed_bias).shape != (J, V):
            raise ValueError("observed_bias must be J x V")
        if np.asarray(fam.latent_bias).shape != (K, H):
            raise ValueError("latent_bias must be K x H")
        if spec.latent != "rbm-induced":
            raise ValueError('energy models require latent="rbm-induced"')
    elif isinstance(fam, ExplicitCpts):
        if set(fam.tables) != set(range(J)):
            raise ValueError("explicit tables must cover every observed variable")
        for j, t in fam.tables.items():
            m = len(graph.connected(j))
            if np.asarray(t).shape != (V, H**m):
                raise ValueError(f"table for variable {j} must be {V} x {H}^{m}")
        nu = np.asarray(spec.latent, dtype=np.float64)
        if nu.shape != (H**K,):
            raise ValueError("explicit-cpts models need an explicit joint pmf")
    else:
        raise ValueError(f"unknown family {type(fam).__name__}")


def _subsets(items, size):
    return combinations(items, size)


def compile_model(spec: ModelSpec) -> tuple[LatentJoint, list[Cpt]]:
    """Compile a model into its latent joint and per-variable conditional tables.

    Directed families produce a latent joint equal to the outer product of
    the per-variable marginals.  The energy family produces the induced
    latent joint through its per-variable product factorization, costing
    ``O(H^K * sum_j V * H^|co(j)|)`` rather than a sweep over all
    ``V^J * H^K`` joint configurations.

    Returns
    -------
    (LatentJoint, list[Cpt])

    Raises
    ------
    ParameterDomainError
        If an identity-link probability leaves ``[0, 1]``.
    NumericOverflowError
        If an energy normalizer overflows double precision.
    """
    validate_model(spec)
    graph, cards, fam = spec.graph, spec.cards, spec.family
    H, K = cards.latent_levels, graph.num_latent

    if isinstance(fam, GeneralRbm):
        return _compile_rbm(spec)

    if isinstance(fam, ExplicitCpts):
        latent = LatentJoint(np.asarray(spec.latent, dtype=np.float64), K, H)
        cpts = [
            Cpt(j, graph.connected(j), np.asarray(fam.tables[j], dtype=np.float64))
            for j in range(graph.num_observed)
        ]
        return latent, cpts

    builder = _BINARY_BUILDERS[type(fam)]
    cpts = []
    for j in range(graph.num_observed):
        parents = graph.connected(j)
        cfgs = all_configs(H, len(parents))
        cpts.append(Cpt(j, parents, builder(fam, j, parents, cfgs)))
    nu = reduce(np.kron, [np.asarray(p, dtype=np.float64) for p in spec.latent])
    return LatentJoint(nu, K, H), cpts


# ---------------------------------------------------------------------------
# Regularity checks
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SingleParentRankReport:
    """Full-rank check of every single-parent conditional table."""

    ranks: dict[int, int]
    required_rank: int
    passed: bool


@dataclass(frozen=True)
class EdgeInfluenceReport:
    """Per-edge influence check: some neighbor configuration must make the
    conditional distribution of the child actually depend on the edge."""

    spreads: dict[tuple[int, int], float]
    tolerance: float
    passed: bool


def check_single_parent_rank(
    cpts: list[Cpt],
    cards: CardinalitySpec,
    graph: BipartiteGraph,
    tol_rel: float = DEFAULT_TOL_REL,
) -> SingleParentRankReport:
    """Report whether every single-parent ``V x H`` table has full rank ``H``.

    Report-only: never raises on failure.
    """
    H = cards.latent_levels
    ranks = {}
    for cpt in cpts:
        if len(cpt.parents) == 1:
            ranks[cpt.observed_index] = numerical_rank(cpt.table, tol_rel).numerical_rank
    passed = cards.observed_levels >= H and all(r == H for r in ranks.values())
    return SingleParentRankReport(ranks=ranks, required_rank=H, passed=passed)


def check_edge_influence(
    cpts: list[Cpt],
    graph: BipartiteGraph,
    cards: CardinalitySpec,
    tol_eq: float = DEFAULT_TOL_EQ,
) -> EdgeInfluenceReport:
    """Report, per edge ``(j, k)``, the largest conditional-distribution spread
    over the levels of ``A_k`` across all configurations of the other parents.

    An edge passes when its spread exceeds ``tol_eq``; the model passes when
    every edge does.
    """
    H = cards.latent_levels
    spreads: dict[tuple[int, int], float] = {}
    for cpt in cpts:
        m = len(cpt.parents)
        shaped = cpt.table.reshape((cards.observed_levels,) + (H,) * m)
        for pos, k in enumerate(cpt.parents):
            moved = np.moveaxis(shaped, 1 + pos, -1)
            spreads[(cpt.observed_index, k)] = float(np.ptp(moved, axis=-1).max())
    passed = all(s > tol_eq for s in spreads.values())
    return EdgeInfluenceReport(spreads=spreads, tolerance=tol_eq, passed=passed)


# ---------------------------------------------------------------------------
# Random generation
# ---------------------------------------------------------------------------


def _signed_uniform(rng, low, high, size):
    """Draw from Uniform([-high, -low] union [low, high])."""
    mag = rng.uniform(low, high, size=size)
    sign = rng.integers(0, 2, size=size) * 2 - 1
    return mag * sign


def _random_family(rng, family: str, graph: BipartiteGraph, cards, link: str):
    edges = [
        (j, k) for j in range(graph.num_observed) for k in graph.connected(j)
    ]
    if family == "noisy-or":
        return NoisyOr(weights={e: float(rng.uniform(0.5, 2.5)) for e in edges})
    if family == "main-effect":
        return MainEffect(
            link=link,
            weights={e: float(v) for e, v in zip(edges, _signed_uniform(rng, 0.5, 2.0, len(edges)))},
        )
    if family == "all-effect":
        coeffs = {}
        for j in range(graph.num_observed):
            co = graph.connected(j)
            for m in range(len(co) + 1):
                for subset in _subsets(co, m):
                    coeffs[(j, subset)] = float(_signed_uniform(rng, 0.5, 2.0, ()))
        return AllEffect(link=link, coefficients=coeffs)
    if family == "main-interaction":
        J = graph.num_observed
        return MainInteraction(
            link=link,
            intercept={j: float(_signed_uniform(rng, 0.5, 2.0, ())) for j in range(J)},
            weights={e: float(v) for e, v in zip(edges, _signed_uniform(rng, 0.5, 2.0, len(edges)))},
            top_order={j: float(_signed_uniform(rng, 0.5, 2.0, ())) for j in range(J)},
        )
    if family == "general-rbm":
        V, H = cards.observed_levels, cards.latent_levels
        return GeneralRbm(
            pair_energies={e: rng.uniform(-1.5, 1.5, size=(V, H)) for e in edges},
            observed_bias=rng.uniform(-1.5, 1.5, size=(graph.num_observed, V)),
            latent_bias=rng.uniform(-1.5, 1.5, size=(graph.num_latent, H)),
        )
    raise ValueError(f"cannot draw random parameters for family {family!r}")


def planted_graph(
    J: int, K: int, extra_rows: np.ndarray | None, rng=None
) -> BipartiteGraph:
    """Loading graph with two pure children per latent, then extra rows.

    Rows ``2k`` and ``2k + 1`` are the pure children of latent ``k`` (two
    identity blocks, up to row order); the remaining ``J - 2K`` rows are
    taken from ``extra_rows`` when given, otherwise drawn with row sums at
    least ``min(2, K)``.
    """
    if J < 2 * K:
        raise ValueError("need J >= 2K so every latent can have two pure children")
    pure = np.repeat(np.eye(K, dtype=np.int8), 2, axis=0)
    n_extra = J - 2 * K
    if extra_rows is not None:
        extra = np.asarray(extra_rows, dtype=np.int8).reshape(n_extra, K)
    else:
        extra = np.zeros((n_extra, K), dtype=np.int8)
        for i in range(n_extra):
            size = int(rng.integers(2, K + 1)) if K >= 2 else 1
            cols = rng.choice(K, size=size, replace=False)
            extra[i, cols] = 1
    return BipartiteGraph(np.vstack([pure, extra]))


def random_model(
    J: int,
    K: int,
    V: int,
    H: int,
    family: str,
    extra_impure_rows=None,
    rng_seed: int = 0,
    link: str = "logistic",
    latent_marginals=None,
    max_retries: int = 50,
) -> ModelSpec:
    """Draw a random model whose graph is two identity blocks over extra rows.

    Continuous parameters come from distributions bounded away from the
    degenerate sets where the regularity checks fail: noisy-or weights from
    ``U[0.5, 2.5]``, effect coefficients from ``±U[0.5, 2]``, energies from
    ``U[-1.5, 1.5]``.  Latent marginals for directed families default to
    Dirichlet(1, ..., 1) draws.  The draw is repeated (bounded retries) until
    both regularity checks pass, so the returned model is certified ready for
    recovery experiments.

    Parameters
    ----------
    J, K, V, H : int
        Dimensions; ``J >= 2K`` and ``V >= H`` required.
    family : str
        One of ``noisy-or``, ``main-effect``, ``all-effect``,
        ``main-interaction``, ``general-rbm``.
    extra_impure_rows : array_like, optional
        Pins the ``(J - 2K) x K`` block below the identity blocks.
    rng_seed : int
        Seed; fixed seed gives a byte-identical model.

    Raises
    ------
    GenerationError
        When no draw passes the regularity checks within ``max_retries``.
    """
    cards = CardinalitySpec(V, H)
    rng = np.random.default_rng(rng_seed)
    graph = planted_graph(J, K, extra_impure_rows, rng)
    for _ in range(max_retries):
        fam = _random_family(rng, family, graph, cards, link)
        if family == "general-rbm":
            latent: LatentSpec = "rbm-induced"
        elif latent_marginals is not None:
            latent = tuple(np.asarray(p, dtype=np.float64) for p in latent_marginals)
        else:
            # Dirichlet blended with uniform: absolutely continuous but every
            # level keeps mass >= 1/(2H), keeping the latent joint (and with
            # it the exact-rank margins) away from degeneracy.
            latent = tuple(
                0.5 * rng.dirichlet(np.ones(H)) + 0.5 / H for _ in range(K)
            )
        spec = ModelSpec(graph=graph, cards=cards, family=fam, latent=latent,
                         seed=rng_seed)
        joint, cpts = compile_model(spec)
        if (
            check_single_parent_rank(cpts, cards, graph).passed
            and check_edge_influence(cpts, graph, cards).passed
        ):
            return spec
    raise GenerationError(
        f"no draw passed the regularity checks in {max_retries} attempts"
    )


def permute_observed(spec: ModelSpec, order) -> ModelSpec:
    """Model with observed variables relabeled: new variable ``i`` is old
    variable ``order[i]``."""
    order = [int(i) for i in order]
    J = spec.graph.num_observed
    if sorted(order) != list(range(J)):
        raise ValueError("order must be a permutation of range(J)")
    inv = {old: new for new, old in enumerate(order)}
    graph = BipartiteGraph(spec.graph.edges[order])
    fam = spec.family
    if isinstance(fam, NoisyOr):
        fam = NoisyOr(
            weights={(inv[j], k): w for (j, k), w in fam.weights.items()},
            leak={inv[j]: v for j, v in fam.leak.items()},
        )
    elif isinstance(fam, MainEffect):
        fam = MainEffect(
            link=fam.link,
            weights={(inv[j], k): w for (j, k), w in fam.weights.items()},
        )
    elif isinstance(fam, AllEffect):
        fam = AllEffect(
            link=fam.link,
            coefficients={(inv[j], s): b for (j, s), b in fam.coefficients.items()},
        )
    elif isinstance(fam, MainInteraction):
        fam = MainInteraction(
            link=fam.link,
            intercept={inv[j]: v for j, v in fam.intercept.items()},
            weights={(inv[j], k): w for (j, k), w in fam.weights.items()},
            top_order={inv[j]: v for j, v in fam.top_order.items()},
        )
    elif isinstance(fam, GeneralRbm):
        fam = GeneralRbm(
            pair_energies={(inv[j], k): e for (j, k), e in fam.pair_energies.items()},
            observed_bias=np.asarray(fam.observed_bias)[order],
            latent_bias=fam.latent_bias,
        )
    elif isinstance(fam, ExplicitCpts):
        fam = ExplicitCpts(tables={inv[j]: t for j, t in fam.tables.items()})
    return ModelSpec(graph=graph, cards=spec.cards, family=fam,
                     latent=spec.latent, seed=spec.seed)


# ---------------------------------------------------------------------------
# JSON serialization
# ---------------------------------------------------------------------------


def _edge_key(j: int, k: int) -> str:
    return f"{j},{k}"


def _subset_key(j: int, subset: tuple[int, ...]) -> str:
    return ",".join(str(i) for i in (j, *subset))


def model_to_json(spec: ModelSpec) -> str:
    """Canonical JSON document for a model (stable key order, 2-space indent)."""
    graph, cards, fam = spec.graph, spec.cards, spec.family
    doc: dict = {
        "J": graph.num_observed,
        "K": graph.num_latent,
        "V": cards.observed_levels,
        "H": cards.latent_levels,
        "graph": [int(x) for x in graph.edges.ravel()],
        "seed": spec.seed,
    }
    if isinstance(fam, NoisyOr):
        doc["family"] = {
            "type": "noisy-or",
            "weights": {_edge_key(*e): w for e, w in sorted(fam.weights.items())},
            "leak": {str(j): v for j, v in sorted(fam.leak.items())},
        }
    elif isinstance(fam, MainEffect):
        doc["family"] = {
            "type": "main-effect",
            "link": fam.link,
            "weights": {_edge_key(*e): w for e, w in sorted(fam.weights.items())},
        }
    elif isinstance(fam, AllEffect):
        doc["family"] = {
            "type": "all-effect",
            "link": fam.link,
            "coefficients": {
                _subset_key(j, s): b for (j, s), b in sorted(fam.coefficients.items())
            },
        }
    elif isinstance(fam, MainInteraction):
        doc["family"] = {
            "type": "main-interaction",
            "link": fam.link,
            "intercept": {str(j): v for j, v in sorted(fam.intercept.items())},
            "weights": {_edge_key(*e): w for e, w in sorted(fam.weights.items())},
            "top_order": {str(j): v for j, v in sorted(fam.top_order.items())},
        }
    elif isinstance(fam, GeneralRbm):
        doc["family"] = {
            "type": "general-rbm",
            "pair_energies": {
                _edge_key(*e): np.asarray(t).tolist()
                for e, t in sorted(fam.pair_energies.items())
            },
            "observed_bias": np.asarray(fam.observed_bias).tolist(),
            "latent_bias": np.asarray(fam.latent_bias).tolist(),
        }
    elif isinstance(fam, ExplicitCpts):
        doc["family"] = {
            "type": "explicit-cpts",
            "tables": {str(j): np.asarray(t).tolist() for j, t in sorted(fam.tables.items())},
        }
    if isinstance(spec.latent, str):
        doc["latent"] = spec.latent
    elif isinstance(spec.latent, np.ndarray):
        doc["latent"] = {"joint": spec.latent.tolist()}
    else:
        doc["latent"] = {"marginals": [np.asarray(p).tolist() for p in spec.latent]}
    return json.dumps(doc, indent=2, sort_keys=True)


def _parse_edge_key(key: str) -> tuple[int, int]:
    j, k = key.split(",")
    return int(j), int(k)


def _parse_subset_key(key: str) -> tuple[int, tuple[int, ...]]:
    parts = [int(p) for p in key.split(",")]
    return parts[0], tuple(parts[1:])


def model_from_json(text: str) -> ModelSpec:
    """Inverse of :func:`model_to_json`; raises ``ValueError`` on malformed input."""
    try:
        doc = json.loads(text)
        J, K = int(doc["J"]), int(doc["K"])
        V, H = int(doc["V"]), int(doc["H"])
        graph = BipartiteGraph(np.asarray(doc["graph"], dtype=np.int8).reshape(J, K))
        cards = CardinalitySpec(V, H)
        f = doc["family"]
        ftype = f["type"]
        if ftype == "noisy-or":
            fam: FamilyParams = NoisyOr(
                weights={_parse_edge_key(e): float(w) for e, w in f["weights"].items()},
                leak={int(j): float(v) for j, v in f.get("leak", {}).items()},
            )
        elif ftype == "main-effect":
            fam = MainEffect(
                link=f["link"],
                weights={_parse_edge_key(e): float(w) for e, w in f["weights"].items()},
            )
        elif ftype == "all-effect":
            fam = AllEffect(
                link=f["link"],
                coefficients={
                    _parse_subset_key(c): float(b) for c, b in f["coefficients"].items()
                },
            )
        elif ftype == "main-interaction":
            fam = MainInteraction(
                link=f["link"],
                intercept={int(j): float(v) for j, v in f["intercept"].items()},
                weights={_parse_edge_key(e): float(w) for e, w in f["weights"].items()},
                top_order={int(j): float(v) for j, v in f["top_order"].items()},
            )
        elif ftype == "general-rbm":
            fam = GeneralRbm(
                pair_energies={
                    _parse_edge_key(e): np.asarray(t, dtype=np.float64)
                    for e, t in f["pair_energies"].items()
                },
                observed_bias=np.asarray(f["observed_bias"], dtype=np.float64),
                latent_bias=np.asarray(f["latent_bias"], dtype=np.float64),
            )
        elif ftype == "explicit-cpts":
            fam = ExplicitCpts(
                tables={int(j): np.asarray(t, dtype=np.float64) for j, t in f["tables"].items()}
            )
        else:
            raise ValueError(f"unknown family type {ftype!r}")
        lat = doc["latent"]
        if isinstance(lat, str):
            latent: LatentSpec = lat
        elif "joint" in lat:
            latent = np.asarray(lat["joint"], dtype=np.float64)
        else:
            latent = tuple(np.asarray(p, dtype=np.float64) for p in lat["marginals"])
        seed = doc.get("seed")
        spec = ModelSpec(graph=graph, cards=cards, family=fam, latent=latent,
                         seed=None if seed is None else int(seed))
        validate_model(spec)
        return spec
    except (KeyError, TypeError, json.JSONDecodeError) as exc:
        raise ValueError(f"malformed model document: {exc}") from exc
