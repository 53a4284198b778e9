"""Independent brute-force reference implementations for the tests.

Everything here works entry-by-entry with plain Python loops and dicts so
that the vectorized library paths are checked against genuinely separate
arithmetic, including separate index bookkeeping.
"""

from __future__ import annotations

import math
from itertools import product

import numpy as np


def pack(config, base: int) -> int:
    """Mixed-radix pack, first coordinate most significant (re-derived here)."""
    code = 0
    for x in config:
        code = code * base + x
    return code


def naive_population_tensor(latent_probs, cpts, num_observed, observed_levels,
                            latent_levels, num_latent) -> np.ndarray:
    """P(Y = y) by direct double loop over observed and latent configurations."""
    V, H, J, K = observed_levels, latent_levels, num_observed, num_latent
    parent_sets = {c.observed_index: list(c.parents) for c in cpts}
    tables = {c.observed_index: c.table for c in cpts}
    out = np.zeros(V**J)
    for y in product(range(V), repeat=J):
        total = 0.0
        for a in product(range(H), repeat=K):
            term = latent_probs[pack(a, H)]
            for j in range(J):
                cfg = tuple(a[k] for k in parent_sets[j])
                term *= tables[j][y[j], pack(cfg, H)]
            total += term
        out[pack(y, V)] = total
    return out


def naive_rbm_joint(spec) -> dict[tuple, float]:
    """P(Y = y, A = a) for an energy model, from the raw parameters only."""
    graph, cards, fam = spec.graph, spec.cards, spec.family
    J, K = graph.num_observed, graph.num_latent
    V, H = cards.observed_levels, cards.latent_levels
    edges = [(j, k) for j in range(J) for k in range(K) if graph.edges[j, k]]
    weights = {}
    for y in product(range(V), repeat=J):
        for a in product(range(H), repeat=K):
            energy = 0.0
            for j, k in edges:
                energy += float(np.asarray(fam.pair_energies[(j, k)])[y[j], a[k]])
            for j in range(J):
                energy += float(np.asarray(fam.observed_bias)[j, y[j]])
            for k in range(K):
                energy += float(np.asarray(fam.latent_bias)[k, a[k]])
            weights[(y, a)] = math.exp(energy)
    norm = sum(weights.values())
    return {cell: w / norm for cell, w in weights.items()}


def naive_latent_pair_table(latent_probs, num_latent, latent_levels,
                            set1, set2) -> np.ndarray:
    """P(A_set1, A_set2) by looping over all latent configurations."""
    H, K = latent_levels, num_latent
    s1, s2 = sorted(set1), sorted(set2)
    out = np.zeros((H ** len(s1), H ** len(s2)))
    for a in product(range(H), repeat=K):
        r = pack(tuple(a[k] for k in s1), H)
        c = pack(tuple(a[k] for k in s2), H)
        out[r, c] += latent_probs[pack(a, H)]
    return out


def naive_unfolding(tensor_flat, num_modes, levels, row_group, col_group) -> np.ndarray:
    """Joint table of two variable groups by summing cells one at a time."""
    rows, cols = sorted(row_group), sorted(col_group)
    V = levels
    out = np.zeros((V ** len(rows), V ** len(cols)))
    for y in product(range(V), repeat=num_modes):
        r = pack(tuple(y[j] for j in rows), V)
        c = pack(tuple(y[j] for j in cols), V)
        out[r, c] += tensor_flat[pack(y, V)]
    return out
