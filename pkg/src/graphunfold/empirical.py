"""Finite-sample pipeline: sampling, empirical tensors, gap-based recovery.

The estimator side of the package carries no statistical guarantees; it
feeds an empirical tensor through the identical recovery control flow, with
the exact relative-tolerance rank rule swapped for a spectral-gap rule (or a
user-fixed absolute threshold).  All per-test spectra are retained in the
result so threshold behavior can be audited after the fact.

Reproducibility contract: sampling uses the counter-based Philox generator,
keyed ``(seed, block_index)`` over fixed-size row blocks, so a (spec, seed,
n) triple yields identical samples regardless of how the work is scheduled.
"""

from __future__ import annotations

import csv
import hashlib
import json
from dataclasses import dataclass

import numpy as np

from ._indexing import subcode
from .linalg import DEFAULT_TOL_REL, RankReport, numerical_rank
from .model import ModelSpec, compile_model, model_to_json
from .recover import RankDecider, RecoveryResult, recover_graph
from .tensor import PopTensor

#: Rows drawn per generator block; fixed so results never depend on scheduling.
SAMPLE_BLOCK = 1 << 16


@dataclass(frozen=True)
class SampleSet:
    """I.i.d. draws of the observed vector: ``n`` rows over ``{0..V-1}^J``."""

    rows: np.ndarray
    levels: int
    seed: int | None = None

    def __post_init__(self):
        r = np.asarray(self.rows)
        if r.ndim != 2 or r.shape[0] < 1:
            raise ValueError("rows must be a nonempty n x J array")
        if r.min() < 0 or r.max() >= self.levels:
            raise ValueError("sample entries out of range")
        r = np.ascontiguousarray(r.astype(np.int64))
        r.setflags(write=False)
        object.__setattr__(self, "rows", r)

    @property
    def n(self) -> int:
        return self.rows.shape[0]


def sample(spec: ModelSpec, n: int, seed: int) -> SampleSet:
    """Forward-simulate ``n`` observations from a model.

    Each row draws the latent configuration by inverse CDF over the
    mixed-radix order of the latent joint, then each observed variable by
    inverse CDF of its conditional column.  Uniform variates come from
    Philox streams keyed ``(seed, block)`` over blocks of ``SAMPLE_BLOCK``
    rows: one latent batch per block, then one ``(block, J)`` observed batch.
    """
    if n < 1:
        raise ValueError("sample size must be positive")
    latent, cpts = compile_model(spec)
    H, K = latent.latent_levels, latent.num_latent
    V = spec.cards.observed_levels
    J = len(cpts)

    latent_cdf = np.cumsum(latent.probabilities)
    col_codes_cache = []
    cond_cdfs = []
    for cpt in cpts:
        cond_cdfs.append(np.cumsum(cpt.table, axis=0).T)  # (H^m, V)
        col_codes_cache.append(cpt.parents)

    out = np.empty((n, J), dtype=np.int64)
    for block, start in enumerate(range(0, n, SAMPLE_BLOCK)):
        stop = min(start + SAMPLE_BLOCK, n)
        size = stop - start
        key = np.array([np.uint64(seed & (2**64 - 1)), np.uint64(block)])
        rng = np.random.Generator(np.random.Philox(key=key))
        u_latent = rng.random(size)
        u_obs = rng.random((size, J))
        a_code = np.minimum(
            np.searchsorted(latent_cdf, u_latent, side="right"), H**K - 1
        )
        for jidx, cpt in enumerate(cpts):
            cols = subcode(a_code, H, K, cpt.parents)
            cdf = cond_cdfs[jidx][cols]  # (size, V)
            out[start:stop, jidx] = (u_obs[:, jidx, None] >= cdf[:, : V - 1]).sum(
                axis=1
            )
    return SampleSet(rows=out, levels=V, seed=seed)


def empirical_tensor(samples: SampleSet, levels: int | None = None) -> PopTensor:
    """Cell frequencies of a sample, laid out exactly like a population tensor.

    Total mass is ``n / n = 1`` by construction (integer cell counts).
    """
    V = samples.levels if levels is None else int(levels)
    J = samples.rows.shape[1]
    powers = V ** np.arange(J - 1, -1, -1, dtype=np.int64)
    codes = samples.rows @ powers
    counts = np.bincount(codes, minlength=V**J)
    return PopTensor(num_modes=J, levels=V, data=counts / samples.n)


def merge_samples(a: SampleSet, b: SampleSet) -> SampleSet:
    """Concatenate two sample sets over the same variables."""
    if a.levels != b.levels or a.rows.shape[1] != b.rows.shape[1]:
        raise ValueError("sample sets are not compatible")
    return SampleSet(rows=np.vstack([a.rows, b.rows]), levels=a.levels, seed=None)


# ---------------------------------------------------------------------------
# Rank estimation from noisy spectra
# ---------------------------------------------------------------------------


def estimate_rank_gap(report: RankReport, max_rank: int) -> int:
    """Rank estimate at the largest consecutive singular-value ratio.

    Returns ``argmax over r <= max_rank of sigma_r / sigma_{r+1}``, ties
    broken toward smaller ``r``.  ``max_rank`` must stay below the number of
    singular values, so the ratio at every candidate cut exists.
    """
    s = report.singular_values
    if not 1 <= max_rank < s.size:
        raise ValueError("max_rank must lie in [1, #singular values)")
    best_r, best_ratio = 1, -np.inf
    for r in range(1, max_rank + 1):
        hi, lo = s[r - 1], s[r]
        if hi == 0.0:
            ratio = 1.0  # spectrum is exhausted; no gap information here
        elif lo == 0.0:
            ratio = np.inf
        else:
            ratio = hi / lo
        if ratio > best_ratio:
            best_r, best_ratio = r, ratio
    return best_r


@dataclass(frozen=True)
class RankDecisionConfig:
    """How the empirical pipeline turns a spectrum into a rank decision.

    mode "gap" (default): when the spectrum carries a machine-precision
    boundary (some singular value below ``tol_rel * sigma_1``, which happens
    for exact tensors but never for sampled ones at practical sample sizes),
    trust it -- this makes feeding an exact tensor through the empirical
    pipeline coincide with population recovery.  Otherwise estimate the rank
    at the largest consecutive spectral gap, and when even the best ratio
    falls below ``gap_floor``, declare the spectrum gap-free, i.e. full rank.
    mode "absolute": count singular values above ``abs_threshold``.
    mode "relative": the exact-tensor rule (count above ``tol_rel * sigma_1``).
    """

    mode: str = "gap"
    tol_rel: float = DEFAULT_TOL_REL
    abs_threshold: float = 0.0
    gap_floor: float = 150.0


def make_decider(config: RankDecisionConfig) -> RankDecider:
    """Build the pluggable rank decision used inside the recovery stages."""
    if config.mode not in ("gap", "absolute", "relative"):
        raise ValueError(f"unknown rank decision mode {config.mode!r}")

    def decide(matrix: np.ndarray, threshold: int):
        report = numerical_rank(matrix, config.tol_rel)
        s = report.singular_values
        if config.mode == "relative":
            est = report.numerical_rank
        elif config.mode == "absolute":
            est = int(np.sum(s > config.abs_threshold))
        elif report.numerical_rank < s.size:
            est = report.numerical_rank  # machine-precision boundary: trust it
        else:
            est = estimate_rank_gap(report, max_rank=s.size - 1)
            ratio = np.inf if s[est] == 0.0 else (
                1.0 if s[est - 1] == 0.0 else s[est - 1] / s[est]
            )
            if ratio < config.gap_floor:
                est = s.size  # no salient gap anywhere: treat as full rank
        return report, est, est <= threshold

    return decide


def recover_graph_from_tensor(
    t: PopTensor,
    latent_levels: int,
    config: RankDecisionConfig | None = None,
    *,
    marginal_order: int | None = None,
    threads: int = 1,
) -> RecoveryResult:
    """Run the recovery control flow on an already-built tensor.

    Without an explicit config this entry point assumes the tensor is exact
    and applies the relative-tolerance rule, so passing the population tensor
    through the empirical pipeline reproduces population recovery verbatim.
    Hand in a gap or absolute config for tensors built from data.
    """
    config = config or RankDecisionConfig(mode="relative")
    return recover_graph(
        t, latent_levels, config.tol_rel, decider=make_decider(config),
        marginal_order=marginal_order, threads=threads,
    )


def recover_graph_empirical(
    samples: SampleSet,
    latent_levels: int,
    config: RankDecisionConfig | None = None,
    *,
    marginal_order: int | None = None,
    threads: int = 1,
) -> RecoveryResult:
    """Finite-sample recovery: empirical tensor plus gap-based rank decisions.

    Per-test spectra and decided ranks are retained in the result records so
    the thresholding behavior can be audited.
    """
    return recover_graph_from_tensor(
        empirical_tensor(samples), latent_levels,
        config or RankDecisionConfig(mode="gap"),
        marginal_order=marginal_order, threads=threads,
    )


# ---------------------------------------------------------------------------
# Sample files
# ---------------------------------------------------------------------------


def spec_hash(spec: ModelSpec) -> str:
    """SHA-256 of the canonical model document."""
    return hashlib.sha256(model_to_json(spec).encode("utf-8")).hexdigest()


def write_samples(samples: SampleSet, path, model_hash: str | None = None) -> None:
    """Write a sample CSV (header ``y1..yJ``) plus a metadata sidecar JSON."""
    J = samples.rows.shape[1]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow([f"y{j + 1}" for j in range(J)])
        writer.writerows(samples.rows.tolist())
    meta = {
        "levels": samples.levels,
        "n": samples.n,
        "seed": samples.seed,
        "spec_hash": model_hash,
    }
    with open(f"{path}.meta.json", "w", encoding="utf-8") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_samples(path, levels: int | None = None) -> SampleSet:
    """Read a sample CSV; the level count comes from the sidecar when present."""
    seed = None
    if levels is None:
        try:
            with open(f"{path}.meta.json", encoding="utf-8") as fh:
                meta = json.load(fh)
            levels = int(meta["levels"])
            seed = meta.get("seed")
        except FileNotFoundError as exc:
            raise ValueError(
                "level count not given and no metadata sidecar found"
            ) from exc
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or not all(h.startswith("y") for h in header):
            raise ValueError("malformed sample file header")
        rows = np.array([[int(x) for x in row] for row in reader], dtype=np.int64)
    return SampleSet(rows=rows, levels=levels, seed=seed)
