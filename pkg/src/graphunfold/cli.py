"""Command-line entry point for batch use.

Subcommands: ``generate`` (draw a random model and write its JSON document),
``tensor`` (compile a model and dump its population tensor), ``recover``
(run graph recovery on a tensor or a model), and ``simulate`` (sample a
model, recover from the sample, and compare against the planted graph).

Exit codes: 0 clean, 1 malformed input, 2 generation failure, 3 size budget
exceeded, 4 recovery finished with warnings (downgrade with
``--allow-warnings``).  Every subcommand is deterministic given its flags;
``--threads`` (or the ``TUI_THREADS`` environment variable) only caps
worker threads and never changes any output byte.
"""

from __future__ import annotations

import argparse
import os
import sys
from dataclasses import dataclass
from itertools import permutations

import numpy as np

from .empirical import (
    RankDecisionConfig,
    recover_graph_empirical,
    recover_graph_from_tensor,
    sample,
    spec_hash,
    write_samples,
)
from .errors import GenerationError, GraphUnfoldError, SizeBudgetError
from .model import FAMILY_NAMES, compile_model, model_from_json, model_to_json, random_model
from .recover import RecoveryResult, recover_graph, result_to_json
from .tensor import dump_tensor, load_tensor, population_tensor

EXIT_OK = 0
EXIT_INPUT = 1
EXIT_GENERATION = 2
EXIT_BUDGET = 3
EXIT_WARNINGS = 4


@dataclass(frozen=True)
class RunConfig:
    """Validated knobs shared by the recovery-running subcommands."""

    tol_rel: float
    rank_mode: str
    abs_threshold: float
    gap_floor: float
    marginal_order: int | None
    threads: int
    allow_warnings: bool

    def __post_init__(self):
        if not 0.0 < self.tol_rel < 1.0:
            raise ValueError("tol-rel must lie in (0, 1)")
        if self.threads < 1:
            raise ValueError("threads must be positive")

    def decision(self) -> RankDecisionConfig:
        return RankDecisionConfig(
            mode=self.rank_mode,
            tol_rel=self.tol_rel,
            abs_threshold=self.abs_threshold,
            gap_floor=self.gap_floor,
        )


def _default_threads() -> int:
    env = os.environ.get("TUI_THREADS", "")
    try:
        return max(1, int(env))
    except ValueError:
        return 1


def _add_run_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--tol-rel", type=float, default=1e-8,
                   help="relative singular-value cut for exact tensors")
    p.add_argument("--rank-mode", choices=("gap", "absolute", "relative"),
                   default=None, help="rank decision rule (default: relative "
                   "for population mode, gap for empirical mode)")
    p.add_argument("--abs-threshold", type=float, default=0.0,
                   help="absolute singular-value cut for --rank-mode=absolute")
    p.add_argument("--gap-floor", type=float, default=10.0,
                   help="minimum decisive spectral-gap ratio for --rank-mode=gap")
    p.add_argument("--marginal-order", type=int, default=None,
                   help="restrict stage-1 tests to marginals of this order")
    p.add_argument("--allow-warnings", action="store_true",
                   help="exit 0 even when recovery raises warnings")


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="graphunfold",
        description="Latent bipartite graph recovery via tensor unfolding",
    )
    parser.add_argument("--threads", type=int, default=None,
                        help="worker-thread cap (default: $TUI_THREADS or 1)")
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="draw a random model and write its JSON")
    g.add_argument("--J", type=int, required=True)
    g.add_argument("--K", type=int, required=True)
    g.add_argument("--V", type=int, default=2)
    g.add_argument("--H", type=int, default=2)
    g.add_argument("--family", choices=FAMILY_NAMES[:-1], required=True)
    g.add_argument("--link", choices=("identity", "logistic", "probit"),
                   default="logistic")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--extra-row", action="append", default=None,
                   metavar="BITS", help="pin one extra graph row, e.g. '1,1'")
    g.add_argument("--out", required=True)

    t = sub.add_parser("tensor", help="compile a model and dump its tensor")
    t.add_argument("--spec", required=True)
    t.add_argument("--out", required=True)
    t.add_argument("--format", choices=("csv", "binary"), default="binary")

    r = sub.add_parser("recover", help="recover the graph from a tensor or model")
    src = r.add_mutually_exclusive_group(required=True)
    src.add_argument("--tensor", help="PTENSOR v1 dump")
    src.add_argument("--spec", help="model JSON (compiled to its exact tensor)")
    r.add_argument("--H", type=int, default=None,
                   help="latent level count (required with --tensor)")
    r.add_argument("--mode", choices=("population", "empirical"),
                   default="population")
    r.add_argument("--out", default=None, help="write result JSON here "
                   "(default: stdout)")
    _add_run_flags(r)

    s = sub.add_parser("simulate", help="sample a model and recover from the sample")
    s.add_argument("--spec", required=True)
    s.add_argument("--n", type=int, required=True)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out-prefix", required=True)
    _add_run_flags(s)
    return parser


def _run_config(args, default_mode: str) -> RunConfig:
    return RunConfig(
        tol_rel=args.tol_rel,
        rank_mode=args.rank_mode or default_mode,
        abs_threshold=args.abs_threshold,
        gap_floor=args.gap_floor,
        marginal_order=args.marginal_order,
        threads=args.threads if args.threads is not None else _default_threads(),
        allow_warnings=args.allow_warnings,
    )


def _print_graph(edges: np.ndarray, label: str) -> None:
    print(label)
    for row in edges:
        print(" ".join(str(int(x)) for x in row))


def _cmd_generate(args) -> int:
    try:
        extra = None
        if args.extra_row is not None:
            extra = [[int(b) for b in row.split(",")] for row in args.extra_row]
        spec = random_model(
            args.J, args.K, args.V, args.H, args.family,
            extra_impure_rows=extra, rng_seed=args.seed, link=args.link,
        )
    except (GenerationError, ValueError) as exc:
        print(f"generation failed: {exc}", file=sys.stderr)
        return EXIT_GENERATION
    with open(args.out, "w", encoding="utf-8") as fh:
        fh.write(model_to_json(spec))
        fh.write("\n")
    _print_graph(spec.graph.edges, "planted graph:")
    return EXIT_OK


def _cmd_tensor(args) -> int:
    try:
        with open(args.spec, encoding="utf-8") as fh:
            spec = model_from_json(fh.read())
        latent, cpts = compile_model(spec)
    except (OSError, ValueError, GraphUnfoldError) as exc:
        print(f"bad model input: {exc}", file=sys.stderr)
        return EXIT_INPUT
    try:
        t = population_tensor(latent, cpts)
    except SizeBudgetError as exc:
        print(f"budget exceeded: {exc}", file=sys.stderr)
        return EXIT_BUDGET
    dump_tensor(t, args.out, fmt=args.format)
    print(f"entries={t.data.size} sum={float(t.data.sum())!r}")
    return EXIT_OK


def _finish_recovery(result: RecoveryResult, out, allow_warnings: bool) -> int:
    text = result_to_json(result)
    if out is None:
        print(text)
    else:
        with open(out, "w", encoding="utf-8") as fh:
            fh.write(text)
            fh.write("\n")
    for w in result.warnings:
        print(f"warning: {w}", file=sys.stderr)
    if result.warnings and not allow_warnings:
        return EXIT_WARNINGS
    return EXIT_OK


def _cmd_recover(args) -> int:
    try:
        cfg = _run_config(args, "relative" if args.mode == "population" else "gap")
        if args.tensor is not None:
            if args.H is None:
                raise ValueError("--H is required when recovering from a tensor")
            t = load_tensor(args.tensor)
            H = args.H
        else:
            with open(args.spec, encoding="utf-8") as fh:
                spec = model_from_json(fh.read())
            latent, cpts = compile_model(spec)
            t = population_tensor(latent, cpts)
            H = args.H if args.H is not None else spec.cards.latent_levels
    except SizeBudgetError as exc:
        print(f"budget exceeded: {exc}", file=sys.stderr)
        return EXIT_BUDGET
    except (OSError, ValueError, GraphUnfoldError) as exc:
        print(f"bad input: {exc}", file=sys.stderr)
        return EXIT_INPUT
    if args.mode == "population" and cfg.rank_mode == "relative":
        result = recover_graph(t, H, cfg.tol_rel,
                               marginal_order=cfg.marginal_order,
                               threads=cfg.threads)
    else:
        result = recover_graph_from_tensor(t, H, cfg.decision(),
                                           marginal_order=cfg.marginal_order,
                                           threads=cfg.threads)
    return _finish_recovery(result, args.out, cfg.allow_warnings)


def _hamming_rows(g_true: np.ndarray, g_hat: np.ndarray) -> tuple[bool, list[int]]:
    """Best per-row Hamming errors over column permutations of the estimate."""
    J, K = g_true.shape
    k_hat = g_hat.shape[1]
    width = max(K, k_hat)
    a = np.zeros((J, width), dtype=np.int8)
    b = np.zeros((J, width), dtype=np.int8)
    a[:, :K] = g_true
    b[:, :k_hat] = g_hat
    best = None
    for perm in permutations(range(width)):
        rows = (a != b[:, perm]).sum(axis=1)
        if best is None or rows.sum() < sum(best):
            best = [int(x) for x in rows]
    return sum(best) == 0 and K == k_hat, best


def _cmd_simulate(args) -> int:
    try:
        cfg = _run_config(args, "gap")
        with open(args.spec, encoding="utf-8") as fh:
            spec = model_from_json(fh.read())
        draws = sample(spec, args.n, args.seed)
    except (OSError, ValueError, GraphUnfoldError) as exc:
        print(f"bad input: {exc}", file=sys.stderr)
        return EXIT_INPUT
    sample_path = f"{args.out_prefix}.samples.csv"
    write_samples(draws, sample_path, model_hash=spec_hash(spec))
    result = recover_graph_empirical(draws, spec.cards.latent_levels,
                                     cfg.decision(),
                                     marginal_order=cfg.marginal_order,
                                     threads=cfg.threads)
    rc = _finish_recovery(result, f"{args.out_prefix}.recovery.json",
                          cfg.allow_warnings)
    exact, row_err = _hamming_rows(spec.graph.edges, result.G_hat)
    print(f"samples={sample_path}")
    print(f"recovery={args.out_prefix}.recovery.json")
    print(f"exact_match={exact}")
    print(f"row_hamming={row_err}")
    return rc


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    if args.command == "generate":
        return _cmd_generate(args)
    if args.command == "tensor":
        return _cmd_tensor(args)
    if args.command == "recover":
        return _cmd_recover(args)
    if args.command == "simulate":
        return _cmd_simulate(args)
    raise AssertionError("unreachable")


if __name__ == "__main__":
    sys.exit(main())
