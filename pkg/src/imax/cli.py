"""Command-line front end: ``imax convert|select|spread|bench``."""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys

from .parallel import ENV_THREADS

log = logging.getLogger("imax")

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2


def _positive_int(text):
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be positive, got {v}")
    return v


def _positive_float(text):
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a number, got {text!r}") from None
    if not v > 0:
        raise argparse.ArgumentTypeError(f"must be positive, got {v}")
    return v


def _add_model_flags(p):
    p.add_argument("--model", choices=("ic", "wc", "lt"), default="wc")
    p.add_argument("--rho", type=_positive_float, default=1.0, help="activeness for wc/lt: w(u,v)=min(1, rho/|In(v)|)")
    p.add_argument("--w", type=_positive_float, default=0.001, help="uniform edge probability for ic")
    p.add_argument("--directed", action="store_true", help="treat the edge list as directed (default: mirror every edge)")
    p.add_argument("--explicit-weights", action="store_true", help="use the weight column of the input instead of --rho/--w")
    p.add_argument("--rng-seed", type=int, default=0)
    p.add_argument("--threads", type=_positive_int, default=None, help=f"kernel threads (default ${ENV_THREADS} or all)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="imax", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("convert", help="normalize an edge list or generate a synthetic one")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--input")
    src.add_argument("--synthetic", choices=("power-law", "nethept"))
    p.add_argument("--output", required=True)
    p.add_argument("--directed", action="store_true")
    p.add_argument("--weights", choices=("none", "rho", "w", "explicit"), default="none",
                   help="write a weight column computed with --rho / --w, or copied from the input")
    p.add_argument("--rho", type=_positive_float, default=1.0)
    p.add_argument("--w", type=_positive_float, default=0.001)
    p.add_argument("--n", type=_positive_int, default=15_000)
    p.add_argument("--avg-degree", type=_positive_float, default=4.1)
    p.add_argument("--graph-seed", type=int, default=7)

    p = sub.add_parser("select", help="run one seed-selection algorithm")
    p.add_argument("--alg", choices=("rcelf", "rcelf-nobound", "greedy", "celf", "sg", "ris"), required=True)
    p.add_argument("--k", type=_positive_int, required=True)
    p.add_argument("--r", type=_positive_int, default=None, help="simulations (rcelf/greedy/celf) or snapshots (sg)")
    p.add_argument("--theta", type=_positive_int, default=10_000, help="RR sets for ris")
    p.add_argument("--doubling", action="store_true", help="ris: double theta until coverage settles")
    p.add_argument("--max-theta", type=_positive_int, default=1 << 22)
    p.add_argument("--eval-r", type=_positive_int, default=10_000, help="simulations for the independent spread estimate")
    p.add_argument("--eval-seed", type=int, default=None)
    p.add_argument("--input", required=True)
    p.add_argument("--output", default="-")
    p.add_argument("--trace", action="store_true", help="include full per-seed contribution maps")
    _add_model_flags(p)

    p = sub.add_parser("spread", help="evaluate a given seed set")
    p.add_argument("--input", required=True)
    p.add_argument("--seeds", required=True, help="file with one original node id per line")
    p.add_argument("--r", type=_positive_int, default=10_000)
    p.add_argument("--output", default="-")
    _add_model_flags(p)

    p = sub.add_parser("bench", help="run an algorithms x rho x k matrix and write CSV")
    p.add_argument("matrix", help="JSON matrix file")
    p.add_argument("--output", default="-")
    p.add_argument("--in-process", action="store_true", help="skip per-run subprocesses (memory figures become cumulative)")
    p.add_argument("--threads", type=_positive_int, default=None)
    return parser


def _prepare_threads(n):
    """Size numba's pool before it is imported; kernels then use exactly n threads."""
    if n is not None and "numba" not in sys.modules:
        cap = max(n, os.cpu_count() or 1)
        os.environ["NUMBA_NUM_THREADS"] = str(cap)


def _write(text: str, path: str) -> None:
    if path == "-":
        sys.stdout.write(text + "\n")
    else:
        with open(path, "w") as fh:
            fh.write(text + "\n")


def cmd_convert(args) -> int:
    from .graph import WeightPolicy, load_graph, save_edge_list, write_id_map
    from .synthetic import nethept_like, power_law

    if args.weights == "explicit":
        policy = WeightPolicy.explicit()
    elif args.weights == "w":
        policy = WeightPolicy.uniform(args.w)
    else:
        policy = WeightPolicy.generalized(args.rho)
    if args.synthetic:
        if args.synthetic == "nethept":
            g = nethept_like(args.graph_seed, policy=policy, n=args.n)
        else:
            g = power_law(args.n, args.avg_degree, args.graph_seed, policy=policy, directed=args.directed)
    else:
        g = load_graph(args.input, directed=args.directed, policy=policy)
    save_edge_list(g, args.output, weights=args.weights != "none")
    write_id_map(g, args.output + ".ids.csv")
    log.info("wrote %s (n=%d, m=%d)", args.output, g.n, g.m)
    return EXIT_OK


def cmd_select(args) -> int:
    from .bench import RunConfig, run_config
    from .parallel import set_threads

    set_threads(args.threads)
    config = RunConfig(
        algorithm=args.alg, model=args.model, k=args.k, rho=args.rho, w=args.w, r=args.r,
        theta=args.theta, rng_seed=args.rng_seed, input=args.input, output=args.output,
        directed=args.directed, eval_r=args.eval_r, eval_seed=args.eval_seed,
        doubling=args.doubling, max_theta=args.max_theta, explicit_weights=args.explicit_weights,
    )
    report = run_config(config)
    if not args.trace:
        report.extra.pop("contribution_maps", None)
    _write(report.to_json(), args.output)
    return EXIT_OK


def _read_seed_ids(path: str) -> list[int]:
    ids = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            s = line.strip()
            if not s or s.startswith("#"):
                continue
            try:
                ids.append(int(s))
            except ValueError:
                raise ValueError(f"{path}:{lineno}: bad seed id {s!r}") from None
    return ids


def cmd_spread(args, parser) -> int:
    from .bench import RunConfig, evaluate, load_for
    from .parallel import set_threads

    set_threads(args.threads)
    ids = _read_seed_ids(args.seeds)
    if not ids:
        parser.error("seeds file is empty")
    config = RunConfig(algorithm="rcelf", model=args.model, rho=args.rho, w=args.w,
                       input=args.input, directed=args.directed, eval_r=args.r,
                       eval_seed=args.rng_seed, explicit_weights=args.explicit_weights)
    g = load_for(config)
    try:
        dense = [g.index_of(i) for i in ids]
    except KeyError as exc:
        raise ValueError(f"unknown seed id {exc.args[0]}") from None
    est = evaluate(g, dense, config)
    _write(json.dumps(est.to_dict(), indent=2, sort_keys=True), args.output)
    return EXIT_OK


def cmd_bench(args) -> int:
    from .bench import run_matrix

    with open(args.matrix) as fh:
        matrix = json.load(fh)
    base = os.path.dirname(os.path.abspath(args.matrix))
    if not os.path.isabs(matrix["input"]):
        matrix["input"] = os.path.join(base, matrix["input"])
    if args.output == "-":
        run_matrix(matrix, sys.stdout, isolate=not args.in_process, threads=args.threads)
    else:
        with open(args.output, "w", newline="") as fh:
            run_matrix(matrix, fh, isolate=not args.in_process, threads=args.threads)
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    _prepare_threads(getattr(args, "threads", None))
    from .errors import DomainError, GraphFormatError, ImaxError

    try:
        if args.command == "convert":
            return cmd_convert(args)
        if args.command == "select":
            return cmd_select(args)
        if args.command == "spread":
            return cmd_spread(args, parser)
        return cmd_bench(args)
    except GraphFormatError as exc:
        print(f"imax: parse error: {exc}", file=sys.stderr)
        return EXIT_FAILURE
    except (DomainError, ImaxError, ValueError, OSError) as exc:
        print(f"imax: error: {exc}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
