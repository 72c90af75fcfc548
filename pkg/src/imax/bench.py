"""Run configurations, reports and the benchmark matrix runner."""

from __future__ import annotations

import csv
import itertools
import json
import logging
import os
import subprocess
import sys
import tempfile
import time
from dataclasses import asdict, dataclass, field, fields

from . import rng
from .baselines import GREEDY_DEFAULT_R, SG_DEFAULT_R, celf, greedy_mc, ris_select, sg_select
from .diffusion import DiffusionSpec, Model, SpreadEstimate, simulate_spread
from .errors import DomainError
from .graph import Graph, WeightPolicy, load_graph
from .rcelf import select_seeds_rcelf
from .result import SeedResult, peak_rss_bytes

log = logging.getLogger(__name__)

ALGORITHMS = ("rcelf", "rcelf-nobound", "greedy", "celf", "sg", "ris")
MODELS = ("ic", "wc", "lt")
RCELF_DEFAULT_R = 200
DEFAULT_THETA = 10_000
DEFAULT_IC_WEIGHT = 0.001

CSV_COLUMNS = (
    "alg", "model", "rho", "w", "k", "r", "theta", "rng_seed",
    "time_ms", "peak_rss", "delta", "spread_mean", "spread_se", "spread_runs",
    "exact_mg_count", "rr_set_count", "truncated", "seeds", "error",
)


@dataclass
class RunConfig:
    """One algorithm run.  ``rho`` applies to wc/lt, ``w`` to ic.

    ``r`` of None picks the algorithm's default simulation/snapshot count.
    """

    algorithm: str
    model: str = "wc"
    k: int = 1
    rho: float = 1.0
    w: float = DEFAULT_IC_WEIGHT
    r: int | None = None
    theta: int = DEFAULT_THETA
    rng_seed: int = 0
    input: str | None = None
    output: str | None = None
    directed: bool = False
    eval_r: int = 10_000
    eval_seed: int | None = None
    doubling: bool = False
    max_theta: int = 1 << 22
    explicit_weights: bool = False

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS:
            raise DomainError(f"unknown algorithm {self.algorithm!r}")
        if self.model not in MODELS:
            raise DomainError(f"unknown model {self.model!r}")
        if int(self.k) < 1:
            raise DomainError("k must be positive")
        for name in ("rho", "theta", "eval_r"):
            if not getattr(self, name) > 0:
                raise DomainError(f"{name} must be positive")
        if self.r is not None and int(self.r) < 1:
            raise DomainError("r must be positive")
        if self.model == "ic" and not self.explicit_weights and not 0.0 < self.w <= 1.0:
            raise DomainError("ic weight w must lie in (0, 1]")

    @property
    def diffusion_model(self) -> Model:
        return Model.LT if self.model == "lt" else Model.IC

    def policy(self) -> WeightPolicy:
        if self.explicit_weights:
            return WeightPolicy.explicit()
        if self.model == "ic":
            return WeightPolicy.uniform(self.w)
        return WeightPolicy.generalized(self.rho)

    def effective_r(self) -> int:
        if self.r is not None:
            return int(self.r)
        if self.algorithm in ("greedy", "celf"):
            return GREEDY_DEFAULT_R
        if self.algorithm == "sg":
            return SG_DEFAULT_R
        return RCELF_DEFAULT_R

    def spec(self) -> DiffusionSpec:
        return DiffusionSpec(self.diffusion_model, self.policy(), self.effective_r(), self.rng_seed)

    def echo(self) -> dict:
        d = asdict(self)
        d["r"] = self.effective_r()
        d["policy"] = self.policy().describe()
        if self.explicit_weights or self.model == "ic":
            d.pop("rho")
        if self.explicit_weights or self.model != "ic":
            d.pop("w")
        if self.algorithm != "ris":
            for key in ("theta", "doubling", "max_theta"):
                d.pop(key)
        d.pop("output")
        return d


@dataclass
class RunReport:
    """Serializable outcome of one run.  Seeds are original node ids.

    Everything outside ``metrics`` is a deterministic function of the config.
    """

    config: dict
    seeds: list
    gains: list
    delta_trace: list
    spread: dict
    exact_mg_computations: int
    truncated: bool = False
    extra: dict = field(default_factory=dict)
    metrics: dict = field(default_factory=dict)

    @property
    def delta(self) -> float:
        return self.delta_trace[-1] if self.delta_trace else 0.0

    def to_dict(self) -> dict:
        d = asdict(self)
        d["delta"] = self.delta
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> RunReport:
        names = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in d.items() if k in names})

    def csv_row(self) -> dict:
        c = self.config
        return {
            "alg": c.get("algorithm"),
            "model": c.get("model"),
            "rho": c.get("rho", ""),
            "w": c.get("w", ""),
            "k": c.get("k"),
            "r": c.get("r"),
            "theta": c.get("theta", ""),
            "rng_seed": c.get("rng_seed"),
            "time_ms": self.metrics.get("wall_time_ms"),
            "peak_rss": self.metrics.get("peak_rss_bytes"),
            "delta": self.delta,
            "spread_mean": self.spread.get("mean"),
            "spread_se": self.spread.get("std_error"),
            "spread_runs": self.spread.get("runs"),
            "exact_mg_count": self.exact_mg_computations,
            "rr_set_count": self.extra.get("rr_set_count", ""),
            "truncated": int(self.truncated),
            "seeds": " ".join(str(s) for s in self.seeds),
            "error": "",
        }

    @classmethod
    def from_csv_row(cls, row: dict) -> RunReport:
        """Rebuild the tabular part of a report from a bench CSV row."""
        if row.get("error"):
            raise ValueError(f"row records a failed run: {row['error']}")

        def num(key, cast=float):
            v = row.get(key, "")
            return None if v in ("", None) else cast(v)

        config = {"algorithm": row["alg"], "model": row["model"], "k": int(row["k"]),
                  "r": num("r", int), "rng_seed": num("rng_seed", int)}
        if row.get("rho"):
            config["rho"] = float(row["rho"])
        if row.get("w"):
            config["w"] = float(row["w"])
        if row.get("theta"):
            config["theta"] = int(row["theta"])
        extra = {}
        if row.get("rr_set_count"):
            extra["rr_set_count"] = int(row["rr_set_count"])
        seeds = [int(s) for s in row.get("seeds", "").split()]
        delta = float(row["delta"])
        return cls(
            config=config,
            seeds=seeds,
            gains=[],
            delta_trace=[delta] if seeds else [],
            spread={"mean": num("spread_mean"), "std_error": num("spread_se"),
                    "runs": num("spread_runs", int)},
            exact_mg_computations=int(row["exact_mg_count"]),
            truncated=bool(int(row.get("truncated") or 0)),
            extra=extra,
            metrics={"wall_time_ms": num("time_ms"), "peak_rss_bytes": num("peak_rss", int)},
        )


def load_for(config: RunConfig) -> Graph:
    return load_graph(config.input, directed=config.directed, policy=config.policy())


def run_algorithm(g: Graph, config: RunConfig) -> SeedResult:
    spec = config.spec()
    k = int(config.k)
    alg = config.algorithm
    if alg == "rcelf":
        return select_seeds_rcelf(g, k, spec, True)
    if alg == "rcelf-nobound":
        return select_seeds_rcelf(g, k, spec, False)
    if alg == "greedy":
        return greedy_mc(g, k, spec)
    if alg == "celf":
        return celf(g, k, spec)
    if alg == "sg":
        return sg_select(g, k, spec.r, config.rng_seed, spec.model)
    return ris_select(g, k, config.theta, spec, doubling=config.doubling, max_theta=config.max_theta)


def evaluate(g: Graph, seeds, config: RunConfig) -> SpreadEstimate:
    """Independent spread estimate; its random stream never overlaps selection's."""
    seed = config.rng_seed if config.eval_seed is None else config.eval_seed
    spec = DiffusionSpec(config.diffusion_model, config.policy(), config.eval_r, seed)
    return simulate_spread(g, seeds, spec, domain=rng.DOMAIN_EVAL)


def run_config(config: RunConfig, g: Graph | None = None) -> RunReport:
    """Load (if needed), select, evaluate; returns the report."""
    t0 = time.perf_counter()
    if g is None:
        g = load_for(config)
    if config.k > g.n:
        raise DomainError(f"k={config.k} exceeds node count {g.n}")
    res = run_algorithm(g, config)
    spread = evaluate(g, res.seeds, config)
    labels = g.labels
    extra = {k: v for k, v in res.extra.items() if k not in ("first_round_average",)}
    return RunReport(
        config=config.echo(),
        seeds=[int(labels[s]) for s in res.seeds],
        gains=res.gains,
        delta_trace=res.delta,
        spread=spread.to_dict(),
        exact_mg_computations=res.exact_mg_computations,
        truncated=res.truncated,
        extra=extra,
        metrics={
            "wall_time_ms": res.wall_time_s * 1000.0,
            "total_time_ms": (time.perf_counter() - t0) * 1000.0,
            "peak_rss_bytes": peak_rss_bytes(),
        },
    )


# --- matrix ------------------------------------------------------------------

def expand_matrix(matrix: dict) -> list[RunConfig]:
    """Cartesian product algorithms x rho (or w) x k of a bench matrix."""
    algs = matrix["algorithms"]
    model = matrix.get("model", "wc")
    ks = matrix.get("k", [1])
    if model == "ic":
        weights = [("w", w) for w in matrix.get("w", [DEFAULT_IC_WEIGHT])]
    else:
        weights = [("rho", rho) for rho in matrix.get("rho", [1.0])]
    base = {
        key: matrix[key]
        for key in ("r", "theta", "rng_seed", "directed", "eval_r", "eval_seed", "doubling", "max_theta",
                    "explicit_weights")
        if key in matrix
    }
    out = []
    for alg, (wkey, wval), k in itertools.product(algs, weights, ks):
        out.append(RunConfig(algorithm=alg, model=model, k=int(k), input=matrix["input"],
                             **{wkey: float(wval)}, **base))
    return out


def config_argv(c: RunConfig) -> list[str]:
    argv = ["select", "--alg", c.algorithm, "--model", c.model, "--k", str(c.k),
            "--input", str(c.input), "--rng-seed", str(c.rng_seed), "--eval-r", str(c.eval_r),
            "--theta", str(c.theta), "--max-theta", str(c.max_theta)]
    argv += ["--w", repr(c.w)] if c.model == "ic" else ["--rho", repr(c.rho)]
    if c.r is not None:
        argv += ["--r", str(c.r)]
    if c.directed:
        argv.append("--directed")
    if c.eval_seed is not None:
        argv += ["--eval-seed", str(c.eval_seed)]
    if c.doubling:
        argv.append("--doubling")
    if c.explicit_weights:
        argv.append("--explicit-weights")
    return argv


def run_isolated(config: RunConfig, *, threads: int | None = None, timeout: float | None = None) -> RunReport:
    """Run one config in a fresh interpreter so peak RSS belongs to that run alone."""
    with tempfile.TemporaryDirectory() as tmp:
        out = os.path.join(tmp, "report.json")
        argv = [sys.executable, "-m", "imax.cli"] + config_argv(config) + ["--output", out]
        if threads is not None:
            argv += ["--threads", str(threads)]
        proc = subprocess.run(argv, capture_output=True, text=True, timeout=timeout)
        if proc.returncode != 0:
            msg = (proc.stderr.strip().splitlines() or [f"exit {proc.returncode}"])[-1]
            raise RuntimeError(msg)
        with open(out) as fh:
            return RunReport.from_dict(json.load(fh))


def run_matrix(matrix: dict, out_csv, *, isolate: bool = True, threads: int | None = None) -> list[dict]:
    """Execute every cell, writing one CSV row each; failures land in the error column."""
    rows = []
    writer = csv.DictWriter(out_csv, fieldnames=CSV_COLUMNS)
    writer.writeheader()
    graphs: dict = {}
    for config in expand_matrix(matrix):
        try:
            if isolate:
                report = run_isolated(config, threads=threads)
            else:
                gkey = (config.input, config.directed, config.policy())
                if gkey not in graphs:
                    graphs[gkey] = load_for(config)
                report = run_config(config, graphs[gkey])
            row = report.csv_row()
        except Exception as exc:  # recorded in-row, harness keeps going
            log.warning("cell %s failed: %s", config.algorithm, exc)
            row = {col: "" for col in CSV_COLUMNS}
            echo = config.echo()
            row.update(alg=config.algorithm, model=config.model, k=config.k,
                       rho=echo.get("rho", ""), w=echo.get("w", ""), r=echo["r"],
                       rng_seed=config.rng_seed, error=f"{type(exc).__name__}: {exc}")
        writer.writerow(row)
        out_csv.flush()
        rows.append(row)
    return rows
