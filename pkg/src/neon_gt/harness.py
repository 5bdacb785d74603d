"""Seeded Monte Carlo experiments over the four schemes."""
from __future__ import annotations

import csv
import io
import itertools
import json
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from statistics import NormalDist
from typing import Any, Dict, Iterable, List, Optional, Sequence, Union

import numpy as np

from . import params as P
from .channel import ChannelSpec, apply_channel, check_defectives, encode
from .neon_decoder import global_decode
from .noisy_decoder import decode_noisy
from .tree_design import Design, NeonDesign, build_neon_design, build_noisy_design

log = logging.getLogger(__name__)

SCHEMES = ("noiseless", "fpc", "bsc", "bac")
CONFIG_VERSION = 1

CSV_COLUMNS = [
    "scheme", "N", "K", "M", "trials", "failures", "error_rate", "ci_low", "ci_high",
    "mean_nodes_visited", "max_nodes_visited", "err1_count", "err2_count", "blowup_count", "seed",
]

# spawn-key tags for per-trial streams
_DESIGN, _DEFECTS, _CHANNEL = 1, 2, 3


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ExperimentConfig:
    scheme: str = "noiseless"
    n: int = 1 << 12
    k: int = 16
    c: int = 6
    b: int = 1
    epsilon: Optional[float] = None
    eta: float = 1.0
    zeta: Optional[float] = None
    lam: Optional[float] = None
    c_prime: int = 15
    c_double_prime: Optional[float] = None
    r: Optional[int] = None
    rho: float = 0.0
    rho_prime: Optional[float] = None
    beta: float = 1.0
    omega: Optional[float] = None
    trials: int = 100
    seed: int = 0
    strict: bool = False
    defective_model: str = "exact"
    defectives: Optional[tuple] = None
    reuse_design: bool = False
    shared_local: bool = True
    workers: int = 1

    def __post_init__(self) -> None:
        if self.scheme not in SCHEMES:
            raise ConfigError(f"scheme must be one of {SCHEMES}")
        if self.trials < 1:
            raise ConfigError("trials must be >= 1")
        if self.defective_model not in ("exact", "at-most", "explicit"):
            raise ConfigError("defective_model must be exact, at-most or explicit")
        if self.defectives is not None:
            object.__setattr__(self, "defectives", tuple(int(d) for d in self.defectives))
            object.__setattr__(self, "defective_model", "explicit")
        elif self.defective_model == "explicit":
            raise ConfigError("explicit defective model needs a defectives list")
        if self.scheme == "noiseless" and (self.rho or self.rho_prime):
            raise ConfigError("noiseless scheme takes no flip rates")
        if self.scheme == "fpc" and self.rho_prime:
            raise ConfigError("fpc scheme has no false negatives")
        if self.scheme == "bsc" and self.rho_prime is not None and self.rho_prime != self.rho:
            raise ConfigError("bsc scheme needs rho_prime == rho")

    @property
    def is_neon(self) -> bool:
        return self.scheme in ("noiseless", "fpc")

    @property
    def eps(self) -> float:
        if self.epsilon is not None:
            return self.epsilon
        return 0.1 if self.is_neon else 0.5

    def build_params(self):
        if self.is_neon:
            return P.derive_noiseless_params(
                self.n, self.k, self.c, self.b, self.eps, self.eta, self.rho,
                zeta=self.zeta, lam=self.lam,
            )
        if self.zeta is None:
            raise ConfigError("noisy schemes need an explicit zeta")
        return P.derive_noisy_params(
            self.n, self.k, self.zeta, self.c_prime, self.eps, self.scheme,
            r=self.r, c_double_prime=self.c_double_prime, rho=self.rho,
            rho_prime=self.rho_prime, omega=self.omega, beta=self.beta,
        )

    def channel(self) -> ChannelSpec:
        if self.scheme == "noiseless":
            return ChannelSpec.noiseless()
        if self.scheme == "fpc":
            return ChannelSpec.fpc(self.rho) if self.rho else ChannelSpec.noiseless()
        if self.scheme == "bsc":
            return ChannelSpec.bsc(self.rho)
        rp = self.rho if self.rho_prime is None else self.rho_prime
        return ChannelSpec.bac(self.rho, rp)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["schema_version"] = CONFIG_VERSION
        if d["defectives"] is not None:
            d["defectives"] = list(d["defectives"])
        return d

    @classmethod
    def from_dict(cls, doc: dict) -> "ExperimentConfig":
        doc = dict(doc)
        version = doc.pop("schema_version", CONFIG_VERSION)
        if version != CONFIG_VERSION:
            raise ConfigError(f"unsupported config schema_version {version}")
        names = {f.name for f in fields(cls)}
        unknown = set(doc) - names
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return cls(**doc)

    @classmethod
    def load(cls, path: Union[str, Path]) -> "ExperimentConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))


def constraint_report(params) -> P.ConstraintReport:
    """Scheme-appropriate hypotheses; noiseless adds the regime and overflow diagnostics."""
    if isinstance(params, P.SchemeParams):
        if params.rho > 0:
            report = P.validate_fpc(params)
        else:
            report = P.ConstraintReport()
            report.add("blocks_cover_circles", params.blocks, ">=", params.circles)
            report.add("delta_above_e", params.delta, ">", math.e)
        regime = P.regime_check(params)
        report.add("regime", params.k_max, "<=", regime.bound)
        if params.delta >= math.e:
            q = P.block_overflow_bound(params)
            report.exponents["overflow_tight"] = q.tight
            report.exponents["overflow_loose"] = q.loose
        report.exponents["alpha"] = params.alpha
        report.exponents["regime_exponent"] = regime.exponent
        return report
    if params.mode == "bsc":
        return P.validate_bsc(params)
    return P.validate_bac(params)


def derive_seed(master: int, *key: int) -> int:
    ss = np.random.SeedSequence(entropy=int(master), spawn_key=tuple(int(k) for k in key))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def draw_defectives(config: ExperimentConfig, rng: np.random.Generator) -> List[int]:
    if config.defective_model == "explicit":
        return sorted(config.defectives)
    n, k = config.n, config.k
    size = k
    if config.defective_model == "at-most":
        # every x of weight <= K equally likely: P(|S| = s) proportional to C(N, s)
        logw = np.array([math.lgamma(n + 1) - math.lgamma(s + 1) - math.lgamma(n - s + 1) for s in range(k + 1)])
        w = np.exp(logw - logw.max())
        size = int(rng.choice(k + 1, p=w / w.sum()))
    return sorted(rng.choice(n, size=size, replace=False).tolist())


def build_design(config: ExperimentConfig, params, seed: int) -> Design:
    if config.is_neon:
        return build_neon_design(params, seed=seed, shared_local=config.shared_local)
    return build_noisy_design(params, seed=seed)


def fixed_design(config: ExperimentConfig, params=None) -> Design:
    """The design shared by all trials in reuse mode."""
    if params is None:
        params = config.build_params()
    return build_design(config, params, derive_seed(config.seed, _DESIGN))


@dataclass
class TrialStats:
    trial: int
    success: bool
    fp_count: int
    fn_count: int
    tests: int
    nodes_visited: int
    blowup_abort: bool = False
    err1: bool = False
    err2: bool = False
    max_block_load: int = 0
    max_false_multiplicity: int = 0
    false_block_claims: int = 0
    multiplicity_histogram: Dict[int, int] = field(default_factory=dict)
    frontier_sizes: List[int] = field(default_factory=list)
    defectives: List[int] = field(default_factory=list)
    decoded: List[int] = field(default_factory=list)
    wall_time: float = 0.0

    def to_dict(self, include_time: bool = False) -> dict:
        d = asdict(self)
        d["multiplicity_histogram"] = {str(k): v for k, v in sorted(self.multiplicity_histogram.items())}
        if not include_time:
            d.pop("wall_time")
        return d


def classify_errors(stats: TrialStats, local_bound: int, circles: int) -> tuple:
    """Recompute (block overflow, false multiplicity >= C) from stored trial fields."""
    return stats.max_block_load > local_bound, stats.max_false_multiplicity >= circles


def run_trial(config: ExperimentConfig, trial_index: int, design: Optional[Design] = None, params=None) -> TrialStats:
    t0 = time.perf_counter()
    if params is None:
        params = config.build_params()
    if design is None:
        dseed = derive_seed(config.seed, _DESIGN) if config.reuse_design else derive_seed(config.seed, trial_index, _DESIGN)
        design = build_design(config, params, dseed)
    rng = np.random.default_rng(derive_seed(config.seed, trial_index, _DEFECTS))
    truth = check_defectives(draw_defectives(config, rng), config.n, config.k, config.strict).tolist()
    y = encode(design, truth, strict=config.strict)
    y_noisy = apply_channel(y, config.channel(), (config.seed, trial_index, _CHANNEL))
    stats = TrialStats(trial=trial_index, success=False, fp_count=0, fn_count=0,
                       tests=design.total_tests, nodes_visited=0, defectives=truth)
    truth_set = set(truth)
    if isinstance(design, NeonDesign):
        res = global_decode(design, y_noisy)
        decoded = res.items
        stats.nodes_visited = res.nodes_visited
        stats.multiplicity_histogram = res.table.histogram()
        counts = res.table.counts.copy()
        counts[truth] = 0
        stats.max_false_multiplicity = int(counts.max()) if counts.size else 0
        stats.false_block_claims = int(counts.sum())
        stats.max_block_load = int(design.block_load(truth).max()) if truth else 0
        stats.err1, stats.err2 = classify_errors(stats, params.local_bound, params.circles)
    else:
        decoded, trace = decode_noisy(design, y_noisy)
        stats.nodes_visited = trace.nodes_visited
        stats.blowup_abort = trace.aborted
        stats.frontier_sizes = trace.frontier_sizes
    decoded_set = set(decoded)
    stats.decoded = sorted(decoded_set)
    stats.fp_count = len(decoded_set - truth_set)
    stats.fn_count = len(truth_set - decoded_set)
    stats.success = stats.fp_count == 0 and stats.fn_count == 0 and not stats.blowup_abort
    stats.wall_time = time.perf_counter() - t0
    return stats


def wilson_interval(failures: int, trials: int, confidence: float = 0.95) -> tuple:
    if trials == 0:
        return 0.0, 1.0
    z = NormalDist().inv_cdf(0.5 + confidence / 2)
    p = failures / trials
    denom = 1 + z * z / trials
    centre = (p + z * z / (2 * trials)) / denom
    half = z * math.sqrt(p * (1 - p) / trials + z * z / (4 * trials * trials)) / denom
    lo = 0.0 if failures == 0 else max(0.0, centre - half)
    hi = 1.0 if failures == trials else min(1.0, centre + half)
    return lo, hi


@dataclass
class ExperimentReport:
    config: ExperimentConfig
    tests: int
    trials: List[TrialStats]
    constraints: P.ConstraintReport
    local_bound: Optional[int] = None

    @property
    def failures(self) -> int:
        return sum(not t.success for t in self.trials)

    @property
    def error_rate(self) -> float:
        return self.failures / len(self.trials)

    @property
    def success_rate(self) -> float:
        return 1.0 - self.error_rate

    @property
    def block_false_detection_rate(self) -> Optional[float]:
        """Per-block rate at which a fixed non-defective item is claimed (block-and-circle schemes)."""
        if not self.config.is_neon:
            return None
        blocks = self.config.build_params().blocks
        denom = sum(blocks * (self.config.n - len(t.defectives)) for t in self.trials)
        return sum(t.false_block_claims for t in self.trials) / denom

    def row(self) -> dict:
        lo, hi = wilson_interval(self.failures, len(self.trials))
        visits = [t.nodes_visited for t in self.trials]
        return {
            "scheme": self.config.scheme,
            "N": self.config.n,
            "K": self.config.k,
            "M": self.tests,
            "trials": len(self.trials),
            "failures": self.failures,
            "error_rate": self.error_rate,
            "ci_low": lo,
            "ci_high": hi,
            "mean_nodes_visited": float(np.mean(visits)),
            "max_nodes_visited": int(max(visits)),
            "err1_count": sum(t.err1 for t in self.trials),
            "err2_count": sum(t.err2 for t in self.trials),
            "blowup_count": sum(t.blowup_abort for t in self.trials),
            "seed": self.config.seed,
        }

    def to_dict(self, include_trials: bool = False) -> dict:
        out = {
            "row": self.row(),
            "config": self.config.to_dict(),
            "constraints": self.constraints.to_dict(),
            "all_constraints_satisfied": self.constraints.all_satisfied,
        }
        if self.config.is_neon:
            k = self.local_bound
            out["block_false_detection_rate"] = self.block_false_detection_rate
            out["block_false_detection_reference"] = 2 * k / self.config.n
        if include_trials:
            out["trials"] = [t.to_dict() for t in self.trials]
        return out


@dataclass(frozen=True)
class LocalDetection:
    hits: int
    decodes: int
    n_items: int
    local_bound: int

    @property
    def rate(self) -> float:
        return self.hits / self.decodes

    @property
    def reference(self) -> float:
        return 2 * self.local_bound / self.n_items


def local_false_detection(n_items: int, k: int, zeta: float, decodes: int,
                          seed: int = 0, item: int = 0) -> LocalDetection:
    """How often one block's local decoder emits a fixed non-defective ``item``.

    Each decode draws a fresh local design and exactly ``k`` defectives
    from the other items, noiseless.
    """
    # one block, one circle: K = 2^k makes floor(log2 K) = k
    params = P.derive_noiseless_params(n_items, 1 << k, 1, zeta=zeta, lam=k / (1 << k))
    others = np.delete(np.arange(n_items), item)
    hits = 0
    for t in range(decodes):
        design = build_neon_design(params, seed=derive_seed(seed, t, _DESIGN))
        rng = np.random.default_rng(derive_seed(seed, t, _DEFECTS))
        truth = rng.choice(others, size=k, replace=False)
        res = global_decode(design, encode(design, truth), threshold=1)
        hits += int(res.table[item] > 0)
    return LocalDetection(hits, decodes, n_items, k)


def _trial_worker(args):
    config, index = args
    return run_trial(config, index)


def run_experiment(config: ExperimentConfig) -> ExperimentReport:
    params = config.build_params()
    report = constraint_report(params)
    report.enforce(config.strict, context=f"{config.scheme} N={config.n} K={config.k}: ")
    shared = fixed_design(config, params) if config.reuse_design else None
    if config.workers > 1 and shared is None:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            trials = list(pool.map(_trial_worker, [(config, i) for i in range(config.trials)]))
    else:
        trials = [run_trial(config, i, design=shared, params=params) for i in range(config.trials)]
    trials.sort(key=lambda t: t.trial)
    # structural count; identical across fresh designs of one configuration
    tests = trials[0].tests
    local = params.local_bound if isinstance(params, P.SchemeParams) else None
    log.info("%s N=%d K=%d: %d/%d failures", config.scheme, config.n, config.k,
             sum(not t.success for t in trials), len(trials))
    return ExperimentReport(config, tests, trials, report, local)


@dataclass
class SweepCell:
    overrides: Dict[str, Any]
    report: Optional[ExperimentReport] = None
    error: Optional[str] = None

    def row(self) -> dict:
        if self.report is not None:
            return self.report.row()
        row = {c: "" for c in CSV_COLUMNS}
        for key, col in (("scheme", "scheme"), ("n", "N"), ("k", "K"), ("seed", "seed")):
            if key in self.overrides:
                row[col] = self.overrides[key]
        return row


def expand_grid(grid: Union[Dict[str, Sequence], Sequence[Dict[str, Any]]]) -> List[Dict[str, Any]]:
    """Cartesian product of a ``{field: values}`` mapping, or an explicit cell list."""
    if isinstance(grid, dict):
        keys = list(grid)
        return [dict(zip(keys, combo)) for combo in itertools.product(*(grid[k] for k in keys))]
    return [dict(cell) for cell in grid]


def sweep(base: ExperimentConfig, grid) -> List[SweepCell]:
    cells = expand_grid(grid)
    if not cells:
        raise ConfigError("sweep grid is empty")
    out = []
    for overrides in cells:
        cell = SweepCell(overrides)
        try:
            cell.report = run_experiment(replace(base, **overrides))
        except Exception as exc:  # recorded per cell; the sweep goes on
            log.warning("sweep cell %s failed: %s", overrides, exc)
            cell.error = f"{type(exc).__name__}: {exc}"
            cell.overrides = {**base.to_dict(), **overrides}
        out.append(cell)
    return out


def rows_to_csv(rows: Iterable[dict]) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=CSV_COLUMNS, extrasaction="ignore", lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow({k: repr(v) if isinstance(v, float) else v for k, v in row.items()})
    return buf.getvalue()


def cells_to_json(cells: Sequence[SweepCell]) -> str:
    docs = []
    for cell in cells:
        if cell.report is not None:
            docs.append({"overrides": cell.overrides, **cell.report.to_dict()})
        else:
            docs.append({"overrides": cell.overrides, "error": cell.error, "row": cell.row()})
    return json.dumps(docs, indent=2, sort_keys=True)
