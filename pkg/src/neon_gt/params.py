"""Scheme parameters, derived quantities and constraint checks.

All logarithms are natural unless the name says ``log2``.  Counts that the
analysis treats as reals (number of blocks, rows per block, extra levels)
are rounded up so that every structural quantity is an integer.
"""
from __future__ import annotations

import math
import operator
import warnings
from dataclasses import asdict, dataclass, field
from typing import Callable, Dict, Optional

TWO_E = 2.0 * math.e
REL_TOL = 1e-12

_OPS: Dict[str, Callable[[float, float], bool]] = {
    "<": operator.lt,
    "<=": operator.le,
    ">": operator.gt,
    ">=": operator.ge,
}


class ParameterError(ValueError):
    """Raised for inadmissible parameter combinations."""


class ConstraintViolation(RuntimeError):
    """Raised in strict mode when a parameter hypothesis fails."""


def is_power_of_two(x: int) -> bool:
    return x >= 1 and (x & (x - 1)) == 0


def _log2_int(x: int, name: str) -> int:
    if not is_power_of_two(x):
        raise ParameterError(f"{name}={x} must be a power of two")
    return x.bit_length() - 1


def _safe_log2(x: float) -> float:
    return math.log2(x) if x > 0 else -math.inf


def _safe_log(x: float) -> float:
    return math.log(x) if x > 0 else -math.inf


def zeta_from_epsilon(epsilon: float) -> float:
    """Tests-per-defective constant ``1 / log(2 - 4 eps)^2``."""
    base = math.log(2.0 - 4.0 * epsilon)
    if base <= 0.0:
        raise ParameterError(f"epsilon={epsilon} leaves log(2-4eps) <= 0")
    return base ** -2


def compare(lhs: float, op: str, rhs: float) -> bool:
    """Evaluate ``lhs op rhs``; non-strict relations accept near-equality."""
    if op in ("<=", ">=") and math.isfinite(lhs) and math.isfinite(rhs):
        if math.isclose(lhs, rhs, rel_tol=REL_TOL, abs_tol=0.0):
            return True
    if op in ("<", ">") and math.isfinite(lhs) and math.isfinite(rhs):
        if math.isclose(lhs, rhs, rel_tol=REL_TOL, abs_tol=0.0):
            return False
    return _OPS[op](lhs, rhs)


@dataclass(frozen=True)
class Constraint:
    lhs: float
    op: str
    rhs: float

    @property
    def satisfied(self) -> bool:
        return compare(self.lhs, self.op, self.rhs)


@dataclass
class ConstraintReport:
    """Named inequalities plus the error exponents that go with them."""

    constraints: Dict[str, Constraint] = field(default_factory=dict)
    exponents: Dict[str, float] = field(default_factory=dict)

    def add(self, name: str, lhs: float, op: str, rhs: float) -> None:
        self.constraints[name] = Constraint(float(lhs), op, float(rhs))

    @property
    def satisfied(self) -> Dict[str, bool]:
        return {name: c.satisfied for name, c in self.constraints.items()}

    @property
    def all_satisfied(self) -> bool:
        return all(self.satisfied.values())

    @property
    def values(self) -> Dict[str, tuple]:
        return {name: (c.lhs, c.rhs) for name, c in self.constraints.items()}

    def failed(self) -> list:
        return [name for name, ok in self.satisfied.items() if not ok]

    def to_dict(self) -> dict:
        """Flat ``name -> {lhs, op, rhs, satisfied}`` document."""
        out: dict = {}
        for name, c in self.constraints.items():
            out[name] = {"lhs": c.lhs, "op": c.op, "rhs": c.rhs, "satisfied": c.satisfied}
        for name, value in self.exponents.items():
            out[name] = {"value": value}
        return out

    @classmethod
    def from_dict(cls, doc: dict) -> "ConstraintReport":
        report = cls()
        for name, entry in doc.items():
            if "op" in entry:
                report.add(name, entry["lhs"], entry["op"], entry["rhs"])
            else:
                report.exponents[name] = entry["value"]
        return report

    def enforce(self, strict: bool, context: str = "") -> None:
        bad = self.failed()
        if not bad:
            return
        msg = f"{context}unsatisfied constraints: {', '.join(bad)}"
        if strict:
            raise ConstraintViolation(msg)
        warnings.warn(msg, stacklevel=2)


# ---------------------------------------------------------------------------
# noiseless / FPC parameters


@dataclass(frozen=True)
class SchemeParams:
    n_items: int
    k_max: int
    local_bound: int
    circles: int
    delta: float
    lam: float
    zeta: float
    epsilon: float
    eta: float
    b: int
    blocks: int
    block_rows: int
    rho: float = 0.0

    @property
    def log2_n(self) -> int:
        return self.n_items.bit_length() - 1

    @property
    def alpha(self) -> float:
        """Sparsity diagnostic ``log K / log N``."""
        return math.log(self.k_max) / math.log(self.n_items)

    @property
    def closed_form_tests_log2(self) -> float:
        return self.lam * self.zeta * self.k_max * math.log2(self.n_items)

    @property
    def closed_form_tests_ln(self) -> float:
        return self.lam * self.zeta * self.k_max * math.log(self.n_items)

    def to_dict(self) -> dict:
        return asdict(self)


def derive_noiseless_params(
    N: int,
    K: int,
    C: int,
    b: int = 1,
    epsilon: float = 0.1,
    eta: float = 1.0,
    rho: float = 0.0,
    *,
    zeta: Optional[float] = None,
    lam: Optional[float] = None,
) -> SchemeParams:
    """Derive the block-and-circle scheme constants.

    ``delta = e^(b+2)`` and ``lam = C * delta`` unless ``lam`` is given, in
    which case ``delta = lam / C``.  ``zeta`` defaults to
    ``1 / log(2 - 4 eps)^2``.
    """
    n = _log2_int(N, "N")
    if not 1 <= K <= N:
        raise ParameterError(f"need 1 <= K <= N, got K={K}, N={N}")
    if C < 1 or b < 1:
        raise ParameterError("C and b must be >= 1")
    if not 0.0 < epsilon < 0.25:
        raise ParameterError(f"epsilon={epsilon} must lie in (0, 1/4)")
    if eta <= 0:
        raise ParameterError("eta must be positive")
    if not 0.0 <= rho < 1.0:
        raise ParameterError("rho must lie in [0, 1)")
    if zeta is None:
        zeta = zeta_from_epsilon(epsilon)
    if zeta <= 0:
        raise ParameterError("zeta must be positive")
    if lam is None:
        delta = math.exp(b + 2)
        lam = C * delta
    else:
        if lam <= 0:
            raise ParameterError("lambda must be positive")
        delta = lam / C
    k = max(1, int(math.floor(math.log2(K))))
    blocks = math.ceil(lam * K / k)
    block_rows = math.ceil(zeta * k * n)
    if blocks < C:
        raise ParameterError(f"blocks={blocks} < circles={C}")
    return SchemeParams(
        n_items=N, k_max=K, local_bound=k, circles=C, delta=delta, lam=lam,
        zeta=float(zeta), epsilon=epsilon, eta=eta, b=b, blocks=blocks,
        block_rows=block_rows, rho=rho,
    )


@dataclass(frozen=True)
class RegimeCheck:
    satisfied: bool
    exponent: float
    bound: float
    slack: float


def regime_exponent(C: int, eta: float) -> float:
    return 1.0 - 2.0 * (1.0 + eta) / C


def regime_check(params: SchemeParams) -> RegimeCheck:
    """Finite-size proxy for ``K = o(N^(1 - 2(1+eta)/C))``."""
    exponent = regime_exponent(params.circles, params.eta)
    bound = float(params.n_items) ** exponent
    # exponent <= 0 admits no growing K at all
    ok = exponent > 0 and params.k_max <= bound
    return RegimeCheck(ok, exponent, bound, bound / params.k_max)


@dataclass(frozen=True)
class OverflowBound:
    tight: float
    loose: float


def overflow_bound(delta: float, k: int) -> OverflowBound:
    """Chernoff bound on one block holding more than ``k`` circled defectives.

    ``tight = (e^(delta-1) / delta^delta)^(k/delta)``, ``loose = (e/delta)^k``.
    Evaluated in log space.
    """
    if delta < math.e:
        raise ParameterError("delta must be at least e")
    log_tight = k * (1.0 - 1.0 / delta - math.log(delta))
    log_loose = k * (1.0 - math.log(delta))
    return OverflowBound(math.exp(log_tight), math.exp(log_loose))


def block_overflow_bound(params: SchemeParams) -> OverflowBound:
    return overflow_bound(params.delta, params.local_bound)


def effective_zeta(zeta: float, rho: float) -> float:
    return zeta / (zeta * rho - rho + 1.0)


def min_zeta_for_target(rho: float, target: float) -> Optional[int]:
    """Smallest integer zeta with ``effective_zeta(zeta, rho) >= target``; None if none exists."""
    if target * rho >= 1.0:
        return None
    x = target * (1.0 - rho) / (1.0 - target * rho)
    z = max(1, math.floor(x) - 1)
    while not compare(effective_zeta(z, rho), ">=", target):
        z += 1
    return z


def validate_fpc(params: SchemeParams, target_zeta: Optional[float] = None) -> ConstraintReport:
    report = ConstraintReport()
    zeta, rho = params.zeta, params.rho
    if target_zeta is None:
        target_zeta = zeta_from_epsilon(params.epsilon)
    # zeta * log(2-4eps)^2 >= zeta*rho - rho + 1, with 1/target standing in for log(2-4eps)^2
    report.add("fpc_misplacement", zeta / target_zeta, ">=", zeta * rho - rho + 1.0)
    report.add("effective_zeta", effective_zeta(zeta, rho), ">=", target_zeta)
    report.add("blocks_cover_circles", params.blocks, ">=", params.circles)
    report.add("delta_above_e", params.delta, ">", math.e)
    report.exponents["effective_zeta"] = effective_zeta(zeta, rho)
    return report


# ---------------------------------------------------------------------------
# BSC / BAC parameters


@dataclass(frozen=True)
class NoisyParams:
    n_items: int
    k_max: int
    zeta: float
    reps: int
    epsilon: float
    subtree_depth: int
    extra_levels: int
    mode: str = "bsc"
    c_double_prime: Optional[float] = None
    rho: float = 0.0
    rho_prime: float = 0.0
    omega: float = 1.0
    beta: float = 1.0

    @property
    def log2_n(self) -> int:
        return self.n_items.bit_length() - 1

    @property
    def log2_k(self) -> int:
        return self.k_max.bit_length() - 1

    @property
    def tests_per_bank(self) -> int:
        return math.ceil(self.zeta * self.k_max)

    @property
    def total_tests(self) -> int:
        return self.tests_per_bank * self.reps * (self.log2_n - self.log2_k + self.extra_levels)

    @property
    def false_positive_budget(self) -> float:
        return float(self.k_max) ** self.omega

    def to_dict(self) -> dict:
        return asdict(self)


def derive_noisy_params(
    N: int,
    K: int,
    zeta: float,
    c_prime: int,
    epsilon: float,
    mode: str = "bsc",
    *,
    r: Optional[int] = None,
    c_double_prime: Optional[float] = None,
    rho: float = 0.0,
    rho_prime: Optional[float] = None,
    omega: Optional[float] = None,
    beta: float = 1.0,
) -> NoisyParams:
    """Derive repeated-design constants for the BSC and BAC schemes.

    BSC: subtree depth and extra levels both default to
    ``max(1, ceil(eps * log2 K))`` and ``rho_prime`` must equal ``rho``.
    BAC: ``r`` is a free constant and the chain has
    ``max(1, ceil(C'' * log K))`` extra levels.
    """
    _log2_int(N, "N")
    lk = _log2_int(K, "K")
    if K >= N:
        raise ParameterError("need K < N")
    if c_prime < 1:
        raise ParameterError("C' must be >= 1")
    if zeta <= 0 or epsilon <= 0:
        raise ParameterError("zeta and epsilon must be positive")
    if rho_prime is None:
        rho_prime = rho
    for name, value in (("rho", rho), ("rho_prime", rho_prime)):
        if not 0.0 <= value < 1.0:
            raise ParameterError(f"{name} must lie in [0, 1)")
    if mode == "bsc":
        if rho_prime != rho:
            raise ParameterError("BSC mode needs rho_prime == rho")
        chain = max(1, math.ceil(epsilon * lk))
        if r is None:
            r = chain
    elif mode == "bac":
        if c_double_prime is None or c_double_prime <= 0:
            raise ParameterError("BAC mode needs a positive C''")
        chain = max(1, math.ceil(c_double_prime * math.log(K)))
        if r is None:
            r = 2
    else:
        raise ParameterError(f"unknown mode {mode!r}")
    if r < 1:
        raise ParameterError("subtree depth r must be >= 1")
    if omega is None:
        omega = 1.0 + 2.0 * epsilon
    if omega < 1.0:
        raise ParameterError("omega must be >= 1")
    return NoisyParams(
        n_items=N, k_max=K, zeta=float(zeta), reps=c_prime, epsilon=epsilon,
        subtree_depth=int(r), extra_levels=int(chain), mode=mode,
        c_double_prime=c_double_prime, rho=rho, rho_prime=rho_prime,
        omega=omega, beta=beta,
    )


def _majority_exponent(p: float, c_prime: int, epsilon: float) -> float:
    """``(eps C'/4) (log2 p + log2(2e) (C'+2)/C')``."""
    return (epsilon * c_prime / 4.0) * (_safe_log2(p) + math.log2(TWO_E) * (c_prime + 2) / c_prime)


def misplacement(params: NoisyParams) -> float:
    return params.rho + 1.0 / params.zeta


def validate_bsc(params: NoisyParams) -> ConstraintReport:
    report = ConstraintReport()
    eps, cp = params.epsilon, params.reps
    m = misplacement(params)
    fp_exp = _majority_exponent(m, cp, eps)
    fn_exp = _majority_exponent(params.rho_prime, cp, eps)
    report.add("majority_below_one", TWO_E * m, "<", 1.0)
    report.add("error_exponent", fp_exp, "<", -(1.0 + 2.0 * eps))
    # per-chain and per-path bounds against the K^-omega budget
    report.add("fn_chain_bound", fn_exp, "<", -params.omega)
    report.add("fp_path_bound", fp_exp + eps, "<", -params.omega)
    report.exponents["nu"] = fp_exp + 1.0 + 2.0 * eps
    report.exponents["p_prime"] = (TWO_E * params.rho_prime) ** (cp / 2.0)
    report.exponents["false_positive_budget"] = params.false_positive_budget
    return report


def p_zero(params: NoisyParams) -> float:
    """Survival probability bound ``(2e)^(r/2) (rho + 1/zeta)^(C' r/4)`` of a false node."""
    r, cp = params.subtree_depth, params.reps
    return TWO_E ** (r / 2.0) * misplacement(params) ** (cp * r / 4.0)


def validate_bac(params: NoisyParams) -> ConstraintReport:
    report = ConstraintReport()
    eps, cp, r = params.epsilon, params.reps, params.subtree_depth
    cpp = params.c_double_prime if params.c_double_prime is not None else 0.0
    p0 = p_zero(params)
    nu2 = (cpp / 2.0) * _safe_log(TWO_E * p0) + 1.0
    report.add("fn_rate", params.rho_prime, "<=", params.beta * params.k_max ** (-eps))
    report.add("majority_below_one", TWO_E * misplacement(params), "<", 1.0)
    report.add("survivor_growth", (1.0 + p0) ** (2 ** r), "<", 2.0)
    report.add("subtree_margin", cp * eps * r, ">", 4.0)
    report.add("chain_exponent", nu2, "<", 0.0)
    report.exponents["p0"] = p0
    report.exponents["p_prime"] = (TWO_E * params.rho_prime) ** (cp / 2.0)
    report.exponents["nu1"] = 1.0 - cp * eps * r / 4.0
    report.exponents["nu2"] = nu2
    report.exponents["false_positive_budget"] = params.false_positive_budget
    return report
