"""Privacy amplification by shuffling: closed-form bound and its inversion.

The bound for ``n`` anonymous users each running an ``eps``-LDP randomizer::

    eps_c = log(1 + (e^eps - 1)/(e^eps + 1) * (sqrt(64 e^eps log(4/delta) / n) + 8 e^eps / n))

holds when ``n >= 16 e^eps log(2/delta)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from decimal import Decimal
from typing import Literal

EPS_FLOOR = 1e-6


class InfeasibleAmplificationError(ValueError):
    """Raised when the population is too small for the closed-form bound."""

    def __init__(self, message: str, min_population: int | None = None):
        super().__init__(message)
        self.min_population = min_population


def _check_delta(delta: float) -> None:
    if not 0.0 < delta < 1.0:
        raise ValueError(f"delta must lie in (0, 1), got {delta}")


def min_population(epsilon: float, delta: float) -> int:
    """Smallest integer population satisfying ``n >= 16 e^eps log(2/delta)``."""
    _check_delta(delta)
    return math.ceil(16.0 * math.exp(epsilon) * math.log(2.0 / delta))


def is_feasible(epsilon: float, delta: float, population: int) -> bool:
    return population >= 16.0 * math.exp(epsilon) * math.log(2.0 / delta)


def max_local_epsilon(delta: float, population: int) -> float:
    """Largest local budget the bound admits: ``log(n / (16 log(2/delta)))``."""
    _check_delta(delta)
    return math.log(population / (16.0 * math.log(2.0 / delta)))


def _bound(epsilon: float, delta: float, population: int) -> float:
    ee = math.exp(epsilon)
    inner = math.sqrt(64.0 * ee * math.log(4.0 / delta) / population) + 8.0 * ee / population
    return math.log1p(math.tanh(epsilon / 2.0) * inner)


def amplify_closed_form(epsilon: float, delta: float, population: int) -> float:
    """Central epsilon after shuffling ``population`` anonymous eps-LDP reports.

    Raises:
        InfeasibleAmplificationError: population below ``16 e^eps log(2/delta)``;
            ``min_population`` carries the smallest feasible size.
    """
    _check_delta(delta)
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")
    if population < 1:
        raise ValueError("population must be positive")
    if not is_feasible(epsilon, delta, population):
        need = min_population(epsilon, delta)
        raise InfeasibleAmplificationError(
            f"population {population} below the feasible minimum {need} for eps={epsilon}, delta={delta}",
            need,
        )
    return _bound(epsilon, delta, population)


@dataclass(frozen=True)
class LocalBudget:
    """Result of inverting the bound.

    ``status`` is ``"ok"`` when the target is met, ``"floor"`` when even the
    smallest budget overshoots it, ``"ceiling"`` when the largest feasible
    budget still falls short of it, and ``"infeasible"`` when the population
    supports no amplification at all.
    """

    epsilon: float
    status: Literal["ok", "floor", "ceiling", "infeasible"]
    epsilon_central: float

    @property
    def flagged(self) -> bool:
        return self.status != "ok"


def invert_amplify(epsilon_central: float, delta: float, population: int, tol: float = 1e-13) -> LocalBudget:
    """Local budget whose amplified value equals ``epsilon_central``.

    Bisection on ``[EPS_FLOOR, max_local_epsilon]``; the bound is increasing in
    eps on that band. Targets outside the achievable range are clamped to the
    band edge and flagged.

    Raises:
        InfeasibleAmplificationError: the population cannot support even
            ``EPS_FLOOR``.
    """
    _check_delta(delta)
    if not epsilon_central > 0:
        raise ValueError("epsilon_central must be positive")
    if math.isinf(epsilon_central):
        return LocalBudget(math.inf, "ok", math.inf)
    hi = max_local_epsilon(delta, population)
    if hi < EPS_FLOOR:
        raise InfeasibleAmplificationError(
            f"population {population} cannot be amplified at delta={delta}",
            min_population(EPS_FLOOR, delta),
        )
    lo = EPS_FLOOR
    if _bound(lo, delta, population) >= epsilon_central:
        return LocalBudget(lo, "floor", epsilon_central)
    if _bound(hi, delta, population) <= epsilon_central:
        return LocalBudget(hi, "ceiling", epsilon_central)
    while hi - lo > tol * max(1.0, lo):
        mid = 0.5 * (lo + hi)
        if _bound(mid, delta, population) < epsilon_central:
            lo = mid
        else:
            hi = mid
    return LocalBudget(0.5 * (lo + hi), "ok", epsilon_central)


@dataclass(frozen=True)
class PopulationPolicy:
    """How many users of a group count as anonymous for amplification.

    ``kind`` is ``"full"`` (n), ``"minus-one"`` (n - 1) or ``"fraction"``
    (floor(n * fraction)).
    """

    kind: Literal["full", "minus-one", "fraction"] = "full"
    fraction: float = 1.0

    def __post_init__(self):
        if self.kind not in ("full", "minus-one", "fraction"):
            raise ValueError(f"unknown population policy {self.kind!r}")
        if not 0.0 < self.fraction <= 1.0:
            raise ValueError("fraction must lie in (0, 1]")

    @classmethod
    def parse(cls, text: str) -> "PopulationPolicy":
        """Parse ``full``, ``minus-one`` or ``fraction=F``."""
        text = text.strip().lower()
        if text in ("full", "minus-one"):
            return cls(text)
        if text.startswith("fraction="):
            return cls("fraction", float(text.split("=", 1)[1]))
        raise ValueError(f"cannot parse population policy {text!r}")

    def __str__(self) -> str:
        return f"fraction={self.fraction:g}" if self.kind == "fraction" else self.kind


def effective_population(group_size: int, policy: PopulationPolicy | str = "full") -> int:
    if isinstance(policy, str):
        policy = PopulationPolicy.parse(policy)
    if group_size < 1:
        raise ValueError("group_size must be >= 1")
    if policy.kind == "full":
        n = group_size
    elif policy.kind == "minus-one":
        n = group_size - 1
    else:
        # Exact decimal product: floor(10000 * 0.9) must be 9000, not 8999.
        n = math.floor(Decimal(group_size) * Decimal(repr(policy.fraction)))
    if n < 1:
        raise ValueError(f"group of size {group_size} leaves no anonymous users under {policy}")
    return n


def delta_default(group_size: int) -> float:
    """``0.01 / n``."""
    if group_size < 1:
        raise ValueError("group_size must be >= 1")
    return 0.01 / group_size


def resolve_local_epsilon(
    epsilon_central: float, delta: float, population: int
) -> LocalBudget:
    """Local budget for PIC runs, never below the central target itself.

    An ``eps_c``-LDP report is already ``eps_c``-DP after shuffling, so when
    the amplification ceiling lies below ``eps_c`` the target itself is used
    (status stays ``"ceiling"``, or ``"infeasible"`` for a population too
    small to amplify).
    """
    try:
        budget = invert_amplify(epsilon_central, delta, population)
    except InfeasibleAmplificationError:
        return LocalBudget(epsilon_central, "infeasible", epsilon_central)
    if budget.epsilon < epsilon_central:
        return LocalBudget(epsilon_central, budget.status, epsilon_central)
    return budget
