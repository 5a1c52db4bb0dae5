"""Scenario runners producing CSV metric rows.

Every row carries the resolved local budget per group, so PIC rows can be
audited against the amplification module. Task scenarios repeat over
``trials`` seeds and report mean and sample standard deviation; paired PIC
and LDP runs share data and noise streams.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .. import protocol as proto
from ..amplification import (
    PopulationPolicy,
    amplify_closed_form,
    delta_default,
    effective_population,
    invert_amplify,
    resolve_local_epsilon,
)
from ..envelope import Entropy
from ..geometry import DomainSpec, normalize_locations
from ..randomizers import make_randomizer
from ..tasks import (
    BipartiteInstance,
    max_matching_within_radius,
    min_weight_full_matching,
    neighbor_f1,
    radius_pairs,
    shapley_exact,
    shapley_monte_carlo,
    success_ratio,
    travel_cost,
)
from .config import ConfigError, ExperimentConfig, group_sizes, with_defaults
from .data import GMISSION, Uniform, load_locations_csv, synth_locations

CSV_HEADER = ("scenario", "mechanism", "privacy_mode", "eps", "eps_local", "metric", "value", "stddev", "trials", "seed", "n", "status")
EXACT_SHAPLEY_MAX = 12
RATE_GRID = tuple(2**k for k in range(10, 18))


def fmt(v: float) -> str:
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return f"{v:.10g}"


@dataclass(frozen=True)
class MetricRow:
    scenario: str
    mechanism: str
    privacy_mode: str
    eps: float
    eps_local: tuple[float, ...]
    metric: str
    value: float
    stddev: float
    trials: int
    seed: int
    n: tuple[int, ...] = ()
    status: str = "ok"

    def record(self) -> list[str]:
        return [
            self.scenario,
            self.mechanism,
            self.privacy_mode,
            fmt(self.eps),
            ";".join(fmt(e) for e in self.eps_local),
            self.metric,
            fmt(self.value),
            fmt(self.stddev),
            str(self.trials),
            str(self.seed),
            ";".join(str(k) for k in self.n),
            self.status,
        ]


def rows_to_csv(rows: Iterable[MetricRow]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    for row in rows:
        writer.writerow(row.record())
    return buf.getvalue()


def write_rows(rows: Iterable[MetricRow], path: str | Path) -> None:
    Path(path).write_text(rows_to_csv(rows))


def _mean_std(values: Sequence[float]) -> tuple[float, float]:
    arr = np.asarray(values, dtype=float)
    return float(arr.mean()), float(arr.std(ddof=1)) if arr.size > 1 else 0.0


# ---------------------------------------------------------------- budgets


@dataclass(frozen=True)
class Budget:
    eps_local: tuple[float, ...]
    status: str


def resolve_budgets(cfg: ExperimentConfig, eps: float, sizes: Sequence[int], policy: PopulationPolicy) -> Budget:
    """Per-group local budgets; PIC mode inverts the bound at ``n'`` per group."""
    if cfg.privacy_mode == "ldp":
        return Budget(tuple(eps for _ in sizes), "ok")
    locals_, flags = [], []
    for size in sizes:
        delta = cfg.delta if cfg.delta is not None else delta_default(size)
        b = resolve_local_epsilon(eps, delta, effective_population(size, policy))
        locals_.append(b.epsilon)
        if b.flagged:
            flags.append(b.status)
    return Budget(tuple(locals_), "ok" if not flags else ";".join(sorted(set(flags))))


def _sanitize(mechanism: str, eps_local: float, domain: DomainSpec, x: np.ndarray, rng, radius_mode: str, clip: bool):
    opts = {"radius_mode": radius_mode} if mechanism == "minkowski" else {}
    rand = make_randomizer(mechanism, eps_local, domain, **opts)
    est = np.asarray(rand.sanitize(x, rng).debiased, dtype=float).reshape(x.shape)
    return domain.project(est) if clip else est


def _row(cfg, mech, eps, budget, metric, values, trials, sizes) -> MetricRow:
    mean, std = _mean_std(values)
    return MetricRow(cfg.scenario, mech, cfg.privacy_mode, eps, budget.eps_local, metric, mean, std, trials, cfg.seed, tuple(sizes), budget.status)


# ---------------------------------------------------------------- single report


def run_single_report(cfg: ExperimentConfig) -> list[MetricRow]:
    """Mean l2 error of single debiased reports for uniform inputs.

    ``trials`` is the number of reports; ``stddev`` is their spread. In PIC
    mode ``n`` (default 10^4) is the group size fed to the population policy.
    """
    cfg = with_defaults(cfg, trials=10_000, dim=2, domain="cube", n=(10_000,))
    domain = DomainSpec(cfg.domain, cfg.dim)
    sizes = cfg.n[:1]
    policy = cfg.policy or PopulationPolicy("full")
    rows = []
    for eps in cfg.epsilons:
        for mech in cfg.mechanism:
            budget = resolve_budgets(cfg, eps, sizes, policy)
            rng = np.random.default_rng(cfg.seed)
            x = domain.sample(rng, cfg.trials)
            est = _sanitize(mech, budget.eps_local[0], domain, x, rng, cfg.radius_mode, clip=False)
            sq = np.sum((est - x) ** 2, axis=1)
            rows.append(_row(cfg, mech, eps, budget, "l2_error", np.sqrt(sq), cfg.trials, sizes))
            rows.append(_row(cfg, mech, eps, budget, "sq_error", sq, cfg.trials, sizes))
    return rows


# ---------------------------------------------------------------- crowdsourcing


def _source_box(cfg: ExperimentConfig, pts: Sequence[np.ndarray]):
    if cfg.box:
        xmin, xmax, ymin, ymax = cfg.box
        return (xmin, ymin), (xmax, ymax)
    allp = np.concatenate(pts)
    return tuple(allp.min(axis=0)), tuple(allp.max(axis=0))


def _load_groups(cfg: ExperimentConfig, expected: int) -> list[np.ndarray] | None:
    if not cfg.dataset:
        return None
    paths = [p.strip() for p in cfg.dataset.split(",") if p.strip()]
    if len(paths) != expected:
        raise ConfigError(f"expected {expected} dataset file(s), got {len(paths)}")
    raw = [load_locations_csv(p) for p in paths]
    if any(len(r) == 0 for r in raw):
        raise ConfigError("dataset has no rows")
    box = _source_box(cfg, raw)
    return [normalize_locations(r, box)[0] for r in raw]


def _synthetic_groups(sizes: Sequence[int], rng) -> list[np.ndarray]:
    box = GMISSION["box"]
    return [normalize_locations(synth_locations(n, box, Uniform(), rng), box)[0] for n in sizes]


def crowdsourcing_metrics(a, b, est_a, est_b, tau: float) -> dict[str, float]:
    """Matchings on sanitized locations, scored on true locations."""
    m_cost = min_weight_full_matching(BipartiteInstance(est_a, est_b))
    m_card = max_matching_within_radius(BipartiteInstance(est_a, est_b, tau))
    err = np.concatenate([np.linalg.norm(est_a - a, axis=1), np.linalg.norm(est_b - b, axis=1)])
    return {
        "travel_cost": travel_cost(m_cost, a, b),
        "success_ratio": success_ratio(m_card, a, b, tau),
        "l2_error": float(err.mean()),
    }


def run_crowdsourcing(cfg: ExperimentConfig) -> list[MetricRow]:
    """Travel cost and success ratio over two groups (users, workers).

    Defaults mirror the GMission statistics: 713 users, 532 workers on a
    [0,5]^2 box normalized to [-1,1]^2, serving radius 0.4 after scaling.
    """
    cfg = with_defaults(cfg, trials=10, tau=0.4, dim=2, domain="cube")
    sizes = group_sizes(cfg, GMISSION["sizes"])
    if len(sizes) != 2:
        raise ConfigError("crowdsourcing needs exactly two groups")
    domain = DomainSpec(cfg.domain, 2)
    policy = cfg.policy or PopulationPolicy("minus-one")
    fixed = _load_groups(cfg, 2)
    if fixed is not None:
        sizes = tuple(len(g) for g in fixed)
    datasets = [fixed or _synthetic_groups(sizes, np.random.default_rng([cfg.seed, t, 0])) for t in range(cfg.trials)]
    rows = []
    for eps in cfg.epsilons:
        for mech in cfg.mechanism:
            budget = resolve_budgets(cfg, eps, sizes, policy)
            per_metric: dict[str, list[float]] = {}
            for t, (a, b) in enumerate(datasets):
                rng = np.random.default_rng([cfg.seed, t, 1])
                est_a = _sanitize(mech, budget.eps_local[0], domain, a, rng, cfg.radius_mode, clip=True)
                est_b = _sanitize(mech, budget.eps_local[1], domain, b, rng, cfg.radius_mode, clip=True)
                for k, v in crowdsourcing_metrics(a, b, est_a, est_b, cfg.tau).items():
                    per_metric.setdefault(k, []).append(v)
            for k, vals in per_metric.items():
                rows.append(_row(cfg, mech, eps, budget, k, vals, cfg.trials, sizes))
    return rows


# ---------------------------------------------------------------- social


def social_policy(tau: float) -> PopulationPolicy:
    """Anonymous share of users after neighbors contact each other."""
    if math.isclose(tau, 0.2):
        return PopulationPolicy("fraction", 0.90)
    if math.isclose(tau, 0.1):
        return PopulationPolicy("fraction", 0.98)
    return PopulationPolicy("full")


def run_social(cfg: ExperimentConfig) -> list[MetricRow]:
    """Precision, recall and F1 of radius neighbor search on sanitized locations."""
    cfg = with_defaults(cfg, trials=10, tau=0.2, n=(10_000,), dim=2, domain="cube")
    domain = DomainSpec(cfg.domain, 2)
    policy = cfg.policy or social_policy(cfg.tau)
    fixed = _load_groups(cfg, 1)
    sizes = (len(fixed[0]),) if fixed is not None else cfg.n[:1]
    rows = []
    truth_cache = {}
    for eps in cfg.epsilons:
        for mech in cfg.mechanism:
            budget = resolve_budgets(cfg, eps, sizes, policy)
            per_metric: dict[str, list[float]] = {}
            for t in range(cfg.trials):
                if t not in truth_cache:
                    pts = fixed[0] if fixed is not None else domain.sample(np.random.default_rng([cfg.seed, t, 0]), sizes[0])
                    truth_cache[t] = (pts, radius_pairs(pts, cfg.tau))
                pts, truth = truth_cache[t]
                rng = np.random.default_rng([cfg.seed, t, 1])
                est = _sanitize(mech, budget.eps_local[0], domain, pts, rng, cfg.radius_mode, clip=True)
                p, r, f1 = neighbor_f1(truth, radius_pairs(est, cfg.tau), len(pts))
                for k, v in (("precision", p), ("recall", r), ("f1", f1)):
                    per_metric.setdefault(k, []).append(v)
            for k, vals in per_metric.items():
                rows.append(_row(cfg, mech, eps, budget, k, vals, cfg.trials, sizes))
    return rows


# ---------------------------------------------------------------- incentive


def synth_gradients(n: int, d: int, clip: float, rng) -> tuple[np.ndarray, np.ndarray]:
    """Gradients sharing a common direction plus noise, clipped to ``|g|_inf <= clip``."""
    direction = rng.standard_normal(d)
    direction *= 0.5 * clip / np.max(np.abs(direction))
    grads = np.clip(direction + 0.5 * clip * rng.standard_normal((n, d)), -clip, clip)
    grad_val = np.clip(direction + 0.1 * clip * rng.standard_normal(d), -clip, clip)
    return grads, grad_val


def _shapley(grads, grad_val, samples: int, seed_seq) -> np.ndarray:
    if len(grads) <= EXACT_SHAPLEY_MAX:
        return shapley_exact(grads, grad_val).values
    return shapley_monte_carlo(grads, grad_val, samples, np.random.default_rng(seed_seq)).values


def run_incentive(cfg: ExperimentConfig) -> list[MetricRow]:
    """Gradient and Shapley l2 errors from sanitized gradients.

    Gradients live in ``[-clip, clip]^dim`` and are divided by ``clip`` before
    randomizing on the unit cube. Errors are reported in gradient units.
    """
    cfg = with_defaults(cfg, trials=10, n=(10,), dim=6, domain="cube")
    domain = DomainSpec(cfg.domain, cfg.dim)
    sizes = cfg.n[:1]
    policy = cfg.policy or PopulationPolicy("full")
    c = cfg.clip
    datasets = [synth_gradients(sizes[0], cfg.dim, c, np.random.default_rng([cfg.seed, t, 0])) for t in range(cfg.trials)]
    clear_shap = [_shapley(g, gv, cfg.samples, [cfg.seed, t, 2]) for t, (g, gv) in enumerate(datasets)]
    rows = []
    for eps in cfg.epsilons:
        for mech in cfg.mechanism:
            budget = resolve_budgets(cfg, eps, sizes, policy)
            grad_err, shap_err = [], []
            for t, (g, gv) in enumerate(datasets):
                rng = np.random.default_rng([cfg.seed, t, 1])
                est = c * _sanitize(mech, budget.eps_local[0], domain, g / c, rng, cfg.radius_mode, clip=False)
                grad_err.append(float(np.mean(np.linalg.norm(est - g, axis=1))))
                noisy = _shapley(est, gv, cfg.samples, [cfg.seed, t, 2])
                shap_err.append(float(np.mean(np.abs(noisy - clear_shap[t]))))
            rows.append(_row(cfg, mech, eps, budget, "gradient_l2_error", grad_err, cfg.trials, sizes))
            rows.append(_row(cfg, mech, eps, budget, "shapley_l2_error", shap_err, cfg.trials, sizes))
    return rows


# ---------------------------------------------------------------- rates


@dataclass(frozen=True)
class RatePoint:
    n: int
    upper: float
    lower: float
    feasible: bool


def rate_feasible(d: int, epsilon_c: float, delta: float, n: int) -> bool:
    log_inv = math.log(1.0 / delta)
    return n > max(16.0 * log_inv, 2.0 ** (d + 7) * log_inv / math.expm1(epsilon_c) ** 2)


def upper_curve(d: int, epsilon_c: float, delta: float, n: int) -> float:
    """Explicit squared-error upper bound for the ball randomizer after shuffling."""
    base = 256.0 * math.log(1.0 / delta) / (n * math.expm1(epsilon_c) ** 2)
    return 36.0 * base ** (2.0 / (d + 2))


def theoretical_rates(d: int, epsilon_c: float, delta: float, n_grid: Iterable[int]) -> list[RatePoint]:
    """Upper curve and unscaled lower-curve shape ``n^(-2/(d+2))`` per grid point."""
    return [
        RatePoint(n, upper_curve(d, epsilon_c, delta, n), n ** (-2.0 / (d + 2)), rate_feasible(d, epsilon_c, delta, n))
        for n in n_grid
    ]


def empirical_pic_sq_error(d: int, epsilon_c: float, delta: float, n: int, trials: int, rng) -> tuple[float, float]:
    """Mean squared error of PIC-Minkowski single reports on the unit ball; returns (error, eps_local)."""
    eps_local = resolve_local_epsilon(epsilon_c, delta, n).epsilon
    domain = DomainSpec("ball", d)
    x = domain.sample(rng, trials)
    est = _sanitize("minkowski", eps_local, domain, x, rng, "searched", clip=False)
    return float(np.mean(np.sum((est - x) ** 2, axis=1))), eps_local


def loglog_slope(ns: Sequence[float], values: Sequence[float]) -> float:
    return float(np.polyfit(np.log(ns), np.log(values), 1)[0])


def run_rates(cfg: ExperimentConfig) -> list[MetricRow]:
    """Reference curves; with ``trials`` set, also empirical PIC-Minkowski errors."""
    d = cfg.dim or 2
    delta = cfg.delta if cfg.delta is not None else 1e-6
    grid = cfg.n or RATE_GRID
    rows = []
    for eps_c in cfg.eps_central:
        for p in theoretical_rates(d, eps_c, delta, grid):
            status = "ok" if p.feasible else "infeasible"
            budget = resolve_local_epsilon(eps_c, delta, p.n)
            local = (budget.epsilon,)
            common = dict(scenario="rates", mechanism="minkowski", privacy_mode="pic", eps=eps_c, eps_local=local, seed=cfg.seed, n=(p.n,))
            rows.append(MetricRow(metric="upper_bound", value=p.upper, stddev=0.0, trials=1, status=status, **common))
            rows.append(MetricRow(metric="lower_bound_shape", value=p.lower, stddev=0.0, trials=1, status=status, **common))
            if cfg.trials:
                rng = np.random.default_rng([cfg.seed, p.n])
                err, _ = empirical_pic_sq_error(d, eps_c, delta, p.n, cfg.trials, rng)
                rows.append(MetricRow(metric="empirical_sq_error", value=err, stddev=0.0, trials=cfg.trials, status=status, **common))
    return rows


# ---------------------------------------------------------------- amplify


def run_amplify(cfg: ExperimentConfig) -> list[MetricRow]:
    """Budget calculator: forward with ``eps``, inverse with ``eps_central``.

    Raises:
        InfeasibleAmplificationError: A population too small for the bound.
    """
    policy = cfg.policy or PopulationPolicy("full")
    rows = []
    for size in cfg.n:
        n_eff = effective_population(size, policy)
        delta = cfg.delta if cfg.delta is not None else delta_default(size)
        for eps in cfg.epsilons:
            if cfg.privacy_mode == "ldp":
                value = amplify_closed_form(eps, delta, n_eff)
                rows.append(MetricRow("amplify", "-", "ldp", eps, (eps,), "eps_central", value, 0.0, 1, cfg.seed, (n_eff,)))
            else:
                b = invert_amplify(eps, delta, n_eff)
                rows.append(MetricRow("amplify", "-", "pic", eps, (b.epsilon,), "eps_local", b.epsilon, 0.0, 1, cfg.seed, (n_eff,), b.status))
    return rows


# ---------------------------------------------------------------- protocol demo


@dataclass(frozen=True)
class DemoResult:
    rows: list[MetricRow]
    transcripts: list[str]


def run_protocol_demo(cfg: ExperimentConfig) -> DemoResult:
    """One full PIC round per budget on synthetic data; reports delivery rate."""
    cfg = with_defaults(cfg, dim=2, domain="cube", trials=1)
    sizes = group_sizes(cfg, (50, 50))
    task_id = cfg.task or ("min_weight_matching" if len(sizes) == 2 else "identity")
    domain = DomainSpec(cfg.domain, cfg.dim)
    policy = cfg.policy or PopulationPolicy("full")
    rows, transcripts = [], []
    for eps in cfg.epsilons:
        for mech in cfg.mechanism:
            budget = resolve_budgets(cfg, eps, sizes, policy)
            rng = np.random.default_rng(cfg.seed)
            entropy = Entropy(cfg.seed) if cfg.deterministic_keys else Entropy()
            names = [f"group{g}" for g in range(len(sizes))]
            opts = {"radius_mode": cfg.radius_mode} if mech == "minkowski" else {}
            specs = {nm: proto.RandomizerSpec.create(mech, e, domain, **opts) for nm, e in zip(names, budget.eps_local)}
            grad_val = tuple(float(v) for v in rng.standard_normal(cfg.dim)) if task_id == "shapley_incentive" else None
            task = proto.TaskSpec(task_id, tau=cfg.tau or 0.4, grad_val=grad_val, samples=cfg.samples)
            try:
                params, server_keys = proto.server_setup(names, specs, task, entropy)
            except proto.ConfigurationError as exc:
                raise ConfigError(str(exc)) from exc
            users = proto.make_users([domain.sample(rng, n) for n in sizes])
            delivered = []
            for _ in range(cfg.trials):
                sim = proto.simulate_round(users, params, server_keys, rng, entropy)
                delivered.append(sim.delivery_rate)
                transcripts.append(sim.round.transcript.export_text())
            rows.append(_row(cfg, mech, eps, budget, "delivery_rate", delivered, cfg.trials, sizes))
    return DemoResult(rows, transcripts)
