"""Local randomizers: Minkowski Response and four baselines.

All mechanisms act on unit-scale domains (``[-1, 1]^d`` or the unit ball) and
are vectorized: ``x`` may be a single vector or an ``(n, d)`` batch.

Mechanism identifiers: ``"minkowski"``, ``"laplace"``, ``"planar_laplace"``,
``"square_wave"``, ``"staircase"``. An infinite budget yields the identity
randomizer, the zero-noise limit of every mechanism.
"""
from __future__ import annotations

import functools
import math
from dataclasses import dataclass
from typing import Literal

import numpy as np

from . import geometry
from .geometry import DomainSpec

MECHANISMS = ("minkowski", "laplace", "planar_laplace", "square_wave", "staircase")

_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0
SEARCH_BRACKET = (1e-4, 1e3)


class InfeasibleRadiusError(ValueError):
    """The closed-form cap radius needs ``epsilon > log 2``."""


def _log_expm1(eps: float) -> float:
    """log(e^eps - 1) without overflow."""
    if eps > 30.0:
        return eps + math.log1p(-math.exp(-eps))
    return math.log(math.expm1(eps))


def _unit(domain: DomainSpec) -> None:
    if domain.scale != 1.0:
        raise ValueError("randomizers expect a unit-scale domain; normalize inputs first")


@dataclass(frozen=True)
class SanitizedReport:
    """Mechanism output ``raw`` and its unbiased estimate ``debiased``."""

    raw: np.ndarray
    debiased: np.ndarray
    mechanism_id: str

    def __post_init__(self):
        if np.shape(self.raw) != np.shape(self.debiased):
            raise ValueError("raw and debiased reports must have the same shape")


class Randomizer:
    """Base class: subclasses implement ``sample`` and ``debias``."""

    mechanism_id: str = ""
    epsilon: float
    domain: DomainSpec

    def sample(self, x, rng: np.random.Generator) -> np.ndarray:
        raise NotImplementedError

    def debias(self, y) -> np.ndarray:
        raise NotImplementedError

    def sanitize(self, x, rng: np.random.Generator) -> SanitizedReport:
        raw = self.sample(x, rng)
        return SanitizedReport(raw, self.debias(raw), self.mechanism_id)

    def _batch(self, x) -> tuple[np.ndarray, bool]:
        arr = np.asarray(x, dtype=float)
        single = arr.ndim == 1
        arr = np.atleast_2d(arr)
        if arr.shape[1] != self.domain.dim:
            raise ValueError(f"expected dimension {self.domain.dim}, got {arr.shape[1]}")
        return arr, single


class Identity(Randomizer):
    """No-noise randomizer; the ``epsilon = inf`` limit of every mechanism."""

    def __init__(self, domain: DomainSpec, mechanism_id: str = "identity"):
        self.domain = domain
        self.epsilon = math.inf
        self.mechanism_id = mechanism_id

    def sample(self, x, rng):
        arr, single = self._batch(x)
        return arr[0].copy() if single else arr.copy()

    def debias(self, y):
        return np.array(y, dtype=float)


# ---------------------------------------------------------------- Minkowski


def minkowski_radius_formula(epsilon: float, d: int) -> float:
    """Closed-form cap radius ``1 / ((e^eps - 1)^(1/(d+2)) - 1)``.

    Raises:
        InfeasibleRadiusError: when ``epsilon <= log 2`` (no positive radius).
    """
    if not epsilon > math.log(2.0):
        raise InfeasibleRadiusError(f"formula radius needs epsilon > log 2, got {epsilon}")
    return 1.0 / math.expm1(_log_expm1(epsilon) / (d + 2))


def _log_volume_ratio(r: float, d: int, scale: float = 1.0) -> float:
    # V(Y_r) / V(B_r) = ((scale + r) / r)^d for both matched shapes.
    return d * math.log1p(scale / r)


def cap_probability(epsilon: float, r: float, d: int) -> float:
    """Probability ``beta`` of sampling from the cap around the input."""
    if math.isinf(epsilon):
        return 1.0
    z = _log_volume_ratio(r, d) - _log_expm1(epsilon)
    # beta = 1 / (1 + e^z), evaluated without overflow.
    if z > 0:
        ez = math.exp(-z)
        return ez / (1.0 + ez)
    return 1.0 / (1.0 + math.exp(z))


def worst_case_mse_bound(epsilon: float, r: float, shape: str, d: int) -> float:
    """Closed-form upper bound on the worst-case MSE over the unit domain.

    Ball: ``(beta r^2 + (1-beta)(1 + (1+r)^2)) / beta^2``.
    Cube: ``d (beta r^2 + (1-beta)((1+r)^2 + 3(1-beta))) / (3 beta^2)``.
    This is the objective of the numerical radius search.
    """
    b = cap_probability(epsilon, r, d)
    if b <= 0.0:
        return math.inf
    if shape == "ball":
        return (b * r * r + (1.0 - b) * (1.0 + (1.0 + r) ** 2)) / (b * b)
    return d * (b * r * r + (1.0 - b) * ((1.0 + r) ** 2 + 3.0 * (1.0 - b))) / (3.0 * b * b)


def golden_section_minimize(fn, lo: float, hi: float, tol: float) -> float:
    """Minimize a unimodal ``fn`` on ``[lo, hi]`` until the bracket is below ``tol``."""
    a, b = lo, hi
    c = b - _GOLDEN * (b - a)
    d = a + _GOLDEN * (b - a)
    fc, fd = fn(c), fn(d)
    while b - a > tol:
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - _GOLDEN * (b - a)
            fc = fn(c)
        else:
            a, c, fc = c, d, fd
            d = a + _GOLDEN * (b - a)
            fd = fn(d)
    return 0.5 * (a + b)


@functools.lru_cache(maxsize=4096)
def _search_radius(epsilon: float, shape: str, d: int) -> float:
    lo, hi = (math.log(v) for v in SEARCH_BRACKET)
    # A bracket of width tol in log r is a relative tolerance tol in r.
    best = golden_section_minimize(lambda t: worst_case_mse_bound(epsilon, math.exp(t), shape, d), lo, hi, 1e-6)
    return math.exp(best)


def minkowski_search_radius(epsilon: float, domain: DomainSpec) -> float:
    """Cap radius minimizing :func:`worst_case_mse_bound` (golden section on log r)."""
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")
    return _search_radius(float(epsilon), domain.shape, domain.dim)


@dataclass(frozen=True)
class MinkowskiParams:
    """Configuration of a Minkowski Response randomizer.

    The cap shape always matches the domain shape (ball cap on the ball,
    cube cap on the cube). Build with :meth:`create` to pick the radius.
    """

    epsilon: float
    domain: DomainSpec
    radius: float
    radius_mode: Literal["formula", "searched", "fixed"] = "fixed"

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        if not (self.radius > 0 and math.isfinite(self.radius)):
            raise ValueError("radius must be positive and finite")
        _unit(self.domain)

    @classmethod
    def create(cls, epsilon: float, domain: DomainSpec, radius_mode: str = "searched") -> "MinkowskiParams":
        if radius_mode == "formula":
            r = minkowski_radius_formula(epsilon, domain.dim)
        elif radius_mode == "searched":
            r = minkowski_search_radius(epsilon, domain)
        else:
            raise ValueError(f"unknown radius mode {radius_mode!r}")
        return cls(epsilon, domain, r, radius_mode)

    @property
    def dim(self) -> int:
        return self.domain.dim

    @property
    def cap_shape(self) -> str:
        return self.domain.shape

    @property
    def beta(self) -> float:
        return cap_probability(self.epsilon, self.radius, self.dim)

    @property
    def log_normalizer(self) -> float:
        """log of ``V(Y_r) + V(B_r)(e^eps - 1)``."""
        log_vb = geometry.log_volume(self.cap_shape, self.dim, self.radius)
        return log_vb + np.logaddexp(_log_volume_ratio(self.radius, self.dim), _log_expm1(self.epsilon))


def minkowski_sample(x, params: MinkowskiParams, rng: np.random.Generator) -> np.ndarray:
    """Raw Minkowski Response output for one input vector or a batch."""
    arr = np.asarray(x, dtype=float)
    single = arr.ndim == 1
    arr = np.atleast_2d(arr)
    n, d = arr.shape
    if d != params.dim:
        raise ValueError(f"expected dimension {params.dim}, got {d}")
    if not np.all(params.domain.contains(arr, atol=1e-9)):
        raise ValueError("input outside the randomizer domain")
    unit = geometry.unit_ball_points if params.cap_shape == "ball" else geometry.unit_cube_points
    in_cap = rng.random(n) < params.beta
    pts = unit(rng, n, d)
    r = params.radius
    out = np.where(in_cap[:, None], arr + r * pts, (1.0 + r) * pts)
    return out[0] if single else out


def _domain_dist(y: np.ndarray, shape: str) -> np.ndarray:
    if shape == "ball":
        return np.sqrt(np.sum(y * y, axis=-1))
    return np.max(np.abs(y), axis=-1)


def minkowski_density(x, y, params: MinkowskiParams):
    """Output density of ``y`` given input ``x`` (broadcasts over leading axes)."""
    xa = np.asarray(x, dtype=float)
    ya = np.asarray(y, dtype=float)
    log_norm = params.log_normalizer
    cap = math.exp(params.epsilon - log_norm)
    rest = math.exp(-log_norm)
    in_cap = _domain_dist(ya - xa, params.cap_shape) <= params.radius
    in_support = _domain_dist(ya, params.cap_shape) <= 1.0 + params.radius
    dens = np.where(in_cap, cap, np.where(in_support, rest, 0.0))
    return float(dens) if dens.ndim == 0 else dens


def minkowski_debias(y, params: MinkowskiParams) -> np.ndarray:
    """Unbiased estimate ``y / beta``."""
    return np.asarray(y, dtype=float) / params.beta


def minkowski_mse_analytic(x, params: MinkowskiParams) -> float:
    """Exact ``E||debias(y) - x||^2`` at input ``x``."""
    xa = np.asarray(x, dtype=float)
    x2 = float(np.sum(xa * xa))
    d, r, b = params.dim, params.radius, params.beta
    if params.cap_shape == "ball":
        k = d / (d + 2.0)
        second = b * (x2 + r * r * k) + (1.0 - b) * (1.0 + r) ** 2 * k
    else:
        second = b * (x2 + d * r * r / 3.0) + (1.0 - b) * d * (1.0 + r) ** 2 / 3.0
    return (second - b * b * x2) / (b * b)


class MinkowskiResponse(Randomizer):
    mechanism_id = "minkowski"

    def __init__(self, params: MinkowskiParams):
        self.params = params
        self.epsilon = params.epsilon
        self.domain = params.domain

    @classmethod
    def create(cls, epsilon: float, domain: DomainSpec, radius_mode: str = "searched") -> "MinkowskiResponse":
        return cls(MinkowskiParams.create(epsilon, domain, radius_mode))

    def sample(self, x, rng):
        return minkowski_sample(x, self.params, rng)

    def debias(self, y):
        return minkowski_debias(y, self.params)


# ---------------------------------------------------------------- baselines


@dataclass(frozen=True)
class BaselineParams:
    """Baseline mechanism settings.

    ``sensitivity`` is the Laplace l1 sensitivity; it defaults to ``2 * dim``,
    the replacement sensitivity of ``[-1, 1]^dim`` (4 in the plane).
    """

    mechanism: str
    epsilon: float
    dim: int
    sensitivity: float | None = None

    def __post_init__(self):
        if self.mechanism not in MECHANISMS or self.mechanism == "minkowski":
            raise ValueError(f"unknown baseline mechanism {self.mechanism!r}")
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        if self.mechanism == "planar_laplace" and self.dim != 2:
            raise ValueError("planar_laplace only supports dim == 2")


class Laplace(Randomizer):
    """Per-coordinate Laplace noise of scale ``sensitivity / epsilon``."""

    mechanism_id = "laplace"

    def __init__(self, epsilon: float, domain: DomainSpec, sensitivity: float | None = None):
        _unit(domain)
        self.epsilon = epsilon
        self.domain = domain
        self.sensitivity = 2.0 * domain.dim if sensitivity is None else float(sensitivity)

    def sample(self, x, rng):
        arr, single = self._batch(x)
        out = arr + rng.laplace(0.0, self.sensitivity / self.epsilon, size=arr.shape)
        return out[0] if single else out

    def debias(self, y):
        return np.array(y, dtype=float)


def planar_laplace_radius(p, eps_geo: float, tol: float = 1e-10) -> np.ndarray:
    """Invert the radial CDF ``1 - (1 + eps r) e^(-eps r)`` by vectorized bisection."""
    p = np.asarray(p, dtype=float)
    lo = np.zeros_like(p)
    # C(60 / eps) = 1 - 61 e^-60 exceeds every double below 1.
    hi = np.full_like(p, 60.0 / eps_geo)
    iters = max(1, math.ceil(math.log2(60.0 / eps_geo / tol)))
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        t = eps_geo * mid
        cdf = -np.expm1(-t) - t * np.exp(-t)
        below = cdf < p
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
    return 0.5 * (lo + hi)


class PlanarLaplace(Randomizer):
    """Geo-indistinguishable planar Laplace with ``eps_geo = eps / diameter``."""

    mechanism_id = "planar_laplace"

    def __init__(self, epsilon: float, domain: DomainSpec):
        _unit(domain)
        if domain.dim != 2:
            raise ValueError("planar_laplace only supports dim == 2")
        self.epsilon = epsilon
        self.domain = domain
        # Diameter of [-1, 1]^2 is 2 sqrt 2.
        self.eps_geo = epsilon / (2.0 * math.sqrt(2.0))

    def sample(self, x, rng):
        arr, single = self._batch(x)
        n = arr.shape[0]
        theta = rng.uniform(0.0, 2.0 * math.pi, size=n)
        rad = planar_laplace_radius(rng.random(n), self.eps_geo)
        out = arr + np.column_stack([rad * np.cos(theta), rad * np.sin(theta)])
        return out[0] if single else out

    def debias(self, y):
        return np.array(y, dtype=float)


class SquareWave(Randomizer):
    """Square Wave on each coordinate (rescaled to ``[0, 1]``) with budget ``eps / d``.

    Each coordinate is reported in ``[-b, 1 + b]`` with density ``p`` within ``b``
    of the input and ``q`` elsewhere; the per-report estimate inverts the mean
    ``q (1 + 2b) / 2 + 2b (p - q) v``.
    """

    mechanism_id = "square_wave"

    def __init__(self, epsilon: float, domain: DomainSpec):
        _unit(domain)
        self.epsilon = epsilon
        self.domain = domain
        e = epsilon / domain.dim
        self.eps_dim = e
        t = math.exp(-e)
        if e <= 30.0:
            self.b = (e + math.expm1(-e)) / (2.0 * (math.expm1(e) - e))
            a = 2.0 * self.b * math.exp(e)
        else:
            # Same quantities with e^e factored out, so nothing overflows.
            self.b = (e - 1.0 + t) * t / (2.0 * (1.0 - (1.0 + e) * t))
            a = (e - 1.0 + t) / (1.0 - (1.0 + e) * t)
        # a = 2 b p / q: the near window's mass relative to the far density.
        self.near = a / (1.0 + a)
        self.q = 1.0 / (1.0 + a)
        self._gain = (a - 2.0 * self.b) / (1.0 + a)  # 2b (p - q)

    def sample(self, x, rng):
        arr, single = self._batch(x)
        v = (arr + 1.0) / 2.0
        b = self.b
        near = rng.random(arr.shape) < self.near
        inner = v + rng.uniform(-b, b, size=arr.shape)
        t = -b + rng.random(arr.shape)
        outer = np.where(t >= v - b, t + 2.0 * b, t)
        out = np.where(near, inner, outer)
        return out[0] if single else out

    def debias(self, y):
        y = np.asarray(y, dtype=float)
        b = self.b
        v_hat = (y - self.q * (1.0 + 2.0 * b) / 2.0) / self._gain
        return 2.0 * v_hat - 1.0


def staircase_gamma(eps: float, cost: str = "mse") -> float:
    """Optimal staircase step fraction for budget ``eps``.

    ``cost="mse"`` minimizes the noise power, ``cost="amplitude"`` its mean
    absolute value.
    """
    if cost == "amplitude":
        return 1.0 / (1.0 + math.exp(eps / 2.0))
    if cost != "mse":
        raise ValueError(f"unknown staircase cost {cost!r}")
    b = math.exp(-eps)
    root = (b - 2 * b**2 + 2 * b**4 - b**5) ** (1.0 / 3.0)
    return -b / (1.0 - b) + root / (2.0 ** (1.0 / 3.0) * (1.0 - b) ** 2)


class Staircase(Randomizer):
    """Zero-mean staircase noise per coordinate, budget ``eps / d``, sensitivity 2."""

    mechanism_id = "staircase"

    def __init__(self, epsilon: float, domain: DomainSpec, sensitivity: float = 2.0, cost: str = "mse"):
        _unit(domain)
        self.epsilon = epsilon
        self.domain = domain
        self.eps_dim = epsilon / domain.dim
        self.sensitivity = sensitivity
        self.gamma = staircase_gamma(self.eps_dim, cost)

    def noise(self, rng: np.random.Generator, shape) -> np.ndarray:
        b = math.exp(-self.eps_dim)
        g = self.gamma
        sign = np.where(rng.random(shape) < 0.5, -1.0, 1.0)
        # numpy's geometric counts trials from 1; shift to failures from 0.
        geo = rng.geometric(1.0 - b, size=shape) - 1.0
        u = rng.random(shape)
        first_mass = g + (1.0 - g) * b
        # As eps grows both vanish, with g >> b; the limit is 1.
        second = rng.random(shape) >= (g / first_mass if first_mass > 0 else 1.0)
        mag = np.where(second, geo + g + (1.0 - g) * u, geo + g * u)
        return sign * mag * self.sensitivity

    def sample(self, x, rng):
        arr, single = self._batch(x)
        out = arr + self.noise(rng, arr.shape)
        return out[0] if single else out

    def debias(self, y):
        return np.array(y, dtype=float)


def make_randomizer(mechanism: str, epsilon: float, domain: DomainSpec, **options) -> Randomizer:
    """Build a randomizer by identifier.

    Options: ``radius_mode`` (minkowski), ``sensitivity`` (laplace),
    ``staircase_cost`` (staircase).
    """
    if mechanism not in MECHANISMS:
        raise ValueError(f"unknown mechanism {mechanism!r}; expected one of {MECHANISMS}")
    if math.isinf(epsilon):
        return Identity(domain, mechanism)
    if mechanism == "minkowski":
        return MinkowskiResponse.create(epsilon, domain, options.get("radius_mode", "searched"))
    if mechanism == "laplace":
        return Laplace(epsilon, domain, options.get("sensitivity"))
    if mechanism == "planar_laplace":
        return PlanarLaplace(epsilon, domain)
    if mechanism == "square_wave":
        return SquareWave(epsilon, domain)
    return Staircase(epsilon, domain, cost=options.get("staircase_cost", "mse"))


def baseline_sample(x, params: BaselineParams, rng: np.random.Generator) -> SanitizedReport:
    """Sanitize ``x`` with one of the baseline mechanisms on ``[-1, 1]^dim``."""
    domain = DomainSpec("cube", params.dim)
    opts = {"sensitivity": params.sensitivity} if params.sensitivity is not None else {}
    return make_randomizer(params.mechanism, params.epsilon, domain, **opts).sanitize(x, rng)


def single_report_error(
    mechanism: str,
    domain: DomainSpec,
    epsilon: float,
    trials: int,
    rng: np.random.Generator,
    squared: bool = False,
    **options,
) -> float:
    """Mean l2 (or squared l2) error of debiased reports for uniform inputs."""
    if trials < 1:
        raise ValueError("trials must be >= 1")
    rand = make_randomizer(mechanism, epsilon, domain, **options)
    x = domain.sample(rng, trials)
    est = rand.sanitize(x, rng).debiased
    sq = np.sum((est - x) ** 2, axis=1)
    return float(np.mean(sq) if squared else np.mean(np.sqrt(sq)))
