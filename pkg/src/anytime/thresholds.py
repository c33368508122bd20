"""Rate, exponent and stabilizable-region computations.

All logarithms are base 2. Exponents are per channel use unless a name
says otherwise; multiply by ``n`` for per-plant-step values.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from .channel import ChannelSpec, bhattacharyya, capacity

_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


@dataclass(frozen=True)
class Infeasible:
    """Returned instead of a number when a bound has an empty feasible set."""

    reason: str

    def __bool__(self):
        return False


@dataclass(frozen=True)
class AnytimeBudget:
    R: float
    beta: float
    d_o: int = 1
    eta: float = float("nan")

    def per_step(self, n: int) -> tuple[float, float]:
        return n * self.R, n * self.beta


@dataclass
class CanonicalPlant:
    """A plant ``x' = F x + G u + w``, ``y = H x + v`` in observer canonical form.

    ``blocks`` holds one coefficient row per measured output; the scalar
    case has a single row ``(a_1, ..., a_m)`` equal to the first column of
    ``F``. ``W`` and ``V`` are full widths of the per-component noise boxes.
    """

    F: np.ndarray
    G: np.ndarray
    H: np.ndarray
    blocks: list[np.ndarray]
    K: np.ndarray | None = None
    W: float | np.ndarray = 0.0  # scalar, or one full width per state component
    V: float = 0.0
    name: str = ""
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        self.F = np.atleast_2d(np.asarray(self.F, dtype=float))
        self.G = np.asarray(self.G, dtype=float).reshape(self.F.shape[0], -1)
        self.H = np.atleast_2d(np.asarray(self.H, dtype=float))
        self.blocks = [np.asarray(b, dtype=float).reshape(-1) for b in self.blocks]
        if sum(len(b) for b in self.blocks) != self.m_x:
            raise ValueError("block lengths must add up to the state dimension")

    @property
    def m_x(self) -> int:
        return self.F.shape[0]

    @property
    def W_vec(self) -> np.ndarray:
        return np.broadcast_to(np.asarray(self.W, dtype=float), (self.m_x,)).copy()

    @property
    def a(self) -> np.ndarray:
        if len(self.blocks) != 1:
            raise ValueError("plant has several measurement blocks")
        return self.blocks[0]

    @classmethod
    def from_coefficients(cls, a, W=0.0, V=0.0, G=None, K=None, name="") -> "CanonicalPlant":
        a = np.asarray(a, dtype=float).reshape(-1)
        F = companion(a)
        m = len(a)
        H = np.zeros((1, m))
        H[0, 0] = 1.0
        G = np.eye(m) if G is None else G
        return cls(F, G, H, [a], K=K, W=W, V=V, name=name)


def companion(a) -> np.ndarray:
    """Canonical ``F`` with first column ``a`` and ones on the superdiagonal."""
    a = np.asarray(a, dtype=float).reshape(-1)
    m = len(a)
    F = np.zeros((m, m))
    F[:, 0] = a
    F[np.arange(m - 1), np.arange(1, m)] = 1.0
    return F


# -- entropy helpers ---------------------------------------------------------

def binary_entropy(x):
    x = np.asarray(x, dtype=float)
    if np.any((x < 0) | (x > 1)):
        raise ValueError("binary entropy needs 0 <= x <= 1")
    with np.errstate(divide="ignore", invalid="ignore"):
        h = -x * np.log2(x) - (1 - x) * np.log2(1 - x)
    h = np.where((x == 0) | (x == 1), 0.0, h)
    return float(h) if h.ndim == 0 else h


def inv_binary_entropy(y: float, tol: float = 1e-12) -> float:
    """Smaller root of ``H(x) = y``, found by bisection on [0, 1/2]."""
    if not 0.0 <= y <= 1.0:
        raise ValueError("inverse binary entropy needs 0 <= y <= 1")
    lo, hi = 0.0, 0.5
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if binary_entropy(mid) < y:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def kl_bernoulli(x: float, y: float) -> float:
    if not 0.0 <= x <= 1.0:
        raise ValueError("x must lie in [0, 1]")
    if y <= 0.0 or y >= 1.0:
        if (y == 0.0 and x == 0.0) or (y == 1.0 and x == 1.0):
            return 0.0
        raise ValueError("KL divergence is infinite for this pair")
    out = 0.0
    if x > 0:
        out += x * math.log2(x / y)
    if x < 1:
        out += (1 - x) * math.log2((1 - x) / (1 - y))
    return out


# -- code ensemble thresholds -------------------------------------------------

def toeplitz_distance_thresholds(R: float, p: float):
    """Open-bound endpoints ``(alpha_sup, theta_inf)`` for the Toeplitz ensemble."""
    if not 0 < R < 1 or not 0 < p < 1:
        raise ValueError("need 0 < R < 1 and 0 < p < 1")
    pbar = min(p, 1 - p)
    arg = 1 - R * math.log2(1 / (1 - pbar))
    if arg <= 0:
        return Infeasible(f"R log2(1/(1-p)) = {1 - arg:.6g} >= 1")
    alpha = inv_binary_entropy(arg)
    theta = -math.log2((1 - pbar) ** (-(1 - R)) - 1)
    return alpha, theta


def max_rate(zeta: float) -> float:
    if not 0 <= zeta < 1:
        raise ValueError("zeta must lie in [0, 1)")
    return 1 - math.log2(1 + zeta)


def corollary_bec_bounds(R: float, zeta: float):
    """Supremum of achievable exponents at rate ``R`` from the ensemble corollary."""
    if not 0 < zeta < 1:
        raise ValueError("zeta must lie in (0, 1)")
    if not 0 < R < max_rate(zeta):
        return Infeasible(f"rate {R:.6g} not below 1 - log2(1 + zeta) = {max_rate(zeta):.6g}")
    return inv_binary_entropy(1 - R) * (math.log2(1 / zeta) + math.log2(2 ** (1 - R) - 1))


# -- error exponents ---------------------------------------------------------

def gallager_E0(spec: ChannelSpec, rho: float) -> float:
    """Gallager's function for the uniform input distribution."""
    if not 0 <= rho <= 1:
        raise ValueError("rho must lie in [0, 1]")
    e = spec.epsilon
    if spec.kind == "bec":
        return -math.log2(2.0 ** (-rho) * (1 - e) + e)
    s = 1.0 / (1.0 + rho)
    return rho - (1 + rho) * math.log2((1 - e) ** s + e ** s)


def golden_max(f, lo: float, hi: float, tol: float = 1e-10) -> tuple[float, float]:
    """Maximize a unimodal ``f`` on ``[lo, hi]``; returns ``(x, f(x))``."""
    a, b = lo, hi
    c = b - _GOLDEN * (b - a)
    d = a + _GOLDEN * (b - a)
    fc, fd = f(c), f(d)
    while b - a > tol:
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - _GOLDEN * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + _GOLDEN * (b - a)
            fd = f(d)
    cands = [(f(lo), lo), (f(hi), hi), (f(0.5 * (a + b)), 0.5 * (a + b))]
    val, x = max(cands)
    return x, val


@dataclass(frozen=True)
class Exponent:
    value: float
    rho: float
    above_capacity: bool = False


def random_coding_exponent_full(spec: ChannelSpec, R: float) -> Exponent:
    if R < 0:
        raise ValueError("rate must be nonnegative")
    if R >= capacity(spec):
        return Exponent(0.0, 0.0, above_capacity=True)
    rho, val = golden_max(lambda r: gallager_E0(spec, r) - r * R, 0.0, 1.0)
    return Exponent(max(val, 0.0), rho)


def random_coding_exponent(spec: ChannelSpec, R: float) -> float:
    return random_coding_exponent_full(spec, R).value


def improved_breakpoint(spec: ChannelSpec) -> float:
    z = bhattacharyya(spec)
    return 1 - binary_entropy(z / (1 + z))


def improved_exponent(spec: ChannelSpec, R: float) -> float:
    """Exponent of the Toeplitz ensemble: ``H^-1(1-R) log2(1/zeta)`` at low rate, else ``E_r``."""
    z = bhattacharyya(spec)
    if z == 0:
        return math.inf if R < capacity(spec) else 0.0
    if R <= improved_breakpoint(spec):
        return inv_binary_entropy(1 - R) * math.log2(1 / z)
    return random_coding_exponent(spec, R)


# -- plant budgets -------------------------------------------------------------

def abs_matrix(M) -> np.ndarray:
    return np.abs(np.asarray(M, dtype=float))


def spectral_radius(M, rtol: float = 1e-8) -> float:
    """Largest eigenvalue magnitude; also checks ``rho(M) <= rho(|M|)``."""
    M = np.atleast_2d(np.asarray(M, dtype=float))
    if M.shape[0] != M.shape[1]:
        raise ValueError("spectral radius needs a square matrix")
    r = float(np.max(np.abs(np.linalg.eigvals(M))))
    rb = float(np.max(np.abs(np.linalg.eigvals(np.abs(M)))))
    if r > rb * (1 + rtol) + 1e-12:
        raise ArithmeticError(f"spectral radius {r} exceeds that of |M| ({rb})")
    return r


def sufficient_budget(plant: CanonicalPlant, filter: str, n: int) -> AnytimeBudget:
    """Strict lower bounds on ``(R, beta)`` for the hypercuboid or ellipsoid filter."""
    filter = filter.lower()
    m = plant.m_x
    scalar = len(plant.blocks) == 1
    if filter in ("hypercuboid", "cuboid"):
        terms = [np.sum(np.abs(a)) for a in plant.blocks]
        beta = 2 / n * math.log2(spectral_radius(abs_matrix(plant.F)))
    elif filter == "ellipsoid":
        if m < 2:
            raise ValueError("the ellipsoid bounds need a state dimension of at least 2")
        th = math.sqrt(m / (m - 1))
        terms = [math.sqrt(m) * np.sum(np.abs(a) * th ** np.arange(len(a))) for a in plant.blocks]
        beta = 2 / n * math.log2(spectral_radius(plant.F))
    else:
        raise ValueError(f"unknown filter {filter!r}")
    if scalar:
        R = math.log2(terms[0]) / n
    else:
        R = sum(max(0.0, math.log2(t)) for t in terms) / n
    return AnytimeBudget(R, beta)


@dataclass(frozen=True)
class LimitingCase:
    R_n: float
    beta_n: float
    R_star: float
    beta_star: float


def limiting_case(mu, n: int, filter: str = "hypercuboid") -> LimitingCase:
    """Budget of the plant with eigenvalues ``mu_i**n`` and its large-``n`` limit."""
    mu = np.asarray(mu, dtype=float)
    if np.any(mu == 0):
        raise ValueError("eigenvalue magnitudes must be positive")
    lam = mu ** n
    a = -np.real(np.poly(lam))[1:]
    plant = CanonicalPlant.from_coefficients(a)
    b = sufficient_budget(plant, filter, n)
    r_star = float(sum(math.log2(abs(x)) for x in mu if abs(x) > 1))
    b_star = 2 * math.log2(float(np.max(np.abs(mu))))
    return LimitingCase(b.R, b.beta, r_star, b_star)


def fujiwara_bound(coeffs) -> float:
    """Root-magnitude bound for ``z^m + c_1 z^(m-1) + ... + c_m``."""
    c = np.abs(np.asarray(coeffs, dtype=float).reshape(-1))
    m = len(c)
    if m == 0:
        return 0.0
    terms = [c[i] ** (1.0 / (i + 1)) for i in range(m - 1)]
    terms.append((c[m - 1] / 2) ** (1.0 / m))
    K = 2 * max(terms)
    roots = np.roots(np.concatenate([[1.0], coeffs]))
    if len(roots) and np.max(np.abs(roots)) > K * (1 + 1e-9) + 1e-12:
        raise ArithmeticError("root bound violated")
    return K


# -- stabilizable region ------------------------------------------------------

def scalar_stabilizable_mu(spec: ChannelSpec, eta_moment: float = 2.0) -> float:
    """Largest ``log2 |mu|`` stabilizable in the ``eta``-th moment (limiting case)."""
    if eta_moment < 1:
        raise ValueError("moment order must be at least 1")
    C = capacity(spec)
    if bhattacharyya(spec) == 0:
        return C
    if C <= 0:
        return 0.0
    f = lambda R: R - improved_exponent(spec, R) / eta_moment
    return brentq(f, 0.0, C * (1 - 1e-12), xtol=1e-10)


def region_check(mu, spec: ChannelSpec, eta_moment: float = 2.0) -> bool:
    """True if some ``R < C`` covers both the rate and the exponent need of ``mu``."""
    mu = np.abs(np.asarray(mu, dtype=float))
    S = float(np.sum(np.log2(mu[mu > 1])))
    C = capacity(spec)
    if S >= C:
        return False
    need = eta_moment * math.log2(float(mu.max())) if mu.max() > 0 else -math.inf
    return need < improved_exponent(spec, S)


def region_sweep(kind: str, epsilons, eta_moment: float = 2.0) -> list[tuple[float, float]]:
    """``(epsilon, |mu_max|)`` rows for a family of channels."""
    rows = []
    for e in epsilons:
        spec = ChannelSpec(kind, float(e))
        rows.append((float(e), 2.0 ** scalar_stabilizable_mu(spec, eta_moment)))
    return rows
