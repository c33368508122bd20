"""Modulo quantizer and set-membership filters (hypercuboid and ellipsoid).

Filters work in observer canonical coordinates, where the measured output
is the first state component plus bounded noise.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InternalCorruption, QuantizerOverflow
from .thresholds import CanonicalPlant


# -- quantizer -----------------------------------------------------------------

@dataclass(frozen=True)
class QuantizerSpec:
    delta: float
    levels: int

    def __post_init__(self):
        if not self.delta > 0:
            raise ValueError("bin width must be positive")
        if self.levels < 1 or self.levels & (self.levels - 1):
            raise ValueError("number of levels must be a power of two")

    @property
    def bits(self) -> int:
        return self.levels.bit_length() - 1


def quantize(q: QuantizerSpec, y: float) -> int:
    """Index ``floor(y / delta) mod levels``; bins are left-closed."""
    return int(math.floor(y / q.delta)) % q.levels


def dequantize(q: QuantizerSpec, index: int, interval) -> tuple[float, float]:
    """Bin ``[j delta, (j+1) delta)`` with ``j = index (mod levels)`` meeting ``interval``.

    Raises:
        QuantizerOverflow: if no bin or more than one bin of that class meets
            the closed interval.
    """
    lo, hi = float(interval[0]), float(interval[1])
    if hi < lo:
        raise ValueError("empty prediction interval")
    j0 = math.floor(lo / q.delta)
    j = j0 + (index - j0) % q.levels
    if j * q.delta > hi:
        raise QuantizerOverflow(f"no bin with index {index} meets [{lo:.6g}, {hi:.6g}]")
    if (j + q.levels) * q.delta <= hi:
        raise QuantizerOverflow(
            f"prediction interval of width {hi - lo:.6g} exceeds the quantizer range {q.delta * q.levels:.6g}"
        )
    return j * q.delta, (j + 1) * q.delta


def quantize_anchored(q: QuantizerSpec, y: float, anchor: float) -> int:
    """Index of ``y`` on the grid ``anchor + j delta``, ``0 <= j < levels``."""
    j = math.floor((y - anchor) / q.delta)
    if not 0 <= j < q.levels:
        raise QuantizerOverflow(f"measurement {y:.6g} outside the anchored range")
    return j


def dequantize_anchored(q: QuantizerSpec, index: int, anchor: float) -> tuple[float, float]:
    return anchor + index * q.delta, anchor + (index + 1) * q.delta


# -- hypercuboid ------------------------------------------------------------------

@dataclass
class Hypercuboid:
    x_min: np.ndarray
    x_max: np.ndarray

    def __post_init__(self):
        self.x_min = np.asarray(self.x_min, dtype=float).copy()
        self.x_max = np.asarray(self.x_max, dtype=float).copy()
        if np.any(self.x_min > self.x_max):
            raise ValueError("x_min must not exceed x_max")

    @classmethod
    def point(cls, x) -> "Hypercuboid":
        return cls(x, x)

    @property
    def Delta(self) -> np.ndarray:
        return self.x_max - self.x_min

    @property
    def center(self) -> np.ndarray:
        return 0.5 * (self.x_min + self.x_max)

    def contains(self, x, tol: float = 0.0) -> bool:
        x = np.asarray(x, dtype=float)
        return bool(np.all(x >= self.x_min - tol) and np.all(x <= self.x_max + tol))

    def first_interval(self) -> tuple[float, float]:
        return float(self.x_min[0]), float(self.x_max[0])


def hypercuboid_time_update(h: Hypercuboid, plant: CanonicalPlant, Gu=None) -> Hypercuboid:
    """Box after one step: ``Delta' = |F| Delta + W``, anchor moved by ``F`` and ``G u``."""
    c = plant.F @ h.center
    if Gu is not None:
        c = c + Gu
    r = np.abs(plant.F) @ (0.5 * h.Delta) + 0.5 * plant.W_vec
    return Hypercuboid(c - r, c + r)


def hypercuboid_measurement_update(h: Hypercuboid, bin_interval, V: float, coord: int = 0) -> Hypercuboid:
    """Intersect one coordinate with the quantizer bin widened by the noise bound."""
    lo = max(h.x_min[coord], bin_interval[0] - V / 2)
    hi = min(h.x_max[coord], bin_interval[1] + V / 2)
    if lo > hi:
        raise InternalCorruption("measurement bin does not meet the predicted box")
    out = Hypercuboid(h.x_min, h.x_max)
    out.x_min[coord], out.x_max[coord] = lo, hi
    return out


def upper_cumsum(v) -> np.ndarray:
    """``L_u v`` with ``L_u`` the upper-triangular matrix of ones."""
    v = np.asarray(v, dtype=float)
    return np.cumsum(v[::-1])[::-1]


@dataclass(frozen=True)
class SteadyState:
    Delta_tu: np.ndarray
    transient: list[np.ndarray]
    min_levels: int
    rate_bits: float  # log2 sum |a_i|, the asymptotic bits per step as delta grows


def steady_state_delta(a, delta: float, V: float, W, Delta0=None) -> SteadyState:
    """Closed-form ``(delta + V) L_u |a| + L_u W`` and the levels it needs."""
    a = np.abs(np.asarray(a, dtype=float))
    m = len(a)
    Wv = np.broadcast_to(np.asarray(W, dtype=float), (m,))
    tu = (delta + V) * upper_cumsum(a) + upper_cumsum(Wv)
    D = np.zeros(m) if Delta0 is None else np.asarray(Delta0, dtype=float)
    F_abs = np.abs(np.eye(m, k=1))
    F_abs[:, 0] = a
    trans = [D.copy()]
    for _ in range(m):
        post = D.copy()
        post[0] = delta + V
        D = F_abs @ post + Wv
        trans.append(D.copy())
    need = max(float(d[0]) for d in trans) + V
    levels = 1 << max(0, math.ceil(math.log2(max(need / delta, 1.0))))
    return SteadyState(tu, trans, levels, math.log2(float(a.sum())) if a.sum() > 0 else -math.inf)


def design_delta_hypercuboid(plant: CanonicalPlant, levels: int, margin: float = 1.0) -> float:
    """Smallest bin width for which ``levels`` bins always cover the prediction.

    Starting from a known initial state, ``delta * levels >= Delta^(1) + V``
    holds at every step when it holds in steady state.
    """
    S = float(np.sum(np.abs(plant.a)))
    if levels <= S:
        raise ValueError(f"{levels} levels cannot cover a growth factor of {S:.4g}")
    w1 = float(upper_cumsum(plant.W_vec)[0])
    return margin * (plant.V * (S + 1) + w1) / (levels - S)


# -- ellipsoid ---------------------------------------------------------------------

@dataclass
class Ellipsoid:
    """``{x : (x - c)^T P^-1 (x - c) <= 1}``."""

    P: np.ndarray
    c: np.ndarray

    def __post_init__(self):
        self.P = np.asarray(self.P, dtype=float)
        self.P = 0.5 * (self.P + self.P.T)
        self.c = np.asarray(self.c, dtype=float).copy()
        lam = np.linalg.eigvalsh(self.P)
        if lam.min() < -1e-9 * max(1.0, abs(lam).max()):
            raise InternalCorruption("ellipsoid shape matrix is not positive semidefinite")

    @property
    def center(self) -> np.ndarray:
        return self.c

    def level(self, x) -> float:
        d = np.asarray(x, dtype=float) - self.c
        return float(d @ np.linalg.solve(self.P, d))

    def contains(self, x, tol: float = 1e-6) -> bool:
        return self.level(x) <= 1 + tol

    def first_interval(self) -> tuple[float, float]:
        s = math.sqrt(self.P[0, 0])
        return float(self.c[0] - s), float(self.c[0] + s)

    def volume_factor(self) -> float:
        return math.sqrt(max(np.linalg.det(self.P), 0.0))


@dataclass(frozen=True)
class SlabUpdate:
    xi: float
    a: float
    b: float
    case: int


def min_volume_parameters(m: int, gamma: float, delta_s: float) -> SlabUpdate:
    """``(xi, a, b)`` for the unit-ball slab ``gamma <= <h, x> <= delta_s``."""
    flip = abs(delta_s) < abs(gamma)
    if flip:
        gamma, delta_s = -delta_s, -gamma
    if gamma * delta_s <= -1.0 / m:
        return SlabUpdate(0.0, 1.0, 1.0, 1)
    if abs(gamma + delta_s) <= 1e-14:
        return SlabUpdate(0.0, m * delta_s ** 2, m * (1 - delta_s ** 2) / (m - 1), 2)
    s = gamma + delta_s
    D = m ** 2 * (delta_s ** 2 - gamma ** 2) ** 2 + 4 * (1 - gamma ** 2) * (1 - delta_s ** 2)
    xi = (m * s ** 2 + 2 * (1 + gamma * delta_s) - math.sqrt(max(D, 0.0))) / (2 * (m + 1) * s)
    a = m * (xi - gamma) * (delta_s - xi)
    if a <= 0:
        raise InternalCorruption("degenerate slab")
    b = (a - a * gamma ** 2) / (a - (xi - gamma) ** 2)
    return SlabUpdate(-xi if flip else xi, a, b, 3)


def min_volume_ellipsoid_slab(e: Ellipsoid, h, gamma: float, delta_s: float) -> Ellipsoid:
    """Smallest ellipsoid covering ``e`` cut by ``gamma <= <h, x - c> / sqrt(h^T P h) <= delta_s``."""
    h = np.asarray(h, dtype=float)
    if not np.any(h):
        raise ValueError("slab direction must be nonzero")
    if not -1 - 1e-12 <= gamma <= delta_s <= 1 + 1e-12:
        raise ValueError("need -1 <= gamma <= delta_s <= 1")
    m = len(e.c)
    Ph = e.P @ h
    s2 = float(h @ Ph)
    u = min_volume_parameters(m, max(gamma, -1.0), min(delta_s, 1.0))
    P = u.b * e.P - (u.b - u.a) * np.outer(Ph, Ph) / s2
    c = e.c + u.xi * Ph / math.sqrt(s2)
    return Ellipsoid(P, c)


def ellipsoid_time_update(e: Ellipsoid, plant: CanonicalPlant, eps_prime: float, Gu=None) -> Ellipsoid:
    """Covering ellipsoid of ``F E + G u + noise box``.

    The noise box fits in a ball of radius ``r = |W/2|_2`` and the Minkowski
    sum is covered by ``(1+eps') F P F^T + (1 + 1/eps') r^2 I``.
    """
    if eps_prime <= 0:
        raise ValueError("eps_prime must be positive")
    r2 = float(np.sum((0.5 * plant.W_vec) ** 2))
    F = plant.F
    P = (1 + eps_prime) * F @ e.P @ F.T + (1 + 1 / eps_prime) * r2 * np.eye(len(e.c))
    c = F @ e.c
    if Gu is not None:
        c = c + Gu
    return Ellipsoid(P, c)


def ellipsoid_measurement_update(e: Ellipsoid, bin_interval, V: float) -> tuple[Ellipsoid, SlabUpdate]:
    lo = bin_interval[0] - V / 2
    hi = bin_interval[1] + V / 2
    s = math.sqrt(e.P[0, 0])
    g = max((lo - e.c[0]) / s, -1.0)
    d = min((hi - e.c[0]) / s, 1.0)
    if g > d:
        raise InternalCorruption("measurement bin does not meet the predicted ellipsoid")
    h = np.zeros(len(e.c))
    h[0] = 1.0
    u = min_volume_parameters(len(e.c), g, d)
    return min_volume_ellipsoid_slab(e, h, g, d), u


def ellipsoid_bound_step(Delta_e, plant: CanonicalPlant, eps_prime: float, delta: float, V: float):
    """One step of the diagonal bound recursion: returns ``(Delta_e|t, Delta_e,t+1)``.

    ``sqrt(P^ii)`` never exceeds the recursion's entries when both start
    from the same diagonal.
    """
    m = plant.m_x
    th = math.sqrt(m / (m - 1))
    post = th * np.asarray(Delta_e, dtype=float)
    post[0] = max(1.0, math.sqrt(m) / 2) * (delta + V)
    q = math.sqrt((1 + 1 / eps_prime) * float(np.sum((0.5 * plant.W_vec) ** 2)))
    nxt = math.sqrt(1 + eps_prime) * np.abs(plant.F) @ post + q
    return post, nxt


def design_delta_ellipsoid(plant: CanonicalPlant, levels: int, eps_prime: float, margin: float = 1.0) -> float:
    """Bin width so that ``levels`` bins cover ``2 sqrt(P^11) + V`` in steady state."""
    m = plant.m_x
    th = math.sqrt(m / (m - 1))
    g = math.sqrt(1 + eps_prime) * th
    k1 = max(1.0, math.sqrt(m) / 2)
    q = math.sqrt((1 + 1 / eps_prime) * float(np.sum((0.5 * plant.W_vec) ** 2)))
    pw = g ** np.arange(m)
    A = k1 * math.sqrt(1 + eps_prime) * float(np.sum(pw * np.abs(plant.a)))
    B = q * float(np.sum(pw))
    if levels <= 2 * A:
        raise ValueError(f"{levels} levels are too few for the ellipsoidal filter")
    return margin * (2 * A * plant.V + 2 * B + plant.V) / (levels - 2 * A)
