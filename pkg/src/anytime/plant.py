"""Plant models, the observer canonical transform and the two built-in presets."""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .thresholds import CanonicalPlant, companion


@dataclass
class PlantModel:
    """Physical plant ``x' = F x + G u + w``, ``y = H x + v`` with bounded noise.

    ``W`` and ``V`` are the full widths of the per-component noise boxes
    (``|w_i| < W/2``, ``|v| < V/2``). ``sigma`` is the standard deviation of the
    Gaussian before truncation; ``noise="uniform"`` draws uniformly instead.
    """

    F: np.ndarray
    G: np.ndarray
    H: np.ndarray
    K: np.ndarray
    W: float
    V: float
    sigma: float = 1.0
    noise: str = "gaussian"
    timing: str = "filtered"  # u_t from x_{t|t}; "predicted" uses x_{t|t-1}
    x0: np.ndarray | None = None
    name: str = ""
    T: np.ndarray = field(init=False)
    canonical: CanonicalPlant = field(init=False)

    def __post_init__(self):
        self.F = np.atleast_2d(np.asarray(self.F, dtype=float))
        m = self.F.shape[0]
        self.G = np.asarray(self.G, dtype=float).reshape(m, -1)
        self.H = np.asarray(self.H, dtype=float).reshape(1, m)
        self.K = np.asarray(self.K, dtype=float).reshape(self.G.shape[1], m)
        if self.x0 is None:
            self.x0 = np.zeros(m)
        if self.timing not in ("filtered", "predicted"):
            raise ValueError(f"unknown control timing {self.timing!r}")
        self.T, self.canonical = canonical_form(self.F, self.G, self.H, self.W, self.V)
        self.canonical.K = self.K
        self.canonical.name = self.name

    @property
    def m_x(self) -> int:
        return self.F.shape[0]

    def closed_loop_radius(self) -> float:
        return float(np.max(np.abs(np.linalg.eigvals(self.F - self.G @ self.K))))

    def with_(self, **kw) -> "PlantModel":
        base = {f: getattr(self, f) for f in
                ("F", "G", "H", "K", "W", "V", "sigma", "noise", "timing", "x0", "name")}
        base.update(kw)
        return PlantModel(**base)


def canonical_form(F, G, H, W, V) -> tuple[np.ndarray, CanonicalPlant]:
    """Change of state ``z = T x`` bringing a single-output plant to observer form.

    In the new coordinates ``F_o`` has the characteristic coefficients in its
    first column and ``H_o = e_1``. The noise box is mapped to the smallest
    axis-aligned box containing ``T`` times it.
    """
    F = np.asarray(F, dtype=float)
    H = np.asarray(H, dtype=float).reshape(1, -1)
    m = F.shape[0]
    a = -np.real(np.poly(F))[1:]
    Fo = companion(a)
    e1 = np.zeros((1, m))
    e1[0, 0] = 1.0
    O = np.vstack([H @ np.linalg.matrix_power(F, i) for i in range(m)])
    Oo = np.vstack([e1 @ np.linalg.matrix_power(Fo, i) for i in range(m)])
    if np.linalg.matrix_rank(O) < m:
        raise ValueError("plant is not observable from its single output")
    T = np.linalg.solve(Oo, O)
    Tinv = np.linalg.inv(T)
    if not np.allclose(T @ F @ Tinv, Fo, atol=1e-8 * max(1.0, np.abs(Fo).max())):
        raise ArithmeticError("canonical transform failed")
    Wz = np.abs(T) @ np.full(m, float(W))
    plant = CanonicalPlant(Fo, T @ np.asarray(G, dtype=float).reshape(m, -1), e1, [a], W=Wz, V=float(V))
    plant.extra["T"] = T
    return T, plant


CART_STICK_F = np.array([
    [1.161, 0.105, 0.0],
    [3.3, 1.161, 0.002],
    [-3.265, -0.160, 0.979],
])
CART_STICK_G = np.array([-0.003, -0.068, 0.859])
CART_STICK_H = np.array([10.0, 0.0, 0.0])
CART_STICK_K = np.array([-81.55, -14.37, -0.04])
# canonical form as printed for this plant (rounded coefficients)
CART_STICK_FO = companion([3.3, -3.27, 0.98])

EXAMPLE2_F = np.array([
    [2.0, 1.0, 0.0],
    [0.25, 0.0, 1.0],
    [-0.5, 0.0, 0.0],
])


def cart_stick() -> PlantModel:
    """Sampled inverted pendulum on a cart, noise variance 0.01 truncated to +-0.025."""
    return PlantModel(
        CART_STICK_F, CART_STICK_G, CART_STICK_H, CART_STICK_K,
        W=0.05, V=0.05, sigma=0.1, timing="filtered", name="cart-stick",
    )


def example2() -> PlantModel:
    """Three-state plant with ``G = I``; N(0,1) noise truncated to +-2.5.

    The controller cancels the predicted state, ``u_t = -F x_{t|t-1}``.
    """
    return PlantModel(
        EXAMPLE2_F, np.eye(3), np.array([1.0, 0.0, 0.0]), EXAMPLE2_F,
        W=5.0, V=5.0, sigma=1.0, timing="predicted", name="example2",
    )


PRESETS = {"cart-stick": cart_stick, "example2": example2}


def preset(name: str) -> PlantModel:
    try:
        return PRESETS[name]()
    except KeyError:
        raise ValueError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}") from None
