"""Independent reference computations shared by the unit and acceptance tests."""
import math

import numpy as np


def _boundary(gamma, delta, pts=1500):
    """Boundary of the unit disk cut to ``gamma <= x1 <= delta`` (arcs and corners)."""
    th = np.linspace(0, math.pi, pts)
    x = np.cos(th)
    keep = (x >= gamma) & (x <= delta)
    xs = np.concatenate([x[keep], [gamma, delta]])
    ys = np.concatenate([np.sin(th)[keep], [math.sqrt(1 - gamma**2), math.sqrt(1 - delta**2)]])
    return xs, ys


def min_area_slab_ellipse(gamma, delta, rounds=6, pts=80):
    """Grid search over axis-aligned ellipses centred on the x1 axis.

    The cut disk is symmetric about the x1 axis, so the unique minimal
    ellipse is too. For each centre ``c`` and x1 semi-axis ``A`` the smallest
    admissible x2 semi-axis follows in closed form; the grid is then zoomed
    around the best cell.
    """
    xs, ys = _boundary(gamma, delta)
    c_lo, c_hi = gamma - 1.0, delta + 1.0
    a_lo, a_hi = 0.5 * (delta - gamma), 3.0
    best = (math.inf, None, None)
    for _ in range(rounds):
        for c in np.linspace(c_lo, c_hi, pts):
            reach = max(np.max(np.abs(xs - c)), 1e-12)
            A = np.linspace(max(a_lo, reach * (1 + 1e-9)), max(a_hi, reach * (1 + 2e-9)), pts)
            frac = 1 - ((xs[None, :] - c) / A[:, None]) ** 2
            B = np.sqrt(np.max(ys[None, :] ** 2 / frac, axis=1))
            area = math.pi * A * B
            i = int(np.argmin(area))
            if area[i] < best[0]:
                best = (float(area[i]), float(c), float(A[i]))
        _, c0, a0 = best
        cw, aw = (c_hi - c_lo) / 8, (a_hi - a_lo) / 8
        c_lo, c_hi = c0 - cw, c0 + cw
        a_lo, a_hi = max(0.5 * (delta - gamma), a0 - aw), a0 + aw
    return best[0]


def sample_cut_ball(rng, m, gamma, delta, count):
    """Uniform points of the unit ball with ``gamma <= x1 <= delta`` (rejection)."""
    out = []
    while sum(len(o) for o in out) < count:
        x = rng.normal(size=(4 * count, m))
        x *= (rng.random(4 * count) ** (1 / m) / np.linalg.norm(x, axis=1))[:, None]
        out.append(x[(x[:, 0] >= gamma) & (x[:, 0] <= delta)])
    return np.concatenate(out)[:count]
