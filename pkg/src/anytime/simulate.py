"""Closed-loop simulation, Monte-Carlo reliability estimation and the LQR sweep.

One control step: the plant emits ``y_t``, the observer quantizes it to a
``k``-bit message, the encoder produces ``n`` bits, the channel erases some,
the decoder resolves what it can and the controller rebuilds its estimate
from the longest fully decoded prefix of messages.
"""
from __future__ import annotations

import csv
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import estimation as est
from .channel import ChannelSpec, transmit
from .code import Encoder, ToeplitzCode, lift_packets, sample_toeplitz
from .decoder import Decoder
from .errors import InternalCorruption, MemoryOverflow, QuantizerOverflow
from .plant import PlantModel, preset

DIVERGENCE_NORM = 1e6


@dataclass
class LoopConfig:
    plant: PlantModel
    n: int = 15
    k: int = 5
    channel: ChannelSpec = field(default_factory=lambda: ChannelSpec("bec", 0.3))
    horizon: int = 500
    feedback_period: int = 32  # 2T; 0 disables truncation
    filter: str = "hypercuboid"
    observer_knows_control: bool = False
    seed: int = 0
    code_seed: int | None = None  # defaults to ``seed``
    code: ToeplitzCode | None = None
    p: float = 0.5
    depth: int | None = None
    delta: float | None = None  # quantizer bin width; designed when None
    margin: float = 1.0
    eps_prime: float = 0.25
    check_invariants: bool = True

    def __post_init__(self):
        if self.horizon < 1:
            raise ValueError("horizon must be at least 1")
        if not 0 < self.k < self.n:
            raise ValueError("need 0 < k < n")
        if self.filter not in ("hypercuboid", "ellipsoid"):
            raise ValueError(f"unknown filter {self.filter!r}")
        if self.feedback_period % 2:
            raise ValueError("feedback period 2T must be even")
        if self.channel.kind != "bec":
            raise ValueError("closed-loop simulation needs an erasure channel")
        if self.code is not None and (self.code.n, self.code.k) != (self.n, self.k):
            raise ValueError("code shape does not match n and k")

    @property
    def levels(self) -> int:
        return 1 << self.k

    def code_depth(self) -> int:
        if self.depth is not None:
            return self.depth
        if self.feedback_period:
            return min(self.horizon + 1, 2 * self.feedback_period + 64)
        return self.horizon + 1

    def make_code(self) -> ToeplitzCode:
        if self.code is not None:
            return self.code
        seed = self.seed if self.code_seed is None else self.code_seed
        return sample_toeplitz(self.n, self.k, self.p, self.code_depth(), seed)

    def quantizer(self) -> est.QuantizerSpec:
        cp = self.plant.canonical
        if self.delta is not None:
            return est.QuantizerSpec(self.delta, self.levels)
        if self.filter == "hypercuboid":
            d = est.design_delta_hypercuboid(cp, self.levels, self.margin)
        else:
            d = est.design_delta_ellipsoid(cp, self.levels, self.eps_prime, self.margin)
        # noiseless plants get an arbitrarily fine grid
        return est.QuantizerSpec(d if d > 0 else 1e-9, self.levels)


@dataclass
class TrialRecord:
    x_norm: np.ndarray
    u: np.ndarray
    delay: np.ndarray
    diverged: bool
    cost: float
    reason: str = ""
    max_ellipsoid_level: float = 0.0

    @property
    def max_norm(self) -> float:
        return float(np.max(self.x_norm)) if len(self.x_norm) else 0.0


def lqr_cost(x_norm, u_norm, horizon: int) -> float:
    return float(np.sum(np.asarray(x_norm) ** 2 + np.asarray(u_norm) ** 2) / (2 * horizon))


def truncated_noise(rng: np.random.Generator, width: float, size: int, sigma: float, kind: str = "gaussian"):
    """Draws with ``|w| < width/2`` exactly; Gaussian ones are redrawn until inside."""
    half = width / 2
    if half <= 0:
        return np.zeros(size)
    if kind == "uniform":
        out = rng.uniform(-half, half, size)
        out[np.abs(out) >= half] = 0.0
        return out
    out = rng.normal(0.0, sigma, size)
    bad = np.abs(out) >= half
    while np.any(bad):
        out[bad] = rng.normal(0.0, sigma, int(bad.sum()))
        bad = np.abs(out) >= half
    return out


def _bits(index: int, k: int) -> np.ndarray:
    return np.array([(index >> i) & 1 for i in range(k)], dtype=np.uint8)


def _index(bits) -> int:
    return int(sum(int(b) << i for i, b in enumerate(bits)))


class ReplayFilter:
    """Set-membership filter fed by a growing prefix of decoded measurements.

    ``post`` is the set at ``K|K`` where ``K`` is the newest decoded instant
    and ``prior`` the one at ``K|K-1``; estimates for later times are pure
    time updates from ``post`` using the stored controls. When more instants
    decode, the filter replays them in order, which keeps each prediction
    interval at its steady-state width regardless of the decoding delay.
    """

    def __init__(self, cfg: LoopConfig, q: est.QuantizerSpec, x0_canonical):
        self.cfg = cfg
        self.plant = cfg.plant.canonical
        self.q = q
        self.K = -1
        z0 = np.asarray(x0_canonical, dtype=float)
        if cfg.filter == "hypercuboid":
            self.prior = est.Hypercuboid.point(z0)
        else:
            r2 = float(np.sum((0.5 * self.plant.W_vec) ** 2))
            self.prior = est.Ellipsoid(max(r2, 1e-12) * np.eye(len(z0)), z0)
        self.post = None
        self.Gu: list[np.ndarray] = []  # canonical control contribution applied at each t
        self.slab_updates: list[est.SlabUpdate] = []

    def time_update(self, s, t: int):
        if self.cfg.filter == "hypercuboid":
            return est.hypercuboid_time_update(s, self.plant, self.Gu[t])
        return est.ellipsoid_time_update(s, self.plant, self.cfg.eps_prime, self.Gu[t])

    def predicted(self, t: int):
        """Set at ``t|t-1`` (if ``t = K + 1``) or ``t|K`` in general."""
        if t == self.K:
            return self.prior
        if t == 0 and self.K < 0:
            return self.prior
        s = self.post if self.K >= 0 else self.prior
        start = self.K if self.K >= 0 else 0
        for tau in range(start, t):
            s = self.time_update(s, tau)
        return s

    def output_interval(self, s) -> tuple[float, float]:
        lo, hi = s.first_interval()
        return lo - self.plant.V / 2, hi + self.plant.V / 2

    def anchor(self, s) -> float:
        lo, hi = self.output_interval(s)
        return 0.5 * (lo + hi) - 0.5 * self.q.delta * self.q.levels

    def measure(self, s, index: int, anchored: bool):
        if anchored:
            bin_ = est.dequantize_anchored(self.q, index, self.anchor(s))
        else:
            bin_ = est.dequantize(self.q, index, self.output_interval(s))
        if self.cfg.filter == "hypercuboid":
            return est.hypercuboid_measurement_update(s, bin_, self.plant.V)
        out, u = est.ellipsoid_measurement_update(s, bin_, self.plant.V)
        self.slab_updates.append(u)
        return out

    def advance(self, indices: list[int], anchored: bool) -> None:
        """Consume decoded indices for instants ``K+1, K+2, ...``."""
        for idx in indices:
            t = self.K + 1
            prior = self.predicted(t) if self.K >= 0 else self.prior
            self.post = self.measure(prior, idx, anchored)
            self.prior = prior
            self.K = t

    def estimate_set(self, t: int, timing: str):
        if timing == "filtered":
            return self.post if self.K == t else self.predicted(t)
        return self.predicted(t)  # t|t-1, or t|K when older instants are pending


def run_closed_loop(cfg: LoopConfig, record_sets: bool = False) -> TrialRecord:
    """Simulate one trial; quantizer overflow or blow-up ends it as diverged."""
    plant = cfg.plant
    cp = plant.canonical
    T = cp.extra.get("T", np.eye(plant.m_x))
    Tinv = np.linalg.inv(T)
    n, k, H = cfg.n, cfg.k, cfg.horizon
    code = cfg.make_code()
    q = cfg.quantizer()
    ss = np.random.SeedSequence(cfg.seed)
    rng_chan, rng_w, rng_v = (np.random.default_rng(s) for s in ss.spawn(3))

    enc = Encoder(code)
    dec = Decoder(code)
    x = np.asarray(plant.x0, dtype=float).copy()
    filt = ReplayFilter(cfg, q, T @ x)
    mirror = ReplayFilter(cfg, q, T @ x) if cfg.observer_knows_control else None
    sent: list[np.ndarray] = []
    decoded: list[int] = []
    pending_cuts: list[tuple[int, int]] = []
    x_norm = np.zeros(H)
    u_norm = np.zeros(H)
    delays = np.zeros(H, dtype=int)
    worst = 0.0
    diverged, reason = False, ""
    steps = 0
    z_hist: list[np.ndarray] = []

    try:
        for t in range(H):
            tau = t + 1
            z = T @ x
            v = truncated_noise(rng_v, plant.V, 1, plant.sigma, plant.noise)[0]
            y = float((plant.H @ x)[0]) + v
            if mirror is not None:
                s_obs = mirror.predicted(t)
                idx = est.quantize_anchored(q, y, mirror.anchor(s_obs))
            else:
                idx = est.quantize(q, y)
            b = _bits(idx, k)
            sent.append(b)

            for frm, cut in list(pending_cuts):
                if frm <= tau:
                    enc.truncate(cut)
                    pending_cuts.remove((frm, cut))
            c = enc.encode_step(b)
            out = dec.decode_step(transmit(cfg.channel, c, rng_chan))
            for when, bh in out.message_estimates:
                if not np.array_equal(bh, sent[when - 1]):
                    raise InternalCorruption(f"decoded message {when} differs from the one sent")
                decoded.append(_index(bh))
            delays[t] = out.earliest_unresolved_delay
            if cfg.feedback_period:
                rep = dec.feedback_report(cfg.feedback_period)
                if rep is not None:
                    pending_cuts.append((rep.effective_from, rep.cutoff))

            z_hist.append(z)
            for idx_new in decoded[filt.K + 1:]:
                filt.advance([idx_new], anchored=mirror is not None)
                if cfg.check_invariants:
                    worst = max(worst, _check_contains(filt.post, z_hist[filt.K], f"{filt.K}|{filt.K}"))
            s = filt.estimate_set(t, plant.timing)
            if cfg.check_invariants:
                worst = max(worst, _check_contains(s, z, f"estimate at t={t}"))
            u = -plant.K @ (Tinv @ s.center)
            if mirror is not None:
                mirror.Gu.append(T @ plant.G @ u)
                mirror.advance([idx], anchored=True)
            filt.Gu.append(T @ plant.G @ u)

            x_norm[t] = float(np.linalg.norm(x))
            u_norm[t] = float(np.linalg.norm(u))
            steps = t + 1
            w = truncated_noise(rng_w, plant.W, plant.m_x, plant.sigma, plant.noise)
            x = plant.F @ x + plant.G @ u + w
            if not np.all(np.isfinite(x)) or np.linalg.norm(x) > DIVERGENCE_NORM:
                diverged, reason = True, f"state norm exceeded {DIVERGENCE_NORM:g} at t={t + 1}"
                break
    except QuantizerOverflow as exc:
        diverged, reason = True, f"quantizer overflow: {exc}"
    except MemoryOverflow as exc:
        diverged, reason = True, f"code memory exhausted: {exc}"

    x_norm, u_norm, delays = x_norm[:steps], u_norm[:steps], delays[:steps]
    cost = math.inf if diverged else lqr_cost(x_norm, u_norm, H)
    return TrialRecord(x_norm, u_norm, delays, diverged, cost, reason, worst)


def _check_contains(st, z, where: str) -> float:
    """Raise if ``z`` is outside ``st``; returns the ellipsoid level (0 for boxes)."""
    if isinstance(st, est.Hypercuboid):
        if not st.contains(z):
            raise InternalCorruption(f"state left the hypercuboid ({where})")
        return 0.0
    lvl = st.level(z)
    if lvl > 1 + 1e-6:
        raise InternalCorruption(f"state left the ellipsoid ({where}, level {lvl:.9g})")
    return lvl


# -- reliability -------------------------------------------------------------------

@dataclass
class ReliabilityTable:
    t: int
    trials: int  # number of delay samples (trials times pooled times)
    counts: dict[int, int]
    slope: float | None  # fitted d-slope of log2 P(d); None if undefined
    intercept: float | None
    r2: float | None
    slope_stderr: float | None
    fit_delays: list[int]
    min_events: int = 30

    def probability(self, d: int) -> float:
        return self.counts.get(d, 0) / self.trials

    def rows(self) -> list[tuple[int, int, float]]:
        top = max(self.counts) if self.counts else 0
        return [(d, self.counts.get(d, 0), self.probability(d)) for d in range(top + 1)]


def _reliability_chunk(args) -> list[list[int]]:
    code, channel, horizon, seeds, first = args
    out = []
    zero = np.zeros(code.n, dtype=np.uint8)
    for s in seeds:
        rng = np.random.default_rng(s)
        dec = Decoder(code, values=False)
        seen = []
        for t in range(1, horizon + 1):
            d = dec.decode_step(transmit(channel, zero, rng)).earliest_unresolved_delay
            if t >= first:
                seen.append(d)
        out.append(seen)
    return out


def reliability_estimate(code: ToeplitzCode, channel: ChannelSpec, horizon: int = 100, trials: int = 10_000,
                         seed: int = 0, min_events: int = 30, jobs: int = 1,
                         pool_from: int | None = None) -> ReliabilityTable:
    """Frequency of each earliest-unresolved delay at time ``horizon``.

    Resolvability over an erasure channel depends only on which positions
    are erased, so trials send the all-zero codeword. The fit is a least
    squares line of ``log2 P(d)`` over the delays ``d >= 1`` seen at least
    ``min_events`` times.

    With ``pool_from`` set, delays observed at every time from ``pool_from``
    to ``horizon`` are pooled. By time invariance they share one
    distribution once ``t`` is well past the typical delay, but successive
    samples of a trial are correlated.
    """
    if channel.kind != "bec":
        raise ValueError("reliability estimation needs an erasure channel")
    if channel.packet_len > 1:
        code = lift_packets(code, channel.packet_len)
    first = horizon if pool_from is None else pool_from
    seeds = np.random.SeedSequence(seed).spawn(trials)
    chunks = [seeds[i::jobs] for i in range(jobs)]
    if jobs > 1:
        with ProcessPoolExecutor(jobs) as ex:
            parts = list(ex.map(_reliability_chunk, [(code, channel, horizon, c, first) for c in chunks]))
        per_trial = [None] * trials
        for j, part in enumerate(parts):
            per_trial[j::jobs] = part
    else:
        per_trial = _reliability_chunk((code, channel, horizon, seeds, first))
    counts: dict[int, int] = {}
    for seen in per_trial:
        for d in seen:
            counts[d] = counts.get(d, 0) + 1
    samples = sum(counts.values())
    fit = sorted(d for d, c in counts.items() if d >= 1 and c >= min_events)
    slope = intercept = r2 = se = None
    if len(fit) >= 2:
        xs = np.array(fit, dtype=float)
        ys = np.log2([counts[d] / samples for d in fit])
        A = np.vstack([xs, np.ones_like(xs)]).T
        (slope, intercept), *_ = np.linalg.lstsq(A, ys, rcond=None)
        pred = A @ np.array([slope, intercept])
        ss_res = float(np.sum((ys - pred) ** 2))
        ss_tot = float(np.sum((ys - ys.mean()) ** 2))
        r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
        se = math.sqrt(ss_res / (len(xs) - 2) / np.sum((xs - xs.mean()) ** 2)) if len(xs) > 2 else 0.0
        slope, intercept = float(slope), float(intercept)
    return ReliabilityTable(horizon, samples, dict(sorted(counts.items())), slope, intercept, r2, se, fit, min_events)


# -- LQR sweep -------------------------------------------------------------------------

@dataclass
class SweepResult:
    k: int
    code_costs: list[float]  # mean LQR cost per code over its surviving runs
    diverged_runs: int
    total_runs: int

    @property
    def median(self) -> float:
        return float(np.median(self.code_costs)) if self.code_costs else math.inf

    def cdf(self) -> list[tuple[float, float]]:
        xs = sorted(self.code_costs)
        return [(c, (i + 1) / len(xs)) for i, c in enumerate(xs)]


def _code_job(args) -> tuple[float | None, int]:
    base, k, code_seed, runs, seed0 = args
    cfg = LoopConfig(**{**base, "k": k, "code_seed": code_seed, "seed": seed0})
    code = cfg.make_code()
    costs, div = [], 0
    for r in range(runs):
        rec = run_closed_loop(LoopConfig(**{**base, "k": k, "code": code, "seed": seed0 + r}))
        if rec.diverged:
            div += 1
        else:
            costs.append(rec.cost)
    return (float(np.mean(costs)) if costs else None), div


def experiment_lqr_sweep(base: LoopConfig, k_values, codes_per_k: int = 50, runs_per_code: int = 10,
                         jobs: int = 1) -> list[SweepResult]:
    """For each ``k`` sample codes from the ensemble and average the LQR cost per code."""
    fields_ = {f: getattr(base, f) for f in base.__dataclass_fields__}
    fields_.pop("code")
    results = []
    for k in k_values:
        ss = np.random.SeedSequence([base.seed, k])
        code_seeds = [int(s.generate_state(1)[0]) for s in ss.spawn(codes_per_k)]
        tasks = [(fields_, k, cs, runs_per_code, (base.seed * 1_000_003 + k * 10_007 + i * runs_per_code) % 2**31)
                 for i, cs in enumerate(code_seeds)]
        if jobs > 1:
            with ProcessPoolExecutor(jobs) as ex:
                outs = list(ex.map(_code_job, tasks))
        else:
            outs = [_code_job(t) for t in tasks]
        costs = [c for c, _ in outs if c is not None]
        results.append(SweepResult(k, costs, sum(d for _, d in outs), codes_per_k * runs_per_code))
    return results


# -- output helpers -------------------------------------------------------------------

def write_csv(path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)


def write_svg_lines(path, series: dict[str, list[tuple[float, float]]], xlabel: str = "", ylabel: str = "",
                    width: int = 480, height: int = 320) -> None:
    """Minimal SVG line chart; the CSV tables stay the source of truth."""
    pts = [p for s in series.values() for p in s if math.isfinite(p[0]) and math.isfinite(p[1])]
    if not pts:
        pts = [(0.0, 0.0), (1.0, 1.0)]
    x0, x1 = min(p[0] for p in pts), max(p[0] for p in pts)
    y0, y1 = min(p[1] for p in pts), max(p[1] for p in pts)
    x1, y1 = (x1 if x1 > x0 else x0 + 1), (y1 if y1 > y0 else y0 + 1)
    pad = 40
    sx = lambda x: pad + (x - x0) / (x1 - x0) * (width - 2 * pad)
    sy = lambda y: height - pad - (y - y0) / (y1 - y0) * (height - 2 * pad)
    colors = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf"]
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">',
           f'<rect width="{width}" height="{height}" fill="white"/>',
           f'<line x1="{pad}" y1="{height - pad}" x2="{width - pad}" y2="{height - pad}" stroke="black"/>',
           f'<line x1="{pad}" y1="{pad}" x2="{pad}" y2="{height - pad}" stroke="black"/>',
           f'<text x="{width / 2}" y="{height - 8}" text-anchor="middle" font-size="12">{xlabel}</text>',
           f'<text x="12" y="{height / 2}" font-size="12" transform="rotate(-90 12 {height / 2})">{ylabel}</text>']
    for i, (name, s) in enumerate(series.items()):
        good = [p for p in s if math.isfinite(p[0]) and math.isfinite(p[1])]
        pts_attr = " ".join(f"{sx(x):.1f},{sy(y):.1f}" for x, y in good)
        col = colors[i % len(colors)]
        out.append(f'<polyline fill="none" stroke="{col}" points="{pts_attr}"/>')
        out.append(f'<text x="{width - pad}" y="{pad + 14 * i}" font-size="11" fill="{col}" text-anchor="end">{name}</text>')
    out.append("</svg>")
    with open(path, "w") as fh:
        fh.write("\n".join(out) + "\n")


def preset_config(name: str, **overrides) -> LoopConfig:
    """Loop settings of the two built-in experiments."""
    plant = preset(name)
    if name == "cart-stick":
        base = dict(plant=plant, n=15, k=5, channel=ChannelSpec("bec", 0.3), horizon=500,
                    observer_knows_control=False)
    else:
        base = dict(plant=plant, n=15, k=5, channel=ChannelSpec("bec", 0.3), horizon=100,
                    observer_knows_control=True)
    base.update(overrides)
    return LoopConfig(**base)
