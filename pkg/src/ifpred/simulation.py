"""Monte Carlo interference traces for Poisson networks.

Nodes are dropped as a PPP on an origin-centred square, optionally thinned
to a clustered layout, and move by discrete Brownian steps.  Each node has
its own sum-of-sinusoids Rayleigh channel with Jakes Doppler and an on/off
message process.  The interference at the origin is sampled once per slot.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .correlation import SystemParams

STEP_VARIANCE = 2.0 / math.pi
MIN_DISTANCE = 1e-6
NEAR_FIELD = 1.0


def derived_seed(master: int, index: int) -> int:
    """64-bit seed for realization ``index`` of a run seeded with ``master``."""
    ss = np.random.SeedSequence(int(master), spawn_key=(int(index),))
    return int(ss.generate_state(1, np.uint64)[0])


@dataclass(frozen=True)
class ScenarioConfig:
    params: SystemParams = SystemParams()
    side: float = 100.0
    horizon: int = 1000
    length_mode: str = "fixed"
    placement: str = "ppp"
    thin_r: float = 40.0
    thin_k: int = 0
    seed: int = 1
    realizations: int = 1000
    sinusoids: int = 64

    def __post_init__(self):
        if not self.side > 0:
            raise ValueError("area side must be positive")
        if self.horizon < 1:
            raise ValueError("horizon must be at least one slot")
        if self.length_mode not in ("fixed", "poisson"):
            raise ValueError(f"unknown length mode {self.length_mode!r}")
        if self.placement not in ("ppp", "thinned"):
            raise ValueError(f"unknown placement {self.placement!r}")
        if self.placement == "thinned" and not (self.thin_r > 0 and self.thin_k >= 0):
            raise ValueError("thinning needs r > 0 and k >= 0")
        if self.sinusoids < 32:
            raise ValueError("fading generator needs at least 32 sinusoids")
        if self.realizations < 0:
            raise ValueError("realization count must be nonnegative")

    @property
    def area(self) -> float:
        return self.side * self.side

    @property
    def warmup(self) -> int:
        return 5 * self.params.ell

    def replace(self, **changes) -> "ScenarioConfig":
        values = {f: getattr(self, f) for f in self.__dataclass_fields__}
        values.update(changes)
        return ScenarioConfig(**values)


@dataclass
class NodeState:
    """Vectorised state of every node in one realization."""

    position: np.ndarray
    doppler: np.ndarray
    phase: np.ndarray
    remaining: np.ndarray

    @property
    def fading(self) -> np.ndarray:
        """Complex channel coefficients, unit mean power."""
        return np.exp(1j * self.phase).sum(axis=1) / math.sqrt(self.phase.shape[1])

    @property
    def power(self) -> np.ndarray:
        h = self.fading
        return h.real ** 2 + h.imag ** 2


@dataclass
class InterferenceTrace:
    values: np.ndarray = field(repr=False)
    seed: int = 0

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["slot", "interference"])
            for t, v in enumerate(self.values):
                w.writerow([t, repr(float(v))])


def sample_ppp(density: float, side: float, rng: np.random.Generator) -> np.ndarray:
    """Homogeneous PPP on the square ``[-side/2, side/2]^2``."""
    if not density > 0:
        raise ValueError("density must be positive")
    n = rng.poisson(density * side * side)
    pts = (rng.random((n, 2)) - 0.5) * side
    close = np.hypot(pts[:, 0], pts[:, 1]) < MIN_DISTANCE
    while close.any():
        pts[close] = (rng.random((int(close.sum()), 2)) - 0.5) * side
        close = np.hypot(pts[:, 0], pts[:, 1]) < MIN_DISTANCE
    return pts


def neighbor_counts(nodes: np.ndarray, r: float) -> np.ndarray:
    """Number of other nodes within distance ``r`` of each node."""
    if len(nodes) == 0:
        return np.zeros(0, dtype=int)
    tree = cKDTree(nodes)
    return np.array([len(ix) - 1 for ix in tree.query_ball_point(nodes, r)], dtype=int)


def thin_inhomogeneous(nodes: np.ndarray, r: float, k: int) -> np.ndarray:
    """Keep the nodes that have at least ``k`` neighbours within ``r``."""
    if not r > 0:
        raise ValueError("thinning radius must be positive")
    if k <= 0:
        return nodes
    return nodes[neighbor_counts(nodes, r) >= k]


def mobility_steps(n: int, slots: int, nu: float, rng: np.random.Generator) -> np.ndarray:
    """Brownian increments of shape ``(slots, n, 2)``; mean step length ``nu``."""
    return nu * rng.normal(scale=math.sqrt(STEP_VARIANCE), size=(slots, n, 2))


def step_mobility(state: NodeState, nu: float, rng: np.random.Generator) -> NodeState:
    if nu > 0:
        state.position = state.position + mobility_steps(len(state.position), 1, nu, rng)[0]
    return state


def init_fading(n: int, nu: float, sinusoids: int, rng: np.random.Generator):
    """Per-node arrival angles (as Doppler phase increments) and phases."""
    theta = rng.random((n, sinusoids)) * 2 * math.pi
    doppler = 2 * math.pi * nu * np.cos(theta)
    phase = rng.random((n, sinusoids)) * 2 * math.pi
    return doppler, phase


def step_fading(state: NodeState, nu: float = 0.0, rng=None) -> NodeState:
    """Advance every node's channel by one slot.

    The Doppler shifts were fixed when the node was created; ``nu`` and
    ``rng`` are accepted for symmetry with the other step functions.
    """
    state.phase = state.phase + state.doppler
    return state


def start_probability(mu: float, ell: float) -> float:
    return mu / (1.0 - mu * (ell - 1))


def _draw_lengths(size, ell: int, length_mode: str, rng: np.random.Generator) -> np.ndarray:
    if length_mode == "fixed":
        return np.full(size, ell, dtype=np.int64)
    out = rng.poisson(ell, size=size)
    zero = out == 0
    while zero.any():
        out[zero] = rng.poisson(ell, size=int(zero.sum()))
        zero = out == 0
    return out


def step_traffic(remaining: np.ndarray, mu: float, ell: int, length_mode: str,
                 rng: np.random.Generator) -> np.ndarray:
    """One slot of the message process; ``remaining > 0`` means transmitting."""
    p = start_probability(mu, ell)
    remaining = np.maximum(np.asarray(remaining) - 1, 0)
    eligible = remaining == 0
    start = eligible & (rng.random(remaining.shape) < p)
    if start.any():
        remaining = remaining.copy()
        remaining[start] = _draw_lengths(int(start.sum()), ell, length_mode, rng)
    return remaining


def stationary_remaining(n: int, mu: float, ell: int, rng: np.random.Generator) -> np.ndarray:
    """Draw message states from the stationary law of the fixed-length process."""
    busy = rng.random(n) < mu * ell
    rem = np.zeros(n, dtype=np.int64)
    rem[busy] = rng.integers(1, ell + 1, size=int(busy.sum()))
    return rem


def activity(n: int, slots: int, mu: float, ell: int, length_mode: str,
             rng: np.random.Generator, remaining0=None) -> np.ndarray:
    """Boolean transmit pattern ``(slots, n)`` of the renewal message process.

    Equivalent to iterating :func:`step_traffic`, but generated from idle-gap
    and message-length draws.  ``remaining0`` is the state before slot 0.
    """
    p = start_probability(mu, ell)
    if remaining0 is None:
        remaining0 = np.zeros(n, dtype=np.int64)
    # r slots left before slot 0: busy in slots 0..r-2, eligible from r-1
    first = np.maximum(np.asarray(remaining0) - 1, 0)
    busy = np.zeros((slots + 1, n), dtype=np.int32)
    cover = np.minimum(first, slots)
    np.add.at(busy, (np.zeros(n, dtype=int), np.arange(n)), 1)
    np.add.at(busy, (cover, np.arange(n)), -1)
    mean_cycle = ell + (1 - p) / p
    t = first.astype(np.int64)
    alive = t < slots
    while alive.any():
        idx = np.nonzero(alive)[0]
        cycles = int(max(4, math.ceil(2 * slots / mean_cycle) + 4))
        gaps = rng.geometric(p, size=(idx.size, cycles)) - 1
        lengths = _draw_lengths((idx.size, cycles), ell, length_mode, rng)
        start = t[idx, None] + np.cumsum(gaps + np.c_[np.zeros(idx.size, dtype=np.int64),
                                                      lengths[:, :-1]], axis=1)
        stop = start + lengths
        ok = start < slots
        cols = np.broadcast_to(idx[:, None], start.shape)
        np.add.at(busy, (start[ok], cols[ok]), 1)
        np.add.at(busy, (np.minimum(stop[ok], slots), cols[ok]), -1)
        t[idx] = stop[:, -1]
        alive = t < slots
    return np.cumsum(busy[:-1], axis=0) > 0


def measure_interference(positions: np.ndarray, power: np.ndarray, active: np.ndarray,
                         kappa: float, alpha: float, near_field: float = NEAR_FIELD) -> float:
    """Sum of kappa * max(|x|, near_field)^-alpha * h^2 over transmitting nodes."""
    positions = np.asarray(positions, dtype=float).reshape(-1, 2)
    active = np.asarray(active, dtype=bool)
    if not active.any():
        return 0.0
    r = np.maximum(np.hypot(positions[active, 0], positions[active, 1]),
                   max(near_field, MIN_DISTANCE))
    return float(np.sum(kappa * r ** (-alpha) * np.asarray(power)[active]))


def place_nodes(config: ScenarioConfig, rng: np.random.Generator) -> np.ndarray:
    """Initial node positions inside the simulation square.

    For thinned placement the PPP is drawn on a square padded by the
    thinning radius, so nodes near the border keep their full neighbourhood,
    and the survivors are then cropped to the simulation square.
    """
    if config.placement != "thinned":
        return sample_ppp(config.params.density, config.side, rng)
    pad = config.side + 2 * config.thin_r
    nodes = thin_inhomogeneous(sample_ppp(config.params.density, pad, rng),
                               config.thin_r, config.thin_k)
    inside = np.all(np.abs(nodes) <= config.side / 2, axis=1)
    return nodes[inside]


def fading_power(doppler: np.ndarray, phase0: np.ndarray, slots: int, block: int = 32) -> np.ndarray:
    """Channel power ``|h|^2`` of every node over ``slots`` slots, shape ``(slots, n)``.

    Phasors are evaluated once per block start and rotated within the block,
    which avoids one complex exponential per sinusoid and slot.
    """
    n, m = doppler.shape
    out = np.empty((slots, n))
    rot = np.exp(1j * doppler[None, :, :] * np.arange(block)[:, None, None])
    for t0 in range(0, slots, block):
        b = min(block, slots - t0)
        base = np.exp(1j * (phase0 + doppler * t0))
        h = (rot[:b] * base[None]).sum(axis=2)
        out[t0:t0 + b] = (h.real ** 2 + h.imag ** 2) / m
    return out


def run_realization(config: ScenarioConfig, index: int) -> InterferenceTrace:
    """Simulate one network realization and return its interference trace."""
    seed = derived_seed(config.seed, index)
    rng = np.random.default_rng(seed)
    prm = config.params
    H = config.horizon
    nodes = place_nodes(config, rng)
    n = len(nodes)
    rem0 = stationary_remaining(n, prm.mu, prm.ell, rng)
    act = activity(n, config.warmup + H, prm.mu, prm.ell, config.length_mode, rng, rem0)
    act = act[config.warmup:]
    doppler, phase0 = init_fading(n, prm.nu, config.sinusoids, rng)
    if prm.nu > 0:
        steps = mobility_steps(n, H, prm.nu, rng)
        # position at slot t includes the steps taken before it
        pos = nodes[None, :, :] + np.concatenate(
            [np.zeros((1, n, 2)), np.cumsum(steps[:-1], axis=0)], axis=0)
    else:
        pos = None
    values = np.zeros(H)
    tt, nn = np.nonzero(act)
    if tt.size:
        power = fading_power(doppler, phase0, H)[tt, nn]
        if pos is None:
            xy = nodes[nn]
        else:
            xy = pos[tt, nn]
        r = np.maximum(np.hypot(xy[:, 0], xy[:, 1]), NEAR_FIELD)  # bounded path gain
        np.add.at(values, tt, prm.kappa * r ** (-prm.alpha) * power)
    return InterferenceTrace(values, seed)


def simulate(config: ScenarioConfig, start: int = 0, count: int | None = None):
    """Yield traces for realization indices ``start .. start+count-1``."""
    count = config.realizations if count is None else count
    for i in range(start, start + count):
        yield run_realization(config, i)
