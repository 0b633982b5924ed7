"""Analytic interference autocorrelation for Poisson networks.

The interference power at the origin is a shot-noise process driven by
Rayleigh fading with Jakes Doppler, slotted fixed-length messages and
(optionally) Brownian node mobility.  Its Pearson autocorrelation factors
into a channel term, a traffic term and a spatial term::

    rho(tau) = E[h2 h2'] * E[gamma gamma'] * spatial(tau) / (2 * mu * ell)

All functions here are pure.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

#: First positive root of J0.
J0_FIRST_ZERO = 2.404825557695773

_SERIES_CUTOFF = 12.0


@dataclass(frozen=True)
class SystemParams:
    """Network, traffic and channel parameters.

    ``density`` is the node intensity lambda; it does not enter the
    correlation and is only used by the simulator.
    """

    mu: float = 0.01
    ell: int = 10
    nu: float = 0.0077
    alpha: float = 3.0
    kappa: float = 1.0
    density: float = 0.01

    def __post_init__(self):
        if not self.mu > 0:
            raise ValueError(f"mu must be positive, got {self.mu}")
        if int(self.ell) != self.ell or self.ell < 1:
            raise ValueError(f"ell must be a positive integer, got {self.ell}")
        object.__setattr__(self, "ell", int(self.ell))
        if self.mu * self.ell > 1 + 1e-12:
            raise ValueError(f"mu*ell = {self.mu * self.ell} exceeds 1")
        if self.mu * (self.ell - 1) >= 1:
            raise ValueError(f"mu*(ell-1) = {self.mu * (self.ell - 1)} must be < 1")
        if not self.alpha > 2:
            raise ValueError(f"alpha must exceed 2, got {self.alpha}")
        if not self.nu >= 0:
            raise ValueError(f"nu must be nonnegative, got {self.nu}")
        if not self.kappa > 0:
            raise ValueError(f"kappa must be positive, got {self.kappa}")
        if not self.density > 0:
            raise ValueError(f"density must be positive, got {self.density}")

    @property
    def busy_fraction(self) -> float:
        return self.mu * self.ell

    @property
    def start_probability(self) -> float:
        """Per-slot probability that an eligible node starts a message."""
        return self.mu / (1.0 - self.mu * (self.ell - 1))

    def replace(self, **changes) -> "SystemParams":
        values = {f: getattr(self, f) for f in self.__dataclass_fields__}
        values.update(changes)
        return SystemParams(**values)


@dataclass(frozen=True)
class SpatialConfig:
    """How the spatial (mobility) factor is evaluated.

    ``mode="static"`` pins the factor to 1.  ``mode="monte-carlo"``
    estimates it on the annulus ``[eps, radius]``.
    """

    mode: str = "static"
    eps: float = 0.1
    radius: float = 100.0
    samples: int = 20000
    seed: int = 0

    def __post_init__(self):
        if self.mode not in ("static", "monte-carlo"):
            raise ValueError(f"unknown spatial mode {self.mode!r}")


@dataclass(frozen=True)
class CorrelationCurve:
    """Autocorrelation sampled at integer lags 0..T."""

    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 1 or values.size < 1:
            raise ValueError("correlation curve needs at least lag 0")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @property
    def T(self) -> int:
        return self.values.size - 1

    def __len__(self):
        return self.values.size

    def __getitem__(self, item):
        return self.values[item]

    def at(self, tau: int) -> float:
        """Value at a possibly negative lag, using even symmetry."""
        return float(self.values[abs(tau)])

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            fh.write("lag,rho\n")
            for tau, v in enumerate(self.values):
                fh.write(f"{tau},{float(v)!r}\n")


def _j0_series(x: np.ndarray) -> np.ndarray:
    q = -0.25 * x * x
    term = np.ones_like(x)
    total = np.ones_like(x)
    for k in range(1, 80):
        term = term * q / (k * k)
        total = total + term
        if np.all(np.abs(term) < 1e-18):
            break
    return total


def _j0_asymptotic(x: np.ndarray) -> np.ndarray:
    # Hankel expansion, truncated once terms stop shrinking.
    p = np.ones_like(x)
    q = np.zeros_like(x)
    term = np.ones_like(x)
    active = np.ones(x.shape, dtype=bool)
    prev = np.full_like(x, np.inf)
    for k in range(1, 60):
        term = term * (-(2 * k - 1) ** 2) / (k * 8.0 * x)
        mag = np.abs(term)
        active &= mag < prev
        prev = mag
        if not active.any():
            break
        contrib = np.where(active, term, 0.0)
        # a_k contributes to P (even k) or Q (odd k) with alternating signs
        if k % 2 == 0:
            p = p + (-1) ** (k // 2) * contrib
        else:
            q = q + (-1) ** (k // 2) * contrib
    omega = x - math.pi / 4
    return np.sqrt(2.0 / (math.pi * x)) * (p * np.cos(omega) - q * np.sin(omega))


def bessel_j0(x):
    """Bessel function of the first kind, order zero.

    Power series below ``|x| = 12``, Hankel asymptotic expansion above.
    Absolute error is below 1e-10 for ``|x| <= 100``.  Accepts scalars or
    arrays; non-finite input raises ``ValueError``.
    """
    arr = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise ValueError("bessel_j0 requires finite input")
    ax = np.abs(arr)
    small = ax < _SERIES_CUTOFF
    out = np.empty_like(ax)
    if small.any():
        out[small] = _j0_series(ax[small])
    if (~small).any():
        out[~small] = _j0_asymptotic(ax[~small])
    if np.ndim(x) == 0:
        return float(out)
    return out


def jakes_channel_autocorr(tau, nu: float):
    """Jakes autocorrelation of the complex fading coefficient."""
    tau = np.asarray(tau, dtype=float)
    if np.any(tau < 0):
        raise ValueError("lag must be nonnegative")
    return bessel_j0(2 * math.pi * tau * nu)


def channel_product_moment(tau, nu: float):
    """E[h^2(t) h^2(t+tau)] for unit-power Rayleigh fading."""
    j = jakes_channel_autocorr(tau, nu)
    return j * j + 1.0


def eta_from_speed(nu: float) -> float:
    """Lag at which the Jakes autocorrelation first reaches zero."""
    if not nu > 0:
        raise ValueError("eta is infinite for nu = 0")
    return J0_FIRST_ZERO / (2 * math.pi * nu)


def speed_from_eta(eta: float) -> float:
    if not eta > 0:
        raise ValueError("eta must be positive")
    return J0_FIRST_ZERO / (2 * math.pi * eta)


def _check_traffic(mu: float, ell: int) -> None:
    if not mu > 0 or ell < 1 or mu * (ell - 1) >= 1:
        raise ValueError(f"invalid traffic parameters mu={mu}, ell={ell}: need mu*(ell-1) < 1")


def _gap_weights(mu: float, ell: int, gmax: int) -> np.ndarray:
    """Inner k-sum of the traffic moment as a function of the gap g.

    S(g) = sum_k C(g - k*ell + k, k) beta^(g - k*ell) (1-beta)^k,
    k = 0..floor(g/ell).  Evaluated in log space.
    """
    beta = 1.0 - mu / (1.0 - mu * (ell - 1))
    out = np.zeros(gmax + 1)
    log_b = math.log(beta) if beta > 0 else -math.inf
    log_1b = math.log1p(-beta) if beta < 1 else -math.inf
    for g in range(gmax + 1):
        acc = 0.0
        for k in range(g // ell + 1):
            idle = g - k * ell
            n = idle + k
            if idle == 0:
                lb = 0.0
            elif log_b == -math.inf:
                continue
            else:
                lb = idle * log_b
            if k == 0:
                l1 = 0.0
            elif log_1b == -math.inf:
                continue
            else:
                l1 = k * log_1b
            lc = math.lgamma(n + 1) - math.lgamma(k + 1) - math.lgamma(idle + 1)
            acc += math.exp(lc + lb + l1)
        out[g] = acc
    return out


def _traffic_from_weights(tau: int, mu: float, ell: int, weights: np.ndarray) -> float:
    first = max(0.0, mu * (ell - tau))
    total = 0.0
    for i in range(0, min(tau - 1, ell - 1) + 1):
        for j in range(1, min(tau - i, ell) + 1):
            total += weights[tau - i - j]
    return first + mu * mu / (1.0 - mu * (ell - 1)) * total


def traffic_product_moment(tau: int, mu: float, ell: int) -> float:
    """E[gamma(t) gamma(t+tau)] for the slotted fixed-length traffic model."""
    _check_traffic(mu, ell)
    tau = int(tau)
    if tau < 0:
        raise ValueError("lag must be nonnegative")
    weights = _gap_weights(mu, ell, max(tau, 0))
    return _traffic_from_weights(tau, mu, ell, weights)


def traffic_moment_curve(mu: float, ell: int, T: int) -> np.ndarray:
    """Traffic product moment for every lag 0..T, sharing the gap table."""
    _check_traffic(mu, ell)
    weights = _gap_weights(mu, ell, T)
    return np.array([_traffic_from_weights(t, mu, ell, weights) for t in range(T + 1)])


def spatial_mobility_factor(tau: int, nu: float, alpha: float,
                            config: SpatialConfig = SpatialConfig()) -> float:
    """Ratio of the displaced to the undisplaced path-gain energy integral.

    In Monte Carlo mode positions are drawn with density proportional to
    ``g(x)^2`` on the annulus and the ratio ``g(x + d) / g(x)`` is averaged,
    where ``d`` is a tau-slot Brownian displacement.  The path gain is
    clamped to ``eps**-alpha`` inside the inner radius and vanishes beyond
    the outer radius, identically in numerator and denominator.
    """
    if tau < 0:
        raise ValueError("lag must be nonnegative")
    if config.mode == "static" or tau == 0 or nu == 0:
        return 1.0
    eps, radius = config.eps, config.radius
    if not eps > 0:
        raise ValueError("annulus inner radius must be positive")
    if not radius > eps:
        raise ValueError("annulus outer radius must exceed the inner radius")
    rng = np.random.default_rng(config.seed)
    n = config.samples
    # inverse CDF of r^(1 - 2 alpha) on [eps, radius]
    e = 2.0 - 2.0 * alpha
    u = rng.random(n)
    r = (eps ** e + u * (radius ** e - eps ** e)) ** (1.0 / e)
    phi = rng.random(n) * 2 * math.pi
    x = np.column_stack([r * np.cos(phi), r * np.sin(phi)])
    d = math.sqrt(tau) * nu * rng.normal(scale=math.sqrt(2 / math.pi), size=(n, 2))
    r2 = np.hypot(*(x + d).T)
    ratio = (r / np.clip(r2, eps, None)) ** alpha
    ratio[r2 > radius] = 0.0
    return float(np.clip(ratio.mean(), 0.0, 1.0))


def interference_autocorr(params: SystemParams, T: int,
                          spatial: SpatialConfig = SpatialConfig()) -> CorrelationCurve:
    """Pearson autocorrelation of the interference at lags 0..T."""
    if T < 1:
        raise ValueError("T must be at least 1")
    lags = np.arange(T + 1)
    channel = channel_product_moment(lags, params.nu)
    traffic = traffic_moment_curve(params.mu, params.ell, T)
    if spatial.mode == "static":
        space = np.ones(T + 1)
    else:
        space = np.array([spatial_mobility_factor(t, params.nu, params.alpha, spatial)
                          for t in lags])
    values = channel * traffic * space / (2.0 * params.mu * params.ell)
    values[0] = 1.0
    return CorrelationCurve(values)


def channel_only_autocorr(nu: float, T: int) -> CorrelationCurve:
    """Correlation when the channel is the only source of dynamics."""
    if T < 1:
        raise ValueError("T must be at least 1")
    j = jakes_channel_autocorr(np.arange(T + 1), nu)
    values = j * j
    values[0] = 1.0
    return CorrelationCurve(values)
