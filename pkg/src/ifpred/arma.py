"""ARMA(p, q) models fitted to a known autocorrelation function.

The AR part comes from the extended Yule-Walker equations at lags
q+1..q+p; the MA part from factoring the autocovariance of the AR-filtered
process with the Tunnicliffe-Wilson Newton iteration.  Coefficients follow
the convention

    sum_{n=0}^p a_n i(t-n) = sum_{n=0}^q b_n eps(t-n),   a_0 = b_0 = 1.
"""
from __future__ import annotations

import csv
import logging
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .correlation import CorrelationCurve

log = logging.getLogger(__name__)

MSE_FLOOR_DB = -150.0
COND_LIMIT = 1e12
STATIONARITY_MARGIN = 1e-6


class FitError(ArithmeticError):
    """A (p, q) pair cannot be fitted; the pair is marked infeasible."""


class IllConditionedError(FitError):
    pass


class WilsonConvergenceError(FitError):
    pass


class IndefiniteSpectrumError(FitError):
    pass


class UnstableModelError(FitError):
    pass


class RescaleError(FitError):
    pass


def _as_values(rho) -> np.ndarray:
    if isinstance(rho, CorrelationCurve):
        return rho.values
    return np.asarray(rho, dtype=float)


def _poly_roots(coeffs: np.ndarray) -> np.ndarray:
    """Roots of c_0 + c_1 z + ... + c_n z^n.

    Trailing coefficients below machine precision (relative to the largest)
    are dropped: they only contribute roots at infinity.
    """
    c = np.asarray(coeffs, dtype=float)
    c = np.where(np.abs(c) > np.finfo(float).eps * np.max(np.abs(c), initial=0.0), c, 0.0)
    c = np.trim_zeros(c, "b")
    if c.size <= 1:
        return np.zeros(0, dtype=complex)
    return np.roots(c[::-1])


def _poly_from_roots(roots: np.ndarray) -> np.ndarray:
    """Real coefficients of prod(1 - z / z_k), constant term first."""
    if roots.size == 0:
        return np.ones(1)
    c = np.poly(roots)[::-1] * np.prod(-1.0 / roots)
    if np.max(np.abs(c.imag)) > 1e-8 * max(1.0, np.max(np.abs(c.real))):
        raise RescaleError("mapped roots do not form conjugate pairs")
    c = c.real / c.real[0]
    c[0] = 1.0
    return c


@dataclass(frozen=True)
class ArmaModel:
    a: np.ndarray = field(repr=False)
    b: np.ndarray = field(repr=False)
    sigma2: float = 1.0

    def __post_init__(self):
        a = np.atleast_1d(np.asarray(self.a, dtype=float)).copy()
        b = np.atleast_1d(np.asarray(self.b, dtype=float)).copy()
        if a[0] != 1.0 or b[0] != 1.0:
            raise ValueError("ARMA coefficients must be normalized with a0 = b0 = 1")
        if b.size > a.size:
            raise ValueError("MA order may not exceed AR order")
        if not self.sigma2 > 0:
            raise ValueError("innovation variance must be positive")
        a.setflags(write=False)
        b.setflags(write=False)
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)

    @property
    def p(self) -> int:
        return self.a.size - 1

    @property
    def q(self) -> int:
        return self.b.size - 1

    @property
    def ar_roots(self) -> np.ndarray:
        return _poly_roots(self.a)

    @property
    def ma_roots(self) -> np.ndarray:
        return _poly_roots(self.b)

    def is_stationary(self, margin: float = STATIONARITY_MARGIN) -> bool:
        roots = self.ar_roots
        return bool(np.all(np.abs(roots) > 1.0 + margin))

    def impulse_response(self, n: int) -> np.ndarray:
        """First ``n`` coefficients of b(L) / a(L)."""
        h = np.zeros(n)
        for k in range(n):
            acc = self.b[k] if k <= self.q else 0.0
            for j in range(1, min(k, self.p) + 1):
                acc -= self.a[j] * h[k - j]
            h[k] = acc
        return h

    def __repr__(self):
        return (f"ArmaModel(p={self.p}, q={self.q}, a={np.round(self.a, 6).tolist()}, "
                f"b={np.round(self.b, 6).tolist()}, sigma2={self.sigma2:.6g})")


def solve_yule_walker(rho, p: int, q: int, cond_limit: float = COND_LIMIT) -> np.ndarray:
    """AR coefficients ``[1, a_1, ..., a_p]`` from lags q+1..q+p.

    Raises :class:`IllConditionedError` when the system is singular or its
    condition number exceeds ``cond_limit``.
    """
    r = _as_values(rho)
    if p == 0:
        return np.ones(1)
    if r.size < p + q + 1:
        raise ValueError(f"need correlation up to lag {p + q}, have {r.size - 1}")
    rows = np.arange(q + 1, q + p + 1)[:, None]
    cols = np.arange(1, p + 1)[None, :]
    R = r[np.abs(rows - cols)]
    rhs = -r[q + 1:q + p + 1]
    cond = np.linalg.cond(R)
    if not np.isfinite(cond) or cond > cond_limit:
        raise IllConditionedError(f"Yule-Walker system for (p={p}, q={q}) has condition {cond:.3g}")
    sol = np.linalg.solve(R, rhs)
    return np.concatenate([[1.0], sol])


def compute_psi(rho, a, q: int) -> np.ndarray:
    """Autocovariance of the AR-filtered sequence at lags 0..q."""
    r = _as_values(rho)
    a = np.asarray(a, dtype=float)
    p = a.size - 1
    if r.size < p + q + 1:
        raise ValueError(f"need correlation up to lag {p + q}, have {r.size - 1}")
    m = np.arange(p + 1)
    lag_offsets = m[None, :] - m[:, None]   # n - m, indexed [m, n]
    weights = np.outer(a, a)
    return np.array([np.sum(weights * r[np.abs(tau + lag_offsets)]) for tau in range(q + 1)])


def _ma_autocov(b: np.ndarray) -> np.ndarray:
    q = b.size - 1
    return np.array([b[:q + 1 - k] @ b[k:] for k in range(q + 1)])


def _min_spectrum(psi: np.ndarray, grid: int = 4096) -> float:
    w = np.linspace(0, math.pi, grid)
    k = np.arange(1, psi.size)
    return float(np.min(psi[0] + 2 * np.cos(np.outer(w, k)) @ psi[1:]))


def _make_invertible(b: np.ndarray) -> np.ndarray:
    roots = _poly_roots(b)
    inside = np.abs(roots) < 1.0
    if not inside.any():
        return b
    flipped = np.where(inside, 1.0 / np.conj(roots), roots)
    c = _poly_from_roots(flipped)
    # flipping a root rescales the autocovariance; restore it
    scale = math.sqrt(_ma_autocov(b)[0] / _ma_autocov(c)[0])
    return c * scale


def solve_ma_wilson(psi, q: int | None = None, tol: float = 1e-10,
                    max_iter: int = 200) -> tuple[np.ndarray, float]:
    """Factor an MA(q) autocovariance into ``(b, sigma2)`` with ``b_0 = 1``.

    Newton iteration on ``psi = M#(b) b`` started from ``b = [1, 0, ..., 0]``
    with the step halved whenever the residual grows.  Returns the
    invertible factor.
    """
    psi = np.asarray(psi, dtype=float)
    q = psi.size - 1 if q is None else q
    psi = psi[:q + 1]
    if not psi[0] > 0:
        raise IndefiniteSpectrumError(f"psi(0) = {psi[0]} is not positive")
    if q == 0:
        return np.ones(1), float(psi[0])
    scale = psi[0]
    if _min_spectrum(psi) < -1e-9 * scale:
        raise IndefiniteSpectrumError("psi has a negative spectral density")
    target = psi / scale
    b = np.zeros(q + 1)
    b[0] = 1.0
    idx = np.arange(q + 1)

    def residual(v):
        return target - _ma_autocov(v)

    def newton_step(v, r):
        s = idx[:, None] + idx[None, :]
        hankel = np.where(s <= q, v[np.minimum(s, q)], 0.0)
        d = idx[None, :] - idx[:, None]
        toeplitz = np.where(d >= 0, v[np.clip(d, 0, q)], 0.0)
        return np.linalg.solve(hankel + toeplitz, r)

    res = residual(b)
    err = np.max(np.abs(res))
    for it in range(max_iter):
        if err < tol:
            break
        try:
            step = newton_step(b, res)
        except np.linalg.LinAlgError as exc:
            raise WilsonConvergenceError(f"singular Wilson Jacobian at iteration {it}") from exc
        lam = 1.0
        for _ in range(40):
            cand = b + lam * step
            cres = residual(cand)
            cerr = np.max(np.abs(cres))
            if cerr < err:
                break
            lam *= 0.5
        else:
            raise WilsonConvergenceError(f"Wilson iteration stalled at residual {err:.3g}")
        b, res, err = cand, cres, cerr
    else:
        if err >= tol:
            raise WilsonConvergenceError(
                f"Wilson iteration did not converge in {max_iter} steps (residual {err:.3g})")
    # one polishing step: quadratic convergence takes the coefficients to
    # machine precision once the residual is small
    try:
        cand = b + newton_step(b, res)
        if np.max(np.abs(residual(cand))) <= err:
            b = cand
    except np.linalg.LinAlgError:
        pass
    b = _make_invertible(b)
    sigma2 = float(b[0] ** 2 * scale)
    return b / b[0], sigma2


def model_autocovariance(model: ArmaModel, T: int) -> np.ndarray:
    """Unnormalized autocovariance of the model at lags 0..T."""
    if not model.is_stationary(0.0):
        raise UnstableModelError("AR polynomial has a root on or inside the unit circle")
    p, q = model.p, model.q
    a, b, s2 = model.a, model.b, model.sigma2
    delta = np.zeros(q + 1)
    for tau in range(q + 1):
        delta[tau] = b[tau] * s2 - sum(a[n] * delta[tau - n] for n in range(1, min(tau, p) + 1))

    def rhs(tau):
        return sum(b[n] * delta[n - tau] for n in range(tau, q + 1))

    gamma = np.zeros(max(T, p) + 1)
    A = np.zeros((p + 1, p + 1))
    y = np.zeros(p + 1)
    for tau in range(p + 1):
        for n in range(p + 1):
            A[tau, abs(tau - n)] += a[n]
        y[tau] = rhs(tau)
    gamma[:p + 1] = np.linalg.solve(A, y)
    for tau in range(p + 1, gamma.size):
        acc = rhs(tau) if tau <= q else 0.0
        if p:
            acc -= a[1:] @ gamma[tau - p:tau][::-1]
        gamma[tau] = acc
    return gamma[:T + 1]


def model_autocorr(model: ArmaModel, T: int) -> CorrelationCurve:
    """Autocorrelation implied by ``model`` at lags 0..T."""
    g = model_autocovariance(model, T)
    return CorrelationCurve(g / g[0])


def approximation_mse(rho, rho_hat, T: int) -> float:
    """Mean squared difference over lags 1..T, in dB (floored at -150)."""
    r, rh = _as_values(rho), _as_values(rho_hat)
    if r.size < T + 1 or rh.size < T + 1:
        raise ValueError(f"both curves must cover lags 1..{T}")
    mse = float(np.mean((r[1:T + 1] - rh[1:T + 1]) ** 2))
    if mse <= 10 ** (MSE_FLOOR_DB / 10):
        return MSE_FLOOR_DB
    return 10 * math.log10(mse)


def fit_arma(rho, p: int, q: int, tol: float = 1e-10, max_iter: int = 200) -> ArmaModel:
    """Fit ARMA(p, q) to an autocorrelation curve."""
    if q > p:
        raise ValueError("q must not exceed p")
    a = solve_yule_walker(rho, p, q)
    psi = compute_psi(rho, a, q)
    b, sigma2 = solve_ma_wilson(psi, q, tol=tol, max_iter=max_iter)
    return ArmaModel(a, b, sigma2)


@dataclass
class FitReport:
    mse_grid: np.ndarray
    selected: tuple[int, int] | None
    target_db: float
    infeasible: set = field(default_factory=set)
    met_target: bool = True
    reasons: dict = field(default_factory=dict)
    nugget: float = 0.0

    @property
    def p_max(self) -> int:
        return self.mse_grid.shape[0] - 1

    @property
    def selected_mse(self) -> float:
        return float(self.mse_grid[self.selected])

    def to_csv(self, path) -> None:
        """Grid with rows p and columns q; empty cells are infeasible or q > p."""
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["p"] + [f"q{q}" for q in range(self.mse_grid.shape[1])])
            for p in range(1, self.mse_grid.shape[0]):
                row = [p]
                for q in range(self.mse_grid.shape[1]):
                    v = self.mse_grid[p, q]
                    row.append("" if np.isnan(v) else f"{v:.4f}")
                w.writerow(row)


def _feasible(model: ArmaModel, rho: np.ndarray, T: int, tail_tol: float) -> str | None:
    if not model.is_stationary():
        return "nonstationary"
    # A stationary model decays to 0 while the target may level off at a
    # positive floor; anything leaving the band between the two diverges.
    tail = model_autocorr(model, 2 * T).values[T:2 * T + 1]
    lo, hi = min(0.0, rho[T]) - tail_tol, max(0.0, rho[T]) + tail_tol
    if tail.min() < lo or tail.max() > hi:
        return "tail diverges"
    return None


def with_nugget(rho, nugget: float) -> np.ndarray:
    """Blend the curve with white noise: (1 - nugget) rho + nugget delta."""
    r = _as_values(rho) * (1.0 - nugget)
    r[0] = 1.0
    return r


def _order_grid(r, fit_r, p_max, target_db, T, include_q0, tail_tol, nugget, accept=None):
    grid = np.full((p_max + 1, p_max + 1), np.nan)
    models = {}
    infeasible = set()
    reasons = {}
    for p in range(1, p_max + 1):
        for q in range(0 if include_q0 else 1, p + 1):
            try:
                model = fit_arma(fit_r, p, q)
            except FitError as exc:
                infeasible.add((p, q))
                reasons[(p, q)] = type(exc).__name__
                continue
            why = _feasible(model, r, T, tail_tol)
            if why is None and accept is not None:
                why = accept(model)
            if why:
                infeasible.add((p, q))
                reasons[(p, q)] = why
                continue
            grid[p, q] = approximation_mse(r, model_autocorr(model, T), T)
            models[(p, q)] = model
    meeting = sorted(k for k in models if grid[k] <= target_db)
    if meeting:
        sel, met = meeting[0], True
    elif models:
        sel, met = min(models, key=lambda k: grid[k]), False
    else:
        sel, met = None, False
    report = FitReport(grid, sel, target_db, infeasible, met, reasons, nugget)
    return report, models.get(sel)


def select_order(rho, p_max: int = 20, target_db: float = -30.0, T: int = 100,
                 include_q0: bool = True, tail_tol: float = 0.1,
                 nuggets=(0.0, 1e-4, 1e-3, 1e-2), accept=None):
    """Lowest-order feasible ARMA model meeting ``target_db``.

    Every pair ``0 <= q <= p <= p_max`` is fitted (``q = 0`` only when
    ``include_q0``).  Among feasible pairs meeting the target, the smallest
    p wins, ties broken by the smallest q.  The MSE is always measured
    against the original curve.

    Band-limited curves (pure Jakes channels) give near-singular
    Yule-Walker systems; when no pair meets the target the fit is retried
    on the curve blended with successively larger white-noise ``nuggets``.
    If no attempt meets the target, the feasible pair with the lowest MSE
    over all attempts is returned and ``met_target`` is False.

    ``accept(model)`` may add a caller-specific feasibility test; it returns
    None to accept or a short reason string to reject.
    """
    r = _as_values(rho)
    if r.size < max(2 * p_max, T) + 1:
        raise ValueError(f"need correlation up to lag {max(2 * p_max, T)}")
    best = None
    for nugget in nuggets:
        fit_r = with_nugget(r, nugget) if nugget else r
        report, model = _order_grid(r, fit_r, p_max, target_db, T, include_q0, tail_tol, nugget,
                                    accept)
        if report.met_target:
            return report, model
        if model is not None and (best is None or report.selected_mse < best[0].selected_mse):
            best = (report, model)
        log.debug("no order meets %.1f dB with nugget %g", target_db, nugget)
    if best is None:
        raise FitError("no feasible (p, q) pair")
    report, model = best
    warnings.warn(f"no ARMA order meets {target_db} dB; best is {report.selected} "
                  f"at {report.selected_mse:.2f} dB")
    return report, model


def decimate_correlation(rho, d: int, T: int | None = None) -> CorrelationCurve:
    """Correlation sampled every ``d`` lags: out[tau] = rho[d * tau]."""
    r = _as_values(rho)
    if d < 1:
        raise ValueError("decimation factor must be a positive integer")
    avail = (r.size - 1) // d
    T = avail if T is None else T
    if T > avail:
        raise ValueError(f"decimating by {d} to {T} lags needs lag {d * T}, have {r.size - 1}")
    return CorrelationCurve(r[:d * T + 1:d])


def significant_lag(rho, tol: float = 0.02) -> int:
    """Last lag at which the curve still differs from its tail value by more than ``tol``."""
    r = _as_values(rho)
    tail = r[-1]
    idx = np.nonzero(np.abs(r - tail) > tol)[0]
    return int(idx[-1]) if idx.size else 0


def decimation_factor(rho, max_lags: int = 100, tol: float = 0.02) -> int:
    return max(1, math.ceil(significant_lag(rho, tol) / max_lags))


def _stretch_roots(roots: np.ndarray, d: int) -> np.ndarray:
    neg = (np.abs(roots.imag) < 1e-12) & (roots.real < 0)
    if d > 1 and neg.any():
        raise RescaleError("negative real root has no real d-th root")
    return np.abs(roots) ** (1.0 / d) * np.exp(1j * np.angle(roots) / d)


def rescalable(model: ArmaModel, d: int) -> str | None:
    """``accept`` hook for :func:`select_order`: reject models that cannot be rescaled."""
    try:
        rescale_model(model, d)
    except FitError as exc:
        return f"rescale: {exc}"
    return None


def rescale_model(model: ArmaModel, d: int) -> ArmaModel:
    """Map a model fitted on a d-decimated curve back to the original slot rate.

    Every AR and MA root z becomes |z|^(1/d) exp(i arg(z) / d).  The
    innovation variance is reset so that the model has unit variance.
    """
    if d == 1:
        return model
    if not model.is_stationary(0.0):
        raise UnstableModelError("cannot rescale a nonstationary model")
    a = _poly_from_roots(_stretch_roots(model.ar_roots, d))
    b = _poly_from_roots(_stretch_roots(model.ma_roots, d))
    b = np.concatenate([b, np.zeros(model.q + 1 - b.size)])
    unit = ArmaModel(a, b, 1.0)
    if not unit.is_stationary(0.0):
        raise RescaleError("rescaled model is not stationary")
    var = model_autocovariance(unit, 0)[0]
    if not (np.isfinite(var) and var > 0):
        raise RescaleError("rescaled model has no positive variance")
    return ArmaModel(a, b, 1.0 / var)
