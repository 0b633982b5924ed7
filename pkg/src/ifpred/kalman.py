"""Steady-state Kalman predictor for an ARMA interference model.

The ARMA model is realized in controllable companion form

    x(t+1) = A x(t) + B eps(t),    i(t) = C x(t)

with unit process and measurement noise.  The gain is computed offline by
iterating the covariance recursion to its fixed point; online work is one
matrix-vector update per slot plus the horizon extrapolation.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_discrete_lyapunov

from .arma import ArmaModel, UnstableModelError

HALF_LIFE = 200
SEED_OBSERVATIONS = 50


class ConvergenceError(ArithmeticError):
    def __init__(self, message, delta=None):
        super().__init__(message)
        self.delta = delta


@dataclass(frozen=True)
class StateSpaceModel:
    A: np.ndarray
    B: np.ndarray
    C: np.ndarray

    @property
    def p(self) -> int:
        return self.A.shape[0]

    @property
    def spectral_radius(self) -> float:
        return float(np.max(np.abs(np.linalg.eigvals(self.A))))

    def impulse_response(self, n: int) -> np.ndarray:
        """C A^k B for k = 0..n-1."""
        out = np.zeros(n)
        v = self.B.copy()
        for k in range(n):
            out[k] = self.C @ v
            v = self.A @ v
        return out

    def output_variance(self) -> float:
        """Stationary variance of the output under unit-variance input noise."""
        P = solve_discrete_lyapunov(self.A, np.outer(self.B, self.B))
        return float(self.C @ P @ self.C)


def to_state_space(model: ArmaModel) -> StateSpaceModel:
    """Companion-form realization of b(L)/a(L).

    The state holds the AR-filtered noise at the previous ``n`` slots, so the
    first row of A carries the negated AR coefficients and C carries the MA
    coefficients.  The state dimension is ``max(p, q + 1)``.
    """
    if model.p < 1:
        raise ValueError("state-space form requires an AR order of at least 1")
    if not model.is_stationary(0.0):
        raise UnstableModelError("AR polynomial has a root on or inside the unit circle")
    n = max(model.p, model.q + 1)
    A = np.zeros((n, n))
    A[0, :model.p] = -model.a[1:]
    A[1:, :-1] = np.eye(n - 1)
    B = np.zeros(n)
    B[0] = 1.0
    C = np.zeros(n)
    C[:model.q + 1] = model.b
    return StateSpaceModel(A, B, C)


def riccati_fixed_point(ss: StateSpaceModel, tol: float = 1e-10,
                        max_iter: int = 10_000) -> tuple[np.ndarray, np.ndarray]:
    """Iterate the measurement and time updates until P stops changing.

    Convergence is declared when the max-norm change drops below ``tol``
    relative to ``max(1, |P|)``; near-unit-root models have large P.

    Returns ``(P, M)``: the predicted error covariance at the fixed point and
    the corresponding measurement-update gain.
    """
    A, B, C = ss.A, ss.B, ss.C
    Q = np.outer(B, B)
    I = np.eye(ss.p)
    P = Q.copy()
    delta = math.inf
    for _ in range(max_iter):
        M = P @ C / (C @ P @ C + 1.0)
        P_upd = (I - np.outer(M, C)) @ P
        P_new = A @ P_upd @ A.T + Q
        delta = float(np.max(np.abs(P_new - P)))
        P = P_new
        if delta < tol * max(1.0, float(np.max(np.abs(P)))):
            break
    else:
        raise ConvergenceError(f"Riccati iteration did not converge (last delta {delta:.3g})", delta)
    M = P @ C / (C @ P @ C + 1.0)
    return P, M


def steady_state_gain(ss: StateSpaceModel, tol: float = 1e-10, max_iter: int = 10_000) -> np.ndarray:
    """One-step gain K of x(t+1) = A x(t) + K (i(t) - C x(t)).

    K composes the measurement update (gain M) with the time update, which
    also feeds the post-update residual through B:
    K = A M + B (1 - C M).
    """
    _, M = riccati_fixed_point(ss, tol, max_iter)
    return ss.A @ M + ss.B * (1.0 - ss.C @ M)


@dataclass
class SteadyStatePredictor:
    """Online interference predictor with a fixed gain.

    Observations are centred and scaled by exponentially weighted running
    estimates (half-life 200 slots, seeded from the first 50 observations)
    and by the model's output standard deviation, so the filter sees a
    process with the variance its state-space model implies.

    Each instance serves one stream, or a batch of independent streams when
    fed 1-D arrays of observations.
    """

    ss: StateSpaceModel
    K: np.ndarray
    half_life: float = HALF_LIFE
    seed_count: int = SEED_OBSERVATIONS
    x: np.ndarray | None = None
    mean: np.ndarray | float = 0.0
    var: np.ndarray | float = 0.0
    n_obs: int = 0
    model_std: float = field(init=False)
    _forget: float = field(init=False, repr=False)

    def __post_init__(self):
        self.model_std = math.sqrt(self.ss.output_variance())
        self._forget = 0.5 ** (1.0 / self.half_life)

    @classmethod
    def from_model(cls, model: ArmaModel, **kwargs) -> "SteadyStatePredictor":
        ss = to_state_space(model)
        return cls(ss, steady_state_gain(ss), **kwargs)

    @property
    def std(self):
        return np.sqrt(np.maximum(self.var, 0.0))

    def _scale(self):
        s = self.std
        # degenerate spread (constant input so far): any positive scale works
        return np.where(s > 1e-12 * np.maximum(np.abs(self.mean), 1.0), s, 1.0)

    def reset(self):
        self.x = None
        self.mean = 0.0
        self.var = 0.0
        self.n_obs = 0

    def update(self, observation):
        """Consume the observation for the current slot and advance the state."""
        obs = np.asarray(observation, dtype=float)
        if not np.all(np.isfinite(obs)):
            raise ValueError("observation must be finite")
        if self.x is None:
            self.x = np.zeros((self.ss.p,) + obs.shape)
            self.mean = np.zeros(obs.shape)
            self.var = np.zeros(obs.shape)
        self.n_obs += 1
        if self.n_obs <= self.seed_count:
            w = 1.0 / self.n_obs
        else:
            w = 1.0 - self._forget
        diff = obs - self.mean
        self.mean = self.mean + w * diff
        self.var = (1.0 - w) * (self.var + w * diff * diff)
        y = (obs - self.mean) / self._scale() * self.model_std
        innov = y - self.ss.C @ self.x
        self.x = self.ss.A @ self.x + np.multiply.outer(self.K, innov)
        return self

    def predict(self, delta: int = 1):
        """Prediction of the observation ``delta`` slots ahead, clamped at zero."""
        if delta < 1:
            raise ValueError("prediction horizon must be at least one slot")
        if self.x is None:
            return 0.0
        v = self.x
        for _ in range(delta - 1):
            v = self.ss.A @ v
        y = self.ss.C @ v
        out = np.maximum(self.mean + y / self.model_std * self._scale(), 0.0)
        return float(out) if np.ndim(out) == 0 else out

    def horizon_matrix(self, max_delta: int) -> np.ndarray:
        """Rows C A^(d-1) for d = 1..max_delta."""
        rows = np.zeros((max_delta, self.ss.p))
        r = self.ss.C.copy()
        for d in range(max_delta):
            rows[d] = r
            r = r @ self.ss.A
        return rows

    def predict_all(self, max_delta: int, rows: np.ndarray | None = None):
        """Predictions for horizons 1..max_delta, stacked along axis 0."""
        if rows is None:
            rows = self.horizon_matrix(max_delta)
        y = rows @ self.x
        return np.maximum(self.mean + y / self.model_std * self._scale(), 0.0)

    def parameters(self) -> dict:
        return {
            "A": self.ss.A, "B": self.ss.B, "C": self.ss.C, "K": self.K,
            "model_std": self.model_std, "half_life": self.half_life,
            "seed_count": self.seed_count,
        }

    def save(self, path) -> None:
        """Write the offline design as flat ``key = values`` text."""
        with open(path, "w") as fh:
            fh.write(f"p = {self.ss.p}\n")
            for key, val in self.parameters().items():
                flat = np.atleast_1d(np.asarray(val, dtype=float)).ravel()
                fh.write(f"{key} = {' '.join(repr(float(v)) for v in flat)}\n")

    @classmethod
    def load(cls, path) -> "SteadyStatePredictor":
        fields = {}
        with open(path) as fh:
            for line in fh:
                if not line.strip() or line.lstrip().startswith("#"):
                    continue
                key, _, rest = line.partition("=")
                fields[key.strip()] = np.array([float(v) for v in rest.split()])
        p = int(fields["p"][0])
        ss = StateSpaceModel(fields["A"].reshape(p, p), fields["B"], fields["C"])
        pred = cls(ss, fields["K"], half_life=float(fields["half_life"][0]),
                   seed_count=int(fields["seed_count"][0]))
        pred.model_std = float(fields["model_std"][0])
        return pred


class DecimatedPredictor:
    """Predictor whose model runs at one step per ``d`` slots.

    Used when a model fitted on a decimated curve cannot be mapped back to
    the slot rate.  One copy of the base predictor is kept per phase
    ``t mod d``; the copy owning the current slot has just seen the newest
    observation, and a horizon of ``delta`` slots is ``delta / d`` model
    steps, interpolated linearly between whole steps (step 0 being the
    observation itself).
    """

    def __init__(self, base: SteadyStatePredictor, d: int):
        if d < 1:
            raise ValueError("decimation factor must be a positive integer")
        self.d = int(d)
        self.phases = [SteadyStatePredictor(base.ss, base.K, base.half_life, base.seed_count)
                       for _ in range(self.d)]
        self.n_obs = 0
        self.last = None

    @property
    def ss(self) -> StateSpaceModel:
        return self.phases[0].ss

    @property
    def K(self) -> np.ndarray:
        return self.phases[0].K

    def reset(self):
        for ph in self.phases:
            ph.reset()
        self.n_obs = 0
        self.last = None

    def update(self, observation):
        obs = np.asarray(observation, dtype=float)
        if not np.all(np.isfinite(obs)):
            raise ValueError("observation must be finite")
        self.phases[self.n_obs % self.d].update(obs)
        self.last = obs
        self.n_obs += 1
        return self

    def horizon_matrix(self, max_delta: int) -> np.ndarray:
        return self.phases[0].horizon_matrix(-(-max_delta // self.d))

    def predict_all(self, max_delta: int, rows: np.ndarray | None = None):
        """Predictions for horizons 1..max_delta, stacked along axis 0."""
        if self.last is None:
            return np.zeros((max_delta,))
        cur = self.phases[(self.n_obs - 1) % self.d]
        steps = -(-max_delta // self.d)
        if rows is None:
            rows = cur.horizon_matrix(steps)
        coarse = np.concatenate([self.last[None, ...],
                                 cur.predict_all(steps, rows[:steps])], axis=0)
        out = []
        for delta in range(1, max_delta + 1):
            k, frac = divmod(delta, self.d)
            w = frac / self.d
            nxt = coarse[k + 1] if frac else coarse[k]
            out.append((1.0 - w) * coarse[k] + w * nxt)
        return np.stack(out)

    def predict(self, delta: int = 1):
        if delta < 1:
            raise ValueError("prediction horizon must be at least one slot")
        out = self.predict_all(delta)[delta - 1]
        return float(out) if np.ndim(out) == 0 else out
