"""Predictor evaluation against Monte Carlo traces.

Predictors are designed from scenario parameters alone (the analytic
correlation), then fed each simulated trace causally.  Errors are
aggregated as power-weighted NMSE: summed squared errors over summed
squared true values, across all realizations.
"""
from __future__ import annotations

import csv
import enum
import logging
import math
import time
import warnings
from dataclasses import dataclass, field

import numpy as np

from .arma import (ArmaModel, FitError, FitReport, decimate_correlation, decimation_factor,
                   model_autocorr, rescale_model, select_order)
from .correlation import (SystemParams, channel_only_autocorr, interference_autocorr,
                          speed_from_eta)
from .kalman import DecimatedPredictor, SteadyStatePredictor
from .simulation import ScenarioConfig, simulate

log = logging.getLogger(__name__)

NMSE_FLOOR_DB = -150.0
SPEED_OF_LIGHT = 3e8
HIST_EDGES = np.arange(-30.0, 10.5, 0.5)
BATCH = 100
#: Curves are computed to this many lags beyond what the fit needs.
FIT_LAGS = 200
#: Allowed mismatch between a rescaled model and its decimated original.
RESCALE_TOL = 0.05


class PredictorKind(str, enum.Enum):
    INTERFERENCE = "interference"
    CHANNEL_ONLY = "channel_only"
    LAST_VALUE = "last_value"
    MEAN_VALUE = "mean_value"


ALL_KINDS = tuple(PredictorKind)


def nmse(true_values, predicted) -> float:
    """Squared prediction error normalized by the power of the true values."""
    t = np.asarray(true_values, dtype=float)
    p = np.asarray(predicted, dtype=float)
    if t.shape != p.shape or t.size < 1:
        raise ValueError("true and predicted sequences must have equal nonzero length")
    den = float(np.sum(t * t))
    if den <= 0:
        raise ValueError("NMSE undefined for an all-zero true sequence")
    return float(np.sum((t - p) ** 2)) / den


def to_db(ratio) -> np.ndarray | float:
    with np.errstate(divide="ignore"):
        out = np.maximum(10 * np.log10(ratio), NMSE_FLOOR_DB)
    return float(out) if np.ndim(out) == 0 else out


def running_mean(trace: np.ndarray) -> np.ndarray:
    """Causal mean of ``trace[..., :t+1]`` along the last axis."""
    trace = np.asarray(trace, dtype=float)
    n = np.arange(1, trace.shape[-1] + 1)
    return np.cumsum(trace, axis=-1) / n


def run_baselines(trace, delta: int) -> dict:
    """Aligned ``(true, predicted)`` pairs of the two trivial predictors.

    Prediction for slot t + delta is made at slot t from ``trace[:t+1]``.
    """
    trace = np.asarray(trace, dtype=float)
    if delta < 1:
        raise ValueError("prediction horizon must be at least one slot")
    if trace.shape[-1] <= delta:
        raise ValueError("trace must be longer than the prediction horizon")
    true = trace[..., delta:]
    return {
        PredictorKind.LAST_VALUE: (true, trace[..., :-delta]),
        PredictorKind.MEAN_VALUE: (true, running_mean(trace)[..., :-delta]),
    }


# -- scenarios -----------------------------------------------------------------

@dataclass(frozen=True)
class TechScenario:
    name: str
    carrier_hz: float
    speed_mps: float
    slot_s: float
    eta: float
    mu: float = 0.01
    ell: int = 20

    def __post_init__(self):
        if not self.doppler > 0:
            raise ValueError("normalized Doppler must be positive")
        if self.eta < 1:
            raise ValueError("eta must be at least one slot")

    @property
    def doppler(self) -> float:
        return doppler_normalized(self.speed_mps, self.carrier_hz, self.slot_s)

    @property
    def nu(self) -> float:
        """Effective speed whose Jakes first zero lies at ``eta``."""
        return speed_from_eta(self.eta)

    def params(self, **changes) -> SystemParams:
        return SystemParams(mu=self.mu, ell=self.ell, nu=self.nu).replace(**changes)


def doppler_normalized(speed_mps: float, carrier_hz: float, slot_s: float) -> float:
    """Maximum Doppler shift in units of the slot rate."""
    if not (speed_mps > 0 and carrier_hz > 0 and slot_s > 0):
        raise ValueError("speed, carrier and slot duration must be positive")
    return 2.0 * speed_mps / SPEED_OF_LIGHT * carrier_hz * slot_s


_KMH = 1 / 3.6
TECH_SCENARIOS = {
    "LTE1": TechScenario("LTE1", 2e9, 6 * _KMH, 1e-3, 225),
    "LTE2": TechScenario("LTE2", 2e9, 40 * _KMH, 1e-3, 35),
    "LTE3": TechScenario("LTE3", 2e9, 80 * _KMH, 1e-3, 17),
    "WSN": TechScenario("WSN", 2.4e9, 6 * _KMH, 4.6e-3, 50),
}


def build_tech_scenario(name: str) -> TechScenario:
    key = name.upper().replace("-", "").replace("_", "")
    if key not in TECH_SCENARIOS:
        raise KeyError(f"unknown technology scenario {name!r}; choose from {sorted(TECH_SCENARIOS)}")
    return TECH_SCENARIOS[key]


@dataclass(frozen=True)
class Scenario:
    """A named simulation setup plus how its predictors are designed."""

    name: str
    config: ScenarioConfig
    decimate_above: float | None = None  # decimate when the Jakes zero exceeds this lag

    @property
    def params(self) -> SystemParams:
        return self.config.params


# -- predictor design ----------------------------------------------------------

@dataclass
class PredictorDesign:
    kind: PredictorKind
    model: ArmaModel
    report: FitReport
    decimation: int = 1
    rescaled: bool = False

    def build(self):
        if self.decimation > 1 and not self.rescaled:
            return DecimatedPredictor(SteadyStatePredictor.from_model(self.model), self.decimation)
        return SteadyStatePredictor.from_model(self.model)


def _decimation_for(scenario: Scenario, rho) -> int:
    if scenario.decimate_above is None or scenario.params.nu == 0:
        return 1
    eta = 2.404825557695773 / (2 * math.pi * scenario.params.nu)
    if eta <= scenario.decimate_above:
        return 1
    return decimation_factor(rho)


def design_predictor(kind: PredictorKind, scenario: Scenario, p_max: int = 20,
                     T: int = 100, target_db: float = -30.0) -> PredictorDesign:
    """Fit the ARMA model and gain for a model-based predictor kind.

    Uses only the scenario's parameters.  When the channel is slow enough
    that the curve is decimated, the fitted model is mapped back to the slot
    rate if that mapping is valid; otherwise the predictor runs on the
    decimated time base.
    """
    prm = scenario.params
    lags = max(2 * p_max, 2 * T, FIT_LAGS)
    # slow channels may need decimation, which needs a longer curve
    span = lags if scenario.decimate_above is None else 10 * lags
    probe = interference_autocorr(prm, span) if kind is PredictorKind.INTERFERENCE \
        else channel_only_autocorr(prm.nu, span)
    d = min(_decimation_for(scenario, probe), probe.T // lags)
    rho = decimate_correlation(probe, d, lags)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        report, model = select_order(rho, p_max=p_max, target_db=target_db, T=T)
    for w in caught:
        log.warning("%s/%s: %s", scenario.name, kind.value, w.message)
    if d == 1:
        return PredictorDesign(kind, model, report)
    try:
        fine = rescale_model(model, d)
        check = model_autocorr(fine, d * 50).values[::d]
        if np.max(np.abs(check - model_autocorr(model, 50).values)) > RESCALE_TOL:
            raise FitError("rescaled model does not reproduce the decimated correlation")
        return PredictorDesign(kind, fine, report, d, True)
    except FitError as exc:
        log.info("%s/%s: running on decimated time base (%s)", scenario.name, kind.value, exc)
        return PredictorDesign(kind, model, report, d, False)


# -- evaluation ----------------------------------------------------------------

@dataclass
class EvaluationResult:
    """Aggregated NMSE per (predictor, delta) for one scenario."""

    scenario: str
    kinds: tuple
    deltas: tuple
    realizations: int
    num: dict = field(default_factory=dict)
    den: dict = field(default_factory=dict)
    per_realization: dict = field(default_factory=dict)
    designs: dict = field(default_factory=dict)
    runtime_s: float = 0.0

    def nmse(self, kind, delta: int) -> float:
        kind = PredictorKind(kind)
        return self.num[kind, delta] / self.den[kind, delta]

    def nmse_db(self, kind, delta: int) -> float:
        return to_db(self.nmse(kind, delta))

    def curve_db(self, kind) -> np.ndarray:
        return np.array([self.nmse_db(kind, d) for d in self.deltas])

    def histogram(self, kind, delta: int, edges=HIST_EDGES):
        vals = np.clip(to_db(np.asarray(self.per_realization[PredictorKind(kind), delta])),
                       edges[0], edges[-1])
        counts, _ = np.histogram(vals, bins=edges)
        return counts, edges

    def first_crossing(self, kind, baseline=PredictorKind.MEAN_VALUE) -> int | None:
        """First evaluated horizon at which ``kind`` is no better than the baseline."""
        for d in self.deltas:
            if self.nmse(kind, d) >= self.nmse(baseline, d):
                return d
        return None

    def crossing_point(self, kind, baseline=PredictorKind.MEAN_VALUE) -> float | None:
        """Horizon where the dB gap to the baseline first reaches zero.

        The gap is interpolated linearly between evaluated horizons.  Returns
        None if ``kind`` stays better over the whole range.
        """
        deltas = np.asarray(self.deltas, dtype=float)
        gap = self.curve_db(kind) - self.curve_db(baseline)
        for i, g in enumerate(gap):
            if g >= 0:
                if i == 0:
                    return float(deltas[0])
                g0 = gap[i - 1]
                return float(deltas[i - 1] + (deltas[i] - deltas[i - 1]) * -g0 / (g - g0))
        return None

    def crossing(self, kind, baseline=PredictorKind.MEAN_VALUE) -> int | None:
        """Crossing point rounded to the nearest whole horizon."""
        x = self.crossing_point(kind, baseline)
        return None if x is None else int(math.floor(x + 0.5))


def _model_predictions(pred, X: np.ndarray, max_delta: int) -> np.ndarray:
    """Predictions ``out[delta-1, r, t]`` for slot t + delta made at slot t."""
    R, H = X.shape
    out = np.empty((max_delta, R, H))
    rows = pred.horizon_matrix(max_delta)
    for t in range(H):
        pred.update(X[:, t])
        out[:, :, t] = pred.predict_all(max_delta, rows)
    return out


def evaluate_traces(X: np.ndarray, kinds, deltas, predictors: dict, result: EvaluationResult):
    """Accumulate errors of every predictor on a batch of traces ``X[r, t]``."""
    X = np.asarray(X, dtype=float)
    max_delta = max(deltas)
    for kind in kinds:
        kind = PredictorKind(kind)
        if kind in (PredictorKind.LAST_VALUE, PredictorKind.MEAN_VALUE):
            pairs = {d: run_baselines(X, d)[kind] for d in deltas}
        else:
            pred = predictors[kind].build()
            P = _model_predictions(pred, X, max_delta)
            pairs = {d: (X[:, d:], P[d - 1][:, :-d]) for d in deltas}
        for d, (true, guess) in pairs.items():
            err = np.sum((true - guess) ** 2, axis=1)
            pw = np.sum(true * true, axis=1)
            result.num[kind, d] = result.num.get((kind, d), 0.0) + float(err.sum())
            result.den[kind, d] = result.den.get((kind, d), 0.0) + float(pw.sum())
            with np.errstate(divide="ignore", invalid="ignore"):
                ratio = np.where(pw > 0, err / np.where(pw > 0, pw, 1.0), np.nan)
            result.per_realization.setdefault((kind, d), []).extend(ratio[np.isfinite(ratio)])
    result.realizations += X.shape[0]
    return result


def evaluate_scenario(scenario: Scenario, kinds=ALL_KINDS, deltas=range(1, 11),
                      realizations: int | None = None, designs: dict | None = None,
                      batch: int = BATCH, traces=None) -> EvaluationResult:
    """NMSE of each predictor kind over the scenario's Monte Carlo traces.

    Model-based predictors are designed once per scenario before any trace
    is generated.  ``traces`` may supply pre-simulated traces instead.
    """
    t0 = time.perf_counter()
    kinds = tuple(PredictorKind(k) for k in kinds)
    deltas = tuple(sorted(set(int(d) for d in deltas)))
    if not deltas or deltas[0] < 1:
        raise ValueError("horizons must be positive")
    designs = dict(designs or {})
    for kind in kinds:
        if kind in (PredictorKind.INTERFERENCE, PredictorKind.CHANNEL_ONLY) and kind not in designs:
            designs[kind] = design_predictor(kind, scenario)
    result = EvaluationResult(scenario.name, kinds, deltas, 0, designs=designs)
    if traces is None:
        n = scenario.config.realizations if realizations is None else realizations
        for start in range(0, n, batch):
            count = min(batch, n - start)
            X = np.array([tr.values for tr in simulate(scenario.config, start, count)])
            evaluate_traces(X, kinds, deltas, designs, result)
    else:
        X = np.asarray(traces, dtype=float)
        for start in range(0, X.shape[0], batch):
            evaluate_traces(X[start:start + batch], kinds, deltas, designs, result)
    result.runtime_s = time.perf_counter() - t0
    return result


# -- output --------------------------------------------------------------------

RESULT_HEADER = ["scenario", "predictor", "delta", "nmse_db", "realizations"]


def _open(path):
    try:
        return open(path, "w", newline="")
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror}") from exc


def emit_results(results, path, hist_path=None, fits_path=None) -> None:
    """Write NMSE rows, and optionally histogram and fit-grid CSVs.

    ``results`` is one EvaluationResult or a sequence of them; rows follow
    the given scenario order, then predictor kind, then horizon.
    """
    if isinstance(results, EvaluationResult):
        results = [results]
    with _open(path) as fh:
        write_result_rows(csv.writer(fh), results)
    if hist_path is not None:
        with _open(hist_path) as fh:
            w = csv.writer(fh)
            w.writerow(["scenario", "predictor", "delta", "bin_lo_db", "bin_hi_db", "count"])
            for res in results:
                for kind in res.kinds:
                    for d in res.deltas:
                        counts, edges = res.histogram(kind, d)
                        for lo, hi, c in zip(edges[:-1], edges[1:], counts):
                            w.writerow([res.scenario, kind.value, d, f"{lo:g}", f"{hi:g}", int(c)])
    if fits_path is not None:
        with _open(fits_path) as fh:
            w = csv.writer(fh)
            w.writerow(["scenario", "predictor", "p", "q", "mse_db", "selected"])
            for res in results:
                for kind, design in res.designs.items():
                    write_fit_grid(w, res.scenario, kind.value, design.report)


def write_result_rows(writer, results) -> None:
    writer.writerow(RESULT_HEADER)
    for res in results:
        for kind in res.kinds:
            for d in res.deltas:
                writer.writerow([res.scenario, kind.value, d, f"{res.nmse_db(kind, d):.6f}",
                                 res.realizations])


def write_fit_grid(writer, scenario: str, label: str, report: FitReport) -> None:
    grid = report.mse_grid
    for p in range(1, grid.shape[0]):
        for q in range(0, p + 1):
            v = grid[p, q]
            writer.writerow([scenario, label, p, q, "" if np.isnan(v) else f"{v:.4f}",
                             int((p, q) == report.selected)])
