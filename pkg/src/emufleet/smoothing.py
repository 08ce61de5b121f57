"""Brown's one-parameter exponential smoothing (single, double, triple).

The recursions run left to right with every smoothed statistic initialized to
the first observation::

    S1_t = alpha * x_t  + (1 - alpha) * S1_{t-1}
    S2_t = alpha * S1_t + (1 - alpha) * S2_{t-1}
    S3_t = alpha * S2_t + (1 - alpha) * S3_{t-1}

Forecasts ``m`` steps past the last observation are ``a`` (single),
``a + b*m`` (double) or ``a + b*m + c*m**2/2`` (triple).
"""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Sequence

import numpy as np

from .errors import DomainError, ValidationError

ALPHA_GRID = tuple(round(0.01 * i, 2) for i in range(1, 100))


class Order(str, Enum):
    SINGLE = "single"
    DOUBLE = "double"
    TRIPLE = "triple"

    @property
    def degree(self) -> int:
        return {"single": 0, "double": 1, "triple": 2}[self.value]


# Order reproducing the difference structure of the published index forecasts:
# affine in the horizon for most indices, quadratic for high-speed passenger volumes.
DEFAULT_ORDERS = {
    "hsr_km": Order.DOUBLE,
    "rail_km": Order.DOUBLE,
    "hsr_pass": Order.TRIPLE,
    "hsr_pkm": Order.TRIPLE,
    "rail_pass": Order.DOUBLE,
    "rail_pkm": Order.DOUBLE,
    "gdp": Order.DOUBLE,
    "income": Order.DOUBLE,
    "coaches": Order.DOUBLE,
}


@dataclass(frozen=True)
class SmoothingModel:
    order: Order
    alpha: float
    s1: float
    s2: float
    s3: float
    a: float
    b: float
    c: float

    def forecast(self, horizon: int) -> float:
        return forecast(self, horizon)


def _check_alpha(alpha):
    if not 0.0 < alpha < 1.0:
        raise DomainError(f"alpha must lie in (0, 1), got {alpha}")


def fit_smoothing(series: Sequence[float], order=Order.DOUBLE, alpha=0.5) -> SmoothingModel:
    order = Order(order)
    _check_alpha(alpha)
    x = np.asarray(series, dtype=float)
    if x.ndim != 1 or x.size < 3:
        raise ValidationError(f"need a 1-D series of at least 3 points, got shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise ValidationError("series contains non-finite values")

    s1 = s2 = s3 = float(x[0])
    beta = 1.0 - alpha
    # increment form keeps a constant series an exact fixed point
    for v in x:
        s1 += alpha * (v - s1)
        s2 += alpha * (s1 - s2)
        s3 += alpha * (s2 - s3)

    # coefficients written in state differences, same algebra as the textbook sums
    d12, d23 = s1 - s2, s2 - s3
    if order is Order.SINGLE:
        a, b, c = s1, 0.0, 0.0
    elif order is Order.DOUBLE:
        a = s1 + d12
        b = alpha / beta * d12
        c = 0.0
    else:
        a = s3 + 3 * d12
        b = alpha / (2 * beta**2) * ((6 - 5 * alpha) * d12 - (4 - 3 * alpha) * d23)
        c = alpha**2 / beta**2 * (d12 - d23)
    return SmoothingModel(order, float(alpha), s1, s2, s3, a, b, c)


def forecast(model: SmoothingModel, horizon: int) -> float:
    if int(horizon) != horizon or horizon < 1:
        raise DomainError(f"horizon must be a positive integer, got {horizon}")
    m = float(horizon)
    if model.order is Order.SINGLE:
        return model.a
    if model.order is Order.DOUBLE:
        return model.a + model.b * m
    return model.a + model.b * m + 0.5 * model.c * m * m


def forecast_path(model: SmoothingModel, horizons: int) -> np.ndarray:
    return np.array([forecast(model, m) for m in range(1, horizons + 1)])


def fit_alpha(series, order, reference, grid=ALPHA_GRID) -> float:
    """Grid-search alpha so forecasts at horizons 1..len(reference) best match
    ``reference`` in squared error. Ties go to the smaller alpha."""
    ref = np.asarray(reference, dtype=float)
    if ref.size == 0:
        raise ValidationError("reference must not be empty")
    if len(grid) == 0:
        raise ValidationError("alpha grid must not be empty")
    best_alpha, best_err = None, np.inf
    for alpha in sorted(grid):
        model = fit_smoothing(series, order, alpha)
        err = float(np.sum((forecast_path(model, ref.size) - ref) ** 2))
        if err < best_err:
            best_alpha, best_err = alpha, err
    return float(best_alpha)


def smooth_indices(records, horizon=5, orders=None, references=None, alpha=None):
    """Forecast every index forward ``horizon`` steps from the records with known fleet size.

    With ``references`` ({index: reference values}) alpha is grid-fitted per
    index; otherwise the fixed ``alpha`` (default 0.5) is used. Returns
    ``{index: (model, forecasts)}``.
    """
    from .data import INDEX_NAMES, training_records

    orders = {**DEFAULT_ORDERS, **(orders or {})}
    hist = training_records(records)
    out = {}
    for i, name in enumerate(INDEX_NAMES):
        series = [r.indices[i] for r in hist]
        if references is not None and name in references:
            a = fit_alpha(series, orders[name], references[name])
        else:
            a = 0.5 if alpha is None else alpha
        model = fit_smoothing(series, orders[name], a)
        out[name] = (model, forecast_path(model, horizon))
    return out
