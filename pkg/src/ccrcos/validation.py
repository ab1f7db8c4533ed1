"""Input checks shared by the estimators and the CLI."""

from __future__ import annotations

import numbers

import numpy as np

from .model import ModelParams


def check_positive_int(value, name: str, minimum: int = 1) -> int:
    if isinstance(value, bool) or not isinstance(value, numbers.Integral):
        if not (isinstance(value, numbers.Real) and float(value).is_integer()):
            raise TypeError(f"{name} must be an integer, got {value!r}")
    value = int(value)
    if value < minimum:
        raise ValueError(f"{name} must be >= {minimum}, got {value}")
    return value


def check_alpha(alpha) -> float:
    alpha = float(alpha)
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    return alpha


def check_date(t) -> float:
    t = float(t)
    if not np.isfinite(t) or t < 0:
        raise ValueError(f"exposure date must be finite and >= 0, got {t}")
    return t


def check_model(model) -> ModelParams:
    if isinstance(model, dict):
        return ModelParams.from_dict(model)
    if not isinstance(model, ModelParams):
        raise TypeError(f"expected ModelParams, got {type(model).__name__}")
    return model


def check_portfolio(portfolio):
    from .portfolio import Portfolio

    if isinstance(portfolio, list):
        portfolio = Portfolio.from_records(portfolio)
    if not isinstance(portfolio, Portfolio):
        raise TypeError(f"expected Portfolio, got {type(portfolio).__name__}")
    if len(portfolio) == 0:
        raise ValueError("portfolio is empty")
    return portfolio


def exposure_dates(t_max: float, n_dates: int = 20) -> np.ndarray:
    """``n_dates`` equidistant dates on ``[0, t_max]``."""
    n_dates = check_positive_int(n_dates, "dates", minimum=2)
    if not t_max > 0:
        raise ValueError("t_max must be positive")
    return np.linspace(0.0, t_max, n_dates)
