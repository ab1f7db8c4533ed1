"""Counterparty exposure (PFE, EE, EE sensitivities) via Fourier-cosine expansion."""

from .cos import CosExpansion, CosSupport, SpectralFilter
from .estimators import CosExposure, MonteCarloExposure
from .model import DiscountCurve, ModelParams, usd_jpy_params, state_distribution, zcb_price
from .portfolio import GeneratorSpec, Portfolio, generate, partition_counterparty

__version__ = "0.1.0"

__all__ = [
    "CosExpansion", "CosSupport", "CosExposure", "DiscountCurve", "GeneratorSpec",
    "ModelParams", "MonteCarloExposure", "Portfolio", "SpectralFilter", "generate",
    "usd_jpy_params", "partition_counterparty", "state_distribution", "zcb_price",
]
