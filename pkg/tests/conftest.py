"""Shared fixtures: the USD/JPY parameter set and seeded portfolios."""

import pytest

from ccrcos.model import usd_jpy_params
from ccrcos.portfolio import GeneratorSpec, generate, partition_counterparty


@pytest.fixture(scope="session")
def params():
    return usd_jpy_params()


@pytest.fixture(scope="session")
def portfolio100(params):
    return generate(GeneratorSpec(n_trades=100, seed=42), params)


@pytest.fixture(scope="session")
def portfolio1000(params):
    return generate(GeneratorSpec(n_trades=1000, seed=7), params)


@pytest.fixture(scope="session")
def counterparty100(portfolio100):
    return partition_counterparty(portfolio100, "by_contract_type")


@pytest.fixture(scope="session")
def t_half(portfolio100):
    """Half of the longest maturity, the date used for convergence studies."""
    return portfolio100.max_maturity / 2


@pytest.fixture(scope="session")
def small_portfolio(params):
    return generate(GeneratorSpec(n_trades=10, seed=3), params)
