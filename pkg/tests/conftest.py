from __future__ import annotations

import pytest

from app.contracts.models import RunConfig
from app.refdata.presets import FIG1_EDGES, FIG1_N
from app.services.costs import QuadraticCost, draw_ls_instance
from app.services.graph import build_topology


@pytest.fixture
def fig1():
    return build_topology(FIG1_N, FIG1_EDGES)


@pytest.fixture
def two_node():
    return build_topology(2, [(1, 2)])


@pytest.fixture
def two_node_costs():
    # f1 = x^2 / 2, f2 = (x - 2)^2 / 2; x* = 1, lambda* = 1, F* = 1
    return [QuadraticCost(a=0.5, b=0.0, c=0.0), QuadraticCost(a=0.5, b=-2.0, c=2.0)]


@pytest.fixture
def fig1_costs():
    return list(draw_ls_instance(FIG1_N, 3).costs)


@pytest.fixture
def make_cfg():
    def _make(**kw) -> RunConfig:
        base = dict(algorithm="parallel-admm", rho=1.0, eps1=0.0, eps2=0.0, max_iter=10, seed=0)
        base.update(kw)
        return RunConfig(**base)

    return _make
