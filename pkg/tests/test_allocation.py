import math
import random

import pytest

from fragserve import NULL_ALLOC, AllocCurve, achievable_rps, min_resource
from conftest import make_cost, make_model
from oracles import brute_min_resource


def test_empty_span_is_free():
    model = make_model(seed=1)
    cost = make_cost(model)
    alloc = min_resource(cost, "m", 3, 3, 50.0, 20.0)
    assert alloc is NULL_ALLOC
    assert alloc.resource == 0
    assert achievable_rps(cost, "m", 3, 3, alloc) == math.inf


def test_nonpositive_budget_infeasible():
    model = make_model(seed=1)
    cost = make_cost(model)
    assert min_resource(cost, "m", 0, 4, 10.0, 0.0) is None
    assert min_resource(cost, "m", 0, 4, 10.0, -3.0) is None


def test_nonpositive_demand_rejected():
    model = make_model(seed=1)
    cost = make_cost(model)
    with pytest.raises(ValueError):
        min_resource(cost, "m", 0, 4, 0.0, 25.0)


def test_matches_brute_force_randomized():
    # frontier answers must equal a full-grid scan, triple included
    rng = random.Random(42)
    models = [make_model(f"m{k}", n_layers=rng.randrange(4, 10), seed=k) for k in range(6)]
    costs = [make_cost(m, c1=0.15 + 0.1 * (k % 3), batch_max=12) for k, m in enumerate(models)]
    checked = 0
    for _ in range(200):
        k = rng.randrange(len(models))
        model, cost = models[k], costs[k]
        n = model.layer_count
        start = rng.randrange(0, n)
        end = rng.randrange(start + 1, n + 1)
        demand = rng.uniform(0.5, 400.0)
        budget = rng.uniform(0.5, 120.0)
        cap = rng.choice([None, None, 1, 2, 5])
        max_share = rng.choice([100, 100, 100, 40, 73])
        got = min_resource(cost, model.model_id, start, end, demand, budget,
                           cap=cap, max_share=max_share)
        want = brute_min_resource(cost, model.model_id, start, end, demand, budget,
                                  cap=cap, max_share=max_share)
        if want is None:
            assert got is None, (start, end, demand, budget, cap, max_share)
        else:
            assert got is not None, (start, end, demand, budget, cap, max_share)
            assert (got.resource, got.instances, got.share, got.batch) == want
            checked += 1
    assert checked > 50  # the sampler must hit plenty of feasible queries


def test_cost_monotone_in_budget_and_demand():
    model = make_model(seed=7)
    cost = make_cost(model)
    budgets = [5.0, 10.0, 20.0, 40.0, 80.0]
    prev = math.inf
    for budget in budgets:
        alloc = min_resource(cost, "m", 0, model.layer_count, 60.0, budget)
        value = math.inf if alloc is None else alloc.resource
        assert value <= prev
        prev = value
    prev = 0
    for demand in [5.0, 20.0, 80.0, 320.0]:
        alloc = min_resource(cost, "m", 0, model.layer_count, demand, 50.0)
        assert alloc is not None
        assert alloc.resource >= prev
        prev = alloc.resource


def test_curve_grid_matches_single_queries():
    model = make_model(seed=3)
    cost = make_cost(model)
    curve = AllocCurve(cost.frontier("m", 1, model.layer_count), 45.0, None, 100)
    import numpy as np

    budgets = np.array([0.5, 2.0, 7.5, 13.0, 22.0, 60.0, 150.0])
    vec = curve.query_costs(budgets)
    for i, budget in enumerate(budgets):
        single = curve.query(float(budget))
        if single is None:
            assert math.isinf(vec[i])
        else:
            assert vec[i] == single.resource


def test_instance_cap_forces_bigger_shares():
    model = make_model(seed=5)
    cost = make_cost(model)
    free = min_resource(cost, "m", 0, model.layer_count, 300.0, 40.0)
    capped = min_resource(cost, "m", 0, model.layer_count, 300.0, 40.0, cap=1)
    assert free is not None
    if capped is not None:
        assert capped.instances == 1
        assert capped.resource >= free.resource


def test_achievable_meets_demand():
    # the chosen allocation must actually sustain the demanded rate
    rng = random.Random(11)
    model = make_model(seed=9)
    cost = make_cost(model)
    for _ in range(40):
        demand = rng.uniform(1.0, 250.0)
        budget = rng.uniform(4.0, 90.0)
        alloc = min_resource(cost, "m", 0, model.layer_count, demand, budget)
        if alloc is None:
            continue
        assert achievable_rps(cost, "m", 0, model.layer_count, alloc) >= demand - 1e-9
        lat = cost.latency("m", 0, model.layer_count, alloc.batch, alloc.share)
        assert lat <= budget + 1e-12
