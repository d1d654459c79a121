"""Exact oracles: brute force, rational LP, rewrite enumeration, fixtures."""

from fractions import Fraction

import numpy as np
import pytest

from seqsub import adalloc, qrewrite
from seqsub.adalloc import evaluate_strategy, random_strategy
from seqsub.oracle import (
    SizeGuardError,
    brute_force_discrete,
    brute_force_rewrite_opt,
    lp_opt_fluid,
    make_coverage_fixture,
)
from seqsub.qrewrite import single_type_allocate
from seqsub.seqcore import DiscreteSequence

from conftest import random_ad_instance


# ---------------------------------------------------------------------------
# coverage fixtures
# ---------------------------------------------------------------------------

def test_coverage_values(i2):
    u, actions = i2
    assert u(DiscreteSequence(("s1",), actions)) == pytest.approx(2.0)
    assert u(DiscreteSequence((), actions)) == 0.0
    assert u(DiscreteSequence(("s1", "s1"), actions)) == pytest.approx(2.0)


def test_coverage_rejects_bad_input():
    with pytest.raises(ValueError, match="negative weight"):
        make_coverage_fixture({"s": {1}}, {1: -0.5})
    with pytest.raises(ValueError, match="unknown element"):
        make_coverage_fixture({"s": {2}}, {1: 1.0})


# ---------------------------------------------------------------------------
# brute-force discrete
# ---------------------------------------------------------------------------

def test_brute_force_coverage(i2):
    u, actions = i2
    res = brute_force_discrete(u, actions, 2)
    assert res.value == pytest.approx(3.0)
    assert res.witness.items == ("s1", "s2")  # lexicographically first optimum
    assert u(res.witness) == res.value


def test_brute_force_witness_reevaluates():
    rng = np.random.default_rng(83)
    for _ in range(10):
        from conftest import random_coverage

        u, actions = random_coverage(rng)
        res = brute_force_discrete(u, actions, int(rng.integers(0, 4)))
        assert u(res.witness) == res.value


def test_brute_force_zero_horizon(i2):
    u, actions = i2
    res = brute_force_discrete(u, actions, 0)
    assert res.value == 0.0
    assert res.witness.is_empty()


def test_brute_force_single_action():
    u, actions = make_coverage_fixture({"s": {1}}, {1: 2.5})
    res = brute_force_discrete(u, actions, 3)
    assert res.value == pytest.approx(2.5)
    assert res.witness.items == ("s", "s", "s")


def test_brute_force_guard():
    u, actions = make_coverage_fixture({f"s{i}": {i} for i in range(12)}, {i: 1.0 for i in range(12)})
    with pytest.raises(SizeGuardError, match="10"):
        brute_force_discrete(u, actions, 8)


# ---------------------------------------------------------------------------
# exact LP
# ---------------------------------------------------------------------------

def test_lp_single_pair(i0):
    res = lp_opt_fluid(i0)
    assert res.exact_value == Fraction(1)
    assert res.witness == {("a1", "t1"): pytest.approx(1.0)}


def test_lp_two_ads(i1):
    res = lp_opt_fluid(i1)
    assert res.exact_value == Fraction(1)
    assert res.witness[("a1", "t2")] == pytest.approx(0.5)
    assert res.witness[("a2", "t1")] == pytest.approx(0.5)


def test_lp_zero_budgets(i1):
    zero = adalloc.AdInstance(
        ad_ids=i1.ad_ids,
        budgets=(0.0, 0.0),
        type_ids=i1.type_ids,
        probs=i1.probs,
        bid_matrix=i1.bid_matrix,
        slots=i1.slots,
        horizon=i1.horizon,
    )
    assert lp_opt_fluid(zero).value == 0.0


def test_lp_pair_capacity_binds():
    # Two slots but a single ad: the pair cap keeps the optimum at q*p*T.
    inst = adalloc.AdInstance.build(
        ads=[("a1", 10.0)],
        query_types=[("t1", 1.0)],
        bids={"a1": {"t1": 1.0}},
        slots=2,
        horizon=1.0,
    )
    res = lp_opt_fluid(inst)
    assert res.exact_value == Fraction(1)
    strategy, ledger = adalloc.greedy_allocate(inst)
    assert ledger.utility <= res.value + 1e-9


def test_lp_guard():
    inst = adalloc.AdInstance.build(
        ads=[(f"a{i}", 1.0) for i in range(4)],
        query_types=[(f"t{j}", 0.25) for j in range(4)],
        bids={},
        slots=1,
        horizon=1.0,
    )
    with pytest.raises(SizeGuardError, match="16"):
        lp_opt_fluid(inst)


def test_lp_upper_bounds_every_strategy():
    rng = np.random.default_rng(73)
    for _ in range(15):
        inst = random_ad_instance(rng)
        opt = lp_opt_fluid(inst)
        for _ in range(10):
            led = evaluate_strategy(inst, random_strategy(inst, rng))
            assert opt.value >= led.utility - 1e-9


def test_lp_scaling_covariance(i1):
    base = lp_opt_fluid(i1).exact_value
    for factor in (0.5, 2.0, 4.0):  # exact in binary floating point
        scaled = adalloc.AdInstance(
            ad_ids=i1.ad_ids,
            budgets=tuple(b * factor for b in i1.budgets),
            type_ids=i1.type_ids,
            probs=i1.probs,
            bid_matrix=tuple(tuple(p * factor for p in row) for row in i1.bid_matrix),
            slots=i1.slots,
            horizon=i1.horizon,
        )
        assert lp_opt_fluid(scaled).exact_value == base * Fraction(factor)


def test_lp_matches_single_type_allocator():
    rng = np.random.default_rng(79)
    for _ in range(15):
        inst = random_ad_instance(rng, max_types=1)
        led = single_type_allocate(
            inst, inst.type_ids[0], set(inst.ad_ids), inst.budgets, inst.horizon
        )
        assert lp_opt_fluid(inst).value == pytest.approx(led.utility, abs=1e-9)


def test_lp_witness_spend_is_feasible(i1):
    res = lp_opt_fluid(i1)
    per_ad = {}
    for (ad, _), z in res.witness.items():
        per_ad[ad] = per_ad.get(ad, 0.0) + z
    for ad, total in per_ad.items():
        assert total <= i1.budgets[i1.ad_index(ad)] + 1e-9
    assert sum(res.witness.values()) == pytest.approx(res.value, abs=1e-9)


# ---------------------------------------------------------------------------
# rewrite enumeration
# ---------------------------------------------------------------------------

def test_rewrite_opt_small(i3k1, i3k2):
    res1 = brute_force_rewrite_opt(i3k1)
    assert res1.value == pytest.approx(0.5, abs=1e-12)
    assert res1.witness["rewrites"]["t1"] == ["r2"]
    res2 = brute_force_rewrite_opt(i3k2)
    assert res2.value == pytest.approx(0.7, abs=1e-12)
    assert sorted(res2.witness["rewrites"]["t1"]) == ["r1", "r2"]


def test_rewrite_opt_unrestricted_when_k_large(i3k2):
    inst = qrewrite.RewriteInstance(i3k2.base, i3k2.rewrites, 2)
    assert brute_force_rewrite_opt(inst).exact_value == lp_opt_fluid(i3k2.base).exact_value


def test_rewrite_opt_guard(i3k2):
    base = adalloc.AdInstance.build(
        ads=[("a1", 1.0)],
        query_types=[(f"t{j}", 1.0 / 12) for j in range(12)],
        bids={},
        slots=1,
        horizon=1.0,
    )
    rewrites = tuple(qrewrite.Rewrite(f"r{i}", ("a1",)) for i in range(4))
    inst = qrewrite.RewriteInstance(base, rewrites, 2)
    with pytest.raises(SizeGuardError):
        brute_force_rewrite_opt(inst)
