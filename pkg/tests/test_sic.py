"""SuIC decoding chain, coverage, rates, necessary condition."""
import math

import numpy as np
import pytest

from nomasim.allocation import AllocationMode, PowerAllocation
from nomasim.channel import UserState
from nomasim.clustering import Cluster, OrderingMethod
from nomasim.sic import QoSTargets, decode_cluster, necessary_condition, sinr_of


def user(g, w, r=1.0):
    return UserState(position=(r, 0.0), link_distance=r, serving_fading=1.0,
                     serving_gain=g, interference_plus_noise=w,
                     mean_gain=g, mean_interference_plus_noise=w)


def cluster_of(*gw):
    return Cluster(tuple(user(g, w, r=0.1 * (i + 1)) for i, (g, w) in enumerate(gw)),
                   OrderingMethod.BY_LINK_DISTANCE)


def alloc(powers, mode=AllocationMode.MIN_POWER_QOS, budget=1.0):
    return PowerAllocation(tuple(powers), budget, mode, True)


TWO_USERS = cluster_of((1.0, 0.1), (0.0625, 0.01))
P28 = alloc((0.2, 0.8))


class TestSinr:
    def test_strongest_own_message_no_intracell(self):
        a = alloc((0.2,))
        c = cluster_of((1.0, 0.1))
        assert sinr_of(c, a, 0, 0) == pytest.approx(2.0, rel=1e-15)

    def test_weak_own_message(self):
        assert sinr_of(TWO_USERS, P28, 1, 1) == pytest.approx(0.05 / 0.0225, rel=1e-12)

    def test_strong_decoding_weak_message(self):
        assert sinr_of(TWO_USERS, P28, 0, 1) == pytest.approx(0.8 / 0.3, rel=1e-12)

    def test_index_bounds(self):
        with pytest.raises(IndexError):
            sinr_of(TWO_USERS, P28, 1, 0)
        with pytest.raises(IndexError):
            sinr_of(TWO_USERS, P28, 0, 2)

    def test_monotone_in_w_and_power(self):
        base = sinr_of(TWO_USERS, P28, 1, 1)
        worse_w = cluster_of((1.0, 0.1), (0.0625, 0.02))
        assert sinr_of(worse_w, P28, 1, 1) < base
        more_p = alloc((0.2, 0.9))
        assert sinr_of(TWO_USERS, more_p, 1, 1) > base


class TestDecode:
    def test_both_covered_at_theta_two(self):
        out = decode_cluster(TWO_USERS, P28, QoSTargets((2.0, 2.0)),
                             AllocationMode.MIN_POWER_QOS)
        assert out.covered.tolist() == [True, True]
        # covered users in fixed-rate modes earn exactly ln(1 + theta)
        assert out.achieved_rate.tolist() == [math.log1p(2.0)] * 2
        assert out.achieved_rate[0] == pytest.approx(1.0986, abs=1e-4)

    def test_chain_failure_zeroes_earlier_message(self):
        # strong user fails message 2 (2.6667 < 3), so its own message fails
        # by the chain even though its SINR 2.0 meets theta_1 = 2
        out = decode_cluster(TWO_USERS, P28, QoSTargets((2.0, 3.0)),
                             AllocationMode.MIN_POWER_QOS)
        assert out.covered.tolist() == [False, False]
        assert not out.decode_success[0, 1]
        assert not out.decode_success[0, 0]
        assert out.achieved_rate.tolist() == [0.0, 0.0]

    def test_zero_thresholds_cover_everyone(self):
        out = decode_cluster(TWO_USERS, P28, QoSTargets((0.0, 0.0)),
                             AllocationMode.MIN_POWER_QOS)
        assert out.covered.all()

    def test_sum_rate_mode_strong_rate_is_adaptive(self):
        out = decode_cluster(TWO_USERS, P28, QoSTargets((0.0, 2.0)),
                             AllocationMode.SUM_RATE_WEAK_QOS)
        assert out.achieved_rate[0] == pytest.approx(math.log1p(2.0), rel=1e-15)
        assert out.achieved_rate[1] == pytest.approx(math.log(3.0), rel=1e-15)

    def test_sum_rate_mode_strong_rate_zero_on_chain_failure(self):
        out = decode_cluster(TWO_USERS, P28, QoSTargets((0.0, 3.0)),
                             AllocationMode.SUM_RATE_WEAK_QOS)
        assert out.achieved_rate[0] == 0.0

    def test_chain_property_fuzz(self):
        rng = np.random.default_rng(99)
        for _ in range(500):
            n = int(rng.integers(2, 5))
            c = cluster_of(*[(10.0 ** rng.uniform(-2, 2), 10.0 ** rng.uniform(-3, 1))
                             for _ in range(n)])
            powers = rng.dirichlet(np.ones(n)).tolist()
            a = alloc(powers)
            qos = QoSTargets(tuple(rng.uniform(0.0, 3.0, n)))
            out = decode_cluster(c, a, qos, AllocationMode.MIN_POWER_QOS)
            for i in range(n):
                for k in range(i, n):
                    if not out.decode_success[i, k]:
                        assert not out.decode_success[i, i:k].any()
                assert out.covered[i] == out.decode_success[i, i]

    def test_sizing_mismatch_rejected(self):
        with pytest.raises(ValueError):
            decode_cluster(TWO_USERS, alloc((1.0,)), QoSTargets((1.0, 1.0)),
                           AllocationMode.MIN_POWER_QOS)


class TestNecessaryCondition:
    def test_boundary_violates(self):
        assert not necessary_condition(alloc((0.5, 0.5)), QoSTargets((0.0, 1.0)))

    def test_clear_pass(self):
        assert necessary_condition(alloc((0.25, 0.75)), QoSTargets((0.0, 2.0)))

    def test_three_messages(self):
        a = alloc((0.1, 0.2, 0.7))
        assert necessary_condition(a, QoSTargets((0.0, 1.0, 2.0)))
        assert not necessary_condition(a, QoSTargets((0.0, 1.0, 3.0)))

    def test_violation_guarantees_outage(self):
        # whenever the condition fails at message k, no fading or interference
        # draw can decode message k at any user
        rng = np.random.default_rng(17)
        checked = 0
        while checked < 10_000:
            n = int(rng.integers(2, 4))
            powers = rng.dirichlet(np.ones(n)).tolist()
            thetas = tuple(rng.uniform(0.2, 3.0, n))
            a = alloc(powers)
            qos = QoSTargets(thetas)
            if necessary_condition(a, qos):
                continue
            bad = [k for k in range(1, n)
                   if not powers[k] > thetas[k] * sum(powers[:k])]
            c = cluster_of(*[(10.0 ** rng.uniform(-3, 3), 10.0 ** rng.uniform(-3, 3))
                             for _ in range(n)])
            out = decode_cluster(c, a, qos, AllocationMode.MIN_POWER_QOS)
            for k in bad:
                assert not out.decode_success[: k + 1, k].any()
            checked += 1
