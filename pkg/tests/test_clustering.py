"""User ordering and cluster-selection strategies."""
import logging
import math

import numpy as np
import pytest

from nomasim.channel import ChannelParams, UserState, make_user_state
from nomasim.clustering import (
    Cluster,
    ControlledDisparity,
    DiskAnnulus,
    FixedDisk,
    InDiskHalfRho,
    OrderingMethod,
    RandomInCell,
    SinrThreshold,
    cluster_from_pool,
    eligible,
    order_users,
    reference_sinr,
    select_cluster,
)
from nomasim.geometry import (
    MaxAttemptsExceeded,
    NetworkRealization,
    in_cell,
    sample_realization,
)

PARAMS = ChannelParams(4.0, 0.0, 1.0)


def user(r, gain=None, w=1.0, mean_w=None):
    gain = gain if gain is not None else r ** -4.0
    return UserState(position=(r, 0.0), link_distance=r, serving_fading=1.0,
                     serving_gain=gain, interference_plus_noise=w,
                     mean_gain=gain,
                     mean_interference_plus_noise=mean_w if mean_w is not None else w)


class TestOrdering:
    def test_by_distance(self):
        users = [user(0.3), user(0.1), user(0.5)]
        c = order_users(users, OrderingMethod.BY_LINK_DISTANCE)
        assert [u.link_distance for u in c.users] == [0.1, 0.3, 0.5]

    def test_by_mean_quality(self):
        # quality keys r^-eta / W of (2, 5, 1)
        users = [user(1.0, gain=2.0, w=1.0), user(1.1, gain=5.0, w=1.0),
                 user(1.2, gain=1.0, w=1.0)]
        c = order_users(users, OrderingMethod.BY_MEAN_SIGNAL_QUALITY)
        assert [u.serving_gain for u in c.users] == [5.0, 2.0, 1.0]

    def test_tie_broken_by_input_index(self):
        first, second = user(0.3, w=1.0), user(0.3, w=2.0)
        c = order_users([first, second], OrderingMethod.BY_LINK_DISTANCE)
        assert c.users == (first, second)

    def test_instantaneous_flag_uses_faded_gain(self):
        # same mean quality, different fades
        a = UserState((1.0, 0.0), 1.0, 2.0, 2.0, 1.0, 1.0, 1.0)
        b = UserState((1.0, 0.0), 1.0, 0.5, 0.5, 1.0, 1.0, 1.0)
        mean = order_users([a, b], OrderingMethod.BY_MEAN_SIGNAL_QUALITY)
        inst = order_users([a, b], OrderingMethod.BY_MEAN_SIGNAL_QUALITY,
                           instantaneous=True)
        assert mean.users == (a, b)          # tie -> input order
        assert inst.users == (a, b)
        inst2 = order_users([b, a], OrderingMethod.BY_MEAN_SIGNAL_QUALITY,
                            instantaneous=True)
        assert inst2.users == (a, b)         # faded gain reorders

    def test_permutation_invariant_key_sequence(self):
        rng = np.random.default_rng(0)
        users = [user(float(r)) for r in rng.uniform(0.1, 2.0, 8)]
        base = order_users(users, OrderingMethod.BY_LINK_DISTANCE)
        for _ in range(10):
            perm = list(users)
            rng.shuffle(perm)
            again = order_users(perm, OrderingMethod.BY_LINK_DISTANCE)
            assert [u.link_distance for u in again.users] == \
                   [u.link_distance for u in base.users]

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            order_users([], OrderingMethod.BY_LINK_DISTANCE)
        with pytest.raises(ValueError):
            Cluster((), OrderingMethod.BY_LINK_DISTANCE)


class TestEligibility:
    real = NetworkRealization.from_points([(1.0, 0.0)])  # rho = 1

    def test_in_disk_half_rho_filter(self):
        strat = InDiskHalfRho()
        flags = [eligible(strat, user(r), self.real) for r in (0.3, 0.6, 0.45)]
        assert flags == [True, False, True]

    def test_fixed_disk_filter(self):
        strat = FixedDisk(radius=0.4)
        flags = [eligible(strat, user(r), self.real) for r in (0.3, 0.6, 0.45)]
        assert flags == [True, False, False]


class TestClusterFromPool:
    real = NetworkRealization.from_points([(1.0, 0.0)])

    def test_in_disk_half_rho_pair(self):
        pool = [user(0.3), user(0.6), user(0.45)]
        c = cluster_from_pool(InDiskHalfRho(), pool, self.real, 2)
        assert [u.link_distance for u in c.users] == [0.3, 0.45]

    def test_fixed_disk_selection_failure(self):
        pool = [user(0.3), user(0.6), user(0.45)]
        with pytest.raises(MaxAttemptsExceeded):
            cluster_from_pool(FixedDisk(radius=0.4), pool, self.real, 2)

    def test_sinr_threshold_pair(self):
        # reference SINRs (3.0, 0.5, 1.5) with T1=2, T2=1 -> pair (3.0, 0.5)
        pool = [user(0.2, gain=3.0, w=1.0), user(0.3, gain=0.5, w=1.0),
                user(0.25, gain=1.5, w=1.0)]
        c = cluster_from_pool(SinrThreshold(t1=2.0, t2=1.0), pool, self.real, 2)
        refs = [reference_sinr(u) for u in c.users]
        assert sorted(refs, reverse=True) == [3.0, 0.5]

    def test_sinr_threshold_failure(self):
        pool = [user(0.2, gain=1.5, w=1.0), user(0.3, gain=1.2, w=1.0)]
        with pytest.raises(MaxAttemptsExceeded):
            cluster_from_pool(SinrThreshold(t1=2.0, t2=1.0), pool, self.real, 2)

    def test_disk_annulus_pair(self):
        pool = [user(0.45), user(0.05), user(0.3)]
        c = cluster_from_pool(DiskAnnulus(r_disk=0.1, r_in=0.25, r_out=0.48),
                              pool, self.real, 2)
        assert [u.link_distance for u in c.users] == [0.05, 0.45]

    def test_controlled_disparity_not_poolable(self):
        with pytest.raises(ValueError):
            cluster_from_pool(ControlledDisparity(2.0), [user(0.1), user(0.2)],
                              self.real, 2)


class TestSelectCluster:
    def test_every_strategy_yields_in_cell_users(self):
        rng = np.random.default_rng(21)
        strategies = [RandomInCell(), InDiskHalfRho(), FixedDisk(radius=0.3),
                      DiskAnnulus(r_disk=0.15, r_in=0.2, r_out=0.4),
                      ControlledDisparity(disparity=1.5)]
        for _ in range(40):
            real = sample_realization(1.0, 10.0, rng)
            for strat in strategies:
                try:
                    c = select_cluster(strat, real, PARAMS, 2, rng)
                except MaxAttemptsExceeded:
                    continue
                for u in c.users:
                    assert in_cell(u.position, real)
                assert c.users[0].link_distance <= c.users[1].link_distance

    def test_in_disk_users_within_half_rho(self):
        rng = np.random.default_rng(22)
        for _ in range(50):
            real = sample_realization(1.0, 10.0, rng)
            c = select_cluster(InDiskHalfRho(), real, PARAMS, 2, rng)
            for u in c.users:
                assert u.link_distance < 0.5 * real.rho

    def test_sinr_threshold_bounds_hold(self):
        rng = np.random.default_rng(23)
        t1, t2 = 5.0, 3.0
        found = 0
        for _ in range(60):
            real = sample_realization(1.0, 10.0, rng)
            try:
                c = select_cluster(SinrThreshold(t1=t1, t2=t2), real, PARAMS, 2,
                                   rng, max_attempts=50)
            except MaxAttemptsExceeded:
                continue
            refs = sorted((reference_sinr(u) for u in c.users), reverse=True)
            assert refs[0] >= t1 >= t2 >= refs[1]
            found += 1
        assert found > 10

    def test_controlled_disparity_matches_placement_geometry(self):
        rng = np.random.default_rng(24)
        real = sample_realization(1.0, 10.0, rng)
        c = select_cluster(ControlledDisparity(disparity=1.8), real, PARAMS, 2, rng)
        assert c.users[0].link_distance == pytest.approx(real.rho / 4, abs=1e-12)
        assert c.users[1].link_distance == pytest.approx(1.8 * real.rho / 4, abs=1e-9)

    def test_two_user_only_strategies_reject_larger_n(self):
        rng = np.random.default_rng(25)
        real = sample_realization(1.0, 10.0, rng)
        for strat in (DiskAnnulus(r_disk=0.1, r_in=0.2, r_out=0.4),
                      SinrThreshold(t1=2.0, t2=1.0),
                      ControlledDisparity(1.5)):
            with pytest.raises(ValueError):
                select_cluster(strat, real, PARAMS, 3, rng)

    def test_random_in_cell_supports_larger_clusters(self):
        rng = np.random.default_rng(26)
        real = sample_realization(1.0, 10.0, rng)
        c = select_cluster(RandomInCell(), real, PARAMS, 4, rng)
        assert len(c.users) == 4
        distances = [u.link_distance for u in c.users]
        assert distances == sorted(distances)

    def test_fixed_disk_logs_rejections(self, caplog):
        # disk radius beyond rho/2 forces out-of-cell rejections eventually
        rng = np.random.default_rng(27)
        real = NetworkRealization.from_points([(0.4, 0.0)], window_radius=5.0)
        with caplog.at_level(logging.DEBUG, logger="nomasim.clustering"):
            for _ in range(20):
                try:
                    select_cluster(FixedDisk(radius=1.0), real, PARAMS, 2, rng)
                except MaxAttemptsExceeded:
                    pass
        assert any("rejected" in rec.message for rec in caplog.records)

    def test_strategy_parameter_validation(self):
        with pytest.raises(ValueError):
            FixedDisk(radius=0.0)
        with pytest.raises(ValueError):
            SinrThreshold(t1=1.0, t2=2.0)
        with pytest.raises(ValueError):
            DiskAnnulus(r_disk=0.2, r_in=0.5, r_out=0.4)
        with pytest.raises(ValueError):
            ControlledDisparity(0.5)
