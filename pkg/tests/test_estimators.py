import numpy as np
import pytest

from odflow import (
    InfeasibleError,
    UnboundedError,
    WeightMatrix,
    build_dynamic_system,
    build_static_incidence,
    decode_allocation,
    estimate_l1,
    estimate_l1_noisy,
    estimate_l2,
    estimate_l2_noisy,
    estimate_weighted_l1,
    reweighted_l1,
    vmt_bounds,
)
from odflow.fixtures import (
    SIX_LINKS_A,
    SIX_LINKS_B,
    SUPPORT_4SPARSE,
)


def four_sparse_truth(f1=10.0, f2=20.0, f3=40.0):
    """The bundled 4-sparse demo allocation on the fig2 catalog."""
    x = np.zeros(14)
    x[1] = f1
    x[7] = f2
    x[10] = 0.25 * f3
    x[13] = 0.75 * f3
    return x


@pytest.fixture(scope="module")
def six_link_system(fig2):
    return build_static_incidence(fig2.table, SIX_LINKS_A, fig2.network)


class TestL1:
    def test_exact_recovery_from_six_counts(self, six_link_system):
        rng = np.random.default_rng(42)
        for _ in range(20):
            x = four_sparse_truth(*rng.uniform(1.0, 100.0, size=3))
            y = six_link_system.matrix @ x
            res = estimate_l1(six_link_system, y)
            rel = np.linalg.norm(res.allocation.x - x) / np.linalg.norm(x)
            assert rel <= 1e-6

    def test_decoded_flows_and_splits(self, six_link_system, fig2):
        x = four_sparse_truth()
        res = estimate_l1(six_link_system, six_link_system.matrix @ x)
        assert res.od_flows == pytest.approx((10.0, 20.0, 40.0), abs=1e-8)
        assert res.splits[10] == pytest.approx(0.25, abs=1e-9)
        assert res.splits[13] == pytest.approx(0.75, abs=1e-9)
        decoded = decode_allocation(res.allocation.per_path_totals(), fig2.table)
        assert decoded.od_flows == pytest.approx(res.od_flows)

    def test_zero_counts_give_zero(self, six_link_system):
        res = estimate_l1(six_link_system, np.zeros(6))
        assert np.max(res.allocation.x) == 0.0
        assert res.od_flows == (0.0, 0.0, 0.0)

    def test_one_sparse_single_link(self, fig2):
        # one measured link on the true path: the l1 argmin puts all mass
        # on a single crossing column, at the oracle's objective
        from odflow import StandardLP, lp_oracle

        ms = build_static_incidence(fig2.table, ["l4-2"], fig2.network)
        y = np.array([5.0])
        res = estimate_l1(ms, y)
        oracle = lp_oracle(StandardLP(c=np.ones(14), A=ms.matrix, b=y))
        assert res.objective == pytest.approx(oracle.objective, abs=1e-9)
        assert res.objective == pytest.approx(5.0, abs=1e-9)
        assert res.allocation.sparsity() == 1

    def test_infeasible_counts_raise(self, fig2):
        # l1-3 lies only on the path that also crosses l3-2
        ms = build_static_incidence(fig2.table, ["l1-3", "l3-2"], fig2.network)
        with pytest.raises(InfeasibleError):
            estimate_l1(ms, np.array([5.0, 0.0]))

    def test_negative_counts_rejected(self, six_link_system):
        with pytest.raises(ValueError):
            estimate_l1(six_link_system, -np.ones(6))

    def test_length_mismatch_rejected(self, six_link_system):
        with pytest.raises(ValueError):
            estimate_l1(six_link_system, np.ones(5))

    def test_objective_no_larger_than_truth(self, six_link_system):
        rng = np.random.default_rng(3)
        for _ in range(10):
            x = four_sparse_truth(*rng.uniform(1.0, 100.0, size=3))
            res = estimate_l1(six_link_system, six_link_system.matrix @ x)
            assert res.objective <= x.sum() + 1e-9


class TestL2:
    def test_dense_failure_on_six_counts(self, six_link_system):
        x = four_sparse_truth()
        res = estimate_l2(six_link_system, six_link_system.matrix @ x)
        rel = np.linalg.norm(res.allocation.x - x) / np.linalg.norm(x)
        assert rel > 0.1
        assert res.allocation.sparsity() > 4

    def test_zero_counts(self, six_link_system):
        res = estimate_l2(six_link_system, np.zeros(6))
        assert np.max(res.allocation.x) <= 1e-8


class TestNoisy:
    def test_delta_zero_matches_noiseless(self, six_link_system):
        x = four_sparse_truth()
        y = six_link_system.matrix @ x
        exact = estimate_l1(six_link_system, y)
        noisy = estimate_l1_noisy(six_link_system, y, 0.0)
        assert noisy.objective == pytest.approx(exact.objective, abs=1e-6)
        assert np.allclose(noisy.allocation.x, exact.allocation.x, atol=1e-5)

    def test_l2_delta_zero_matches_noiseless(self, six_link_system):
        x = four_sparse_truth()
        y = six_link_system.matrix @ x
        a = estimate_l2(six_link_system, y)
        b = estimate_l2_noisy(six_link_system, y, 0.0)
        assert np.allclose(a.allocation.x, b.allocation.x, atol=1e-5)

    def test_huge_delta_gives_zero(self, six_link_system):
        x = four_sparse_truth()
        y = six_link_system.matrix @ x
        delta = float(np.linalg.norm(y)) * 1.01
        for estimator in (estimate_l1_noisy, estimate_l2_noisy):
            res = estimator(six_link_system, y, delta)
            assert np.max(res.allocation.x) <= 1e-6

    def test_objective_nonincreasing_in_delta(self, six_link_system):
        x = four_sparse_truth()
        y = six_link_system.matrix @ x
        objectives = [
            estimate_l1_noisy(six_link_system, y, d).objective
            for d in (1e-1, 1e-3, 1e-6)
        ]
        # smaller delta means a tighter ball, so the optimum cannot improve
        assert objectives[0] <= objectives[1] + 1e-6
        assert objectives[1] <= objectives[2] + 1e-6
        noiseless = estimate_l1(six_link_system, y).objective
        assert objectives[2] == pytest.approx(noiseless, rel=1e-4)

    def test_negative_delta_rejected(self, six_link_system):
        with pytest.raises(ValueError):
            estimate_l1_noisy(six_link_system, np.ones(6), -1.0)


class TestWeighted:
    def test_unit_weights_match_plain(self, six_link_system):
        x = four_sparse_truth()
        y = six_link_system.matrix @ x
        plain = estimate_l1(six_link_system, y)
        weighted = estimate_weighted_l1(
            six_link_system, y, WeightMatrix(np.ones(14))
        )
        assert np.allclose(plain.allocation.x, weighted.allocation.x, atol=1e-9)

    def test_weight_scaling_leaves_argmin(self, six_link_system):
        x = four_sparse_truth()
        y = six_link_system.matrix @ x
        lam = np.linspace(0.5, 2.0, 14)
        a = estimate_weighted_l1(six_link_system, y, WeightMatrix(lam))
        b = estimate_weighted_l1(six_link_system, y, WeightMatrix(7.5 * lam))
        assert np.allclose(a.allocation.x, b.allocation.x, atol=1e-9)
        assert b.objective == pytest.approx(7.5 * a.objective, rel=1e-9)

    def test_support_weights_break_degeneracy(self, fig2):
        """On the alternate six-link set the plain program is ambiguous:
        paths 1, 2 and 6 cross only l3-2 among the measured links, so any
        split of the first OD flow among them is optimal.  Small weights on
        the true support make the truth the unique optimum."""
        ms = build_static_incidence(fig2.table, SIX_LINKS_B, fig2.network)
        x = four_sparse_truth()
        y = ms.matrix @ x

        x_alt = x.copy()
        x_alt[2] = x_alt[1]
        x_alt[1] = 0.0
        assert np.allclose(ms.matrix @ x_alt, y)
        plain = estimate_l1(ms, y)
        assert x_alt.sum() == pytest.approx(plain.objective, abs=1e-9)

        lam = np.ones(14)
        lam[list(SUPPORT_4SPARSE)] = 0.1
        weighted = estimate_weighted_l1(ms, y, WeightMatrix(lam))
        rel = np.linalg.norm(weighted.allocation.x - x) / np.linalg.norm(x)
        assert rel <= 1e-6
        # the alternative optimum of the plain program costs strictly more
        # under the support weights
        assert float(lam @ x_alt) > weighted.objective + 1e-9

    def test_wrong_length_rejected(self, six_link_system):
        with pytest.raises(ValueError):
            estimate_weighted_l1(
                six_link_system, np.ones(6), WeightMatrix(np.ones(5))
            )

    def test_nonpositive_weights_rejected(self):
        with pytest.raises(ValueError):
            WeightMatrix(np.array([1.0, -1.0]))


class TestReweighted:
    def test_single_round_equals_plain(self, six_link_system):
        x = four_sparse_truth()
        y = six_link_system.matrix @ x
        plain = estimate_l1(six_link_system, y)
        rew = reweighted_l1(six_link_system, y, iters=1)
        assert np.allclose(plain.allocation.x, rew.allocation.x, atol=1e-12)
        assert len(rew.objective_trace) == 1

    def test_recovered_instance_is_fixed_point(self, six_link_system):
        x = four_sparse_truth()
        y = six_link_system.matrix @ x
        rew = reweighted_l1(six_link_system, y, iters=4)
        assert np.linalg.norm(rew.allocation.x - x) <= 1e-6 * np.linalg.norm(x)
        assert len(rew.objective_trace) == 4
        assert max(rew.objective_trace) - min(rew.objective_trace) <= 1e-6

    def test_rate_at_least_plain_over_random_trials(self, fig2):
        ms = build_static_incidence(fig2.table, SIX_LINKS_B, fig2.network)
        rng = np.random.default_rng(17)
        plain_hits = rew_hits = 0
        for _ in range(200):
            support = sorted(rng.choice(14, size=4, replace=False))
            x = np.zeros(14)
            for k, group in enumerate(fig2.table.paths_by_od):
                chosen = [n for n in group if n in support]
                if not chosen:
                    continue
                flow = rng.uniform(1.0, 100.0)
                split = rng.dirichlet(np.ones(len(chosen)))
                for n, w in zip(chosen, split):
                    x[n] = flow * w
            y = ms.matrix @ x
            nrm = np.linalg.norm(x)
            if nrm == 0:
                continue
            plain = estimate_l1(ms, y)
            rew = reweighted_l1(ms, y, iters=4)
            plain_hits += np.linalg.norm(plain.allocation.x - x) <= 1e-6 * nrm
            rew_hits += np.linalg.norm(rew.allocation.x - x) <= 1e-6 * nrm
        assert rew_hits >= plain_hits

    def test_bad_iters_rejected(self, six_link_system):
        with pytest.raises(ValueError):
            reweighted_l1(six_link_system, np.ones(6), iters=0)


class TestVmtBounds:
    def test_unit_lengths_bound_vehicle_count(self, fig1):
        # truth on the single-link path l3-1 with every link measured pins
        # the feasible set to a point
        measured = [l.id for l in fig1.network.links]
        ms = build_static_incidence(fig1.table, measured, fig1.network)
        x = np.zeros(7)
        x[5] = 7.0
        y = ms.matrix @ x
        bounds = vmt_bounds(ms, y, np.ones(7))
        assert bounds.vmt_lower == pytest.approx(7.0, abs=1e-3)
        assert bounds.vmt_upper == pytest.approx(7.0, abs=1e-3)

    def test_sandwich_on_random_instances(self, fig2):
        rng = np.random.default_rng(21)
        lengths = np.array([
            sum(fig2.network.link_by_id[lid].length for lid in p.links)
            for p in fig2.table.paths
        ])
        link_ids = [l.id for l in fig2.network.links]
        for _ in range(50):
            x = np.where(rng.random(14) < 0.3, rng.uniform(0, 50, 14), 0.0)
            m = int(rng.integers(4, 11))
            measured = [link_ids[i] for i in sorted(rng.permutation(10)[:m])]
            ms = build_static_incidence(fig2.table, measured, fig2.network)
            y = ms.matrix @ x
            true_value = float(lengths @ x)
            try:
                bounds = vmt_bounds(ms, y, lengths)
            except UnboundedError:
                continue
            assert bounds.vmt_lower <= true_value + 1e-6
            assert bounds.vmt_upper >= true_value - 1e-6

    def test_unbounded_reported_with_path(self, fig2):
        # l1-3 and l4-3 leave the two-link path l3-4 -> l4-2 unobserved
        ms = build_static_incidence(fig2.table, ["l1-3", "l4-3"], fig2.network)
        y = np.zeros(2)
        with pytest.raises(UnboundedError) as exc:
            vmt_bounds(ms, y, np.ones(14))
        assert exc.value.path_label is not None

    def test_bad_lengths_rejected(self, six_link_system):
        with pytest.raises(ValueError):
            vmt_bounds(six_link_system, np.zeros(6), np.ones(5))
        with pytest.raises(ValueError):
            vmt_bounds(six_link_system, np.zeros(6), -np.ones(14))


class TestDynamicEstimation:
    def test_recovery_on_time_expanded_system(self, fig1):
        measured = [l.id for l in fig1.network.links]
        ms = build_dynamic_system(fig1.table, fig1.network, measured, [0, 1])
        x = np.zeros(ms.n_cols)
        # one vehicle burst on the two-link path at departure 0
        j = ms.col_labels.index((1, 0))
        x[j] = 9.0
        y = ms.matrix @ x
        res = estimate_l1(ms, y)
        assert np.linalg.norm(res.allocation.x - x) <= 1e-6 * np.linalg.norm(x)
        # decoded flows aggregate departures per path
        assert res.od_flows[1] == pytest.approx(9.0, abs=1e-8)
