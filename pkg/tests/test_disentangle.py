import numpy as np
import pytest

from ksync.core import AngleGroups, MeasurementGraph, TWO_PI, load_graph, save_graph, wrap_angle
from ksync.disentangle import (
    DisentangleConfig,
    assign_edges,
    bad_subgraph,
    classification_errors,
    default_bad_fractions,
    good_subgraph,
    iterate_disentangle,
    residual_matrices,
)
from ksync.genmodel import MixtureParams, child_seed, sample_angles, sample_er_mixture, substream
from ksync.sync import estimate_from_angles, spectral_ksync


def mixture(n, p, lam, seed, k=None):
    k = k if k is not None else len(p)
    groups = sample_angles(n, k, child_seed(seed, 1))
    params = MixtureParams(n=n, k=k, lam=lam, p=p, seed=child_seed(seed, 2))
    return groups, sample_er_mixture(params, groups)


class TestResidualMatrices:
    def test_zero_residual_on_exact_edges(self):
        groups, g = mixture(50, (1.0,), 1.0, 4)
        psi = residual_matrices(g, groups.theta)
        assert psi.shape == (1, g.m)
        assert np.max(psi) <= 1e-10

    def test_wrap_around(self):
        # measured 0.1, predicted offset (2*pi - 0.1): circular distance 0.2
        g = MeasurementGraph(n=2, ii=[0], jj=[1], theta=[0.1])
        theta_hat = np.array([[0.0, 0.1]])
        psi = residual_matrices(g, theta_hat)
        assert psi[0, 0] == pytest.approx(0.2, abs=1e-12)

    def test_uniform_distribution_for_independent_angles(self):
        rng = substream(40)
        m = 10_000
        n = 200
        ii = rng.integers(0, n - 1, m)
        jj = ii + 1 + rng.integers(0, n - 1 - ii)
        keys = np.unique(ii * n + jj)
        ii, jj = keys // n, keys % n
        g = MeasurementGraph(n=n, ii=ii, jj=jj, theta=wrap_angle(TWO_PI * rng.random(ii.size)))
        theta_hat = wrap_angle(TWO_PI * rng.random((1, n)))
        psi = residual_matrices(g, theta_hat)
        assert psi.mean() == pytest.approx(np.pi / 2, abs=0.05)


class TestAssignEdges:
    def test_single_group(self):
        groups, g = mixture(30, (0.8,), 1.0, 5)
        psi = residual_matrices(g, groups.theta)
        assignment, gamma = assign_edges(psi)
        assert np.all(assignment == 0)
        assert np.array_equal(gamma, psi[0])

    def test_tie_goes_to_lowest_group(self):
        psi = np.array([[0.3], [0.3]])
        assignment, gamma = assign_edges(psi)
        assert assignment[0] == 0
        assert gamma[0] == 0.3

    def test_exact_angles_recover_labels(self):
        groups, g = mixture(60, (0.5, 0.4), 1.0, 6)
        psi = residual_matrices(g, groups.theta)
        assignment, _ = assign_edges(psi)
        good_edges = g.labels > 0
        assert np.array_equal(assignment[good_edges] + 1, g.labels[good_edges])

    def test_gamma_reconstruction_identity(self):
        groups, g = mixture(40, (0.4, 0.3), 0.9, 7)
        psi = residual_matrices(g, wrap_angle(groups.theta + 0.3))
        assignment, gamma = assign_edges(psi)
        rebuilt = np.zeros(g.m)
        for l in range(2):
            psi_tilde = np.where(assignment == l, gamma, 0.0)
            rebuilt += psi_tilde
        assert np.array_equal(rebuilt, gamma)


class TestBadFractions:
    def test_model_consistent_default(self):
        # eta = 0.5 split evenly: group share (0.25) over (p_l + 0.25)
        fr = default_bad_fractions((0.3, 0.2))
        assert fr[0] == pytest.approx(0.25 / 0.55)
        assert fr[1] == pytest.approx(0.25 / 0.45)

    def test_zero_eta(self):
        assert default_bad_fractions((0.6, 0.4)) == pytest.approx((0.0, 0.0))

    def test_missing_labels_and_fractions_rejected(self):
        groups, g = mixture(30, (0.6, 0.3), 1.0, 8)
        unlabeled = MeasurementGraph(n=g.n, ii=g.ii, jj=g.jj, theta=g.theta)
        cfg = DisentangleConfig(k=2, iterations=1)
        with pytest.raises(ValueError, match="bad_fractions"):
            iterate_disentangle(unlabeled, cfg, estimate_from_angles(groups))


class TestIterateDisentangle:
    def test_noiseless_exact_classification_from_exact_start(self):
        groups, g = mixture(100, (0.55, 0.45), 1.0, 9)
        cfg = DisentangleConfig(k=2, iterations=1)
        states = iterate_disentangle(g, cfg, estimate_from_angles(groups), truth=groups)
        errs = classification_errors(g, states[-1])
        assert errs["total_misclassified"] == 0
        assert np.allclose(states[-1].matched_corr, 1.0, atol=1e-9)

    def test_noiseless_spectral_start_reaches_exactness(self):
        groups, g = mixture(100, (0.55, 0.45), 1.0, 9)
        cfg = DisentangleConfig(k=2, iterations=20)
        states = iterate_disentangle(g, cfg, spectral_ksync(g, 2), truth=groups)
        assert classification_errors(g, states[-1])["total_misclassified"] == 0

    def test_partition_invariant(self):
        groups, g = mixture(120, (0.4, 0.3), 0.8, 10)
        cfg = DisentangleConfig(k=2, iterations=3)
        states = iterate_disentangle(g, cfg, spectral_ksync(g, 2))
        for st in states:
            sizes = [good_subgraph(g, st, l).m for l in range(2)]
            assert sum(sizes) + bad_subgraph(g, st).m == g.m
            # assigned good sets are disjoint by construction of assignment
            masks = [(st.assignment == l) & st.good for l in range(2)]
            assert not np.any(masks[0] & masks[1])

    def test_reference_misclassification_rate(self):
        # frozen reference: n=100, p=(0.45, 0.35), eta=0.2, complete graph,
        # 20 rounds from a spectral start stays under 10% of |E|
        rates = []
        for seed in range(5):
            groups = sample_angles(100, 2, child_seed(42, seed, 1))
            params = MixtureParams(n=100, k=2, lam=1.0, p=(0.45, 0.35),
                                   seed=child_seed(42, seed, 2))
            g = sample_er_mixture(params, groups)
            cfg = DisentangleConfig(k=2, iterations=20, seed=seed)
            states = iterate_disentangle(g, cfg, spectral_ksync(g, 2), truth=groups)
            rates.append(classification_errors(g, states[-1])["total_misclassified"] / g.m)
        assert max(rates) < 0.10

    def test_residual_shrinkage_and_history(self):
        groups, g = mixture(200, (0.35, 0.25), 0.6, 11)
        cfg = DisentangleConfig(k=2, iterations=10)
        states = iterate_disentangle(g, cfg, spectral_ksync(g, 2), truth=groups)
        assert states[-1].gamma_median_good <= states[0].gamma_median_good
        assert len(states[-1].history) == 10
        assert states[-1].history[0] == states[0].matched_corr

    def test_deterministic(self):
        groups, g = mixture(80, (0.4, 0.3), 0.9, 12)
        cfg = DisentangleConfig(k=2, iterations=4)
        a = iterate_disentangle(g, cfg, spectral_ksync(g, 2))
        b = iterate_disentangle(g, cfg, spectral_ksync(g, 2))
        assert np.array_equal(a[-1].assignment, b[-1].assignment)
        assert np.array_equal(a[-1].good, b[-1].good)
        assert np.array_equal(a[-1].theta_hat, b[-1].theta_hat)

    def test_disconnected_group_flagged(self):
        # two separate triangles carry group-1 edges; group 2 gets one edge
        edges = [(0, 1, 0.0), (1, 2, 0.0), (0, 2, 0.0),
                 (3, 4, 0.0), (4, 5, 0.0), (3, 5, 0.0)]
        g = MeasurementGraph.from_edges(6, edges, labels=[1] * 6)
        theta = np.zeros((1, 6))
        cfg = DisentangleConfig(k=1, iterations=1, bad_fractions=(0.0,))
        states = iterate_disentangle(g, cfg, estimate_from_angles(AngleGroups(theta=theta)))
        assert states[-1].disconnected == (True,)

    def test_literal_noise_rule_discards_more(self):
        groups, g = mixture(100, (0.45, 0.35), 1.0, 13)
        exact = estimate_from_angles(groups)
        model = iterate_disentangle(g, DisentangleConfig(k=2, iterations=1), exact)
        literal = iterate_disentangle(
            g, DisentangleConfig(k=2, iterations=1, literal_noise_rule=True), exact
        )
        assert (~literal[-1].good).sum() > (~model[-1].good).sum()


class TestSubgraphEmission:
    def test_good_and_bad_subgraphs_round_trip(self, tmp_path):
        groups, g = mixture(60, (0.4, 0.3), 0.9, 14)
        cfg = DisentangleConfig(k=2, iterations=2)
        states = iterate_disentangle(g, cfg, spectral_ksync(g, 2))
        final = states[-1]
        for l in range(2):
            sub = good_subgraph(g, final, l)
            assert sub.labels is not None and np.all(sub.labels == l + 1)
            path = tmp_path / f"g{l}.graph"
            save_graph(sub, path, k=2)
            loaded, k = load_graph(path)
            assert k == 2 and loaded.m == sub.m
        bad = bad_subgraph(g, final)
        assert bad.labels is not None and (bad.m == 0 or np.all(bad.labels == 0))
