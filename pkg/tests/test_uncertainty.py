"""Ensemble reduction tests: posterior mean, population variance, summaries."""

import numpy as np
import pytest

from fairmtl import nn, uncertainty
from fairmtl.errors import ContractError


def small_dropout_net(rate=0.5, seed=3):
    return nn.init_network(
        [4, 16, 8, 1],
        ["relu", "relu", "sigmoid"],
        dropout=nn.DropoutSpec(rate=rate, placement=(0, 1), seed=seed),
        seed=1,
    )


class TestPosteriorStats:
    def test_worked_fixture(self):
        p, c = uncertainty.posterior_stats(np.array([[0.2, 0.4, 0.6]]))
        assert p[0] == pytest.approx(0.4, abs=1e-9)
        assert c[0] == pytest.approx(0.08 / 3.0, abs=1e-9)

    def test_single_pass_zero_uncertainty(self):
        p, c = uncertainty.posterior_stats(np.array([[0.7], [0.2]]))
        np.testing.assert_array_equal(p, [0.7, 0.2])
        np.testing.assert_array_equal(c, [0.0, 0.0])

    def test_constant_rows_exactly_zero(self):
        vals = np.array([1 / 3, 0.1, 0.9999999, 5e-324])
        outputs = np.tile(vals[:, None], (1, 7))
        p, c = uncertainty.posterior_stats(outputs)
        np.testing.assert_array_equal(p, vals)
        np.testing.assert_array_equal(c, np.zeros(4))

    def test_matches_two_pass_textbook_variance(self):
        rng = np.random.default_rng(0)
        outputs = rng.uniform(0.01, 0.99, size=(50, 33))
        p, c = uncertainty.posterior_stats(outputs)
        # Independent oracle: explicit two-pass population variance.
        mean_ref = outputs.sum(axis=1) / outputs.shape[1]
        var_ref = ((outputs - mean_ref[:, None]) ** 2).sum(axis=1) / outputs.shape[1]
        np.testing.assert_allclose(p, mean_ref, atol=1e-12)
        np.testing.assert_allclose(c, var_ref, atol=1e-12)

    def test_permutation_invariant_bitwise(self):
        rng = np.random.default_rng(5)
        outputs = rng.uniform(size=(20, 11))
        p1, c1 = uncertainty.posterior_stats(outputs)
        perm = rng.permutation(11)
        p2, c2 = uncertainty.posterior_stats(outputs[:, perm])
        np.testing.assert_array_equal(p1, p2)
        np.testing.assert_array_equal(c1, c2)

    def test_uncertainty_nonnegative(self):
        rng = np.random.default_rng(9)
        outputs = rng.uniform(size=(100, 5))
        _, c = uncertainty.posterior_stats(outputs)
        assert (c >= 0).all()


class TestMcPredict:
    def test_rate_zero_uncertainty_exactly_zero(self):
        net = small_dropout_net(rate=0.0)
        rng = np.random.default_rng(2)
        X = rng.normal(size=(30, 4))
        res = uncertainty.mc_predict(net, X, passes=12, seed=0)
        np.testing.assert_array_equal(res.uncertainty, np.zeros(30))
        np.testing.assert_array_equal(res.posterior_mean, nn.predict(net, X))

    def test_single_pass(self):
        net = small_dropout_net()
        rng = np.random.default_rng(4)
        X = rng.normal(size=(5, 4))
        res = uncertainty.mc_predict(net, X, passes=1, seed=7)
        np.testing.assert_array_equal(res.uncertainty, np.zeros(5))
        np.testing.assert_array_equal(res.posterior_mean, res.per_sample_outputs[:, 0])

    def test_zero_passes_rejected(self):
        net = small_dropout_net()
        with pytest.raises(ContractError):
            uncertainty.mc_predict(net, np.zeros((1, 4)), passes=0)

    def test_posterior_mean_is_row_mean(self):
        net = small_dropout_net()
        rng = np.random.default_rng(6)
        X = rng.normal(size=(12, 4))
        res = uncertainty.mc_predict(net, X, passes=25, seed=1)
        np.testing.assert_allclose(res.posterior_mean, res.per_sample_outputs.mean(axis=1),
                                   atol=1e-14)

    def test_deterministic_given_seed(self):
        net = small_dropout_net()
        rng = np.random.default_rng(8)
        X = rng.normal(size=(9, 4))
        a = uncertainty.mc_predict(net, X, passes=10, seed=5)
        b = uncertainty.mc_predict(net, X, passes=10, seed=5)
        np.testing.assert_array_equal(a.per_sample_outputs, b.per_sample_outputs)
        c = uncertainty.mc_predict(net, X, passes=10, seed=6)
        assert not np.array_equal(a.per_sample_outputs, c.per_sample_outputs)

    def test_estimate_converges_as_passes_double(self):
        # Median |p_T - p_2T| over samples shrinks as T grows.
        net = small_dropout_net(rate=0.4)
        rng = np.random.default_rng(10)
        X = rng.normal(size=(40, 4))
        gaps = []
        for t in (10, 100, 1000):
            meds = []
            for seed in range(3):
                p_t = uncertainty.mc_predict(net, X, passes=t, seed=seed).posterior_mean
                p_2t = uncertainty.mc_predict(net, X, passes=2 * t, seed=seed).posterior_mean
                meds.append(np.median(np.abs(p_t - p_2t)))
            gaps.append(np.mean(meds))
        assert gaps[0] > gaps[1] > gaps[2]


class TestSummary:
    def test_all_zero(self):
        res = uncertainty.McEnsembleResult(
            per_sample_outputs=np.full((3, 4), 0.5),
            posterior_mean=np.full(3, 0.5),
            uncertainty=np.zeros(3),
            passes=4,
        )
        s = uncertainty.uncertainty_summary(res)
        assert s.mean == 0.0
        assert s.max == 0.0

    def test_mean_and_max(self):
        res = uncertainty.McEnsembleResult(
            per_sample_outputs=np.zeros((2, 1)),
            posterior_mean=np.zeros(2),
            uncertainty=np.array([0.01, 0.03]),
            passes=1,
        )
        s = uncertainty.uncertainty_summary(res)
        assert s.mean == pytest.approx(0.02)
        assert s.max == pytest.approx(0.03)

    def test_histogram_counts_conserved(self):
        rng = np.random.default_rng(1)
        c = rng.uniform(0, 0.2, size=137)
        res = uncertainty.McEnsembleResult(
            per_sample_outputs=np.zeros((137, 1)),
            posterior_mean=np.zeros(137),
            uncertainty=c,
            passes=1,
        )
        s = uncertainty.uncertainty_summary(res, bins=8)
        assert s.bin_counts.sum() == 137


class TestExport:
    def test_csv_round_numbers(self, tmp_path):
        res = uncertainty.McEnsembleResult(
            per_sample_outputs=np.array([[0.25, 0.75]]),
            posterior_mean=np.array([0.5]),
            uncertainty=np.array([0.0625]),
            passes=2,
        )
        path = tmp_path / "mc.csv"
        uncertainty.ensemble_to_csv(res, path, verbose=True)
        lines = path.read_text().strip().splitlines()
        assert lines[0] == "sample_id,p,c,pass_0,pass_1"
        assert lines[1] == "0,0.5,0.0625,0.25,0.75"
