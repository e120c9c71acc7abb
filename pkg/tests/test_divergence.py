"""Closed-form Renyi bound and the pairwise engine."""

import io
import math

import mpmath
import numpy as np
import pytest
from scipy import integrate

from src.divergence import (
    PRIOR_ID,
    Infeasible,
    PairResult,
    PairsMode,
    RenyiTerms,
    TooFewExamplesError,
    load_report,
    pairwise_report,
    renyi_bound,
    sigma_prime,
    summarize,
    write_report,
)
from src.posterior import DpPosterior, InvalidDatasetError, dumps_dataset, loads_dataset, prior_as_posterior

from conftest import random_posterior

mpmath.mp.dps = 50


def _single(mu, sigma, alpha):
    return DpPosterior(means=[[mu]], stds=[[sigma]], alphas=[alpha])


def _gaussian_divergence_by_quadrature(mu_p, sigma_p, mu_q, sigma_q, lam):
    """(1 / (lam - 1)) ln of the integral of p^lam q^(1 - lam)."""

    def log_pdf(x, mu, sigma):
        return -0.5 * ((x - mu) / sigma) ** 2 - math.log(sigma) - 0.5 * math.log(2.0 * math.pi)

    def integrand(x):
        return math.exp(lam * log_pdf(x, mu_p, sigma_p) + (1.0 - lam) * log_pdf(x, mu_q, sigma_q))

    center = 0.5 * (mu_p + mu_q)
    width = 40.0 * max(sigma_p, sigma_q) + abs(mu_p - mu_q)
    value, _ = integrate.quad(
        integrand, center - width, center + width, points=[mu_p, mu_q], epsabs=0.0, epsrel=1e-12, limit=400
    )

    return math.log(value) / (lam - 1.0)


class TestIdentity:
    """A posterior has zero divergence from itself."""

    @pytest.mark.parametrize("lam", [1.1, 2.0, 5.0])
    def test_self_divergence_is_zero(self, lam):
        rng = np.random.default_rng(int(lam * 10))

        for _ in range(1000):
            q = random_posterior(rng, n_components=int(rng.integers(1, 5)), dim=int(rng.integers(1, 4)))
            terms = renyi_bound(q, q, lam)

            assert isinstance(terms, RenyiTerms)
            assert abs(terms.total) < 1e-10


class TestGaussianGroup:
    """Gaussian group against numerical integration of the order-lam divergence."""

    def test_matches_quadrature(self):
        rng = np.random.default_rng(3)

        for _ in range(100):
            lam = float(rng.choice([1.1, 1.5, 2.0, 3.0]))
            sigma_q = float(rng.uniform(0.5, 1.5))
            sigma_qp = float(rng.uniform(0.4, 1.0)) * sigma_q
            mu_q, mu_qp = rng.normal(0.0, 1.0, size=2)
            alpha = float(rng.uniform(0.2, 2.0))

            terms = renyi_bound(_single(mu_q, sigma_q, alpha), _single(mu_qp, sigma_qp, alpha), lam)
            expected = _gaussian_divergence_by_quadrature(mu_qp, sigma_qp, mu_q, sigma_q, lam)

            assert terms.gaussian == pytest.approx(expected, rel=1e-6, abs=1e-10)
            assert abs(terms.global_alpha) < 1e-12
            assert abs(terms.local_alpha) < 1e-12

    def test_grows_with_mean_distance(self):
        base = _single(0.0, 1.0, 0.5)
        values = [renyi_bound(_single(mu, 1.0, 0.5), base, 1.1).gaussian for mu in np.linspace(0.0, 3.0, 16)]

        assert values[0] == 0.0
        assert all(a < b for a, b in zip(values, values[1:]))


class TestGoldenValue:
    """(mu 0.5, sigma 1, alpha 0.8) against (mu 0, sigma 1, alpha 0.5) at lambda 1.1."""

    def test_groups_match_high_precision(self):
        lam = mpmath.mpf("1.1")
        inv = 1 / (lam - 1)
        ratio = lam / (lam - 1)
        arg = lam * mpmath.mpf("0.8") - (lam - 1) * mpmath.mpf("0.5")
        log_gamma_half = mpmath.loggamma(mpmath.mpf("0.5"))
        alpha_part = inv * mpmath.loggamma(arg) + log_gamma_half - ratio * mpmath.loggamma(mpmath.mpf("0.8"))
        gaussian = lam / 2 * mpmath.mpf("0.5") ** 2

        terms = renyi_bound(_single(0.5, 1.0, 0.8), _single(0.0, 1.0, 0.5), 1.1)

        assert terms.global_alpha == pytest.approx(float(-alpha_part), abs=1e-12)
        assert terms.local_alpha == pytest.approx(float(alpha_part), abs=1e-12)
        assert terms.gaussian == pytest.approx(float(gaussian), abs=1e-12)
        assert terms.total == pytest.approx(float(-alpha_part + alpha_part + gaussian), abs=1e-10)
        assert terms.total == pytest.approx(0.1375, abs=1e-10)


class TestFeasibility:
    def test_sigma_prime_value(self):
        np.testing.assert_allclose(sigma_prime([1.0, 2.0], [1.0, 1.0], 1.1), [1.0, math.sqrt(4.3)], rtol=1e-15)

    def test_sigma_prime_infeasible(self):
        result = sigma_prime([[1.0, 0.1]], [[1.0, 1.0]], 1.1)

        assert isinstance(result, Infeasible)
        assert result.term == "sigma_prime"
        assert result.component == 0
        assert result.dimension == 1
        assert result.value == pytest.approx(1.1 * 0.01 - 0.1)

    def test_small_std_against_prior_is_infeasible(self):
        floor = math.sqrt(0.1 / 1.1)
        q = _single(0.0, 0.9 * floor, 0.5)
        prior = _single(0.0, 1.0, 0.5)

        assert isinstance(renyi_bound(q, prior, 1.1), Infeasible)
        assert isinstance(renyi_bound(_single(0.0, 1.01 * floor, 0.5), prior, 1.1), RenyiTerms)

    def test_local_alpha_infeasible(self):
        q = DpPosterior(means=[[0.0], [0.0]], stds=[[1.0], [1.0]], alphas=[0.01, 2.0])
        qp = DpPosterior(means=[[0.0], [0.0]], stds=[[1.0], [1.0]], alphas=[1.0, 0.5])
        result = renyi_bound(q, qp, 1.1)

        assert isinstance(result, Infeasible)
        assert result.term == "local_alpha"
        assert result.component == 0

    def test_global_alpha_infeasible(self):
        result = renyi_bound(_single(0.0, 1.0, 0.01), _single(0.0, 1.0, 1.0), 1.1)

        assert isinstance(result, Infeasible)
        assert result.term == "global_alpha"

    def test_fuzz_never_returns_nan(self):
        rng = np.random.default_rng(11)
        feasible = 0

        for _ in range(100_000):
            q = random_posterior(rng, 2, 2, std_range=(0.01, 3.0), alpha_range=(0.001, 5.0))
            qp = random_posterior(rng, 2, 2, std_range=(0.01, 3.0), alpha_range=(0.001, 5.0))
            result = renyi_bound(q, qp, float(rng.uniform(1.01, 4.0)))

            if isinstance(result, RenyiTerms):
                assert math.isfinite(result.total)
                feasible += 1

        assert feasible > 100

    def test_rejects_order_one(self):
        with pytest.raises(ValueError):
            renyi_bound(_single(0.0, 1.0, 1.0), _single(0.0, 1.0, 1.0), 1.0)

    def test_rejects_shape_mismatch(self):
        two = DpPosterior(means=[[0.0], [0.0]], stds=[[1.0], [1.0]], alphas=[0.5, 0.5])

        with pytest.raises(ValueError):
            renyi_bound(_single(0.0, 1.0, 1.0), two, 1.1)


class TestPairwiseReport:
    def test_matches_naive_loop(self, make_dataset):
        ds = make_dataset(n_examples=6)
        report = pairwise_report(ds)

        expected = {}

        for id_q, q in ds.examples:
            for id_qp, qp in ds.examples:
                if id_q != id_qp:
                    expected[(id_q, id_qp)] = renyi_bound(q, qp, ds.lam).total

        assert len(report.pairs) == 30
        assert {(p.id_q, p.id_qp): p.divergence for p in report.pairs} == expected
        assert report.rd_max == max(expected.values())
        assert report.rd_avg == pytest.approx(math.fsum(expected.values()) / 30, rel=1e-15)

    def test_pairs_are_sorted(self, make_dataset):
        ds = make_dataset(n_examples=4)
        ds = ds.replace_examples(reversed(ds.examples))
        keys = [(p.id_q, p.id_qp) for p in pairwise_report(ds).pairs]

        assert keys == sorted(keys)

    def test_workers_do_not_change_the_result(self, make_dataset):
        ds = make_dataset(n_examples=8)

        assert pairwise_report(ds, workers=3).pairs == pairwise_report(ds, workers=1).pairs

    def test_max_is_order_free(self, make_dataset):
        ds = make_dataset(n_examples=6, seed=4)
        shuffled = ds.replace_examples([ds.examples[i] for i in (3, 0, 5, 1, 4, 2)])

        assert pairwise_report(ds).rd_max == pairwise_report(shuffled).rd_max

    def test_identical_examples(self, make_dataset):
        ds = make_dataset(n_examples=1)
        posterior = ds.examples[0].posterior
        ds = ds.replace_examples([(f"copy{i}", posterior) for i in range(4)])
        report = pairwise_report(ds)

        assert report.rd_max == pytest.approx(0.0, abs=1e-10)
        assert report.rd_avg == pytest.approx(0.0, abs=1e-10)

    def test_vs_prior(self, make_dataset):
        report = pairwise_report(make_dataset(n_examples=3), PairsMode.VS_PRIOR)

        assert [p.id_qp for p in report.pairs] == [PRIOR_ID] * 3
        assert report.mode == PairsMode.VS_PRIOR

    def test_shared_kappas_in_both_modes(self, make_dataset):
        ds = make_dataset(n_examples=3, n_components=2)
        ds = ds.replace_examples(
            (example_id, DpPosterior(p.means, p.stds, p.alphas, kappas=[2.0, 2.0])) for example_id, p in ds.examples
        )
        reference = prior_as_posterior(ds.prior, 2, np.array([2.0, 2.0]))
        expected = [renyi_bound(q, reference, ds.lam).total for _, q in ds.examples]

        all_pairs = pairwise_report(ds)
        vs_prior = pairwise_report(ds, PairsMode.VS_PRIOR)

        assert all_pairs.n_infeasible == 0
        assert len(all_pairs.pairs) == 6
        assert [p.divergence for p in vs_prior.pairs] == expected

    def test_mismatched_kappas_are_rejected(self, make_dataset):
        ds = make_dataset(n_examples=2, n_components=1)
        first, (second_id, p) = ds.examples
        ds = ds.replace_examples([first, (second_id, DpPosterior(p.means, p.stds, p.alphas, kappas=[2.0]))])

        with pytest.raises(InvalidDatasetError):
            pairwise_report(ds)

    def test_too_few_examples(self, make_dataset):
        with pytest.raises(TooFewExamplesError):
            pairwise_report(make_dataset(n_examples=1))

        with pytest.raises(TooFewExamplesError):
            pairwise_report(make_dataset(n_examples=0), PairsMode.VS_PRIOR)

    def test_invalid_dataset(self, make_dataset):
        with pytest.raises(InvalidDatasetError):
            pairwise_report(make_dataset().with_lambda(1.0))

    def test_infeasible_pairs_are_counted(self, make_dataset):
        ds = make_dataset(n_examples=3, std_range=(0.05, 0.06))
        wide = make_dataset(seed=9, n_examples=1, std_range=(2.0, 2.1)).examples[0].posterior
        ds = ds.replace_examples(list(ds.examples) + [("wide", wide)])
        report = pairwise_report(ds)

        assert report.n_infeasible > 0
        assert report.rd_max == math.inf
        assert all(p.id_q != "wide" or p.feasible for p in report.pairs)
        assert all(isinstance(p.reason, Infeasible) for p in report.infeasible_pairs())


class TestSummaryAndFiles:
    def test_summary_with_infeasible_pair(self):
        pairs = [
            PairResult("a", "b", 1.0, True),
            PairResult("b", "a", math.inf, False),
            PairResult("a", "c", 3.0, True),
        ]
        report = summarize(pairs, 1.1, PairsMode.VS_ALL_PAIRS)

        assert report.rd_max == math.inf
        assert report.rd_avg == 2.0
        assert report.n_infeasible == 1

    def test_empty_summary(self):
        report = summarize([], 1.1, PairsMode.VS_ALL_PAIRS)

        assert math.isnan(report.rd_max)
        assert math.isnan(report.rd_avg)

    def test_report_file_round_trip(self, make_dataset):
        report = pairwise_report(make_dataset(n_examples=4))
        buffer = io.StringIO()
        write_report(report, buffer)
        buffer.seek(0)
        loaded = load_report(buffer)

        assert [(p.id_q, p.id_qp, p.divergence) for p in loaded.pairs] == [
            (p.id_q, p.id_qp, p.divergence) for p in report.pairs
        ]
        assert loaded.rd_max == report.rd_max
        assert loaded.rd_avg == report.rd_avg
        assert loaded.lam == report.lam

    def test_dataset_round_trip_keeps_aggregates(self, make_dataset):
        for seed in range(20):
            ds = make_dataset(seed=seed, n_examples=4)
            original = pairwise_report(ds)
            restored = pairwise_report(loads_dataset(dumps_dataset(ds)))

            assert restored.rd_max == original.rd_max
            assert restored.rd_avg == original.rd_avg

    def test_report_file_layout(self):
        pairs = [PairResult("a", "b", 0.5, True), PairResult("b", "a", math.inf, False)]
        report = summarize(pairs, 1.1, PairsMode.VS_ALL_PAIRS)
        buffer = io.StringIO()
        write_report(report, buffer)
        lines = buffer.getvalue().splitlines()

        assert lines[0] == "id_q,id_qp,divergence,feasible"
        assert lines[1] == "a,b,0.5,true"
        assert lines[2] == "b,a,inf,false"
        assert lines[3] == "max,inf"
        assert lines[4] == "avg,0.5"
        assert lines[5] == "n_infeasible,1"
        assert lines[6] == "lambda,1.1000000000000001"
        assert lines[7] == "pairs,vs_all_pairs"
