"""Clipping operators, presets and the feasibility certificate."""

import json
import math

import numpy as np
import pytest

from src.clipping import (
    EPS_ALPHA,
    SIGMA_FLOOR_MARGIN,
    ClipConfig,
    clip_alpha,
    clip_dataset,
    clip_mean,
    clip_posterior,
    clip_sigma,
    feasibility_certificate,
    load_clip_config,
    load_presets,
    sigma_floor_ratio,
)
from src.divergence import Infeasible, RenyiTerms, renyi_bound, sigma_prime
from src.posterior import DpPosterior, PosteriorDataset, PriorSpec, prior_as_posterior, validate

DEMO = ClipConfig(c_mu=2.0, c_alpha_min=0.05, c_alpha_max=0.5, lam=1.1)


class TestClipConfig:
    def test_margin(self):
        assert DEMO.alpha_margin == pytest.approx(1.1 * 0.05 - 0.1 * 0.5)
        assert DEMO.alpha_margin > 0.0

    def test_zero_minimum_uses_floor(self):
        cfg = ClipConfig(2.0, 0.0, 0.5)

        assert cfg.effective_alpha_floor == EPS_ALPHA
        assert cfg.alpha_margin < 0.0

    @pytest.mark.parametrize(
        "args",
        [
            (0.0, 0.0, 0.5),
            (2.0, -0.1, 0.5),
            (2.0, 0.5, 0.5),
            (2.0, 0.0, 0.0005),
            (2.0, 0.0, 0.5, 1.0),
            (math.nan, 0, 1),
        ],
    )
    def test_rejects_invalid(self, args):
        with pytest.raises(ValueError):
            ClipConfig(*args)

    def test_dict_uses_lambda_key(self):
        assert DEMO.to_dict() == {"c_mu": 2.0, "c_alpha_min": 0.05, "c_alpha_max": 0.5, "lambda": 1.1}
        assert ClipConfig.from_dict(DEMO.to_dict()) == DEMO

    def test_missing_key(self):
        with pytest.raises(ValueError, match="c_mu"):
            ClipConfig.from_dict({"c_alpha_min": 0.0, "c_alpha_max": 1.0})


class TestClipMean:
    def test_projects_onto_ball(self):
        np.testing.assert_allclose(clip_mean([3.0, 4.0], [0.0, 0.0], 2.5), [1.5, 2.0], rtol=1e-15)

    def test_inside_is_unchanged(self):
        np.testing.assert_array_equal(clip_mean([0.3, -0.4], [0.0, 0.0], 2.5), [0.3, -0.4])

    def test_relative_to_prior_mean(self):
        np.testing.assert_allclose(clip_mean([4.0, 1.0], [1.0, 1.0], 1.0), [2.0, 1.0], rtol=1e-15)

    def test_stacked_components(self):
        result = clip_mean([[3.0, 4.0], [0.1, 0.0]], [0.0, 0.0], 2.5)
        np.testing.assert_allclose(result, [[1.5, 2.0], [0.1, 0.0]], rtol=1e-15)

    def test_rejects_mismatch(self):
        with pytest.raises(ValueError):
            clip_mean([1.0, 2.0], [0.0], 1.0)

    def test_shrinks_along_the_ray(self):
        rng = np.random.default_rng(2)

        for _ in range(1000):
            dim = int(rng.integers(1, 6))
            prior_mean = rng.normal(0.0, 1.0, size=dim)
            mu = prior_mean + rng.normal(0.0, 3.0, size=dim)
            offset = mu - prior_mean
            clipped_offset = clip_mean(mu, prior_mean, float(rng.uniform(0.1, 4.0))) - prior_mean
            t = float(np.dot(clipped_offset, offset) / np.dot(offset, offset))

            assert np.linalg.norm(clipped_offset) <= np.linalg.norm(offset) * (1.0 + 1e-12)
            assert 0.0 < t <= 1.0 + 1e-12
            np.testing.assert_allclose(clipped_offset, t * offset, rtol=1e-12, atol=1e-12)

    def test_gaussian_group_contracts_on_a_shared_ray(self):
        """Two means outside the ball on one ray never diverge more after clipping."""
        rng = np.random.default_rng(8)
        prior = PriorSpec(mean=[0.0, 0.0, 0.0], std=[1.0, 1.0, 1.0], alpha0_prior=1.0)

        for _ in range(200):
            direction = rng.normal(0.0, 1.0, size=3)
            direction /= np.linalg.norm(direction)
            r_q, r_qp = rng.uniform(DEMO.c_mu * 1.01, 10.0, size=2)
            stds_q, stds_qp = rng.uniform(0.6, 1.0, size=(2, 1, 3))
            q = DpPosterior(means=[r_q * direction], stds=stds_q, alphas=[0.3])
            qp = DpPosterior(means=[r_qp * direction], stds=stds_qp, alphas=[0.3])

            before = renyi_bound(q, qp, 1.1).gaussian
            after = renyi_bound(clip_posterior(q, prior, DEMO), clip_posterior(qp, prior, DEMO), 1.1).gaussian

            assert after <= before + 1e-12


class TestClipSigma:
    def test_floor_value(self):
        result = clip_sigma([0.1], [1.0], 1.1)
        exact = 0.30151134457776363

        assert result[0] == math.sqrt((1.1 - 1.0) / 1.1) * (1.0 + SIGMA_FLOOR_MARGIN)
        assert result[0] / exact - 1.0 == pytest.approx(SIGMA_FLOOR_MARGIN, rel=1e-3)

    def test_above_floor_is_unchanged(self):
        np.testing.assert_array_equal(clip_sigma([0.5], [1.0], 1.1), [0.5])

    def test_scales_with_prior_std(self):
        np.testing.assert_allclose(clip_sigma([0.5], [2.0], 2.0), [math.sqrt(0.5) * 2.0], rtol=1e-11)

    def test_rejects_nonpositive_prior(self):
        with pytest.raises(ValueError):
            clip_sigma([1.0], [0.0], 1.1)

    def test_floor_ratio(self):
        assert sigma_floor_ratio(1.1) == pytest.approx(math.sqrt(1.0 / 11.0), rel=1e-11)
        assert DEMO.sigma_ratio == sigma_floor_ratio(1.1)

    def test_radicand_against_prior_is_positive(self):
        """Clipped stds never make sigma' against the prior std infeasible."""
        rng = np.random.default_rng(5)
        lam = 1.1
        prior_std = rng.uniform(0.5, 2.0, size=(100_000, 1))
        sigma = rng.uniform(0.001, 1.0, size=(100_000, 1)) * prior_std

        assert isinstance(sigma_prime(sigma, prior_std, lam), Infeasible)

        clipped = clip_sigma(sigma, prior_std, lam)
        radicand = (1.0 - lam) * prior_std**2 + lam * clipped**2

        assert np.all(radicand > 0.0)


class TestClipAlpha:
    def test_clamps_to_cap(self):
        assert clip_alpha(5.0, ClipConfig(3.0, 0.0, 0.7)) == 0.7

    def test_clamps_to_floor(self):
        assert clip_alpha(1e-6, ClipConfig(3.0, 0.0, 0.7)) == EPS_ALPHA
        assert clip_alpha(0.01, DEMO) == 0.05

    def test_vector(self):
        np.testing.assert_array_equal(clip_alpha(np.array([0.01, 0.2, 9.0]), DEMO), [0.05, 0.2, 0.5])

    def test_global_arguments_stay_in_a_fixed_interval(self):
        rng = np.random.default_rng(4)
        lam, floor, cap = DEMO.lam, DEMO.effective_alpha_floor, DEMO.c_alpha_max

        for n_components in (1, 3, 8):
            alphas = clip_alpha(np.exp(rng.uniform(-12.0, 4.0, size=(2000, n_components))), DEMO)
            totals = alphas.sum(axis=1)
            global_args = lam * totals[:1000] - (lam - 1.0) * totals[1000:]

            assert np.all(totals >= n_components * floor * (1.0 - 1e-12))
            assert np.all(totals <= n_components * cap * (1.0 + 1e-12))
            assert np.all(global_args >= n_components * DEMO.alpha_margin * (1.0 - 1e-9))
            assert np.all(global_args <= n_components * (lam * cap - (lam - 1.0) * floor) * (1.0 + 1e-12))
            assert n_components * DEMO.alpha_margin > 0.0


class TestClipPosterior:
    def test_output_is_valid(self, make_dataset):
        ds = make_dataset(n_examples=20, std_range=(0.01, 3.0), alpha_range=(1e-5, 10.0))
        clipped = clip_dataset(ds, DEMO)

        assert validate(clipped) == []
        assert clipped.ids == ds.ids

    def test_idempotent(self, make_dataset):
        for seed in range(100):
            ds = make_dataset(seed=seed, n_examples=3, std_range=(0.01, 3.0), alpha_range=(1e-5, 10.0))
            once = clip_dataset(ds, DEMO)
            twice = clip_dataset(once, DEMO)

            for (_, a), (_, b) in zip(once.examples, twice.examples):
                np.testing.assert_array_equal(a.means, b.means)
                np.testing.assert_array_equal(a.stds, b.stds)
                np.testing.assert_array_equal(a.alphas, b.alphas)

    def test_kappas_are_kept(self):
        prior = PriorSpec([0.0], [1.0], 1.0)
        p = DpPosterior(means=[[5.0]], stds=[[0.1]], alphas=[3.0], kappas=[2.0])

        np.testing.assert_array_equal(clip_posterior(p, prior, DEMO).kappas, [2.0])

    def test_no_sigma_infeasibility_against_prior(self):
        rng = np.random.default_rng(17)
        draws = 100_000
        prior = PriorSpec(mean=[0.0, 0.0], std=[1.0, 1.0], alpha0_prior=1.0)
        reference = prior_as_posterior(prior, 2)

        means = clip_mean(rng.normal(0.0, 2.0, size=(draws, 2, 2)), prior.mean, DEMO.c_mu)
        raw_stds = rng.uniform(0.01, 1.0, size=(draws, 2, 2))
        stds = clip_sigma(raw_stds, prior.std, DEMO.lam)
        alphas = clip_alpha(rng.uniform(0.01, 2.0, size=(draws, 2)), DEMO)

        raw_radicands = (1.0 - 1.1) * reference.stds**2 + 1.1 * raw_stds**2
        assert np.any(raw_radicands <= 0.0)

        for i in range(draws):
            result = renyi_bound(DpPosterior(means[i], stds[i], alphas[i]), reference, 1.1)

            assert isinstance(result, RenyiTerms), i
            assert math.isfinite(result.total)


class TestPresets:
    def test_shipped_catalogue(self):
        presets = load_presets()

        assert presets["bert-base/mrpc"] == ClipConfig(2.0, 0.0, 0.5, 1.1)
        assert presets["wav2vec2-large/lid"] == ClipConfig(3.0, 0.0, 0.7, 1.1)
        assert len(presets) == 16

    def test_zero_minimum_is_not_guaranteed(self):
        assert all(cfg.alpha_margin <= 0.0 for cfg in load_presets().values())

    def test_unknown_preset(self):
        with pytest.raises(ValueError, match="bert-base/mrpc"):
            ClipConfig.from_preset("nope/none")

    def test_custom_catalogue(self, tmp_path):
        path = tmp_path / "presets.yaml"
        path.write_text("lambda: 2.0\npresets:\n  toy:\n    demo: [1.5, 0.2, 0.3]\n", encoding="utf-8")

        assert load_presets(path) == {"toy/demo": ClipConfig(1.5, 0.2, 0.3, 2.0)}


class TestLoadClipConfig:
    def test_json(self, tmp_path):
        path = tmp_path / "clip.json"
        path.write_text(json.dumps({"c_mu": 2, "c_alpha_min": 0, "c_alpha_max": 0.5, "lambda": 1.1}), encoding="utf-8")

        assert load_clip_config(path) == ClipConfig(2.0, 0.0, 0.5, 1.1)

    def test_yaml(self, tmp_path):
        path = tmp_path / "clip.yaml"
        path.write_text("c_mu: 2.0\nc_alpha_min: 0.05\nc_alpha_max: 0.5\nlambda: 1.1\n", encoding="utf-8")

        assert load_clip_config(path) == DEMO


class TestFeasibilityCertificate:
    def test_demo_clip_is_certified(self, make_dataset):
        ds = make_dataset(n_examples=8, alpha_range=(1e-4, 10.0), std_range=(0.05, 1.0))
        certificate = feasibility_certificate(clip_dataset(ds, DEMO), DEMO)

        assert certificate.structurally_guaranteed
        assert certificate.feasible
        assert certificate.certified
        assert certificate.violations == ()

    def test_zero_floor_can_fail(self):
        prior = PriorSpec([0.0], [1.0], 1.0)
        cfg = ClipConfig(2.0, 0.0, 0.5)
        ds = _two_examples(prior, [1e-6], [5.0])
        certificate = feasibility_certificate(clip_dataset(ds, cfg), cfg)

        assert not certificate.structurally_guaranteed
        assert not certificate.feasible
        assert not certificate.certified
        assert any("log-gamma" in v for v in certificate.violations)
        assert certificate.notes

    def test_unclipped_input_reports_constraints(self):
        prior = PriorSpec([0.0], [1.0], 1.0)
        ds = _two_examples(prior, [0.2], [0.3], mean=10.0)
        certificate = feasibility_certificate(ds, DEMO)

        assert certificate.feasible
        assert not certificate.certified
        assert any("mean distance" in v for v in certificate.constraint_violations)

    def test_empty_dataset(self, make_dataset):
        certificate = feasibility_certificate(make_dataset(n_examples=0), DEMO)

        assert certificate.feasible
        assert certificate.certified

    def test_large_prior_share_is_not_guaranteed(self):
        prior = PriorSpec([0.0], [1.0], 1.0)
        ds = _two_examples(prior, [1e-6], [0.2])
        certificate = feasibility_certificate(clip_dataset(ds, DEMO), DEMO)

        assert DEMO.alpha_margin > 0.0
        assert not certificate.structurally_guaranteed
        assert not certificate.feasible
        assert "(a, prior): nonpositive local log-gamma argument" in certificate.violations
        assert any("prior share" in note for note in certificate.notes)

    def test_small_prior_share_keeps_the_guarantee(self):
        prior = PriorSpec([0.0], [1.0], 0.4)
        certificate = feasibility_certificate(clip_dataset(_two_examples(prior, [1e-6], [5.0]), DEMO), DEMO)

        assert certificate.structurally_guaranteed
        assert certificate.certified

    def test_example_named_prior_is_checked_against_the_prior(self):
        prior = PriorSpec([0.0], [1.0], 1.0)
        cfg = ClipConfig(2.0, 0.0, 0.5)
        examples = (("prior", DpPosterior(means=[[0.0]], stds=[[0.8]], alphas=[1e-6])),)
        certificate = feasibility_certificate(PosteriorDataset(1.1, prior, examples), cfg)

        assert "(prior, prior): nonpositive local log-gamma argument" in certificate.violations

    def test_shared_kappas(self):
        prior = PriorSpec([0.0], [1.0], 0.4)
        examples = tuple(
            (name, DpPosterior(means=[[0.0]], stds=[[0.8]], alphas=[alpha], kappas=[2.0]))
            for name, alpha in (("a", 0.05), ("b", 0.5))
        )
        certificate = feasibility_certificate(PosteriorDataset(1.1, prior, examples), DEMO)

        assert certificate.certified


def _two_examples(prior, alphas_a, alphas_b, mean=0.0):
    examples = (
        ("a", DpPosterior(means=[[mean]], stds=[[0.8]], alphas=alphas_a)),
        ("b", DpPosterior(means=[[0.0]], stds=[[0.8]], alphas=alphas_b)),
    )

    return PosteriorDataset(lam=1.1, prior=prior, examples=examples)
