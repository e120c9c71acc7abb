from typing import Callable

import numpy as np
import pytest

from src.posterior import DpPosterior, PosteriorDataset, PriorSpec


def random_posterior(
    rng: np.random.Generator,
    n_components: int,
    dim: int,
    std_range=(0.4, 1.0),
    alpha_range=(0.2, 2.0),
) -> DpPosterior:
    return DpPosterior(
        means=rng.normal(0.0, 1.5, size=(n_components, dim)),
        stds=rng.uniform(*std_range, size=(n_components, dim)),
        alphas=rng.uniform(*alpha_range, size=n_components),
    )


@pytest.fixture
def make_dataset() -> Callable[..., PosteriorDataset]:
    """Factory for random valid datasets with a standard normal prior."""

    def factory(
        seed: int = 0,
        n_examples: int = 5,
        n_components: int = 3,
        dim: int = 2,
        lam: float = 1.1,
        **ranges,
    ) -> PosteriorDataset:
        rng = np.random.default_rng(seed)
        prior = PriorSpec(mean=np.zeros(dim), std=np.ones(dim), alpha0_prior=1.0)
        examples = tuple(
            (f"ex{i:03d}", random_posterior(rng, n_components, dim, **ranges)) for i in range(n_examples)
        )

        return PosteriorDataset(lam=lam, prior=prior, examples=examples)

    return factory
