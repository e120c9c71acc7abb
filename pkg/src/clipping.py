"""Clipping operators for posterior means, standard deviations and pseudo-counts."""

import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, Union

import numpy as np
import yaml

from .divergence import LOG_GAMMA_MARGIN
from .numerics import ArrayLike, RealVec, l2_norm
from .posterior import DpPosterior, PosteriorDataset, PriorSpec, prior_as_posterior

# Floor applied to pseudo-counts even when the configured minimum is zero
EPS_ALPHA = 1e-3

# Relative lift of the std floor above the point where sigma' against the prior vanishes
SIGMA_FLOOR_MARGIN = 1e-12

# Means this close outside the ball are left where they are, keeping projection idempotent
MEAN_TOLERANCE = 1e-12

DEFAULT_PRESETS_PATH = Path(__file__).parent.parent / "presets" / "clipping.yaml"


@dataclass(frozen=True)
class ClipConfig:
    """Constraint budget: L2 radius of the means, pseudo-count range and Renyi order."""

    c_mu: float
    c_alpha_min: float
    c_alpha_max: float
    lam: float = 1.1

    def __post_init__(self):
        for name in ("c_mu", "c_alpha_min", "c_alpha_max", "lam"):
            value = getattr(self, name)

            if isinstance(value, bool) or not isinstance(value, (int, float)) or not math.isfinite(value):
                raise ValueError(f"{name} must be a finite real, got {value!r}")

            object.__setattr__(self, name, float(value))

        if self.c_mu <= 0.0:
            raise ValueError("c_mu must be > 0")

        if self.c_alpha_min < 0.0:
            raise ValueError("c_alpha_min must be >= 0")

        if not self.c_alpha_min < self.c_alpha_max:
            raise ValueError("c_alpha_min must be smaller than c_alpha_max")

        if self.c_alpha_max <= EPS_ALPHA:
            raise ValueError(f"c_alpha_max must exceed the pseudo-count floor {EPS_ALPHA}")

        if not self.lam > 1.0:
            raise ValueError(f"lambda must exceed 1, got {self.lam}")

    @property
    def effective_alpha_floor(self) -> float:
        return max(self.c_alpha_min, EPS_ALPHA)

    @property
    def sigma_ratio(self) -> float:
        """Smallest admissible std as a fraction of the prior std."""
        return sigma_floor_ratio(self.lam)

    @property
    def alpha_margin(self) -> float:
        """lam * floor - (lam - 1) * cap; positive means every log-gamma argument is feasible."""
        return self.lam * self.effective_alpha_floor - (self.lam - 1.0) * self.c_alpha_max

    @classmethod
    def from_dict(cls, document: Dict[str, Any]) -> "ClipConfig":
        try:
            return cls(
                c_mu=document["c_mu"],
                c_alpha_min=document["c_alpha_min"],
                c_alpha_max=document["c_alpha_max"],
                lam=document.get("lambda", 1.1),
            )
        except KeyError as e:
            raise ValueError(f"clip config is missing {e}") from e

    def to_dict(self) -> Dict[str, float]:
        return {"c_mu": self.c_mu, "c_alpha_min": self.c_alpha_min, "c_alpha_max": self.c_alpha_max, "lambda": self.lam}

    @classmethod
    def from_preset(cls, name: str, presets_path: Optional[Union[str, Path]] = None) -> "ClipConfig":
        presets = load_presets(presets_path)

        if name not in presets:
            raise ValueError(f"Unknown clipping preset '{name}'. Known presets: {', '.join(sorted(presets))}")

        return presets[name]


def sigma_floor_ratio(lam: float) -> float:
    """Std floor as a fraction of the prior std: sqrt((lam - 1) / lam) lifted by SIGMA_FLOOR_MARGIN."""
    if not lam > 1.0:
        raise ValueError(f"lambda must exceed 1, got {lam}")

    return math.sqrt((lam - 1.0) / lam) * (1.0 + SIGMA_FLOOR_MARGIN)


def load_presets(path: Optional[Union[str, Path]] = None) -> Dict[str, ClipConfig]:
    """
    Load the clipping preset catalogue.

    Args:
        path: YAML catalogue, defaults to the shipped presets

    Returns:
        Map of "<backbone>/<task>" to clip configuration
    """
    path = Path(path) if path else DEFAULT_PRESETS_PATH

    with open(path, "r", encoding="utf-8") as f:
        catalogue = yaml.safe_load(f)

    lam = catalogue.get("lambda", 1.1)
    presets = {}

    for backbone, tasks in catalogue["presets"].items():
        for task, (c_mu, c_alpha_min, c_alpha_max) in tasks.items():
            presets[f"{backbone}/{task}"] = ClipConfig(c_mu, c_alpha_min, c_alpha_max, lam)

    logging.debug("Load %d clipping presets from %s", len(presets), path)

    return presets


def load_clip_config(path: Union[str, Path]) -> ClipConfig:
    """Read a clip configuration from a JSON or YAML document."""
    path = Path(path)

    with open(path, "r", encoding="utf-8") as f:
        if path.suffix in (".yaml", ".yml"):
            document = yaml.safe_load(f)
        else:
            document = json.load(f)

    logging.info("Load clip configuration from %s", path)

    return ClipConfig.from_dict(document)


def clip_mean(mu: ArrayLike, prior_mean: ArrayLike, c_mu: float) -> RealVec:
    """
    Project means onto the L2 ball of radius c_mu around the prior mean.

    Args:
        mu: Mean vector, or stack of mean vectors along the last axis
        prior_mean: Center of the ball
        c_mu: Ball radius

    Returns:
        Means inside the ball are returned unchanged, others are scaled back along their ray
    """
    mu = np.asarray(mu, dtype=np.float64)
    prior_mean = np.asarray(prior_mean, dtype=np.float64)

    if mu.ndim == 0 or mu.shape[-1] == 0:
        raise ValueError("clip_mean requires nonempty vectors")

    if mu.shape[-1] != prior_mean.shape[-1]:
        raise ValueError(f"dimension mismatch: {mu.shape[-1]} vs {prior_mean.shape[-1]}")

    diff = mu - prior_mean
    distance = np.asarray(l2_norm(diff))
    outside = distance > c_mu + MEAN_TOLERANCE

    if not np.any(outside):
        return mu

    scale = np.where(outside, c_mu / np.where(outside, distance, 1.0), 1.0)
    projected = prior_mean + diff * scale[..., np.newaxis]

    return np.where(outside[..., np.newaxis], projected, mu)


def clip_sigma(sigma: ArrayLike, prior_std: ArrayLike, lam: float) -> RealVec:
    """
    Raise standard deviations to the floor sigma_floor_ratio(lam) * prior_std.

    The floor sits a relative SIGMA_FLOOR_MARGIN above sqrt((lam - 1) / lam) * prior_std, so
    clip_sigma([0.1], [1.0], 1.1) gives 0.3015113445780653 rather than 0.30151134457776363. At the
    unlifted floor the sigma' radicand against the prior rounds to a negative value.

    Args:
        sigma: Standard deviations (the prior std broadcasts over leading axes)
        prior_std: Prior standard deviations, strictly positive
        lam: Renyi order

    Returns:
        Elementwise max of sigma and the floor
    """
    prior_std = np.asarray(prior_std, dtype=np.float64)

    if np.any(prior_std <= 0.0):
        raise ValueError("prior_std must be strictly positive")

    return np.maximum(np.asarray(sigma, dtype=np.float64), sigma_floor_ratio(lam) * prior_std)


def clip_alpha(alpha: ArrayLike, cfg: ClipConfig) -> Union[float, np.ndarray]:
    """Clamp pseudo-counts to [effective floor, c_alpha_max]."""
    clamped = np.clip(np.asarray(alpha, dtype=np.float64), cfg.effective_alpha_floor, cfg.c_alpha_max)

    if np.ndim(alpha) == 0:
        return float(clamped)

    return clamped


def clip_posterior(p: DpPosterior, prior: PriorSpec, cfg: ClipConfig) -> DpPosterior:
    """Apply the mean, std and pseudo-count clips to every component."""
    return DpPosterior(
        means=clip_mean(p.means, prior.mean, cfg.c_mu),
        stds=clip_sigma(p.stds, prior.std, cfg.lam),
        alphas=clip_alpha(p.alphas, cfg),
        kappas=p.kappas,
    )


def clip_dataset(ds: PosteriorDataset, cfg: ClipConfig) -> PosteriorDataset:
    """Clip every example of a dataset against the dataset prior."""
    logging.info(
        "Clip %d examples (c_mu=%s, alpha in [%s, %s], lambda=%s)",
        len(ds.examples),
        cfg.c_mu,
        cfg.effective_alpha_floor,
        cfg.c_alpha_max,
        cfg.lam,
    )

    return ds.replace_examples(
        (example.id, clip_posterior(example.posterior, ds.prior, cfg)) for example in ds.examples
    )


@dataclass(frozen=True)
class FeasibilityCertificate:
    """
    Outcome of checking a clipped dataset.

    feasible is true iff every ordered pair (q, q') with q from the dataset and q' from the dataset
    or the prior has positive sigma' radicands and log-gamma arguments above the margin.
    """

    feasible: bool
    structurally_guaranteed: bool
    alpha_margin: float
    violations: Tuple[str, ...] = field(default_factory=tuple)
    constraint_violations: Tuple[str, ...] = field(default_factory=tuple)
    notes: Tuple[str, ...] = field(default_factory=tuple)

    @property
    def certified(self) -> bool:
        return self.feasible and not self.constraint_violations


def _constraint_violations(example_id: str, p: DpPosterior, prior: PriorSpec, cfg: ClipConfig) -> List[str]:
    violations = []
    distance = np.asarray(l2_norm(p.means - prior.mean))
    sigma_floor = cfg.sigma_ratio * prior.std

    for i in np.flatnonzero(distance > cfg.c_mu + MEAN_TOLERANCE):
        violations.append(f"{example_id} component {i}: mean distance {distance[i]!r} exceeds c_mu {cfg.c_mu!r}")

    for i, j in np.argwhere(p.stds < sigma_floor):
        violations.append(f"{example_id} component {i}: std[{j}] {p.stds[i, j]!r} below floor {sigma_floor[j]!r}")

    for i in np.flatnonzero((p.alphas < cfg.effective_alpha_floor) | (p.alphas > cfg.c_alpha_max)):
        violations.append(f"{example_id} component {i}: alpha {p.alphas[i]!r} outside clip range")

    return violations


def feasibility_certificate(ds_clipped: PosteriorDataset, cfg: ClipConfig) -> FeasibilityCertificate:
    """
    Check that no ordered pair of a clipped dataset can produce an undefined bound.

    Args:
        ds_clipped: Dataset whose examples were clipped with cfg
        cfg: Clip configuration (its lambda is the order checked)

    Returns:
        Certificate with pair violations, per-example constraint violations and the structural guarantee
    """
    lam = cfg.lam
    prior = ds_clipped.prior
    examples = list(ds_clipped.examples)
    notes = []
    constraint_violations: List[str] = []
    violations: List[str] = []

    guaranteed = cfg.alpha_margin > 0.0

    if not guaranteed:
        notes.append(
            f"lambda*floor - (lambda-1)*cap = {cfg.alpha_margin!r} <= 0: "
            "log-gamma feasibility is not guaranteed for arbitrary pairs"
        )

    if not examples:
        return FeasibilityCertificate(True, guaranteed, cfg.alpha_margin, notes=tuple(notes))

    n_components = examples[0].posterior.n_components
    prior_share = prior.alpha0_prior / n_components
    prior_margin = lam * cfg.effective_alpha_floor - (lam - 1.0) * prior_share

    if prior_margin <= 0.0:
        guaranteed = False
        notes.append(
            f"lambda*floor - (lambda-1)*prior share = {prior_margin!r} <= 0: "
            "log-gamma feasibility against the prior is not guaranteed"
        )

    for example_id, posterior in examples:
        constraint_violations.extend(_constraint_violations(example_id, posterior, prior, cfg))

        if np.any(posterior.stds > prior.std):
            notes.append(f"{example_id}: std above the prior std, outside the worst-case assumption")

    reference = prior_as_posterior(prior, n_components, examples[0].posterior.kappas)
    others = [(example.id, example.posterior) for example in examples] + [("prior", reference)]

    other_stds = np.stack([p.stds for _, p in others])
    other_alphas = np.stack([p.alphas for _, p in others])
    other_totals = other_alphas.sum(axis=1)

    for position, (example_id, q) in enumerate(examples):
        kappa = q.kappas
        radicands = (1.0 - lam) * other_stds**2 + lam * q.stds[np.newaxis] ** 2
        local_args = lam * q.alphas / kappa - (lam - 1.0) * other_alphas / kappa
        global_args = lam * q.alpha_total - (lam - 1.0) * other_totals

        for index, (other_id, _) in enumerate(others):
            if index == position:
                continue

            if np.any(radicands[index] <= 0.0):
                violations.append(f"({example_id}, {other_id}): nonpositive sigma' radicand")

            if np.any(local_args[index] <= LOG_GAMMA_MARGIN):
                violations.append(f"({example_id}, {other_id}): nonpositive local log-gamma argument")

            if global_args[index] <= LOG_GAMMA_MARGIN:
                violations.append(f"({example_id}, {other_id}): nonpositive global log-gamma argument")

    if violations:
        logging.warning("Certificate failed with %d pair violations", len(violations))

    return FeasibilityCertificate(
        feasible=not violations,
        structurally_guaranteed=guaranteed,
        alpha_margin=cfg.alpha_margin,
        violations=tuple(violations),
        constraint_violations=tuple(constraint_violations),
        notes=tuple(notes),
    )
