"""
Desk-scale nonparametric variational bottleneck.

encoder (affine + tanh) -> per-component posterior heads (mu, sigma, alpha) -> optional clipping
-> Gaussian sample per component -> Dirichlet-mean weighted pooling -> linear classifier.
There is no path from the encoder to the classifier that bypasses the posterior.
Gradients are derived by hand; see backward().
"""

import csv
import dataclasses
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import IO, Any, Dict, List, Optional, Tuple, Union

import numpy as np
from scipy.special import logsumexp, softmax

from .clipping import EPS_ALPHA, MEAN_TOLERANCE, ClipConfig, clip_alpha, clip_mean, clip_sigma
from .divergence import PairsMode, RenyiReport, pairwise_report
from .numerics import digamma, inverse_softplus, l2_norm, log_gamma, softplus, softplus_grad, trigamma
from .posterior import DpPosterior, PosteriorDataset, PriorSpec

# Keeps sigma strictly positive when softplus underflows
SIGMA_OFFSET = 1e-6

PARAMETER_NAMES = ("w_enc", "b_enc", "w_mu", "b_mu", "w_sigma", "b_sigma", "w_alpha", "b_alpha", "w_cls", "b_cls")


class TrainingDivergedError(RuntimeError):
    """Loss or parameters stopped being finite."""

    def __init__(
        self,
        message: str,
        epoch: Optional[int] = None,
        step: Optional[int] = None,
        losses: Optional["Losses"] = None,
    ):
        self.epoch = epoch
        self.step = step
        self.losses = losses

        if step is not None:
            message = f"{message} at epoch {epoch}, step {step}"

        if losses is not None:
            message = f"{message} (task={losses.task!r}, l_g={losses.l_g!r}, l_d={losses.l_d!r})"

        super().__init__(message)


@dataclass(frozen=True)
class TaskSpec:
    """Gaussian-blob classification task."""

    classes: int = 3
    dimension: int = 8
    samples: int = 600
    seed: int = 7
    separation: float = 3.0
    spread: float = 1.0
    holdout: float = 0.25

    def __post_init__(self):
        if self.classes < 2 or self.dimension < 1 or self.samples < self.classes:
            raise ValueError("task needs >= 2 classes, >= 1 dimension and at least one sample per class")

        if not 0.0 < self.holdout < 1.0:
            raise ValueError("holdout must lie in (0, 1)")


@dataclass(frozen=True)
class SyntheticTask:
    x_train: np.ndarray
    y_train: np.ndarray
    x_test: np.ndarray
    y_test: np.ndarray

    @property
    def n_classes(self) -> int:
        return int(max(self.y_train.max(), self.y_test.max()) + 1)


def make_blobs(task: TaskSpec) -> SyntheticTask:
    """Draw a balanced blob dataset and split off the held-out part."""
    rng = np.random.default_rng(task.seed)
    centers = rng.normal(0.0, task.separation, size=(task.classes, task.dimension))
    labels = np.arange(task.samples) % task.classes
    points = centers[labels] + rng.normal(0.0, task.spread, size=(task.samples, task.dimension))

    order = rng.permutation(task.samples)
    n_test = max(1, int(round(task.samples * task.holdout)))
    test, train = order[:n_test], order[n_test:]

    return SyntheticTask(points[train], labels[train], points[test], labels[test])


@dataclass(frozen=True)
class TrainConfig:
    """Training hyperparameters, the bottleneck shape and the prior."""

    lambda_g: float = 0.01
    lambda_d: Optional[float] = None
    learning_rate: float = 0.1
    epochs: int = 40
    batch_size: int = 32
    clip: Optional[ClipConfig] = None
    n_components: int = 2
    latent_dim: int = 2
    hidden_dim: int = 16
    prior_mean: float = 0.0
    prior_std: float = 1.0
    alpha0_prior: float = 1.0
    lam: float = 1.1
    privacy_examples: int = 60
    seed: int = 0
    task: TaskSpec = field(default_factory=TaskSpec)

    def __post_init__(self):
        if self.lambda_d is None:
            object.__setattr__(self, "lambda_d", self.lambda_g)

        if self.lambda_g < 0.0 or self.lambda_d < 0.0:
            raise ValueError("regularizer weights must be >= 0")

        if not self.lam > 1.0:
            raise ValueError(f"lambda must exceed 1, got {self.lam}")

        if min(self.epochs, self.batch_size, self.n_components, self.latent_dim, self.hidden_dim) < 1:
            raise ValueError("epochs, batch_size, n_components, latent_dim and hidden_dim must be >= 1")

        if self.prior_std <= 0.0 or self.alpha0_prior <= 0.0:
            raise ValueError("prior_std and alpha0_prior must be > 0")

        if self.privacy_examples < 2:
            raise ValueError("privacy_examples must be >= 2")

    @property
    def prior(self) -> PriorSpec:
        return PriorSpec(
            mean=np.full(self.latent_dim, self.prior_mean),
            std=np.full(self.latent_dim, self.prior_std),
            alpha0_prior=self.alpha0_prior,
        )

    @property
    def prior_alphas(self) -> np.ndarray:
        return np.full(self.n_components, self.alpha0_prior / self.n_components)

    @property
    def alpha_floor(self) -> float:
        return self.clip.effective_alpha_floor if self.clip is not None else EPS_ALPHA

    def replace(self, **changes: Any) -> "TrainConfig":
        if "lambda_g" in changes and "lambda_d" not in changes:
            changes["lambda_d"] = changes["lambda_g"]

        return dataclasses.replace(self, **changes)

    @classmethod
    def from_dict(cls, document: Dict[str, Any]) -> "TrainConfig":
        document = dict(document)
        clip = document.pop("clip", None)
        task = document.pop("task", None)

        if "lambda" in document:
            document["lam"] = document.pop("lambda")

        unknown = set(document) - {f.name for f in dataclasses.fields(cls)}

        if unknown:
            raise ValueError(f"Unknown train config keys: {', '.join(sorted(unknown))}")

        return cls(
            clip=ClipConfig.from_dict(clip) if clip is not None else None,
            task=TaskSpec(**task) if task is not None else TaskSpec(),
            **document,
        )

    def to_dict(self) -> Dict[str, Any]:
        document = dataclasses.asdict(self)
        document["lambda"] = document.pop("lam")
        document["clip"] = self.clip.to_dict() if self.clip is not None else None

        return document


def load_train_config(path: Union[str, Path]) -> TrainConfig:
    with open(path, "r", encoding="utf-8") as f:
        document = json.load(f)

    logging.info("Load train configuration from %s", path)

    return TrainConfig.from_dict(document)


def _glorot(rng: np.random.Generator, fan_in: int, fan_out: int, shape: Tuple[int, ...]) -> np.ndarray:
    limit = math.sqrt(6.0 / (fan_in + fan_out))

    return rng.uniform(-limit, limit, size=shape)


@dataclass
class ToyModel:
    """Weights of the encoder, the posterior heads and the classifier."""

    w_enc: np.ndarray
    b_enc: np.ndarray
    w_mu: np.ndarray
    b_mu: np.ndarray
    w_sigma: np.ndarray
    b_sigma: np.ndarray
    w_alpha: np.ndarray
    b_alpha: np.ndarray
    w_cls: np.ndarray
    b_cls: np.ndarray
    rng_seed: int = 0

    @classmethod
    def initialize(cls, input_dim: int, n_classes: int, cfg: TrainConfig, rng: np.random.Generator) -> "ToyModel":
        """
        Glorot-uniform weights; head biases start at the prior mean, half the prior std
        and the prior pseudo-count share.
        """
        k, h, d = cfg.n_components, cfg.hidden_dim, cfg.latent_dim
        alpha_target = max(cfg.alpha0_prior / k - cfg.alpha_floor, EPS_ALPHA)

        return cls(
            w_enc=_glorot(rng, input_dim, h, (input_dim, h)),
            b_enc=np.zeros(h),
            w_mu=_glorot(rng, h, d, (k, h, d)),
            b_mu=np.full((k, d), cfg.prior_mean),
            w_sigma=0.1 * _glorot(rng, h, d, (k, h, d)),
            b_sigma=np.full((k, d), inverse_softplus(0.5 * cfg.prior_std)),
            w_alpha=0.1 * _glorot(rng, h, 1, (k, h)),
            b_alpha=np.full(k, inverse_softplus(alpha_target)),
            w_cls=_glorot(rng, d, n_classes, (d, n_classes)),
            b_cls=np.zeros(n_classes),
            rng_seed=cfg.seed,
        )

    def parameters(self) -> Dict[str, np.ndarray]:
        return {name: getattr(self, name) for name in PARAMETER_NAMES}

    def copy(self) -> "ToyModel":
        return ToyModel(**{name: value.copy() for name, value in self.parameters().items()}, rng_seed=self.rng_seed)

    def to_dict(self) -> Dict[str, Any]:
        document: Dict[str, Any] = {"rng_seed": self.rng_seed}
        document.update({name: value.tolist() for name, value in self.parameters().items()})

        return document

    @classmethod
    def from_dict(cls, document: Dict[str, Any]) -> "ToyModel":
        return cls(
            **{name: np.array(document[name], dtype=np.float64) for name in PARAMETER_NAMES},
            rng_seed=int(document.get("rng_seed", 0)),
        )


def save_model(model: ToyModel, target: IO[str]) -> None:
    target.write(json.dumps(model.to_dict()) + "\n")


def load_model(source: IO[str]) -> ToyModel:
    return ToyModel.from_dict(json.load(source))


@dataclass(frozen=True)
class Losses:
    task: float
    l_g: float
    l_d: float
    total: float


@dataclass
class ForwardResult:
    """Posterior parameters, logits and everything backward() needs."""

    x: np.ndarray
    h: np.ndarray
    pre_sigma: np.ndarray
    pre_alpha: np.ndarray
    mu_raw: np.ndarray
    sigma_raw: np.ndarray
    alpha_raw: np.ndarray
    means: np.ndarray
    stds: np.ndarray
    alphas: np.ndarray
    noise: Optional[np.ndarray]
    samples: np.ndarray
    weights: np.ndarray
    pooled: np.ndarray
    logits: np.ndarray
    labels: Optional[np.ndarray] = None
    kl_gauss: Optional[np.ndarray] = None
    losses: Optional[Losses] = None

    def posteriors(self) -> List[DpPosterior]:
        return [DpPosterior(self.means[b], self.stds[b], self.alphas[b]) for b in range(self.means.shape[0])]


def _gaussian_kl(means: np.ndarray, stds: np.ndarray, prior: PriorSpec) -> np.ndarray:
    """KL(N(mu, sigma^2) || N(prior)) summed over dimensions, shape (batch, components)."""
    s2 = prior.std**2
    terms = np.log(prior.std / stds) + (stds**2 + (means - prior.mean) ** 2) / (2.0 * s2) - 0.5

    return terms.sum(axis=-1)


def _dirichlet_kl(alphas: np.ndarray, beta: np.ndarray) -> np.ndarray:
    """KL(Dir(alpha) || Dir(beta)) per row."""
    alpha0 = alphas.sum(axis=1)
    beta0 = beta.sum()

    return (
        log_gamma(alpha0)
        - log_gamma(alphas).sum(axis=1)
        - log_gamma(beta0)
        + log_gamma(beta).sum()
        + ((alphas - beta) * (digamma(alphas) - digamma(alpha0)[:, np.newaxis])).sum(axis=1)
    )


def _losses(result: ForwardResult, cfg: TrainConfig) -> Losses:
    labels = result.labels
    batch = result.logits.shape[0]

    log_probs = result.logits - logsumexp(result.logits, axis=1, keepdims=True)
    task = -float(np.mean(log_probs[np.arange(batch), labels]))

    result.kl_gauss = _gaussian_kl(result.means, result.stds, cfg.prior)
    l_g = float(np.mean(np.sum(result.weights * result.kl_gauss, axis=1)))
    l_d = float(np.mean(_dirichlet_kl(result.alphas, cfg.prior_alphas)))

    return Losses(task, l_g, l_d, task + cfg.lambda_g * l_g + cfg.lambda_d * l_d)


def forward(
    model: ToyModel,
    x: np.ndarray,
    cfg: TrainConfig,
    labels: Optional[np.ndarray] = None,
    noise: Optional[np.ndarray] = None,
) -> ForwardResult:
    """
    Run the bottleneck on a batch.

    Args:
        model: Model weights
        x: Batch of inputs, shape (batch, input_dim)
        cfg: Training configuration (prior, clipping, regularizer weights)
        labels: Class labels; when given, losses are computed
        noise: Standard normal draws of shape (batch, components, latent_dim); None disables sampling

    Returns:
        Forward result with posterior parameters, logits and losses

    Raises:
        TrainingDivergedError: If parameters or the loss are not finite
    """
    x = np.asarray(x, dtype=np.float64)

    if x.ndim != 2 or x.shape[0] == 0:
        raise ValueError("batch must be a nonempty 2-dimensional array")

    prior = cfg.prior

    with np.errstate(over="ignore", invalid="ignore"):
        h = np.tanh(x @ model.w_enc + model.b_enc)
        mu_raw = np.einsum("bh,khd->bkd", h, model.w_mu) + model.b_mu
        pre_sigma = np.einsum("bh,khd->bkd", h, model.w_sigma) + model.b_sigma
        pre_alpha = np.einsum("bh,kh->bk", h, model.w_alpha) + model.b_alpha

    for name, value in (("means", mu_raw), ("sigma activations", pre_sigma), ("alpha activations", pre_alpha)):
        if not np.all(np.isfinite(value)):
            raise TrainingDivergedError(f"non-finite posterior {name}")

    sigma_raw = softplus(pre_sigma) + SIGMA_OFFSET
    alpha_raw = softplus(pre_alpha) + cfg.alpha_floor

    if cfg.clip is not None:
        means = clip_mean(mu_raw, prior.mean, cfg.clip.c_mu)
        stds = clip_sigma(sigma_raw, prior.std, cfg.clip.lam)
        alphas = clip_alpha(alpha_raw, cfg.clip)
    else:
        means, stds, alphas = mu_raw, sigma_raw, alpha_raw

    samples = means if noise is None else means + stds * noise
    weights = alphas / alphas.sum(axis=1, keepdims=True)
    pooled = np.einsum("bk,bkd->bd", weights, samples)
    logits = pooled @ model.w_cls + model.b_cls

    result = ForwardResult(
        x=x,
        h=h,
        pre_sigma=pre_sigma,
        pre_alpha=pre_alpha,
        mu_raw=mu_raw,
        sigma_raw=sigma_raw,
        alpha_raw=alpha_raw,
        means=means,
        stds=stds,
        alphas=alphas,
        noise=noise,
        samples=samples,
        weights=weights,
        pooled=pooled,
        logits=logits,
        labels=labels,
    )

    if labels is not None:
        with np.errstate(over="ignore", invalid="ignore"):
            result.losses = _losses(result, cfg)

        if not math.isfinite(result.losses.total):
            raise TrainingDivergedError("non-finite loss", losses=result.losses)

    return result


def _mean_clip_backward(grad: np.ndarray, result: ForwardResult, cfg: TrainConfig) -> np.ndarray:
    """Jacobian-vector product of the ball projection: (c / r) (I - u u^T) outside, identity inside."""
    assert cfg.clip is not None

    offset = result.mu_raw - cfg.prior.mean
    distance = np.asarray(l2_norm(offset))
    outside = distance > cfg.clip.c_mu + MEAN_TOLERANCE

    if not np.any(outside):
        return grad

    safe = np.where(outside, distance, 1.0)[..., np.newaxis]
    direction = offset / safe
    radial = np.sum(direction * grad, axis=-1, keepdims=True)
    projected = (cfg.clip.c_mu / safe) * (grad - direction * radial)

    return np.where(outside[..., np.newaxis], projected, grad)


def backward(model: ToyModel, result: ForwardResult, cfg: TrainConfig) -> Dict[str, np.ndarray]:
    """
    Gradients of the total loss with respect to every parameter.

    Clamped sigma and alpha entries get zero gradient; projected means get the exact projection Jacobian.

    Args:
        model: Model used for the forward pass
        result: Forward result computed with labels
        cfg: Configuration used for the forward pass

    Returns:
        Map of parameter name to gradient of the same shape
    """
    if result.labels is None or result.kl_gauss is None:
        raise ValueError("backward needs a forward result computed with labels")

    prior = cfg.prior
    batch = result.logits.shape[0]
    alphas = result.alphas
    weights = result.weights
    alpha0 = alphas.sum(axis=1, keepdims=True)
    grads: Dict[str, np.ndarray] = {}

    # classifier
    dlogits = softmax(result.logits, axis=1)
    dlogits[np.arange(batch), result.labels] -= 1.0
    dlogits /= batch

    grads["w_cls"] = result.pooled.T @ dlogits
    grads["b_cls"] = dlogits.sum(axis=0)

    # pooling
    dpooled = dlogits @ model.w_cls.T
    dsamples = weights[:, :, np.newaxis] * dpooled[:, np.newaxis, :]
    dweights = np.einsum("bkd,bd->bk", result.samples, dpooled)

    # Gaussian regularizer
    g_scale = cfg.lambda_g / batch
    s2 = prior.std**2
    dweights = dweights + g_scale * result.kl_gauss
    dmeans = dsamples + g_scale * weights[:, :, np.newaxis] * (result.means - prior.mean) / s2
    dstds = g_scale * weights[:, :, np.newaxis] * (result.stds / s2 - 1.0 / result.stds)

    if result.noise is not None:
        dstds = dstds + dsamples * result.noise

    # w = alpha / alpha0
    dalphas = (dweights - np.sum(dweights * weights, axis=1, keepdims=True)) / alpha0

    # Dirichlet regularizer
    beta = cfg.prior_alphas
    d_scale = cfg.lambda_d / batch
    dalphas = dalphas + d_scale * ((alphas - beta) * trigamma(alphas) - (alpha0 - beta.sum()) * trigamma(alpha0))

    if cfg.clip is not None:
        sigma_floor = cfg.clip.sigma_ratio * prior.std
        alpha_pass = (result.alpha_raw >= cfg.clip.effective_alpha_floor) & (result.alpha_raw <= cfg.clip.c_alpha_max)

        dmu_raw = _mean_clip_backward(dmeans, result, cfg)
        dsigma_raw = dstds * (result.sigma_raw >= sigma_floor)
        dalpha_raw = dalphas * alpha_pass
    else:
        dmu_raw, dsigma_raw, dalpha_raw = dmeans, dstds, dalphas

    dpre_sigma = dsigma_raw * softplus_grad(result.pre_sigma)
    dpre_alpha = dalpha_raw * softplus_grad(result.pre_alpha)

    h = result.h
    grads["w_mu"] = np.einsum("bh,bkd->khd", h, dmu_raw)
    grads["b_mu"] = dmu_raw.sum(axis=0)
    grads["w_sigma"] = np.einsum("bh,bkd->khd", h, dpre_sigma)
    grads["b_sigma"] = dpre_sigma.sum(axis=0)
    grads["w_alpha"] = np.einsum("bh,bk->kh", h, dpre_alpha)
    grads["b_alpha"] = dpre_alpha.sum(axis=0)

    # encoder
    dh = (
        np.einsum("bkd,khd->bh", dmu_raw, model.w_mu)
        + np.einsum("bkd,khd->bh", dpre_sigma, model.w_sigma)
        + np.einsum("bk,kh->bh", dpre_alpha, model.w_alpha)
    )
    dact = dh * (1.0 - h**2)

    grads["w_enc"] = result.x.T @ dact
    grads["b_enc"] = dact.sum(axis=0)

    return grads


@dataclass(frozen=True)
class EpochMetrics:
    epoch: int
    task_loss: float
    l_g: float
    l_d: float
    accuracy: float


def accuracy(model: ToyModel, x: np.ndarray, y: np.ndarray, cfg: TrainConfig) -> float:
    """Classification accuracy with sampling disabled."""
    logits = forward(model, x, cfg).logits

    return float(np.mean(np.argmax(logits, axis=1) == y))


class Trainer:
    """Plain minibatch SGD, deterministic for a given seed."""

    def __init__(self, cfg: TrainConfig):
        self.cfg = cfg
        init_seed, train_seed = np.random.SeedSequence(cfg.seed).spawn(2)
        self._init_rng = np.random.default_rng(init_seed)
        self._rng = np.random.default_rng(train_seed)

    def train(self, task: SyntheticTask, model: Optional[ToyModel] = None) -> Tuple[ToyModel, List[EpochMetrics]]:
        """
        Train on the task's training split.

        Args:
            task: Synthetic task
            model: Initial weights, copied before training; freshly initialized when omitted

        Returns:
            Trained model and per-epoch metrics

        Raises:
            TrainingDivergedError: At the first non-finite loss, with the epoch and step recorded
        """
        cfg = self.cfg
        x, y = task.x_train, task.y_train

        if model is None:
            model = ToyModel.initialize(x.shape[1], task.n_classes, cfg, self._init_rng)
        else:
            model = model.copy()

        logging.info(
            "Start training: %d samples, %d epochs, lambda_g=%s, lambda_d=%s, clip=%s",
            len(x),
            cfg.epochs,
            cfg.lambda_g,
            cfg.lambda_d,
            "on" if cfg.clip is not None else "off",
        )

        trace = []
        step = 0
        shape = (cfg.n_components, cfg.latent_dim)

        for epoch in range(1, cfg.epochs + 1):
            order = self._rng.permutation(len(x))
            totals = np.zeros(3)

            for start in range(0, len(x), cfg.batch_size):
                batch = order[start : start + cfg.batch_size]
                noise = self._rng.standard_normal((len(batch),) + shape)

                try:
                    result = forward(model, x[batch], cfg, labels=y[batch], noise=noise)
                except TrainingDivergedError as e:
                    logging.error("Abort training at epoch %d, step %d: %s", epoch, step, e)

                    raise TrainingDivergedError(str(e), epoch=epoch, step=step, losses=e.losses) from e

                self._apply(model, backward(model, result, cfg))

                losses = result.losses
                assert losses is not None
                totals += len(batch) * np.array([losses.task, losses.l_g, losses.l_d])

                logging.debug("Step %d: loss=%r", step, losses.total)

                step += 1

            totals /= len(x)
            task_loss, l_g, l_d = (float(value) for value in totals)
            metrics = EpochMetrics(epoch, task_loss, l_g, l_d, accuracy(model, x, y, cfg))
            trace.append(metrics)

            logging.info(
                "Finish epoch %d: task_loss=%.6f l_g=%.6f l_d=%.6f accuracy=%.4f",
                epoch,
                metrics.task_loss,
                metrics.l_g,
                metrics.l_d,
                metrics.accuracy,
            )

        return model, trace

    def _apply(self, model: ToyModel, grads: Dict[str, np.ndarray]) -> None:
        for name, grad in grads.items():
            setattr(model, name, getattr(model, name) - self.cfg.learning_rate * grad)


@dataclass(frozen=True)
class TrainingRun:
    model: ToyModel
    trace: List[EpochMetrics]
    task: SyntheticTask


def train(cfg: TrainConfig) -> TrainingRun:
    """Generate the configured task and train a fresh model on it."""
    task = make_blobs(cfg.task)
    model, trace = Trainer(cfg).train(task)

    return TrainingRun(model, trace, task)


def extract_dataset(model: ToyModel, x: np.ndarray, cfg: TrainConfig, lam: Optional[float] = None) -> PosteriorDataset:
    """Posteriors of a batch with sampling disabled, as a dataset keyed ex00000, ex00001, ..."""
    result = forward(model, x, cfg)
    examples = [(f"ex{i:05d}", posterior) for i, posterior in enumerate(result.posteriors())]

    return PosteriorDataset(lam=lam if lam is not None else cfg.lam, prior=cfg.prior, examples=tuple(examples))


def evaluate_privacy(
    model: ToyModel,
    x: np.ndarray,
    cfg: TrainConfig,
    mode: PairsMode = PairsMode.VS_ALL_PAIRS,
    lam: Optional[float] = None,
    workers: int = 1,
) -> RenyiReport:
    """Pairwise divergence report over the posteriors the model assigns to x."""
    return pairwise_report(extract_dataset(model, x, cfg, lam), mode, workers)


def write_trace(trace: List[EpochMetrics], target: IO[str]) -> None:
    writer = csv.writer(target, lineterminator="\n")
    writer.writerow(["epoch", "task_loss", "l_g", "l_d", "accuracy"])

    for m in trace:
        writer.writerow([m.epoch] + [f"{value:.17g}" for value in (m.task_loss, m.l_g, m.l_d, m.accuracy)])
