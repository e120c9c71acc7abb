"""Dirichlet-Process posterior parameters, priors and their dataset file format."""

import json
import logging
import math
import re
from dataclasses import dataclass, field
from typing import IO, Any, Dict, Iterable, List, NamedTuple, Optional, Tuple, Union

import numpy as np

from .numerics import RealVec, as_real_vec


class DatasetFormatError(ValueError):
    """Dataset document cannot be parsed."""

    def __init__(self, message: str, line: Optional[int] = None, column: Optional[int] = None):
        self.line = line
        self.column = column

        if line is not None:
            message = f"{message} (line {line}, column {column})"

        super().__init__(message)


class InvalidDatasetError(ValueError):
    """Dataset violates one or more structural invariants."""

    def __init__(self, violations: List["Violation"]):
        self.violations = violations

        super().__init__("; ".join(str(v) for v in violations))


@dataclass(frozen=True)
class PriorSpec:
    """Data-independent prior: mean, standard deviation and prior pseudo-count."""

    mean: RealVec
    std: RealVec
    alpha0_prior: float

    def __post_init__(self):
        object.__setattr__(self, "mean", as_real_vec(self.mean, "prior mean"))
        object.__setattr__(self, "std", as_real_vec(self.std, "prior std"))
        object.__setattr__(self, "alpha0_prior", float(self.alpha0_prior))

    @property
    def dim(self) -> int:
        return int(self.mean.shape[0])


@dataclass(frozen=True)
class DpPosterior:
    """
    Variational parameters of one example: n+1 components of dimension d.

    means and stds are (n+1, d) arrays, alphas and kappas are (n+1,) arrays.
    """

    means: RealVec
    stds: RealVec
    alphas: RealVec
    kappas: Optional[RealVec] = None

    def __post_init__(self):
        means = as_real_vec(np.atleast_2d(self.means), "means")
        stds = as_real_vec(np.atleast_2d(self.stds), "stds")
        alphas = as_real_vec(np.atleast_1d(self.alphas), "alphas")
        kappas = np.ones_like(alphas) if self.kappas is None else np.atleast_1d(self.kappas)

        object.__setattr__(self, "means", means)
        object.__setattr__(self, "stds", stds)
        object.__setattr__(self, "alphas", alphas)
        object.__setattr__(self, "kappas", as_real_vec(kappas, "kappas"))

    @property
    def n_components(self) -> int:
        return int(self.means.shape[0])

    @property
    def dim(self) -> int:
        return int(self.means.shape[1])

    @property
    def alpha_total(self) -> float:
        """Total pseudo-count, always recomputed from the components."""
        return math.fsum(self.alphas.tolist())

    def has_unit_kappas(self) -> bool:
        return bool(np.all(self.kappas == 1.0))


class Example(NamedTuple):
    id: str
    posterior: DpPosterior


@dataclass(frozen=True)
class PosteriorDataset:
    """Posteriors of a set of examples, audited at Renyi order lam against a shared prior."""

    lam: float
    prior: PriorSpec
    examples: Tuple[Example, ...] = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, "lam", float(self.lam))
        object.__setattr__(self, "examples", tuple(Example(*item) for item in self.examples))

    @property
    def ids(self) -> List[str]:
        return [example.id for example in self.examples]

    def get(self, example_id: str) -> DpPosterior:
        for example in self.examples:
            if example.id == example_id:
                return example.posterior

        raise KeyError(example_id)

    def subset(self, ids: Iterable[str]) -> "PosteriorDataset":
        wanted = set(ids)

        return self.replace_examples([example for example in self.examples if example.id in wanted])

    def replace_examples(self, examples: Iterable[Tuple[str, DpPosterior]]) -> "PosteriorDataset":
        return PosteriorDataset(lam=self.lam, prior=self.prior, examples=tuple(examples))

    def with_lambda(self, lam: float) -> "PosteriorDataset":
        return PosteriorDataset(lam=lam, prior=self.prior, examples=self.examples)


@dataclass(frozen=True)
class Violation:
    """A single broken invariant."""

    example_id: Optional[str]
    component: Optional[int]
    field: str
    rule: str

    def __str__(self) -> str:
        where = "dataset" if self.example_id is None else f"example '{self.example_id}'"

        if self.component is not None:
            where += f" component {self.component}"

        return f"{where}: {self.field} {self.rule}"


def _positive_violations(
    values: np.ndarray, example_id: Optional[str], field_name: str, per_component: bool
) -> List[Violation]:
    violations = []

    for index in np.argwhere(values <= 0.0):
        if per_component and len(index) == 2:
            violations.append(Violation(example_id, int(index[0]), f"{field_name}[{int(index[1])}]", "must be > 0"))
        elif per_component:
            violations.append(Violation(example_id, int(index[0]), field_name, "must be > 0"))
        else:
            violations.append(Violation(example_id, None, f"{field_name}[{int(index[0])}]", "must be > 0"))

    return violations


def validate(ds: PosteriorDataset) -> List[Violation]:
    """
    Check every structural invariant of a dataset.

    Args:
        ds: Dataset to check

    Returns:
        List of violations, empty when the dataset is well formed
    """
    violations: List[Violation] = []
    prior = ds.prior
    dim = prior.dim

    if not ds.lam > 1.0:
        violations.append(Violation(None, None, "lambda", "must exceed 1"))

    if dim < 1:
        violations.append(Violation(None, None, "prior.mean", "must have dimension >= 1"))

    if prior.std.shape != prior.mean.shape:
        violations.append(Violation(None, None, "prior.std", "must match the prior mean dimension"))

    violations.extend(_positive_violations(prior.std, None, "prior.std", per_component=False))

    if not prior.alpha0_prior > 0.0:
        violations.append(Violation(None, None, "prior.alpha0_prior", "must be > 0"))

    seen = set()
    n_components = ds.examples[0].posterior.n_components if ds.examples else None
    kappas = ds.examples[0].posterior.kappas if ds.examples else np.ones(0)

    for example_id, posterior in ds.examples:
        if example_id in seen:
            violations.append(Violation(example_id, None, "id", "must be unique"))

        seen.add(example_id)

        shape = posterior.means.shape

        if shape[0] < 1:
            violations.append(Violation(example_id, None, "means", "must have at least one component"))

        if shape[1] != dim:
            violations.append(Violation(example_id, None, "means", f"dimension {shape[1]} differs from prior {dim}"))

        if posterior.stds.shape != shape:
            violations.append(Violation(example_id, None, "stds", f"shape {posterior.stds.shape} differs from {shape}"))

        if posterior.alphas.shape != (shape[0],):
            violations.append(Violation(example_id, None, "alphas", f"must hold {shape[0]} components"))

        if posterior.kappas.shape != (shape[0],):
            violations.append(Violation(example_id, None, "kappas", f"must hold {shape[0]} components"))

        if shape[0] != n_components:
            violations.append(Violation(example_id, None, "means", f"must hold {n_components} components"))

        violations.extend(_positive_violations(posterior.stds, example_id, "stds", per_component=True))
        violations.extend(_positive_violations(posterior.alphas, example_id, "alphas", per_component=True))
        violations.extend(_positive_violations(posterior.kappas, example_id, "kappas", per_component=True))

        if posterior.kappas.shape == kappas.shape and not np.array_equal(posterior.kappas, kappas):
            violations.append(Violation(example_id, None, "kappas", "must match the sample counts of every example"))

    return violations


def require_valid(ds: PosteriorDataset) -> None:
    """Raise InvalidDatasetError when validate reports anything."""
    violations = validate(ds)

    if violations:
        raise InvalidDatasetError(violations)


def prior_as_posterior(prior: PriorSpec, n_plus_1: int, kappas: Optional[RealVec] = None) -> DpPosterior:
    """
    Materialize the prior as a posterior with n_plus_1 identical components.

    Args:
        prior: Prior specification
        n_plus_1: Number of components
        kappas: Per-component sample counts shared with the examples, all ones when omitted

    Returns:
        Posterior whose components carry the prior mean and std and an equal share of the prior pseudo-count
    """
    if n_plus_1 < 1:
        raise ValueError("n_plus_1 must be >= 1")

    return DpPosterior(
        means=np.tile(prior.mean, (n_plus_1, 1)),
        stds=np.tile(prior.std, (n_plus_1, 1)),
        alphas=np.full(n_plus_1, prior.alpha0_prior / n_plus_1),
        kappas=kappas,
    )


def _locate(text: str, key: str) -> Tuple[Optional[int], Optional[int]]:
    match = re.search(rf'"{re.escape(key)}"', text)

    if match is None:
        return None, None

    line = text.count("\n", 0, match.start()) + 1
    column = match.start() - (text.rfind("\n", 0, match.start()) + 1) + 1

    return line, column


def _reject_constant(name: str) -> float:
    raise ValueError(f"non-finite constant {name} is not allowed")


def _require(document: Dict[str, Any], key: str, where: str) -> Any:
    if not isinstance(document, dict) or key not in document:
        raise DatasetFormatError(f"missing '{key}' in {where}")

    return document[key]


def _real_array(value: Any, where: str, ndim: int) -> np.ndarray:
    try:
        arr = np.array(value, dtype=np.float64)
    except (TypeError, ValueError) as e:
        raise DatasetFormatError(f"{where} must be a rectangular array of reals: {e}") from e

    if arr.ndim != ndim:
        raise DatasetFormatError(f"{where} must be a {ndim}-dimensional array of reals")

    return arr


def loads_dataset(text: str) -> PosteriorDataset:
    """
    Parse a dataset document.

    Args:
        text: Document text

    Returns:
        Parsed dataset; invariant violations are left to validate

    Raises:
        DatasetFormatError: On syntax errors, missing fields, ragged arrays or lambda <= 1
    """
    try:
        document = json.loads(text, parse_constant=_reject_constant)
    except json.JSONDecodeError as e:
        raise DatasetFormatError(e.msg, line=e.lineno, column=e.colno) from e
    except ValueError as e:
        raise DatasetFormatError(str(e)) from e

    lam = _require(document, "lambda", "document")

    if isinstance(lam, bool) or not isinstance(lam, (int, float)):
        raise DatasetFormatError("lambda must be a real number", *_locate(text, "lambda"))

    if not lam > 1.0:
        raise DatasetFormatError(f"lambda must exceed 1, got {lam}", *_locate(text, "lambda"))

    prior_doc = _require(document, "prior", "document")
    prior = PriorSpec(
        mean=_real_array(_require(prior_doc, "mean", "prior"), "prior.mean", 1),
        std=_real_array(_require(prior_doc, "std", "prior"), "prior.std", 1),
        alpha0_prior=float(_require(prior_doc, "alpha0_prior", "prior")),
    )

    examples = []

    for index, example_doc in enumerate(_require(document, "examples", "document")):
        where = f"examples[{index}]"
        kappas = example_doc.get("kappas") if isinstance(example_doc, dict) else None

        posterior = DpPosterior(
            means=_real_array(_require(example_doc, "means", where), f"{where}.means", 2),
            stds=_real_array(_require(example_doc, "stds", where), f"{where}.stds", 2),
            alphas=_real_array(_require(example_doc, "alphas", where), f"{where}.alphas", 1),
            kappas=None if kappas is None else _real_array(kappas, f"{where}.kappas", 1),
        )
        examples.append(Example(str(_require(example_doc, "id", where)), posterior))

    return PosteriorDataset(lam=float(lam), prior=prior, examples=tuple(examples))


def load_dataset(source: Union[IO[str], IO[bytes]]) -> PosteriorDataset:
    """Read a dataset document from a text or binary stream."""
    data = source.read()

    if isinstance(data, bytes):
        data = data.decode("utf-8")

    return loads_dataset(data)


def dataset_to_dict(ds: PosteriorDataset) -> Dict[str, Any]:
    """Structured-object form of a dataset with a fixed key order."""
    examples = []

    for example_id, posterior in ds.examples:
        entry: Dict[str, Any] = {
            "id": example_id,
            "means": posterior.means.tolist(),
            "stds": posterior.stds.tolist(),
            "alphas": posterior.alphas.tolist(),
        }

        if not posterior.has_unit_kappas():
            entry["kappas"] = posterior.kappas.tolist()

        examples.append(entry)

    return {
        "lambda": ds.lam,
        "prior": {
            "mean": ds.prior.mean.tolist(),
            "std": ds.prior.std.tolist(),
            "alpha0_prior": ds.prior.alpha0_prior,
        },
        "examples": examples,
    }


def dumps_dataset(ds: PosteriorDataset) -> str:
    """Serialize a dataset; floats use shortest round-trip representation."""
    return json.dumps(dataset_to_dict(ds), indent=2, ensure_ascii=False) + "\n"


def save_dataset(ds: PosteriorDataset, target: IO[str]) -> None:
    """Write a dataset document to a text stream."""
    target.write(dumps_dataset(ds))

    logging.debug("Save dataset with %d examples", len(ds.examples))
