"""Closed-form Renyi divergence upper bound between Dirichlet-Process posteriors."""

import csv
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from enum import Enum
from typing import IO, List, Optional, Sequence, Tuple, Union

import numpy as np

from .numerics import ArrayLike, RealVec, log_gamma
from .posterior import DpPosterior, PosteriorDataset, prior_as_posterior, require_valid

# Log-gamma arguments at or below this margin are treated as infeasible
LOG_GAMMA_MARGIN = 1e-12

PRIOR_ID = "prior"


class TooFewExamplesError(ValueError):
    """Not enough examples to form a single pair."""


class PairsMode(str, Enum):
    """Which ordered pairs a report covers."""

    VS_ALL_PAIRS = "vs_all_pairs"
    VS_PRIOR = "vs_prior"


@dataclass(frozen=True)
class Infeasible:
    """Marks an undefined bound: the term, component and dimension that broke, and the offending value."""

    term: str
    component: Optional[int]
    dimension: Optional[int]
    value: float

    def __str__(self) -> str:
        where = self.term

        if self.component is not None:
            where += f" component {self.component}"

        if self.dimension is not None:
            where += f" dimension {self.dimension}"

        return f"{where}: nonpositive argument {self.value!r}"


@dataclass(frozen=True)
class RenyiTerms:
    """The three summands of the bound and their total."""

    global_alpha: float
    local_alpha: float
    gaussian: float
    total: float

    @classmethod
    def from_groups(cls, global_alpha: float, local_alpha: float, gaussian: float) -> "RenyiTerms":
        return cls(global_alpha, local_alpha, gaussian, global_alpha + local_alpha + gaussian)


@dataclass(frozen=True)
class PairResult:
    id_q: str
    id_qp: str
    divergence: float
    feasible: bool
    reason: Optional[Infeasible] = None


@dataclass(frozen=True)
class RenyiReport:
    """Pairwise divergences plus the max/avg aggregates over feasible pairs."""

    pairs: Tuple[PairResult, ...]
    rd_max: float
    rd_avg: float
    n_infeasible: int
    lam: float
    mode: PairsMode

    def infeasible_pairs(self) -> List[PairResult]:
        return [pair for pair in self.pairs if not pair.feasible]

    def feasible_divergences(self) -> List[float]:
        return [pair.divergence for pair in self.pairs if pair.feasible]


def _check_order(lam: float) -> None:
    if not lam > 1.0:
        raise ValueError(f"Renyi order must exceed 1, got {lam}")


def _radicand(sigma_q: np.ndarray, sigma_qp: np.ndarray, lam: float) -> np.ndarray:
    return (1.0 - lam) * sigma_qp**2 + lam * sigma_q**2


def sigma_prime(sigma_q: ArrayLike, sigma_qp: ArrayLike, lam: float) -> Union[RealVec, Infeasible]:
    """
    Combined standard deviation sqrt((1 - lam) * sigma_qp^2 + lam * sigma_q^2).

    Args:
        sigma_q: Standard deviations of q
        sigma_qp: Standard deviations of q'
        lam: Renyi order

    Returns:
        Elementwise combined deviation, or Infeasible naming the first dimension with a nonpositive radicand
    """
    _check_order(lam)

    sq = np.asarray(sigma_q, dtype=np.float64)
    sqp = np.asarray(sigma_qp, dtype=np.float64)

    if sq.shape != sqp.shape:
        raise ValueError(f"shape mismatch: {sq.shape} vs {sqp.shape}")

    radicand = _radicand(sq, sqp, lam)
    bad = np.argwhere(radicand <= 0.0)

    if len(bad):
        index = tuple(int(i) for i in bad[0])
        component = index[0] if len(index) == 2 else None

        return Infeasible("sigma_prime", component, index[-1], float(radicand[index]))

    return np.sqrt(radicand)


def renyi_bound(q: DpPosterior, qp: DpPosterior, lam: float) -> Union[RenyiTerms, Infeasible]:
    """
    Upper bound on the order-lam Renyi divergence between the Dirichlet Processes of q and q'.

    Args:
        q: Posterior of the first example
        qp: Posterior of the second example
        lam: Renyi order, > 1

    Returns:
        The three term groups and their total, or Infeasible when a square-root radicand or a
        log-gamma argument is not positive
    """
    _check_order(lam)

    if q.means.shape != qp.means.shape:
        raise ValueError(f"incompatible posteriors: {q.means.shape} vs {qp.means.shape}")

    if not np.array_equal(q.kappas, qp.kappas):
        raise ValueError("posteriors must share the per-component sample counts")

    sp = sigma_prime(q.stds, qp.stds, lam)

    if isinstance(sp, Infeasible):
        return sp

    inv = 1.0 / (lam - 1.0)
    ratio = lam / (lam - 1.0)
    kappa = q.kappas

    alpha0 = q.alpha_total
    alpha0_p = qp.alpha_total
    global_arg = lam * alpha0 - (lam - 1.0) * alpha0_p

    if global_arg <= LOG_GAMMA_MARGIN:
        return Infeasible("global_alpha", None, None, global_arg)

    x = q.alphas / kappa
    xp = qp.alphas / kappa
    local_args = lam * x - (lam - 1.0) * xp
    bad = np.flatnonzero(local_args <= LOG_GAMMA_MARGIN)

    if len(bad):
        return Infeasible("local_alpha", int(bad[0]), None, float(local_args[bad[0]]))

    global_alpha = -(inv * log_gamma(global_arg) + log_gamma(alpha0_p) - ratio * log_gamma(alpha0))
    local_alpha = np.sum(kappa * (inv * log_gamma(local_args) + log_gamma(xp) - ratio * log_gamma(x)))

    mahalanobis = 0.5 * lam * np.sum(((q.means - qp.means) / sp) ** 2, axis=1)
    log_ratio = np.sum(np.log(sp) - (1.0 - lam) * np.log(qp.stds) - lam * np.log(q.stds), axis=1) / (1.0 - lam)
    gaussian = np.sum(kappa * (mahalanobis + log_ratio))

    return RenyiTerms.from_groups(float(global_alpha), float(local_alpha), float(gaussian))


def _evaluate(chunk: Sequence[Tuple[str, DpPosterior, str, DpPosterior]], lam: float) -> List[PairResult]:
    results = []

    for id_q, q, id_qp, qp in chunk:
        terms = renyi_bound(q, qp, lam)

        if isinstance(terms, Infeasible):
            results.append(PairResult(id_q, id_qp, math.inf, False, terms))
        elif not math.isfinite(terms.total):
            results.append(PairResult(id_q, id_qp, math.inf, False, Infeasible("total", None, None, terms.total)))
        else:
            results.append(PairResult(id_q, id_qp, terms.total, True))

    return results


def summarize(pairs: Sequence[PairResult], lam: float, mode: PairsMode) -> RenyiReport:
    """Aggregate pair results: max is +inf when any pair is infeasible, avg covers feasible pairs."""
    feasible = [pair.divergence for pair in pairs if pair.feasible]
    n_infeasible = len(pairs) - len(feasible)

    if n_infeasible:
        rd_max = math.inf
    else:
        rd_max = max(feasible) if feasible else math.nan

    rd_avg = math.fsum(feasible) / len(feasible) if feasible else math.nan

    return RenyiReport(tuple(pairs), rd_max, rd_avg, n_infeasible, lam, mode)


def pairwise_report(ds: PosteriorDataset, mode: PairsMode = PairsMode.VS_ALL_PAIRS, workers: int = 1) -> RenyiReport:
    """
    Evaluate the bound over every ordered pair of a dataset.

    Args:
        ds: Valid dataset
        mode: All ordered pairs of distinct examples, or every example against the prior
        workers: Threads used to evaluate pair chunks

    Returns:
        Report with pairs in lexicographic id order

    Raises:
        TooFewExamplesError: If the dataset has too few examples for the mode
        InvalidDatasetError: If the dataset violates its invariants
    """
    mode = PairsMode(mode)
    require_valid(ds)

    ordered = sorted(ds.examples, key=lambda example: example.id)

    if mode == PairsMode.VS_ALL_PAIRS:
        if len(ordered) < 2:
            raise TooFewExamplesError("vs_all_pairs needs at least 2 examples")

        tasks = [(a.id, a.posterior, b.id, b.posterior) for a in ordered for b in ordered if a.id != b.id]
    else:
        if len(ordered) < 1:
            raise TooFewExamplesError("vs_prior needs at least 1 example")

        first = ordered[0].posterior
        prior = prior_as_posterior(ds.prior, first.n_components, first.kappas)
        tasks = [(a.id, a.posterior, PRIOR_ID, prior) for a in ordered]

    logging.info("Evaluate %d ordered pairs (%s, lambda=%s)", len(tasks), mode.value, ds.lam)

    if workers <= 1 or len(tasks) < 2 * workers:
        pairs = _evaluate(tasks, ds.lam)
    else:
        size = math.ceil(len(tasks) / workers)
        chunks = [tasks[i : i + size] for i in range(0, len(tasks), size)]

        with ThreadPoolExecutor(max_workers=workers) as executor:
            pairs = [pair for chunk in executor.map(lambda c: _evaluate(c, ds.lam), chunks) for pair in chunk]

    report = summarize(pairs, ds.lam, mode)

    if report.n_infeasible:
        logging.warning("Found %d infeasible pairs", report.n_infeasible)

    return report


def _format_real(value: float) -> str:
    return f"{value:.17g}"


def report_to_rows(report: RenyiReport) -> List[List[str]]:
    """Rows of a report file: one per ordered pair, then the summary rows."""
    rows = [["id_q", "id_qp", "divergence", "feasible"]]
    rows.extend(
        [pair.id_q, pair.id_qp, _format_real(pair.divergence), "true" if pair.feasible else "false"]
        for pair in report.pairs
    )
    rows.append(["max", _format_real(report.rd_max)])
    rows.append(["avg", _format_real(report.rd_avg)])
    rows.append(["n_infeasible", str(report.n_infeasible)])
    rows.append(["lambda", _format_real(report.lam)])
    rows.append(["pairs", report.mode.value])

    return rows


def write_report(report: RenyiReport, target: IO[str]) -> None:
    csv.writer(target, lineterminator="\n").writerows(report_to_rows(report))


def load_report(source: IO[str]) -> RenyiReport:
    """Read a report written by write_report; aggregates are recomputed from the pair rows."""
    pairs = []
    summary = {}

    for row_number, row in enumerate(csv.reader(source), start=1):
        if not row or row_number == 1 and row[0] == "id_q":
            continue

        if len(row) == 4:
            pairs.append(PairResult(row[0], row[1], float(row[2]), row[3] == "true"))
        elif len(row) == 2:
            summary[row[0]] = row[1]
        else:
            raise ValueError(f"malformed report row {row_number}: {row}")

    if "lambda" not in summary:
        raise ValueError("report has no lambda row")

    return summarize(pairs, float(summary["lambda"]), PairsMode(summary.get("pairs", PairsMode.VS_ALL_PAIRS.value)))
