"""Conversion of Renyi-divergence statistics into (epsilon, delta) privacy budgets."""

import logging
import math
from dataclasses import dataclass
from enum import Enum
from typing import Any, Dict

import numpy as np
from scipy.special import logsumexp

from .divergence import RenyiReport


class InfeasiblePairsError(ValueError):
    """The report holds pairs whose bound is undefined, so no budget exists."""


class EmptyReportError(ValueError):
    """The report holds no feasible pair."""


class AccountingMode(str, Enum):
    """How pairwise divergences are aggregated into the budget statistic."""

    WORST_CASE = "worst_case"
    BAYESIAN_MOMENT = "bayesian_moment"


@dataclass(frozen=True)
class AccountantConfig:
    lam: float = 1.1
    delta: float = 1e-5
    mode: AccountingMode = AccountingMode.WORST_CASE

    def __post_init__(self):
        object.__setattr__(self, "mode", AccountingMode(self.mode))

        if not self.lam > 1.0:
            raise ValueError(f"lambda must exceed 1, got {self.lam}")

        if not 0.0 < self.delta <= 1.0:
            raise ValueError(f"delta must lie in (0, 1], got {self.delta}")


@dataclass(frozen=True)
class PrivacyBudget:
    epsilon: float
    delta: float
    mode: AccountingMode
    rd_statistic: float
    lam: float


def to_budget(report: RenyiReport, cfg: AccountantConfig) -> PrivacyBudget:
    """
    Convert a pairwise report into an (epsilon, delta) budget.

    worst_case uses the maximum pair divergence; bayesian_moment uses (1/lam) * ln(mean(exp(lam * D))).
    Both add the failure-probability term ln(1/delta) / lam.

    Args:
        report: Pairwise divergence report
        cfg: Accountant configuration

    Returns:
        Privacy budget

    Raises:
        InfeasiblePairsError: If any pair is infeasible
        EmptyReportError: If the report has no pairs
    """
    if report.n_infeasible:
        names = ", ".join(f"({p.id_q}, {p.id_qp})" for p in report.infeasible_pairs()[:5])

        raise InfeasiblePairsError(f"budget undefined: {report.n_infeasible} infeasible pairs, e.g. {names}")

    divergences = report.feasible_divergences()

    if not divergences:
        raise EmptyReportError("budget undefined: report holds no pairs")

    if not math.isclose(report.lam, cfg.lam):
        logging.warning("Report order %s differs from accountant order %s", report.lam, cfg.lam)

    if cfg.mode == AccountingMode.WORST_CASE:
        statistic = report.rd_max
    else:
        values = cfg.lam * np.asarray(divergences, dtype=np.float64)
        statistic = float((logsumexp(values) - math.log(len(divergences))) / cfg.lam)

    epsilon = statistic + math.log(1.0 / cfg.delta) / cfg.lam

    logging.info("Convert %s statistic %r into epsilon %r", cfg.mode.value, statistic, epsilon)

    return PrivacyBudget(epsilon=epsilon, delta=cfg.delta, mode=cfg.mode, rd_statistic=statistic, lam=cfg.lam)


def budget_to_dict(report: RenyiReport, budget: PrivacyBudget) -> Dict[str, Any]:
    return {
        "rd_max": report.rd_max,
        "rd_avg": report.rd_avg,
        "epsilon": budget.epsilon,
        "delta": budget.delta,
        "lambda": budget.lam,
        "mode": budget.mode.value,
        "n_infeasible": report.n_infeasible,
    }


def audit_summary(report: RenyiReport, budget: PrivacyBudget) -> str:
    """Render the audit summary as aligned plain text."""
    rows = [
        ("RD max", repr(report.rd_max)),
        ("RD avg", repr(report.rd_avg)),
        ("epsilon_mu", repr(budget.epsilon)),
        ("delta_mu", repr(budget.delta)),
        ("lambda", repr(budget.lam)),
        ("mode", budget.mode.value),
        ("pairs", f"{len(report.pairs)} ({report.mode.value})"),
        ("infeasible", str(report.n_infeasible)),
    ]
    width = max(len(label) for label, _ in rows)

    return "\n".join(f"{label}{' ' * (width - len(label))} : {value}" for label, value in rows) + "\n"
