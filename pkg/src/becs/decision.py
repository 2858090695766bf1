"""Triage policy and financial threshold optimization.

The grey-zone policy routes each scored email to auto-allow, auto-block,
or manual review; a feature-starvation safeguard sends ultra-short
messages that mention money straight to review regardless of score,
because they carry too little linguistic signal to trust the model.

The economics half prices outcomes in dollars (a missed fraud costs the
transaction value, a blocked legitimate email costs an investigation, a
review costs an analyst) and sweeps the threshold grid for the pair that
minimizes total expected loss. ROI here is the prevented fraction of the
no-detector baseline loss: (baseline - defended) / baseline, with
baseline = fraud_count * transaction value.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .features import Lexicon, default_lexicons, tokenize, word_count
from .normalizer import HomoglyphMap, default_homoglyph_map, normalize


@dataclass(frozen=True)
class Thresholds:
    tau_low: float
    tau_high: float

    def __post_init__(self):
        if not 0.0 <= self.tau_low <= self.tau_high <= 1.0:
            raise ValueError(
                f"need 0 <= tau_low <= tau_high <= 1, got "
                f"({self.tau_low}, {self.tau_high})")


@dataclass(frozen=True)
class CostModel:
    """Outcome prices in USD: missed fraud, blocked-legit investigation,
    human review."""

    v_transaction: float = 137_000.0
    c_inv: float = 25.0
    c_rev: float = 25.0

    def __post_init__(self):
        if min(self.v_transaction, self.c_inv, self.c_rev) < 0:
            raise ValueError("costs must be >= 0")


class Verdict(str, Enum):
    AUTO_ALLOW = "auto_allow"
    AUTO_BLOCK = "auto_block"
    MANUAL_REVIEW = "manual_review"


class Reason(str, Enum):
    BELOW_LOW = "below_low"
    ABOVE_HIGH = "above_high"
    GREY_ZONE = "grey_zone"
    SHORT_MESSAGE_SAFEGUARD = "short_message_safeguard"


_REVIEW_REASONS = {Reason.GREY_ZONE, Reason.SHORT_MESSAGE_SAFEGUARD}


@dataclass(frozen=True)
class Decision:
    verdict: Verdict
    reason: Reason

    def __post_init__(self):
        if (self.verdict is Verdict.MANUAL_REVIEW) != (self.reason in _REVIEW_REASONS):
            raise ValueError(f"inconsistent decision: {self.verdict} / {self.reason}")


@dataclass(frozen=True)
class PolicyConfig:
    """Safeguard settings: minimum word count and the financial lexicon.

    The keyword check runs over the normalized subject and body both;
    homoglyph_map defaults to the shipped map.
    """

    min_words: int = 15
    financial_keywords: Lexicon | None = None
    homoglyph_map: HomoglyphMap | None = None

    def __post_init__(self):
        if self.min_words < 0:
            raise ValueError("min_words must be >= 0")


def decide(email, p: float, thresholds: Thresholds,
           cfg: PolicyConfig = PolicyConfig()) -> Decision:
    """Route one scored email.

    Safeguard first: a body under min_words words whose normalized
    subject or body mentions a financial keyword goes to manual review
    no matter what the model says. Otherwise p < tau_low auto-allows,
    p > tau_high auto-blocks, and everything else (boundaries included)
    is the grey zone.
    """
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"probability out of range: {p}")
    hmap = cfg.homoglyph_map or default_homoglyph_map()
    keywords = cfg.financial_keywords or default_lexicons().financial_keywords
    body_text = normalize(email.body, hmap).text
    if word_count(body_text) < cfg.min_words:
        subject_text = normalize(email.subject, hmap).text
        if (keywords.matches(tokenize(body_text))
                or keywords.matches(tokenize(subject_text))):
            return Decision(Verdict.MANUAL_REVIEW, Reason.SHORT_MESSAGE_SAFEGUARD)
    if p < thresholds.tau_low:
        return Decision(Verdict.AUTO_ALLOW, Reason.BELOW_LOW)
    if p > thresholds.tau_high:
        return Decision(Verdict.AUTO_BLOCK, Reason.ABOVE_HIGH)
    return Decision(Verdict.MANUAL_REVIEW, Reason.GREY_ZONE)


@dataclass(frozen=True)
class OutcomeCounts:
    fn: int = 0
    fp: int = 0
    grey: int = 0

    def __post_init__(self):
        if min(self.fn, self.fp, self.grey) < 0:
            raise ValueError("outcome counts must be >= 0")


def expected_loss(outcomes: OutcomeCounts, costs: CostModel = CostModel()) -> float:
    """Total USD loss: fn * V + fp * c_inv + grey * c_rev."""
    return (outcomes.fn * costs.v_transaction
            + outcomes.fp * costs.c_inv
            + outcomes.grey * costs.c_rev)


@dataclass(frozen=True)
class SurfaceCell:
    tau_low: float
    tau_high: float
    fn: int
    fp: int
    grey: int
    total_usd: float


@dataclass(frozen=True)
class CostSurface:
    cells: tuple[SurfaceCell, ...]
    grid_step: float
    costs: CostModel


def sweep_cost_surface(scores: Sequence[float], labels: Sequence[int],
                       values: Sequence[float] | None = None,
                       costs: CostModel = CostModel(),
                       grid_step: float = 0.01) -> CostSurface:
    """Total loss at every (tau_low, tau_high) grid pair with low <= high.

    Outcome rules mirror decide(): fraud auto-allowed (p < tau_low) is an
    FN charged its transaction value (per-email `values` when given, the
    flat default otherwise); legitimate auto-blocked (p > tau_high) is an
    FP; everything left in the band is reviewed at c_rev regardless of
    class. The short-message safeguard is score-independent so it is
    excluded here; its cost is a constant offset per corpus.
    """
    if len(scores) != len(labels):
        raise ValueError("scores and labels differ in length")
    if not scores:
        raise ValueError("empty inputs")
    if values is not None and len(values) != len(scores):
        raise ValueError("values and scores differ in length")
    if not 0.0 < grid_step <= 0.5:
        raise ValueError("grid step must be in (0, 0.5]")

    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels, dtype=np.int64)
    if values is None:
        v = np.full(len(s), costs.v_transaction, dtype=np.float64)
    else:
        v = np.asarray(values, dtype=np.float64)

    fraud = y == 1
    fraud_order = np.argsort(s[fraud], kind="stable")
    fraud_scores = s[fraud][fraud_order]
    fraud_value_prefix = np.concatenate(
        ([0.0], np.cumsum(v[fraud][fraud_order])))
    legit_scores = np.sort(s[~fraud], kind="stable")
    n_fraud = int(fraud.sum())
    n_legit = len(s) - n_fraud

    taus = [round(i * grid_step, 10) for i in range(int(1.0 / grid_step) + 1)]
    tau_arr = np.asarray(taus, dtype=np.float64)
    fraud_below = np.searchsorted(fraud_scores, tau_arr, side="left")
    fraud_at_or_below = np.searchsorted(fraud_scores, tau_arr, side="right")
    legit_below = np.searchsorted(legit_scores, tau_arr, side="left")
    legit_at_or_below = np.searchsorted(legit_scores, tau_arr, side="right")

    cells = []
    for i, low in enumerate(taus):
        fn = int(fraud_below[i])
        fn_usd = float(fraud_value_prefix[fn])
        for j in range(i, len(taus)):
            high = taus[j]
            fp = n_legit - int(legit_at_or_below[j])
            grey = (int(fraud_at_or_below[j]) - fn
                    + int(legit_at_or_below[j]) - int(legit_below[i]))
            total = fn_usd + fp * costs.c_inv + grey * costs.c_rev
            cells.append(SurfaceCell(low, high, fn, fp, grey, total))
    return CostSurface(cells=tuple(cells), grid_step=grid_step, costs=costs)


def optimal_thresholds(surface: CostSurface) -> tuple[Thresholds, float]:
    """Grid pair with the minimum total cost; ties go to the smaller
    tau_low, then the smaller tau_high (the cell order)."""
    if not surface.cells:
        raise ValueError("empty cost surface")
    best = min(surface.cells, key=lambda c: c.total_usd)
    return Thresholds(best.tau_low, best.tau_high), best.total_usd


def roi_sensitivity(scores: Sequence[float], labels: Sequence[int],
                    costs: CostModel = CostModel(),
                    v_range: Sequence[float] = (50_000.0, 137_000.0, 250_000.0),
                    grid_step: float = 0.01) -> list[tuple[float, float]]:
    """Re-optimize thresholds at each assumed transaction value V and
    report ROI = (baseline - defended) / baseline, baseline = fraud * V."""
    if not v_range:
        raise ValueError("v_range is empty")
    if any(v <= 0 for v in v_range):
        raise ValueError("all transaction values must be > 0")
    n_fraud = sum(1 for lbl in labels if lbl == 1)
    if n_fraud == 0:
        raise ValueError("no fraud in labels; baseline loss is undefined")
    out = []
    for v in v_range:
        cm = CostModel(v_transaction=float(v), c_inv=costs.c_inv,
                       c_rev=costs.c_rev)
        surface = sweep_cost_surface(scores, labels, values=None, costs=cm,
                                     grid_step=grid_step)
        _, defended = optimal_thresholds(surface)
        baseline = n_fraud * float(v)
        out.append((float(v), (baseline - defended) / baseline))
    return out


def write_surface(surface: CostSurface, path: str | Path):
    """Export the surface as TSV for external plotting."""
    lines = [
        "# cost surface over (tau_low, tau_high); total_usd per the outcome "
        "prices below",
        f"# costs: v_transaction={surface.costs.v_transaction} "
        f"c_inv={surface.costs.c_inv} c_rev={surface.costs.c_rev}",
        "# short-message safeguard excluded: score-independent, constant "
        "cost per corpus",
        "tau_low\ttau_high\tfn\tfp\tgrey\ttotal_usd",
    ]
    for c in surface.cells:
        lines.append(f"{c.tau_low:.6g}\t{c.tau_high:.6g}\t{c.fn}\t{c.fp}\t"
                     f"{c.grey}\t{c.total_usd:.2f}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def write_roi_report(rows: Sequence[tuple[float, float]], path: str | Path):
    lines = [
        "# ROI sensitivity: thresholds re-optimized at each assumed "
        "transaction value V",
        "# ROI = (baseline - defended) / baseline; baseline = fraud_count * V "
        "(no detector), defended = minimum expected loss over the grid",
        "v_transaction_usd\troi",
    ]
    for v, roi in rows:
        lines.append(f"{v:.2f}\t{roi:.6f}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
