"""Group fairness metrics over binary predictions and protected labels.

Conventions (also recorded in every report's metadata): privileged class
is encoded 1 and unprivileged 0; probabilities are thresholded at 0.5;
the disparate-impact ratio is the unprivileged positive rate over the
privileged one with acceptance band [0.8, 1.2]; rate differences are
unprivileged minus privileged; an empty denominator makes the metric
undefined rather than a sentinel number. All counts are exact integers,
so derived ratios are reproducible bit for bit.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DataError, UndefinedMetricError

DIR_BAND = (0.8, 1.2)
DECISION_THRESHOLD = 0.5
DIFF_SIGN_CONVENTION = "unprivileged minus privileged"


@dataclass(frozen=True)
class BinarizationRule:
    """How a raw column maps onto {0 unprivileged, 1 privileged}.

    Exactly one of the two shapes is used: a numeric threshold
    (privileged iff value <= threshold) or category sets. Values covered
    by neither set are an ingestion error.
    """

    kind: str  # 'threshold_le' | 'categories'
    threshold: float | None = None
    privileged: frozenset = frozenset()
    unprivileged: frozenset = frozenset()

    def describe(self) -> dict:
        if self.kind == "threshold_le":
            return {"kind": self.kind, "privileged_if_le": self.threshold}
        return {
            "kind": self.kind,
            "privileged": sorted(self.privileged),
            "unprivileged": sorted(self.unprivileged),
        }


# ADULT census rules: age <= 40, White/Asian-Pac-Islander, and Male are
# the privileged classes.
ADULT_RULES = {
    "age": BinarizationRule(kind="threshold_le", threshold=40.0),
    "race": BinarizationRule(
        kind="categories",
        privileged=frozenset({"White", "Asian-Pac-Islander"}),
        unprivileged=frozenset({"Black", "Amer-Indian-Eskimo", "Other"}),
    ),
    "sex": BinarizationRule(
        kind="categories",
        privileged=frozenset({"Male"}),
        unprivileged=frozenset({"Female"}),
    ),
}


@dataclass
class ProtectedLabeling:
    """A named binary protected attribute: 1 privileged, 0 unprivileged."""

    name: str
    values: np.ndarray
    binarization_rule: dict = field(default_factory=dict)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.uint8)
        if not np.isin(self.values, (0, 1)).all():
            raise DataError(f"protected label {self.name!r} must be binary")

    def require_both_groups(self):
        if not (self.values == 0).any() or not (self.values == 1).any():
            raise DataError(
                f"protected label {self.name!r} has an empty group on this split"
            )

    def subset(self, index) -> "ProtectedLabeling":
        return ProtectedLabeling(self.name, self.values[index], self.binarization_rule)


@dataclass
class GroupConfusion:
    tp: int
    fp: int
    tn: int
    fn: int

    @property
    def positives(self) -> int:
        return self.tp + self.fp

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn


@dataclass
class FairnessReport:
    protected_name: str
    dir: float | None
    dir_defined: bool
    fn_diff: float | None
    fp_diff: float | None
    group_confusions: dict[int, GroupConfusion]
    in_band: bool
    notes: list[str] = field(default_factory=list)

    def to_record(self) -> dict:
        rec = {
            "protected": self.protected_name,
            "dir": self.dir,
            "dir_defined": self.dir_defined,
            "fn_diff": self.fn_diff,
            "fp_diff": self.fp_diff,
            "in_band": self.in_band,
            "threshold": DECISION_THRESHOLD,
            "diff_sign": DIFF_SIGN_CONVENTION,
            "notes": self.notes,
        }
        for cls in (0, 1):
            c = self.group_confusions[cls]
            tag = "unpriv" if cls == 0 else "priv"
            rec.update({f"{tag}_tp": c.tp, f"{tag}_fp": c.fp,
                        f"{tag}_tn": c.tn, f"{tag}_fn": c.fn})
        return rec


def threshold_predictions(scores: np.ndarray) -> np.ndarray:
    """Probabilities (or already-binary values) to {0, 1} decisions."""
    s = np.asarray(scores, dtype=np.float64)
    return (s >= DECISION_THRESHOLD).astype(np.uint8)


def _positive_rate(predictions, group_mask, name, group_label):
    n = int(group_mask.sum())
    if n == 0:
        raise DataError(f"{name!r}: {group_label} group is empty")
    pos = int(predictions[group_mask].sum())
    return pos, n


def disparate_impact(predictions: np.ndarray, protected: ProtectedLabeling) -> float:
    """Unprivileged positive rate over privileged positive rate.

    Raises UndefinedMetricError when the privileged rate is zero; the
    ratio is never silently turned into infinity.
    """
    pred = threshold_predictions(predictions)
    vals = protected.values
    if pred.shape != vals.shape:
        raise DataError("predictions and protected labels differ in length")
    unpriv_pos, unpriv_n = _positive_rate(pred, vals == 0, protected.name, "unprivileged")
    priv_pos, priv_n = _positive_rate(pred, vals == 1, protected.name, "privileged")
    if priv_pos == 0:
        raise UndefinedMetricError(
            f"{protected.name!r}: privileged positive rate is 0 "
            f"({priv_pos}/{priv_n}); disparate impact undefined"
        )
    # Exact integer cross-ratio, one float division.
    return (unpriv_pos * priv_n) / (priv_pos * unpriv_n)


def group_confusions(predictions: np.ndarray, truth: np.ndarray,
                     protected: ProtectedLabeling) -> dict[int, GroupConfusion]:
    pred = threshold_predictions(predictions)
    y = np.asarray(truth).astype(np.uint8)
    out = {}
    for cls in (0, 1):
        m = protected.values == cls
        p, t = pred[m], y[m]
        out[cls] = GroupConfusion(
            tp=int(((p == 1) & (t == 1)).sum()),
            fp=int(((p == 1) & (t == 0)).sum()),
            tn=int(((p == 0) & (t == 0)).sum()),
            fn=int(((p == 0) & (t == 1)).sum()),
        )
    return out


def equalized_odds_diffs(predictions: np.ndarray, truth: np.ndarray,
                         protected: ProtectedLabeling) -> tuple[float | None, float | None]:
    """FN-rate and FP-rate differences, unprivileged minus privileged.

    FN rate is FN/(FN+TP), FP rate FP/(FP+TN), per group. A component is
    None when either group lacks the ground-truth cases that define it;
    undefined is never reported as zero.
    """
    protected.require_both_groups()
    conf = group_confusions(predictions, truth, protected)

    def rate(num, den_a, den_b):
        den = den_a + den_b
        return None if den == 0 else num / den

    fn_rates = {c: rate(conf[c].fn, conf[c].fn, conf[c].tp) for c in (0, 1)}
    fp_rates = {c: rate(conf[c].fp, conf[c].fp, conf[c].tn) for c in (0, 1)}
    fn_diff = None if None in fn_rates.values() else fn_rates[0] - fn_rates[1]
    fp_diff = None if None in fp_rates.values() else fp_rates[0] - fp_rates[1]
    return fn_diff, fp_diff


def fairness_transform(dir_score: float) -> float:
    """Distance of a disparate-impact ratio from the ideal value 1."""
    if not np.isfinite(dir_score):
        raise DataError("disparate-impact score must be finite")
    return abs(1.0 - dir_score)


def binarize_protected(raw_column, name: str, rule: BinarizationRule) -> ProtectedLabeling:
    """Apply a binarization rule to a raw column.

    Every observed value must be covered by the rule; anything unmapped
    is an ingestion error naming the value.
    """
    if rule.kind == "threshold_le":
        col = np.asarray(raw_column, dtype=np.float64)
        if not np.isfinite(col).all():
            raise DataError(f"{name!r}: non-finite value in threshold binarization")
        values = (col <= rule.threshold).astype(np.uint8)
    elif rule.kind == "categories":
        values = np.empty(len(raw_column), dtype=np.uint8)
        for i, v in enumerate(raw_column):
            if v in rule.privileged:
                values[i] = 1
            elif v in rule.unprivileged:
                values[i] = 0
            else:
                raise DataError(f"{name!r}: unmapped raw value {v!r}")
    else:
        raise DataError(f"unknown binarization rule kind {rule.kind!r}")
    return ProtectedLabeling(name=name, values=values, binarization_rule=rule.describe())


def build_fairness_report(predictions: np.ndarray, truth: np.ndarray,
                          protected: ProtectedLabeling) -> FairnessReport:
    """Full audit record for one protected label."""
    protected.require_both_groups()
    notes = []
    try:
        dir_score = disparate_impact(predictions, protected)
        dir_defined = True
    except UndefinedMetricError as exc:
        dir_score, dir_defined = None, False
        notes.append(str(exc))
    fn_diff, fp_diff = equalized_odds_diffs(predictions, truth, protected)
    if fn_diff is None:
        notes.append("FN-rate difference undefined: a group has no positive cases")
    if fp_diff is None:
        notes.append("FP-rate difference undefined: a group has no negative cases")
    in_band = dir_defined and DIR_BAND[0] <= dir_score <= DIR_BAND[1]
    return FairnessReport(
        protected_name=protected.name,
        dir=dir_score,
        dir_defined=dir_defined,
        fn_diff=fn_diff,
        fp_diff=fp_diff,
        group_confusions=group_confusions(predictions, truth, protected),
        in_band=in_band,
        notes=notes,
    )


def reports_to_csv(reports: list[FairnessReport], path: str | Path, model_id: str = "model"):
    cols = ["model_id", "protected", "dir", "fn_diff", "fp_diff", "in_band",
            "unpriv_tp", "unpriv_fp", "unpriv_tn", "unpriv_fn",
            "priv_tp", "priv_fp", "priv_tn", "priv_fn"]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(cols)
        for r in reports:
            rec = r.to_record()
            row = [model_id, rec["protected"],
                   "" if rec["dir"] is None else repr(rec["dir"]),
                   "" if rec["fn_diff"] is None else repr(rec["fn_diff"]),
                   "" if rec["fp_diff"] is None else repr(rec["fp_diff"]),
                   rec["in_band"],
                   rec["unpriv_tp"], rec["unpriv_fp"], rec["unpriv_tn"], rec["unpriv_fn"],
                   rec["priv_tp"], rec["priv_fp"], rec["priv_tn"], rec["priv_fn"]]
            writer.writerow(row)


def format_report_table(reports: list[FairnessReport]) -> str:
    """Fixed-width human-readable audit table."""
    header = f"{'protected':<16}{'DIR':>10}{'FN diff':>10}{'FP diff':>10}{'in band':>9}"
    lines = [header, "-" * len(header)]
    for r in reports:
        dir_s = "undefined" if r.dir is None else f"{r.dir:.4f}"
        fn_s = "undef" if r.fn_diff is None else f"{r.fn_diff:.4f}"
        fp_s = "undef" if r.fp_diff is None else f"{r.fp_diff:.4f}"
        lines.append(f"{r.protected_name:<16}{dir_s:>10}{fn_s:>10}{fp_s:>10}"
                     f"{str(r.in_band):>9}")
    return "\n".join(lines) + "\n"
