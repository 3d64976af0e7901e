"""Detector evaluation: ROC curves, AUROC, Pd@FAR, fakeness percentiles.

The positive class is always "fake" and higher scores mean more fake; every
report written by this module states that convention in its header.
"""

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DataError, DimensionError, FormatError, ParameterError

LABEL_REAL = "real"
LABEL_FAKE = "fake"

POSITIVE_CLASS_NOTE = "positive_class=fake (higher score = more fake)"


@dataclass(frozen=True)
class ScoreSet:
    """Labeled detector scores. labels[i] is True for fake, False for real."""

    ids: tuple[str, ...]
    labels: np.ndarray
    scores: np.ndarray

    def __post_init__(self):
        labels = np.asarray(self.labels, dtype=bool)
        scores = np.asarray(self.scores, dtype=np.float64)
        if len(self.ids) != labels.size or labels.size != scores.size:
            raise DimensionError("ids, labels and scores must have equal length")
        if not np.all(np.isfinite(scores)):
            raise DataError("scores must be finite")
        object.__setattr__(self, "ids", tuple(self.ids))
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "scores", scores)

    def __len__(self) -> int:
        return self.scores.size

    @property
    def n_fake(self) -> int:
        return int(self.labels.sum())

    @property
    def n_real(self) -> int:
        return int((~self.labels).sum())


@dataclass(frozen=True)
class RocCurve:
    """ROC points ordered by descending threshold; fpr/tpr nondecreasing,
    starting at (0, 0) and ending at (1, 1)."""

    fpr: np.ndarray
    tpr: np.ndarray
    thresholds: np.ndarray


def _require_both_classes(s: ScoreSet, op: str) -> None:
    if s.n_fake == 0 or s.n_real == 0:
        raise DataError(f"{op} requires at least one real and one fake entry "
                        f"(got {s.n_real} real, {s.n_fake} fake)")


def roc_curve(s: ScoreSet) -> RocCurve:
    """Sweep all distinct scores as thresholds (prediction: score >= threshold).

    Tied scores collapse onto a single curve point. The curve is prefixed
    with (0, 0) at threshold +inf.
    """
    _require_both_classes(s, "roc_curve")
    order = np.argsort(-s.scores, kind="stable")
    sorted_scores = s.scores[order]
    sorted_fake = s.labels[order].astype(np.int64)
    cum_tp = np.cumsum(sorted_fake)
    cum_fp = np.cumsum(1 - sorted_fake)
    # keep only the last index of each run of equal scores
    last_of_run = np.flatnonzero(np.diff(sorted_scores, append=np.nan) != 0)
    tpr = cum_tp[last_of_run] / s.n_fake
    fpr = cum_fp[last_of_run] / s.n_real
    thresholds = sorted_scores[last_of_run]
    return RocCurve(
        fpr=np.concatenate(([0.0], fpr)),
        tpr=np.concatenate(([0.0], tpr)),
        thresholds=np.concatenate(([np.inf], thresholds)),
    )


def auroc(s: ScoreSet) -> float:
    """Probability that a random fake outscores a random real (ties get 1/2).

    Computed by explicit pair counting; exact up to one final division.
    """
    _require_both_classes(s, "auroc")
    fake_scores = np.sort(s.scores[s.labels])
    real_scores = np.sort(s.scores[~s.labels])
    # For each fake score: number of reals strictly below, plus half the ties.
    below = np.searchsorted(real_scores, fake_scores, side="left")
    below_or_equal = np.searchsorted(real_scores, fake_scores, side="right")
    wins_times_2 = 2 * below.sum() + (below_or_equal - below).sum()
    return float(wins_times_2) / float(2 * len(fake_scores) * len(real_scores))


def pd_at_far(roc: RocCurve, far: float, interpolate: bool = False) -> float:
    """True positive rate at a false-alarm budget.

    Default is the conservative step rule: the maximum tpr among curve points
    with fpr <= far (never overstates the detector). With ``interpolate``,
    the tpr is linearly interpolated between the surrounding curve points.
    """
    if not 0.0 < far < 1.0:
        raise ParameterError(f"far must be in (0, 1), got {far}")
    if interpolate:
        return float(np.interp(far, roc.fpr, roc.tpr))
    eligible = roc.fpr <= far
    return float(roc.tpr[eligible].max()) if eligible.any() else 0.0


def fakeness_percentiles(s: ScoreSet, percentiles) -> list[tuple[float, list[str]]]:
    """Rank entries by score (ascending; the 100th percentile is most fake).

    Percentile p selects rank floor(p/100 * (n-1)) of the sorted order and
    returns every id whose score ties with that rank's score, in id order.
    """
    if len(s) == 0:
        raise DataError("fakeness_percentiles requires a nonempty score set")
    order = sorted(range(len(s)), key=lambda i: (s.scores[i], s.ids[i]))
    sorted_scores = s.scores[np.array(order)]
    out = []
    for p in percentiles:
        if not 0.0 <= p <= 100.0:
            raise ParameterError(f"percentile must be in [0, 100], got {p}")
        rank = int(np.floor(p / 100.0 * (len(s) - 1)))
        target = sorted_scores[rank]
        bucket = sorted(s.ids[i] for i in order if s.scores[i] == target)
        out.append((float(p), bucket))
    return out


def read_score_csv(path) -> ScoreSet:
    """Read a score file: header ``id,label,score``, label in {real, fake}."""
    path = Path(path)
    ids: list[str] = []
    labels: list[bool] = []
    scores: list[float] = []
    with path.open(newline="", encoding="utf-8") as f:
        reader = csv.reader(f)
        lineno = 0
        header = None
        for row in reader:
            lineno += 1
            if not row or row[0].startswith("#"):
                continue
            if header is None:
                header = [cell.strip().lower() for cell in row]
                if header != ["id", "label", "score"]:
                    raise FormatError(f"{path}:{lineno}: expected header id,label,score, got {row}")
                continue
            if len(row) != 3:
                raise FormatError(f"{path}:{lineno}: expected 3 columns, got {len(row)}")
            label = row[1].strip().lower()
            if label not in (LABEL_REAL, LABEL_FAKE):
                raise FormatError(f"{path}:{lineno}: label must be real or fake, got {row[1]!r}")
            try:
                score = float(row[2])
            except ValueError as exc:
                raise FormatError(f"{path}:{lineno}: bad score {row[2]!r}") from exc
            ids.append(row[0])
            labels.append(label == LABEL_FAKE)
            scores.append(score)
    if header is None:
        raise FormatError(f"{path}: empty score file")
    return ScoreSet(ids=tuple(ids), labels=np.array(labels, dtype=bool), scores=np.array(scores))


def write_score_csv(path, s: ScoreSet) -> None:
    rows = [
        (s.ids[i], LABEL_FAKE if s.labels[i] else LABEL_REAL, repr(float(s.scores[i])))
        for i in range(len(s))
    ]
    from .serialize import write_csv

    write_csv(path, ["id", "label", "score"], rows, comments={"note": POSITIVE_CLASS_NOTE})


def evaluate_scores(s: ScoreSet, fars=(0.05, 0.01)) -> dict:
    """AUROC plus Pd@FAR at the requested budgets (fractions in [0, 1])."""
    roc = roc_curve(s)
    result = {"auroc": auroc(s)}
    for far in fars:
        result[f"pd_at_{far:g}"] = pd_at_far(roc, far)
    return result
