"""Confusion matrices, UAR, the cross-route protocol, speed strata, PCA.

The headline protocol trains on one route's wet+dry trip pair and tests
on a different route's pair; with three routes that yields six ordered
train/test experiments whose UARs are averaged arithmetically. Recall of
a class with zero true examples is treated as undefined: an error at the
whole-evaluation level, an explicit None within a speed stratum.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError
from .ingest import DRY, WET, LabeledSequence, TripManifest

CLASS_NAMES = ("dry", "wet")
DEFAULT_SPEED_THRESHOLD_MPH = 2.9


class UndefinedRecallError(ValidationError):
    """A class with zero true examples has no recall."""


@dataclass
class ConfusionMatrix:
    """counts[true][predicted] over classes (dry=0, wet=1)."""

    counts: np.ndarray = field(default_factory=lambda: np.zeros((2, 2), dtype=np.int64))

    @classmethod
    def from_predictions(cls, labels, predictions) -> "ConfusionMatrix":
        labels = np.asarray(labels, dtype=np.int64)
        predictions = np.asarray(predictions, dtype=np.int64)
        if labels.shape != predictions.shape:
            raise ValidationError("labels and predictions must have equal length")
        cm = cls()
        np.add.at(cm.counts, (labels, predictions), 1)
        return cm

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def recalls(self) -> list[float | None]:
        out = []
        for c in range(self.counts.shape[0]):
            row_total = self.counts[c].sum()
            out.append(float(self.counts[c, c] / row_total) if row_total > 0 else None)
        return out


def uar(cm: ConfusionMatrix) -> float:
    """Unweighted average recall: the arithmetic mean of per-class recalls."""
    recalls = cm.recalls()
    if any(r is None for r in recalls):
        missing = [CLASS_NAMES[c] for c, r in enumerate(recalls) if r is None]
        raise UndefinedRecallError(f"no true examples for class(es): {', '.join(missing)}")
    return float(np.mean(recalls))


@dataclass
class Timeline:
    """Per-frame evaluation record for one or more trips."""

    trip_ids: list[str]
    times: np.ndarray
    speeds: np.ndarray
    labels: np.ndarray
    predictions: np.ndarray
    scores: np.ndarray  # wetness score in [0, 1] (posterior or squashed margin)

    def __post_init__(self):
        n = len(self.trip_ids)
        for arr in (self.times, self.speeds, self.labels, self.predictions, self.scores):
            if len(arr) != n:
                raise ValidationError("timeline columns must have equal length")

    @classmethod
    def concatenate(cls, parts: list["Timeline"]) -> "Timeline":
        return cls(
            trip_ids=[t for p in parts for t in p.trip_ids],
            times=np.concatenate([p.times for p in parts]) if parts else np.zeros(0),
            speeds=np.concatenate([p.speeds for p in parts]) if parts else np.zeros(0),
            labels=np.concatenate([p.labels for p in parts]) if parts else np.zeros(0, dtype=np.int64),
            predictions=np.concatenate([p.predictions for p in parts]) if parts else np.zeros(0, dtype=np.int64),
            scores=np.concatenate([p.scores for p in parts]) if parts else np.zeros(0),
        )


def speed_stratified_uar(timeline: Timeline, threshold: float):
    """UAR on the partition speed < threshold vs speed >= threshold.

    Returns (uar_below, uar_at_or_above, counts); a stratum missing a
    class (or empty) reports None rather than raising.
    """
    below = timeline.speeds < threshold
    results = []
    counts = {}
    for name, mask in (("below", below), ("at_or_above", ~below)):
        counts[name] = int(mask.sum())
        if not mask.any():
            results.append(None)
            continue
        cm = ConfusionMatrix.from_predictions(timeline.labels[mask], timeline.predictions[mask])
        recalls = cm.recalls()
        results.append(None if any(r is None for r in recalls) else float(np.mean(recalls)))
    return results[0], results[1], counts


def false_prediction_timeline(timeline: Timeline) -> list[tuple[float, float]]:
    """(time_s, speed_mph) of misclassified frames, in time order."""
    wrong = timeline.predictions != timeline.labels
    pairs = sorted(zip(timeline.times[wrong], timeline.speeds[wrong]))
    return [(float(t), float(s)) for t, s in pairs]


@dataclass
class ExperimentResult:
    train_route: int
    test_route: int
    confusion: ConfusionMatrix
    uar: float
    timeline: Timeline
    uar_below: float | None
    uar_at_or_above: float | None
    stratum_counts: dict


@dataclass
class EvalReport:
    experiments: list[ExperimentResult]
    mean_uar: float
    speed_threshold_mph: float

    def to_dict(self) -> dict:
        return {
            "protocol": "cross-route",
            "speed_threshold_mph": self.speed_threshold_mph,
            "mean_uar": self.mean_uar,
            "experiments": [
                {
                    "train_route": e.train_route,
                    "test_route": e.test_route,
                    "uar": e.uar,
                    "confusion": {
                        "classes": list(CLASS_NAMES),
                        "counts": e.confusion.counts.tolist(),
                    },
                    "frames": e.confusion.total,
                    "speed_stratified": {
                        "threshold_mph": self.speed_threshold_mph,
                        "uar_below": e.uar_below,
                        "uar_at_or_above": e.uar_at_or_above,
                        "counts": e.stratum_counts,
                    },
                }
                for e in self.experiments
            ],
        }


def _group_by_route(trips):
    routes: dict[int, dict[int, tuple]] = {}
    for manifest, seq in trips:
        if seq.features is None:
            raise ValidationError(f"trip {manifest.trip_id} has no features attached")
        per_route = routes.setdefault(manifest.route_id, {})
        if manifest.condition in per_route:
            raise ValidationError(
                f"route {manifest.route_id} has duplicate "
                f"{CLASS_NAMES[manifest.condition]} trips"
            )
        per_route[manifest.condition] = (manifest, seq)
    for route_id, per_route in routes.items():
        for cond in (DRY, WET):
            if cond not in per_route:
                raise ValidationError(f"route {route_id} is missing a {CLASS_NAMES[cond]} trip")
    return routes


def cross_route_eval(trips, trainer, predictor,
                     speed_threshold: float = DEFAULT_SPEED_THRESHOLD_MPH) -> EvalReport:
    """Run every ordered (train route, test route) pair.

    trips: list of (TripManifest, LabeledSequence-with-features) covering
    one wet and one dry trip per route. trainer(train_trips) -> model;
    predictor(model, sequence) -> (predicted classes, wetness scores).
    Three routes produce the six-experiment protocol; the aggregate is
    the arithmetic mean of per-experiment UARs.
    """
    routes = _group_by_route(trips)
    if len(routes) < 2:
        raise ValidationError("cross-route evaluation needs at least two routes")
    route_ids = sorted(routes)
    experiments = []
    for train_route in route_ids:
        for test_route in route_ids:
            if train_route == test_route:
                continue
            train_trips = [routes[train_route][c] for c in (DRY, WET)]
            model = trainer(train_trips)
            parts = []
            for cond in (DRY, WET):
                manifest, seq = routes[test_route][cond]
                preds, scores = predictor(model, seq)
                preds = np.asarray(preds, dtype=np.int64)
                if preds.shape[0] != len(seq.frame_times):
                    raise ValidationError("predictor returned wrong frame count")
                parts.append(
                    Timeline(
                        trip_ids=[manifest.trip_id] * len(seq.frame_times),
                        times=seq.frame_times,
                        speeds=seq.speeds,
                        labels=seq.labels,
                        predictions=preds,
                        scores=np.asarray(scores, dtype=np.float64),
                    )
                )
            timeline = Timeline.concatenate(parts)
            cm = ConfusionMatrix.from_predictions(timeline.labels, timeline.predictions)
            below, at_or_above, counts = speed_stratified_uar(timeline, speed_threshold)
            experiments.append(
                ExperimentResult(
                    train_route=train_route,
                    test_route=test_route,
                    confusion=cm,
                    uar=uar(cm),
                    timeline=timeline,
                    uar_below=below,
                    uar_at_or_above=at_or_above,
                    stratum_counts=counts,
                )
            )
    mean_uar = float(np.mean([e.uar for e in experiments]))
    return EvalReport(experiments=experiments, mean_uar=mean_uar,
                      speed_threshold_mph=speed_threshold)


def pca_project(features, k: int = 2):
    """Project column-centered data onto the top-k covariance eigenvectors.

    Component signs are fixed by making each component's largest-magnitude
    loading positive. Returns (projected n x k matrix, explained-variance
    fractions of total variance).
    """
    X = features.values if hasattr(features, "values") else np.asarray(features, dtype=np.float64)
    n, d = X.shape
    if n < 2:
        raise ValidationError("PCA needs at least two rows")
    if k > d:
        raise ValidationError(f"k={k} exceeds feature dimension {d}")
    centered = X - X.mean(axis=0)
    cov = centered.T @ centered / (n - 1)
    eigvals, eigvecs = np.linalg.eigh(cov)
    order = np.argsort(eigvals)[::-1][:k]
    components = eigvecs[:, order]
    for j in range(components.shape[1]):
        pivot = np.argmax(np.abs(components[:, j]))
        if components[pivot, j] < 0:
            components[:, j] = -components[:, j]
    projected = centered @ components
    total = eigvals.sum()
    top = np.maximum(eigvals[order], 0.0)
    fractions = top / total if total > 0 else np.zeros(k)
    return projected, fractions


def write_report(path, report: EvalReport) -> None:
    with open(path, "w") as fh:
        json.dump(report.to_dict(), fh, indent=2)
        fh.write("\n")


def write_timeline_csv(path, report: EvalReport) -> None:
    """Flat per-frame CSV across all experiments, for external plotting."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["train_route", "test_route", "trip_id", "time_s",
                         "speed_mph", "label", "prediction", "posterior_wet"])
        for e in report.experiments:
            tl = e.timeline
            for i in range(len(tl.trip_ids)):
                writer.writerow([
                    e.train_route, e.test_route, tl.trip_ids[i],
                    f"{tl.times[i]:.9g}", f"{tl.speeds[i]:.9g}",
                    int(tl.labels[i]), int(tl.predictions[i]),
                    f"{tl.scores[i]:.9g}",
                ])
