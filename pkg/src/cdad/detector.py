"""Prediction errors -> anomaly scores -> thresholds -> alarms.

Per-domain scores are the max over (node, channel) of robustly normalized
absolute errors; thresholds are the max validation score, so the
calibration span itself never alarms (strict inequality).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

IQR_EPS = 0.01


@dataclass
class RobustStats:
    median: np.ndarray  # N x C
    iqr: np.ndarray  # N x C


@dataclass
class AnomalyScoreSeries:
    domain_id: str
    scores: np.ndarray  # T
    normalized_errors: np.ndarray  # T x N x C
    top_node: np.ndarray  # T, argmax node of the score


@dataclass
class ThresholdSet:
    thresholds: dict[str, float]
    validation_steps: int


@dataclass
class DetectionResult:
    labels: np.ndarray  # T, binary
    domains: list[list[str]]  # contributing domains per step (empty if no alarm)
    top_node: np.ndarray  # T, argmax node among contributing domains, -1 if none
    truth: np.ndarray | None = None


def robust_error_stats(val_errors: np.ndarray) -> RobustStats:
    """Per (node, channel) median and interquartile range of validation-span
    absolute errors (T x N x C), quantiles by linear interpolation."""
    if val_errors.shape[0] == 0:
        raise ValueError("empty validation errors")
    q25, q50, q75 = np.quantile(val_errors, [0.25, 0.5, 0.75], axis=0)
    return RobustStats(median=q50, iqr=q75 - q25)


def score(pred: np.ndarray, actual: np.ndarray, stats: RobustStats, domain_id: str) -> AnomalyScoreSeries:
    """pred/actual: T x N x C. Normalized error (|err| - median) / (iqr + eps),
    domain score = max over (node, channel)."""
    err = np.abs(pred - actual)
    norm = (err - stats.median) / (stats.iqr + IQR_EPS)
    flat = norm.reshape(norm.shape[0], -1)
    scores = flat.max(axis=1)
    top_flat = flat.argmax(axis=1)
    top_node = top_flat // norm.shape[2]
    return AnomalyScoreSeries(
        domain_id=domain_id, scores=scores, normalized_errors=norm, top_node=top_node
    )


def calibrate(val_scores: dict[str, AnomalyScoreSeries]) -> ThresholdSet:
    """Per-domain threshold = max validation score."""
    steps = {len(s.scores) for s in val_scores.values()}
    if not steps or 0 in steps:
        raise ValueError("empty validation scores")
    return ThresholdSet(
        thresholds={d: float(s.scores.max()) for d, s in val_scores.items()},
        validation_steps=max(steps),
    )


def detect(
    test_scores: dict[str, AnomalyScoreSeries],
    thresholds: ThresholdSet,
    truth: np.ndarray | None = None,
    fused: bool = False,
) -> DetectionResult:
    """Alarm at step t iff some domain's score strictly exceeds its threshold.

    `fused` mode instead thresholds the max of normalized scores
    (score / threshold) against 1, which is equivalent for positive
    thresholds but yields one fused score stream.
    """
    domains = list(test_scores)
    T = len(test_scores[domains[0]].scores)
    labels = np.zeros(T, dtype=np.int64)
    contributing: list[list[str]] = [[] for _ in range(T)]
    top_node = np.full(T, -1, dtype=np.int64)

    if fused:
        ratios = np.stack(
            [test_scores[d].scores / max(thresholds.thresholds[d], 1e-12) for d in domains]
        )
        fired = ratios.max(axis=0) > 1.0
        which = ratios.argmax(axis=0)
        for t in np.nonzero(fired)[0]:
            d = domains[which[t]]
            labels[t] = 1
            contributing[t].append(d)
            top_node[t] = test_scores[d].top_node[t]
    else:
        best = np.full(T, -np.inf)
        for d in domains:
            s = test_scores[d]
            thr = thresholds.thresholds[d]
            over = s.scores > thr
            for t in np.nonzero(over)[0]:
                labels[t] = 1
                contributing[t].append(d)
                excess = s.scores[t] - thr
                if excess > best[t]:
                    best[t] = excess
                    top_node[t] = s.top_node[t]

    return DetectionResult(labels=labels, domains=contributing, top_node=top_node, truth=truth)


def write_scores_csv(
    path,
    timestamps: np.ndarray,
    test_scores: dict[str, AnomalyScoreSeries],
    thresholds: ThresholdSet,
    result: DetectionResult,
) -> None:
    """CSV: timestamp,score_phys,score_net,thresh_phys,thresh_net,label,truth,top_node."""
    phys = test_scores.get("physical")
    net = test_scores.get("network")
    tp = thresholds.thresholds.get("physical", np.nan)
    tn = thresholds.thresholds.get("network", np.nan)
    truth = result.truth if result.truth is not None else np.zeros_like(result.labels)
    with open(path, "w") as f:
        f.write("timestamp,score_phys,score_net,thresh_phys,thresh_net,label,truth,top_node\n")
        for t in range(len(result.labels)):
            sp = phys.scores[t] if phys is not None else np.nan
            sn = net.scores[t] if net is not None else np.nan
            f.write(
                f"{timestamps[t]},{sp:.17g},{sn:.17g},{tp:.17g},{tn:.17g},"
                f"{result.labels[t]},{truth[t]},{result.top_node[t]}\n"
            )
