"""Feature selection: Information Gain ranking and CFS subset search.

Continuous feature columns are first discretized by recursive
minimum-description-length splitting; entropy, information gain and
symmetric uncertainty are then computed on the resulting bins. Two
selection paths are exposed: a univariate IG ranking and a multivariate
correlation-based subset search driven by BestFirst forward expansion.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError


def _entropy_from_counts(counts: np.ndarray) -> float:
    counts = counts[counts > 0]
    total = counts.sum()
    if total == 0:
        return 0.0
    p = counts / total
    return float(-(p * np.log2(p)).sum())


def entropy(labels) -> float:
    """Shannon entropy of a class sequence in bits, 0 log 0 taken as 0."""
    labels = np.asarray(labels)
    if labels.size == 0:
        raise ValidationError("entropy of an empty sequence is undefined")
    _, counts = np.unique(labels, return_counts=True)
    return _entropy_from_counts(counts)


def _row_entropies(count_rows: np.ndarray) -> np.ndarray:
    # entropy per row of a (m, classes) count matrix
    totals = count_rows.sum(axis=1, keepdims=True).astype(np.float64)
    with np.errstate(divide="ignore", invalid="ignore"):
        p = np.where(totals > 0, count_rows / totals, 0.0)
        terms = np.where(p > 0, p * np.log2(p), 0.0)
    return -terms.sum(axis=1)


def mdl_discretize(feature_values, labels) -> np.ndarray:
    """Supervised cut points for one feature via recursive MDL splitting.

    Candidate cuts are midpoints between consecutive distinct sorted
    values. The best cut (maximum information gain, earliest on ties) is
    accepted only when

        gain > (log2(N-1) + log2(3^k - 2) - k H(S) + k1 H(S1) + k2 H(S2)) / N

    with k, k1, k2 the class counts present in the segment and its two
    halves; accepted cuts recurse into both halves. No accepted split
    yields an empty cut list (a single interval).
    """
    values = np.asarray(feature_values, dtype=np.float64)
    labels = np.asarray(labels)
    if values.shape[0] != labels.shape[0]:
        raise ValidationError("feature values and labels must have equal length")
    if values.size == 0:
        return np.zeros(0)
    _, codes = np.unique(labels, return_inverse=True)
    num_classes = codes.max() + 1
    order = np.argsort(values, kind="stable")
    vals = values[order]
    codes = codes[order]
    onehot = np.zeros((vals.size, num_classes), dtype=np.int64)
    onehot[np.arange(vals.size), codes] = 1
    prefix = np.zeros((vals.size + 1, num_classes), dtype=np.int64)
    np.cumsum(onehot, axis=0, out=prefix[1:])

    cuts: list[float] = []

    def split(lo: int, hi: int) -> None:
        n = hi - lo
        if n < 2:
            return
        seg_counts = prefix[hi] - prefix[lo]
        h_s = _entropy_from_counts(seg_counts)
        if h_s == 0.0:
            return
        cand = lo + np.nonzero(vals[lo : hi - 1] != vals[lo + 1 : hi])[0]
        if cand.size == 0:
            return
        left = prefix[cand + 1] - prefix[lo]
        right = seg_counts[None, :] - left
        n_left = left.sum(axis=1)
        n_right = n - n_left
        h_left = _row_entropies(left)
        h_right = _row_entropies(right)
        gains = h_s - (n_left * h_left + n_right * h_right) / n
        best = int(np.argmax(gains))
        gain = gains[best]
        k = int((seg_counts > 0).sum())
        k1 = int((left[best] > 0).sum())
        k2 = int((right[best] > 0).sum())
        delta = np.log2(3.0**k - 2.0) - (k * h_s - k1 * h_left[best] - k2 * h_right[best])
        threshold = (np.log2(n - 1.0) + delta) / n
        if gain <= threshold:
            return
        p = cand[best]
        cuts.append(0.5 * (vals[p] + vals[p + 1]))
        split(lo, p + 1)
        split(p + 1, hi)

    split(0, vals.size)
    return np.sort(np.array(cuts))


def equal_width_cuts(feature_values, num_bins: int = 10) -> np.ndarray:
    """Unsupervised fallback: num_bins equal-width intervals."""
    values = np.asarray(feature_values, dtype=np.float64)
    lo, hi = values.min(), values.max()
    if hi <= lo:
        return np.zeros(0)
    return lo + (hi - lo) * np.arange(1, num_bins) / num_bins


@dataclass
class Discretizer:
    """Per-feature cut points; values <= cut fall in the lower bin."""

    cut_points: list[np.ndarray]

    def __post_init__(self):
        for cuts in self.cut_points:
            if np.any(np.diff(cuts) <= 0):
                raise ValidationError("cut points must be strictly increasing")

    @classmethod
    def fit(cls, columns: np.ndarray, labels, method: str = "mdl") -> "Discretizer":
        columns = np.asarray(columns, dtype=np.float64)
        if method == "mdl":
            cuts = [mdl_discretize(columns[:, j], labels) for j in range(columns.shape[1])]
        elif method == "width10":
            cuts = [equal_width_cuts(columns[:, j]) for j in range(columns.shape[1])]
        else:
            raise ValidationError(f"unknown discretization method {method!r}")
        return cls(cut_points=cuts)

    def transform_column(self, j: int, values) -> np.ndarray:
        return np.searchsorted(self.cut_points[j], np.asarray(values), side="left")


def info_gain(feature_values, labels, cuts) -> float:
    """IG = H(labels) - sum over bins of (n_v / N) H(labels | bin v)."""
    values = np.asarray(feature_values, dtype=np.float64)
    labels = np.asarray(labels)
    if values.shape[0] != labels.shape[0]:
        raise ValidationError("feature values and labels must have equal length")
    cuts = np.asarray(cuts, dtype=np.float64)
    bins = np.searchsorted(cuts, values, side="left")
    h = entropy(labels)
    n = labels.shape[0]
    cond = 0.0
    for b in np.unique(bins):
        mask = bins == b
        cond += mask.sum() / n * entropy(labels[mask])
    return h - cond


@dataclass
class RankedFeatures:
    """Feature indices with IG scores, sorted non-increasing."""

    ranking: list[tuple[int, float]]

    def __post_init__(self):
        scores = [s for _, s in self.ranking]
        if any(b > a for a, b in zip(scores, scores[1:])):
            raise ValidationError("ranking must be sorted non-increasing")
        if any(s < 0 for s in scores):
            raise ValidationError("IG values must be >= 0")

    def top(self, k: int) -> list[int]:
        return [idx for idx, _ in self.ranking[:k]]


def rank_by_ig(columns: np.ndarray, labels, method: str = "mdl") -> RankedFeatures:
    """Score every feature column by information gain after discretization.

    Ties are broken by ascending feature index so rankings are stable
    across runs and platforms.
    """
    columns = np.asarray(columns, dtype=np.float64)
    if columns.ndim != 2 or columns.shape[1] < 1:
        raise ValidationError("need a (samples, features) matrix with >= 1 column")
    disc = Discretizer.fit(columns, labels, method=method)
    gains = [info_gain(columns[:, j], labels, disc.cut_points[j]) for j in range(columns.shape[1])]
    # clamp tiny negative rounding residue so the >=0 invariant holds exactly
    gains = [max(0.0, g) for g in gains]
    order = sorted(range(len(gains)), key=lambda j: (-gains[j], j))
    return RankedFeatures(ranking=[(j, gains[j]) for j in order])


def select_top(ranked: RankedFeatures, k: int) -> list[int]:
    return ranked.top(k)


def _joint_entropy(x_bins: np.ndarray, y_bins: np.ndarray) -> float:
    pairs = x_bins.astype(np.int64) * (int(y_bins.max()) + 1) + y_bins
    _, counts = np.unique(pairs, return_counts=True)
    return _entropy_from_counts(counts)


def symmetric_uncertainty(x_bins, y_bins) -> float:
    """SU(X, Y) = 2 IG(X; Y) / (H(X) + H(Y)); 0 when both entropies vanish."""
    x_bins = np.asarray(x_bins)
    y_bins = np.asarray(y_bins)
    hx = entropy(x_bins)
    hy = entropy(y_bins)
    if hx + hy == 0.0:
        return 0.0
    mi = hx + hy - _joint_entropy(x_bins, y_bins)
    return 2.0 * mi / (hx + hy)


def cfs_merit(subset, su_fc: np.ndarray, su_ff: np.ndarray) -> float:
    """Subset merit: k r_cf / sqrt(k + k (k-1) r_ff).

    r_cf is the mean feature-class symmetric uncertainty over the subset,
    r_ff the mean pairwise feature-feature symmetric uncertainty.
    """
    subset = list(subset)
    if not subset:
        raise ValidationError("cfs_merit of an empty subset is undefined")
    k = len(subset)
    r_cf = float(np.mean([su_fc[i] for i in subset]))
    if k == 1:
        return r_cf
    pair_sum = 0.0
    for a in range(k):
        for b in range(a + 1, k):
            pair_sum += su_ff[subset[a], subset[b]]
    r_ff = pair_sum / (k * (k - 1) / 2)
    return k * r_cf / np.sqrt(k + k * (k - 1) * r_ff)


@dataclass
class SubsetResult:
    """Outcome of a subset search: chosen indices, merit, subsets scored."""

    selected: list[int]
    merit: float
    evaluations: int


class _SuCache:
    """Lazy symmetric-uncertainty matrix over discretized feature columns."""

    def __init__(self, bins_by_feature: list[np.ndarray]):
        self.bins = bins_by_feature
        d = len(bins_by_feature)
        self.su = np.full((d, d), np.nan)

    def __getitem__(self, key):
        i, j = key
        if np.isnan(self.su[i, j]):
            v = symmetric_uncertainty(self.bins[i], self.bins[j])
            self.su[i, j] = self.su[j, i] = v
        return self.su[i, j]


def best_first_cfs(columns: np.ndarray, labels, max_stale: int = 5, method: str = "mdl") -> SubsetResult:
    """CFS subset selection with BestFirst forward search.

    Nodes are feature subsets ordered by merit (ties: lexicographically
    smallest index tuple); expansion adds one feature at a time. The
    search stops after ``max_stale`` consecutive expansions that fail to
    improve the best merit seen so far.
    """
    columns = np.asarray(columns, dtype=np.float64)
    if columns.ndim != 2 or columns.shape[1] < 1:
        raise ValidationError("need a (samples, features) matrix with >= 1 column")
    labels = np.asarray(labels)
    d = columns.shape[1]
    disc = Discretizer.fit(columns, labels, method=method)
    bins = [disc.transform_column(j, columns[:, j]) for j in range(d)]
    su_fc = np.array([symmetric_uncertainty(bins[j], labels) for j in range(d)])
    su_ff = _SuCache(bins)

    evaluations = 0

    def merit_of(subset: tuple[int, ...]) -> float:
        nonlocal evaluations
        evaluations += 1
        return cfs_merit(subset, su_fc, su_ff)

    best_subset: tuple[int, ...] | None = None
    best_merit = -np.inf
    open_heap: list[tuple[float, tuple[int, ...]]] = [(0.0, ())]
    scored = {(): True}
    stale = 0

    while open_heap and stale < max_stale:
        _, subset = heapq.heappop(open_heap)
        improved = False
        for j in range(d):
            if j in subset:
                continue
            child = tuple(sorted(subset + (j,)))
            if child in scored:
                continue
            scored[child] = True
            merit = merit_of(child)
            if merit > best_merit:
                best_merit = merit
                best_subset = child
                improved = True
            heapq.heappush(open_heap, (-merit, child))
        stale = 0 if improved else stale + 1

    if best_subset is None:
        # no expandable children (single already-scored node); fall back to
        # the best single feature for a deterministic non-empty result
        best_subset = (0,)
        best_merit = merit_of(best_subset)
    return SubsetResult(selected=list(best_subset), merit=float(best_merit), evaluations=evaluations)
