"""Classification and evaluation machinery.

Scores live on the half-step 0..4 grid and are kept as exact rationals so
grid membership, error values and tie-breaking never hit float fuzz. All
fitting (standardization, PCA, classifiers) happens inside each
leave-one-out fold; the held-out trial never touches its own fold's fit.
"""
from __future__ import annotations

import itertools
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from fractions import Fraction

import numpy as np
from sklearn.svm import SVC

from .data import as_updrs
from .errors import ValidationError

METHODS = ("ncc", "knn", "svm")
KNN_K_RANGE = tuple(range(1, 11))
ERROR_GRID = tuple(Fraction(k, 2) for k in range(9))  # 0, 0.5, ..., 4


@dataclass(frozen=True)
class FeatureMatrix:
    x: np.ndarray                    # (n_trials, n_features) float
    feature_names: tuple[str, ...]
    labels: tuple[Fraction, ...]     # one half-step score per row
    trial_ids: tuple[str, ...]

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "feature_names", tuple(self.feature_names))
        object.__setattr__(self, "labels", tuple(as_updrs(u) for u in self.labels))
        object.__setattr__(self, "trial_ids", tuple(self.trial_ids))
        if x.ndim != 2 or x.shape[1] != len(self.feature_names):
            raise ValidationError("matrix shape does not match feature names")
        if len(self.labels) != x.shape[0] or len(self.trial_ids) != x.shape[0]:
            raise ValidationError("labels/trial_ids must match the row count")
        if len(set(self.feature_names)) != len(self.feature_names):
            raise ValidationError("feature names must be unique")
        if not np.all(np.isfinite(x)):
            raise ValidationError("missing or non-finite feature value")

    @property
    def n(self) -> int:
        return self.x.shape[0]

    def select(self, names) -> "FeatureMatrix":
        names = tuple(names)
        try:
            idx = [self.feature_names.index(n) for n in names]
        except ValueError as exc:
            raise ValidationError(f"unknown feature: {exc}") from exc
        return FeatureMatrix(self.x[:, idx], names, self.labels, self.trial_ids)


@dataclass(frozen=True)
class Standardizer:
    mean: np.ndarray
    scale: np.ndarray  # per-column sample SD

    @classmethod
    def fit(cls, x: np.ndarray, feature_names=None, strict: bool = True) -> "Standardizer":
        """Column means and sample SDs.

        strict: a zero-SD column is an error (naming the feature). The
        non-strict variant keeps such columns centered but unscaled, which
        leave-one-out folds need when a training fold degenerates.
        """
        x = np.asarray(x, dtype=float)
        mean = x.mean(axis=0)
        if x.shape[0] > 1:
            sd = x.std(axis=0, ddof=1)
        else:
            sd = np.zeros(x.shape[1])
        flat = sd == 0.0
        if flat.any() and strict:
            names = feature_names or [f"column {j}" for j in range(x.shape[1])]
            bad = [str(names[j]) for j in np.flatnonzero(flat)]
            raise ValidationError(f"constant feature column(s): {', '.join(bad)}")
        scale = np.where(flat, 1.0, sd)
        return cls(mean, scale)

    def apply(self, x: np.ndarray) -> np.ndarray:
        return (np.asarray(x, dtype=float) - self.mean) / self.scale


def standardize_fit_apply(m: FeatureMatrix) -> tuple[Standardizer, np.ndarray]:
    std = Standardizer.fit(m.x, m.feature_names, strict=True)
    return std, std.apply(m.x)


@dataclass(frozen=True)
class PcaModel:
    components: np.ndarray   # (n_features, n_components), orthonormal columns
    eigenvalues: np.ndarray  # variances, non-increasing

    @property
    def explained_variance_ratio(self) -> np.ndarray:
        total = self.eigenvalues.sum()
        if total == 0.0:
            return np.zeros_like(self.eigenvalues)
        return self.eigenvalues / total

    @property
    def cumulative_variance_ratio(self) -> np.ndarray:
        return np.cumsum(self.explained_variance_ratio)


def pca_fit(x: np.ndarray) -> PcaModel:
    """Eigendecomposition of the column covariance of a standardized matrix."""
    x = np.asarray(x, dtype=float)
    if x.ndim != 2 or x.shape[0] < 2:
        raise ValidationError("PCA needs a 2-D matrix with at least 2 rows")
    centered = x - x.mean(axis=0)
    cov = centered.T @ centered / (x.shape[0] - 1)
    eigenvalues, vectors = np.linalg.eigh(cov)
    order = np.argsort(eigenvalues)[::-1]
    eigenvalues = np.clip(eigenvalues[order], 0.0, None)
    vectors = vectors[:, order]
    # Deterministic sign: largest-magnitude entry of each component positive.
    for j in range(vectors.shape[1]):
        i = int(np.argmax(np.abs(vectors[:, j])))
        if vectors[i, j] < 0:
            vectors[:, j] = -vectors[:, j]
    return PcaModel(vectors, eigenvalues)


def pca_project(model: PcaModel, x: np.ndarray, d: int) -> np.ndarray:
    if not 1 <= d <= model.components.shape[1]:
        raise ValidationError(f"projection dimension {d} out of range "
                              f"1..{model.components.shape[1]}")
    return np.asarray(x, dtype=float) @ model.components[:, :d]


# -- classifiers --------------------------------------------------------------

def ncc_classify(train_x: np.ndarray, train_y, query) -> Fraction:
    """Label of the Euclidean-nearest class centroid; ties go to the lower score."""
    train_x = np.asarray(train_x, dtype=float)
    if train_x.shape[0] == 0:
        raise ValidationError("empty training set")
    query = np.asarray(query, dtype=float).ravel()
    best_label = None
    best_d = math.inf
    for label in sorted(set(train_y)):
        rows = [i for i, y in enumerate(train_y) if y == label]
        centroid = train_x[rows].mean(axis=0)
        d = float(np.linalg.norm(query - centroid))
        if d < best_d:
            best_d = d
            best_label = label
    return best_label


def knn_classify(train_x: np.ndarray, train_y, query, k: int) -> Fraction:
    """Majority label among the k Euclidean-nearest training points.

    Ties at the k-th distance keep input order; vote ties go to the label
    with the smaller summed distance, then to the lower score.
    """
    train_x = np.asarray(train_x, dtype=float)
    n = train_x.shape[0]
    if not 1 <= k <= n:
        raise ValidationError(f"k={k} outside 1..{n}")
    query = np.asarray(query, dtype=float).ravel()
    dists = np.linalg.norm(train_x - query, axis=1)
    nearest = np.argsort(dists, kind="stable")[:k]
    votes: dict[Fraction, int] = {}
    summed: dict[Fraction, float] = {}
    for i in nearest:
        y = train_y[i]
        votes[y] = votes.get(y, 0) + 1
        summed[y] = summed.get(y, 0.0) + float(dists[i])
    return min(votes, key=lambda y: (-votes[y], summed[y], y))


@dataclass(frozen=True)
class SvmModel:
    """One-vs-one arrangement of binary linear soft-margin machines."""

    classes: tuple[Fraction, ...]
    machines: tuple[tuple[Fraction, Fraction, SVC], ...]


def svm_train(train_x: np.ndarray, train_y, c: float = 1.0) -> SvmModel:
    train_x = np.asarray(train_x, dtype=float)
    classes = tuple(sorted(set(train_y)))
    if len(classes) < 2:
        raise ValidationError("SVM training needs at least 2 classes")
    y_arr = list(train_y)
    machines = []
    for a, b in itertools.combinations(classes, 2):
        rows = [i for i, y in enumerate(y_arr) if y == a or y == b]
        ys = np.array([1 if y_arr[i] == b else -1 for i in rows])
        clf = SVC(kernel="linear", C=c)
        clf.fit(train_x[rows], ys)
        machines.append((a, b, clf))
    return SvmModel(classes, tuple(machines))


def svm_classify(model: SvmModel, query) -> Fraction:
    query = np.asarray(query, dtype=float).reshape(1, -1)
    votes = {label: 0 for label in model.classes}
    for a, b, clf in model.machines:
        winner = b if clf.predict(query)[0] > 0 else a
        votes[winner] += 1
    return min(votes, key=lambda y: (-votes[y], y))


# -- leave-one-out evaluation --------------------------------------------------

@dataclass(frozen=True)
class ClassifierConfig:
    method: str                       # ncc | knn | svm
    features: tuple[str, ...]
    k: int | None = None              # knn only
    use_pca: bool = False
    pca_dims: int | None = None
    svm_c: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "features", tuple(self.features))
        if self.method not in METHODS:
            raise ValidationError(f"method must be one of {METHODS}")
        if (self.method == "knn") != (self.k is not None):
            raise ValidationError("k must be given exactly when method is knn")
        if self.method == "knn" and self.k not in KNN_K_RANGE:
            raise ValidationError(f"k must be in {KNN_K_RANGE[0]}..{KNN_K_RANGE[-1]}")
        if self.use_pca:
            if self.pca_dims is None or not 1 <= self.pca_dims <= len(self.features):
                raise ValidationError("pca_dims must be in 1..len(features)")
        elif self.pca_dims is not None:
            raise ValidationError("pca_dims given but use_pca is off")
        if not self.features:
            raise ValidationError("feature subset must not be empty")

    def describe(self) -> str:
        bits = [self.method if self.method != "knn" else f"knn k={self.k}"]
        if self.use_pca:
            bits.append(f"pca d={self.pca_dims}")
        bits.append("features=" + "+".join(self.features))
        return ", ".join(bits)


@dataclass(frozen=True)
class EvalReport:
    config: ClassifierConfig
    trial_ids: tuple[str, ...]
    actual: tuple[Fraction, ...]
    predicted: tuple[Fraction, ...]
    errors: tuple[Fraction, ...]
    cdf: tuple[float, ...]       # over ERROR_GRID
    auc: float

    def to_json_dict(self) -> dict:
        return {
            "config": {
                "method": self.config.method,
                "k": self.config.k,
                "features": list(self.config.features),
                "use_pca": self.config.use_pca,
                "pca_dims": self.config.pca_dims,
                "svm_c": self.config.svm_c,
            },
            "trials": [
                {"trial_id": tid, "actual": float(a), "predicted": float(p),
                 "error": float(e)}
                for tid, a, p, e in zip(self.trial_ids, self.actual,
                                        self.predicted, self.errors)
            ],
            "cdf": [{"error": float(g), "fraction": v}
                    for g, v in zip(ERROR_GRID, self.cdf)],
            "auc": self.auc,
        }


def error_cdf(errors) -> tuple[float, ...]:
    """Fraction of absolute errors <= g for each half-step grid value g."""
    errors = list(errors)
    if not errors:
        raise ValidationError("no errors to summarize")
    n = len(errors)
    return tuple(sum(1 for e in errors if e <= g) / n for g in ERROR_GRID)


def auc_of_cdf(cdf) -> float:
    """Mean of the CDF over the half-step grid, in [0, 1]."""
    cdf = tuple(cdf)
    if len(cdf) != len(ERROR_GRID):
        raise ValidationError(f"CDF must have {len(ERROR_GRID)} points")
    return sum(cdf) / len(cdf)


def _predict_fold(train_x, train_y, query, config: ClassifierConfig) -> Fraction:
    std = Standardizer.fit(train_x, config.features, strict=False)
    xs = std.apply(train_x)
    q = std.apply(query.reshape(1, -1))
    if config.use_pca:
        model = pca_fit(xs)
        xs = pca_project(model, xs, config.pca_dims)
        q = pca_project(model, q, config.pca_dims)
    if config.method == "ncc":
        return ncc_classify(xs, train_y, q)
    if config.method == "knn":
        return knn_classify(xs, train_y, q, config.k)
    return svm_classify(svm_train(xs, train_y, config.svm_c), q)


def loocv(m: FeatureMatrix, config: ClassifierConfig) -> EvalReport:
    """Leave-one-out evaluation: every transform and fit is fold-local."""
    if m.n < 2:
        raise ValidationError("LOOCV needs at least 2 rows")
    sub = m.select(config.features)
    predictions = []
    for i in range(sub.n):
        train_rows = [j for j in range(sub.n) if j != i]
        train_x = sub.x[train_rows]
        train_y = [sub.labels[j] for j in train_rows]
        try:
            pred = _predict_fold(train_x, train_y, sub.x[i], config)
        except Exception as exc:
            raise ValidationError(
                f"LOOCV fold {i} ({sub.trial_ids[i]}): {exc}") from exc
        predictions.append(pred)
    errors = tuple(abs(p - y) for p, y in zip(predictions, sub.labels))
    cdf = error_cdf(errors)
    return EvalReport(config=config, trial_ids=sub.trial_ids, actual=sub.labels,
                      predicted=tuple(predictions), errors=errors, cdf=cdf,
                      auc=auc_of_cdf(cdf))


# -- exhaustive configuration search ------------------------------------------

@dataclass(frozen=True)
class SearchResult:
    config: ClassifierConfig
    auc: float


def search_configs(feature_names, methods=METHODS, ks=KNN_K_RANGE,
                   include_pca: bool = True, svm_c: float = 1.0):
    """Deterministic enumeration of the search space.

    Every non-empty feature subset x method x method parameter, each run
    without PCA and (when enabled) with PCA retaining d = 1..|subset|
    components.
    """
    feature_names = tuple(feature_names)
    for size in range(1, len(feature_names) + 1):
        for subset in itertools.combinations(feature_names, size):
            pca_options = [(False, None)]
            if include_pca:
                pca_options += [(True, d) for d in range(1, size + 1)]
            for use_pca, dims in pca_options:
                for method in methods:
                    if method == "knn":
                        for k in ks:
                            yield ClassifierConfig(method, subset, k=k,
                                                   use_pca=use_pca, pca_dims=dims)
                    elif method == "svm":
                        yield ClassifierConfig(method, subset, use_pca=use_pca,
                                               pca_dims=dims, svm_c=svm_c)
                    else:
                        yield ClassifierConfig(method, subset, use_pca=use_pca,
                                               pca_dims=dims)


def search_config_count(n_features: int, methods=METHODS, n_ks: int = len(KNN_K_RANGE),
                        include_pca: bool = True) -> int:
    """Closed-form size of the search space enumerated by search_configs."""
    per_subset_methods = sum(n_ks if m == "knn" else 1 for m in methods)
    total = 0
    for size in range(1, n_features + 1):
        pca_options = 1 + (size if include_pca else 0)
        total += math.comb(n_features, size) * pca_options * per_subset_methods
    return total


def _evaluate_config(args) -> SearchResult:
    m, config = args
    return SearchResult(config, loocv(m, config).auc)


def resolve_workers(requested: int | None = None) -> int:
    """Worker count for parallel maps, capped by the LAKIN_THREADS env var."""
    workers = requested if requested is not None else (os.cpu_count() or 1)
    cap = os.environ.get("LAKIN_THREADS")
    if cap:
        try:
            workers = min(workers, int(cap))
        except ValueError:
            pass
    return max(1, workers)


def exhaustive_search(m: FeatureMatrix, methods=METHODS, ks=KNN_K_RANGE,
                      include_pca: bool = True, svm_c: float = 1.0,
                      workers: int | None = None) -> list[SearchResult]:
    """LOOCV AuC for every configuration, ranked best-first.

    Ranking: AuC descending, then fewer features, then lexicographic feature
    names, then method/parameters, so equal inputs always produce identical
    orderings.
    """
    configs = list(search_configs(m.feature_names, methods, ks, include_pca, svm_c))
    n_workers = resolve_workers(workers)
    if n_workers > 1 and len(configs) > 8:
        with ProcessPoolExecutor(max_workers=n_workers) as pool:
            results = list(pool.map(_evaluate_config,
                                    ((m, c) for c in configs), chunksize=8))
    else:
        results = [_evaluate_config((m, c)) for c in configs]
    results.sort(key=_rank_key)
    return results


def _rank_key(res: SearchResult):
    c = res.config
    return (-res.auc, len(c.features), tuple(sorted(c.features)),
            METHODS.index(c.method), c.k or 0, c.use_pca, c.pca_dims or 0)


# -- centroid trajectories ----------------------------------------------------

@dataclass(frozen=True)
class TrajectoryPoint:
    updrs: Fraction
    centroid: tuple[float, ...] | None   # None marks a gap in the score grid
    members: tuple[str, ...]

    @property
    def present(self) -> bool:
        return self.centroid is not None


def centroid_trajectory(m: FeatureMatrix, feature_names) -> list[TrajectoryPoint]:
    """Per-score centroids in the chosen 2-D or 3-D feature space, in
    ascending score order. Grid scores between the observed extremes with no
    members are kept as gap markers.
    """
    feature_names = tuple(feature_names)
    if len(feature_names) not in (2, 3):
        raise ValidationError("trajectory needs a feature pair or triple")
    sub = m.select(feature_names)
    observed = sorted(set(sub.labels))
    lo, hi = observed[0], observed[-1]
    points = []
    for g in ERROR_GRID:
        if g < lo or g > hi:
            continue
        rows = [i for i, y in enumerate(sub.labels) if y == g]
        if rows:
            centroid = tuple(float(v) for v in sub.x[rows].mean(axis=0))
            members = tuple(sub.trial_ids[i] for i in rows)
            points.append(TrajectoryPoint(g, centroid, members))
        else:
            points.append(TrajectoryPoint(g, None, ()))
    return points
