"""Linear soft-margin SVMs trained by SMO, and DAGSVM multi-class classification."""

import itertools
import logging
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
from joblib import Parallel, delayed
from sklearn.metrics import confusion_matrix
from sklearn.utils import check_array

from src.compression import CompressedSignal
from src.errors import DegenerateSetError, DimensionError, InvalidInputError
from src.simulator import TactileFrame
from src.tools.file_operations import read_json, write_json

logger = logging.getLogger(__name__)

DEFAULT_C_GRID = (1e-2, 1e-1, 1.0, 10.0, 1e2)
DEFAULT_TOL = 1e-3
DEFAULT_MAX_ITER = 100_000
_TAU = 1e-12

Pair = Tuple[int, int]


@dataclass(frozen=True, eq=False)
class LabeledSet:
    """Observations of one dimension with labels from a declared class set."""

    features: np.ndarray
    labels: np.ndarray
    classes: Tuple[int, ...] = ()

    def __post_init__(self):
        try:
            features = check_array(self.features, dtype=np.float64, ensure_min_samples=0)
        except ValueError as e:
            raise InvalidInputError(f"Invalid features: {e}") from e
        labels = np.asarray(self.labels, dtype=np.int64).ravel()
        if labels.shape != (features.shape[0],):
            raise DimensionError(f"{features.shape[0]} observations but {labels.size} labels")
        classes = tuple(sorted(set(int(c) for c in self.classes))) or tuple(
            int(c) for c in np.unique(labels)
        )
        if not np.isin(labels, classes).all():
            raise InvalidInputError(f"Labels {sorted(set(labels) - set(classes))} are not declared classes")
        object.__setattr__(self, "features", features)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "classes", classes)

    def __len__(self) -> int:
        return self.features.shape[0]

    @property
    def d(self) -> int:
        return self.features.shape[1]

    @classmethod
    def from_frames(cls, frames: Sequence[TactileFrame], classes: Sequence[int] = ()) -> "LabeledSet":
        if not frames:
            raise InvalidInputError("No frames given")
        return cls(
            features=np.stack([f.values for f in frames]),
            labels=np.array([f.label for f in frames]),
            classes=tuple(classes),
        )

    @classmethod
    def from_compressed(
        cls, signals: Sequence[CompressedSignal], classes: Sequence[int] = ()
    ) -> "LabeledSet":
        if not signals:
            raise InvalidInputError("No compressed signals given")
        return cls(
            features=np.stack([s.values for s in signals]),
            labels=np.array([s.label for s in signals]),
            classes=tuple(classes),
        )

    def subset(self, indices: Sequence[int]) -> "LabeledSet":
        indices = np.asarray(indices, dtype=np.int64)
        return LabeledSet(self.features[indices], self.labels[indices], self.classes)

    def pair(self, negative: int, positive: int) -> "LabeledSet":
        """Observations of two classes only, declared as exactly those two."""
        mask = (self.labels == negative) | (self.labels == positive)
        return LabeledSet(self.features[mask], self.labels[mask], (negative, positive))


@dataclass(frozen=True, eq=False)
class BinarySvm:
    """
    Linear soft-margin SVM over two class ids.

    ``classes`` is (negative, positive); a score of exactly 0 goes to the
    positive class. ``alpha`` holds the dual variables of the training run
    and is empty for models loaded from disk.
    """

    w: np.ndarray
    b: float
    C: float
    classes: Pair
    alpha: np.ndarray = field(default_factory=lambda: np.zeros(0))
    support_indices: Tuple[int, ...] = ()
    iterations: int = 0
    kkt_residual: float = 0.0
    tol: float = DEFAULT_TOL

    def __post_init__(self):
        object.__setattr__(self, "w", np.asarray(self.w, dtype=float))
        object.__setattr__(self, "alpha", np.asarray(self.alpha, dtype=float))
        object.__setattr__(self, "classes", (int(self.classes[0]), int(self.classes[1])))

    @property
    def d(self) -> int:
        return self.w.size

    def _check_dim(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.shape[-1] != self.d:
            raise DimensionError(f"Model expects dimension {self.d}, got {X.shape[-1]}")
        return X

    def decision_function(self, X: np.ndarray) -> np.ndarray:
        return self._check_dim(X) @ self.w + self.b

    def predict(self, X: np.ndarray) -> np.ndarray:
        scores = self.decision_function(X)
        return np.where(scores >= 0, self.classes[1], self.classes[0])

    def signed_labels(self, data: LabeledSet) -> np.ndarray:
        if not np.isin(data.labels, self.classes).all():
            raise InvalidInputError(f"Set holds labels outside the model's classes {self.classes}")
        return np.where(data.labels == self.classes[1], 1.0, -1.0)

    def slacks(self, data: LabeledSet) -> np.ndarray:
        """xi_i = max(0, 1 - y_i (w.x_i + b))."""
        return np.maximum(0.0, 1.0 - self.signed_labels(data) * self.decision_function(data.features))

    def primal_objective(self, data: LabeledSet) -> float:
        return float(0.5 * self.w @ self.w + self.C * self.slacks(data).sum())

    def dual_objective(self) -> float:
        return float(self.alpha.sum() - 0.5 * self.w @ self.w)

    def scaled(self, factor: float) -> "BinarySvm":
        """Same separating hyperplane with (w, b) multiplied by a positive factor."""
        if factor <= 0:
            raise InvalidInputError(f"Scale must be positive, got {factor}")
        return BinarySvm(self.w * factor, self.b * factor, self.C, self.classes, tol=self.tol)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "classes": list(self.classes),
            "w": self.w.tolist(),
            "b": self.b,
            "C": self.C,
            "support_indices": list(self.support_indices),
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "BinarySvm":
        return cls(
            w=np.asarray(data["w"], dtype=float),
            b=float(data["b"]),
            C=float(data["C"]),
            classes=tuple(data["classes"]),
            support_indices=tuple(data.get("support_indices", ())),
        )


def _violating_pair(
    y: np.ndarray, alpha: np.ndarray, grad: np.ndarray, C: float
) -> Tuple[int, int, float]:
    """Maximal violating pair (i, j) and the KKT gap m(alpha) - M(alpha)."""
    minus_yg = -y * grad
    up = ((y > 0) & (alpha < C)) | ((y < 0) & (alpha > 0))
    low = ((y > 0) & (alpha > 0)) | ((y < 0) & (alpha < C))
    if not up.any() or not low.any():
        return -1, -1, 0.0
    up_scores = np.where(up, minus_yg, -np.inf)
    low_scores = np.where(low, minus_yg, np.inf)
    i = int(np.argmax(up_scores))
    j = int(np.argmin(low_scores))
    return i, j, float(up_scores[i] - low_scores[j])


def _bias(y: np.ndarray, alpha: np.ndarray, grad: np.ndarray, C: float) -> float:
    yg = y * grad
    at_upper = alpha >= C
    at_lower = alpha <= 0
    free = ~at_upper & ~at_lower
    if free.any():
        rho = yg[free].mean()
    else:
        ub_mask = (at_upper & (y < 0)) | (at_lower & (y > 0))
        lb_mask = (at_upper & (y > 0)) | (at_lower & (y < 0))
        ub = yg[ub_mask].min() if ub_mask.any() else np.inf
        lb = yg[lb_mask].max() if lb_mask.any() else -np.inf
        rho = (ub + lb) / 2.0
    return float(-rho)


def train_binary(
    data: LabeledSet,
    C: float = 1.0,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
) -> BinarySvm:
    """
    Train a linear soft-margin SVM with SMO on the dual.

    Each step updates the maximal violating pair of dual variables
    analytically and keeps the gradient of the dual current. Training stops
    once the KKT gap is at most ``tol``.

    Args:
        data: Observations of exactly two classes; the larger id is positive
        C: Slack penalty
        tol: KKT gap tolerance
        max_iter: Step cap; reaching it logs a warning

    Returns:
        BinarySvm: Model with w = sum_i alpha_i y_i x_i and its dual variables

    Raises:
        DegenerateSetError: If fewer than two classes are present
        InvalidInputError: If C or tol is not positive, or more than two classes are present
    """
    if C <= 0 or tol <= 0:
        raise InvalidInputError(f"C and tol must be positive, got C={C}, tol={tol}")
    present = np.unique(data.labels)
    if present.size < 2:
        raise DegenerateSetError(f"Binary training needs two classes, found {present.tolist()}")
    if present.size > 2:
        raise InvalidInputError(f"Binary training got {present.size} classes")
    negative, positive = int(present[0]), int(present[1])

    X = data.features
    y = np.where(data.labels == positive, 1.0, -1.0)
    K = X @ X.T
    diag = np.diag(K)
    alpha = np.zeros(len(y))
    grad = -np.ones(len(y))

    iterations = 0
    i, j, gap = _violating_pair(y, alpha, grad, C)
    while gap > tol and iterations < max_iter:
        quad = diag[i] + diag[j] - 2.0 * K[i, j]
        if quad <= 0:
            quad = _TAU
        old_i, old_j = alpha[i], alpha[j]
        if y[i] != y[j]:
            delta = (-grad[i] - grad[j]) / quad
            diff = old_i - old_j
            alpha[i] += delta
            alpha[j] += delta
            if diff > 0:
                if alpha[j] < 0:
                    alpha[j], alpha[i] = 0.0, diff
            elif alpha[i] < 0:
                alpha[i], alpha[j] = 0.0, -diff
            if diff > 0:
                if alpha[i] > C:
                    alpha[i], alpha[j] = C, C - diff
            elif alpha[j] > C:
                alpha[j], alpha[i] = C, C + diff
        else:
            delta = (grad[i] - grad[j]) / quad
            total = old_i + old_j
            alpha[i] -= delta
            alpha[j] += delta
            if total > C:
                if alpha[i] > C:
                    alpha[i], alpha[j] = C, total - C
                elif alpha[j] > C:
                    alpha[j], alpha[i] = C, total - C
            else:
                if alpha[j] < 0:
                    alpha[j], alpha[i] = 0.0, total
                elif alpha[i] < 0:
                    alpha[i], alpha[j] = 0.0, total

        # Q[:, t] = y y_t K[:, t]
        grad += y * (y[i] * (alpha[i] - old_i) * K[:, i] + y[j] * (alpha[j] - old_j) * K[:, j])
        iterations += 1
        i, j, gap = _violating_pair(y, alpha, grad, C)

    if gap > tol:
        logger.warning(
            "SMO hit its %d step cap with KKT gap %.3e > %.3e (C=%g, N=%d)", max_iter, gap, tol, C, len(y)
        )

    w = (alpha * y) @ X
    return BinarySvm(
        w=w,
        b=_bias(y, alpha, grad, C),
        C=float(C),
        classes=(negative, positive),
        alpha=alpha,
        support_indices=tuple(int(t) for t in np.flatnonzero(alpha > 0)),
        iterations=iterations,
        kkt_residual=max(gap, 0.0),
        tol=tol,
    )


def hinge_loss(model: BinarySvm, data: LabeledSet) -> float:
    """
    Mean hinge loss (1/N) sum_i max(0, 1 - y_i (w.x_i + b)).

    Raises:
        DimensionError: If the set dimension differs from the model's
    """
    if data.d != model.d:
        raise DimensionError(f"Model expects dimension {model.d}, set has {data.d}")
    if len(data) == 0:
        return 0.0
    return float(model.slacks(data).mean())


@dataclass(frozen=True, eq=False)
class DagSvmModel:
    """All pairwise linear SVMs of a class list, combined by sequential elimination."""

    classes: Tuple[int, ...]
    pairwise: Dict[Pair, BinarySvm]
    selected_c: Dict[Pair, float] = field(default_factory=dict)
    seed: int = 0

    def __post_init__(self):
        expected = set(itertools.combinations(sorted(self.classes), 2))
        if set(self.pairwise) != expected:
            raise InvalidInputError(
                f"Need {len(expected)} pairwise models for {len(self.classes)} classes, got {len(self.pairwise)}"
            )

    @property
    def d(self) -> int:
        return next(iter(self.pairwise.values())).d

    def to_dict(self) -> Dict[str, Any]:
        return {
            "classes": list(self.classes),
            "seed": self.seed,
            "pairwise": [
                {**svm.to_dict(), "selected_c": self.selected_c.get(pair, svm.C)}
                for pair, svm in sorted(self.pairwise.items())
            ],
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "DagSvmModel":
        pairwise: Dict[Pair, BinarySvm] = {}
        selected: Dict[Pair, float] = {}
        for entry in data["pairwise"]:
            svm = BinarySvm.from_dict(entry)
            pairwise[svm.classes] = svm
            selected[svm.classes] = float(entry.get("selected_c", svm.C))
        return cls(
            classes=tuple(int(c) for c in data["classes"]),
            pairwise=pairwise,
            selected_c=selected,
            seed=int(data.get("seed", 0)),
        )


def _train_pair(
    development: LabeledSet,
    validation: LabeledSet,
    c_grid: Sequence[float],
    tol: float,
) -> Tuple[float, BinarySvm]:
    best_c, best_accuracy = None, -1.0
    for C in sorted(c_grid):
        if len(validation) == 0:
            best_c = C
            break
        candidate = train_binary(development, C=C, tol=tol)
        accuracy = float(np.mean(candidate.predict(validation.features) == validation.labels))
        if accuracy > best_accuracy:
            best_c, best_accuracy = C, accuracy
    merged = LabeledSet(
        np.vstack([development.features, validation.features]),
        np.concatenate([development.labels, validation.labels]),
        development.classes,
    )
    logger.debug(
        "Pair %s: C=%g (validation accuracy %.3f)", development.classes, best_c, best_accuracy
    )
    return best_c, train_binary(merged, C=best_c, tol=tol)


def train_dag(
    data: LabeledSet,
    c_grid: Sequence[float] = DEFAULT_C_GRID,
    split: Tuple[Sequence[int], Sequence[int]] = ((), ()),
    seed: int = 0,
    tol: float = DEFAULT_TOL,
    n_jobs: int = 1,
) -> DagSvmModel:
    """
    Train every pairwise SVM with per-pair selection of C.

    For each class pair, one SVM per C is trained on the development rows and
    scored on the validation rows of that pair; the best C (smaller C on ties)
    is retrained on development and validation together.

    Args:
        data: Observations of all classes
        c_grid: Candidate C values
        split: (development, validation) row indices into ``data``
        seed: Recorded with the model as training metadata
        tol: SMO tolerance
        n_jobs: joblib workers over class pairs

    Returns:
        DagSvmModel: M(M-1)/2 pairwise models

    Raises:
        DegenerateSetError: If a class has no development observation
        InvalidInputError: On overlapping splits, an empty C grid or fewer than two classes
    """
    development_rows, validation_rows = (np.asarray(s, dtype=np.int64) for s in split)
    if np.intersect1d(development_rows, validation_rows).size:
        raise InvalidInputError("Development and validation rows overlap")
    if not c_grid or min(c_grid) <= 0:
        raise InvalidInputError(f"C grid must be non-empty and positive, got {list(c_grid)}")
    classes = data.classes
    if len(classes) < 2:
        raise InvalidInputError(f"Need at least two classes, got {classes}")

    development = data.subset(development_rows)
    validation = data.subset(validation_rows)
    missing = sorted(set(classes) - set(development.labels.tolist()))
    if missing:
        raise DegenerateSetError(f"Classes {missing} have no development observations")

    pairs = list(itertools.combinations(classes, 2))
    results = Parallel(n_jobs=n_jobs)(
        delayed(_train_pair)(development.pair(*p), validation.pair(*p), c_grid, tol) for p in pairs
    )
    logger.info("Trained %d pairwise SVMs over %d classes", len(pairs), len(classes))
    return DagSvmModel(
        classes=classes,
        pairwise={p: svm for p, (_, svm) in zip(pairs, results)},
        selected_c={p: C for p, (C, _) in zip(pairs, results)},
        seed=seed,
    )


def _eliminate(
    candidates: List[int], score_of: Dict[Pair, float]
) -> Tuple[int, List[Pair]]:
    path: List[Pair] = []
    while len(candidates) > 1:
        pair = tuple(sorted((candidates[0], candidates[-1])))
        path.append(pair)
        loser = pair[0] if score_of[pair] >= 0 else pair[1]
        candidates.remove(loser)
    return candidates[0], path


class _LazyScores(dict):
    def __init__(self, model: DagSvmModel, x: np.ndarray):
        super().__init__()
        self._model = model
        self._x = x

    def __missing__(self, pair: Pair) -> float:
        score = float(self._model.pairwise[pair].decision_function(self._x))
        self[pair] = score
        return score


def classify_path(
    model: DagSvmModel, x: np.ndarray, order: Optional[Sequence[int]] = None
) -> Tuple[int, List[Pair]]:
    """
    Sequential elimination over a class order; returns the label and the evaluated pairs.

    The first and last candidates are compared by their pairwise SVM and the
    loser is dropped, so exactly M-1 models are evaluated.
    """
    x = np.asarray(x, dtype=float)
    if x.shape != (model.d,):
        raise DimensionError(f"Model expects dimension {model.d}, got shape {x.shape}")
    candidates = list(order) if order is not None else list(model.classes)
    if sorted(candidates) != sorted(model.classes):
        raise InvalidInputError("Class order must be a permutation of the model's classes")
    return _eliminate(candidates, _LazyScores(model, x))


def classify(model: DagSvmModel, x: np.ndarray) -> int:
    """DAGSVM label of one observation under the canonical ascending class order."""
    return classify_path(model, x)[0]


def classify_batch(
    model: DagSvmModel, X: np.ndarray, order: Optional[Sequence[int]] = None
) -> np.ndarray:
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.shape[1] != model.d:
        raise DimensionError(f"Model expects dimension {model.d}, got {X.shape[1]}")
    pairs = sorted(model.pairwise)
    weights = np.stack([model.pairwise[p].w for p in pairs])
    biases = np.array([model.pairwise[p].b for p in pairs])
    scores = X @ weights.T + biases
    base = list(order) if order is not None else list(model.classes)
    labels = np.empty(len(X), dtype=np.int64)
    for row, row_scores in enumerate(scores):
        labels[row], _ = _eliminate(list(base), dict(zip(pairs, row_scores)))
    return labels


@dataclass(frozen=True, eq=False)
class Evaluation:
    """Accuracy (%) and row-percentage confusion matrix over ``classes``."""

    accuracy: float
    confusion: np.ndarray
    classes: Tuple[int, ...]
    predictions: np.ndarray

    def to_dict(self) -> Dict[str, Any]:
        return {
            "accuracy": self.accuracy,
            "classes": list(self.classes),
            "confusion": self.confusion.tolist(),
        }


def evaluate(model: DagSvmModel, test: LabeledSet) -> Evaluation:
    """
    Classify a test set and tabulate the result.

    ``confusion[i][j]`` is the percentage of true class i predicted as j.
    Rows of classes absent from the test set are all zero.
    """
    if len(test) == 0:
        raise InvalidInputError("Cannot evaluate on an empty test set")
    predictions = classify_batch(model, test.features)
    counts = confusion_matrix(test.labels, predictions, labels=list(model.classes)).astype(float)
    totals = counts.sum(axis=1, keepdims=True)
    confusion = np.divide(100.0 * counts, totals, out=np.zeros_like(counts), where=totals > 0)
    accuracy = 100.0 * float(np.mean(predictions == test.labels))
    return Evaluation(accuracy=accuracy, confusion=confusion, classes=model.classes, predictions=predictions)


def order_agreement(model: DagSvmModel, X: np.ndarray, n_orders: int = 10, seed: int = 0) -> float:
    """Mean fraction of observations labeled the same under random class orders as under the canonical one."""
    if n_orders < 1:
        raise InvalidInputError(f"Need at least one order, got {n_orders}")
    rng = np.random.default_rng(seed)
    canonical = classify_batch(model, X)
    agreement = [
        np.mean(classify_batch(model, X, order=rng.permutation(model.classes).tolist()) == canonical)
        for _ in range(n_orders)
    ]
    return float(np.mean(agreement))


def mean_pairwise_hinge_loss(model: DagSvmModel, data: LabeledSet) -> float:
    """Mean over pairwise models of their hinge loss on the observations of their own classes."""
    losses = []
    for (negative, positive), svm in sorted(model.pairwise.items()):
        subset = data.pair(negative, positive)
        if len(subset):
            losses.append(hinge_loss(svm, subset))
    if not losses:
        raise InvalidInputError("No observation belongs to any pair of the model's classes")
    return float(np.mean(losses))


def save_model(model: DagSvmModel, path: str) -> None:
    write_json(path, model.to_dict())


def load_model(path: str) -> DagSvmModel:
    return DagSvmModel.from_dict(read_json(path))
