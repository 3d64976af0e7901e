"""Linear frequency-feature detector: features, standardization, L2 logistic
regression, and regularization grid search.

The objective is the sum log-loss with an L2 penalty on the weights only:

    J(w, b) = sum_i log(1 + exp(-y_i (w . x_i + b))) + (lam / 2) ||w||^2

with y in {-1, +1} (+1 = fake). Training is deterministic: zero
initialization, full-batch L-BFGS directions, and Armijo backtracking, so
the objective decreases on every accepted step and identical inputs yield
bit-identical models.
"""

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConvergenceError, DataError, DimensionError, ParameterError
from .metrics import ScoreSet
from .preprocess import center_crop
from .transforms import EPS_LOG, SpectrumKind, dct2, dft2

TRANSFORM_TAGS = ("pixel", "dft", "log_dft", "dct", "log_dct")
FEATURE_CROP = 64
LAMBDA_GRID = tuple(10.0**k for k in range(-4, 5))

STD_FLOOR = 1e-12


@dataclass(frozen=True)
class FeatureMatrix:
    rows: np.ndarray
    labels: np.ndarray  # 0 = real, 1 = fake
    transform_tag: str
    ids: tuple[str, ...] = ()

    def __post_init__(self):
        rows = np.asarray(self.rows, dtype=np.float64)
        labels = np.asarray(self.labels, dtype=np.int8)
        if rows.ndim != 2:
            raise DimensionError(f"feature rows must be 2D, got shape {rows.shape}")
        if labels.shape != (rows.shape[0],):
            raise DimensionError("labels length must equal the number of rows")
        if not np.all(np.isfinite(rows)):
            raise DataError("feature matrix contains non-finite values")
        if not np.all((labels == 0) | (labels == 1)):
            raise DataError("labels must be 0 (real) or 1 (fake)")
        ids = tuple(self.ids) if self.ids else tuple(f"sample_{i:06d}" for i in range(rows.shape[0]))
        if len(ids) != rows.shape[0]:
            raise DimensionError("ids length must equal the number of rows")
        object.__setattr__(self, "rows", rows)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "ids", ids)

    @property
    def n(self) -> int:
        return self.rows.shape[0]

    @property
    def d(self) -> int:
        return self.rows.shape[1]

    def subset(self, index) -> "FeatureMatrix":
        index = np.asarray(index)
        return FeatureMatrix(
            rows=self.rows[index],
            labels=self.labels[index],
            transform_tag=self.transform_tag,
            ids=tuple(self.ids[int(i)] for i in index),
        )


def _image_features(img: np.ndarray, tag: str, eps: float) -> np.ndarray:
    cropped = center_crop(np.asarray(img, dtype=np.float64), FEATURE_CROP)
    if tag == "pixel":
        return cropped.ravel()
    if tag in ("dft", "log_dft"):
        mag = dft2(cropped, SpectrumKind.DFT_MAGNITUDE).values
        return mag.ravel() if tag == "dft" else np.log(mag + eps).ravel()
    if tag in ("dct", "log_dct"):
        mag = dct2(cropped).values
        return mag.ravel() if tag == "dct" else np.log(mag + eps).ravel()
    raise ParameterError(f"unknown transform tag {tag!r}; expected one of {TRANSFORM_TAGS}")


def extract_features(images, tag: str, labels=None, ids=None, eps: float = EPS_LOG) -> FeatureMatrix:
    """Center-crop each image to 64x64, apply the tagged transform, flatten.

    pixel = raw values; dft = centered DFT magnitude; dct = absolute DCT
    coefficients; the log variants apply ln(. + eps) elementwise.
    """
    images = list(images)
    if not images:
        raise DataError("extract_features needs at least one image")
    for i, img in enumerate(images):
        h, w = np.asarray(img).shape[:2]
        if min(h, w) < FEATURE_CROP:
            raise DimensionError(f"image {i} is {h}x{w}; need at least {FEATURE_CROP}x{FEATURE_CROP}")
    rows = np.stack([_image_features(img, tag, eps) for img in images])
    if labels is None:
        labels = np.zeros(len(images), dtype=np.int8)
    return FeatureMatrix(rows=rows, labels=labels, transform_tag=tag, ids=tuple(ids or ()))


@dataclass(frozen=True)
class Standardizer:
    mean: np.ndarray
    std: np.ndarray

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=np.float64)
        std = np.asarray(self.std, dtype=np.float64)
        if mean.shape != std.shape or mean.ndim != 1:
            raise DimensionError("mean and std must be 1D arrays of equal length")
        if np.any(std <= 0):
            raise ParameterError("std entries must be positive (floored, never zero)")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "std", std)


def fit_standardizer(train: FeatureMatrix) -> Standardizer:
    """Per-feature mean/std from training rows only (std floored at 1e-12)."""
    if train.n < 2:
        raise DataError(f"fit_standardizer needs n >= 2, got {train.n}")
    mean = train.rows.mean(axis=0)
    std = np.maximum(train.rows.std(axis=0), STD_FLOOR)
    return Standardizer(mean=mean, std=std)


def apply_standardizer(s: Standardizer, X: FeatureMatrix) -> FeatureMatrix:
    if X.d != s.mean.size:
        raise DimensionError(f"standardizer has {s.mean.size} features, matrix has {X.d}")
    return FeatureMatrix(
        rows=(X.rows - s.mean) / s.std,
        labels=X.labels,
        transform_tag=X.transform_tag,
        ids=X.ids,
    )


@dataclass(frozen=True)
class LRModel:
    weights: np.ndarray
    bias: float
    lam: float
    transform_tag: str = ""
    standardizer: Standardizer | None = None
    converged: bool = True
    iterations: int = 0
    objective_history: tuple[float, ...] = ()  # J at init and every accepted step


def logreg_objective(weights: np.ndarray, bias: float, X: np.ndarray, y_pm: np.ndarray,
                     lam: float) -> float:
    """Sum log-loss + (lam/2)||w||^2 (bias unregularized), overflow-safe."""
    z = y_pm * (X @ weights + bias)
    return float(np.logaddexp(0.0, -z).sum() + 0.5 * lam * (weights @ weights))


def logreg_gradient(weights: np.ndarray, bias: float, X: np.ndarray, y_pm: np.ndarray,
                    lam: float) -> tuple[np.ndarray, float]:
    z = y_pm * (X @ weights + bias)
    # d/dz log(1+exp(-z)) = -sigmoid(-z), branch on sign to avoid overflow
    s = np.empty_like(z)
    pos = z >= 0
    ez = np.exp(-z[pos])
    s[pos] = ez / (1.0 + ez)
    s[~pos] = 1.0 / (1.0 + np.exp(z[~pos]))
    coef = -y_pm * s
    return X.T @ coef + lam * weights, float(coef.sum())


def train_logreg(
    X: FeatureMatrix,
    lam: float,
    standardizer: Standardizer | None = None,
    grad_tol: float = 1e-6,
    max_iter: int = 500,
) -> LRModel:
    """Minimize the L2-regularized log-loss on standardized features.

    L-BFGS (memory 10) from zero initialization with Armijo backtracking;
    stops when the gradient infinity-norm drops below grad_tol or after
    max_iter accepted steps.
    """
    if lam < 0:
        raise ParameterError(f"lambda must be >= 0, got {lam}")
    if X.n < 2:
        raise DataError(f"training needs n >= 2, got {X.n}")
    if len(np.unique(X.labels)) < 2:
        raise DataError("training data must contain both classes")
    rows = X.rows
    y_pm = X.labels.astype(np.float64) * 2.0 - 1.0

    theta = np.zeros(X.d + 1)  # [w..., b]

    def value(th):
        return logreg_objective(th[:-1], th[-1], rows, y_pm, lam)

    def gradient(th):
        gw, gb = logreg_gradient(th[:-1], th[-1], rows, y_pm, lam)
        return np.concatenate([gw, [gb]])

    memory = 10
    s_hist: list[np.ndarray] = []
    y_hist: list[np.ndarray] = []
    rho_hist: list[float] = []

    f = value(theta)
    g = gradient(theta)
    history = [f]
    iterations = 0
    converged = np.max(np.abs(g)) < grad_tol
    while not converged and iterations < max_iter:
        # two-loop recursion for the L-BFGS direction
        q = g.copy()
        alphas = []
        for s_vec, y_vec, rho in zip(reversed(s_hist), reversed(y_hist), reversed(rho_hist)):
            a = rho * (s_vec @ q)
            alphas.append(a)
            q -= a * y_vec
        if y_hist:
            gamma = (s_hist[-1] @ y_hist[-1]) / (y_hist[-1] @ y_hist[-1])
            q *= gamma
        for (s_vec, y_vec, rho), a in zip(zip(s_hist, y_hist, rho_hist), reversed(alphas)):
            b = rho * (y_vec @ q)
            q += (a - b) * s_vec
        direction = -q
        if direction @ g >= 0:  # not a descent direction; fall back to steepest descent
            direction = -g

        # Armijo backtracking
        slope = direction @ g
        step = 1.0
        f_new = value(theta + step * direction)
        backtracks = 0
        while not (np.isfinite(f_new) and f_new <= f + 1e-4 * step * slope):
            step *= 0.5
            backtracks += 1
            if backtracks > 60:
                raise ConvergenceError(
                    "line search failed to find a decreasing step",
                    diagnostics={"iteration": iterations, "objective": f,
                                 "grad_inf_norm": float(np.max(np.abs(g)))},
                )
            f_new = value(theta + step * direction)

        theta_new = theta + step * direction
        g_new = gradient(theta_new)
        if not np.all(np.isfinite(g_new)):
            raise ConvergenceError(
                "gradient overflowed",
                diagnostics={"iteration": iterations, "objective": float(f_new)},
            )
        s_vec = theta_new - theta
        y_vec = g_new - g
        sy = s_vec @ y_vec
        if sy > 1e-12:
            s_hist.append(s_vec)
            y_hist.append(y_vec)
            rho_hist.append(1.0 / sy)
            if len(s_hist) > memory:
                s_hist.pop(0)
                y_hist.pop(0)
                rho_hist.pop(0)
        theta, f, g = theta_new, f_new, g_new
        history.append(f)
        iterations += 1
        converged = np.max(np.abs(g)) < grad_tol

    return LRModel(
        weights=theta[:-1].copy(),
        bias=float(theta[-1]),
        lam=float(lam),
        transform_tag=X.transform_tag,
        standardizer=standardizer,
        converged=bool(converged),
        iterations=iterations,
        objective_history=tuple(history),
    )


def sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def evaluate(model: LRModel, X: FeatureMatrix) -> tuple[float, ScoreSet]:
    """Accuracy under the rule (sigmoid(w.x+b) >= 0.5 -> fake), plus scores."""
    if X.d != model.weights.size:
        raise DimensionError(f"model has {model.weights.size} features, matrix has {X.d}")
    scores = sigmoid(X.rows @ model.weights + model.bias)
    predictions = scores >= 0.5
    accuracy = float((predictions == X.labels.astype(bool)).mean())
    return accuracy, ScoreSet(ids=X.ids, labels=X.labels.astype(bool), scores=scores)


def grid_search(
    train: FeatureMatrix,
    val: FeatureMatrix | None,
    grid=LAMBDA_GRID,
    k_folds: int | None = None,
    grad_tol: float = 1e-6,
    max_iter: int = 500,
) -> tuple[float, LRModel, list[dict]]:
    """Pick the lambda with the best validation accuracy (ties -> smaller).

    Holdout mode scores each lambda on ``val``; with ``k_folds`` the
    training matrix is split into k contiguous folds and validation accuracy
    is the mean across folds. Either way the returned model is trained on
    the full training matrix at the winning lambda.
    """
    grid = sorted(float(lam) for lam in grid)
    if not grid:
        raise ParameterError("lambda grid must be nonempty")
    if (val is None) == (k_folds is None):
        raise ParameterError("provide exactly one of a validation matrix or k_folds")

    report = []
    for lam in grid:
        if k_folds is not None:
            if k_folds < 2 or k_folds > train.n:
                raise ParameterError(f"k_folds must be in 2..{train.n}, got {k_folds}")
            bounds = np.linspace(0, train.n, k_folds + 1).astype(int)
            train_accs, val_accs = [], []
            for fold in range(k_folds):
                held = np.arange(bounds[fold], bounds[fold + 1])
                kept = np.setdiff1d(np.arange(train.n), held)
                model = train_logreg(train.subset(kept), lam, grad_tol=grad_tol, max_iter=max_iter)
                train_accs.append(evaluate(model, train.subset(kept))[0])
                val_accs.append(evaluate(model, train.subset(held))[0])
            report.append({"lambda": lam, "train_acc": float(np.mean(train_accs)),
                           "val_acc": float(np.mean(val_accs))})
        else:
            model = train_logreg(train, lam, grad_tol=grad_tol, max_iter=max_iter)
            report.append({"lambda": lam, "train_acc": evaluate(model, train)[0],
                           "val_acc": evaluate(model, val)[0]})

    best = max(report, key=lambda row: (row["val_acc"], -row["lambda"]))
    best_lambda = best["lambda"]
    final = train_logreg(train, best_lambda, grad_tol=grad_tol, max_iter=max_iter)
    return best_lambda, final, report


def save_model(path, model: LRModel) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    payload = {
        "transform_tag": model.transform_tag,
        "lambda": model.lam,
        "weights": model.weights.tolist(),
        "bias": model.bias,
        "converged": model.converged,
        "iterations": model.iterations,
        "standardizer": None
        if model.standardizer is None
        else {"mean": model.standardizer.mean.tolist(), "std": model.standardizer.std.tolist()},
    }
    Path(path).write_text(json.dumps(payload), encoding="utf-8")


def load_model(path) -> LRModel:
    payload = json.loads(Path(path).read_text(encoding="utf-8"))
    std = payload.get("standardizer")
    return LRModel(
        weights=np.asarray(payload["weights"], dtype=np.float64),
        bias=float(payload["bias"]),
        lam=float(payload["lambda"]),
        transform_tag=payload.get("transform_tag", ""),
        standardizer=None
        if std is None
        else Standardizer(mean=np.asarray(std["mean"]), std=np.asarray(std["std"])),
        converged=bool(payload.get("converged", True)),
        iterations=int(payload.get("iterations", 0)),
    )
