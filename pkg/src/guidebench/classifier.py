"""Correctness meta-classifier: class-weighted, L2-regularized logistic model.

Loss (empirical expected classification loss):
    J(w, b) = (1/n) * sum_i s_i * bce(z_i, y_i) + (1/(2C)) * ||w||^2
with z = Zw + b over standardized features, class weights s_i = n / (2 n_c),
and an unpenalized bias. Training uses damped Newton steps, which are
deterministic and converge to gradient-norm <= tol on this convex objective.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .features import FEATURE_SETS, FeatureSet, FeatureTable
from .stats import RocCurve, f1_binary, roc_curve

GRAD_TOL = 1e-6


def _expit(z: np.ndarray) -> np.ndarray:
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def loss_and_grad(
    params: np.ndarray,
    Z: np.ndarray,
    y: np.ndarray,
    sample_weights: np.ndarray,
    C: float,
) -> tuple[float, np.ndarray]:
    """Objective and analytic gradient at params = [w..., b]."""
    n = len(y)
    w, b = params[:-1], params[-1]
    z = Z @ w + b
    per_sample = np.logaddexp(0.0, z) - y * z
    loss = float(np.sum(sample_weights * per_sample) / n + (w @ w) / (2.0 * C))
    residual = sample_weights * (_expit(z) - y) / n
    grad = np.empty_like(params)
    grad[:-1] = Z.T @ residual + w / C
    grad[-1] = residual.sum()
    return loss, grad


def _hessian(
    params: np.ndarray, Z: np.ndarray, y: np.ndarray, sample_weights: np.ndarray, C: float
) -> np.ndarray:
    n = len(y)
    w, b = params[:-1], params[-1]
    p = _expit(Z @ w + b)
    d = sample_weights * p * (1.0 - p) / n
    H = np.empty((len(params), len(params)))
    H[:-1, :-1] = Z.T @ (Z * d[:, None]) + np.eye(len(w)) / C
    H[:-1, -1] = Z.T @ d
    H[-1, :-1] = H[:-1, -1]
    H[-1, -1] = d.sum() + 1e-12
    return H


@dataclass(frozen=True)
class TrainedClassifier:
    feature_set: FeatureSet
    columns: tuple[str, ...]
    weights: np.ndarray  # aligned with columns; constant columns pinned to 0
    bias: float
    mean: np.ndarray
    std: np.ndarray  # 1.0 where the feature was constant
    constant_columns: tuple[str, ...]
    C: float
    seed: int
    n_iter: int
    converged: bool

    def to_payload(self) -> dict:
        return {
            "feature_set": self.feature_set.value,
            "columns": list(self.columns),
            "weights": [float(v) for v in self.weights],
            "bias": self.bias,
            "standardization": {
                "mean": [float(v) for v in self.mean],
                "std": [float(v) for v in self.std],
                "constant_columns": list(self.constant_columns),
            },
            "C": self.C,
            "seed": self.seed,
            "n_iter": self.n_iter,
            "converged": self.converged,
        }

    @classmethod
    def from_payload(cls, payload: dict) -> "TrainedClassifier":
        std = payload["standardization"]
        return cls(
            feature_set=FeatureSet(payload["feature_set"]),
            columns=tuple(payload["columns"]),
            weights=np.asarray(payload["weights"], dtype=float),
            bias=payload["bias"],
            mean=np.asarray(std["mean"], dtype=float),
            std=np.asarray(std["std"], dtype=float),
            constant_columns=tuple(std["constant_columns"]),
            C=payload["C"],
            seed=payload["seed"],
            n_iter=payload["n_iter"],
            converged=payload["converged"],
        )


def save_classifier(clf: TrainedClassifier, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(clf.to_payload(), fh, sort_keys=True, indent=2)
        fh.write("\n")


def load_classifier(path) -> TrainedClassifier:
    with open(path, "r", encoding="utf-8") as fh:
        return TrainedClassifier.from_payload(json.load(fh))


def _design_matrix(table: FeatureTable, columns: tuple[str, ...]) -> tuple[np.ndarray, np.ndarray]:
    rows = table.labeled().rows
    X = np.array([[row.values[c] for c in columns] for row in rows], dtype=float)
    y = np.array([row.label for row in rows], dtype=float)
    return X, y


def train(
    table: FeatureTable,
    feature_set: FeatureSet,
    C: float = 0.1,
    max_iter: int = 10000,
    tol: float = GRAD_TOL,
    seed: int = 0,
) -> TrainedClassifier:
    columns = FEATURE_SETS[feature_set]
    X, y = _design_matrix(table, columns)
    if len(X) == 0:
        raise ValueError("no labeled rows to train on")
    if not np.isfinite(X).all():
        raise ValueError("non-finite feature values")
    n_pos = int(y.sum())
    n_neg = len(y) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValueError("training data must contain both classes")

    mean = X.mean(axis=0)
    std = X.std(axis=0)
    active = std > 0.0
    std_safe = np.where(active, std, 1.0)
    Z = (X - mean) / std_safe
    Za = Z[:, active]

    n = len(y)
    sample_weights = np.where(y == 1.0, n / (2.0 * n_pos), n / (2.0 * n_neg))

    params = np.zeros(int(active.sum()) + 1)
    loss, grad = loss_and_grad(params, Za, y, sample_weights, C)
    n_iter = 0
    converged = bool(np.max(np.abs(grad)) <= tol)
    while not converged and n_iter < max_iter:
        n_iter += 1
        H = _hessian(params, Za, y, sample_weights, C)
        try:
            direction = -np.linalg.solve(H, grad)
        except np.linalg.LinAlgError:
            direction = -grad
        # Armijo backtracking keeps each Newton step a descent step.
        step, slope = 1.0, float(grad @ direction)
        for _ in range(60):
            candidate = params + step * direction
            new_loss, new_grad = loss_and_grad(candidate, Za, y, sample_weights, C)
            if new_loss <= loss + 1e-4 * step * slope:
                break
            step *= 0.5
        params, loss, grad = candidate, new_loss, new_grad
        converged = bool(np.max(np.abs(grad)) <= tol)

    weights = np.zeros(len(columns))
    weights[active] = params[:-1]
    return TrainedClassifier(
        feature_set=feature_set,
        columns=columns,
        weights=weights,
        bias=float(params[-1]),
        mean=mean,
        std=std_safe,
        constant_columns=tuple(c for c, a in zip(columns, active) if not a),
        C=C,
        seed=seed,
        n_iter=n_iter,
        converged=converged,
    )


def predict_proba(clf: TrainedClassifier, table: FeatureTable) -> np.ndarray:
    try:
        X = np.array(
            [[row.values[c] for c in clf.columns] for row in table.rows], dtype=float
        )
    except KeyError as exc:
        raise ValueError(f"feature rows do not provide column {exc}") from exc
    if X.shape[1] != len(clf.weights):
        raise ValueError(
            f"dimension mismatch: {X.shape[1]} features vs {len(clf.weights)} weights"
        )
    Z = (X - clf.mean) / clf.std
    return _expit(Z @ clf.weights + clf.bias)


@dataclass(frozen=True)
class EvalReport:
    auroc: float
    f1_at_half: float
    curve: RocCurve
    n_rows: int


def evaluate(clf: TrainedClassifier, table: FeatureTable) -> EvalReport:
    labeled = table.labeled()
    probs = predict_proba(clf, labeled)
    labels: Sequence[int] = [row.label for row in labeled.rows]  # type: ignore[misc]
    curve = roc_curve(probs, labels)
    preds = [1 if p >= 0.5 else 0 for p in probs]
    return EvalReport(
        auroc=curve.auroc,
        f1_at_half=f1_binary(preds, labels),
        curve=curve,
        n_rows=len(labeled.rows),
    )
