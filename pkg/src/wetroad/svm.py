"""Binary SVM trained with Sequential Minimal Optimization.

Dual coordinate ascent over alpha pairs following the classic working-set
recipe: scan for a KKT violator, pair it with the partner maximizing the
error gap, solve the two-variable subproblem analytically, repeat until
no example violates the KKT conditions beyond tol. The decision function
is f(x) = sum_i alpha_i y_i K(x_i, x) + b; features are z-scored with
statistics from the training fold and zero-variance columns are dropped.

Pair selection is fully deterministic (no random restarts), so training
is reproducible across runs and platforms.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import ValidationError

SVM_FORMAT_VERSION = 1


@dataclass
class KernelSpec:
    name: str = "linear"  # "linear" | "rbf"
    gamma: float | None = None

    def __post_init__(self):
        if self.name not in ("linear", "rbf"):
            raise ValidationError(f"unknown kernel {self.name!r}")
        if self.name == "rbf" and (self.gamma is None or self.gamma <= 0):
            raise ValidationError("rbf kernel requires gamma > 0")


def _kernel_matrix(kernel: KernelSpec, A: np.ndarray, B: np.ndarray) -> np.ndarray:
    if kernel.name == "linear":
        return A @ B.T
    sq = (A**2).sum(axis=1)[:, None] + (B**2).sum(axis=1)[None, :] - 2.0 * (A @ B.T)
    return np.exp(-kernel.gamma * np.maximum(sq, 0.0))


@dataclass
class SvmModel:
    """Support vectors (standardized space), coefficients alpha_i * y_i, bias."""

    kernel: KernelSpec
    C: float
    tol: float
    mean: np.ndarray  # per original feature
    std: np.ndarray  # per retained feature, > 0
    kept: list[int]  # retained (nonzero-variance) feature indices
    support_vectors: np.ndarray
    coef: np.ndarray  # alpha_i * y_i per support vector
    bias: float
    dropped: list[int] | None = None  # zero-variance columns, recorded

    def standardize(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        if X.shape[1] != self.mean.shape[0]:
            raise ValidationError(
                f"expected {self.mean.shape[0]} features, got {X.shape[1]}"
            )
        return (X[:, self.kept] - self.mean[self.kept]) / self.std


def smo_train(features, labels, C: float, kernel: KernelSpec | None = None,
              tol: float = 1e-3, max_passes: int = 200) -> SvmModel:
    """Train on labels in {-1, +1}; returns a model satisfying the dual
    constraints 0 <= alpha <= C and sum(alpha * y) = 0.

    max_passes bounds the number of full scans over the training set in
    case tol-level convergence stalls on degenerate data.
    """
    X = np.asarray(features, dtype=np.float64)
    y = np.asarray(labels, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] != y.shape[0]:
        raise ValidationError("features must be (samples, dims) matching labels")
    if not np.all(np.isfinite(X)):
        raise ValidationError("non-finite feature values")
    if set(np.unique(y)) != {-1.0, 1.0}:
        raise ValidationError("labels must contain both classes, as -1/+1")
    if C <= 0:
        raise ValidationError("C must be > 0")
    kernel = kernel or KernelSpec()

    mean = X.mean(axis=0)
    std_all = X.std(axis=0)
    kept = [j for j in range(X.shape[1]) if std_all[j] > 0]
    dropped = [j for j in range(X.shape[1]) if std_all[j] == 0]
    if not kept:
        raise ValidationError("every feature column is constant")
    Z = (X[:, kept] - mean[kept]) / std_all[kept]

    n = Z.shape[0]
    alpha = np.zeros(n)
    b = 0.0
    # running kernel expansion F[i] = sum_j alpha_j y_j K(i, j) (bias excluded)
    F = np.zeros(n)
    diag = (Z**2).sum(axis=1) if kernel.name == "linear" else np.ones(n)

    def krow(i):
        return _kernel_matrix(kernel, Z[i:i + 1], Z)[0]

    eps = 1e-12

    def take_step(i1, i2, E2):
        nonlocal b, F
        if i1 == i2:
            return False
        a1_old, a2_old = alpha[i1], alpha[i2]
        y1, y2 = y[i1], y[i2]
        E1 = F[i1] + b - y1
        s = y1 * y2
        if s < 0:
            L, H = max(0.0, a2_old - a1_old), min(C, C + a2_old - a1_old)
        else:
            L, H = max(0.0, a1_old + a2_old - C), min(C, a1_old + a2_old)
        if L >= H:
            return False
        row1 = krow(i1)
        row2 = krow(i2)
        k11, k12, k22 = diag[i1], row1[i2], diag[i2]
        eta = k11 + k22 - 2.0 * k12
        if eta > 0:
            a2 = a2_old + y2 * (E1 - E2) / eta
            a2 = min(max(a2, L), H)
        else:
            # flat direction: evaluate the dual objective at both clip ends
            v1 = F[i1]
            v2 = F[i2]
            f1 = y1 * v1 - a1_old * k11 - s * a2_old * k12
            f2 = y2 * v2 - s * a1_old * k12 - a2_old * k22
            L1 = a1_old + s * (a2_old - L)
            H1 = a1_old + s * (a2_old - H)
            obj_l = L1 * f1 + L * f2 + 0.5 * L1**2 * k11 + 0.5 * L**2 * k22 + s * L * L1 * k12
            obj_h = H1 * f1 + H * f2 + 0.5 * H1**2 * k11 + 0.5 * H**2 * k22 + s * H * H1 * k12
            if obj_l < obj_h - eps:
                a2 = L
            elif obj_l > obj_h + eps:
                a2 = H
            else:
                a2 = a2_old
        if abs(a2 - a2_old) < eps * (a2 + a2_old + eps):
            return False
        a1 = a1_old + s * (a2_old - a2)
        # keep the box constraint exact against rounding
        a1 = min(max(a1, 0.0), C)

        b_old = b
        d1 = (a1 - a1_old) * y1
        d2 = (a2 - a2_old) * y2
        b1 = -(F[i1] + d1 * k11 + d2 * k12 - y1)
        b2 = -(F[i2] + d1 * k12 + d2 * k22 - y2)
        if 0 < a1 < C:
            b = b1
        elif 0 < a2 < C:
            b = b2
        else:
            b = 0.5 * (b1 + b2)
        F += d1 * row1 + d2 * row2
        alpha[i1], alpha[i2] = a1, a2
        return True

    def examine(i2):
        y2, a2 = y[i2], alpha[i2]
        E2 = F[i2] + b - y2
        r2 = E2 * y2
        if not ((r2 < -tol and a2 < C) or (r2 > tol and a2 > 0)):
            return False
        non_bound = np.nonzero((alpha > 0) & (alpha < C))[0]
        if non_bound.size > 1:
            errors = F[non_bound] + b - y[non_bound]
            i1 = int(non_bound[np.argmax(np.abs(errors - E2))])
            if take_step(i1, i2, E2):
                return True
        for i1 in non_bound:
            if take_step(int(i1), i2, E2):
                return True
        for i1 in range(n):
            if take_step(i1, i2, E2):
                return True
        return False

    examine_all = True
    passes = 0
    while passes < max_passes:
        passes += 1
        changed = 0
        if examine_all:
            for i in range(n):
                changed += examine(i)
        else:
            for i in np.nonzero((alpha > 0) & (alpha < C))[0]:
                changed += examine(int(i))
        if examine_all:
            examine_all = False
            if changed == 0:
                break
        elif changed == 0:
            examine_all = True

    sv = alpha > 0
    model = SvmModel(
        kernel=kernel,
        C=C,
        tol=tol,
        mean=mean,
        std=std_all[kept],
        kept=kept,
        support_vectors=Z[sv],
        coef=(alpha * y)[sv],
        bias=b,
        dropped=dropped,
    )
    if abs(float((alpha * y).sum())) > 1e-8:
        raise ValidationError("dual equality constraint violated beyond 1e-8")
    return model


def decision_function(model: SvmModel, X) -> np.ndarray:
    """Decision values for a batch of raw (unstandardized) feature rows."""
    Z = model.standardize(X)
    if model.support_vectors.shape[0] == 0:
        return np.full(Z.shape[0], model.bias)
    K = _kernel_matrix(model.kernel, Z, model.support_vectors)
    return K @ model.coef + model.bias


def svm_predict(model: SvmModel, x):
    """Class in {-1, +1} plus decision value; exact zero maps to +1."""
    value = float(decision_function(model, np.atleast_2d(x))[0])
    return (1 if value >= 0 else -1), value


def save_svm(path, model: SvmModel) -> None:
    doc = {
        "kind": "svm",
        "format_version": SVM_FORMAT_VERSION,
        "kernel": {"name": model.kernel.name, "gamma": model.kernel.gamma},
        "C": model.C,
        "tol": model.tol,
        "mean": model.mean.tolist(),
        "std": model.std.tolist(),
        "kept": list(model.kept),
        "dropped": list(model.dropped or []),
        "support_vectors": model.support_vectors.tolist(),
        "coef": model.coef.tolist(),
        "bias": model.bias,
    }
    with open(path, "w") as fh:
        json.dump(doc, fh)
        fh.write("\n")


def load_svm(path) -> SvmModel:
    with open(path) as fh:
        doc = json.load(fh)
    if doc.get("kind") != "svm":
        raise ValidationError(f"{path}: not an SVM model file")
    if doc.get("format_version") != SVM_FORMAT_VERSION:
        raise ValidationError(f"unsupported SVM format version {doc.get('format_version')}")
    return SvmModel(
        kernel=KernelSpec(**doc["kernel"]),
        C=float(doc["C"]),
        tol=float(doc["tol"]),
        mean=np.asarray(doc["mean"], dtype=np.float64),
        std=np.asarray(doc["std"], dtype=np.float64),
        kept=[int(j) for j in doc["kept"]],
        support_vectors=np.asarray(doc["support_vectors"], dtype=np.float64).reshape(
            len(doc["coef"]), -1
        )
        if doc["coef"]
        else np.zeros((0, len(doc["kept"]))),
        coef=np.asarray(doc["coef"], dtype=np.float64),
        bias=float(doc["bias"]),
        dropped=[int(j) for j in doc.get("dropped", [])],
    )
