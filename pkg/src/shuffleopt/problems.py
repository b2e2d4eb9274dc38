"""Finite-sum objectives f(x) = (1/n) sum_i f_i(x) with analytic gradients.

Three families are provided, all with exactly computable smoothness
constants and lower bounds so that smoothness assumptions hold by
construction rather than by runtime estimation:

* ``quadratic``   f_i(x) = 0.5 (<a_i, x> - b_i)^2, convex.
* ``logistic``    f_i(x) = log(1 + exp(-y_i <a_i, x>)), convex.
* ``robust_gm``   f_i(x) = r^2 / (1 + r^2) with r = <a_i, x> - t_i
                  (Geman-McClure loss), nonconvex and semi-algebraic.

The shared smoothness constant L is the worst case over components
(max_i L_i), which keeps the common-constant assumption valid without
tracking per-component curvature.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import InvalidInputError, NumericOverflowError

PROBLEM_KINDS = ("quadratic", "logistic", "robust_gm")

DATA_SCHEME = "gauss-rows/v1"


@dataclass(frozen=True, eq=False)
class FiniteSumProblem:
    """Immutable finite-sum objective with component oracles.

    Attributes:
        kind: one of PROBLEM_KINDS.
        A: (n, d) design matrix, one row per component.
        targets: (n,) regression targets, or +-1 labels for logistic.
        smoothness_L: common Lipschitz constant of all component gradients.
        lower_bound_fbar: lower bound valid for every component value.
        origin: construction metadata (kind, sizes, seed or "explicit"),
            sufficient to rebuild or serialize the instance.
    """

    kind: str
    A: np.ndarray
    targets: np.ndarray
    smoothness_L: float
    lower_bound_fbar: float
    origin: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def d(self) -> int:
        return self.A.shape[1]

    # Each family has gradient grad f_i(x) = s_i(x) * a_i for a scalar
    # weight s_i; the helpers below vectorize that weight over components.

    def _margins(self, x: np.ndarray) -> np.ndarray:
        return self.A @ x

    def _weights(self, x: np.ndarray) -> np.ndarray:
        t = self._margins(x)
        if self.kind == "quadratic":
            return t - self.targets
        if self.kind == "logistic":
            u = self.targets * t
            return -self.targets * _sigmoid(-u)
        r = t - self.targets
        return 2.0 * r / (1.0 + r * r) ** 2

    def component_value(self, i: int, x: np.ndarray) -> float:
        t = float(self.A[i] @ x)
        if self.kind == "quadratic":
            r = t - self.targets[i]
            return 0.5 * r * r
        if self.kind == "logistic":
            return float(np.logaddexp(0.0, -self.targets[i] * t))
        r = t - self.targets[i]
        return r * r / (1.0 + r * r)

    def component_grad(self, i: int, x: np.ndarray) -> np.ndarray:
        t = float(self.A[i] @ x)
        if self.kind == "quadratic":
            s = t - self.targets[i]
        elif self.kind == "logistic":
            s = -self.targets[i] * _sigmoid(-self.targets[i] * t)
        else:
            r = t - self.targets[i]
            s = 2.0 * r / (1.0 + r * r) ** 2
        return s * self.A[i]

    def value(self, x: np.ndarray) -> float:
        t = self._margins(x)
        if self.kind == "quadratic":
            r = t - self.targets
            return float(np.mean(0.5 * r * r))
        if self.kind == "logistic":
            return float(np.mean(np.logaddexp(0.0, -self.targets * t)))
        r = t - self.targets
        return float(np.mean(r * r / (1.0 + r * r)))

    def full_gradient(self, x: np.ndarray) -> np.ndarray:
        g = (self.A.T @ self._weights(x)) / self.n
        if not np.all(np.isfinite(g)):
            raise NumericOverflowError("full gradient is not finite")
        return g

    def component_variance(self, x: np.ndarray) -> float:
        """Population variance (1/n) sum_i ||grad f_i(x) - grad f(x)||^2."""
        grads = self._weights(x)[:, None] * self.A
        mean = grads.mean(axis=0)
        return float(np.mean(np.sum((grads - mean) ** 2, axis=1)))


def _sigmoid(v):
    # tanh form is overflow-free for large |v|
    return 0.5 * (1.0 + np.tanh(0.5 * v))


def _power_iteration_top_eig(row: np.ndarray, tol: float = 1e-10, max_iter: int = 10_000) -> float:
    """Largest eigenvalue of row^T row by power iteration to relative tol."""
    norm = float(np.linalg.norm(row))
    if norm == 0.0:
        return 0.0
    mat = np.outer(row, row)
    v = row / norm
    eig = float(v @ mat @ v)
    for _ in range(max_iter):
        w = mat @ v
        wn = float(np.linalg.norm(w))
        if wn == 0.0:
            return 0.0
        v = w / wn
        new = float(v @ mat @ v)
        if abs(new - eig) <= tol * max(1.0, abs(new)):
            return new
        eig = new
    return eig


def make_quadratic(A: np.ndarray, b: np.ndarray, origin: dict | None = None) -> FiniteSumProblem:
    """Least-squares components f_i(x) = 0.5 (<a_i, x> - b_i)^2.

    The smoothness constant is max_i lambda_max(a_i a_i^T), computed by
    power iteration; the lower bound 0 is valid for every component.
    """
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    if A.ndim != 2 or b.shape != (A.shape[0],):
        raise InvalidInputError("A must be (n, d) and b must be (n,)")
    if not (np.all(np.isfinite(A)) and np.all(np.isfinite(b))):
        raise InvalidInputError("quadratic data must be finite")
    L = max(_power_iteration_top_eig(row) for row in A)
    return FiniteSumProblem(
        kind="quadratic",
        A=A,
        targets=b,
        smoothness_L=L,
        lower_bound_fbar=0.0,
        origin=origin or {"kind": "quadratic", "source": "explicit"},
    )


def make_quadratic_sum(n: int, d: int, seed: int) -> FiniteSumProblem:
    """Random consistent least-squares instance.

    Rows are standard normal scaled by 1/sqrt(d) (unit expected row norm)
    and targets are planted as b = A x_star, so f(x_star) = 0 and the
    lower bound 0 is attained.
    """
    if n < 1 or d < 1:
        raise InvalidInputError("n and d must be positive")
    gen = np.random.default_rng(seed)
    A = gen.standard_normal((n, d)) / np.sqrt(d)
    x_star = gen.standard_normal(d)
    b = A @ x_star
    origin = {"kind": "quadratic", "source": "seed", "n": n, "d": d,
              "seed": int(seed), "scheme": DATA_SCHEME}
    return make_quadratic(A, b, origin=origin)


def make_logistic(A: np.ndarray, labels: np.ndarray, origin: dict | None = None) -> FiniteSumProblem:
    """Logistic-loss components f_i(x) = log(1 + exp(-y_i <a_i, x>)).

    Labels must be exactly +-1.  L = max_i ||a_i||^2 / 4 and the lower
    bound is 0.
    """
    A = np.asarray(A, dtype=float)
    labels = np.asarray(labels, dtype=float)
    if A.ndim != 2 or labels.shape != (A.shape[0],):
        raise InvalidInputError("A must be (n, d) and labels must be (n,)")
    if not np.all(np.isfinite(A)):
        raise InvalidInputError("logistic rows must be finite")
    if not np.all(np.isin(labels, (-1.0, 1.0))):
        raise InvalidInputError("labels must be -1 or +1")
    L = float(np.max(np.sum(A * A, axis=1)) / 4.0)
    return FiniteSumProblem(
        kind="logistic",
        A=A,
        targets=labels,
        smoothness_L=L,
        lower_bound_fbar=0.0,
        origin=origin or {"kind": "logistic", "source": "explicit"},
    )


def make_logistic_sum(n: int, d: int, seed: int) -> FiniteSumProblem:
    """Random non-separable logistic instance (Rademacher labels)."""
    if n < 1 or d < 1:
        raise InvalidInputError("n and d must be positive")
    gen = np.random.default_rng(seed)
    A = gen.standard_normal((n, d)) / np.sqrt(d)
    labels = gen.integers(0, 2, size=n).astype(float) * 2.0 - 1.0
    origin = {"kind": "logistic", "source": "seed", "n": n, "d": d,
              "seed": int(seed), "scheme": DATA_SCHEME}
    return make_logistic(A, labels, origin=origin)


def make_robust_gm(A: np.ndarray, targets: np.ndarray, origin: dict | None = None) -> FiniteSumProblem:
    """Geman-McClure components f_i(x) = r^2/(1+r^2), r = <a_i, x> - t_i.

    The scalar loss has second derivative bounded by 2 in magnitude, so
    L = 2 max_i ||a_i||^2; component values lie in [0, 1).
    """
    A = np.asarray(A, dtype=float)
    targets = np.asarray(targets, dtype=float)
    if A.ndim != 2 or targets.shape != (A.shape[0],):
        raise InvalidInputError("A must be (n, d) and targets must be (n,)")
    if not (np.all(np.isfinite(A)) and np.all(np.isfinite(targets))):
        raise InvalidInputError("robust regression data must be finite")
    L = float(2.0 * np.max(np.sum(A * A, axis=1)))
    return FiniteSumProblem(
        kind="robust_gm",
        A=A,
        targets=targets,
        smoothness_L=L,
        lower_bound_fbar=0.0,
        origin=origin or {"kind": "robust_gm", "source": "explicit"},
    )


def make_robust_gm_sum(n: int, d: int, seed: int) -> FiniteSumProblem:
    """Random robust-regression instance with a planted zero-residual solution."""
    if n < 1 or d < 1:
        raise InvalidInputError("n and d must be positive")
    gen = np.random.default_rng(seed)
    A = gen.standard_normal((n, d)) / np.sqrt(d)
    x_star = gen.standard_normal(d)
    targets = A @ x_star
    origin = {"kind": "robust_gm", "source": "seed", "n": n, "d": d,
              "seed": int(seed), "scheme": DATA_SCHEME}
    return make_robust_gm(A, targets, origin=origin)


_SEEDED_BUILDERS = {
    "quadratic": make_quadratic_sum,
    "logistic": make_logistic_sum,
    "robust_gm": make_robust_gm_sum,
}


def build_problem(kind: str, n: int, d: int, seed: int) -> FiniteSumProblem:
    """Construct a seeded instance of the named family."""
    if kind not in _SEEDED_BUILDERS:
        raise InvalidInputError(f"unknown problem kind {kind!r}")
    return _SEEDED_BUILDERS[kind](n, d, seed)


def full_gradient(problem: FiniteSumProblem, x: np.ndarray) -> np.ndarray:
    """(1/n) sum_i grad f_i(x)."""
    return problem.full_gradient(x)


def component_variance(problem: FiniteSumProblem, x: np.ndarray) -> float:
    return problem.component_variance(x)


def save_problem(problem: FiniteSumProblem, path: str | Path) -> None:
    """Serialize to JSON: seeded instances by (kind, sizes, seed), explicit
    instances with full-precision data arrays."""
    origin = problem.origin
    if origin.get("source") == "seed":
        doc = {"kind": problem.kind, "source": "seed", "n": problem.n,
               "d": problem.d, "seed": origin["seed"], "scheme": origin["scheme"]}
    else:
        doc = {
            "kind": problem.kind,
            "source": "explicit",
            "A": [[format(v, ".17g") for v in row] for row in problem.A],
            "targets": [format(v, ".17g") for v in problem.targets],
        }
    Path(path).write_text(json.dumps(doc, indent=1) + "\n")


def load_problem(path: str | Path) -> FiniteSumProblem:
    doc = json.loads(Path(path).read_text())
    kind = doc["kind"]
    if doc.get("source") == "seed":
        if doc.get("scheme") != DATA_SCHEME:
            raise InvalidInputError(f"unsupported data scheme {doc.get('scheme')!r}")
        return build_problem(kind, doc["n"], doc["d"], doc["seed"])
    A = np.array([[float(v) for v in row] for row in doc["A"]], dtype=float)
    targets = np.array([float(v) for v in doc["targets"]], dtype=float)
    makers = {"quadratic": make_quadratic, "logistic": make_logistic,
              "robust_gm": make_robust_gm}
    if kind not in makers:
        raise InvalidInputError(f"unknown problem kind {kind!r}")
    return makers[kind](A, targets)
