"""Reshuffled momentum SGD over finite sums.

One epoch processes all n components exactly once, in the order given by
that epoch's permutation, using m = n/b mini-batch steps.  With y_0 set
to the previous epoch's second-to-last inner iterate (xtilde^k) and
y_1 = x^k, each inner step performs

    yhat_i  = y_i + lambda * (y_i - y_{i-1})        extrapolation
    d_i     = (1/b) sum_{j in batch i} grad f_{pi_j}(yhat_i)
    y_{i+1} = y_i - alpha_k * d_i + beta * (y_i - y_{i-1})

and the epoch ends with xtilde^{k+1} = y_m, x^{k+1} = y_{m+1}.  The
momentum memory carried across epochs is exactly x^k - xtilde^k; it is
never re-initialized.  Setting lambda = 0 gives heavy-ball momentum,
lambda = beta the Nesterov variant, and beta = lambda = 0 reduces the
scheme to plain random reshuffling.

Accumulation inside a mini-batch is in ascending position order and
non-finite iterates abort the run immediately, so runs are bitwise
reproducible from (problem, config, schedule).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import schedules
from .diagnostics import EpochInnerRecord, Trace, lyapunov_value, proxy_iterate
from .errors import DivergenceError, InvalidInputError
from .problems import FiniteSumProblem
from .sampler import STRATEGY_KINDS, PermutationStrategy, next_permutation

_EXTRAPOLATION_TOL = 1e-12


@dataclass(frozen=True)
class OptimizerConfig:
    """Hyperparameters of one run.

    momentum (beta) must lie in [0, 1) and extrapolation (lambda) in
    [0, beta/(1-beta)]; beta = 0 therefore forces lambda = 0.  The batch
    size must divide the component count of the problem it is run on.
    """

    momentum: float = 0.0
    extrapolation: float = 0.0
    batch: int = 1
    epochs: int = 1
    seed: int = 0
    strategy: str = "reshuffle"
    deep_audit: bool = False

    def __post_init__(self):
        if not 0.0 <= self.momentum < 1.0:
            raise InvalidInputError("momentum must lie in [0, 1)")
        cap = self.momentum / (1.0 - self.momentum)
        if not 0.0 <= self.extrapolation <= cap * (1.0 + _EXTRAPOLATION_TOL) + 0.0:
            raise InvalidInputError(
                f"extrapolation must lie in [0, momentum/(1-momentum)] = [0, {cap:.6g}]")
        if self.batch < 1:
            raise InvalidInputError("batch size must be positive")
        if self.epochs < 1:
            raise InvalidInputError("epoch count must be positive")
        if self.strategy not in STRATEGY_KINDS:
            raise InvalidInputError(f"unknown strategy kind {self.strategy!r}")

    def validate_for(self, problem: FiniteSumProblem) -> None:
        if problem.n % self.batch != 0:
            raise InvalidInputError(
                f"batch size {self.batch} must divide the component count {problem.n}")


@dataclass
class EpochState:
    """Outer state between epochs: x^k, xtilde^k, and the epoch index.

    At epoch 1 the two iterates coincide, so the first momentum
    difference y_1 - y_0 vanishes and the first inner step is a pure
    mini-batch gradient step.
    """

    x: np.ndarray
    x_tilde: np.ndarray
    epoch: int = 1


def minibatch_gradient(problem: FiniteSumProblem, permutation: np.ndarray,
                       i: int, batch: int, point: np.ndarray) -> np.ndarray:
    """Average gradient of batch i (1-based) under the given ordering.

    Components are accumulated in ascending position order, then divided
    by the batch size, so the result is a deterministic function of its
    arguments.
    """
    m = len(permutation) // batch
    if not 1 <= i <= m:
        raise InvalidInputError(f"batch index {i} outside [1, {m}]")
    lo = (i - 1) * batch
    acc = problem.component_grad(int(permutation[lo]), point)
    for j in range(lo + 1, lo + batch):
        acc = acc + problem.component_grad(int(permutation[j]), point)
    return acc / batch


def run_inner_loop(problem: FiniteSumProblem, config: OptimizerConfig,
                   state: EpochState, permutation: np.ndarray, alpha_k: float,
                   ) -> tuple[EpochState, np.ndarray, EpochInnerRecord | None]:
    """Execute one epoch; returns the next state, sum of the d_i, and the
    deep-audit record when enabled.

    Raises DivergenceError (tagged with epoch and inner index) as soon as
    an iterate stops being finite.
    """
    if alpha_k <= 0:
        raise InvalidInputError("step size must be positive")
    beta = config.momentum
    lam = config.extrapolation
    batch = config.batch
    m = problem.n // batch
    y_prev = state.x_tilde.copy()
    y = state.x.copy()
    sum_d = np.zeros(problem.d)
    record = None
    if config.deep_audit:
        record = EpochInnerRecord(
            y_hats=np.empty((m, problem.d)),
            directions=np.empty((m, problem.d)),
            ys=np.empty((m + 2, problem.d)),
        )
        record.ys[0] = y_prev
        record.ys[1] = y
    for i in range(1, m + 1):
        # beta/lambda branches keep the beta = lambda = 0 path bitwise
        # identical to a plain reshuffling loop
        y_hat = y if lam == 0.0 else y + lam * (y - y_prev)
        d = minibatch_gradient(problem, permutation, i, batch, y_hat)
        if beta == 0.0:
            y_next = y - alpha_k * d
        else:
            y_next = y - alpha_k * d + beta * (y - y_prev)
        if not np.all(np.isfinite(y_next)):
            raise DivergenceError(state.epoch, i)
        sum_d += d
        if record is not None:
            record.y_hats[i - 1] = y_hat
            record.directions[i - 1] = d
            record.ys[i + 1] = y_next
        y_prev, y = y, y_next
    return EpochState(x=y, x_tilde=y_prev, epoch=state.epoch + 1), sum_d, record


def closed_form_iterate(x: np.ndarray, x_tilde: np.ndarray, momentum: float,
                        alpha_k: float, directions: np.ndarray) -> np.ndarray:
    """Inner iterate y_{i+1} from the epoch start and directions d_1..d_i:

        y_{i+1} = x - alpha_k sum_t (1 - beta^{i-t+1})/(1-beta) d_t
                    + beta (1 - beta^i)/(1-beta) (x - xtilde).

    Must agree with the iterative loop for directions recorded from it.
    """
    directions = np.asarray(directions, dtype=float)
    i = directions.shape[0]
    if i < 1:
        raise InvalidInputError("need at least one direction")
    powers = np.arange(i, 0, -1, dtype=float)
    if momentum == 0.0:
        weights = np.ones(i)
        carry = 0.0
    else:
        weights = (1.0 - momentum ** powers) / (1.0 - momentum)
        carry = momentum * (1.0 - momentum ** i) / (1.0 - momentum)
    return x - alpha_k * (weights @ directions) + carry * (x - x_tilde)


def run(problem: FiniteSumProblem, config: OptimizerConfig,
        schedule: schedules.ScheduleSpec, *,
        x0: np.ndarray | None = None,
        permutations: list[np.ndarray] | None = None,
        measure_proxy: bool = True,
        d_factor: float = schedules.DEFAULT_D_FACTOR) -> Trace:
    """Run T epochs and return the full measurement trace.

    Per-epoch measurements are taken at each epoch start (and once more
    after the last epoch): f and ||grad f|| at x^k and, unless
    measure_proxy is disabled, at the proxy iterate z^k, together with
    the component-gradient variance at z^k and the Lyapunov value.  An
    explicit list of permutations overrides the sampling strategy (used
    by the exact-expectation audit).
    """
    config.validate_for(problem)
    consts = schedules.theory_constants(problem, config.momentum, config.batch,
                                        d_factor)
    T = config.epochs
    d = problem.d
    alphas = np.array([schedules.step_size(schedule, consts, k)
                       for k in range(1, T + 2)])
    if permutations is not None and len(permutations) != T:
        raise InvalidInputError("permutation list must have one entry per epoch")

    x = np.zeros(d) if x0 is None else np.array(x0, dtype=float)
    if x.shape != (d,):
        raise InvalidInputError(f"x0 must have dimension {d}")
    state = EpochState(x=x, x_tilde=x.copy(), epoch=1)
    strategy = PermutationStrategy(kind=config.strategy, seed=config.seed,
                                   n=problem.n)

    trace = Trace(
        epochs=T, config=config, constants=consts, alphas=alphas,
        xs=np.empty((T + 1, d)), x_tildes=np.empty((T + 1, d)),
        f_x=np.empty(T + 1), grad_x=np.empty(T + 1),
        sum_d=np.empty((T, d)),
        permutations=np.empty((T, problem.n), dtype=np.int64),
        inner=[] if config.deep_audit else None,
    )
    if measure_proxy:
        trace.zs = np.empty((T + 1, d))
        trace.f_z = np.empty(T + 1)
        trace.grad_z = np.empty(T + 1)
        trace.dist_zx = np.empty(T + 1)
        trace.lyapunov = np.empty(T + 1)
        trace.sigma2 = np.empty(T + 1)

    def measure(idx: int, st: EpochState) -> None:
        trace.xs[idx] = st.x
        trace.x_tildes[idx] = st.x_tilde
        trace.f_x[idx] = problem.value(st.x)
        trace.grad_x[idx] = np.linalg.norm(problem.full_gradient(st.x))
        if measure_proxy:
            z = proxy_iterate(st.x, st.x_tilde, config.momentum)
            trace.zs[idx] = z
            trace.f_z[idx] = problem.value(z)
            trace.grad_z[idx] = np.linalg.norm(problem.full_gradient(z))
            trace.dist_zx[idx] = np.linalg.norm(z - st.x)
            trace.lyapunov[idx] = lyapunov_value(problem, consts,
                                                 alphas[idx], st.x, z)
            trace.sigma2[idx] = problem.component_variance(z)

    for k in range(1, T + 1):
        if permutations is not None:
            perm = np.asarray(permutations[k - 1], dtype=np.int64)
        else:
            perm = next_permutation(strategy, k)
        trace.permutations[k - 1] = perm
        measure(k - 1, state)
        state, sum_d, inner = run_inner_loop(problem, config, state, perm,
                                             float(alphas[k - 1]))
        trace.sum_d[k - 1] = sum_d
        if trace.inner is not None:
            trace.inner.append(inner)
    measure(T, state)
    return trace
