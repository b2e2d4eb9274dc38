"""Per-epoch measurements and numerical audits of the descent analysis.

A run produces a :class:`Trace` holding, for every epoch boundary k, the
outer pair (x^k, xtilde^k), the proxy iterate

    z^k = x^k / (1 - beta) - beta * xtilde^k / (1 - beta),

function values and gradient norms at both x^k and z^k, and the Lyapunov
value

    R_k = [f(z^k) - fbar] + H * alpha_k * ||z^k - x^k||^2.

The audit functions check, epoch by epoch, the identities and
inequalities the convergence analysis rests on: the telescoping update of
the proxy iterates, the approximate descent of R_k, the two within-epoch
bounds (extrapolated-point spread and proxy-distance contraction), and an
exact-expectation variant obtained by enumerating every permutation
sequence on tiny instances.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from .errors import AuditUnavailableError, InvalidInputError, SizeLimitError
from .problems import FiniteSumProblem
from .sampler import weighted_sampling_check
from .schedules import TheoryConstants, theory_constants


@dataclass(frozen=True)
class TraceRecord:
    """One recorded epoch; field names double as the trace-file keys."""

    k: int
    alpha_k: float
    f_x: float
    grad_x: float
    min_grad_sq_so_far: float
    sum_d: np.ndarray
    f_z: float | None = None
    grad_z: float | None = None
    R_k: float | None = None
    dist_zx: float | None = None
    sigma2: float | None = None
    residual_descent: float | None = None
    residual_b3: float | None = None
    residual_b4: float | None = None


@dataclass
class EpochInnerRecord:
    """Deep-audit capture of one epoch's inner loop (m steps)."""

    y_hats: np.ndarray     # (m, d) extrapolated evaluation points
    directions: np.ndarray  # (m, d) mini-batch gradients d_i
    ys: np.ndarray          # (m+2, d) y_0 .. y_{m+1}


@dataclass
class Trace:
    """Full measurement record of one run.

    Arrays indexed 0..T correspond to epoch boundaries k = 1..T+1 (the
    last row is the final state); per-epoch arrays (sum_d, sigma2,
    permutations) have T rows.  Proxy-dependent arrays are None when the
    run was executed with proxy measurements disabled.
    """

    epochs: int
    config: object
    constants: TheoryConstants
    alphas: np.ndarray
    xs: np.ndarray
    x_tildes: np.ndarray
    f_x: np.ndarray
    grad_x: np.ndarray
    sum_d: np.ndarray
    permutations: np.ndarray
    zs: np.ndarray | None = None
    f_z: np.ndarray | None = None
    grad_z: np.ndarray | None = None
    dist_zx: np.ndarray | None = None
    lyapunov: np.ndarray | None = None
    sigma2: np.ndarray | None = None
    inner: list[EpochInnerRecord] | None = None
    residual_descent: np.ndarray | None = None
    residual_b3: np.ndarray | None = None
    residual_b4: np.ndarray | None = None

    @property
    def min_grad_sq(self) -> np.ndarray:
        """Running min of ||grad f(x^k)||^2 over k = 1..T."""
        return np.minimum.accumulate(self.grad_x[: self.epochs] ** 2)

    @property
    def has_proxy(self) -> bool:
        return self.zs is not None

    def best(self) -> tuple[int, np.ndarray, float]:
        """(k, x^k, ||grad f(x^k)||^2) minimizing the gradient over k <= T."""
        g = self.grad_x[: self.epochs] ** 2
        i = int(np.argmin(g))
        return i + 1, self.xs[i].copy(), float(g[i])

    def final_x(self) -> np.ndarray:
        return self.xs[self.epochs].copy()

    def records(self) -> list[TraceRecord]:
        out = []
        mgs = self.min_grad_sq
        for i in range(self.epochs):
            out.append(TraceRecord(
                k=i + 1,
                alpha_k=float(self.alphas[i]),
                f_x=float(self.f_x[i]),
                grad_x=float(self.grad_x[i]),
                min_grad_sq_so_far=float(mgs[i]),
                sum_d=self.sum_d[i],
                f_z=None if self.f_z is None else float(self.f_z[i]),
                grad_z=None if self.grad_z is None else float(self.grad_z[i]),
                R_k=None if self.lyapunov is None else float(self.lyapunov[i]),
                dist_zx=None if self.dist_zx is None else float(self.dist_zx[i]),
                sigma2=None if self.sigma2 is None else float(self.sigma2[i]),
                residual_descent=None if self.residual_descent is None
                else float(self.residual_descent[i]),
                residual_b3=None if self.residual_b3 is None else float(self.residual_b3[i]),
                residual_b4=None if self.residual_b4 is None else float(self.residual_b4[i]),
            ))
        return out


def proxy_iterate(x: np.ndarray, x_tilde: np.ndarray, momentum: float) -> np.ndarray:
    """z = x/(1-beta) - beta*xtilde/(1-beta); equals x exactly when beta = 0."""
    if not 0.0 <= momentum < 1.0:
        raise InvalidInputError("momentum must lie in [0, 1)")
    if momentum == 0.0:
        return np.array(x, dtype=float, copy=True)
    return x + (momentum / (1.0 - momentum)) * (x - x_tilde)


def lyapunov_value(problem: FiniteSumProblem, consts: TheoryConstants,
                   alpha_k: float, x: np.ndarray, z: np.ndarray) -> float:
    """R = [f(z) - fbar] + H * alpha_k * ||z - x||^2."""
    diff = z - x
    return (problem.value(z) - consts.fbar) + consts.H * alpha_k * float(diff @ diff)


def telescoping_residual(z_next: np.ndarray, z: np.ndarray, sum_d: np.ndarray,
                         alpha_k: float, momentum: float) -> float:
    """|| (1-beta)(z^{k+1} - z^k) + alpha_k * sum_i d_i ||.

    The proxy update makes this exactly zero in real arithmetic; in floats
    it stays below 1e-9 * (1 + ||z|| + alpha_k ||sum_d||).
    """
    return float(np.linalg.norm((1.0 - momentum) * (z_next - z) + alpha_k * sum_d))


def telescoping_audit(trace: Trace) -> tuple[np.ndarray, np.ndarray]:
    """Per-epoch telescoping residuals and their allowed bounds."""
    _require_proxy(trace)
    T = trace.epochs
    beta = trace.constants.momentum
    res = np.empty(T)
    lim = np.empty(T)
    for i in range(T):
        res[i] = telescoping_residual(trace.zs[i + 1], trace.zs[i],
                                      trace.sum_d[i], trace.alphas[i], beta)
        lim[i] = 1e-9 * (1.0 + np.linalg.norm(trace.zs[i])
                         + trace.alphas[i] * np.linalg.norm(trace.sum_d[i]))
    return res, lim


def descent_audit(trace: Trace, consts: TheoryConstants | None = None) -> np.ndarray:
    """Residuals of the per-epoch Lyapunov descent inequality.

    For each k <= T the certified inequality is

        R_{k+1} <= R_k + Delta * D m^3 alpha_k^3
                   - (1-beta)/(4 m alpha_k) ||z^{k+1} - z^k||^2
                   - m alpha_k/(4(1-beta)) [ 1/4 ||grad f(x^k)||^2
                                           + 1/5 ||grad f(z^k)||^2 ]

    with Delta = R_1 exp(D m^3 sum_{i<=T} alpha_i^3) over the full run
    horizon.  The returned residuals (rhs - R_{k+1}) must stay above
    -1e-9 * (1 + |R_k|) whenever the steps are within the admissible cap.
    The residual sequence is attached to the trace.
    """
    _require_proxy(trace)
    consts = consts or trace.constants
    T = trace.epochs
    beta = consts.momentum
    m = consts.m
    R = trace.lyapunov
    a = trace.alphas
    s3 = float(np.sum(a[:T] ** 3))
    envelope = R[0] * math.exp(consts.D * m ** 3 * s3)
    res = np.empty(T)
    for i in range(T):
        zstep = trace.zs[i + 1] - trace.zs[i]
        rhs = (R[i]
               + envelope * consts.D * m ** 3 * a[i] ** 3
               - (1.0 - beta) / (4.0 * m * a[i]) * float(zstep @ zstep)
               - m * a[i] / (4.0 * (1.0 - beta))
               * (0.25 * trace.grad_x[i] ** 2 + 0.2 * trace.grad_z[i] ** 2))
        res[i] = rhs - R[i + 1]
    trace.residual_descent = res
    return res


def descent_tolerances(trace: Trace) -> np.ndarray:
    """Allowed negative slack for :func:`descent_audit` residuals."""
    return -1e-9 * (1.0 + np.abs(trace.lyapunov[: trace.epochs]))


def inner_loop_audit(trace: Trace, consts: TheoryConstants | None = None
                     ) -> tuple[np.ndarray, np.ndarray]:
    """Residuals of the two within-epoch bounds (deep audit required).

    Spread bound (residual_b3): with B = 1 - lambda(1-beta)/beta
    (B := 1 at beta = 0),

        sum_t ||yhat_t - z^k||^2 <= (5m/4) [ B ||z^k - x^k||^2
            + m^2 alpha_k^2/(1-beta)^2 ||grad f(z^k)||^2
            + 3 L m^2 alpha_k^2/(1-beta)^2 (f(z^k) - fbar) ].

    Contraction bound (residual_b4): with eta = (1 + 2 beta^m)/3,

        ||z^{k+1} - x^{k+1}||^2 <= eta ||z^k - x^k||^2
            + beta^2 m^2 alpha_k^2 (4 ||grad f(z^k)||^2
              + 7 L (f(z^k) - fbar)) / ((1-beta)^2 (1-beta^m)).

    Both hold whenever alpha_k <= min{(1-beta)/(sqrt(8) L m), alpha_max};
    the second cap is always the binding one.  Residuals (rhs - lhs) are
    attached to the trace.
    """
    _require_proxy(trace)
    if trace.inner is None:
        raise AuditUnavailableError("inner-loop audit requires deep_audit records")
    consts = consts or trace.constants
    cfg = trace.config
    beta = consts.momentum
    lam = float(getattr(cfg, "extrapolation", 0.0))
    B = 1.0 if beta == 0.0 else 1.0 - lam * (1.0 - beta) / beta
    eta = (1.0 + 2.0 * consts.beta_m) / 3.0
    m, L = consts.m, consts.L
    T = trace.epochs
    res3 = np.empty(T)
    res4 = np.empty(T)
    for i in range(T):
        a = trace.alphas[i]
        dist_sq = trace.dist_zx[i] ** 2
        gap = trace.f_z[i] - consts.fbar
        gz_sq = trace.grad_z[i] ** 2
        diffs = trace.inner[i].y_hats - trace.zs[i]
        lhs3 = float(np.sum(diffs * diffs))
        coef = m * m * a * a / (1.0 - beta) ** 2
        rhs3 = 1.25 * m * (B * dist_sq + coef * gz_sq + 3.0 * L * coef * gap)
        res3[i] = rhs3 - lhs3
        rhs4 = eta * dist_sq + (beta * beta * m * m * a * a
                                * (4.0 * gz_sq + 7.0 * L * gap)
                                / ((1.0 - beta) ** 2 * (1.0 - consts.beta_m)))
        res4[i] = rhs4 - trace.dist_zx[i + 1] ** 2
    trace.residual_b3 = res3
    trace.residual_b4 = res4
    return res3, res4


def inner_loop_tolerances(trace: Trace) -> tuple[np.ndarray, np.ndarray]:
    """Allowed negative slack for the two inner-loop residual sequences."""
    T = trace.epochs
    gap = trace.f_z[:T] - trace.constants.fbar
    base = -1e-9 * (1.0 + np.abs(gap) + trace.dist_zx[:T] ** 2)
    return base, base


@dataclass(frozen=True)
class ExpectationReport:
    """Exact-expectation descent check over all permutation sequences."""

    n: int
    horizon: int
    sequences: int
    expected_R: np.ndarray        # (T+1,)
    expected_grad_sq: np.ndarray  # (T,)
    slacks: np.ndarray            # (T,) inequality slack per epoch
    tolerances: np.ndarray        # (T,) allowed negative slack
    descent_ok: bool
    sampling_ok: bool
    sampling_worst_margin: float


MAX_ENUMERATION_N = 6
MAX_ENUMERATION_T = 3


def expectation_audit(problem: FiniteSumProblem, config, schedule,
                      d_factor: float | None = None,
                      x0: np.ndarray | None = None) -> ExpectationReport:
    """Verify the in-expectation descent inequality by full enumeration.

    All (n!)^T permutation sequences are simulated with equal weight
    (batch size must be 1, n <= 6, T <= 3) and the exact expectations are
    checked against

        E[R_{k+1}] <= E[R_k] - m alpha_k/(16(1-beta)) E[||grad f(x^k)||^2]
                      + Delta(m^2 sum_i alpha_i^3) D m^2 alpha_k^3.

    Alongside, the without-replacement sampling variance bound is checked
    at every reachable epoch start: conditioned on each permutation
    history, the expected squared deviation of every prefix sum of
    component gradients at z^k stays below its variance cap.
    """
    from .optimizer import run  # deferred to avoid an import cycle

    if config.batch != 1:
        raise InvalidInputError("exact expectation audit requires batch = 1")
    n = problem.n
    T = config.epochs
    if n > MAX_ENUMERATION_N:
        raise SizeLimitError(f"enumeration supports n <= {MAX_ENUMERATION_N}")
    if T > MAX_ENUMERATION_T:
        raise SizeLimitError(f"enumeration supports T <= {MAX_ENUMERATION_T}")
    if d_factor is None:
        d_factor = getattr(config, "d_factor", None) or 10.0
    consts = theory_constants(problem, config.momentum, 1, d_factor)
    perms = [np.array(p, dtype=np.int64) for p in itertools.permutations(range(n))]

    sum_R = np.zeros(T + 1)
    sum_gsq = np.zeros(T)
    alphas = None
    count = 0
    for seq in itertools.product(perms, repeat=T):
        tr = run(problem, config, schedule, permutations=list(seq),
                 x0=x0, d_factor=d_factor)
        sum_R += tr.lyapunov
        sum_gsq += tr.grad_x[:T] ** 2
        alphas = tr.alphas
        count += 1
    E_R = sum_R / count
    E_gsq = sum_gsq / count

    beta = config.momentum
    m = consts.m
    s3 = float(np.sum(alphas[:T] ** 3))
    envelope = E_R[0] * math.exp(consts.D * m ** 2 * s3)
    slacks = np.empty(T)
    for i in range(T):
        rhs = (E_R[i]
               - m * alphas[i] / (16.0 * (1.0 - beta)) * E_gsq[i]
               + envelope * consts.D * m ** 2 * alphas[i] ** 3)
        slacks[i] = rhs - E_R[i + 1]
    tol = -1e-9 * (1.0 + np.abs(E_R[:T]))

    sampling_ok, worst = _sampling_bound_sweep(problem, config, schedule,
                                               perms, d_factor, x0)
    return ExpectationReport(
        n=n, horizon=T, sequences=count,
        expected_R=E_R, expected_grad_sq=E_gsq,
        slacks=slacks, tolerances=tol,
        descent_ok=bool(np.all(slacks >= tol)),
        sampling_ok=sampling_ok, sampling_worst_margin=worst,
    )


def _sampling_bound_sweep(problem, config, schedule, perms, d_factor, x0):
    """Check prefix-sum variance caps at every reachable epoch start."""
    from .optimizer import run

    n = problem.n
    T = config.epochs
    ok = True
    worst = math.inf
    for k in range(1, T + 1):
        if k == 1:
            d = problem.d
            starts = [np.zeros(d) if x0 is None else np.asarray(x0, float)]
        else:
            cfg = replace(config, epochs=k - 1)
            starts = []
            for hist in itertools.product(perms, repeat=k - 1):
                tr = run(problem, cfg, schedule, permutations=list(hist),
                         x0=x0, d_factor=d_factor)
                starts.append(proxy_iterate(tr.xs[k - 1], tr.x_tildes[k - 1],
                                            config.momentum))
        for z in starts:
            grads = np.stack([problem.component_grad(t, z) for t in range(n)])
            for i in range(1, n + 1):
                chk = weighted_sampling_check(grads, np.ones(i))
                ok = ok and chk.holds
                worst = min(worst, chk.rhs - chk.lhs)
    return ok, worst


@dataclass(frozen=True)
class RateFit:
    """Log-log least-squares fit of a running-minimum decay curve."""

    slope: float
    window: tuple[int, int]
    r2: float


def fit_rate(values: Sequence[float] | np.ndarray, window: tuple[int, int]) -> RateFit:
    """Slope of log(values[k]) against log(k) over k in [window[0], window[1]].

    ``values`` is 1-based in k (values[0] is k = 1) and must be positive
    on the window; the window must contain at least 10 points.
    """
    values = np.asarray(values, dtype=float)
    lo, hi = int(window[0]), int(window[1])
    if lo < 1 or hi > values.size or hi - lo + 1 < 10:
        raise InvalidInputError("window must contain at least 10 recorded epochs")
    y = values[lo - 1: hi]
    if np.any(y <= 0):
        raise InvalidInputError("rate fit requires positive values on the window")
    lx = np.log(np.arange(lo, hi + 1, dtype=float))
    ly = np.log(y)
    slope, intercept = np.polyfit(lx, ly, 1)
    fitted = slope * lx + intercept
    ss_res = float(np.sum((ly - fitted) ** 2))
    ss_tot = float(np.sum((ly - ly.mean()) ** 2))
    r2 = 1.0 if ss_tot == 0.0 else 1.0 - ss_res / ss_tot
    return RateFit(slope=float(slope), window=(lo, hi), r2=min(max(r2, 0.0), 1.0))


@dataclass(frozen=True)
class ConvergenceSummary:
    """Tail statistics of a completed run."""

    tail_start: int
    tail_grad_max: float
    tail_dist_max: float | None
    cauchy_tail: float
    head_dist_max: float | None


def convergence_summary(trace: Trace) -> ConvergenceSummary:
    """Last-decile maxima of ||grad f(x^k)|| and ||z^k - x^k||, plus the
    Cauchy-tail measure sup_{k,l >= 0.9T} ||x^k - x^l|| (final iterate
    included)."""
    T = trace.epochs
    lo = int(math.floor(0.9 * T)) + 1
    lo = min(lo, T)
    tail_grad = float(np.max(trace.grad_x[lo - 1: T]))
    tail_dist = None
    head_dist = None
    if trace.dist_zx is not None:
        tail_dist = float(np.max(trace.dist_zx[lo - 1: T]))
        head_hi = max(1, int(math.ceil(0.1 * T)))
        head_dist = float(np.max(trace.dist_zx[:head_hi]))
    X = trace.xs[lo - 1: T + 1]
    worst = 0.0
    for i in range(X.shape[0] - 1):
        d = np.linalg.norm(X[i + 1:] - X[i], axis=1)
        worst = max(worst, float(d.max()))
    return ConvergenceSummary(tail_start=lo, tail_grad_max=tail_grad,
                              tail_dist_max=tail_dist, cauchy_tail=worst,
                              head_dist_max=head_dist)


def _require_proxy(trace: Trace) -> None:
    if not trace.has_proxy:
        raise AuditUnavailableError(
            "audit requires proxy measurements (run with measure_proxy=True)")
