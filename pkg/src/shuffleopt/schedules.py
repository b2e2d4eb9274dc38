"""Step-size schedules and the constants used by the descent diagnostics.

Schedules are expressed through a dimensionless multiplier ``alpha``: the
actual step in epoch k is

    constant:    alpha_k = (1-beta)(1-beta^m) * alpha / (L m)
    polynomial:  alpha_k = (1-beta)(1-beta^m) / (L m) * alpha / k^gamma

with m = n/b inner steps per epoch.  The admissible range certified by
the descent analysis is alpha_k <= (1-beta)(1-beta^m)/(4 L m), i.e.
alpha <= 1/4; a configurable guard enforces, warns about, or ignores
that cap.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

from .errors import InvalidInputError, ScheduleGuardError
from .problems import FiniteSumProblem

SCHEDULE_KINDS = ("constant", "polynomial", "custom")
GUARDS = ("strict", "warn", "off")
MODES = ("expectation", "sure")

# factor scaling the cubic-error constant D; 10 is the value under which
# the per-epoch descent inequality is certified, 1 its looser variant
DEFAULT_D_FACTOR = 10.0

_GUARD_TOL = 1e-12


@dataclass(frozen=True)
class TheoryConstants:
    """Derived constants for one (problem, optimizer) pairing."""

    L: float
    fbar: float
    m: int
    momentum: float
    beta_m: float
    H: float
    D: float
    d_factor: float
    alpha_max: float

    def as_dict(self) -> dict:
        return {
            "L": self.L, "fbar": self.fbar, "m": self.m,
            "momentum": self.momentum, "beta_m": self.beta_m,
            "H": self.H, "D": self.D, "d_factor": self.d_factor,
            "alpha_max": self.alpha_max,
        }


def theory_constants(problem: FiniteSumProblem, momentum: float, batch: int,
                     d_factor: float = DEFAULT_D_FACTOR) -> TheoryConstants:
    """Evaluate the Lyapunov weight H, cubic-error constant D, and step cap.

        H = 9 L^2 m / (8 (1-beta)(1-beta^m))
        D = d_factor / (1-beta^m)^2 * (L / (1-beta))^3
        alpha_max = (1-beta)(1-beta^m) / (4 L m)
    """
    if not 0.0 <= momentum < 1.0:
        raise InvalidInputError("momentum must lie in [0, 1)")
    if problem.n % batch != 0:
        raise InvalidInputError("batch size must divide the component count n")
    L = problem.smoothness_L
    if L <= 0:
        raise InvalidInputError("smoothness constant must be positive")
    m = problem.n // batch
    beta = momentum
    beta_m = beta ** m
    H = 9.0 * L * L * m / (8.0 * (1.0 - beta) * (1.0 - beta_m))
    D = (d_factor / (1.0 - beta_m) ** 2) * (L / (1.0 - beta)) ** 3
    alpha_max = (1.0 - beta) * (1.0 - beta_m) / (4.0 * L * m)
    return TheoryConstants(L=L, fbar=problem.lower_bound_fbar, m=m,
                           momentum=beta, beta_m=beta_m, H=H, D=D,
                           d_factor=d_factor, alpha_max=alpha_max)


@dataclass(frozen=True)
class ScheduleSpec:
    """Step-size schedule description.

    ``alpha`` is the dimensionless multiplier; for ``polynomial`` kinds,
    gamma must lie in (1/3, 1] so that sum alpha_k diverges while
    sum alpha_k^3 converges.  ``mode`` selects which admissibility caps
    apply: "expectation" (uniform reshuffling) or "sure" (arbitrary
    orderings).
    """

    kind: str
    alpha: float | None = None
    gamma: float | None = None
    steps: tuple[float, ...] | None = None
    guard: str = "strict"
    mode: str = "expectation"

    def __post_init__(self):
        if self.kind not in SCHEDULE_KINDS:
            raise InvalidInputError(f"unknown schedule kind {self.kind!r}")
        if self.guard not in GUARDS:
            raise InvalidInputError(f"unknown guard {self.guard!r}")
        if self.mode not in MODES:
            raise InvalidInputError(f"unknown mode {self.mode!r}")
        if self.kind == "custom":
            if not self.steps:
                raise InvalidInputError("custom schedule needs explicit steps")
            if any(s <= 0 for s in self.steps):
                raise InvalidInputError("steps must be positive")
            if any(b > a for a, b in zip(self.steps, self.steps[1:], strict=False)):
                raise InvalidInputError("steps must be non-increasing")
            return
        if self.alpha is None or self.alpha <= 0:
            raise InvalidInputError("step multiplier alpha must be positive")
        if self.kind == "polynomial":
            if self.gamma is None or not (1.0 / 3.0 < self.gamma <= 1.0):
                raise InvalidInputError("gamma must lie in (1/3, 1]")


def _raw_step(spec: ScheduleSpec, consts: TheoryConstants, k: int) -> float:
    if k < 1:
        raise InvalidInputError("epoch index must be >= 1")
    if spec.kind == "custom":
        # past the end of an explicit sequence the last step is reused,
        # consistent with the non-increasing requirement
        return spec.steps[min(k, len(spec.steps)) - 1]
    base = (1.0 - consts.momentum) * (1.0 - consts.beta_m) * spec.alpha / (consts.L * consts.m)
    if spec.kind == "constant":
        return base
    return base / k ** spec.gamma


def step_size(spec: ScheduleSpec, consts: TheoryConstants, k: int) -> float:
    """Step size for epoch k, applying the configured admissibility guard."""
    alpha_k = _raw_step(spec, consts, k)
    if alpha_k > consts.alpha_max * (1.0 + _GUARD_TOL):
        msg = (f"step size {alpha_k:.6g} at epoch {k} exceeds the certified cap "
               f"(1-beta)(1-beta^m)/(4Lm) = {consts.alpha_max:.6g}")
        if spec.guard == "strict":
            raise ScheduleGuardError(msg)
        if spec.guard == "warn":
            warnings.warn(msg, RuntimeWarning, stacklevel=2)
    return alpha_k


def alpha_cap(spec: ScheduleSpec, n: int, beta_m: float, horizon: int) -> float:
    """Largest multiplier for which the complexity-rate bounds apply."""
    if spec.kind == "constant":
        if spec.mode == "sure":
            return min(0.25, ((1.0 - beta_m) * horizon) ** (-1.0 / 3.0))
        return min(0.25, (n / ((1.0 - beta_m) * horizon)) ** (1.0 / 3.0))
    if spec.kind == "polynomial":
        g = spec.gamma
        scale = (3.0 * g - 1.0) / (3.0 * g * (1.0 - beta_m))
        if spec.mode == "sure":
            return min(0.25, scale ** (1.0 / 3.0))
        return min(0.25, (scale * n) ** (1.0 / 3.0))
    raise InvalidInputError("custom schedules carry no multiplier cap")


def auto_alpha(kind: str, mode: str, n: int, beta_m: float, horizon: int,
               gamma: float | None = None) -> float:
    """Horizon-matched multiplier prescription for the given schedule kind.

    Constant schedules use the uncapped horizon rule
    [n/((1-beta^m) T)]^(1/3) (expectation) or [(1-beta^m) T]^(-1/3)
    (sure); polynomial schedules use their full admissibility cap.
    """
    if kind == "constant":
        if mode == "sure":
            return ((1.0 - beta_m) * horizon) ** (-1.0 / 3.0)
        return (n / ((1.0 - beta_m) * horizon)) ** (1.0 / 3.0)
    if kind == "polynomial":
        spec = ScheduleSpec(kind="polynomial", alpha=1.0, gamma=gamma, mode=mode)
        return alpha_cap(spec, n, beta_m, horizon)
    raise InvalidInputError(f"no automatic multiplier for kind {kind!r}")


def check_alpha_cap(spec: ScheduleSpec, consts: TheoryConstants, n: int,
                    horizon: int) -> None:
    """Apply the guard to the rate-bound multiplier cap (no-op for custom)."""
    if spec.kind == "custom" or spec.guard == "off":
        return
    cap = alpha_cap(spec, n, consts.beta_m, horizon)
    if spec.alpha <= cap * (1.0 + _GUARD_TOL):
        return
    msg = (f"multiplier alpha = {spec.alpha:.6g} exceeds the {spec.mode}-mode "
           f"rate cap {cap:.6g} for T = {horizon}")
    if spec.guard == "strict":
        raise ScheduleGuardError(msg)
    warnings.warn(msg, RuntimeWarning, stacklevel=2)


@dataclass(frozen=True)
class StepConditionReport:
    """Numeric summary of the diminishing-step conditions
    sum_k alpha_k = inf and sum_k alpha_k^3 < inf."""

    kind: str
    satisfied: bool | None
    horizon: int
    sum_alpha: float
    sum_alpha_cubed: float


def asymptotic_step_check(spec: ScheduleSpec, consts: TheoryConstants,
                          horizon: int) -> StepConditionReport:
    """Report whether the schedule satisfies the global-convergence step
    conditions, with partial sums up to the horizon.

    Polynomial decay with gamma in (1/3, 1] satisfies both conditions;
    constant steps fail (the cubic sum diverges); explicit sequences are
    undetermined from a finite prefix.
    """
    s1 = sum(_raw_step(spec, consts, k) for k in range(1, horizon + 1))
    s3 = sum(_raw_step(spec, consts, k) ** 3 for k in range(1, horizon + 1))
    satisfied: bool | None
    if spec.kind == "polynomial":
        satisfied = True
    elif spec.kind == "constant":
        satisfied = False
    else:
        satisfied = None
    return StepConditionReport(kind=spec.kind, satisfied=satisfied,
                               horizon=horizon, sum_alpha=s1, sum_alpha_cubed=s3)


def _ceil_snap(value: float) -> int:
    # guard against float fuzz pushing an exact integer across a ceiling
    return max(1, math.ceil(value - 1e-9 * max(1.0, abs(value))))


def predicted_epochs(consts: TheoryConstants, n: int, epsilon: float,
                     mode: str = "expectation") -> int:
    """Epochs needed to certify min-gradient accuracy epsilon.

    Expectation mode inverts the gradient-evaluation complexity
    T n >= L sqrt(n) max(sqrt(n), sqrt(L)/eps) / ((1-beta^m) eps^2);
    sure mode inverts [(1-beta^m) T]^(-2/3) <= eps^2 subject to the
    warm-up floor T >= 64/(1-beta^m).
    """
    if epsilon <= 0:
        raise InvalidInputError("epsilon must be positive")
    if mode not in MODES:
        raise InvalidInputError(f"unknown mode {mode!r}")
    one_minus = 1.0 - consts.beta_m
    if mode == "sure":
        return _ceil_snap(max(64.0, epsilon ** -3) / one_minus)
    L = consts.L
    need = L * math.sqrt(n) * max(math.sqrt(n), math.sqrt(L) / epsilon) / (one_minus * epsilon ** 2)
    return _ceil_snap(need / n)


def rate_bound(spec: ScheduleSpec, consts: TheoryConstants, gap: float,
               horizon: int, n: int) -> float:
    """Certified bound on min_{k<=T} ||grad f(x^k)||^2 (expectation mode
    bounds the expected value) for a schedule within its caps.

    ``gap`` is f(x^1) - fbar.  Polynomial schedules require gamma < 1;
    at gamma = 1 the closed-form rate below is undefined.
    """
    if spec.kind == "custom":
        raise InvalidInputError("no closed-form rate for custom schedules")
    beta_m = consts.beta_m
    a = spec.alpha
    if spec.kind == "constant":
        extra = 3.0 * a * a if spec.mode == "sure" else 3.0 * a * a / n
        return (1.0 / ((1.0 - beta_m) * a * horizon) + extra) * 16.0 * consts.L * gap
    g = spec.gamma
    if g >= 1.0:
        raise InvalidInputError("rate bound requires gamma < 1")
    extra = 9.0 * g * a * a / (3.0 * g - 1.0)
    if spec.mode == "expectation":
        extra /= n
    lead = 1.0 / ((1.0 - beta_m) * a) + extra
    return lead * 16.0 * consts.L * (1.0 - g) * gap / ((horizon + 1.0) ** (1.0 - g) - 1.0)
