"""A nondecreasing, locally Lipschitz source that is Osgood yet beats every power.

With ``phi_0 = 1`` and ``phi_{i+1} = exp(phi_i)`` the source is

* ``(e - 1) s`` on ``J_0 = [0, 1]``,
* the constant ``phi_i - phi_{i-1}`` on the plateau ``I_i = [phi_{i-1}, phi_i / 2]``,
* linear on the ramp ``J_i = (phi_i / 2, phi_i)``.

``phi_3`` is about 3.8e6 so ``phi_4`` is far beyond double range.  Anything
past ``phi_3 / 2`` is therefore handled in log space or by exact traversal
times of whole segments.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import TYPE_CHECKING, Callable, List, Optional, Tuple, Union

import numpy as np
from scipy.integrate import solve_ivp

from .errors import InvalidQueryError, NumericalFailure

if TYPE_CHECKING:  # pragma: no cover - imported for type checking only
    from .semilinear import SourceFunction

logger = logging.getLogger(__name__)

DOUBLE_DEPTH = 3
_PHI: Tuple[float, ...] = (1.0, math.e, math.exp(math.e), math.exp(math.exp(math.e)))

ODE_RTOL = 1e-9
ODE_MAX_STEPS = 10_000_000
ODE_ESCAPE = 1e12


@dataclass(frozen=True)
class PhiValue:
    """``phi_i`` stored as ``exp`` iterated ``depth`` times on ``mantissa``."""

    index: int
    depth: int
    mantissa: float

    @property
    def value(self) -> float:
        """The double value, or ``inf`` when it is not representable."""

        return self.mantissa if self.depth == 0 else math.inf

    @property
    def log_value(self) -> float:
        """``log phi_i``, or ``inf`` when that is not representable either."""

        if self.depth == 0:
            return math.log(self.mantissa)
        if self.depth == 1:
            return self.mantissa
        return math.inf

    def log_repr(self) -> str:
        if self.depth <= 1:
            return repr(self.log_value)
        return f"exp^{self.depth - 1}({self.mantissa!r})"


def phi_seq(i: int) -> PhiValue:
    """The ``i``-th term of ``phi_0 = 1``, ``phi_{i+1} = e^{phi_i}``."""

    if i < 0:
        raise InvalidQueryError(f"Index i={i} must be nonnegative.")
    if i <= DOUBLE_DEPTH:
        return PhiValue(i, 0, _PHI[i])
    return PhiValue(i, i - DOUBLE_DEPTH, _PHI[DOUBLE_DEPTH])


def _phi(i: int) -> float:
    return phi_seq(i).value


def _log_f_at_phi(i: int) -> float:
    """``log f(phi_i) = log(e^{phi_i} - phi_i)``."""

    if i == 0:
        return math.log(math.e - 1.0)
    p = _phi(i)
    if math.isinf(p):
        return math.inf
    return p + math.log1p(-p * math.exp(-p))


def _log_plateau(i: int) -> float:
    """``log(phi_i - phi_{i-1})``, the value of ``f`` on ``I_i``."""

    if i <= DOUBLE_DEPTH:
        return math.log(_phi(i) - _phi(i - 1))
    # phi_{i-1} is negligible against phi_i = exp(phi_{i-1}).
    return _log_f_at_phi(i - 1)


def _locate(s: float) -> Tuple[str, int]:
    """Segment holding ``s``: ``("J", 0)``, ``("I", i)`` or ``("J", i)``."""

    if s <= 1.0:
        return "J", 0
    for i in range(1, DOUBLE_DEPTH + 2):
        if s <= 0.5 * _phi(i):
            return "I", i
        if s < _phi(i):
            return "J", i
    raise InvalidQueryError(f"s={s!r} is outside the double range.")


def log_bad_f(s: float) -> float:
    """``log f(s)``, finite over the whole double range (``-inf`` at 0)."""

    if not s >= 0 or math.isinf(s):
        raise InvalidQueryError(f"s={s!r} must be finite and nonnegative.")
    if s == 0.0:
        return -math.inf
    kind, i = _locate(s)
    if kind == "J" and i == 0:
        return math.log((math.e - 1.0) * s)
    if kind == "I":
        return _log_plateau(i)
    half = 0.5 * _phi(i)
    u = (s - half) / half
    low = _log_plateau(i)
    high = _log_f_at_phi(i)
    if u <= 0.0:
        return low
    return float(np.logaddexp(math.log1p(-u) + low if u < 1.0 else -math.inf, math.log(u) + high))


def bad_f_eval(s: float) -> float:
    """``f(s)`` in double precision; ``inf`` on the ramp past ``phi_3 / 2``."""

    if not s >= 0 or math.isinf(s):
        raise InvalidQueryError(f"s={s!r} must be finite and nonnegative.")
    kind, i = _locate(s)
    if kind == "J" and i == 0:
        return (math.e - 1.0) * s
    if kind == "I":
        if i > DOUBLE_DEPTH:
            return math.inf
        return _phi(i) - _phi(i - 1)
    half = 0.5 * _phi(i)
    low = _phi(i) - _phi(i - 1)
    if i >= DOUBLE_DEPTH:
        return math.inf
    high = math.exp(_phi(i)) - _phi(i)
    return low + (s - half) * (high - low) / half


def bad_f_array(s: Union[float, np.ndarray]) -> np.ndarray:
    """Vectorised :func:`bad_f_eval` for simulation grids."""

    s = np.asarray(s, dtype=float)
    if np.any(s < 0):
        raise InvalidQueryError("The source is defined for nonnegative arguments only.")
    out = np.full(s.shape, math.inf)
    for i in range(DOUBLE_DEPTH, 0, -1):
        p, q = _phi(i), _phi(i - 1)
        half = 0.5 * p
        if i < DOUBLE_DEPTH:
            out = np.where((s > half) & (s < p), (p - q) + (s - half) * _ramp_slope(i), out)
        out = np.where((s >= q) & (s <= half), p - q, out)
    return np.where(s <= 1.0, (math.e - 1.0) * s, out)


def one_sided_values(s: float) -> Tuple[float, float]:
    """Left and right limits of ``f`` at a breakpoint, each from its own segment formula.

    Breakpoints are ``1`` and ``phi_i / 2``, ``phi_i`` for ``i <= 2`` plus
    ``phi_3 / 2``; at ``phi_3`` both sides overflow and only :func:`log_bad_f`
    can compare them.
    """

    if s == 1.0:
        return (math.e - 1.0) * s, _phi(1) - _phi(0)
    for i in range(1, DOUBLE_DEPTH + 1):
        p, q = _phi(i), _phi(i - 1)
        half = 0.5 * p
        if s == half:
            # The ramp starts from the plateau value with zero offset.
            return p - q, p - q if i >= DOUBLE_DEPTH else p - q + (s - half) * _ramp_slope(i)
        if s == p and i < DOUBLE_DEPTH:
            return p - q + (s - half) * _ramp_slope(i), _phi(i + 1) - p
    raise InvalidQueryError(f"s={s!r} is not a breakpoint in double range.")


def _ramp_slope(i: int) -> float:
    p, q = _phi(i), _phi(i - 1)
    if i >= DOUBLE_DEPTH:
        return math.inf
    return ((math.exp(p) - p) - (p - q)) / (0.5 * p)


def ramp_log_slope(i: int) -> float:
    """``log`` of the slope of ``f`` on ``J_i``, the local Lipschitz constant there."""

    if i < 1:
        raise InvalidQueryError("Ramps start at i = 1.")
    high = _log_f_at_phi(i)
    low = _log_plateau(i)
    log_half = _phi_log_half(i)
    return high + math.log1p(-math.exp(low - high)) - log_half


def _phi_log_half(i: int) -> float:
    return phi_seq(i).log_value - math.log(2.0)


def osgood_term(i: int) -> float:
    """``(phi_i / 2 - phi_{i-1}) / (phi_i - phi_{i-1})``, the time spent on ``I_i``."""

    if i < 1:
        raise InvalidQueryError(f"Index i={i} must be at least 1.")
    if i <= DOUBLE_DEPTH:
        p, q = _phi(i), _phi(i - 1)
        return (0.5 * p - q) / (p - q)
    # 1/2 - (phi_{i-1}/2) / (phi_i - phi_{i-1}); the correction underflows.
    prev = phi_seq(i - 1)
    correction = math.exp(prev.log_value - math.log(2.0) - _log_plateau(i)) if prev.depth == 0 else 0.0
    return 0.5 - correction


def osgood_partial_sum(N: int) -> float:
    """``sum_{i=1}^{N} osgood_term(i)``."""

    if N < 1:
        raise InvalidQueryError(f"N={N} must be at least 1.")
    return math.fsum(osgood_term(i) for i in range(1, N + 1))


def growth_probe(gamma: float, i: int) -> float:
    """``log(phi_i^-gamma f(phi_i))``; ``inf`` once ``phi_i`` leaves double range."""

    if gamma < 0:
        raise InvalidQueryError(f"gamma={gamma!r} must be nonnegative.")
    if i < 1:
        raise InvalidQueryError(f"Index i={i} must be at least 1.")
    log_f = _log_f_at_phi(i)
    if math.isinf(log_f):
        return math.inf
    return log_f - gamma * phi_seq(i).log_value


def growth_margin(gamma: float, i: int) -> PhiValue:
    """``log(phi_i^-gamma f(phi_i))`` as an exponential tower, so it stays comparable.

    From ``i = 4`` on ``log f(phi_i) = phi_i`` to double precision and
    ``log phi_i = phi_{i-1}``, so the margin is ``phi_i - gamma phi_{i-1}``,
    whose logarithm is ``phi_{i-1} + log1p(-gamma phi_{i-1} exp(-phi_{i-1}))``.
    """

    if i <= DOUBLE_DEPTH:
        return PhiValue(i, 0, growth_probe(gamma, i))
    if gamma < 0:
        raise InvalidQueryError(f"gamma={gamma!r} must be nonnegative.")
    prev = phi_seq(i - 1)
    if prev.depth > 0:
        # The correction is below exp(-phi_3) and vanishes in double precision.
        return PhiValue(i, prev.depth + 1, prev.mantissa)
    p = prev.mantissa
    correction = gamma * p * math.exp(-p)
    if correction >= 1.0:
        raise NumericalFailure(f"Growth margin at i={i} is not positive for gamma={gamma!r}.")
    return PhiValue(i, 1, p + math.log1p(-correction))


def tower_less(a: PhiValue, b: PhiValue) -> bool:
    """``exp^a.depth(a.mantissa) < exp^b.depth(b.mantissa)``.

    The deeper tower is unwound by exponentiating its mantissa; an overflow
    means it exceeds every double and so the shallower one.
    """

    da, ma, db, mb = a.depth, a.mantissa, b.depth, b.mantissa
    while da > db:
        if ma > 709.0:
            return False
        ma, da = math.exp(ma), da - 1
    while db > da:
        if mb > 709.0:
            return True
        mb, db = math.exp(mb), db - 1
    return ma < mb


@dataclass(frozen=True)
class ConstructionRow:
    i: int
    log_phi: str
    log_f_phi: str
    term: float
    partial_sum: float


def construction_table(N: int) -> List[ConstructionRow]:
    """Rows ``(i, log phi_i, log f(phi_i), term_i, partial sum)`` for ``i = 1..N``."""

    if N < 1:
        raise InvalidQueryError(f"N={N} must be at least 1.")
    rows: List[ConstructionRow] = []
    total = 0.0
    for i in range(1, N + 1):
        term = osgood_term(i)
        total += term
        phi = phi_seq(i)
        log_f = repr(_log_f_at_phi(i)) if phi.depth == 0 else _exp_repr(phi)
        rows.append(ConstructionRow(i=i, log_phi=phi.log_repr(), log_f_phi=log_f, term=term, partial_sum=total))
    return rows


def _exp_repr(phi: PhiValue) -> str:
    """``log f(phi_i) ~ phi_i`` written as iterated exponentials."""

    return f"exp^{phi.depth}({phi.mantissa!r})"


# ---------------------------------------------------------------------------
# Scalar ODE


@dataclass(frozen=True)
class SegmentPosition:
    """Where a bad-source trajectory sits once it has left double range."""

    segment: str
    index: int
    elapsed: float


@dataclass
class OdeTrajectory:
    """Solution of ``x' = f(x)`` on ``[0, T]``."""

    t: np.ndarray
    x: np.ndarray
    blew_up: bool = False
    blowup_time: Optional[float] = None
    position: Optional[SegmentPosition] = None
    evaluations: int = 0
    horizon: float = 0.0

    @property
    def finite(self) -> bool:
        return not self.blew_up


def _is_bad_osgood(f: Union["SourceFunction", Callable[[float], float]]) -> bool:
    return getattr(f, "kind", None) == "bad-osgood"


def ode_integrate(
    f: Union["SourceFunction", Callable[[float], float]],
    x0: float,
    T: float,
    *,
    rtol: float = ODE_RTOL,
    max_steps: int = ODE_MAX_STEPS,
    escape: float = ODE_ESCAPE,
) -> OdeTrajectory:
    """Integrate ``x' = f(x)`` from ``x0`` with adaptive RK45.

    The run stops with ``blew_up`` when ``x`` passes ``escape`` or the
    integrator can no longer shrink its step.  For the bad Osgood source the
    trajectory is continued past ``phi_3 / 2`` with the exact traversal time of
    each ramp and plateau, and the final ``position`` records the segment
    reached at ``T``.
    """

    if not x0 >= 0 or not math.isfinite(x0):
        raise InvalidQueryError(f"x0={x0!r} must be finite and nonnegative.")
    if not T > 0:
        raise InvalidQueryError(f"Horizon T={T!r} must be positive.")
    bad = _is_bad_osgood(f)
    handoff = 0.5 * _phi(DOUBLE_DEPTH)
    if bad and x0 > handoff:
        return _continue_in_segments(x0, 0.0, T, np.array([0.0]), np.array([x0]), 0)

    evaluations = 0

    def rhs(_t: float, y: np.ndarray) -> List[float]:
        nonlocal evaluations
        evaluations += 1
        if evaluations > 6 * max_steps:
            raise NumericalFailure(f"ODE integration exceeded {max_steps} steps.")
        arg = max(float(y[0]), 0.0)
        if bad:
            # Past the hand-off the segment traversal takes over; RK stages never see the ramp.
            arg = min(arg, handoff)
        return [float(f(arg))]

    def escaped(_t: float, y: np.ndarray) -> float:
        return float(y[0]) - escape

    escaped.terminal = True  # type: ignore[attr-defined]
    escaped.direction = 1  # type: ignore[attr-defined]
    events = [escaped]
    if bad:
        def handed_off(_t: float, y: np.ndarray) -> float:
            return float(y[0]) - handoff

        handed_off.terminal = True  # type: ignore[attr-defined]
        handed_off.direction = 1  # type: ignore[attr-defined]
        events.append(handed_off)

    solution = solve_ivp(rhs, (0.0, T), [x0], method="RK45", rtol=rtol, atol=1e-12, events=events)
    t_values = np.asarray(solution.t)
    x_values = np.asarray(solution.y[0])
    if bad and len(solution.t_events) > 1 and solution.t_events[1].size:
        t_hand = float(solution.t_events[1][0])
        logger.debug("Bad source trajectory reached phi_3/2 at t=%g; continuing by segments", t_hand)
        return _continue_in_segments(handoff, t_hand, T, t_values, x_values, evaluations)
    if solution.t_events[0].size:
        t_blow = float(solution.t_events[0][0])
        return OdeTrajectory(t_values, x_values, True, t_blow, None, evaluations, T)
    if solution.status == -1 or not np.all(np.isfinite(x_values)):
        t_blow = float(t_values[-1])
        logger.debug("Integrator stalled at t=%g (%s); treating as blow-up", t_blow, solution.message)
        return OdeTrajectory(t_values, x_values, True, t_blow, None, evaluations, T)
    return OdeTrajectory(t_values, x_values, False, None, None, evaluations, T)


def _ramp_time(i: int, start: float) -> float:
    """Exact time to cross ``J_i`` from ``start`` (``phi_i / 2`` when entering)."""

    if i > DOUBLE_DEPTH:
        return 0.0
    half = 0.5 * _phi(i)
    log_high = _log_f_at_phi(i)
    log_start = log_bad_f(max(start, half))
    log_rate = log_high + math.log1p(-math.exp(_log_plateau(i) - log_high)) - math.log(half)
    return math.exp(-log_rate) * (log_high - log_start)


def _continue_in_segments(
    x: float,
    t: float,
    T: float,
    t_values: np.ndarray,
    x_values: np.ndarray,
    evaluations: int,
    max_segments: int = 1_000_000,
) -> OdeTrajectory:
    kind, i = _locate(x) if x < _phi(DOUBLE_DEPTH) else ("I", DOUBLE_DEPTH + 1)
    if kind == "I":
        if i <= DOUBLE_DEPTH:
            remaining = max(0.5 * _phi(i) - x, 0.0) / (_phi(i) - _phi(i - 1))
        else:
            remaining = osgood_term(i)
        if t + remaining >= T:
            return _at(t_values, x_values, evaluations, T, SegmentPosition("I", i, T - t))
        t += remaining
    else:
        step = _ramp_time(i, x)
        if t + step >= T:
            return _at(t_values, x_values, evaluations, T, SegmentPosition("J", i, T - t))
        t += step
        i += 1
        plateau = osgood_term(i)
        if t + plateau >= T:
            return _at(t_values, x_values, evaluations, T, SegmentPosition("I", i, T - t))
        t += plateau
    for _ in range(max_segments):
        step = _ramp_time(i, 0.5 * _phi(i)) if i <= DOUBLE_DEPTH else 0.0
        if t + step >= T:
            return _at(t_values, x_values, evaluations, T, SegmentPosition("J", i, T - t))
        t += step
        i += 1
        plateau = osgood_term(i)
        if t + plateau >= T:
            return _at(t_values, x_values, evaluations, T, SegmentPosition("I", i, T - t))
        t += plateau
    raise NumericalFailure(f"Segment traversal exceeded {max_segments} segments before T={T:g}.")


def _at(t_values: np.ndarray, x_values: np.ndarray, evaluations: int, T: float, position: SegmentPosition) -> OdeTrajectory:
    return OdeTrajectory(t_values, x_values, False, None, position, evaluations, T)


__all__ = [
    "PhiValue",
    "ConstructionRow",
    "SegmentPosition",
    "OdeTrajectory",
    "phi_seq",
    "bad_f_eval",
    "bad_f_array",
    "log_bad_f",
    "one_sided_values",
    "ramp_log_slope",
    "osgood_term",
    "osgood_partial_sum",
    "growth_probe",
    "growth_margin",
    "tower_less",
    "construction_table",
    "ode_integrate",
]
