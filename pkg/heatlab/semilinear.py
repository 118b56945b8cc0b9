"""Radial simulations of ``u_t = Laplace(u) + f(u)`` with capped singular data.

The solver works on the radial variable of an interval ``(-a, a)`` (symmetric
data) or a ball.  Space is discretised by a vertex-centred finite-volume
scheme on the graded mesh ``r_j = A (j / J)^g``; time by backward Euler for
diffusion with the reaction taken explicitly.  Each step is one symmetric
tridiagonal solve.

Non-existence cannot be observed on a grid.  The experiment instead follows
early-time ``L^1`` masses along a ladder of caps, together with the first
Picard iterate (the Duhamel lower bound) whose growth rate the theory
predicts.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.integrate import trapezoid
from scipy.linalg import solveh_banded
from scipy.special import erf

from . import osgood
from .errors import InvalidQueryError, NumericalFailure
from .images_backend import image_shells
from .kernel_core import Ball, Interval, SeriesBudget
from .linear_evolve import SingularData, sphere_area

logger = logging.getLogger(__name__)

DT_FLOOR = 1e-15
GROWTH_LIMIT = 1.1
U_MAX = 1e12
MAX_STEPS = 1_000_000


# ---------------------------------------------------------------------------
# Sources


class SourceKind(str, Enum):
    FUJITA_POWER = "fujita-power"
    BAD_OSGOOD = "bad-osgood"
    TABLE = "table"


@dataclass(frozen=True)
class SourceFunction:
    """A nondecreasing reaction term ``f`` with ``f(0) >= 0``."""

    kind: SourceKind
    p: Optional[float] = None
    breakpoints: Tuple[Tuple[float, float], ...] = ()

    def __call__(self, s: float) -> float:
        return float(self.evaluate(np.asarray(s, dtype=float)))

    def evaluate(self, s: np.ndarray) -> np.ndarray:
        s = np.asarray(s, dtype=float)
        if self.kind is SourceKind.FUJITA_POWER:
            with np.errstate(over="ignore"):
                return np.power(s, self.p)
        if self.kind is SourceKind.BAD_OSGOOD:
            return osgood.bad_f_array(s)
        xs = np.array([b[0] for b in self.breakpoints])
        fs = np.array([b[1] for b in self.breakpoints])
        return np.interp(s, xs, fs)

    @property
    def is_zero(self) -> bool:
        return self.kind is SourceKind.TABLE and all(v == 0.0 for _, v in self.breakpoints)

    def label(self) -> str:
        if self.kind is SourceKind.FUJITA_POWER:
            return f"fujita-power(p={self.p:g})"
        if self.kind is SourceKind.TABLE:
            return f"table({len(self.breakpoints)} breakpoints)"
        return self.kind.value


def make_source(
    kind: Union[SourceKind, str],
    *,
    p: Optional[float] = None,
    table: Optional[Sequence[Tuple[float, float]]] = None,
    samples: int = 1025,
) -> SourceFunction:
    """Build a validated source.

    Args:
        kind: ``fujita-power``, ``bad-osgood`` or ``table``.
        p: Exponent for the Fujita power, which must exceed 1.
        table: ``(s, f)`` breakpoints for a table source, interpolated linearly
            and extended by constants.
        samples: Number of points used to check monotonicity of a table.
    """

    try:
        kind = SourceKind(kind)
    except ValueError as exc:
        available = ", ".join(k.value for k in SourceKind)
        raise InvalidQueryError(f"Unknown source kind '{kind}'. Available options: {available}.") from exc
    if kind is SourceKind.FUJITA_POWER:
        if p is None or not p > 1.0:
            raise InvalidQueryError(f"A Fujita power needs p > 1, got {p!r}.")
        return SourceFunction(kind, p=float(p))
    if kind is SourceKind.BAD_OSGOOD:
        return SourceFunction(kind)
    if not table:
        raise InvalidQueryError("A table source needs at least one breakpoint.")
    points = tuple(sorted((float(s), float(v)) for s, v in table))
    if any(b[0] == a[0] for a, b in zip(points, points[1:])):
        raise InvalidQueryError("Table breakpoints must have distinct abscissae.")
    source = SourceFunction(kind, breakpoints=points)
    if source(0.0) < 0:
        raise InvalidQueryError("A source must satisfy f(0) >= 0.")
    grid = np.linspace(min(0.0, points[0][0]), max(points[-1][0], 1.0), samples)
    if np.any(np.diff(source.evaluate(grid)) < 0):
        raise InvalidQueryError("A table source must be nondecreasing.")
    return source


def zero_source() -> SourceFunction:
    """``f = 0``, the linear heat equation."""

    return make_source(SourceKind.TABLE, table=[(0.0, 0.0)])


class Regime(str, Enum):
    NONEXISTENCE = "nonexistence"
    LOCAL_EXISTENCE = "local-existence"
    UNKNOWN = "unknown"
    BORDERLINE = "borderline"


def classify_regime(source: SourceFunction, q: float, n: int) -> Regime:
    """Where a source sits relative to the Fujita thresholds for ``L^q`` data."""

    if source.kind is SourceKind.BAD_OSGOOD:
        return Regime.NONEXISTENCE
    if source.is_zero:
        return Regime.LOCAL_EXISTENCE
    if source.kind is not SourceKind.FUJITA_POWER:
        return Regime.UNKNOWN
    p = float(source.p)
    if q == 1.0 and math.isclose(p, 1.0 + 2.0 / n):
        return Regime.BORDERLINE
    if p > q * (1.0 + 2.0 / n):
        return Regime.NONEXISTENCE
    if p < 1.0 + 2.0 * q / n:
        return Regime.LOCAL_EXISTENCE
    return Regime.UNKNOWN


# ---------------------------------------------------------------------------
# Configuration and grid


@dataclass(frozen=True)
class SimConfig:
    """Everything a radial run needs apart from the cap."""

    domain: Union[Interval, Ball]
    data: Optional[SingularData]
    source: SourceFunction
    dt_init: float = 1e-6
    t_end: float = 1e-3
    J: int = 1024
    grading: float = 3.0
    u_max: float = U_MAX
    caps: Tuple[float, ...] = (1e1, 1e2, 1e3, 1e4)
    q: float = 1.0
    dt_growth: float = 1.1
    dt_max: Optional[float] = None
    initial: Optional[Callable[[np.ndarray], np.ndarray]] = None

    def __post_init__(self) -> None:
        if not self.dt_init > 0:
            raise InvalidQueryError(f"dt_init={self.dt_init!r} must be positive.")
        if not self.t_end > 0:
            raise InvalidQueryError(f"t_end={self.t_end!r} must be positive.")
        if self.J < 128:
            raise InvalidQueryError(f"Grid size J={self.J} must be at least 128.")
        if not self.grading >= 1.0:
            raise InvalidQueryError(f"Mesh grading {self.grading!r} must be at least 1.")
        if not self.u_max > 0:
            raise InvalidQueryError("The blow-up threshold must be positive.")
        if not self.dt_growth >= 1.0:
            raise InvalidQueryError("dt_growth must be at least 1.")
        if any(b <= a for a, b in zip(self.caps, self.caps[1:])):
            raise InvalidQueryError("Caps must be strictly increasing.")
        if self.data is None and self.initial is None:
            raise InvalidQueryError("Either singular data or a custom initial profile is required.")
        if not isinstance(self.domain, (Interval, Ball)):
            raise InvalidQueryError("Simulations run on intervals or balls.")
        if self.data is not None:
            if self.data.n != self.n:
                raise InvalidQueryError(f"Data dimension {self.data.n} differs from domain dimension {self.n}.")
            if not self.data.R < self.extent:
                raise InvalidQueryError("The support of the data must sit inside the domain.")

    @property
    def n(self) -> int:
        return 1 if isinstance(self.domain, Interval) else self.domain.n

    @property
    def extent(self) -> float:
        return self.domain.a if isinstance(self.domain, Interval) else self.domain.radius

    @property
    def clearance(self) -> float:
        if self.data is None:
            raise InvalidQueryError("Clearance is defined relative to the data support.")
        return self.extent - self.data.R


class RadialGrid:
    """Finite-volume radial Laplacian with Dirichlet value at ``r_J``.

    ``volumes[j]`` is ``int r^(n-1) dr`` over the control volume of node ``j``
    and ``conductance[j]`` couples nodes ``j`` and ``j + 1``.  The origin row
    reduces to ``2n (u_1 - u_0) / h^2`` on a uniform mesh.
    """

    def __init__(self, extent: float, J: int, n: int, grading: float = 1.0):
        self.n = n
        self.r = extent * (np.arange(J + 1, dtype=float) / J) ** grading
        faces = 0.5 * (self.r[:-1] + self.r[1:])
        lower = np.concatenate(([0.0], faces[:-1]))
        self.faces = faces
        self.volumes = (faces**n - lower**n) / n
        self.conductance = faces ** (n - 1) / np.diff(self.r)

    @property
    def unknowns(self) -> int:
        return self.volumes.size

    def solve(self, dt: float, rhs: np.ndarray) -> np.ndarray:
        """Solve ``(V + dt L) u = rhs`` for the interior unknowns."""

        c = self.conductance
        ab = np.empty((2, self.unknowns))
        ab[0, 0] = 0.0
        ab[0, 1:] = -dt * c[:-1]
        ab[1] = self.volumes + dt * (c + np.concatenate(([0.0], c[:-1])))
        return solveh_banded(ab, rhs, lower=False, check_finite=False)

    def with_boundary(self, u: np.ndarray) -> np.ndarray:
        return np.concatenate((u, [0.0]))


def _data_antiderivative(d: SingularData, rho: np.ndarray) -> np.ndarray:
    """``int_0^rho w_0(s) s^(n-1) ds`` in closed form."""

    n, alpha = d.n, d.alpha
    rho = np.minimum(np.asarray(rho, dtype=float), d.R)
    rho_c = min(d.cap_radius, d.R)
    inner = d.cap * np.minimum(rho, rho_c) ** n / n
    outer = np.where(rho > rho_c, (rho ** (n - alpha) - rho_c ** (n - alpha)) / (n - alpha), 0.0)
    return inner + outer


def initial_profile(cfg: SimConfig, grid: RadialGrid, cap: Optional[float]) -> np.ndarray:
    """Interior initial values: control-volume averages of capped data, or the custom profile."""

    if cfg.initial is not None:
        return np.asarray(cfg.initial(grid.r[:-1]), dtype=float)
    if cap is None or math.isinf(cap):
        raise InvalidQueryError("Simulations need a finite cap on the singular data.")
    d = cfg.data.with_cap(cap)
    edges = np.concatenate(([0.0], grid.faces))
    return np.diff(_data_antiderivative(d, edges)) / grid.volumes


# ---------------------------------------------------------------------------
# Simulation


class SimulationStatus(str, Enum):
    COMPLETED = "COMPLETED"
    BLOW_UP = "BLOW_UP"
    BLOW_UP_EXTRAPOLATED = "BLOW_UP_EXTRAPOLATED"
    STIFFNESS_FAILURE = "STIFFNESS_FAILURE"


@dataclass
class RadialProfile:
    r: np.ndarray
    u: np.ndarray
    t: float
    n: int


@dataclass
class Trajectory:
    """Snapshots of a radial run and how it ended."""

    cap: Optional[float]
    status: SimulationStatus
    t_final: float
    steps: int
    dt_min: float
    snapshots: List[RadialProfile] = field(default_factory=list)
    t_blowup: Optional[float] = None
    max_value: float = 0.0
    linear: Optional[RadialProfile] = None

    @property
    def blew_up(self) -> bool:
        return self.status in (SimulationStatus.BLOW_UP, SimulationStatus.BLOW_UP_EXTRAPOLATED)

    @property
    def final(self) -> RadialProfile:
        return self.snapshots[-1]

    def profile_at(self, t: float) -> RadialProfile:
        for snap in self.snapshots:
            if math.isclose(snap.t, t, rel_tol=1e-12, abs_tol=1e-300):
                return snap
        raise InvalidQueryError(f"No stored profile at t={t:g}.")

    def rows(self) -> List[Tuple[float, float, float]]:
        return [(s.t, float(r), float(u)) for s in self.snapshots for r, u in zip(s.r, s.u)]


def _half_radius(r: np.ndarray, u: np.ndarray) -> float:
    """Radius where ``u`` first falls to half its maximum."""

    peak = int(np.argmax(u))
    below = np.nonzero(u[peak:] <= 0.5 * u[peak])[0]
    if below.size == 0:
        return float(r[-1] - r[peak])
    return float(max(r[peak + below[0]] - r[peak], r[1]))


def ode_escape_time(source: SourceFunction, start: float, u_max: float, points: int = 512) -> float:
    """``int_start^u_max ds / f(s)`` on a geometric grid."""

    if start >= u_max:
        return 0.0
    s = np.geomspace(start, u_max, points)
    with np.errstate(divide="ignore"):
        inv = 1.0 / source.evaluate(s)
    return float(trapezoid(inv, s))


def _checkpoint_times(t_end: float, extra: Optional[Sequence[float]]) -> List[float]:
    times = {float(t_end)}
    for t in extra or ():
        if 0.0 < t <= t_end:
            times.add(float(t))
    return sorted(times)


def _initial_dt(cfg: SimConfig, cap: Optional[float]) -> float:
    dt = cfg.dt_init
    if cfg.data is not None and cap is not None and math.isfinite(cap):
        dt = min(dt, 0.01 * cap ** (-2.0 / cfg.data.alpha))
    return dt


def simulate_radial(
    cfg: SimConfig,
    cap: Optional[float] = None,
    *,
    snapshot_times: Optional[Sequence[float]] = None,
    stride: int = 0,
    companion: bool = False,
    progress_callback: Optional[Callable[[str], None]] = None,
) -> Trajectory:
    """Run the IMEX scheme from capped data until ``t_end`` or blow-up.

    Args:
        cfg: Simulation settings.
        cap: Height cap applied to the singular data (ignored with a custom profile).
        snapshot_times: Times at which profiles are stored; steps land on them exactly.
        stride: Also store every ``stride``-th step when positive.
        companion: Also advance the linear evolution ``w`` with the same steps and
            keep its last profile in ``Trajectory.linear``.
        progress_callback: Receives a short message at each checkpoint.

    Returns:
        A :class:`Trajectory`.  The initial profile and the last computed
        profile are always stored.
    """

    grid = RadialGrid(cfg.extent, cfg.J, cfg.n, cfg.grading)
    u = initial_profile(cfg, grid, cap)
    if np.any(u < 0) or not np.all(np.isfinite(u)):
        raise InvalidQueryError("Initial data must be finite and nonnegative.")
    checkpoints = _checkpoint_times(cfg.t_end, snapshot_times)
    dt_max = cfg.dt_max if cfg.dt_max is not None else cfg.t_end / 50.0
    dt = min(_initial_dt(cfg, cap), dt_max)
    t = 0.0
    steps = 0
    dt_min = math.inf
    snapshots = [RadialProfile(grid.r, grid.with_boundary(u), 0.0, cfg.n)]
    w = u.copy() if companion else None
    next_index = 0

    def finish(status: SimulationStatus, t_blowup: Optional[float] = None) -> Trajectory:
        if snapshots[-1].t != t:
            snapshots.append(RadialProfile(grid.r, grid.with_boundary(u), t, cfg.n))
        logger.info(
            "Radial run cap=%s finished %s at t=%.6g after %d steps (max u %.3g)",
            cap, status.value, t, steps, float(u.max(initial=0.0)),
        )
        return Trajectory(
            cap=cap,
            status=status,
            t_final=t,
            steps=steps,
            dt_min=dt_min,
            snapshots=snapshots,
            t_blowup=t_blowup,
            max_value=float(u.max(initial=0.0)),
            linear=None if w is None else RadialProfile(grid.r, grid.with_boundary(w), t, cfg.n),
        )

    while next_index < len(checkpoints):
        target = checkpoints[next_index]
        if steps >= MAX_STEPS:
            raise NumericalFailure(f"Radial run exceeded {MAX_STEPS} steps before t={target:g}.")
        step = min(dt, target - t)
        reaction = cfg.source.evaluate(u)
        if not np.all(np.isfinite(reaction)):
            return finish(SimulationStatus.BLOW_UP, t)
        peak = float(u.max(initial=0.0))
        halved = False
        while True:
            candidate = grid.solve(step, grid.volumes * (u + step * reaction))
            new_peak = float(candidate.max(initial=0.0))
            if peak == 0.0 or new_peak <= GROWTH_LIMIT * peak:
                break
            step *= 0.5
            halved = True
            if step < DT_FLOOR:
                reaction_time = peak / max(float(cfg.source(peak)), 1e-300)
                diffusion_time = _half_radius(grid.r[:-1], u) ** 2
                if reaction_time < 1e-3 * diffusion_time:
                    t_blowup = t + ode_escape_time(cfg.source, peak, cfg.u_max)
                    logger.debug("Extrapolating blow-up: reaction %.3g vs diffusion %.3g", reaction_time, diffusion_time)
                    return finish(SimulationStatus.BLOW_UP_EXTRAPOLATED, t_blowup)
                logger.warning("Step fell below %g at t=%g without a dominant reaction", DT_FLOOR, t)
                return finish(SimulationStatus.STIFFNESS_FAILURE)
        if np.any(candidate < -1e-12 * max(new_peak, 1.0)):
            raise NumericalFailure(f"Negative values appeared at t={t + step:g}.")
        u = np.maximum(candidate, 0.0)
        if w is not None:
            w = grid.solve(step, grid.volumes * w)
        t = target if step == target - t else t + step
        steps += 1
        dt_min = min(dt_min, step)
        if new_peak > cfg.u_max:
            return finish(SimulationStatus.BLOW_UP, t)
        if stride > 0 and steps % stride == 0 and t != target:
            snapshots.append(RadialProfile(grid.r, grid.with_boundary(u), t, cfg.n))
        if t == target:
            snapshots.append(RadialProfile(grid.r, grid.with_boundary(u), t, cfg.n))
            next_index += 1
            if progress_callback is not None:
                progress_callback(f"cap={cap}: reached t={t:.6g} after {steps} steps")
        if halved:
            dt = step
        elif step == dt:
            dt = min(dt * cfg.dt_growth, dt_max)
    return finish(SimulationStatus.COMPLETED)


def l1_mass(profile: RadialProfile, R: float) -> float:
    """``int_{B(R)} u dx`` by the trapezoidal rule in the radial variable."""

    r, u = profile.r, profile.u
    if not 0 < R <= r[-1]:
        raise InvalidQueryError(f"Region radius {R!r} must lie in (0, {r[-1]:g}].")
    inside = r < R
    radii = np.concatenate((r[inside], [R]))
    values = np.concatenate((u[inside], [np.interp(R, r, u)]))
    return float(sphere_area(profile.n) * trapezoid(values * radii ** (profile.n - 1), radii))


def duhamel_lower_mass(
    cfg: SimConfig,
    cap: float,
    t_probe: float,
) -> Tuple[float, float]:
    """Linear mass and first Picard increment at ``t_probe``.

    Returns ``(int_{B(R)} w(t), int_{B(R)} int_0^t S(t-s) f(w(s)) ds)`` with
    ``w`` the linear evolution of the capped data.  Since ``u >= w`` and ``f``
    is nondecreasing their sum bounds the mass of any solution from below.
    """

    if cfg.data is None:
        raise InvalidQueryError("The Duhamel lower bound needs singular data.")
    grid = RadialGrid(cfg.extent, cfg.J, cfg.n, cfg.grading)
    w = initial_profile(cfg, grid, cap)
    v = np.zeros_like(w)
    dt_max = cfg.dt_max if cfg.dt_max is not None else t_probe / 50.0
    dt = min(_initial_dt(cfg, cap), dt_max)
    t = 0.0
    steps = 0
    while t < t_probe:
        if steps >= MAX_STEPS:
            raise NumericalFailure(f"Duhamel run exceeded {MAX_STEPS} steps.")
        step = min(dt, t_probe - t)
        w = grid.solve(step, grid.volumes * w)
        with np.errstate(over="ignore", invalid="ignore"):
            v = grid.solve(step, grid.volumes * (v + step * cfg.source.evaluate(w)))
        t = t_probe if step == t_probe - t else t + step
        steps += 1
        dt = min(step * cfg.dt_growth, dt_max)
    R = cfg.data.R
    linear = l1_mass(RadialProfile(grid.r, grid.with_boundary(w), t, cfg.n), R)
    increment = l1_mass(RadialProfile(grid.r, grid.with_boundary(v), t, cfg.n), R)
    return linear, increment


# ---------------------------------------------------------------------------
# Cap ladder


@dataclass
class CapRecord:
    cap: float
    mass: float
    linear_mass: float
    duhamel_increment: float
    surplus: float
    steps: int
    status: SimulationStatus
    t_blowup: Optional[float] = None
    last_mass: float = math.nan
    t_last: float = math.nan

    @property
    def blew_up(self) -> bool:
        return self.status in (SimulationStatus.BLOW_UP, SimulationStatus.BLOW_UP_EXTRAPOLATED)

    @property
    def lower_mass(self) -> float:
        return self.linear_mass + self.duhamel_increment


@dataclass
class BlowupReport:
    """Cap-ladder masses with the measured and predicted growth rates."""

    n: int
    q: float
    alpha: float
    R: float
    source: str
    probe_time: float
    regime: Regime
    records: List[CapRecord] = field(default_factory=list)
    fitted_slope: Optional[float] = None
    fit_caps: List[float] = field(default_factory=list)
    theoretical_slope: Optional[float] = None
    final_relative_increment: Optional[float] = None
    ladder_monotone: Optional[bool] = None
    verdict: Optional[bool] = None
    notes: List[str] = field(default_factory=list)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "n": self.n,
            "q": self.q,
            "alpha": self.alpha,
            "R": self.R,
            "source": self.source,
            "probe_time": self.probe_time,
            "regime": self.regime.value,
            "caps": [r.cap for r in self.records],
            "masses": [r.mass for r in self.records],
            "linear_masses": [r.linear_mass for r in self.records],
            "duhamel_increments": [r.duhamel_increment for r in self.records],
            "surpluses": [r.surplus for r in self.records],
            "lower_masses": [r.lower_mass for r in self.records],
            "blew_up": [r.blew_up for r in self.records],
            "t_blowup": [r.t_blowup for r in self.records],
            "last_masses": [r.last_mass for r in self.records],
            "t_last": [r.t_last for r in self.records],
            "steps": [r.steps for r in self.records],
            "fitted_slope": self.fitted_slope,
            "fit_caps": self.fit_caps,
            "theoretical_slope": self.theoretical_slope,
            "final_relative_increment": self.final_relative_increment,
            "ladder_monotone": self.ladder_monotone,
            "verdict": self.verdict,
            "notes": list(self.notes),
        }


def theoretical_slope(source: SourceFunction, n: int, alpha: float) -> Optional[float]:
    """``p - (n + 2) / alpha`` for a Fujita power; ``None`` otherwise."""

    if source.kind is not SourceKind.FUJITA_POWER:
        return None
    return float(source.p) - (n + 2.0) / alpha


def default_probe_time(cfg: SimConfig) -> float:
    eps = cfg.clearance
    return 1e-3 * eps * eps / cfg.n


def _run_cap(cfg: SimConfig, cap: float, t_probe: float) -> CapRecord:
    run = simulate_radial(cfg, cap, companion=True)
    if run.status is SimulationStatus.STIFFNESS_FAILURE:
        raise NumericalFailure(f"Cap {cap:g}: step size underflow without blow-up (stiffness failure).")
    last_mass = l1_mass(run.final, cfg.data.R)
    mass = math.inf if run.blew_up else last_mass
    surplus = math.inf if run.blew_up else mass - l1_mass(run.linear, cfg.data.R)
    linear, increment = duhamel_lower_mass(cfg, cap, t_probe)
    return CapRecord(
        cap=cap,
        mass=mass,
        linear_mass=linear,
        duhamel_increment=increment,
        surplus=surplus,
        steps=run.steps,
        status=run.status,
        t_blowup=run.t_blowup,
        last_mass=last_mass,
        t_last=run.t_final,
    )


def blowup_experiment(
    cfg: SimConfig,
    probe_time: Optional[float] = None,
    *,
    workers: int = 1,
    progress_callback: Optional[Callable[[str], None]] = None,
) -> BlowupReport:
    """Run the cap ladder and compare mass growth with the predicted rate.

    Above the Fujita threshold the Duhamel increments should grow like
    ``M^(p - (n+2)/alpha)``; the slope is fitted over the caps whose core
    ``cap^(-1/alpha)`` diffuses before the probe time, where that scaling
    applies.  Below the threshold the nonlinear surplus over the linear mass
    should settle: its last increment, taken relative to the mass, must drop
    below 5%.  The linear mass of capped data itself converges only like
    ``M^(1 - 1/alpha)`` and is not part of that test.  In the indeterminate
    band no verdict is given.
    """

    if cfg.data is None:
        raise InvalidQueryError("The blow-up experiment needs singular data.")
    d = cfg.data
    n = cfg.n
    t_star = default_probe_time(cfg) if probe_time is None else float(probe_time)
    limit = min(cfg.clearance**2 / n, 1.0)
    if not 0 < t_star <= limit:
        raise InvalidQueryError(f"Probe time {t_star:g} must lie in (0, {limit:g}].")
    if len(cfg.caps) < 2:
        raise InvalidQueryError("A cap ladder needs at least two caps.")
    regime = classify_regime(cfg.source, cfg.q, n)
    report = BlowupReport(
        n=n,
        q=cfg.q,
        alpha=d.alpha,
        R=d.R,
        source=cfg.source.label(),
        probe_time=t_star,
        regime=regime,
        theoretical_slope=theoretical_slope(cfg.source, n, d.alpha),
    )
    if not d.alpha < n / cfg.q:
        report.notes.append("alpha >= n/q: the data is not in L^q")
    if regime is Regime.NONEXISTENCE and report.theoretical_slope is not None and report.theoretical_slope <= 0:
        report.notes.append("p * alpha <= n + 2: the predicted slope is not positive for these data")

    run_cfg = replace(cfg, t_end=t_star)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            records = list(pool.map(lambda cap: _run_cap(run_cfg, cap, t_star), cfg.caps))
    else:
        records = []
        for cap in cfg.caps:
            records.append(_run_cap(run_cfg, cap, t_star))
            if progress_callback is not None:
                progress_callback(f"cap {cap:g} done")
    report.records = records

    increments = np.array([r.duhamel_increment for r in records])
    caps = np.array([r.cap for r in records])
    usable = np.isfinite(increments) & (increments > 0)
    asymptotic = usable & (caps ** (-2.0 / d.alpha) <= t_star)
    chosen = asymptotic if np.count_nonzero(asymptotic) >= 2 else usable
    if np.count_nonzero(chosen) >= 2:
        report.fit_caps = [float(c) for c in caps[chosen]]
        report.fitted_slope = float(np.polyfit(np.log(caps[chosen]), np.log(increments[chosen]), 1)[0])

    surplus = [r.surplus for r in records]
    if all(math.isfinite(s) for s in surplus[-2:]):
        scale = max(abs(records[-1].mass), 1e-300)
        report.final_relative_increment = abs(surplus[-1] - surplus[-2]) / scale

    report.ladder_monotone = ladder_monotone(records)
    report.verdict = _verdict(report)
    logger.info(
        "Blow-up ladder %s: regime=%s slope=%s (theory %s) verdict=%s",
        report.source, regime.value, report.fitted_slope, report.theoretical_slope, report.verdict,
    )
    return report


def ladder_monotone(records: Sequence[CapRecord], slack: float = 0.05) -> bool:
    """Whether the ladder orders like the solutions it approximates.

    Larger caps give larger solutions, so finite masses must strictly increase,
    a blown-up cap may not be followed by a finite one, and blow-up times may
    not grow by more than ``slack`` (relative) from one cap to the next.
    """

    for a, b in zip(records, records[1:]):
        if not a.blew_up and not b.blew_up and not b.mass > a.mass:
            return False
        if a.blew_up and not b.blew_up:
            return False
        if a.blew_up and b.blew_up and a.t_blowup is not None and b.t_blowup is not None:
            if b.t_blowup > a.t_blowup * (1.0 + slack):
                return False
    return True


def _verdict(report: BlowupReport) -> Optional[bool]:
    records = report.records
    if report.regime is Regime.NONEXISTENCE:
        for a, b in zip(records, records[1:]):
            decades = math.log10(b.cap / a.cap)
            if not (b.lower_mass > a.lower_mass and b.lower_mass >= a.lower_mass * 1.5**decades):
                report.notes.append(f"lower mass did not grow enough between caps {a.cap:g} and {b.cap:g}")
                return False
        if not ladder_monotone(records):
            report.notes.append("masses or blow-up times are out of order along the ladder")
            return False
        if report.theoretical_slope is not None:
            if report.fitted_slope is None:
                return False
            if abs(report.fitted_slope - report.theoretical_slope) > 0.25 * abs(report.theoretical_slope):
                report.notes.append("fitted slope outside 25% of the prediction")
                return False
        return True
    if report.regime is Regime.LOCAL_EXISTENCE:
        if any(r.blew_up for r in records):
            report.notes.append("a cap blew up below the Fujita threshold")
            return False
        if not ladder_monotone(records):
            report.notes.append("masses are out of order along the ladder")
            return False
        if report.final_relative_increment is None or report.final_relative_increment >= 0.05:
            return False
        return True
    return None


# ---------------------------------------------------------------------------
# Mild formulation


def heat_semigroup_apply(
    dom: Interval,
    nodes: np.ndarray,
    values: np.ndarray,
    tau: float,
    x: np.ndarray,
    b: Optional[SeriesBudget] = None,
) -> np.ndarray:
    """Exact Dirichlet heat semigroup on ``(-a, a)`` applied to a piecewise-linear profile.

    ``nodes`` must be increasing and ``values`` vanish outside them.  With
    ``P`` the whole-line convolution of the profile (a sum of erf and Gaussian
    terms per segment) the result is ``sum_k P(x - 4ka) - P(2a(2k-1) - x)``.
    """

    nodes = np.asarray(nodes, dtype=float)
    values = np.asarray(values, dtype=float)
    x = np.asarray(x, dtype=float)
    if tau == 0.0:
        return np.interp(x, nodes, values, left=0.0, right=0.0)
    a = dom.a
    shells, _ = image_shells(a, tau, b or SeriesBudget())
    y0, y1 = nodes[:-1], nodes[1:]
    g0 = values[:-1]
    slope = np.diff(values) / np.diff(nodes)
    root = math.sqrt(4.0 * tau)
    norm = 1.0 / math.sqrt(4.0 * math.pi * tau)

    def convolve(xi: np.ndarray) -> np.ndarray:
        xi = xi[:, None]
        mass = 0.5 * (erf((xi - y0) / root) - erf((xi - y1) / root))
        moment = 2.0 * tau * norm * (np.exp(-((xi - y0) ** 2) / (4.0 * tau)) - np.exp(-((xi - y1) ** 2) / (4.0 * tau)))
        return ((g0 + slope * (xi - y0)) * mass + slope * moment).sum(axis=1)

    total = np.zeros(x.shape)
    for k in range(-(shells + 1), shells + 2):
        total += convolve(x - 4.0 * k * a)
    for k in range(-shells, shells + 2):
        total -= convolve(2.0 * a * (2 * k - 1) - x)
    return total


@dataclass
class MildResidual:
    residual: float
    relative: float
    probe_times: List[float] = field(default_factory=list)
    per_time: List[float] = field(default_factory=list)


def mild_residual(
    trajectory: Trajectory,
    cfg: SimConfig,
    probe_times: Sequence[float],
    *,
    probe_points: int = 65,
) -> MildResidual:
    """Sup-norm defect of ``u(t) = S(t) u_0 + int_0^t S(t - s) f(u(s)) ds``.

    The semigroup is applied exactly to the piecewise-linear interpolant of each
    stored profile; the time integral uses the trapezoidal rule over the stored
    snapshots up to each probe time.
    """

    if not isinstance(cfg.domain, Interval):
        raise InvalidQueryError("The mild residual is evaluated on intervals.")
    if trajectory.blew_up and trajectory.t_blowup is not None and trajectory.t_blowup <= max(probe_times):
        raise InvalidQueryError("The trajectory blew up before the last probe time.")
    dom = cfg.domain
    snaps = sorted(trajectory.snapshots, key=lambda s: s.t)
    x = np.linspace(-dom.a, dom.a, probe_points)
    per_time: List[float] = []
    peak = 0.0

    def mirrored(profile: RadialProfile, field_values: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        r = profile.r
        return np.concatenate((-r[:0:-1], r)), np.concatenate((field_values[:0:-1], field_values))

    for t_probe in probe_times:
        used = [s for s in snaps if s.t <= t_probe * (1 + 1e-12)]
        if len(used) < 2 or not math.isclose(used[-1].t, t_probe, rel_tol=1e-9):
            raise InvalidQueryError(f"Not enough stored profiles to integrate up to t={t_probe:g}.")
        left_nodes, left_vals = mirrored(used[-1], used[-1].u)
        lhs = np.interp(x, left_nodes, left_vals)
        init_nodes, init_vals = mirrored(used[0], used[0].u)
        rhs = heat_semigroup_apply(dom, init_nodes, init_vals, t_probe, x)
        integrand = []
        for snap in used:
            nodes, vals = mirrored(snap, cfg.source.evaluate(snap.u))
            integrand.append(heat_semigroup_apply(dom, nodes, vals, t_probe - snap.t, x))
        times = np.array([s.t for s in used])
        rhs = rhs + trapezoid(np.array(integrand), times, axis=0)
        per_time.append(float(np.max(np.abs(lhs - rhs))))
        peak = max(peak, float(np.max(np.abs(lhs))))
    residual = max(per_time)
    return MildResidual(
        residual=residual,
        relative=residual / max(peak, 1e-300),
        probe_times=[float(t) for t in probe_times],
        per_time=per_time,
    )


__all__ = [
    "SourceKind",
    "SourceFunction",
    "make_source",
    "zero_source",
    "Regime",
    "classify_regime",
    "SimConfig",
    "RadialGrid",
    "SimulationStatus",
    "RadialProfile",
    "Trajectory",
    "CapRecord",
    "BlowupReport",
    "MildResidual",
    "initial_profile",
    "simulate_radial",
    "l1_mass",
    "duhamel_lower_mass",
    "ode_escape_time",
    "theoretical_slope",
    "default_probe_time",
    "blowup_experiment",
    "ladder_monotone",
    "heat_semigroup_apply",
    "mild_residual",
]
