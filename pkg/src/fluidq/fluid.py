"""Deterministic fluid model of the many-server queue with abandonment.

The scalar fluid content X(t) solves a Volterra-type fixed-point equation
driven by the service distribution, its equilibrium distribution, and the
patience distribution through the survival map H.  The solver marches a
uniform time grid: convolution integrals are Lebesgue-Stieltjes sums with
exact CDF increments over the grid cells, the integrand taken at the newest
grid value, and the final cell resolved by a small contraction iteration.
From the solved X(t) the queue, busy-server, virtual-buffer and scheduled
masses follow in closed form, and measure-valued buffer/server profiles can
be materialized at any grid time.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .distributions import DistributionSpec
from .measures import TailMeasure


class FluidModelError(ValueError):
    """Invalid fluid-model inputs."""


class InvalidInitialError(FluidModelError):
    """Initial condition violates the validity constraints."""


class NoConvergenceError(RuntimeError):
    """Inner fixed-point iteration exceeded its cap (signals a bad distribution)."""


class InvariantViolationError(RuntimeError):
    """A post-solve structural invariant failed beyond tolerance."""


_INNER_CAP = 50


@dataclass(frozen=True)
class FluidConfig:
    """Scaled model parameters: one unit of fluid equals the server pool."""

    arrival_rate: float
    patience: DistributionSpec
    service: DistributionSpec
    horizon: float = 10.0
    dt: float = 1e-3
    tol: float = 1e-10

    def __post_init__(self):
        if not self.arrival_rate > 0.0:
            raise FluidModelError("arrival_rate must be positive")
        if not self.dt > 0.0:
            raise FluidModelError("dt must be positive")
        if not self.horizon >= self.dt:
            raise FluidModelError("horizon must be at least dt")
        self.service.validate_as_service()
        self.patience.validate_as_patience()

    @property
    def traffic_intensity(self) -> float:
        return self.arrival_rate * self.service.mean


# -- initial conditions -----------------------------------------------------


class ServerProfile:
    """Shape of the initial in-service mass, by its tail in remaining service time."""

    def mass(self, service: DistributionSpec) -> float:
        raise NotImplementedError

    def tail(self, service: DistributionSpec, x):
        raise NotImplementedError


@dataclass(frozen=True)
class EmptyServers(ServerProfile):
    def mass(self, service):
        return 0.0

    def tail(self, service, x):
        return np.zeros_like(np.asarray(x, dtype=float))


@dataclass(frozen=True)
class EquilibriumShaped(ServerProfile):
    """Mass z spread as the stationary-excess law of the service distribution."""

    busy_mass: float

    def mass(self, service):
        return self.busy_mass

    def tail(self, service, x):
        x = np.maximum(np.asarray(x, dtype=float), 0.0)
        return self.busy_mass * (1.0 - np.asarray(service.equilibrium_cdf(x)))


@dataclass(frozen=True)
class ServiceComplementShaped(ServerProfile):
    """Mass z of freshly started services (remaining time distributed as G)."""

    busy_mass: float

    def mass(self, service):
        return self.busy_mass

    def tail(self, service, x):
        x = np.maximum(np.asarray(x, dtype=float), 0.0)
        return self.busy_mass * np.asarray(service.sf(x))


@dataclass(frozen=True)
class TabulatedProfile(ServerProfile):
    measure: TailMeasure

    def mass(self, service):
        return self.measure.total

    def tail(self, service, x):
        x = np.maximum(np.asarray(x, dtype=float), 0.0)
        return np.asarray(self.measure.tail_at(x))


EMPTY_SERVERS = EmptyServers()


@dataclass(frozen=True)
class InitialCondition:
    """Virtual-buffer mass plus a server profile; queue mass is implied."""

    virtual_buffer_mass: float = 0.0
    server_profile: ServerProfile = EMPTY_SERVERS


@dataclass(frozen=True)
class ValidatedInitial:
    virtual0: float
    queue0: float
    busy0: float
    server_profile: ServerProfile

    @property
    def system0(self) -> float:
        return self.queue0 + self.busy0

    def server_tail(self, service: DistributionSpec, x):
        return self.server_profile.tail(service, x)


def validate_initial(cfg: FluidConfig, init: InitialCondition) -> ValidatedInitial:
    """Check the validity constraints and return the normalized state.

    The queue mass is pinned by the buffer equation: queue0 equals
    arrival_rate times the integrated patience survival at the elapsed-wait
    window virtual0/arrival_rate.  A positive queue requires full servers,
    the busy mass cannot exceed one, and tabulated profiles must be atomless
    at grid resolution with no mass at remaining time zero.
    """
    lam = cfg.arrival_rate
    r0 = float(init.virtual_buffer_mass)
    if r0 < 0.0:
        raise InvalidInitialError("invalid-init: virtual buffer mass must be nonnegative")
    q0 = lam * float(cfg.patience.integrated_sf(r0 / lam))
    z0 = float(init.server_profile.mass(cfg.service))
    if z0 < -1e-12 or z0 > 1.0 + 1e-9:
        raise InvalidInitialError("invalid-init: server mass must lie in [0, 1]")
    z0 = min(max(z0, 0.0), 1.0)
    if q0 > 1e-12 and z0 < 1.0 - 1e-9:
        raise InvalidInitialError("invalid-init: queue positive but servers not full")
    if isinstance(init.server_profile, TabulatedProfile):
        m = init.server_profile.measure
        resolution = cfg.dt * max(m.total, 1e-300)
        if m.total - m.tail_at(0.0) > resolution + 1e-12:
            raise InvalidInitialError("invalid-init: atom at zero")
        if m.tails.size > 1 and np.max(-np.diff(m.tails)) > resolution + 1e-12:
            raise InvalidInitialError("invalid-init: tabulated profile has atoms at grid resolution")
    return ValidatedInitial(virtual0=r0, queue0=q0, busy0=z0, server_profile=init.server_profile)


# -- the survival map and the initial load ------------------------------------


def survival_at_offered_wait(arrival_rate: float, patience: DistributionSpec, queue_mass: float) -> float:
    """Fraction of arriving fluid patient enough to reach service.

    For queue mass q the offered wait is the inverse integrated patience
    survival at q/arrival_rate; the value is the patience complement there.
    Nonincreasing in q, equal to 0 from arrival_rate onward.
    """
    if queue_mass <= 0.0:
        return float(patience.sf(0.0))
    if queue_mass >= arrival_rate:
        return 0.0
    wait = patience.integrated_sf_inverse(queue_mass / arrival_rate)
    if math.isinf(wait):
        return 0.0
    return float(patience.sf(wait))


def initial_load(cfg: FluidConfig, init: ValidatedInitial, t):
    """Fluid still present at time t from the initial state alone."""
    t = np.asarray(t, dtype=float)
    out = np.asarray(init.server_tail(cfg.service, t), dtype=float)
    out = out + init.queue0 * np.asarray(cfg.service.sf(t))
    return float(out) if out.ndim == 0 else out


# -- solution container --------------------------------------------------------


@dataclass(frozen=True)
class MeasureProfiles:
    buffer: TailMeasure
    server: TailMeasure


@dataclass(frozen=True)
class FluidSolution:
    """Grid-indexed trajectories plus on-demand measure profiles."""

    config: FluidConfig
    initial: ValidatedInitial
    times: np.ndarray
    system: np.ndarray      # X
    queue: np.ndarray       # Q = (X - 1)^+
    busy: np.ndarray        # Z = X ^ 1
    virtual: np.ndarray     # R
    scheduled: np.ndarray   # B = arrival_rate * t - R

    def grid_index(self, t: float) -> int:
        k = int(round(t / self.config.dt))
        if k < 0 or k >= self.times.size or abs(t - self.times[k]) > 1e-9 * max(1.0, abs(t)):
            raise FluidModelError(f"time {t!r} is not on the solution grid")
        return k

    def measures_at(self, t: float, probes) -> MeasureProfiles:
        """Materialize buffer and server tail measures at a grid time."""
        cfg = self.config
        lam = cfg.arrival_rate
        k = self.grid_index(t)
        probes = np.sort(np.asarray(probes, dtype=float))

        # buffer: arrivals over the elapsed-wait window still in the virtual
        # buffer, thinned by patience survival at their residual level
        wait = self.virtual[k] / lam
        fd = cfg.patience.integrated_sf
        buf = lam * (
            np.clip(-probes, 0.0, wait)
            + np.asarray(fd(np.maximum(probes + wait, 0.0)))
            - np.asarray(fd(np.maximum(probes, 0.0)))
        )
        buffer = TailMeasure(probes, np.maximum(buf, 0.0), self.virtual[k], "linear")

        # server: initial profile shifted by t plus the Stieltjes sum of
        # admitted fluid against the service complement (midpoint rule)
        if k == 0:
            started = np.zeros((probes.size,))
            started0 = 0.0
        else:
            mids = 0.5 * (self.times[:k] + self.times[1 : k + 1])
            waits_mid = 0.5 * (self.virtual[:k] + self.virtual[1 : k + 1]) / lam
            coeff = np.asarray(cfg.patience.sf(waits_mid)) * np.diff(self.scheduled[: k + 1])
            args = np.maximum(probes, 0.0)[:, None] + (t - mids)[None, :]
            started = np.asarray(cfg.service.sf(args)) @ coeff
            started0 = float(np.asarray(cfg.service.sf(t - mids)) @ coeff)
        base = np.asarray(self.initial.server_tail(cfg.service, np.maximum(probes, 0.0) + t))
        total = float(self.initial.server_tail(cfg.service, np.asarray(t))) + started0
        tails = np.where(probes <= 0.0, total, base + started)
        tails = np.minimum(np.maximum(tails, 0.0), total)
        tails = np.minimum.accumulate(tails)
        server = TailMeasure(probes, tails, total, "linear")
        return MeasureProfiles(buffer=buffer, server=server)


# -- solver ---------------------------------------------------------------------


def _grid_increments(cfg: FluidConfig, times: np.ndarray):
    ge = np.asarray(cfg.service.equilibrium_cdf(times))
    g = np.asarray(cfg.service.cdf(times))
    return np.diff(ge), np.diff(g)


def solve(cfg: FluidConfig, init: InitialCondition | ValidatedInitial | None = None,
          *, inner_start_offset: float = 0.0) -> FluidSolution:
    """March the fluid fixed-point equation over the grid.

    Raises NoConvergenceError if an inner iteration fails to contract and
    InvariantViolationError if the solved trajectories break the structural
    invariants (nondecreasing scheduled mass, queue capped by the patience
    tail area).
    """
    if init is None:
        init = InitialCondition()
    if isinstance(init, InitialCondition):
        init = validate_initial(cfg, init)

    lam = cfg.arrival_rate
    rho = cfg.traffic_intensity
    steps = int(round(cfg.horizon / cfg.dt))
    times = np.arange(steps + 1) * cfg.dt
    d_ge, d_g = _grid_increments(cfg, times)
    load = np.asarray(initial_load(cfg, init, times))

    def h_fn(q):
        return survival_at_offered_wait(lam, cfg.patience, q)

    x = np.empty(steps + 1)
    surv = np.empty(steps + 1)   # H(queue) at grid values
    qv = np.empty(steps + 1)     # queue at grid values
    x[0] = init.system0
    qv[0] = max(x[0] - 1.0, 0.0)
    surv[0] = h_fn(qv[0])

    for k in range(1, steps + 1):
        if k >= 2:
            base = (
                load[k]
                + rho * np.dot(surv[1:k][::-1], d_ge[1:k])
                + np.dot(qv[1:k][::-1], d_g[1:k])
            )
        else:
            base = load[k]
        xk = x[k - 1] + inner_start_offset
        for _ in range(_INNER_CAP):
            q = max(xk - 1.0, 0.0)
            xn = base + rho * h_fn(q) * d_ge[0] + q * d_g[0]
            if abs(xn - xk) <= cfg.tol:
                xk = xn
                break
            xk = xn
        else:
            raise NoConvergenceError("no-convergence: inner fixed point exceeded iteration cap")
        x[k] = xk
        qv[k] = max(xk - 1.0, 0.0)
        surv[k] = h_fn(qv[k])

    busy = np.minimum(x, 1.0)
    virtual = lam * np.array([cfg.patience.integrated_sf_inverse(v) for v in qv / lam])
    scheduled = lam * times - virtual

    if not np.all(np.isfinite(virtual)):
        raise InvariantViolationError("invariant-violation: Q exceeds lambda*N_F")
    if scheduled.size > 1 and float(np.min(np.diff(scheduled))) < -1e-12:
        raise InvariantViolationError("invariant-violation: B nondecreasing")
    tail_area = cfg.patience.stats().integrated_sf_total
    if math.isfinite(tail_area) and float(np.max(qv)) > lam * tail_area + 1e-9:
        raise InvariantViolationError("invariant-violation: Q exceeds lambda*N_F")

    return FluidSolution(
        config=cfg, initial=init, times=times,
        system=x, queue=qv, busy=busy, virtual=virtual, scheduled=scheduled,
    )


# -- diagnostics -----------------------------------------------------------------


def check_queue_drain_monotone(sol: FluidSolution) -> float:
    """Max grid increment of queue(t) - arrival_rate * int_0^t H(queue(s)) ds.

    The functional is nonincreasing for the exact solution; the returned
    value should not exceed quadrature tolerance.
    """
    cfg = sol.config
    h_vals = np.array(
        [survival_at_offered_wait(cfg.arrival_rate, cfg.patience, q) for q in sol.queue]
    )
    integral = np.concatenate(
        [[0.0], np.cumsum(0.5 * (h_vals[:-1] + h_vals[1:]) * cfg.dt)]
    )
    drain = sol.queue - cfg.arrival_rate * integral
    return float(np.max(np.diff(drain)))


def fixed_point_residual(sol: FluidSolution) -> float:
    """Max gap when the solved trajectory is plugged back into the discretized equation."""
    cfg = sol.config
    rho = cfg.traffic_intensity
    d_ge, d_g = _grid_increments(cfg, sol.times)
    load = np.asarray(initial_load(cfg, sol.initial, sol.times))
    surv = np.array(
        [survival_at_offered_wait(cfg.arrival_rate, cfg.patience, q) for q in sol.queue]
    )
    worst = 0.0
    for k in range(1, sol.times.size):
        rhs = (
            load[k]
            + rho * np.dot(surv[1 : k + 1][::-1], d_ge[:k])
            + np.dot(sol.queue[1 : k + 1][::-1], d_g[:k])
        )
        worst = max(worst, abs(sol.system[k] - rhs))
    return worst
