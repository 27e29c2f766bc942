"""Diagnostics linking trajectories to conservation and boundedness claims."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from crflow.errors import ConfigError, ValidationError
from crflow.dynamics import StepControl, SystemState, Trajectory, _rk4
from crflow.kernel import MutationKernel
from crflow.measure import DiscreteMeasure, dirac, flat_distance
from crflow.rates import VitalRates, mortality_floor
from crflow.space import StrategySpace


def dissipativity_bound(
    rates: VitalRates, S_max: float | None = None, samples: int = 256
) -> float:
    """Eventual mass bound inflow / min{dilution, 1, mortality floor}.

    The floor is sampled on [0, S_max]; S_max defaults to the truncation
    level so the floor matches what the dynamics can actually see.
    """
    if S_max is None:
        if rates.clamp is None:
            raise ConfigError("S_max required for untruncated rates")
        S_max = rates.clamp
    floor = mortality_floor(rates, S_max, samples)
    if floor <= 0:
        raise ValidationError(f"mortality floor {floor!r} is not positive")
    return rates.inflow / min(rates.dilution, 1.0, floor)


def concentration(mu: DiscreteMeasure):
    """Winner atom and flat distance of the normalized measure to its Dirac.

    Ties break toward the lowest atom index. Scaling-invariant: the measure
    is normalized to unit mass first.
    """
    w = mu.weights
    if np.any(w < 0):
        raise ConfigError("concentration needs a nonnegative measure")
    total = w.sum()
    if total <= 0:
        raise ConfigError("concentration of the zero measure is undefined")
    winner = int(np.argmax(w))
    normalized = DiscreteMeasure(mu.space, w / total)
    return winner, flat_distance(normalized, dirac(mu.space, winner))


def breakeven(
    rates: VitalRates, i: int, S_max: float, tol: float = 1e-10
) -> float | None:
    """Substrate level where uptake meets mortality for one strategy.

    Bisection on [0, S_max]; None when there is no sign change (the
    strategy cannot persist at any attainable substrate level). Under the
    admissibility assumptions the difference is monotone, so the root is
    unique when it exists.
    """

    def f(S):
        return float(rates.uptake_values(S)[i] - rates.mortality_values(S)[i])

    lo, hi = 0.0, float(S_max)
    flo, fhi = f(lo), f(hi)
    if flo > 0:
        return lo
    if fhi < 0 or flo == fhi == 0:
        return None if fhi < 0 else lo
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if f(mid) < 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def reduced_ode_trajectory(
    state0: SystemState, t_end: float, control: StepControl, rates: VitalRates
) -> Trajectory:
    """Integrate the classical n-species system with the same RK4 stepper.

    S' = inflow - dilution*S - sum_j B_j(S) I_j,  I_j' = (B_j(S) - D_j(S)) I_j.
    This is the finite special case the measure-valued system must reproduce
    exactly under the pure-selection kernel.
    """
    inflow, dilution = rates.inflow, rates.dilution

    def rhs(S, I):
        B = rates.uptake_values(S)
        Dm = rates.mortality_values(S)
        dS = inflow - dilution * S - float(np.dot(B, I))
        dI = B * I - Dm * I
        return dS, dI

    dt = control.dt
    n_steps = int(round(t_end / dt))
    if abs(n_steps * dt - t_end) > 1e-9:
        raise ConfigError("reduced ODE comparison needs dt dividing t_end")
    S = float(state0.S)
    I = state0.mu.weights.copy()
    times = [0.0]
    S_hist = [S]
    I_hist = [I.copy()]
    for k in range(n_steps):
        S, I = _rk4(rhs, S, I, dt)
        times.append((k + 1) * dt)
        S_hist.append(S)
        I_hist.append(I.copy())
    return Trajectory(
        space=state0.space,
        times=np.asarray(times),
        S=np.asarray(S_hist),
        weights=np.asarray(I_hist),
        metadata={"integrator": "reduced-ode", "dt": dt},
    )


def compare_to_ode(
    state0: SystemState,
    t_end: float,
    control: StepControl,
    rates: VitalRates,
    K: MutationKernel,
) -> float:
    """Max deviation between the measure-valued run and the reduced system.

    Requires the pure-selection kernel; with it the two right-hand sides are
    the same finite system, so the deviation is at machine-precision level.
    """
    from crflow.dynamics import integrate

    if not np.array_equal(K.rows, np.eye(K.space.size)):
        raise ConfigError("compare_to_ode requires the pure-selection kernel")
    if control.method != "rk4":
        raise ConfigError("compare_to_ode requires the fixed-step integrator")
    full = integrate(state0, t_end, control, rates, K)
    reduced = reduced_ode_trajectory(state0, t_end, control, rates)
    if len(full) != len(reduced):
        raise ConfigError("trajectory grids do not align")
    dev_S = np.abs(full.S - reduced.S).max()
    dev_w = np.abs(full.weights - reduced.weights).max()
    return float(max(dev_S, dev_w))


def mass_balance_residual(traj: Trajectory, rates: VitalRates) -> float:
    """Largest relative conservation residual at interior points.

    Central differences of M(t) = S + total mass against the analytic
    balance inflow - dilution*S - mu[D(S,.)]; the birth terms cancel
    because kernel rows have unit mass.
    """
    if len(traj) < 3:
        return 0.0
    t = traj.times
    if np.abs(np.diff(t) - (t[1] - t[0])).max() > 1e-9:
        raise ConfigError("mass balance residual needs a uniform grid")
    dt = t[1] - t[0]
    M = traj.mass()
    fd = (M[2:] - M[:-2]) / (2.0 * dt)
    Dm = rates.mortality_values(traj.S)          # (k, n)
    rhs = (
        rates.inflow
        - rates.dilution * traj.S
        - (Dm * traj.weights).sum(axis=1)
    )[1:-1]
    scale = np.maximum(1.0, np.abs(rhs))
    return float((np.abs(fd - rhs) / scale).max())


@dataclass
class DiagnosticsReport:
    """Aggregated invariant checks for one trajectory."""

    dissipativity_bound: float
    mass_bound: float                  # max{M(0), dissipativity bound}
    max_mass_observed: float
    limsup_proxy: float                # max of M over the final 10% of time
    min_weight_observed: float
    min_substrate_observed: float
    mass_balance_max_residual: float | None
    winner_atom: int | None
    concentration_distance: float | None
    breakevens: list = field(default_factory=list)
    clamped_weights: int = 0

    def to_dict(self) -> dict:
        return asdict(self)


def diagnostics(
    traj: Trajectory,
    rates: VitalRates,
    space: StrategySpace,
    S_max: float | None = None,
) -> DiagnosticsReport:
    """Build the standard report for one trajectory."""
    bound = dissipativity_bound(rates, S_max)
    M = traj.mass()
    tail = max(1, int(0.1 * len(M)))
    uniform = (
        len(traj) >= 3
        and np.abs(np.diff(traj.times) - (traj.times[1] - traj.times[0])).max() <= 1e-9
    )
    final = traj.endpoint()
    winner = dist = None
    if np.all(final.mu.weights >= 0) and final.mu.total_mass() > 0:
        winner, dist = concentration(final.mu)
    horizon = S_max if S_max is not None else rates.clamp
    breakevens = [
        breakeven(rates, i, horizon) for i in range(space.size)
    ]
    return DiagnosticsReport(
        dissipativity_bound=bound,
        mass_bound=max(float(M[0]), bound),
        max_mass_observed=float(M.max()),
        limsup_proxy=float(M[-tail:].max()),
        min_weight_observed=float(traj.weights.min()),
        min_substrate_observed=float(traj.S.min()),
        mass_balance_max_residual=(
            mass_balance_residual(traj, rates) if uniform else None
        ),
        winner_atom=winner,
        concentration_distance=dist,
        breakevens=breakevens,
        clamped_weights=int(traj.metadata.get("clamped_weights", 0)),
    )
