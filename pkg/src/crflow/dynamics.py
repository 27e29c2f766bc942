"""Time evolution of the resource/population pair.

Two independent integrators are provided: a classical RK4 stepper (fixed
step by default, step-doubling adaptivity opt-in) and a Picard fixed-point
solver that iterates the mild-solution integral operator on a discretized
trajectory under an exponentially weighted sup norm. The Picard route is a
faithful executable of the existence argument and doubles as a
cross-validation oracle for the RK4 route.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from crflow.errors import (
    ConfigError,
    ConvergenceError,
    NumericalError,
    PositivityError,
    StiffnessError,
)
from crflow.kernel import MutationKernel
from crflow.measure import DiscreteMeasure
from crflow.rates import (
    VitalRates,
    default_truncation_level,
    mortality_floor,
    truncate,
    validate_assumptions,
)
from crflow.space import StrategySpace

WEIGHT_CLAMP_TOL = 1e-9
MIN_ADAPTIVE_STEP = 1e-12


@dataclass(frozen=True)
class SystemState:
    """Substrate level plus the population measure."""

    S: float
    mu: DiscreteMeasure

    @property
    def space(self) -> StrategySpace:
        return self.mu.space

    def total_mass(self) -> float:
        return self.S + self.mu.total_mass()

    def in_cone(self, tol: float = 0.0) -> bool:
        return self.S >= -tol and bool(np.all(self.mu.weights >= -tol))


@dataclass
class StepControl:
    """Integrator selection and step control."""

    method: str = "rk4"          # "rk4" or "adaptive"
    dt: float = 1e-3
    t_end: float = 1.0
    tolerance: float = 1e-8      # adaptive local error target
    record_every: int = 1
    max_steps: int = 50_000_000


@dataclass
class Trajectory:
    """Recorded states of one integration run."""

    space: StrategySpace
    times: np.ndarray
    S: np.ndarray
    weights: np.ndarray          # (len(times), atom count)
    metadata: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.times)

    def state(self, idx: int) -> SystemState:
        return SystemState(
            float(self.S[idx]), DiscreteMeasure(self.space, self.weights[idx])
        )

    def endpoint(self) -> SystemState:
        return self.state(len(self.times) - 1)

    def mass(self) -> np.ndarray:
        """M(t) = S(t) + total population mass at every recorded time."""
        return self.S + self.weights.sum(axis=1)


def _make_rhs(rates: VitalRates, K: MutationKernel):
    KT = np.ascontiguousarray(K.rows.T)
    inflow = rates.inflow
    dilution = rates.dilution

    def rhs(S, w):
        B = rates.uptake_values(S)
        Dm = rates.mortality_values(S)
        dS = inflow - dilution * S - float(np.dot(B, w))
        dw = KT @ (B * w) - Dm * w
        return dS, dw

    return rhs


def vector_field(state: SystemState, rates: VitalRates, K: MutationKernel):
    """Right-hand side of the constraint equation at one state.

    dS = inflow - dilution*S - mu[B(S,.)];
    dmu = K applied to the birth measure B(S,.) . mu, minus D(S,.) . mu.
    """
    if not K.space.same_as(state.space):
        raise ConfigError("kernel and state live on different spaces")
    dS, dw = _make_rhs(rates, K)(state.S, state.mu.weights)
    return dS, DiscreteMeasure(state.space, dw)


def _rk4(rhs, S, w, dt):
    k1S, k1w = rhs(S, w)
    k2S, k2w = rhs(S + 0.5 * dt * k1S, w + 0.5 * dt * k1w)
    k3S, k3w = rhs(S + 0.5 * dt * k2S, w + 0.5 * dt * k2w)
    k4S, k4w = rhs(S + dt * k3S, w + dt * k3w)
    Sn = S + (dt / 6.0) * (k1S + 2.0 * k2S + 2.0 * k3S + k4S)
    wn = w + (dt / 6.0) * (k1w + 2.0 * k2w + 2.0 * k3w + k4w)
    return Sn, wn


def step_rk4(
    state: SystemState, dt: float, rates: VitalRates, K: MutationKernel
) -> SystemState:
    """One classical 4th-order Runge-Kutta step of the full system."""
    if dt <= 0:
        raise ConfigError("dt must be positive")
    Sn, wn = _rk4(_make_rhs(rates, K), state.S, state.mu.weights, dt)
    if not (math.isfinite(Sn) and np.all(np.isfinite(wn))):
        raise NumericalError(
            f"non-finite step result from S={state.S!r}, "
            f"weights={state.mu.weights.tolist()!r}, dt={dt!r}"
        )
    return SystemState(Sn, DiscreteMeasure(state.space, wn))


def _clamp_weights(w, counter):
    small = (w < 0.0) & (w > -WEIGHT_CLAMP_TOL)
    if np.any(small):
        w = np.where(small, 0.0, w)
        counter[0] += int(small.sum())
    if np.any(w <= -WEIGHT_CLAMP_TOL):
        raise PositivityError(
            f"weight {w.min()!r} below -{WEIGHT_CLAMP_TOL}; "
            "positivity should hold for cone initial data"
        )
    return w


def integrate(
    state0: SystemState,
    t_end: float,
    control: StepControl,
    rates: VitalRates,
    K: MutationKernel,
) -> Trajectory:
    """Integrate on [0, t_end], recording every accepted step.

    Weights drifting into (-1e-9, 0) are clamped to zero and counted in the
    metadata; larger violations abort with a positivity error.
    """
    if t_end < 0:
        raise ConfigError("t_end must be nonnegative")
    if control.method not in ("rk4", "adaptive"):
        raise ConfigError(f"unknown integrator {control.method!r}")
    rhs = _make_rhs(rates, K)
    clamped = [0]
    times = [0.0]
    S_hist = [float(state0.S)]
    w_hist = [state0.mu.weights.copy()]
    S = float(state0.S)
    w = state0.mu.weights.copy()

    def check_finite(Sn, wn, t, dt):
        if not (math.isfinite(Sn) and np.all(np.isfinite(wn))):
            raise NumericalError(
                f"non-finite state at t={t!r} (dt={dt!r}): "
                f"S={Sn!r}, weights={np.asarray(wn).tolist()!r}"
            )

    if control.method == "rk4":
        dt = control.dt
        if dt <= 0:
            raise ConfigError("dt must be positive")
        n_full = int(math.floor(t_end / dt + 1e-9))
        rem = t_end - n_full * dt
        steps = 0
        for i in range(n_full):
            S, w = _rk4(rhs, S, w, dt)
            t = (i + 1) * dt
            check_finite(S, w, t, dt)
            w = _clamp_weights(w, clamped)
            steps += 1
            if steps % control.record_every == 0 or (i == n_full - 1 and rem <= 1e-12):
                times.append(t)
                S_hist.append(S)
                w_hist.append(w.copy())
        if rem > 1e-12:
            S, w = _rk4(rhs, S, w, rem)
            check_finite(S, w, t_end, rem)
            w = _clamp_weights(w, clamped)
            times.append(t_end)
            S_hist.append(S)
            w_hist.append(w.copy())
        meta_dt = dt
    else:
        dt = control.dt
        tol = control.tolerance
        t = 0.0
        steps = 0
        while t < t_end - 1e-13:
            dt = min(dt, t_end - t)
            if dt < MIN_ADAPTIVE_STEP:
                raise StiffnessError(
                    f"step size underflow at t={t!r} (dt={dt!r})"
                )
            S1, w1 = _rk4(rhs, S, w, dt)
            Sh, wh = _rk4(rhs, S, w, 0.5 * dt)
            S2, w2 = _rk4(rhs, Sh, wh, 0.5 * dt)
            err = (abs(S2 - S1) + float(np.abs(w2 - w1).max())) / 15.0
            if not math.isfinite(err):
                raise NumericalError(
                    f"non-finite error estimate at t={t!r}, dt={dt!r}"
                )
            if err <= tol:
                t += dt
                S, w = S2, w2
                check_finite(S, w, t, dt)
                w = _clamp_weights(w, clamped)
                steps += 1
                if steps % control.record_every == 0 or t >= t_end - 1e-13:
                    times.append(t)
                    S_hist.append(S)
                    w_hist.append(w.copy())
            factor = 0.9 * (tol / max(err, 1e-300)) ** 0.2
            dt *= min(5.0, max(0.2, factor))
            if steps > control.max_steps:
                raise NumericalError("exceeded max_steps")
        meta_dt = control.dt

    # Deduplicate if the final step was recorded twice
    if len(times) >= 2 and times[-1] == times[-2]:
        times.pop()
        S_hist.pop()
        w_hist.pop()

    return Trajectory(
        space=state0.space,
        times=np.asarray(times),
        S=np.asarray(S_hist),
        weights=np.asarray(w_hist),
        metadata={
            "integrator": control.method,
            "dt": meta_dt,
            "t_end": t_end,
            "clamped_weights": clamped[0],
        },
    )


def semiflow(
    t: float,
    state0: SystemState,
    rates: VitalRates,
    K: MutationKernel,
    control: StepControl | None = None,
) -> SystemState:
    """Evolution operator: the state at time t from state0."""
    if t < 0:
        raise ConfigError("semiflow time must be nonnegative")
    if t == 0:
        return state0
    control = control if control is not None else StepControl()
    return integrate(state0, t, control, rates, K).endpoint()


def _cumtrapz(y: np.ndarray, h: float) -> np.ndarray:
    """Composite-trapezoid cumulative integral along axis 0."""
    out = np.zeros_like(y)
    out[1:] = np.cumsum(0.5 * h * (y[1:] + y[:-1]), axis=0)
    return out


def contraction_weight_default(
    rates: VitalRates, space: StrategySpace, mass_bound: float, T: float
) -> float:
    """Heuristic weight for the exponentially weighted sup norm.

    Twice a crude bound on the integral operator's Lipschitz constant,
    assembled from sampled sup/Lipschitz norms of the truncated rates and
    the mass bound. Exposed in configuration; any value above the true
    constant yields a contraction.
    """
    S_max = rates.clamp if rates.clamp is not None else max(
        1.0, 2.0 * rates.inflow / rates.dilution
    )
    rep = validate_assumptions(rates, space, S_max)
    b_bl = rep.uptake_sup + rep.uptake_lip
    d_bl = rep.mortality_sup + rep.mortality_lip
    f21_sup = rep.uptake_sup * mass_bound
    f21_lip = b_bl * (1.0 + mass_bound)
    n_t = (
        d_bl * mass_bound
        + f21_lip * (d_bl * T + 1.0)
        + T * f21_sup * d_bl
        + rep.uptake_sup
        + mass_bound * rep.uptake_lip
        + rates.dilution
    )
    return 2.0 * max(n_t, 1.0)


def picard_solve(
    state0: SystemState,
    T: float,
    rates: VitalRates,
    K: MutationKernel,
    lam: float | None = None,
    tol: float = 1e-12,
    max_iter: int = 200,
    nodes: int = 512,
) -> Trajectory:
    """Fixed-point integration of the mild-solution integral operator.

    The operator sends a candidate trajectory zeta to
        S(t)  = e^(-dilution*t) S0 + int_0^t e^(-dilution*(t-s)) F11(zeta(s)) ds
        mu(t) = E(0,t) . mu0 + int_0^t E(s,t) . F21(zeta(s)) ds
    where F11 = inflow - mu[B(S,.)], F21 is the birth measure pushed through
    the kernel, and E(s,t) decays each atom by its accumulated mortality.
    Time integrals use the composite trapezoid rule on a fixed grid; windows
    of length at most 1 are chained for longer horizons. Iteration stops when
    the exponentially weighted sup distance between successive iterates
    (|dS| plus a total-variation proxy for the flat norm) drops below tol.
    """
    if T <= 0:
        raise ConfigError("horizon must be positive")
    if not state0.in_cone():
        raise ConfigError("picard_solve needs cone initial data")
    if rates.clamp is None:
        rates = truncate(
            rates,
            default_truncation_level(rates, state0.S, state0.mu.total_mass()),
        )
    space = state0.space
    floor = mortality_floor(rates, rates.clamp)
    d_eff = min(rates.dilution, 1.0, max(floor, 1e-12))
    mass_bound = max(state0.total_mass(), rates.inflow / d_eff)
    n_windows = max(1, int(math.ceil(T / 1.0 - 1e-12)))
    Tw = T / n_windows
    if lam is None:
        lam = contraction_weight_default(rates, space, mass_bound, Tw)

    KT_rows = K.rows  # nu = x @ rows gives nu_j = sum_i x_i rows[i, j]
    inflow, dilution = rates.inflow, rates.dilution
    h = Tw / nodes
    tau = np.linspace(0.0, Tw, nodes + 1)
    decay_weight = np.exp(-lam * tau)
    grow = np.exp(dilution * tau)
    shrink = np.exp(-dilution * tau)

    all_times = [np.array([0.0])]
    all_S = [np.array([state0.S])]
    all_W = [state0.mu.weights.copy()[None, :]]
    ratios = []
    iterations = []
    clamped = [0]

    S0 = float(state0.S)
    W0 = state0.mu.weights.copy()
    t_offset = 0.0
    for _ in range(n_windows):
        S_arr = np.full(nodes + 1, S0)
        W_arr = np.tile(W0, (nodes + 1, 1))
        prev_dist = None
        converged = False
        for it in range(1, max_iter + 1):
            B = rates.uptake_values(S_arr)          # (m+1, n)
            Dm = rates.mortality_values(S_arr)
            birth = B * W_arr
            F11 = inflow - birth.sum(axis=1)
            F21 = birth @ KT_rows
            S_new = shrink * (S0 + _cumtrapz(grow * F11, h))
            Idm = _cumtrapz(Dm, h)
            W_new = np.exp(-Idm) * (W0 + _cumtrapz(np.exp(Idm) * F21, h))
            dist = float(
                np.max(
                    decay_weight
                    * (np.abs(S_new - S_arr) + np.abs(W_new - W_arr).sum(axis=1))
                )
            )
            if prev_dist is not None and prev_dist > 0:
                ratios.append(dist / prev_dist)
            prev_dist = dist
            S_arr, W_arr = S_new, W_new
            if dist < tol:
                iterations.append(it)
                converged = True
                break
        if not converged:
            ratio = max(ratios[-5:]) if ratios else float("nan")
            raise ConvergenceError(
                f"picard iteration did not converge in {max_iter} steps "
                f"(last contraction ratio {ratio!r})",
                ratio=ratio,
            )
        W_arr = np.vstack([_clamp_weights(w, clamped) for w in W_arr])
        all_times.append(t_offset + tau[1:])
        all_S.append(S_arr[1:])
        all_W.append(W_arr[1:])
        S0 = float(S_arr[-1])
        W0 = W_arr[-1].copy()
        t_offset += Tw

    return Trajectory(
        space=space,
        times=np.concatenate(all_times),
        S=np.concatenate(all_S),
        weights=np.vstack(all_W),
        metadata={
            "integrator": "picard",
            "lambda": lam,
            "nodes": nodes,
            "windows": n_windows,
            "iterations": iterations,
            "contraction_ratio": max(ratios) if ratios else 0.0,
            "clamped_weights": clamped[0],
        },
    )
