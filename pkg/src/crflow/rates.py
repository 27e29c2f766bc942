"""Vital rates: per-strategy uptake and mortality families.

Uptake B(S, q) must vanish at S = 0, be nondecreasing in S, and Lipschitz
uniformly over strategies. Mortality D(S, q) must be nonincreasing in S
with a positive floor (inherent mortality). Families are closed forms with
per-atom coefficients; validation samples the closed forms numerically.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from crflow.errors import ConfigError
from crflow.space import StrategySpace

UPTAKE_FAMILIES = ("monod", "linear")
MORTALITY_FAMILIES = ("constant", "decreasing")


def _coeff(value, n: int, name: str) -> np.ndarray:
    arr = np.broadcast_to(np.asarray(value, dtype=float), (n,)).copy()
    if not np.all(np.isfinite(arr)):
        raise ConfigError(f"coefficient {name} must be finite")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class UptakeSpec:
    """Uptake family: monod b*S/(a+S) or linear b*S, coefficients per atom."""

    family: str
    b: np.ndarray
    a: np.ndarray | None = None

    @classmethod
    def build(cls, family: str, n: int, b, a=None) -> "UptakeSpec":
        if family not in UPTAKE_FAMILIES:
            raise ConfigError(f"unknown uptake family {family!r}")
        bv = _coeff(b, n, "b")
        if np.any(bv <= 0):
            raise ConfigError("uptake coefficient b must be positive")
        av = None
        if family == "monod":
            if a is None:
                raise ConfigError("monod uptake needs half-saturation a")
            av = _coeff(a, n, "a")
            if np.any(av <= 0):
                raise ConfigError("half-saturation a must be positive")
        return cls(family=family, b=bv, a=av)

    def values(self, S) -> np.ndarray:
        S = np.asarray(S, dtype=float)[..., None]
        if self.family == "monod":
            return self.b * S / (self.a + S)
        return self.b * S


@dataclass(frozen=True)
class MortalitySpec:
    """Mortality family: constant d0 or decreasing d0 + c/(1+S), per atom."""

    family: str
    d0: np.ndarray
    c: np.ndarray | None = None

    @classmethod
    def build(cls, family: str, n: int, d0, c=None) -> "MortalitySpec":
        if family not in MORTALITY_FAMILIES:
            raise ConfigError(f"unknown mortality family {family!r}")
        d0v = _coeff(d0, n, "d0")
        cv = None
        if family == "decreasing":
            cv = _coeff(0.0 if c is None else c, n, "c")
            if np.any(cv < 0):
                raise ConfigError("decreasing mortality needs c >= 0")
        return cls(family=family, d0=d0v, c=cv)

    def values(self, S) -> np.ndarray:
        S = np.asarray(S, dtype=float)[..., None]
        if self.family == "decreasing":
            return self.d0 + self.c / (1.0 + S)
        return np.broadcast_to(self.d0, S.shape[:-1] + self.d0.shape).copy()


@dataclass(frozen=True)
class VitalRates:
    """Inflow, dilution, and the per-strategy rate families.

    clamp, when set, truncates the substrate argument of both families to
    [0, clamp] before evaluation; outside that band the rates are frozen at
    the boundary values, making them globally bounded and Lipschitz.
    """

    inflow: float
    dilution: float
    uptake: UptakeSpec
    mortality: MortalitySpec
    clamp: float | None = None

    def __post_init__(self):
        if self.inflow < 0:
            raise ConfigError("inflow must be nonnegative")
        if self.dilution <= 0:
            raise ConfigError("dilution must be positive")
        if self.clamp is not None and self.clamp <= 0:
            raise ConfigError("truncation level must be positive")

    def _clamped(self, S):
        if self.clamp is None:
            return S
        return np.clip(S, 0.0, self.clamp)

    def uptake_values(self, S) -> np.ndarray:
        """B(S, .) over all atoms; S may be a scalar or an array."""
        return self.uptake.values(self._clamped(S))

    def mortality_values(self, S) -> np.ndarray:
        """D(S, .) over all atoms; S may be a scalar or an array."""
        return self.mortality.values(self._clamped(S))


def eval_B(rates: VitalRates, S: float, i: int) -> float:
    return float(rates.uptake_values(float(S))[i])


def eval_D(rates: VitalRates, S: float, i: int) -> float:
    return float(rates.mortality_values(float(S))[i])


def truncate(rates: VitalRates, N: float) -> VitalRates:
    """Clamp the substrate argument of both rate families to [0, N]."""
    if N <= 0:
        raise ConfigError("truncation level must be positive")
    return replace(rates, clamp=float(N))


def default_truncation_level(rates: VitalRates, S0: float, mass0: float) -> float:
    """Level at which trajectories from (S0, mass0) never reach the clamp.

    Twice the largest of the initial substrate, the washout equilibrium,
    and the initial mass; bounded trajectories stay strictly inside.
    """
    return 2.0 * max(S0, rates.inflow / rates.dilution, mass0, 0.5)


def mortality_floor(rates: VitalRates, S_max: float, samples: int = 256) -> float:
    """Minimum mortality over a substrate sample grid and all atoms."""
    grid = np.linspace(0.0, S_max, samples)
    return float(rates.mortality_values(grid).min())


@dataclass(frozen=True)
class RateValidationReport:
    ok: bool
    messages: tuple
    floor: float
    uptake_sup: float
    uptake_lip: float
    mortality_sup: float
    mortality_lip: float


def validate_assumptions(
    rates: VitalRates, space: StrategySpace, S_max: float, samples: int = 256
) -> RateValidationReport:
    """Sampled admissibility checks on [0, S_max].

    Checks uptake monotonicity and zero at S = 0, positivity for S > 0,
    mortality monotonicity and a positive floor, and estimates uniform
    Lipschitz constants of both families by finite differences.
    """
    if S_max <= 0:
        raise ConfigError("S_max must be positive")
    n = space.size
    if rates.uptake.b.shape[0] != n:
        raise ConfigError("rate coefficients do not match the atom count")
    grid = np.linspace(0.0, S_max, samples)
    B = rates.uptake_values(grid)     # (samples, n)
    D = rates.mortality_values(grid)
    messages = []
    if np.any(np.abs(B[0]) > 0):
        messages.append("uptake does not vanish at S = 0")
    if np.any(B[1:] <= 0):
        messages.append("uptake must be positive for S > 0")
    dB = np.diff(B, axis=0)
    if np.any(dB < -1e-12):
        messages.append("uptake is not nondecreasing in S")
    dD = np.diff(D, axis=0)
    if np.any(dD > 1e-12):
        messages.append("mortality is not nonincreasing in S")
    floor = float(D.min())
    if floor <= 0:
        messages.append(f"mortality floor {floor!r} is not positive")
    h = grid[1] - grid[0]
    b_lip = float(np.abs(dB).max()) / h
    d_lip = float(np.abs(dD).max()) / h
    return RateValidationReport(
        ok=not messages,
        messages=tuple(messages),
        floor=floor,
        uptake_sup=float(np.abs(B).max()),
        uptake_lip=b_lip,
        mortality_sup=float(np.abs(D).max()),
        mortality_lip=d_lip,
    )
