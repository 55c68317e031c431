"""Feedback ramp metering controllers.

Three layers of the same family: a local occupancy regulator per ramp
(proportional, optionally with an integral-style second term), its
matrix generalisation coordinating several ramps through gain
coupling, and a hierarchical queue-managing coordinator that overrides
local regulators upstream of an overloaded ramp.

Rates are percentages in [min_rate, max_rate]. Updates run once per
control cycle on occupancy aggregated over that cycle. Clamping feeds
back into the stored rate, so the recursion integrates from the
clamped value and does not wind up beyond the bounds.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import ConfigurationError, ContractError

__all__ = [
    "RampMeterParams",
    "AlineaController",
    "MetalineController",
    "HeroParams",
    "HeroCoordinator",
]


@dataclass(frozen=True)
class RampMeterParams:
    target_occupancy: float = 10.0
    k_p: float = 30.0
    k_i: float = 0.0
    cycle_s: float = 60.0
    min_rate: float = 5.0
    max_rate: float = 100.0
    initial_rate: Optional[float] = None    # defaults to max_rate

    def __post_init__(self):
        if not 0.0 <= self.min_rate < self.max_rate <= 100.0:
            raise ConfigurationError(
                f"need 0 <= min_rate < max_rate <= 100, got "
                f"[{self.min_rate}, {self.max_rate}]"
            )
        if self.cycle_s <= 0:
            raise ConfigurationError("cycle_s must be > 0")
        if self.target_occupancy < 0:
            raise ConfigurationError("target_occupancy must be >= 0")
        if self.initial_rate is not None and not (
            self.min_rate <= self.initial_rate <= self.max_rate
        ):
            raise ConfigurationError("initial_rate outside rate bounds")

    @property
    def start_rate(self) -> float:
        return self.max_rate if self.initial_rate is None else self.initial_rate


class AlineaController:
    """Local occupancy regulator for one metered ramp.

    rate_t = clamp(rate_{t-1} + k_p (target - c_t) + k_i (c_t - c_{t-1}))

    With k_i = 0 this is the pure proportional law; a nonzero k_i adds
    the occupancy-trend term. The first update has no previous
    occupancy, so the trend term starts at zero.
    """

    def __init__(self, params: RampMeterParams = RampMeterParams()):
        self.params = params
        self._rate = params.start_rate
        self._prev_occ: Optional[float] = None

    @property
    def rate(self) -> float:
        return self._rate

    def update(self, occupancy_pct: float) -> float:
        p = self.params
        if self._prev_occ is None:
            self._prev_occ = occupancy_pct
        raw = (self._rate
               + p.k_p * (p.target_occupancy - occupancy_pct)
               + p.k_i * (occupancy_pct - self._prev_occ))
        rate = min(max(raw, p.min_rate), p.max_rate)
        self._rate = rate
        self._prev_occ = occupancy_pct
        return rate

    def sync(self, rate: float, occupancy_pct: float) -> None:
        """Overwrite the recursion state, for bumpless handover when a
        coordination layer has been steering this ramp."""
        if not self.params.min_rate <= rate <= self.params.max_rate:
            raise ContractError(f"sync rate {rate} outside bounds")
        self._rate = rate
        self._prev_occ = occupancy_pct


class MetalineController:
    """Matrix occupancy regulator over several ramps.

    rates_t = clamp(rates_{t-1} + K_P (targets - c_t) + K_I (c_t - c_{t-1}))

    Off-diagonal gains couple the ramps. With diagonal K_P and K_I the
    element-wise recursion is exactly the independent local law per
    ramp, down to the floating-point operations.
    """

    def __init__(self, targets: Sequence[float], k_p, k_i,
                 cycle_s: float = 60.0, min_rate: float = 5.0,
                 max_rate: float = 100.0,
                 initial_rates: Optional[Sequence[float]] = None):
        self.targets = np.asarray(targets, dtype=float)
        self.k_p = np.asarray(k_p, dtype=float)
        self.k_i = np.asarray(k_i, dtype=float)
        n = self.targets.shape[0]
        if self.targets.ndim != 1 or n == 0:
            raise ConfigurationError("targets must be a non-empty vector")
        if self.k_p.shape != (n, n) or self.k_i.shape != (n, n):
            raise ConfigurationError(
                f"gain matrices must be {n}x{n} to match {n} targets"
            )
        if not 0.0 <= min_rate < max_rate <= 100.0:
            raise ConfigurationError("need 0 <= min_rate < max_rate <= 100")
        if cycle_s <= 0:
            raise ConfigurationError("cycle_s must be > 0")
        self.cycle_s = cycle_s
        self.min_rate = min_rate
        self.max_rate = max_rate
        if initial_rates is None:
            self._rates = np.full(n, max_rate)
        else:
            self._rates = np.asarray(initial_rates, dtype=float).copy()
            if self._rates.shape != (n,):
                raise ConfigurationError("initial_rates length mismatch")
        self._prev_occ: Optional[np.ndarray] = None

    @property
    def rates(self) -> np.ndarray:
        return self._rates.copy()

    def update(self, occupancies_pct: Sequence[float]) -> np.ndarray:
        occ = np.asarray(occupancies_pct, dtype=float)
        if occ.shape != self.targets.shape:
            raise ContractError(
                f"expected {self.targets.shape[0]} occupancies, got {occ.shape}"
            )
        if self._prev_occ is None:
            self._prev_occ = occ.copy()
        raw = (self._rates
               + self.k_p @ (self.targets - occ)
               + self.k_i @ (occ - self._prev_occ))
        rates = np.clip(raw, self.min_rate, self.max_rate)
        self._rates = rates
        self._prev_occ = occ.copy()
        return rates.copy()


@dataclass(frozen=True)
class HeroParams:
    activation_queue_m: float = 15.0     # master trigger
    release_queue_m: float = 2.5         # cluster dissolution
    slave_queue_setpoint_m: float = 5.0  # desired slave queue N_max
    anticipation: float = 1.0            # weight on forecast arrivals
    vehicle_spacing_m: float = 7.5       # metres of queue per vehicle
    period_s: float = 60.0

    def __post_init__(self):
        if not 0.0 <= self.release_queue_m < self.activation_queue_m:
            raise ConfigurationError(
                "need 0 <= release_queue_m < activation_queue_m for hysteresis"
            )
        if self.slave_queue_setpoint_m < 0:
            raise ConfigurationError("slave_queue_setpoint_m must be >= 0")
        if self.vehicle_spacing_m <= 0:
            raise ConfigurationError("vehicle_spacing_m must be > 0")
        if self.period_s <= 0:
            raise ConfigurationError("period_s must be > 0")


class HeroCoordinator:
    """Hierarchical queue coordinator over a chain of local regulators.

    Ramps are ordered upstream to downstream. A ramp whose queue
    exceeds the activation threshold becomes a master; each period a
    master still above the threshold recruits the next ramp upstream
    of its cluster as a slave. Slaves abandon their local regulator
    and meter so that their own queue approaches the configured
    set-point within one period, holding vehicles back from the master
    region. When the master's queue drops below the release threshold
    the whole cluster reverts to local control. Release sits below
    activation so the mode cannot chatter.
    """

    NORMAL = "normal"
    MASTER = "master"
    SLAVE = "slave"

    def __init__(self, children: Sequence[AlineaController],
                 q_sat: Sequence[float],
                 params: HeroParams = HeroParams()):
        if not children:
            raise ConfigurationError("coordinator needs at least one ramp")
        if len(q_sat) != len(children):
            raise ConfigurationError("one saturation flow per ramp required")
        for i, (child, q) in enumerate(zip(children, q_sat)):
            if q <= 0:
                raise ConfigurationError(f"ramp {i}: q_sat must be > 0")
            if abs(child.params.cycle_s - params.period_s) > 1e-9:
                raise ConfigurationError(
                    f"ramp {i}: local cycle {child.params.cycle_s} s must equal "
                    f"coordination period {params.period_s} s"
                )
        self.children = list(children)
        self.q_sat = [float(q) for q in q_sat]
        self.params = params
        n = len(children)
        self.modes = [self.NORMAL] * n
        self._master_of: list[Optional[int]] = [None] * n

    def _cluster(self, master: int) -> list[int]:
        members = [master] + [i for i, m in enumerate(self._master_of) if m == master]
        return sorted(members)

    def update(self, occupancies_pct: Sequence[float], queues_m: Sequence[float],
               arrivals_veh: Sequence[float]) -> list[float]:
        n = len(self.children)
        if not (len(occupancies_pct) == len(queues_m) == len(arrivals_veh) == n):
            raise ContractError(f"expected {n} readings per input")
        p = self.params

        # 1. dissolve clusters whose master has drained
        for i in range(n):
            if self.modes[i] == self.MASTER and queues_m[i] < p.release_queue_m:
                for j in self._cluster(i):
                    self.modes[j] = self.NORMAL
                    self._master_of[j] = None

        # 2. activate new masters
        for i in range(n):
            if self.modes[i] == self.NORMAL and queues_m[i] > p.activation_queue_m:
                self.modes[i] = self.MASTER

        # 3. recruitment, one ramp per period per master, downstream first
        for i in reversed(range(n)):
            if self.modes[i] != self.MASTER or queues_m[i] <= p.activation_queue_m:
                continue
            upstream = self._cluster(i)[0] - 1
            if upstream >= 0 and self.modes[upstream] == self.NORMAL:
                self.modes[upstream] = self.SLAVE
                self._master_of[upstream] = i

        # 4. rates
        rates = []
        for i, child in enumerate(self.children):
            if self.modes[i] == self.SLAVE:
                n_t = queues_m[i] / p.vehicle_spacing_m
                n_max = p.slave_queue_setpoint_m / p.vehicle_spacing_m
                q_ctrl = (n_max - n_t + p.anticipation * arrivals_veh[i]) / p.period_s
                raw = 100.0 * q_ctrl / self.q_sat[i]
                rate = min(max(raw, child.params.min_rate), child.params.max_rate)
                child.sync(rate, occupancies_pct[i])
            else:
                rate = child.update(occupancies_pct[i])
            rates.append(rate)
        return rates
