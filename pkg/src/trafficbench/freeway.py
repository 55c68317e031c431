"""Cell-based freeway corridor simulator with metered on-ramps.

Unit conventions, used consistently and never converted implicitly:

* length: metres; time: seconds; vehicles: continuous counts
* density: veh / m / lane; flow: veh / s aggregated over all lanes
* speed: m / s; occupancy: percent of jam density; metering rate: percent

Each cell carries a triangular flow-density relation: demand
``min(v_f * rho, q_max) * lanes`` and supply
``min(q_max, w * (rho_jam - rho)) * lanes``. Flow across a boundary is
the minimum of upstream demand and downstream supply, so congestion
spills back at wave speed w while free flow advances at v_f. Merge
cells get a supply bonus from an auxiliary lane proportional to the
extra storage it provides. State is kept in vehicle counts rather than
densities: every transfer is computed once and applied to both sides,
which keeps the conservation residual at accumulation-rounding level
over full-length runs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import ConfigurationError, ContractError
from .util import CompensatedSum, piecewise_value, validate_profile

Profile = tuple[tuple[float, float], ...]


@dataclass(frozen=True)
class CellSpec:
    """One homogeneous freeway segment."""

    length_m: float
    lanes: int
    v_f: float          # free-flow speed, m/s
    w: float            # congestion wave speed, m/s
    rho_jam: float      # jam density, veh/m/lane
    q_max: float        # capacity, veh/s/lane

    def __post_init__(self):
        for name in ("length_m", "v_f", "w", "rho_jam", "q_max"):
            if getattr(self, name) <= 0:
                raise ConfigurationError(f"cell {name} must be > 0")
        if self.lanes < 1:
            raise ConfigurationError("cell needs at least one lane")
        if self.q_max / self.v_f >= self.rho_jam:
            raise ConfigurationError(
                "critical density q_max/v_f must stay below rho_jam"
            )

    @property
    def rho_crit(self) -> float:
        return self.q_max / self.v_f


@dataclass(frozen=True)
class RampSpec:
    """A metered on-ramp feeding one merge cell.

    meter_mode "signal" runs a one-vehicle-per-green style cycle: the
    ramp discharges at saturation flow during the green fraction
    rate/100 of each cycle and not at all otherwise. "averaged" scales
    saturation flow continuously by rate/100.
    """

    merge_cell: int
    storage_m: float = 200.0
    q_sat: float = 0.5              # veh/s when discharging
    vehicle_spacing_m: float = 7.5  # queue metres per queued vehicle
    signal_cycle_s: float = 60.0
    meter_mode: str = "signal"
    aux_lane_m: float = 0.0         # auxiliary-lane length at the merge

    def __post_init__(self):
        if self.merge_cell < 1:
            raise ConfigurationError(
                "ramp merge_cell must be >= 1 (cell 0 is the corridor entry)"
            )
        for name in ("storage_m", "q_sat", "vehicle_spacing_m", "signal_cycle_s"):
            if getattr(self, name) <= 0:
                raise ConfigurationError(f"ramp {name} must be > 0")
        if self.meter_mode not in ("signal", "averaged"):
            raise ConfigurationError(
                f"ramp meter_mode must be 'signal' or 'averaged', got {self.meter_mode!r}"
            )
        if self.aux_lane_m < 0:
            raise ConfigurationError("ramp aux_lane_m must be >= 0")


@dataclass(frozen=True)
class OffRampSpec:
    """Diverge taking a fixed fraction of one cell's outflow."""

    from_cell: int
    split_ratio: float

    def __post_init__(self):
        if not 0.0 < self.split_ratio < 1.0:
            raise ConfigurationError("off-ramp split_ratio must be in (0, 1)")


@dataclass(frozen=True)
class DetectorSpec:
    """Measurement station on a cell or a ramp queue.

    kind "point" sits at a cell's downstream boundary and aggregates
    flow and space-mean speed. kind "area" covers a stretch: on a cell
    it reports time-averaged occupancy, on a ramp it reports the queue
    in vehicles and metres clamped to the detector's reach.
    """

    det_id: str
    kind: str                    # "point" | "area"
    cell: Optional[int] = None
    ramp: Optional[int] = None
    length_m: float = 50.0

    def __post_init__(self):
        if self.kind not in ("point", "area"):
            raise ConfigurationError(f"unknown detector kind {self.kind!r}")
        if self.kind == "point" and self.cell is None:
            raise ConfigurationError(f"detector {self.det_id}: point kind needs a cell")
        if self.kind == "area" and (self.cell is None) == (self.ramp is None):
            raise ConfigurationError(
                f"detector {self.det_id}: area kind needs exactly one of cell or ramp"
            )
        if self.length_m <= 0:
            raise ConfigurationError(f"detector {self.det_id}: length must be > 0")


@dataclass(frozen=True)
class FreewayScenario:
    cells: tuple[CellSpec, ...]
    on_ramps: tuple[RampSpec, ...] = ()
    off_ramps: tuple[OffRampSpec, ...] = ()
    detectors: tuple[DetectorSpec, ...] = ()
    mainline_demand: Profile = ((0.0, 0.5),)
    ramp_demands: tuple[Profile, ...] = ()
    dt: float = 0.5
    warmup_s: float = 600.0
    horizon_s: float = 4200.0

    def __post_init__(self):
        if not self.cells:
            raise ConfigurationError("scenario needs at least one cell")
        if self.dt <= 0:
            raise ConfigurationError("dt must be > 0")
        per_second = 1.0 / self.dt
        if abs(per_second - round(per_second)) > 1e-9:
            raise ConfigurationError(
                f"dt={self.dt} must divide one second; arrivals are drawn per second"
            )
        if not 0 <= self.warmup_s < self.horizon_s:
            raise ConfigurationError("need 0 <= warmup_s < horizon_s")
        n = len(self.cells)
        for i, c in enumerate(self.cells):
            if c.v_f * self.dt > c.length_m + 1e-12:
                raise ConfigurationError(
                    f"cell {i}: v_f*dt = {c.v_f * self.dt:.1f} m exceeds length "
                    f"{c.length_m:.1f} m; shorten dt or lengthen the cell"
                )
        for r, ramp in enumerate(self.on_ramps):
            if not 1 <= ramp.merge_cell < n:
                raise ConfigurationError(f"ramp {r}: merge_cell {ramp.merge_cell} out of range")
            cell = self.cells[ramp.merge_cell]
            mult = 1.0 + ramp.aux_lane_m / (cell.lanes * cell.length_m)
            if mult * cell.w * self.dt > cell.length_m + 1e-12:
                raise ConfigurationError(
                    f"ramp {r}: auxiliary lane supply bonus breaks the wave CFL bound"
                )
        seen_off = set()
        for o in self.off_ramps:
            if not 0 <= o.from_cell < n:
                raise ConfigurationError(f"off-ramp from_cell {o.from_cell} out of range")
            if o.from_cell in seen_off:
                raise ConfigurationError(f"cell {o.from_cell} has two off-ramps")
            seen_off.add(o.from_cell)
        seen_ids = set()
        for d in self.detectors:
            if d.det_id in seen_ids:
                raise ConfigurationError(f"duplicate detector id {d.det_id!r}")
            seen_ids.add(d.det_id)
            if d.cell is not None and not 0 <= d.cell < n:
                raise ConfigurationError(f"detector {d.det_id}: cell {d.cell} out of range")
            if d.ramp is not None and not 0 <= d.ramp < len(self.on_ramps):
                raise ConfigurationError(f"detector {d.det_id}: ramp {d.ramp} out of range")
        validate_profile(self.mainline_demand, "mainline_demand")
        if len(self.ramp_demands) != len(self.on_ramps):
            raise ConfigurationError(
                f"{len(self.on_ramps)} ramps but {len(self.ramp_demands)} ramp demand profiles"
            )
        for i, prof in enumerate(self.ramp_demands):
            validate_profile(prof, f"ramp_demands[{i}]")

    @property
    def n_steps(self) -> int:
        return round(self.horizon_s / self.dt)

    @property
    def warmup_steps(self) -> int:
        return round(self.warmup_s / self.dt)


@dataclass(frozen=True)
class DetectorReading:
    """Aggregate over one measurement window."""

    det_id: str
    window_s: float
    occupancy_pct: float
    flow_veh_h: float = 0.0
    speed_m_s: float = 0.0
    queue_veh: float = 0.0
    queue_m: float = 0.0
    arrivals_veh: float = 0.0


class FreewayState:
    """Mutable simulation state. Create through init_freeway_state."""

    def __init__(self, scenario: FreewayScenario, seed: int):
        n = len(scenario.cells)
        self.t_step = 0
        self.seed = seed
        self.rng = np.random.default_rng(seed)
        self.veh = np.zeros(n)
        self.source_queue = 0.0
        self.ramp_queue = np.zeros(len(scenario.on_ramps))
        self.ramp_arrivals_window = np.zeros(len(scenario.on_ramps))
        self.entered = CompensatedSum()
        self.exited = CompensatedSum()

        # static arrays lifted out of the step loop
        self.L = np.array([c.length_m for c in scenario.cells])
        self.lanes = np.array([float(c.lanes) for c in scenario.cells])
        self.v_f = np.array([c.v_f for c in scenario.cells])
        self.w = np.array([c.w for c in scenario.cells])
        self.rho_jam = np.array([c.rho_jam for c in scenario.cells])
        self.q_max = np.array([c.q_max for c in scenario.cells])
        self.area = self.L * self.lanes
        self.supply_mult = np.ones(n)
        for ramp in scenario.on_ramps:
            cell = scenario.cells[ramp.merge_cell]
            self.supply_mult[ramp.merge_cell] = (
                1.0 + ramp.aux_lane_m / (cell.lanes * cell.length_m)
            )
        self.beta = np.zeros(n)
        for o in scenario.off_ramps:
            self.beta[o.from_cell] = o.split_ratio
        self.steps_per_second = round(1.0 / scenario.dt)

        # detector accumulators
        self.det_steps = 0
        self.det_occ = {d.det_id: 0.0 for d in scenario.detectors}
        self.det_flow = {d.det_id: 0.0 for d in scenario.detectors}
        self.det_speed = {d.det_id: 0.0 for d in scenario.detectors}

        # per-step outputs of the latest step, for trace recording
        self.last_signal_green = np.ones(len(scenario.on_ramps), dtype=bool)
        self.last_outflow = np.zeros(n)

    def total_vehicles(self) -> float:
        return float(self.veh.sum() + self.ramp_queue.sum() + self.source_queue)

    def conservation_residual(self) -> float:
        return abs(self.entered.value - self.total_vehicles() - self.exited.value)


def init_freeway_state(scenario: FreewayScenario, seed: int) -> FreewayState:
    return FreewayState(scenario, seed)


def step_freeway(state: FreewayState, scenario: FreewayScenario,
                 rates_pct: Sequence[float]) -> FreewayState:
    """Advance the corridor by one step of scenario.dt seconds.

    rates_pct holds the commanded metering rate per on-ramp. The rate
    gates ramp discharge only; arrivals join the ramp queue regardless,
    so a hard meter grows the queue rather than turning demand away.
    """
    n_ramps = len(scenario.on_ramps)
    if len(rates_pct) != n_ramps:
        raise ContractError(
            f"expected {n_ramps} metering rates, got {len(rates_pct)}"
        )
    for r in rates_pct:
        if not 0.0 <= r <= 100.0:
            raise ContractError(f"metering rate {r} outside [0, 100] percent")

    dt = scenario.dt
    t = state.t_step * dt

    # Arrivals: one Bernoulli draw per source per simulated second, so a
    # probability of 1.0 is exactly one vehicle per second and 0/1
    # profiles are deterministic. Draw order is fixed: mainline first,
    # then ramps by index.
    if state.t_step % state.steps_per_second == 0:
        if state.rng.random() < piecewise_value(scenario.mainline_demand, t):
            state.source_queue += 1.0
            state.entered.add(1.0)
        for i in range(n_ramps):
            if state.rng.random() < piecewise_value(scenario.ramp_demands[i], t):
                state.ramp_queue[i] += 1.0
                state.entered.add(1.0)
                state.ramp_arrivals_window[i] += 1.0

    rho = state.veh / state.area
    demand = np.minimum(state.v_f * rho, state.q_max) * state.lanes
    supply = (np.minimum(state.q_max, state.w * (state.rho_jam - rho))
              * state.lanes * state.supply_mult)
    np.maximum(supply, 0.0, out=supply)

    # mainline boundary flows, upstream demand against downstream supply
    # with the off-ramp share diverging before the boundary
    thru = np.zeros(len(scenario.cells))
    off = np.zeros(len(scenario.cells))
    beta = state.beta
    q_tot = np.empty(len(scenario.cells))
    q_tot[:-1] = np.minimum(demand[:-1], supply[1:] / (1.0 - beta[:-1]))
    q_tot[-1] = demand[-1]
    off[:] = beta * q_tot
    thru[:] = q_tot - off

    moved_entry = min(state.source_queue / dt, supply[0]) * dt

    inflow_rate = np.zeros(len(scenario.cells))
    inflow_rate[0] = moved_entry / dt
    inflow_rate[1:] += thru[:-1]

    ramp_moved = np.zeros(n_ramps)
    for i, ramp in enumerate(scenario.on_ramps):
        m = ramp.merge_cell
        if ramp.meter_mode == "signal":
            green = (t % ramp.signal_cycle_s) < (rates_pct[i] / 100.0) * ramp.signal_cycle_s
            cap = ramp.q_sat if green else 0.0
            state.last_signal_green[i] = green
        else:
            cap = ramp.q_sat * rates_pct[i] / 100.0
            state.last_signal_green[i] = True
        residual = max(0.0, supply[m] - inflow_rate[m])
        rate = min(state.ramp_queue[i] / dt, cap, residual)
        moved = rate * dt
        ramp_moved[i] = moved
        inflow_rate[m] += rate

    # apply transfers; each moved quantity appears exactly once on each side
    state.veh += inflow_rate * dt
    state.veh -= q_tot * dt
    state.source_queue -= moved_entry
    state.ramp_queue -= ramp_moved
    left = off.sum() * dt + thru[-1] * dt
    state.exited.add(left)
    np.maximum(state.veh, 0.0, out=state.veh)

    state.last_outflow = q_tot

    # detector accumulation on the post-step state
    rho_post = state.veh / state.area
    state.det_steps += 1
    for d in scenario.detectors:
        if d.cell is None:
            continue
        c = d.cell
        if d.kind == "area":
            state.det_occ[d.det_id] += 100.0 * rho_post[c] / state.rho_jam[c]
        else:
            state.det_flow[d.det_id] += q_tot[c] * dt
            if rho[c] > 1e-9:
                v = min(state.v_f[c], q_tot[c] / (rho[c] * state.lanes[c]))
            else:
                v = state.v_f[c]
            state.det_speed[d.det_id] += v

    state.t_step += 1
    return state


def read_detectors(state: FreewayState, scenario: FreewayScenario,
                   window_s: Optional[float] = None) -> dict[str, DetectorReading]:
    """Aggregate and reset every detector.

    Call at a fixed cadence; the window covers everything since the
    previous read. When window_s is given it must match the elapsed
    aggregation time, which catches cadence bugs in the caller.
    """
    if state.det_steps == 0:
        raise ContractError("read_detectors called with no accumulated steps")
    elapsed = state.det_steps * scenario.dt
    if window_s is not None and abs(elapsed - window_s) > 1e-9:
        raise ContractError(
            f"detector window mismatch: accumulated {elapsed} s, expected {window_s} s"
        )
    out = {}
    for d in scenario.detectors:
        if d.kind == "point":
            flow = state.det_flow[d.det_id] / elapsed * 3600.0
            speed = state.det_speed[d.det_id] / state.det_steps
            out[d.det_id] = DetectorReading(
                det_id=d.det_id, window_s=elapsed, occupancy_pct=0.0,
                flow_veh_h=flow, speed_m_s=speed,
            )
        elif d.cell is not None:
            occ = state.det_occ[d.det_id] / state.det_steps
            out[d.det_id] = DetectorReading(
                det_id=d.det_id, window_s=elapsed, occupancy_pct=occ,
            )
        else:
            ramp = scenario.on_ramps[d.ramp]
            queue_veh = float(state.ramp_queue[d.ramp])
            reach = min(d.length_m, ramp.storage_m)
            queue_m = min(queue_veh * ramp.vehicle_spacing_m, reach)
            occ = 100.0 * queue_m / reach
            out[d.det_id] = DetectorReading(
                det_id=d.det_id, window_s=elapsed, occupancy_pct=occ,
                queue_veh=queue_veh, queue_m=queue_m,
                arrivals_veh=float(state.ramp_arrivals_window[d.ramp]),
            )
    for key in state.det_occ:
        state.det_occ[key] = 0.0
        state.det_flow[key] = 0.0
        state.det_speed[key] = 0.0
    state.det_steps = 0
    state.ramp_arrivals_window[:] = 0.0
    return out


def find_detector(scenario: FreewayScenario, kind: str, *, cell: Optional[int] = None,
                  ramp: Optional[int] = None) -> DetectorSpec:
    """Locate the detector bound to a cell or ramp, for controller wiring."""
    for d in scenario.detectors:
        if d.kind != kind:
            continue
        if cell is not None and d.cell == cell:
            return d
        if ramp is not None and d.ramp == ramp:
            return d
    where = f"cell {cell}" if cell is not None else f"ramp {ramp}"
    raise ConfigurationError(f"no {kind} detector on {where}")


@dataclass
class FreewayRunTrace:
    """Everything a completed run exposes to metrics and reports."""

    scenario: FreewayScenario
    seed: int
    t: np.ndarray                    # step times, s
    queue_m: np.ndarray              # steps x ramps, metres
    rates_pct: np.ndarray            # steps x ramps
    signal_green: np.ndarray         # steps x ramps, bool
    total_veh: np.ndarray            # steps
    cycle_t: np.ndarray              # control-cycle end times, s
    cycle_occupancy: np.ndarray      # cycles x monitored merge detectors
    occupancy_det_ids: tuple[str, ...]
    entered: float
    exited: float
    residual_max: float
    rho: Optional[np.ndarray] = None          # steps x cells, on request
    detector_log: list = field(default_factory=list)


@dataclass(frozen=True)
class MetricRecord:
    mean_queue_m: float
    mean_occ_violation_pct: float
    total_time_spent_veh_s: float
    vehicles_entered: float
    vehicles_exited: float

    def as_dict(self) -> dict[str, float]:
        return {
            "mean_queue_m": self.mean_queue_m,
            "mean_occ_violation_pct": self.mean_occ_violation_pct,
            "total_time_spent_veh_s": self.total_time_spent_veh_s,
            "vehicles_entered": self.vehicles_entered,
            "vehicles_exited": self.vehicles_exited,
            "throughput_veh": self.vehicles_exited,
        }


def freeway_metrics(trace: FreewayRunTrace, target_occupancy: float) -> MetricRecord:
    """Post-warmup performance metrics of one run.

    Mean queue averages over steps and ramps in metres. The occupancy
    violation averages max(0, occ - target) over control cycles and
    monitored detectors, so a run that never exceeds the target scores
    zero regardless of how far below it stays.
    """
    warm = trace.scenario.warmup_s
    keep = trace.t >= warm
    mean_queue = float(trace.queue_m[keep].mean()) if keep.any() else 0.0
    keep_c = trace.cycle_t > warm
    if keep_c.any() and trace.cycle_occupancy.size:
        excess = np.maximum(0.0, trace.cycle_occupancy[keep_c] - target_occupancy)
        violation = float(excess.mean())
    else:
        violation = 0.0
    dt = trace.scenario.dt
    tts = float(trace.total_veh[keep].sum() * dt)
    return MetricRecord(
        mean_queue_m=mean_queue,
        mean_occ_violation_pct=violation,
        total_time_spent_veh_s=tts,
        vehicles_entered=trace.entered,
        vehicles_exited=trace.exited,
    )
