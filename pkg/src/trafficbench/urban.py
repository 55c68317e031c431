"""Store-and-forward arterial network with signalised intersections.

Unit conventions: metres, seconds, vehicles; flows in veh/s aggregated
over lanes; queue lengths in vehicles unless a name says metres.

Each link is a free-flow delay line feeding a vertical queue at its
downstream end. A green link discharges at saturation flow, splitting
its outflow over destination links by fixed turn ratios; the share
aimed at a full link stays in the queue, which is how congestion
spills back upstream. Total link content (delay line plus queue) never
exceeds the link's storage. Signals run either a fixed cyclic plan
(greens, cycle, offset, re-anchorable at runtime) or direct phase
commands with a mandatory all-red-free transition interval between
phases; during a transition the intersection serves nobody.

Per-link accumulators (arrivals to the queue, discharges during green,
green time, residual queue at green end) support degree-of-saturation
readings at cycle boundaries without the controllers touching
simulator internals.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import ConfigurationError, ContractError
from .util import CompensatedSum, piecewise_value, validate_profile

Profile = tuple[tuple[float, float], ...]

EXIT = "exit"

GREEN = "G"
YELLOW = "y"
RED = "r"


@dataclass(frozen=True)
class LinkSpec:
    link_id: str
    length_m: float
    lanes: int = 1
    from_node: Optional[str] = None     # None: vehicles spawn here
    to_node: Optional[str] = None       # None: vehicles leave at the far end
    sat_flow: float = 0.5               # veh/s total while green
    freeflow_tt_s: float = 10.0
    storage_veh: Optional[float] = None  # default: length * lanes / 7.5

    def __post_init__(self):
        if self.length_m <= 0:
            raise ConfigurationError(f"link {self.link_id}: length must be > 0")
        if self.lanes < 1:
            raise ConfigurationError(f"link {self.link_id}: needs at least one lane")
        if self.sat_flow <= 0:
            raise ConfigurationError(f"link {self.link_id}: sat_flow must be > 0")
        if self.freeflow_tt_s < 0:
            raise ConfigurationError(f"link {self.link_id}: freeflow_tt_s must be >= 0")
        if self.storage_veh is not None and self.storage_veh < 1:
            raise ConfigurationError(f"link {self.link_id}: storage below one vehicle")

    @property
    def capacity_veh(self) -> float:
        if self.storage_veh is not None:
            return self.storage_veh
        return self.length_m * self.lanes / 7.5


@dataclass(frozen=True)
class PhaseSpec:
    served: tuple[str, ...]

    def __post_init__(self):
        if not self.served:
            raise ConfigurationError("phase must serve at least one link")


@dataclass(frozen=True)
class IntersectionSpec:
    node_id: str
    phases: tuple[PhaseSpec, ...]
    transition_s: float = 3.0

    def __post_init__(self):
        if not self.phases:
            raise ConfigurationError(f"intersection {self.node_id}: needs phases")
        if self.transition_s < 0:
            raise ConfigurationError(f"intersection {self.node_id}: transition_s >= 0")


@dataclass(frozen=True)
class UrbanNetwork:
    intersections: tuple[IntersectionSpec, ...]
    links: tuple[LinkSpec, ...]
    turn_ratios: dict
    sources: dict
    dt: float = 0.25
    warmup_s: float = 600.0
    horizon_s: float = 4200.0

    def __post_init__(self):
        if self.dt <= 0:
            raise ConfigurationError("dt must be > 0")
        per_second = 1.0 / self.dt
        if abs(per_second - round(per_second)) > 1e-9:
            raise ConfigurationError(
                f"dt={self.dt} must divide one second; arrivals are drawn per second"
            )
        if not 0 <= self.warmup_s < self.horizon_s:
            raise ConfigurationError("need 0 <= warmup_s < horizon_s")
        link_ids = [l.link_id for l in self.links]
        if len(set(link_ids)) != len(link_ids):
            raise ConfigurationError("duplicate link ids")
        node_ids = [i.node_id for i in self.intersections]
        if len(set(node_ids)) != len(node_ids):
            raise ConfigurationError("duplicate intersection ids")
        nodes = set(node_ids)
        by_id = {l.link_id: l for l in self.links}
        for l in self.links:
            for ref, label in ((l.from_node, "from_node"), (l.to_node, "to_node")):
                if ref is not None and ref not in nodes:
                    raise ConfigurationError(
                        f"link {l.link_id}: {label} {ref!r} is not an intersection"
                    )
        for inter in self.intersections:
            for p, phase in enumerate(inter.phases):
                for lid in phase.served:
                    if lid not in by_id:
                        raise ConfigurationError(
                            f"intersection {inter.node_id} phase {p}: unknown link {lid!r}"
                        )
                    if by_id[lid].to_node != inter.node_id:
                        raise ConfigurationError(
                            f"intersection {inter.node_id} phase {p}: link {lid!r} "
                            f"does not enter this intersection"
                        )
        for lid, ratios in self.turn_ratios.items():
            if lid not in by_id:
                raise ConfigurationError(f"turn ratios for unknown link {lid!r}")
            src = by_id[lid]
            if src.to_node is None:
                raise ConfigurationError(
                    f"link {lid}: ends outside the network, cannot have turn ratios"
                )
            total = 0.0
            for dest, frac in ratios.items():
                if frac < 0:
                    raise ConfigurationError(f"link {lid}: negative turn ratio")
                total += frac
                if dest == EXIT:
                    continue
                if dest not in by_id:
                    raise ConfigurationError(f"link {lid}: unknown destination {dest!r}")
                if by_id[dest].from_node != src.to_node:
                    raise ConfigurationError(
                        f"link {lid}: destination {dest!r} does not leave "
                        f"node {src.to_node!r}"
                    )
            if abs(total - 1.0) > 1e-9:
                raise ConfigurationError(f"link {lid}: turn ratios sum to {total}, not 1")
        for l in self.links:
            if l.to_node is not None and l.link_id not in self.turn_ratios:
                raise ConfigurationError(f"link {l.link_id}: missing turn ratios")
        for lid, profile in self.sources.items():
            if lid not in by_id:
                raise ConfigurationError(f"source on unknown link {lid!r}")
            if by_id[lid].from_node is not None:
                raise ConfigurationError(
                    f"source link {lid} must start outside the network"
                )
            validate_profile(profile, f"source {lid}")

    @property
    def n_steps(self) -> int:
        return round(self.horizon_s / self.dt)

    def intersection(self, node_id: str) -> IntersectionSpec:
        for inter in self.intersections:
            if inter.node_id == node_id:
                return inter
        raise KeyError(f"no intersection {node_id!r}")


@dataclass
class SignalPlan:
    greens: tuple[float, ...]
    cycle_s: float
    offset_s: float
    anchor_s: float

    def segments(self, transition_s: float):
        """(start, end, phase_index or None, color) covering one cycle."""
        segs = []
        pos = 0.0
        for j, g in enumerate(self.greens):
            segs.append((pos, pos + g, j, GREEN))
            pos += g
            segs.append((pos, pos + transition_s, j, YELLOW))
            pos += transition_s
        if pos < self.cycle_s - 1e-9:
            segs.append((pos, self.cycle_s, None, RED))
        return segs


class _SignalState:
    __slots__ = ("mode", "plan", "segs", "active", "trans_from",
                 "trans_remaining", "pending")

    def __init__(self, inter: IntersectionSpec):
        self.mode = "direct"
        self.plan: Optional[SignalPlan] = None
        self.segs = None
        self.active = 0
        self.trans_from: Optional[int] = None
        self.trans_remaining = 0.0
        self.pending: Optional[int] = None


@dataclass(frozen=True)
class SaturationReading:
    """Degree of saturation of one link over one cycle window."""

    degree: float
    discharged_veh: float
    residual_veh: float
    green_s: float
    degenerate: bool = False


class UrbanState:
    """Mutable network state. Create through init_urban_state."""

    def __init__(self, network: UrbanNetwork, seed: int):
        self.t_step = 0
        self.seed = seed
        self.rng = np.random.default_rng(seed)
        n = len(network.links)
        self.link_index = {l.link_id: i for i, l in enumerate(network.links)}
        self.queue = np.zeros(n)
        self.totals = np.zeros(n)            # queue + delay line, per link
        self.pending_source = np.zeros(n)    # spawned, waiting for space
        self.capacity = np.array([l.capacity_veh for l in network.links])
        self.sat_dt = np.array([l.sat_flow * network.dt for l in network.links])
        self.rings = []
        self.ring_ptr = np.zeros(n, dtype=int)
        for l in network.links:
            n_tt = max(1, round(l.freeflow_tt_s / network.dt))
            self.rings.append(np.zeros(n_tt))
        self.exit_at_head = np.array([l.to_node is None for l in network.links])

        # static routing tables
        self.turns = [[] for _ in range(n)]
        for lid, ratios in network.turn_ratios.items():
            z = self.link_index[lid]
            for dest, frac in ratios.items():
                d = -1 if dest == EXIT else self.link_index[dest]
                self.turns[z].append((d, frac))
        self.source_list = [
            (self.link_index[lid], tuple(profile))
            for lid, profile in network.sources.items()
        ]
        self.steps_per_second = round(1.0 / network.dt)

        # signals
        self.signals = {i.node_id: _SignalState(i) for i in network.intersections}
        self.in_links = {
            i.node_id: [self.link_index[l.link_id] for l in network.links
                        if l.to_node == i.node_id]
            for i in network.intersections
        }
        self.served_idx = {
            i.node_id: [tuple(self.link_index[lid] for lid in ph.served)
                        for ph in i.phases]
            for i in network.intersections
        }

        # cycle accumulators
        self.arrivals_cycle = np.zeros(n)
        self.discharged_green = np.zeros(n)
        self.green_time = np.zeros(n)
        self.residual_green_end = np.zeros(n)
        self.was_green = np.zeros(n, dtype=bool)
        self.prev_green = np.zeros(n, dtype=bool)

        self.entered = CompensatedSum()
        self.exited = CompensatedSum()
        # colors of the step most recently executed, per intersection
        self.current_display: dict[str, tuple[Optional[int], str]] = {
            i.node_id: (0, RED) for i in network.intersections
        }

    def total_vehicles(self) -> float:
        return float(self.totals.sum() + self.pending_source.sum())

    def conservation_residual(self) -> float:
        return abs(self.entered.value - self.total_vehicles() - self.exited.value)

    def queue_of(self, link_id: str) -> float:
        return float(self.queue[self.link_index[link_id]])


def init_urban_state(network: UrbanNetwork, seed: int) -> UrbanState:
    return UrbanState(network, seed)


def apply_signal_plan(state: UrbanState, network: UrbanNetwork, node_id: str,
                      greens: Sequence[float], cycle_s: float,
                      offset_s: float = 0.0,
                      anchor_s: Optional[float] = None) -> None:
    """Install or replace the cyclic plan of one intersection.

    The plan starts counting at anchor_s + offset_s; phase 0's green
    onset lands there. Controllers re-anchor at cycle boundaries so a
    new plan never tears an ongoing cycle.
    """
    inter = network.intersection(node_id)
    n = len(inter.phases)
    if len(greens) != n:
        raise ContractError(f"{node_id}: plan needs {n} greens, got {len(greens)}")
    for g in greens:
        if g < 0:
            raise ContractError(f"{node_id}: negative green time {g}")
    need = sum(greens) + n * inter.transition_s
    if cycle_s + 1e-9 < need:
        raise ContractError(
            f"{node_id}: cycle {cycle_s} s cannot fit greens plus "
            f"{n} transitions ({need} s)"
        )
    sig = state.signals[node_id]
    sig.mode = "plan"
    anchor = state.t_step * network.dt if anchor_s is None else anchor_s
    sig.plan = SignalPlan(tuple(float(g) for g in greens), float(cycle_s),
                          float(offset_s), float(anchor))
    sig.segs = sig.plan.segments(inter.transition_s)


def set_phase(state: UrbanState, network: UrbanNetwork, node_id: str,
              phase: int, force_transition: bool = False) -> None:
    """Command a direct phase change through a transition interval.

    Re-commanding the already active phase is a no-op unless
    force_transition is set, in which case the intersection runs a full
    transition and re-enters the phase. Commands during an ongoing
    transition are caller bugs.
    """
    inter = network.intersection(node_id)
    if not 0 <= phase < len(inter.phases):
        raise ContractError(f"{node_id}: phase {phase} out of range")
    sig = state.signals[node_id]
    if sig.mode != "direct":
        sig.mode = "direct"
        sig.active = _active_plan_phase(state, network, node_id) or 0
        sig.plan = None
        sig.segs = None
    if sig.trans_remaining > 0:
        raise ContractError(f"{node_id}: phase command during a transition")
    if phase == sig.active and not force_transition:
        return
    if inter.transition_s > 0:
        sig.trans_from = sig.active
        sig.pending = phase
        sig.trans_remaining = inter.transition_s
    else:
        sig.active = phase


def _active_plan_phase(state: UrbanState, network: UrbanNetwork,
                       node_id: str) -> Optional[int]:
    sig = state.signals[node_id]
    if sig.mode != "plan" or sig.plan is None:
        return sig.active
    t = state.t_step * network.dt
    pos = (t - sig.plan.anchor_s - sig.plan.offset_s) % sig.plan.cycle_s
    for start, end, phase, color in sig.segs:
        if start - 1e-9 <= pos < end - 1e-9:
            return phase if color == GREEN else None
    return None


def _resolve_display(state: UrbanState, network: UrbanNetwork,
                     node_id: str) -> tuple[Optional[int], str]:
    """(phase, color) shown during the step that is about to run."""
    sig = state.signals[node_id]
    if sig.mode == "plan":
        t = state.t_step * network.dt
        pos = (t - sig.plan.anchor_s - sig.plan.offset_s) % sig.plan.cycle_s
        for start, end, phase, color in sig.segs:
            if start - 1e-9 <= pos < end - 1e-9:
                return phase, color
        return None, RED
    if sig.trans_remaining > 0:
        return sig.trans_from, YELLOW
    return sig.active, GREEN


def step_urban(state: UrbanState, network: UrbanNetwork,
               commands: Optional[Sequence] = None) -> UrbanState:
    """Advance the network by one step of network.dt seconds.

    commands, when given, are applied before anything moves: tuples
    ("plan", node_id, greens, cycle_s, offset_s) or
    ("phase", node_id, phase, force_transition).
    """
    if commands:
        for cmd in commands:
            if cmd[0] == "plan":
                apply_signal_plan(state, network, *cmd[1:])
            elif cmd[0] == "phase":
                set_phase(state, network, *cmd[1:])
            else:
                raise ContractError(f"unknown command {cmd[0]!r}")

    dt = network.dt
    t = state.t_step * dt

    # resolve displays and the set of green links for this step
    green_mask = np.zeros(len(network.links), dtype=bool)
    for inter in network.intersections:
        phase, color = _resolve_display(state, network, inter.node_id)
        state.current_display[inter.node_id] = (phase, color)
        if color == GREEN and phase is not None:
            for z in state.served_idx[inter.node_id][phase]:
                green_mask[z] = True

    # a link leaving green freezes its residual-at-green-end snapshot
    ended = state.prev_green & ~green_mask
    if ended.any():
        state.residual_green_end[ended] = state.queue[ended]
    state.green_time[green_mask] += dt
    state.was_green |= green_mask
    state.prev_green = green_mask

    # advance direct-mode transition timers; activation lands next step
    for sig in state.signals.values():
        if sig.mode == "direct" and sig.trans_remaining > 0:
            sig.trans_remaining -= dt
            if sig.trans_remaining <= 1e-9:
                sig.trans_remaining = 0.0
                sig.active = sig.pending
                sig.trans_from = None
                sig.pending = None

    # arrivals: one Bernoulli draw per source per simulated second
    if state.t_step % state.steps_per_second == 0:
        for idx, profile in state.source_list:
            if state.rng.random() < piecewise_value(profile, t):
                state.pending_source[idx] += 1.0
                state.entered.add(1.0)

    # discharges from green queues, split over destinations; shares
    # aimed at a full link stay behind (spillback). Inflows are staged
    # so they enter the delay line with the full free-flow delay.
    inflow_stage = np.zeros(len(network.links))
    for inter in network.intersections:
        phase, color = state.current_display[inter.node_id]
        if color != GREEN or phase is None:
            continue
        for z in state.served_idx[inter.node_id][phase]:
            potential = min(state.queue[z], state.sat_dt[z])
            if potential <= 0.0:
                continue
            moved_total = 0.0
            for d, frac in state.turns[z]:
                share = frac * potential
                if d < 0:
                    state.exited.add(share)
                    moved_total += share
                else:
                    room = state.capacity[d] - state.totals[d]
                    actual = share if share <= room else max(0.0, room)
                    if actual > 0.0:
                        inflow_stage[d] += actual
                        state.totals[d] += actual
                        moved_total += actual
            state.queue[z] -= moved_total
            state.totals[z] -= moved_total
            state.discharged_green[z] += moved_total

    # delay lines: pop the head cohort, refill the slot with this
    # step's inflow so it surfaces again after the full line length
    for z in range(len(network.links)):
        ring = state.rings[z]
        ptr = state.ring_ptr[z]
        out = ring[ptr]
        ring[ptr] = inflow_stage[z]
        state.ring_ptr[z] = (ptr + 1) % len(ring)
        if out > 0.0:
            if state.exit_at_head[z]:
                state.exited.add(out)
                state.totals[z] -= out
            else:
                state.queue[z] += out
                state.arrivals_cycle[z] += out

    # source entries, limited by link storage; they share this step's
    # refilled slot and therefore the same delay as routed inflow
    for idx, _ in state.source_list:
        if state.pending_source[idx] <= 0.0:
            continue
        room = state.capacity[idx] - state.totals[idx]
        moved = min(state.pending_source[idx], max(0.0, room))
        if moved > 0.0:
            state.rings[idx][state.ring_ptr[idx] - 1] += moved
            state.pending_source[idx] -= moved
            state.totals[idx] += moved

    state.t_step += 1
    return state


def read_pressures(state: UrbanState, network: UrbanNetwork,
                   node_id: str) -> list[float]:
    """Per-phase pressure: the summed queues of the links it serves.

    A link served by several phases contributes to each of them.
    """
    inter = network.intersection(node_id)
    out = []
    for served in state.served_idx[inter.node_id]:
        out.append(float(sum(state.queue[z] for z in served)))
    return out


def read_saturation(state: UrbanState, network: UrbanNetwork,
                    node_id: str) -> dict[str, SaturationReading]:
    """Degree of saturation per incoming link since the last read.

    degree = (discharged during green + residual at green end)
             / (sat_flow * green time); a link that never got green in
    the window reads zero with the degenerate flag set. Call at cycle
    boundaries; reading resets the window accumulators for this
    intersection's approaches.
    """
    inter = network.intersection(node_id)
    out = {}
    for z in state.in_links[inter.node_id]:
        link = network.links[z]
        green_s = float(state.green_time[z])
        if state.prev_green[z]:
            residual = float(state.queue[z])     # green still running
        elif state.was_green[z]:
            residual = float(state.residual_green_end[z])
        else:
            residual = 0.0
        discharged = float(state.discharged_green[z])
        if green_s > 0.0:
            degree = (discharged + residual) / (link.sat_flow * green_s)
            reading = SaturationReading(degree=degree, discharged_veh=discharged,
                                        residual_veh=residual, green_s=green_s)
        else:
            reading = SaturationReading(degree=0.0, discharged_veh=discharged,
                                        residual_veh=residual, green_s=0.0,
                                        degenerate=True)
        out[link.link_id] = reading
        state.green_time[z] = 0.0
        state.discharged_green[z] = 0.0
        state.residual_green_end[z] = 0.0
        state.was_green[z] = False
        state.arrivals_cycle[z] = 0.0
    return out


@dataclass
class UrbanRunTrace:
    """Everything a completed run exposes to metrics and reports."""

    network: UrbanNetwork
    seed: int
    t: np.ndarray                       # step times, s
    total_queue: np.ndarray             # steps, veh over all links
    total_veh: np.ndarray               # steps, veh in network
    spat: list                          # (t, node_id, phase, color) per second
    decisions: list                     # controller decision rows
    cycle_lengths: list                 # (t, cycle_s) when a group retimes
    entered: float
    exited: float
    residual_max: float
    link_queues: Optional[np.ndarray] = None   # steps x links, on request


@dataclass(frozen=True)
class UrbanMetricRecord:
    mean_queue_veh: float
    mean_queue_m: float
    total_time_spent_veh_s: float
    vehicles_entered: float
    vehicles_exited: float

    def as_dict(self) -> dict[str, float]:
        return {
            "mean_queue_veh": self.mean_queue_veh,
            "mean_queue_m": self.mean_queue_m,
            "total_time_spent_veh_s": self.total_time_spent_veh_s,
            "vehicles_entered": self.vehicles_entered,
            "vehicles_exited": self.vehicles_exited,
            "throughput_veh": self.vehicles_exited,
        }


def urban_metrics(trace: UrbanRunTrace,
                  vehicle_spacing_m: float = 7.5) -> UrbanMetricRecord:
    """Post-warmup performance metrics of one network run."""
    keep = trace.t >= trace.network.warmup_s
    mean_q = float(trace.total_queue[keep].mean()) if keep.any() else 0.0
    tts = float(trace.total_veh[keep].sum() * trace.network.dt)
    return UrbanMetricRecord(
        mean_queue_veh=mean_q,
        mean_queue_m=mean_q * vehicle_spacing_m,
        total_time_spent_veh_s=tts,
        vehicles_entered=trace.entered,
        vehicles_exited=trace.exited,
    )
