"""Signal controllers for the arterial network simulator.

All controllers share one cadence contract: tick(state, network, t) is
called once per simulated second, before that second's simulation
steps, and returns the command tuples step_urban understands. Decision
rows accumulate on the controller for reporting.

Three families:

* MPFixedController keeps a common fixed cycle and re-splits each
  intersection's green times once per cycle in proportion to
  time-averaged phase pressures.
* MPFlexController runs an acyclic per-intersection state machine that
  holds a phase while it has the largest pressure and switches as soon
  as another phase strictly exceeds it, with hard minimum and maximum
  green times.
* ScootScatsController adapts a shared cycle length from the worst
  degree of saturation in a district, re-splits greens toward the most
  saturated phase, and sets progression offsets along a corridor from
  inter-intersection travel times.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import ConfigurationError, ContractError
from .urban import UrbanNetwork, UrbanState, read_pressures, read_saturation
from .util import allocate_greens


class MPFixedController:
    """Cycle-locked pressure-proportional green splitting.

    Phase pressures are sampled n_samples times per cycle at evenly
    spaced seconds; at each cycle boundary the next cycle's greens are
    the effective green time (cycle minus one transition per phase)
    split in proportion to the mean sampled pressures, integerized and
    clamped to [g_min, g_max]. All-zero pressures give an equal split.
    """

    def __init__(self, network: UrbanNetwork, cycle_s: float = 120.0,
                 g_min: float = 5.0, g_max: float = 50.0,
                 n_samples: int = 10,
                 nodes: Optional[Sequence[str]] = None):
        if cycle_s <= 0:
            raise ConfigurationError("cycle_s must be > 0")
        if n_samples < 1:
            raise ConfigurationError("n_samples must be >= 1")
        if n_samples > cycle_s:
            raise ConfigurationError("n_samples cannot exceed the cycle seconds")
        if not 0 < g_min <= g_max:
            raise ConfigurationError("need 0 < g_min <= g_max")
        self.cycle_s = float(cycle_s)
        self.g_min = float(g_min)
        self.g_max = float(g_max)
        self.n_samples = int(n_samples)
        self.nodes = list(nodes) if nodes is not None else [
            i.node_id for i in network.intersections
        ]
        self.t_eff = {}
        for node in self.nodes:
            inter = network.intersection(node)
            n = len(inter.phases)
            t_eff = cycle_s - n * inter.transition_s
            if t_eff < n * g_min - 1e-9:
                raise ConfigurationError(
                    f"{node}: effective green {t_eff} s cannot reach "
                    f"{n} phases at g_min {g_min}"
                )
            if t_eff > n * g_max + 1e-9:
                raise ConfigurationError(
                    f"{node}: effective green {t_eff} s exceeds "
                    f"{n} phases at g_max {g_max}"
                )
            self.t_eff[node] = int(round(t_eff))
        self.sample_at = sorted({round(k * cycle_s / n_samples)
                                 for k in range(n_samples)})
        self._sec = 0
        self._samples = {node: [] for node in self.nodes}
        self._started = False
        self.decision_log: list[dict] = []

    def _plan_commands(self, state: UrbanState, network: UrbanNetwork,
                       t: float) -> list:
        cmds = []
        for node in self.nodes:
            taken = self._samples[node]
            if taken:
                means = np.mean(np.array(taken), axis=0)
            else:
                means = np.zeros(len(network.intersection(node).phases))
            greens = allocate_greens(means, self.t_eff[node],
                                     self.g_min, self.g_max)
            cmds.append(("plan", node, [float(g) for g in greens],
                         self.cycle_s, 0.0))
            self.decision_log.append({
                "t": t, "node": node, "greens": tuple(greens),
                "mean_pressures": tuple(float(m) for m in means),
            })
            self._samples[node] = []
        return cmds

    def tick(self, state: UrbanState, network: UrbanNetwork, t: float) -> list:
        if not self._started:
            self._started = True
            self._sec = 0
            cmds = self._plan_commands(state, network, t)
        elif self._sec >= self.cycle_s - 1e-9:
            self._sec = 0
            cmds = self._plan_commands(state, network, t)
        else:
            cmds = []
        if self._sec in self.sample_at:
            for node in self.nodes:
                self._samples[node].append(read_pressures(state, network, node))
        self._sec += 1
        return cmds


_FLEX_START = "start"
_FLEX_CHECK = "check"
_FLEX_WAIT = "wait"
_FLEX_TRANSITION = "transition"


class _FlexState:
    __slots__ = ("mode", "green_start", "wait_left", "trans_left", "active")

    def __init__(self):
        self.mode = _FLEX_START
        self.green_start = 0.0
        self.wait_left = 0.0
        self.trans_left = 0.0
        self.active = 0


class MPFlexController:
    """Acyclic max-pressure phase holding with bounded green times.

    Each intersection runs its own state machine, ticked once per
    second. A fresh green is held for g_min seconds, then re-evaluated:
    if another phase's pressure strictly exceeds the active one's, the
    controller switches to the strongest competitor (ties broken
    uniformly at random); otherwise it waits t_a seconds and checks
    again. Any evaluation that finds the green older than g_max forces
    a switch to the globally strongest phase, re-entering the current
    phase through a full transition if it is still the strongest. Green
    durations therefore stay within [g_min, g_max + t_a].
    """

    def __init__(self, network: UrbanNetwork, g_min: float = 5.0,
                 g_max: float = 50.0, t_a: float = 5.0, seed: int = 0,
                 nodes: Optional[Sequence[str]] = None):
        if not 0 < g_min <= g_max:
            raise ConfigurationError("need 0 < g_min <= g_max")
        if t_a < 1:
            raise ConfigurationError("t_a must be at least one second")
        self.g_min = float(g_min)
        self.g_max = float(g_max)
        self.t_a = float(t_a)
        self.rng = np.random.default_rng(seed)
        self.nodes = list(nodes) if nodes is not None else [
            i.node_id for i in network.intersections
        ]
        self._t_l = {}
        for node in self.nodes:
            inter = network.intersection(node)
            if len(inter.phases) < 2:
                raise ConfigurationError(
                    f"{node}: phase switching needs at least two phases"
                )
            self._t_l[node] = inter.transition_s
        self._fsm = {node: _FlexState() for node in self.nodes}
        self.decision_log: list[dict] = []

    def _pick(self, candidates: list[int], pressures: list[float]) -> int:
        top = max(pressures[j] for j in candidates)
        best = [j for j in candidates if pressures[j] == top]
        if len(best) == 1:
            return best[0]
        return best[int(self.rng.integers(len(best)))]

    def tick(self, state: UrbanState, network: UrbanNetwork, t: float) -> list:
        cmds = []
        for node in self.nodes:
            fs = self._fsm[node]
            if fs.mode == _FLEX_TRANSITION:
                fs.trans_left -= 1.0
                if fs.trans_left <= 1e-9:
                    fs.mode = _FLEX_START
                    fs.green_start = t
                continue
            elapsed = t - fs.green_start
            if fs.mode == _FLEX_START:
                if elapsed >= self.g_min:
                    fs.mode = _FLEX_CHECK
                continue
            if fs.mode == _FLEX_WAIT:
                fs.wait_left -= 1.0
                if fs.wait_left <= 1e-9:
                    fs.mode = _FLEX_CHECK
                continue
            pressures = read_pressures(state, network, node)
            if elapsed >= self.g_max:
                nxt = self._pick(list(range(len(pressures))), pressures)
                cmds.append(("phase", node, nxt, True))
                fs.mode = _FLEX_TRANSITION
                fs.trans_left = self._t_l[node]
                self.decision_log.append({
                    "t": t, "node": node, "kind": "forced",
                    "from": fs.active, "to": nxt, "green_s": elapsed,
                    "pressures": tuple(pressures),
                })
                fs.active = nxt
                continue
            others = [j for j in range(len(pressures)) if j != fs.active]
            if max(pressures[j] for j in others) > pressures[fs.active]:
                nxt = self._pick(others, pressures)
                cmds.append(("phase", node, nxt, False))
                fs.mode = _FLEX_TRANSITION
                fs.trans_left = self._t_l[node]
                self.decision_log.append({
                    "t": t, "node": node, "kind": "switch",
                    "from": fs.active, "to": nxt, "green_s": elapsed,
                    "pressures": tuple(pressures),
                })
                fs.active = nxt
            else:
                fs.mode = _FLEX_WAIT
                fs.wait_left = self.t_a
        return cmds


@dataclass(frozen=True)
class DistrictSpec:
    """A group of intersections retimed together on a shared cycle."""

    name: str
    members: tuple[str, ...]
    corridor: tuple[str, ...] = ()

    def __post_init__(self):
        if not self.members:
            raise ConfigurationError(f"district {self.name}: no members")
        for node in self.corridor:
            if node not in self.members:
                raise ConfigurationError(
                    f"district {self.name}: corridor node {node!r} is not a member"
                )


@dataclass(frozen=True)
class ScootScatsParams:
    initial_cycle_s: float = 120.0
    cycle_min_s: float = 50.0
    cycle_max_s: float = 180.0
    alpha_cycle: float = 30.0
    d_upper: float = 0.925
    d_lower: float = 0.875
    alpha_green: float = 10.0
    green_min_s: float = 2.0
    green_cap_frac: float = 0.75
    alpha_offset: float = 1.0
    offset_thresh: float = 0.5
    v_limit_m_s: float = 50.0 / 3.6
    vehicle_spacing_m: float = 7.5
    adapt_every_cycles: int = 1

    def __post_init__(self):
        if not 0 < self.cycle_min_s <= self.initial_cycle_s <= self.cycle_max_s:
            raise ConfigurationError(
                "need cycle_min_s <= initial_cycle_s <= cycle_max_s"
            )
        if not 0 < self.d_lower <= self.d_upper:
            raise ConfigurationError("need 0 < d_lower <= d_upper")
        if not 0 < self.green_cap_frac <= 1:
            raise ConfigurationError("green_cap_frac must be in (0, 1]")
        if self.v_limit_m_s <= 0:
            raise ConfigurationError("v_limit_m_s must be > 0")
        if self.adapt_every_cycles < 1:
            raise ConfigurationError("adapt_every_cycles must be >= 1")


def adapted_cycle(cycle_s: float, d_max: float, p: ScootScatsParams) -> int:
    """Next common cycle length from the worst saturation in the group.

    Above d_upper the cycle grows by alpha_cycle per unit of excess;
    below d_lower it shrinks the same way. Inside the band it only gets
    re-rounded. The result is clamped to [cycle_min_s, cycle_max_s].
    """
    c = cycle_s
    if d_max > p.d_upper:
        c = cycle_s + p.alpha_cycle * (d_max - p.d_upper)
    elif d_max < p.d_lower:
        c = cycle_s - p.alpha_cycle * (p.d_lower - d_max)
    return int(min(max(round(c), p.cycle_min_s), p.cycle_max_s))


def rebalanced_greens(greens: Sequence[float], degrees: Sequence[float],
                      t_eff: int, p: ScootScatsParams) -> tuple[int, ...]:
    """Shift green toward the most saturated phase, then renormalise.

    The winner's target grows by alpha_green times its saturation
    excess over the mean of the other phases, capped at green_cap_frac
    of the effective green; the other targets stay at their previous
    greens. Targets are then integerized proportionally onto t_eff with
    a green_min_s floor.
    """
    greens = list(float(g) for g in greens)
    degrees = list(float(d) for d in degrees)
    if len(greens) != len(degrees):
        raise ContractError("greens and degrees must align")
    targets = list(greens)
    if len(greens) > 1:
        star = int(np.argmax(degrees))
        others = [degrees[j] for j in range(len(degrees)) if j != star]
        delta = degrees[star] - float(np.mean(others))
        if delta > 0:
            raised = greens[star] + p.alpha_green * delta
            targets[star] = min(raised, p.green_cap_frac * t_eff)
    return tuple(allocate_greens(targets, t_eff, p.green_min_s, float(t_eff)))


def corridor_offsets(corridor: Sequence[str],
                     connection_lengths: dict,
                     cycle_s: float, p: ScootScatsParams,
                     travel_time_adjustments: Optional[dict] = None
                     ) -> dict[str, float]:
    """Progression offsets along a corridor from link travel times.

    Each hop adds alpha_offset times the inter-intersection travel time
    (connection length over the speed limit, unless overridden for the
    upstream intersection), capped at the cycle length.
    """
    adjustments = travel_time_adjustments or {}
    offsets = {}
    theta = 0.0
    for k, node in enumerate(corridor):
        if k > 0:
            prev = corridor[k - 1]
            if prev in adjustments:
                tau = float(adjustments[prev])
            else:
                length = _connection_length(connection_lengths, prev, node)
                tau = length / p.v_limit_m_s
            theta = min(theta + p.alpha_offset * tau, cycle_s)
        offsets[node] = theta
    return offsets


def _connection_length(connection_lengths: dict, a: str, b: str) -> float:
    for key in ((a, b), (b, a), frozenset((a, b))):
        if key in connection_lengths:
            return float(connection_lengths[key])
    raise ConfigurationError(f"no connection length between {a!r} and {b!r}")


class ScootScatsController:
    """District cycle, split, and offset adaptation from saturation.

    Once per common cycle each district reads the degree of saturation
    of every approach, grows or shrinks its cycle from the worst
    reading, shifts each intersection's greens toward its most
    saturated phase, and, when the district is congested enough (mean
    occupied length fraction above offset_thresh), re-posts progression
    offsets along its corridor. All member plans are re-anchored
    together so offsets stay meaningful.
    """

    def __init__(self, network: UrbanNetwork,
                 districts: Sequence[DistrictSpec],
                 initial_greens: dict,
                 connection_lengths: Optional[dict] = None,
                 params: Optional[ScootScatsParams] = None,
                 travel_time_adjustments: Optional[dict] = None):
        self.params = params or ScootScatsParams()
        self.districts = tuple(districts)
        self.connection_lengths = dict(connection_lengths or {})
        self.travel_time_adjustments = dict(travel_time_adjustments or {})
        if not self.districts:
            raise ConfigurationError("need at least one district")
        seen = set()
        for dist in self.districts:
            for node in dist.members:
                network.intersection(node)
                if node in seen:
                    raise ConfigurationError(
                        f"intersection {node} appears in two districts"
                    )
                seen.add(node)
            for a, b in zip(dist.corridor, dist.corridor[1:]):
                if a not in self.travel_time_adjustments:
                    _connection_length(self.connection_lengths, a, b)
        p = self.params
        self._greens: dict[str, tuple] = {}
        for dist in self.districts:
            for node in dist.members:
                inter = network.intersection(node)
                if node not in initial_greens:
                    raise ConfigurationError(f"{node}: no initial greens")
                greens = tuple(float(g) for g in initial_greens[node])
                if len(greens) != len(inter.phases):
                    raise ConfigurationError(
                        f"{node}: {len(greens)} greens for "
                        f"{len(inter.phases)} phases"
                    )
                need = sum(greens) + len(greens) * inter.transition_s
                if need > p.initial_cycle_s + 1e-9:
                    raise ConfigurationError(
                        f"{node}: initial greens do not fit the cycle"
                    )
                self._greens[node] = greens
        self._cycle = {d.name: float(round(p.initial_cycle_s))
                       for d in self.districts}
        self._offsets = {node: 0.0 for d in self.districts for node in d.members}
        self._sec = {d.name: 0.0 for d in self.districts}
        self._started = False
        self.decision_log: list[dict] = []
        self.cycle_log: list[tuple] = []

    def _district_links(self, state: UrbanState, dist: DistrictSpec) -> list[int]:
        out = []
        for node in dist.members:
            out.extend(state.in_links[node])
        return out

    def _congestion(self, state: UrbanState, network: UrbanNetwork,
                    dist: DistrictSpec) -> float:
        links = self._district_links(state, dist)
        if not links:
            return 0.0
        occupied = sum(float(state.queue[z]) * self.params.vehicle_spacing_m
                       for z in links)
        length = sum(network.links[z].length_m for z in links)
        return occupied / length

    def _plans_for(self, dist: DistrictSpec, network: UrbanNetwork,
                   t: float) -> list:
        cmds = []
        cycle = self._cycle[dist.name]
        for node in dist.members:
            cmds.append(("plan", node, list(self._greens[node]), cycle,
                         self._offsets[node]))
        return cmds

    def _adapt(self, state: UrbanState, network: UrbanNetwork,
               dist: DistrictSpec, t: float) -> list:
        p = self.params
        degrees_by_node = {}
        d_max = None
        for node in dist.members:
            readings = read_saturation(state, network, node)
            inter = network.intersection(node)
            phase_degrees = []
            for phase in inter.phases:
                valid = [readings[lid].degree for lid in phase.served
                         if not readings[lid].degenerate]
                phase_degrees.append(max(valid) if valid else None)
            degrees_by_node[node] = phase_degrees
            for d in phase_degrees:
                if d is not None and (d_max is None or d > d_max):
                    d_max = d

        old_cycle = self._cycle[dist.name]
        new_cycle = (adapted_cycle(old_cycle, d_max, p)
                     if d_max is not None else int(round(old_cycle)))
        self._cycle[dist.name] = float(new_cycle)
        self.cycle_log.append((t, dist.name, float(new_cycle)))

        for node in dist.members:
            inter = network.intersection(node)
            n = len(inter.phases)
            t_eff = int(round(new_cycle - n * inter.transition_s))
            phase_degrees = degrees_by_node[node]
            if all(d is None for d in phase_degrees):
                greens = allocate_greens(self._greens[node], t_eff,
                                         p.green_min_s, float(t_eff))
            else:
                filled = [0.0 if d is None else d for d in phase_degrees]
                greens = rebalanced_greens(self._greens[node], filled, t_eff, p)
            self._greens[node] = tuple(float(g) for g in greens)

        congestion = self._congestion(state, network, dist)
        if dist.corridor and congestion > p.offset_thresh:
            offs = corridor_offsets(dist.corridor, self.connection_lengths,
                                    new_cycle, p, self.travel_time_adjustments)
            self._offsets.update(offs)

        self.decision_log.append({
            "t": t, "district": dist.name, "d_max": d_max,
            "cycle_s": float(new_cycle), "congestion": congestion,
            "greens": {node: self._greens[node] for node in dist.members},
            "offsets": {node: self._offsets[node] for node in dist.members},
        })
        return self._plans_for(dist, network, t)

    def tick(self, state: UrbanState, network: UrbanNetwork, t: float) -> list:
        cmds = []
        if not self._started:
            self._started = True
            for dist in self.districts:
                self._sec[dist.name] = 0.0
                cmds.extend(self._plans_for(dist, network, t))
        else:
            for dist in self.districts:
                period = self._cycle[dist.name] * self.params.adapt_every_cycles
                if self._sec[dist.name] >= period - 1e-9:
                    self._sec[dist.name] = 0.0
                    cmds.extend(self._adapt(state, network, dist, t))
        for dist in self.districts:
            self._sec[dist.name] += 1.0
        return cmds
