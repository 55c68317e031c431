"""Closed-loop drivers binding scenarios, simulators, and controllers.

run_freeway steps the corridor and lets the chosen metering law act at
its control-cycle cadence on cycle-aggregated detector readings.
run_urban ticks the chosen signal controller once per simulated second
and feeds its commands into the network step. Both collect the full
trace a report needs and track the worst conservation residual seen.
"""

from __future__ import annotations

from typing import Optional, Sequence, Union

import numpy as np

from .errors import ConfigurationError
from .freeway import (
    FreewayRunTrace,
    FreewayScenario,
    find_detector,
    init_freeway_state,
    read_detectors,
    step_freeway,
)
from .ramp_control import (
    AlineaController,
    HeroCoordinator,
    HeroParams,
    MetalineController,
    RampMeterParams,
)
from .scenarios import ArterialScenario
from .signal_control import (
    MPFixedController,
    MPFlexController,
    ScootScatsController,
    ScootScatsParams,
)
from .urban import (
    UrbanNetwork,
    UrbanRunTrace,
    init_urban_state,
    step_urban,
)

FREEWAY_CONTROLLERS = ("none", "alinea", "pi_alinea", "metaline", "hero")
URBAN_CONTROLLERS = ("none", "mp_fixed", "mp_flex", "scoot_scats")


def _build_metering(scenario: FreewayScenario, controller: str,
                    meter_params: Optional[RampMeterParams],
                    metaline_gains: Optional[dict],
                    hero_params: Optional[HeroParams]):
    """Returns (update(readings) -> rates, initial rates, cycle_s)."""
    n = len(scenario.on_ramps)
    if controller == "none":
        cycle = meter_params.cycle_s if meter_params else 60.0
        rates = [100.0] * n
        return (lambda occ, q_m, arr: rates), list(rates), cycle

    if controller in ("alinea", "pi_alinea"):
        if meter_params is None:
            meter_params = (RampMeterParams() if controller == "alinea"
                            else RampMeterParams(k_i=5.0))
        if controller == "alinea" and meter_params.k_i != 0.0:
            raise ConfigurationError(
                "alinea is the proportional law; use pi_alinea for k_i != 0"
            )
        locals_ = [AlineaController(meter_params) for _ in range(n)]

        def update(occ, q_m, arr):
            return [c.update(o) for c, o in zip(locals_, occ)]

        return update, [c.rate for c in locals_], meter_params.cycle_s

    if controller == "metaline":
        if meter_params is None:
            meter_params = RampMeterParams(k_i=5.0)
        gains = metaline_gains or {}
        k_p = np.asarray(gains.get("k_p", np.eye(n) * meter_params.k_p))
        k_i = np.asarray(gains.get("k_i", np.eye(n) * meter_params.k_i))
        targets = np.asarray(gains.get(
            "targets", [meter_params.target_occupancy] * n))
        ctrl = MetalineController(
            targets, k_p, k_i, cycle_s=meter_params.cycle_s,
            min_rate=meter_params.min_rate, max_rate=meter_params.max_rate,
            initial_rates=[meter_params.start_rate] * n,
        )

        def update(occ, q_m, arr):
            return [float(r) for r in ctrl.update(occ)]

        return update, [float(r) for r in ctrl.rates], meter_params.cycle_s

    if controller == "hero":
        if meter_params is None:
            meter_params = RampMeterParams()
        hero_params = hero_params or HeroParams(period_s=meter_params.cycle_s)
        children = [AlineaController(meter_params) for _ in range(n)]
        q_sat = [r.q_sat for r in scenario.on_ramps]
        coord = HeroCoordinator(children, q_sat, hero_params)

        def update(occ, q_m, arr):
            return coord.update(occ, q_m, arr)

        return update, [c.rate for c in children], hero_params.period_s

    raise ConfigurationError(
        f"unknown freeway controller {controller!r}; pick one of "
        f"{FREEWAY_CONTROLLERS}"
    )


def run_freeway(scenario: FreewayScenario, controller: str = "none",
                seed: int = 0,
                meter_params: Optional[RampMeterParams] = None,
                metaline_gains: Optional[dict] = None,
                hero_params: Optional[HeroParams] = None,
                record_density: bool = False) -> FreewayRunTrace:
    """One seeded closed-loop corridor run."""
    update, rates, cycle_s = _build_metering(
        scenario, controller, meter_params, metaline_gains, hero_params)
    steps_per_cycle = round(cycle_s / scenario.dt)
    if abs(steps_per_cycle * scenario.dt - cycle_s) > 1e-9:
        raise ConfigurationError(
            f"control cycle {cycle_s} s must be a multiple of dt {scenario.dt} s"
        )

    n_ramps = len(scenario.on_ramps)
    occ_ids = tuple(
        find_detector(scenario, "area", cell=r.merge_cell).det_id
        for r in scenario.on_ramps
    )
    queue_ids = tuple(
        find_detector(scenario, "area", ramp=k).det_id for k in range(n_ramps)
    )
    spacing = np.array([r.vehicle_spacing_m for r in scenario.on_ramps])

    state = init_freeway_state(scenario, seed)
    n_steps = scenario.n_steps
    t = np.arange(1, n_steps + 1) * scenario.dt
    queue_m = np.zeros((n_steps, n_ramps))
    rates_log = np.zeros((n_steps, n_ramps))
    signal_green = np.zeros((n_steps, n_ramps), dtype=bool)
    total_veh = np.zeros(n_steps)
    rho = np.zeros((n_steps, len(scenario.cells))) if record_density else None
    cycle_t = []
    cycle_occ = []
    detector_log = []
    residual_max = 0.0

    for step in range(n_steps):
        step_freeway(state, scenario, rates)
        queue_m[step] = state.ramp_queue * spacing
        rates_log[step] = rates
        signal_green[step] = state.last_signal_green
        total_veh[step] = state.total_vehicles()
        if rho is not None:
            rho[step] = state.veh / state.area
        residual = state.conservation_residual()
        if residual > residual_max:
            residual_max = residual
        if (step + 1) % steps_per_cycle == 0:
            now = (step + 1) * scenario.dt
            readings = read_detectors(state, scenario, window_s=cycle_s)
            occ = [readings[d].occupancy_pct for d in occ_ids]
            q_m = [readings[d].queue_m for d in queue_ids]
            arr = [readings[d].arrivals_veh for d in queue_ids]
            cycle_t.append(now)
            cycle_occ.append(occ)
            detector_log.append((now, readings))
            rates = update(occ, q_m, arr)

    return FreewayRunTrace(
        scenario=scenario,
        seed=seed,
        t=t,
        queue_m=queue_m,
        rates_pct=rates_log,
        signal_green=signal_green,
        total_veh=total_veh,
        cycle_t=np.array(cycle_t),
        cycle_occupancy=np.array(cycle_occ),
        occupancy_det_ids=occ_ids,
        entered=state.entered.value,
        exited=state.exited.value,
        residual_max=residual_max,
        rho=rho,
        detector_log=detector_log,
    )


class _FixedPlanController:
    """Posts the layout's initial plans once and then stays quiet."""

    def __init__(self, initial_greens: dict, cycle_s: float):
        self.initial_greens = initial_greens
        self.cycle_s = cycle_s
        self.decision_log: list = []
        self._posted = False

    def tick(self, state, network, t):
        if self._posted:
            return []
        self._posted = True
        return [("plan", node, list(greens), self.cycle_s, 0.0)
                for node, greens in self.initial_greens.items()]


class _HoldController:
    """No commands at all; every intersection rests on its first phase."""

    def __init__(self):
        self.decision_log: list = []

    def tick(self, state, network, t):
        return []


def _build_signals(scenario, network: UrbanNetwork, controller: str,
                   seed: int, mp_params: Optional[dict],
                   scoot_params: Optional[ScootScatsParams],
                   fixed_cycle_s: float):
    layout = scenario if isinstance(scenario, ArterialScenario) else None
    if controller == "none":
        if layout is not None:
            return _FixedPlanController(layout.initial_greens, fixed_cycle_s)
        return _HoldController()
    if controller == "mp_fixed":
        return MPFixedController(network, **(mp_params or {}))
    if controller == "mp_flex":
        kw = dict(mp_params or {})
        kw.setdefault("seed", seed)
        return MPFlexController(network, **kw)
    if controller == "scoot_scats":
        if layout is None:
            raise ConfigurationError(
                "scoot_scats needs an arterial layout (districts, initial "
                "greens, connection lengths), not a bare network"
            )
        return ScootScatsController(
            network,
            districts=layout.districts,
            initial_greens=layout.initial_greens,
            connection_lengths=layout.connection_lengths,
            params=scoot_params,
        )
    raise ConfigurationError(
        f"unknown urban controller {controller!r}; pick one of "
        f"{URBAN_CONTROLLERS}"
    )


def run_urban(scenario: Union[ArterialScenario, UrbanNetwork],
              controller: str = "none", seed: int = 0,
              mp_params: Optional[dict] = None,
              scoot_params: Optional[ScootScatsParams] = None,
              fixed_cycle_s: float = 120.0,
              record_link_queues: bool = False) -> UrbanRunTrace:
    """One seeded closed-loop network run with per-second control."""
    network = (scenario.network if isinstance(scenario, ArterialScenario)
               else scenario)
    ctrl = _build_signals(scenario, network, controller, seed,
                          mp_params, scoot_params, fixed_cycle_s)

    state = init_urban_state(network, seed)
    seconds = round(network.horizon_s)
    steps_per_s = round(1.0 / network.dt)
    n_steps = seconds * steps_per_s
    t = np.arange(1, n_steps + 1) * network.dt
    total_queue = np.zeros(n_steps)
    total_veh = np.zeros(n_steps)
    link_queues = (np.zeros((n_steps, len(network.links)))
                   if record_link_queues else None)
    spat = []
    residual_max = 0.0

    step = 0
    for sec in range(seconds):
        cmds = ctrl.tick(state, network, float(sec))
        for k in range(steps_per_s):
            step_urban(state, network, commands=cmds if k == 0 else None)
            total_queue[step] = float(state.queue.sum())
            total_veh[step] = state.total_vehicles()
            if link_queues is not None:
                link_queues[step] = state.queue
            residual = state.conservation_residual()
            if residual > residual_max:
                residual_max = residual
            step += 1
        for inter in network.intersections:
            phase, color = state.current_display[inter.node_id]
            spat.append((sec, inter.node_id, phase, color))

    return UrbanRunTrace(
        network=network,
        seed=seed,
        t=t,
        total_queue=total_queue,
        total_veh=total_veh,
        spat=spat,
        decisions=list(getattr(ctrl, "decision_log", [])),
        cycle_lengths=list(getattr(ctrl, "cycle_log", [])),
        entered=state.entered.value,
        exited=state.exited.value,
        residual_max=residual_max,
        link_queues=link_queues,
    )
