"""Shipped benchmark scenarios: a metered freeway corridor and a five
intersection arterial, each with named geometry and demand variants.

The freeway corridor is 20 identical two-lane cells with three metered
on-ramps and one diverge near the downstream end. Geometry versions
differ only in the auxiliary-lane length at the merges. Demand names
select piecewise-constant arrival profiles; "step_onset" is the
deterministic variant (certain mainline arrivals, one ramp switching
on mid-run) used to exercise metering against a known congestion
pattern.

The arterial is an east-west corridor of five signalised
intersections with side streets. Intersection 4 has no south approach
and runs two phases; the others run three. At intersection 2 the
westbound approach shares its lane group with the north phase, so it
is served during two phases. The layout object carries everything the
adaptive controllers need: districts with corridor orders, undirected
connection lengths, and initial green splits.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .errors import ConfigurationError
from .freeway import (
    CellSpec,
    DetectorSpec,
    FreewayScenario,
    OffRampSpec,
    RampSpec,
)
from .signal_control import DistrictSpec
from .urban import EXIT, IntersectionSpec, LinkSpec, PhaseSpec, UrbanNetwork

GEOMETRY_VERSIONS = {
    "V1_aux200": 200.0,
    "V2_no_aux": 0.0,
    "V3_aux300": 300.0,
}

MERGE_CELLS = (5, 10, 15)
OFF_RAMP_CELL = 17
OFF_RAMP_SPLIT = 0.10

FREEWAY_DEMANDS = {
    "peak": {
        "mainline": ((0.0, 0.6), (900.0, 1.0), (3300.0, 0.5)),
        "ramps": (
            ((0.0, 0.25), (900.0, 0.45), (3300.0, 0.2)),
            ((0.0, 0.25), (900.0, 0.45), (3300.0, 0.2)),
            ((0.0, 0.25), (900.0, 0.45), (3300.0, 0.2)),
        ),
    },
    "light": {
        "mainline": ((0.0, 0.35),),
        "ramps": (((0.0, 0.15),), ((0.0, 0.15),), ((0.0, 0.15),)),
    },
    "step_onset": {
        "mainline": ((0.0, 1.0),),
        "ramps": (
            ((0.0, 0.0),),
            ((0.0, 0.0), (1500.0, 1.0)),
            ((0.0, 0.0),),
        ),
    },
}


def build_freeway_corridor(geometry: str = "V1_aux200",
                           demand: str = "peak",
                           dt: float = 0.5,
                           warmup_s: float = 600.0,
                           horizon_s: float = 4200.0) -> FreewayScenario:
    """The 20-cell two-lane corridor with three metered merges.

    Each merge cell carries an occupancy detector (area, on the cell),
    a queue detector (area, on the ramp), and a flow detector (point,
    at the cell boundary), named occ_r{k}, queue_r{k}, flow_r{k}.
    """
    if geometry not in GEOMETRY_VERSIONS:
        raise ConfigurationError(
            f"unknown geometry {geometry!r}; pick one of "
            f"{sorted(GEOMETRY_VERSIONS)}"
        )
    if demand not in FREEWAY_DEMANDS:
        raise ConfigurationError(
            f"unknown freeway demand {demand!r}; pick one of "
            f"{sorted(FREEWAY_DEMANDS)}"
        )
    aux = GEOMETRY_VERSIONS[geometry]
    cell = CellSpec(length_m=205.0, lanes=2, v_f=130.0 / 3.6, w=6.0,
                    rho_jam=0.12, q_max=0.6)
    ramps = tuple(
        RampSpec(merge_cell=c, storage_m=200.0, q_sat=0.5,
                 signal_cycle_s=60.0, meter_mode="signal", aux_lane_m=aux)
        for c in MERGE_CELLS
    )
    detectors = []
    for k, c in enumerate(MERGE_CELLS):
        detectors.append(DetectorSpec(det_id=f"occ_r{k}", kind="area", cell=c))
        detectors.append(DetectorSpec(det_id=f"queue_r{k}", kind="area",
                                      ramp=k, length_m=200.0))
        detectors.append(DetectorSpec(det_id=f"flow_r{k}", kind="point", cell=c))
    detectors.append(DetectorSpec(det_id="flow_in", kind="point", cell=0))
    detectors.append(DetectorSpec(det_id="flow_out", kind="point", cell=19))
    profiles = FREEWAY_DEMANDS[demand]
    return FreewayScenario(
        cells=tuple(cell for _ in range(20)),
        on_ramps=ramps,
        off_ramps=(OffRampSpec(from_cell=OFF_RAMP_CELL,
                               split_ratio=OFF_RAMP_SPLIT),),
        detectors=tuple(detectors),
        mainline_demand=profiles["mainline"],
        ramp_demands=profiles["ramps"],
        dt=dt,
        warmup_s=warmup_s,
        horizon_s=horizon_s,
    )


ARTERIAL_DEMANDS = {
    "peak": {
        "main": ((0.0, 0.25), (900.0, 0.45), (3300.0, 0.25)),
        "side": ((0.0, 0.1), (900.0, 0.2), (3300.0, 0.1)),
    },
    "light": {
        "main": ((0.0, 0.2),),
        "side": ((0.0, 0.08),),
    },
}

_MAIN_LEN = 300.0
_SIDE_LEN = 150.0


@dataclass(frozen=True)
class ArterialScenario:
    """The network plus the layout facts the controllers consume."""

    network: UrbanNetwork
    districts: tuple[DistrictSpec, ...]
    connection_lengths: dict
    initial_greens: dict
    main_corridor: tuple[str, ...]


def build_arterial(demand: str = "peak",
                   dt: float = 0.25,
                   warmup_s: float = 600.0,
                   horizon_s: float = 4200.0) -> ArterialScenario:
    """Five-intersection east-west arterial with side streets.

    Eastbound links A0..A5 run outside -> I1 -> ... -> I5 -> outside;
    westbound links B5..B0 mirror them. N{k}/S{k} are one-way side
    approaches into I{k}; I4 has no south approach and therefore only
    a main phase and a north phase.
    """
    if demand not in ARTERIAL_DEMANDS:
        raise ConfigurationError(
            f"unknown arterial demand {demand!r}; pick one of "
            f"{sorted(ARTERIAL_DEMANDS)}"
        )
    nodes = [f"I{k}" for k in range(1, 6)]

    def main_link(link_id, from_node, to_node):
        return LinkSpec(link_id=link_id, length_m=_MAIN_LEN, lanes=2,
                        from_node=from_node, to_node=to_node,
                        sat_flow=1.0, freeflow_tt_s=20.0)

    def side_link(link_id, to_node):
        return LinkSpec(link_id=link_id, length_m=_SIDE_LEN, lanes=1,
                        to_node=to_node, sat_flow=0.5, freeflow_tt_s=12.0)

    links = [
        main_link("A0", None, "I1"),
        main_link("A1", "I1", "I2"),
        main_link("A2", "I2", "I3"),
        main_link("A3", "I3", "I4"),
        main_link("A4", "I4", "I5"),
        main_link("A5", "I5", None),
        main_link("B5", None, "I5"),
        main_link("B4", "I5", "I4"),
        main_link("B3", "I4", "I3"),
        main_link("B2", "I3", "I2"),
        main_link("B1", "I2", "I1"),
        main_link("B0", "I1", None),
    ]
    side_ids = []
    for k in range(1, 6):
        links.append(side_link(f"N{k}", f"I{k}"))
        side_ids.append(f"N{k}")
        if k != 4:
            links.append(side_link(f"S{k}", f"I{k}"))
            side_ids.append(f"S{k}")

    intersections = []
    for k in range(1, 6):
        east_in = f"A{k - 1}"
        west_in = f"B{k}"
        phases = [PhaseSpec(served=(east_in, west_in))]
        if k == 2:
            # the westbound lane group at I2 also moves with the north
            # phase, so B2 is served in two phases
            phases.append(PhaseSpec(served=(f"N{k}", west_in)))
        else:
            phases.append(PhaseSpec(served=(f"N{k}",)))
        if k != 4:
            phases.append(PhaseSpec(served=(f"S{k}",)))
        intersections.append(IntersectionSpec(node_id=f"I{k}",
                                              phases=tuple(phases),
                                              transition_s=3.0))

    turn_ratios = {}
    for k in range(1, 6):
        east_out = f"A{k}"          # leaves I{k} eastward (or outside at I5)
        west_out = f"B{k - 1}"      # leaves I{k} westward (or outside at I1)
        turn_ratios[f"A{k - 1}"] = {east_out: 0.75, EXIT: 0.25}
        turn_ratios[f"B{k}"] = {west_out: 0.75, EXIT: 0.25}
        turn_ratios[f"N{k}"] = {east_out: 0.4, west_out: 0.4, EXIT: 0.2}
        if k != 4:
            turn_ratios[f"S{k}"] = {east_out: 0.4, west_out: 0.4, EXIT: 0.2}

    profiles = ARTERIAL_DEMANDS[demand]
    sources = {"A0": profiles["main"], "B5": profiles["main"]}
    for sid in side_ids:
        sources[sid] = profiles["side"]

    network = UrbanNetwork(
        intersections=tuple(intersections),
        links=tuple(links),
        turn_ratios=turn_ratios,
        sources=sources,
        dt=dt,
        warmup_s=warmup_s,
        horizon_s=horizon_s,
    )

    districts = (
        DistrictSpec(name="west", members=("I1", "I2"), corridor=("I1", "I2")),
        DistrictSpec(name="middle", members=("I3",), corridor=("I3",)),
        DistrictSpec(name="east", members=("I4", "I5"), corridor=("I4", "I5")),
    )
    connection_lengths = {(f"I{k}", f"I{k + 1}"): _MAIN_LEN
                          for k in range(1, 5)}
    initial_greens = {}
    for inter in intersections:
        if len(inter.phases) == 3:
            initial_greens[inter.node_id] = (40.0, 40.0, 31.0)
        else:
            initial_greens[inter.node_id] = (60.0, 54.0)

    return ArterialScenario(
        network=network,
        districts=districts,
        connection_lengths=connection_lengths,
        initial_greens=initial_greens,
        main_corridor=tuple(nodes),
    )
