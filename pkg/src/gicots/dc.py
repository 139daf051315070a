"""Quasi-DC circuit construction and nodal GIC solution.

The DC image of the AC grid has one node per transmission bus plus one
neutral node per substation that hosts transformer grounds.  GSU transformers
contribute a high-side winding edge to the neutral; autotransformers
contribute a series edge between their terminals and a common edge from the
low-voltage terminal to the neutral.  Per-phase winding and line resistances
become single-circuit admittances as 3/R (three phases in parallel);
grounding admittance is 1/Rg.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Mapping

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .config import MILES_PER_DEG_LAT
from .net import Branch, BranchKind, Network, NetworkError, Substation, Transformer, XfmrKind


class DcNodeKind(Enum):
    BUS_IMAGE = "BUS_IMAGE"
    NEUTRAL = "NEUTRAL"


class WindingRole(Enum):
    LINE = "LINE"
    HV_PRIMARY = "HV_PRIMARY"
    SERIES = "SERIES"
    COMMON = "COMMON"


@dataclass(frozen=True)
class GmdScenario:
    magnitude: float  # V/mile
    direction_deg: float  # degrees counterclockwise from east

    def __post_init__(self):
        if self.magnitude < 0:
            raise ValueError("field magnitude must be >= 0")

    @property
    def e_north(self) -> float:
        return self.magnitude * math.sin(math.radians(self.direction_deg))

    @property
    def e_east(self) -> float:
        return self.magnitude * math.cos(math.radians(self.direction_deg))


@dataclass(frozen=True)
class DcNode:
    id: str
    kind: DcNodeKind
    a_m: float  # grounding admittance, siemens; 0 when ungrounded


@dataclass(frozen=True)
class DcEdge:
    id: str
    from_node: int
    to_node: int
    a: float  # siemens, single-circuit
    role: WindingRole
    ac_branch: str  # switching couples through this AC edge
    l_north: float = 0.0  # miles, zero for windings
    l_east: float = 0.0


@dataclass(frozen=True)
class DcNetwork:
    nodes: tuple[DcNode, ...]
    edges: tuple[DcEdge, ...]
    node_index: Mapping[str, int]
    # transformer id -> {role: edge index}
    xfmr_edges: Mapping[str, Mapping[WindingRole, int]]


@dataclass(frozen=True)
class GicState:
    node_voltage: Mapping[str, float]  # volts
    edge_current: Mapping[str, float]  # amps, measured along edge orientation
    effective: Mapping[str, float]  # per transformer, amps, >= 0
    injections: Mapping[str, float]  # per edge EMF source J

    def current_by_role(self, dc: DcNetwork, xfmr_id: str, role: WindingRole) -> float:
        idx = dc.xfmr_edges[xfmr_id][role]
        return self.edge_current[dc.edges[idx].id]


def displacement_miles(sub_from: Substation, sub_to: Substation) -> tuple[float, float]:
    """Flat-earth north/east displacement between substations, in miles."""
    l_north = MILES_PER_DEG_LAT * (sub_to.latitude - sub_from.latitude)
    mean_lat = math.radians(0.5 * (sub_to.latitude + sub_from.latitude))
    l_east = MILES_PER_DEG_LAT * math.cos(mean_lat) * (sub_to.longitude - sub_from.longitude)
    return l_north, l_east


def line_emf(branch: Branch, sub_from: Substation, sub_to: Substation,
             scen: GmdScenario) -> float:
    """Induced EMF along a transmission line, volts (positive from->to)."""
    if branch.kind is not BranchKind.LINE:
        raise ValueError("line_emf applies to LINE branches only")
    if branch.length_miles == 0.0:
        return 0.0
    l_north, l_east = displacement_miles(sub_from, sub_to)
    return scen.e_north * l_north + scen.e_east * l_east


def _dc_resistance_ohm(net: Network, br: Branch) -> float:
    kv = net.buses[br.from_bus].base_kv
    r_ohm = br.r * kv * kv / net.mva_base
    if r_ohm <= 0.0:
        raise NetworkError(f"branches[{br.id}].r: needs r > 0 to carry GIC")
    return r_ohm


def build_dc_network(net: Network) -> DcNetwork:
    """Derive the quasi-DC circuit; fails fast on configurations that cannot
    carry GIC (transformer at an ungrounded substation, system with no ground).
    """
    ac_edge_of_xfmr: dict[str, Branch] = {}
    for br in net.branches.values():
        if br.transformer_id is not None:
            if br.transformer_id in ac_edge_of_xfmr:
                raise NetworkError(
                    f"transformers[{br.transformer_id}]: referenced by several branches")
            ac_edge_of_xfmr[br.transformer_id] = br

    nodes: list[DcNode] = []
    index: dict[str, int] = {}

    def add_node(node_id: str, kind: DcNodeKind, a_m: float) -> int:
        if node_id not in index:
            index[node_id] = len(nodes)
            nodes.append(DcNode(node_id, kind, a_m))
        return index[node_id]

    def bus_image(bus_id: str) -> int:
        return add_node(f"bus:{bus_id}", DcNodeKind.BUS_IMAGE, 0.0)

    def neutral(tr: Transformer, bus_id: str) -> int:
        sub = net.substations[net.buses[bus_id].substation_id]
        if sub.rg_ohm is None:
            raise NetworkError(
                f"transformers[{tr.id}]: substation {sub.id} is ungrounded but "
                "the winding model requires a neutral ground")
        return add_node(f"neutral:{sub.id}", DcNodeKind.NEUTRAL, 1.0 / sub.rg_ohm)

    edges: list[DcEdge] = []
    xfmr_edges: dict[str, dict[WindingRole, int]] = {}

    for br in net.branches.values():
        if br.kind is BranchKind.LINE:
            m, n = bus_image(br.from_bus), bus_image(br.to_bus)
            a = 3.0 / _dc_resistance_ohm(net, br)
            if br.length_miles > 0.0:
                ln, le = displacement_miles(
                    net.substations[net.buses[br.from_bus].substation_id],
                    net.substations[net.buses[br.to_bus].substation_id])
            else:
                ln = le = 0.0
            edges.append(DcEdge(f"line:{br.id}", m, n, a, WindingRole.LINE,
                                br.id, ln, le))

    for tr in net.transformers.values():
        ac = ac_edge_of_xfmr.get(tr.id)
        if ac is None:
            raise NetworkError(f"transformers[{tr.id}]: no AC branch references it")
        roles: dict[WindingRole, int] = {}
        if tr.kind is XfmrKind.GSU:
            m = bus_image(tr.high_bus)
            n = neutral(tr, tr.high_bus)
            roles[WindingRole.HV_PRIMARY] = len(edges)
            edges.append(DcEdge(f"hv:{tr.id}", m, n, 3.0 / tr.w1,
                                WindingRole.HV_PRIMARY, ac.id))
        else:
            lo, hi = bus_image(tr.low_bus), bus_image(tr.high_bus)
            n = neutral(tr, tr.low_bus)
            roles[WindingRole.SERIES] = len(edges)
            edges.append(DcEdge(f"series:{tr.id}", lo, hi, 3.0 / tr.w1,
                                WindingRole.SERIES, ac.id))
            roles[WindingRole.COMMON] = len(edges)
            edges.append(DcEdge(f"common:{tr.id}", lo, n, 3.0 / tr.w2,
                                WindingRole.COMMON, ac.id))
        xfmr_edges[tr.id] = roles

    dc = DcNetwork(tuple(nodes), tuple(edges), index, xfmr_edges)
    if nodes and not any(nd.a_m > 0.0 for nd in nodes):
        raise NetworkError("DC system has no ground reference; nodal system singular")
    return dc


def emf_injections(dc: DcNetwork, scen: GmdScenario) -> np.ndarray:
    """Per-edge current sources J = a * EMF; zero on windings."""
    j = np.zeros(len(dc.edges))
    for i, e in enumerate(dc.edges):
        if e.role is WindingRole.LINE:
            j[i] = e.a * (scen.e_north * e.l_north + scen.e_east * e.l_east)
    return j


def auto_effective(ratio: float, i_high: float, i_low: float) -> float:
    """Effective GIC of an autotransformer from terminal currents."""
    return abs(ratio * i_high + i_low) / ratio


def effective_gic(tr: Transformer, dc: DcNetwork,
                  edge_current: Mapping[str, float]) -> float:
    """Winding-current magnitude driving saturation effects, amps."""
    roles = dc.xfmr_edges[tr.id]
    if tr.kind is XfmrKind.GSU:
        return abs(edge_current[dc.edges[roles[WindingRole.HV_PRIMARY]].id])
    i_series = edge_current[dc.edges[roles[WindingRole.SERIES]].id]
    i_common = edge_current[dc.edges[roles[WindingRole.COMMON]].id]
    if tr.ratio == 1.0:
        return abs(i_common)
    i_high = -i_series  # series edge oriented low->high
    i_low = i_common - i_high
    return auto_effective(tr.ratio, i_high, i_low)


def solve_gic(net: Network, dc: DcNetwork, z: Mapping[str, float] | None,
              scen: GmdScenario) -> GicState:
    """Nodal GIC solve at a fixed switching state.

    Switched-off AC edges remove their DC images and EMF injections from the
    system.  Every energized component must see at least one ground.
    """
    nn, ne = len(dc.nodes), len(dc.edges)
    active = np.ones(ne, dtype=bool)
    if z is not None:
        for i, e in enumerate(dc.edges):
            ze = z.get(e.ac_branch, 1.0)
            if abs(ze - round(ze)) > 1e-9:
                raise ValueError(f"z[{e.ac_branch}] = {ze} is not binary")
            active[i] = round(ze) == 1

    j = emf_injections(dc, scen)
    j[~active] = 0.0

    touched = np.zeros(nn, dtype=bool)
    rows, cols, vals = [], [], []
    b = np.zeros(nn)
    for i, e in enumerate(dc.edges):
        if not active[i]:
            continue
        m, n = e.from_node, e.to_node
        touched[m] = touched[n] = True
        rows += [m, n, m, n]
        cols += [m, n, n, m]
        vals += [e.a, e.a, -e.a, -e.a]
        b[m] -= j[i]
        b[n] += j[i]

    _check_grounded_components(dc, active, touched)

    for m, nd in enumerate(dc.nodes):
        if nd.a_m > 0.0 and touched[m]:
            rows.append(m)
            cols.append(m)
            vals.append(nd.a_m)

    v = np.zeros(nn)
    act_idx = np.flatnonzero(touched)
    if act_idx.size:
        pos = -np.ones(nn, dtype=int)
        pos[act_idx] = np.arange(act_idx.size)
        g = sp.csc_matrix((vals, (pos[rows], pos[cols])),
                          shape=(act_idx.size, act_idx.size))
        v[act_idx] = spla.splu(g.tocsc()).solve(b[act_idx])

    current = np.zeros(ne)
    for i, e in enumerate(dc.edges):
        if active[i]:
            current[i] = e.a * (v[e.from_node] - v[e.to_node]) + j[i]

    edge_current = {e.id: current[i] for i, e in enumerate(dc.edges)}
    effective = {tid: effective_gic(net.transformers[tid], dc, edge_current)
                 for tid in dc.xfmr_edges}
    return GicState(
        node_voltage={nd.id: v[i] for i, nd in enumerate(dc.nodes)},
        edge_current=edge_current,
        effective=effective,
        injections={e.id: j[i] for i, e in enumerate(dc.edges)})


def _check_grounded_components(dc: DcNetwork, active: np.ndarray,
                               touched: np.ndarray) -> None:
    parent = list(range(len(dc.nodes)))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for i, e in enumerate(dc.edges):
        if active[i]:
            parent[find(e.from_node)] = find(e.to_node)
    grounded_roots = {find(i) for i, nd in enumerate(dc.nodes)
                      if nd.a_m > 0.0 and touched[i]}
    bad: dict[int, list[str]] = {}
    for i, nd in enumerate(dc.nodes):
        if touched[i] and find(i) not in grounded_roots:
            bad.setdefault(find(i), []).append(nd.id)
    if bad:
        islands = "; ".join(", ".join(members) for members in bad.values())
        raise NetworkError(f"energized DC island with no ground: {islands}")


def kcl_residual(dc: DcNetwork, state: GicState) -> float:
    """Max nodal current imbalance, amps; ~0 for a valid solution."""
    nn = len(dc.nodes)
    resid = np.zeros(nn)
    for e in dc.edges:
        # current leaving from_node through the branch is a(Vm-Vn)+J = flow
        flow = state.edge_current[e.id]
        resid[e.from_node] -= flow
        resid[e.to_node] += flow
    for i, nd in enumerate(dc.nodes):
        resid[i] -= nd.a_m * state.node_voltage[nd.id]
    return float(np.abs(resid).max()) if nn else 0.0
