"""Exact nonconvex constraint evaluation and feasibility recovery.

With the switching state frozen, the exact model is a smooth nonlinear
system: trig power flows, quadratic current definitions, the linear GIC
circuit and the saturation couplings.  `evaluate_residuals` reports the
violation of every constraint family at a point; `recover_feasible` searches
for a feasible point whose cost stays within a small fraction of the solver's
lower bound, via an augmented-Lagrangian outer loop with box-constrained
quasi-Newton inner solves.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np
from scipy.optimize import minimize

from . import kernels
from .config import DEFAULTS, Config
from .dc import DcNetwork, GmdScenario, WindingRole, build_dc_network, emf_injections, solve_gic
from .kernels import DC_SCALE, PackedProblem
from .net import BranchKind, Network, XfmrKind
from .relax import i_base_amps
from .thermal import attributed_bus, qloss_scale

FAMILY_NAMES = ("balance", "flow", "loss", "gen_transport", "current_def",
                "current_mag", "gic", "limits", "thermal", "q_loss")


@dataclass
class PackMaps:
    bus_ids: list[str]
    gen_ids: list[str]
    br_ids: list[str]
    dcnode_ids: list[str]
    tau_edge_ids: list[str]  # DC edge carrying the effective GIC
    tau_xfmr_ids: list[str]
    dc: DcNetwork | None


def pack(net: Network, scen: GmdScenario | None, z: Mapping[str, float],
         config: Config = DEFAULTS) -> tuple[PackedProblem, PackMaps]:
    bus_ids = list(net.buses)
    bidx = {b: i for i, b in enumerate(bus_ids)}
    br_ids = list(net.branches)
    gen_ids = list(net.generators)
    nb, ne, ng = len(bus_ids), len(br_ids), len(gen_ids)

    fr = np.zeros(ne, dtype=np.int64)
    to = np.zeros(ne, dtype=np.int64)
    isgen = np.zeros(ne, dtype=np.int8)
    ge = np.zeros(ne)
    be = np.zeros(ne)
    bc = np.zeros(ne)
    rr = np.zeros(ne)
    xx = np.zeros(ne)
    s2 = np.zeros(ne)
    zarr = np.ones(ne)
    for e, brid in enumerate(br_ids):
        br = net.branches[brid]
        fr[e], to[e] = bidx[br.from_bus], bidx[br.to_bus]
        s2[e] = br.s * br.s
        zarr[e] = float(round(z.get(brid, 1.0)))
        if br.kind is BranchKind.GEN_EDGE:
            isgen[e] = 1
        else:
            den = br.r ** 2 + br.x ** 2
            ge[e] = br.r / den
            be[e] = -br.x / den
            bc[e] = br.b_c
            rr[e], xx[e] = br.r, br.x

    gsh = np.array([net.buses[b].g for b in bus_ids])
    bsh = np.array([net.buses[b].b for b in bus_ids])
    dp = np.array([net.buses[b].d_p for b in bus_ids])
    dq = np.array([net.buses[b].d_q for b in bus_ids])
    sgnq = np.where(dq >= 0.0, 1.0, -1.0)

    gbus = np.array([bidx[net.generators[g].bus] for g in gen_ids], dtype=np.int64)
    base = net.mva_base
    c1pu = np.array([net.generators[g].c1 * base for g in gen_ids])
    c2pu = np.array([net.generators[g].c2 * base * base for g in gen_ids])
    obj_const = 0.0
    for g in gen_ids:
        gen = net.generators[g]
        edge = net.gen_edge_of(gen)
        obj_const += gen.c0 * float(round(z.get(edge.id, 1.0)))

    if scen is not None:
        dc = build_dc_network(net)
        nd, nde = len(dc.nodes), len(dc.edges)
        node_am = np.array([n.a_m for n in dc.nodes])
        dm = np.array([e.from_node for e in dc.edges], dtype=np.int64)
        dn = np.array([e.to_node for e in dc.edges], dtype=np.int64)
        da = np.array([e.a for e in dc.edges])
        dj = emf_injections(dc, scen) / DC_SCALE
        dz = np.array([float(round(z.get(e.ac_branch, 1.0))) for e in dc.edges])
        tau_edge_ids, tau_xfmr_ids = [], []
        tau_de, tau_ac, tau_k, tau_bus = [], [], [], []
        tau_e0, tau_e1, tau_e2 = [], [], []
        bridx = {b: i for i, b in enumerate(br_ids)}
        qs = qloss_scale(net, config)
        for tid in net.transformers:
            tr = net.transformers[tid]
            roles = dc.xfmr_edges[tid]
            role = (WindingRole.HV_PRIMARY if tr.kind is XfmrKind.GSU
                    else WindingRole.COMMON)
            de = roles[role]
            tau_edge_ids.append(dc.edges[de].id)
            tau_xfmr_ids.append(tid)
            tau_de.append(de)
            tau_ac.append(bridx[dc.edges[de].ac_branch])
            tau_k.append(tr.k * qs * DC_SCALE)
            tau_bus.append(bidx[attributed_bus(tr)])
            if tr.eta0 is None:
                tau_e0.append(np.nan)
                tau_e1.append(0.0)
                tau_e2.append(0.0)
            else:
                tau_e0.append(tr.eta0)
                tau_e1.append(tr.eta1 * DC_SCALE)
                tau_e2.append(tr.eta2 * DC_SCALE * DC_SCALE)
        nt = len(tau_de)
        tau_de = np.array(tau_de, dtype=np.int64)
        tau_ac = np.array(tau_ac, dtype=np.int64)
        tau_k = np.array(tau_k)
        tau_bus = np.array(tau_bus, dtype=np.int64)
        tau_e0, tau_e1, tau_e2 = map(np.array, (tau_e0, tau_e1, tau_e2))
    else:
        dc = None
        nd = nt = 0
        node_am = np.zeros(0)
        dm = dn = np.zeros(0, dtype=np.int64)
        da = dj = dz = np.zeros(0)
        tau_de = tau_ac = tau_bus = np.zeros(0, dtype=np.int64)
        tau_k = tau_e0 = tau_e1 = tau_e2 = np.zeros(0)
        tau_edge_ids, tau_xfmr_ids = [], []

    sizes = [nb, nb, ng, ng, nb, nb, ne, ne, ne, ne, ne, ne, nd, nt, nt, nb]
    off = np.zeros(17, dtype=np.int64)
    off[1:] = np.cumsum(sizes)

    pk = PackedProblem(
        nb=nb, ng=ng, ne=ne, nd=nd, nt=nt, off=off,
        fr=fr, to=to, isgen=isgen, ge=ge, be=be, bc=bc, rr=rr, xx=xx, s2=s2,
        z=zarr, theta_bar=net.theta_bar, theta_max=net.theta_max,
        gsh=gsh, bsh=bsh, dp=dp, dq=dq, sgnq=sgnq,
        gbus=gbus, c1pu=c1pu, c2pu=c2pu, mu_pu=net.mu * base,
        obj_const=obj_const, node_am=node_am, dm=dm, dn=dn, da=da, dj=dj,
        dz=dz, tau_de=tau_de, tau_ac=tau_ac, tau_k=tau_k, tau_bus=tau_bus,
        tau_e0=tau_e0, tau_e1=tau_e1, tau_e2=tau_e2,
        vlo=np.array([net.buses[b].v_lo for b in bus_ids]),
        vhi=np.array([net.buses[b].v_hi for b in bus_ids]))
    kernels.build_families(pk)
    maps = PackMaps(bus_ids, gen_ids, br_ids,
                    [n.id for n in dc.nodes] if dc else [],
                    tau_edge_ids, tau_xfmr_ids, dc)
    return pk, maps


@dataclass
class Point:
    """Full assignment of the exact model's decision symbols."""
    z: dict[str, float]
    v: dict[str, float]
    theta: dict[str, float]
    fp: dict[str, float]
    fq: dict[str, float]
    lp: dict[str, float]
    lq: dict[str, float]
    p_fr: dict[str, float]
    p_to: dict[str, float]
    q_fr: dict[str, float]
    q_to: dict[str, float]
    l: dict[str, float]
    ia: dict[str, float]
    vd: dict[str, float] = field(default_factory=dict)      # volts
    id_amps: dict[str, float] = field(default_factory=dict)  # per tau DC edge
    itd_amps: dict[str, float] = field(default_factory=dict)
    qloss: dict[str, float] = field(default_factory=dict)

    def to_x(self, pk: PackedProblem, maps: PackMaps) -> np.ndarray:
        x = np.zeros(pk.n)
        o = pk.off
        for i, b in enumerate(maps.bus_ids):
            x[o[0] + i] = self.v[b]
            x[o[1] + i] = self.theta[b]
            x[o[4] + i] = self.lp.get(b, 0.0)
            x[o[5] + i] = self.lq.get(b, 0.0)
            x[o[15] + i] = self.qloss.get(b, 0.0)
        for gi, g in enumerate(maps.gen_ids):
            x[o[2] + gi] = self.fp[g]
            x[o[3] + gi] = self.fq[g]
        for e, br in enumerate(maps.br_ids):
            x[o[6] + e] = self.p_fr[br]
            x[o[7] + e] = self.p_to[br]
            x[o[8] + e] = self.q_fr[br]
            x[o[9] + e] = self.q_to[br]
            x[o[10] + e] = self.l[br]
            x[o[11] + e] = self.ia[br]
        for i, nid in enumerate(maps.dcnode_ids):
            x[o[12] + i] = self.vd.get(nid, 0.0) / DC_SCALE
        for t, eid in enumerate(maps.tau_edge_ids):
            x[o[13] + t] = self.id_amps.get(eid, 0.0) / DC_SCALE
            x[o[14] + t] = self.itd_amps.get(eid, 0.0) / DC_SCALE
        return x

    @classmethod
    def from_x(cls, x: np.ndarray, pk: PackedProblem, maps: PackMaps,
               z: Mapping[str, float]) -> "Point":
        o = pk.off
        pt = cls(z=dict(z), v={}, theta={}, fp={}, fq={}, lp={}, lq={},
                 p_fr={}, p_to={}, q_fr={}, q_to={}, l={}, ia={})
        for i, b in enumerate(maps.bus_ids):
            pt.v[b] = float(x[o[0] + i])
            pt.theta[b] = float(x[o[1] + i])
            pt.lp[b] = float(x[o[4] + i])
            pt.lq[b] = float(x[o[5] + i])
            pt.qloss[b] = float(x[o[15] + i])
        for gi, g in enumerate(maps.gen_ids):
            pt.fp[g] = float(x[o[2] + gi])
            pt.fq[g] = float(x[o[3] + gi])
        for e, br in enumerate(maps.br_ids):
            pt.p_fr[br] = float(x[o[6] + e])
            pt.p_to[br] = float(x[o[7] + e])
            pt.q_fr[br] = float(x[o[8] + e])
            pt.q_to[br] = float(x[o[9] + e])
            pt.l[br] = float(x[o[10] + e])
            pt.ia[br] = float(x[o[11] + e])
        for i, nid in enumerate(maps.dcnode_ids):
            pt.vd[nid] = float(x[o[12] + i]) * DC_SCALE
        for t, eid in enumerate(maps.tau_edge_ids):
            pt.id_amps[eid] = float(x[o[13] + t]) * DC_SCALE
            pt.itd_amps[eid] = float(x[o[14] + t]) * DC_SCALE
        return pt


@dataclass(frozen=True)
class ResidualReport:
    """Max |violation| per constraint family, plus the objective value.

    All families are in per-unit terms except `gic`, whose rows are evaluated
    in units of 100 A (`kernels.DC_SCALE`); `overall` is the plain max.
    """
    families: Mapping[str, float]
    overall: float
    objective: float

    def __str__(self):
        rows = "\n".join(f"  {k:14s} {v:.3e}" for k, v in self.families.items())
        return (f"residuals (overall {self.overall:.3e}, "
                f"objective {self.objective:.6g}):\n{rows}")


def _family_maxima(pk: PackedProblem, x: np.ndarray) -> dict[str, float]:
    h = kernels.eq_residuals(x, pk)
    gv = kernels.ineq_residuals(x, pk)
    fams = {name: 0.0 for name in FAMILY_NAMES}
    for j, fam in enumerate(pk.eq_family):
        if fam >= 0:
            name = FAMILY_NAMES[fam]
            fams[name] = max(fams[name], abs(float(h[j])))
    for k, fam in enumerate(pk.ineq_family):
        if fam >= 0:
            name = FAMILY_NAMES[fam]
            fams[name] = max(fams[name], max(0.0, float(gv[k])))
    o = pk.off
    # bound families: voltage (2o), shed bounds, dispatch (2q)-(2r),
    # AC current cap (2n), GIC magnitude cap (2v)
    v = x[o[0]:o[1]]
    fams["limits"] = max(fams["limits"],
                         float(np.max(np.maximum(pk.vlo - v, 0.0), initial=0.0)),
                         float(np.max(np.maximum(v - pk.vhi, 0.0), initial=0.0)))
    return fams


def evaluate_residuals(net: Network, scen: GmdScenario | None, point: Point,
                       config: Config = DEFAULTS) -> ResidualReport:
    """Plug a point into the original nonconvex equations; report violations."""
    pk, maps = pack(net, scen, point.z, config)
    x = point.to_x(pk, maps)
    fams = _family_maxima(pk, x)

    # remaining bound families
    o = pk.off
    bridx = {b: i for i, b in enumerate(maps.br_ids)}
    for e, brid in enumerate(maps.br_ids):
        br = net.branches[brid]
        ibar = net.branch_ibar(br)
        ia = x[o[11] + e]
        fams["limits"] = max(fams["limits"], ia - pk.z[e] * ibar, -ia)
    for gi, gid in enumerate(maps.gen_ids):
        g = net.generators[gid]
        ze = pk.z[bridx[net.gen_edge_of(g).id]]
        fams["limits"] = max(fams["limits"],
                             x[o[2] + gi] - ze * g.gp_hi, ze * g.gp_lo - x[o[2] + gi],
                             x[o[3] + gi] - ze * g.gq_hi, ze * g.gq_lo - x[o[3] + gi])
    for i, b in enumerate(maps.bus_ids):
        bus = net.buses[b]
        lp, lq = x[o[4] + i], x[o[5] + i]
        fams["limits"] = max(fams["limits"], lp - max(bus.d_p, 0.0), -lp,
                             lq - max(0.0, bus.d_q), min(0.0, bus.d_q) - lq)
    if pk.nt:
        cap = _gic_caps(net, maps, config) / DC_SCALE
        itd = x[o[14]:o[15]]
        fams["gic"] = max(fams["gic"], float(np.max(itd - cap, initial=0.0)),
                          float(np.max(-itd, initial=0.0)))

    obj, _ = kernels.objective(x, pk)
    overall = max(fams.values())
    return ResidualReport(families=fams, overall=overall, objective=obj)


def _gic_caps(net: Network, maps: PackMaps, config: Config) -> np.ndarray:
    max_ibar = max(net.branch_ibar(br) for br in net.branches.values())
    caps = []
    for tid in maps.tau_xfmr_ids:
        kv = net.buses[net.transformers[tid].high_bus].base_kv
        caps.append(config.gic_cap_factor * max_ibar
                    * i_base_amps(kv, net.mva_base, config))
    return np.array(caps)


@dataclass
class RecoveryResult:
    success: bool
    point: Point | None
    objective: float
    gap: float
    report: ResidualReport | None
    failure: str | None  # None | "residual" | "objective_cap"
    starts_tried: int


def _recover_bounds(net: Network, pk: PackedProblem, maps: PackMaps,
                    config: Config) -> tuple[np.ndarray, np.ndarray]:
    o = pk.off
    lb = np.full(pk.n, -np.inf)
    ub = np.full(pk.n, np.inf)
    lb[o[0]:o[1]], ub[o[0]:o[1]] = pk.vlo, pk.vhi
    lb[o[1]:o[2]], ub[o[1]:o[2]] = -pk.theta_max, pk.theta_max
    bridx = {b: i for i, b in enumerate(maps.br_ids)}
    for gi, gid in enumerate(maps.gen_ids):
        g = net.generators[gid]
        ze = pk.z[bridx[net.gen_edge_of(g).id]]
        lb[o[2] + gi], ub[o[2] + gi] = ze * g.gp_lo, ze * g.gp_hi
        lb[o[3] + gi], ub[o[3] + gi] = ze * g.gq_lo, ze * g.gq_hi
    lb[o[4]:o[5]] = 0.0
    ub[o[4]:o[5]] = np.maximum(pk.dp, 0.0)
    lb[o[5]:o[6]] = np.minimum(0.0, pk.dq)
    ub[o[5]:o[6]] = np.maximum(0.0, pk.dq)
    smax = np.sqrt(pk.s2)
    for blk in range(4):  # pf pt qf qt
        lb[o[6 + blk]:o[7 + blk]] = -1.5 * smax * pk.z
        ub[o[6 + blk]:o[7 + blk]] = 1.5 * smax * pk.z
    ibar = np.array([net.branch_ibar(net.branches[b]) for b in maps.br_ids])
    lb[o[10]:o[11]] = 0.0
    ub[o[10]:o[11]] = (1.2 * ibar) ** 2 * pk.z
    lb[o[11]:o[12]] = 0.0
    ub[o[11]:o[12]] = ibar * pk.z
    if pk.nt:
        caps = _gic_caps(net, maps, config) / DC_SCALE
        tau_z = pk.dz[pk.tau_de]
        lb[o[13]:o[14]] = -10.0 * caps * tau_z
        ub[o[13]:o[14]] = 10.0 * caps * tau_z
        lb[o[14]:o[15]] = 0.0
        ub[o[14]:o[15]] = caps * tau_z
    lb[o[15]:o[16]] = 0.0
    attr = np.zeros(pk.nb, dtype=bool)
    if pk.nt:
        attr[pk.tau_bus] = True
    ub[o[15]:o[16]] = np.where(attr, np.inf, 0.0)
    return lb, ub


def _flat_start(net: Network, pk: PackedProblem, maps: PackMaps,
                scen: GmdScenario | None, z: Mapping[str, float],
                lb: np.ndarray, ub: np.ndarray) -> np.ndarray:
    o = pk.off
    x = np.clip(np.zeros(pk.n), lb, ub)
    x[o[0]:o[1]] = np.clip(1.0, lb[o[0]:o[1]], ub[o[0]:o[1]])
    x[o[2]:o[3]] = 0.5 * (lb[o[2]:o[3]] + ub[o[2]:o[3]])
    _seed_dc(net, pk, maps, scen, z, x)
    return x


def _seed_dc(net, pk, maps, scen, z, x) -> None:
    """Overwrite the DC block with the exact fixed-topology GIC solution."""
    if scen is None or maps.dc is None:
        return
    o = pk.off
    state = solve_gic(net, maps.dc, dict(z), scen)
    for i, nid in enumerate(maps.dcnode_ids):
        x[o[12] + i] = state.node_voltage[nid] / DC_SCALE
    for t, eid in enumerate(maps.tau_edge_ids):
        cur = state.edge_current[eid]
        x[o[13] + t] = cur / DC_SCALE
        x[o[14] + t] = abs(cur) / DC_SCALE
    # consistent reactive losses at the seeded voltages
    ql = np.zeros(pk.nb)
    for t in range(pk.nt):
        i = pk.tau_bus[t]
        ql[i] += pk.tau_k[t] * x[o[0] + i] * x[o[14] + t]
    x[o[15]:o[16]] = ql


def recover_feasible(net: Network, scen: GmdScenario | None,
                     z_fixed: Mapping[str, float], lower_bound: float,
                     delta: float | None = None,
                     init: Point | None = None,
                     config: Config = DEFAULTS) -> RecoveryResult:
    """Search for an exact-model feasible point with cost within (1+delta) of
    the lower bound, starting from the relaxation point."""
    delta = config.recover_delta if delta is None else delta
    pk, maps = pack(net, scen, z_fixed, config)
    lb, ub = _recover_bounds(net, pk, maps, config)
    cap = lower_bound * (1.0 + delta) if math.isfinite(lower_bound) else math.inf
    oscale = max(1.0, abs(lower_bound))
    tol = config.recover_feas_tol

    starts: list[np.ndarray] = []
    if init is not None:
        x0 = np.clip(init.to_x(pk, maps), lb, ub)
        starts.append(x0)
    starts.append(_flat_start(net, pk, maps, scen, z_fixed, lb, ub))
    if init is not None and config.recover_starts > 2:
        rng = np.random.default_rng(20260401)
        x2 = starts[0] * (1.0 + 0.02 * rng.standard_normal(pk.n))
        starts.append(np.clip(x2, lb, ub))

    best_viol = math.inf
    best_x = None
    physics_ok_cap_bad = False
    bounds = list(zip(lb, ub))

    for si, x0 in enumerate(starts[:config.recover_starts]):
        x = x0.copy()
        lam = np.zeros(pk.m_eq)
        mu = np.zeros(pk.m_ineq)
        rho = 10.0
        prev = math.inf
        for _ in range(config.recover_max_outer):
            res = minimize(
                kernels.al_value_grad, x, args=(lam, mu, rho, pk, cap, oscale),
                jac=True, method="L-BFGS-B", bounds=bounds,
                options={"maxiter": 600, "maxfun": 2000, "ftol": 1e-16,
                         "gtol": 1e-12})
            x = res.x
            h = kernels.eq_residuals(x, pk)
            g = kernels.ineq_residuals(x, pk, cap, oscale)
            viol = max(float(np.max(np.abs(h), initial=0.0)),
                       float(np.max(g, initial=0.0)))
            if viol <= tol:
                obj, _ = kernels.objective(x, pk)
                gap = 0.0 if abs(obj) < 1e-12 else max(0.0, (obj - lower_bound) / obj)
                point = Point.from_x(x, pk, maps, z_fixed)
                report = evaluate_residuals(net, scen, point, config)
                return RecoveryResult(True, point, obj, gap, report, None, si + 1)
            lam = lam + rho * h
            mu = np.maximum(0.0, mu + rho * g)
            if viol > 0.5 * prev:
                rho = min(rho * 4.0, 1e9)
            prev = viol
        # start failed: classify
        gv = kernels.ineq_residuals(x, pk, cap, oscale)
        phys = max(float(np.max(np.abs(kernels.eq_residuals(x, pk)), initial=0.0)),
                   float(np.max(gv[:-1], initial=0.0)))
        if phys <= 10 * tol and gv[-1] > tol:
            physics_ok_cap_bad = True
        if phys < best_viol:
            best_viol, best_x = phys, x.copy()

    failure = "objective_cap" if physics_ok_cap_bad else "residual"
    point = (Point.from_x(best_x, pk, maps, z_fixed)
             if best_x is not None else None)
    report = (evaluate_residuals(net, scen, point, config)
              if point is not None else None)
    obj = report.objective if report else math.inf
    return RecoveryResult(False, point, obj, math.inf, report, failure,
                          len(starts[:config.recover_starts]))


def solution_to_point(sol) -> Point:
    """Translate a relaxation Solution into an exact-model Point (init only)."""
    model = sol.model
    net = model.net
    val = sol.value
    z = sol.z
    pt = Point(z=z, v={}, theta={}, fp={}, fq={}, lp={}, lq={},
               p_fr={}, p_to={}, q_fr={}, q_to={}, l={}, ia={})
    for b in net.buses:
        pt.v[b] = val("V", b)
        pt.theta[b] = val("theta", b)
        pt.lp[b] = val("lp", b)
        pt.lq[b] = val("lq", b)
        pt.qloss[b] = val("Qloss", b) if ("Qloss", b) in model.var_index else 0.0
    for g in net.generators:
        pt.fp[g] = val("fp", g)
        pt.fq[g] = val("fq", g)
    for br in net.branches:
        pt.p_fr[br] = val("p_fr", br)
        pt.p_to[br] = val("p_to", br)
        pt.q_fr[br] = val("q_fr", br)
        pt.q_to[br] = val("q_to", br)
        pt.l[br] = val("l", br)
        pt.ia[br] = val("Ia", br)
    if model.dc is not None:
        for nd in model.dc.nodes:
            pt.vd[nd.id] = val("Vd", nd.id)
        for eid_key in [e.id for e in model.dc.edges]:
            if ("Id", eid_key) in model.var_index:
                pt.id_amps[eid_key] = val("Id", eid_key)
                pt.itd_amps[eid_key] = val("Itd", eid_key)
    return pt
