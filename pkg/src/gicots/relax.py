"""Mixed-integer convex relaxation of GIC-aware AC transmission switching.

The nonconvex switching model is relaxed into linear rows plus second-order
cones: squared voltages and trig terms get lifted variables with envelope
rows, bilinear products get McCormick envelopes (exact whenever one factor is
the binary switch), and line-flow/current definitions become rotated cones.
The emitted model is solver-independent and deterministic: identical networks
produce identical row ordering and coefficients.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Mapping, Sequence

import numpy as np

from .config import DEFAULTS, Config
from .dc import DcNetwork, GmdScenario, WindingRole, build_dc_network, emf_injections, solve_gic
from .net import Branch, BranchKind, Network, XfmrKind
from .thermal import attributed_bus, qloss_scale


class VarKind(Enum):
    CONTINUOUS = "CONTINUOUS"
    BINARY = "BINARY"


@dataclass(frozen=True)
class VarRef:
    idx: int
    name: str
    kind: VarKind
    lb: float
    ub: float
    tag: str
    key: str


# affine expression: ((idx, coef), ...), constant
LinTerm = tuple[tuple[tuple[int, float], ...], float]


@dataclass(frozen=True)
class LinRow:
    coefs: tuple[tuple[int, float], ...]
    lo: float
    hi: float
    name: str


@dataclass(frozen=True)
class SocRow:
    """||terms|| <= rhs with affine terms; rotated cones arrive pre-converted."""
    terms: tuple[LinTerm, ...]
    rhs: LinTerm
    name: str


@dataclass(frozen=True)
class QuadObjTerm:
    idx: int
    coef: float  # adds coef * x^2 to the objective


@dataclass(frozen=True)
class CaseSpec:
    case: str  # C1 | C2 | C3 | C4
    scenario: GmdScenario | None = None
    z_fixed: Mapping[str, float] | None = None

    def __post_init__(self):
        if self.case not in ("C1", "C2", "C3", "C4"):
            raise ValueError(f"unknown case {self.case!r}")
        if self.case != "C1" and self.scenario is None:
            raise ValueError(f"case {self.case} needs a GMD scenario")
        if self.case == "C3" and self.z_fixed is None:
            raise ValueError("case C3 needs the fixed switching vector")


@dataclass(frozen=True)
class RelaxedModel:
    variables: tuple[VarRef, ...]
    lin_rows: tuple[LinRow, ...]
    soc_rows: tuple[SocRow, ...]
    obj: tuple[tuple[int, float], ...]
    obj_const: float
    quad_obj: tuple[QuadObjTerm, ...]
    binaries: tuple[int, ...]
    var_index: Mapping[tuple[str, str], int]
    spec: CaseSpec
    net: Network
    dc: DcNetwork | None
    dc_injections: tuple[float, ...]  # per DC edge at the case scenario

    @property
    def n(self) -> int:
        return len(self.variables)

    @property
    def free_binaries(self) -> tuple[int, ...]:
        return tuple(i for i in self.binaries
                     if self.variables[i].lb < self.variables[i].ub)

    def var(self, tag: str, key: str) -> VarRef:
        return self.variables[self.var_index[(tag, key)]]

    def value(self, x: np.ndarray, tag: str, key: str) -> float:
        return float(x[self.var_index[(tag, key)]])


class ModelBuilder:
    """Accumulates variables and rows; emits an immutable RelaxedModel."""

    def __init__(self):
        self.variables: list[VarRef] = []
        self.lin_rows: list[LinRow] = []
        self.soc_rows: list[SocRow] = []
        self.obj: dict[int, float] = {}
        self.obj_const = 0.0
        self.quad_obj: list[QuadObjTerm] = []
        self.binaries: list[int] = []
        self.var_index: dict[tuple[str, str], int] = {}

    # -- variables ---------------------------------------------------------
    def add_var(self, tag: str, key: str, lb: float, ub: float,
                kind: VarKind = VarKind.CONTINUOUS) -> VarRef:
        if not (math.isfinite(lb) and math.isfinite(ub)):
            raise ValueError(f"variable {tag}[{key}] needs finite bounds")
        if lb > ub + 1e-12:
            raise ValueError(f"variable {tag}[{key}] has empty domain [{lb}, {ub}]")
        ref = VarRef(len(self.variables), f"{tag}[{key}]", kind, lb, max(lb, ub), tag, key)
        self.variables.append(ref)
        self.var_index[(tag, key)] = ref.idx
        if kind is VarKind.BINARY:
            self.binaries.append(ref.idx)
        return ref

    def add_binary(self, tag: str, key: str, fixed: float | None = None) -> VarRef:
        if fixed is None:
            return self.add_var(tag, key, 0.0, 1.0, VarKind.BINARY)
        if fixed not in (0.0, 1.0):
            raise ValueError(f"binary {tag}[{key}] fixed to non-binary {fixed}")
        return self.add_var(tag, key, fixed, fixed, VarKind.BINARY)

    # -- rows ----------------------------------------------------------------
    def add_lin(self, coefs: Sequence[tuple[VarRef, float]], lo: float, hi: float,
                name: str) -> None:
        self.lin_rows.append(LinRow(tuple((v.idx, c) for v, c in coefs if c != 0.0),
                                    lo, hi, name))

    def add_eq(self, coefs, rhs: float, name: str) -> None:
        self.add_lin(coefs, rhs, rhs, name)

    def add_le(self, coefs, hi: float, name: str) -> None:
        self.add_lin(coefs, -math.inf, hi, name)

    @staticmethod
    def term(coefs: Sequence[tuple[VarRef, float]], const: float = 0.0) -> LinTerm:
        return (tuple((v.idx, c) for v, c in coefs if c != 0.0), const)

    def add_soc(self, terms: Sequence[LinTerm], rhs: LinTerm, name: str) -> None:
        self.soc_rows.append(SocRow(tuple(terms), rhs, name))

    def add_quad_le(self, sq_terms: Sequence[LinTerm], s: LinTerm, t: LinTerm,
                    name: str) -> None:
        """Sum of squared affine terms <= s * t, both sides nonnegative.

        Emitted in norm form ||(u, (s-t)/2)|| <= (s+t)/2.
        """
        sc, s0 = s
        tc, t0 = t
        half_diff = self._combine(sc, s0, tc, t0, 0.5, -0.5)
        half_sum = self._combine(sc, s0, tc, t0, 0.5, 0.5)
        self.add_soc(list(sq_terms) + [half_diff], half_sum, name)

    @staticmethod
    def _combine(ac, a0, bc, b0, wa, wb) -> LinTerm:
        out: dict[int, float] = {}
        for i, c in ac:
            out[i] = out.get(i, 0.0) + wa * c
        for i, c in bc:
            out[i] = out.get(i, 0.0) + wb * c
        return (tuple((i, c) for i, c in out.items() if c != 0.0), wa * a0 + wb * b0)

    # -- relaxation primitives ------------------------------------------------
    def mccormick(self, x: VarRef, y: VarRef, tag: str, key: str) -> VarRef:
        """Lift x*y over its box; exact when either factor is binary-valued."""
        xl, xu, yl, yu = x.lb, x.ub, y.lb, y.ub
        corners = (xl * yl, xl * yu, xu * yl, xu * yu)
        w = self.add_var(tag, key, min(corners), max(corners))
        self.add_lin([(w, 1.0), (x, -yl), (y, -xl)], -xl * yl, math.inf, f"mc_ll:{w.name}")
        self.add_lin([(w, 1.0), (x, -yu), (y, -xu)], -xu * yu, math.inf, f"mc_uu:{w.name}")
        self.add_lin([(w, 1.0), (x, -yu), (y, -xl)], -math.inf, -xl * yu, f"mc_lu:{w.name}")
        self.add_lin([(w, 1.0), (x, -yl), (y, -xu)], -math.inf, -xu * yl, f"mc_ul:{w.name}")
        return w

    def soc_square(self, x: VarRef, tag: str, key: str) -> VarRef:
        """Lift x^2: cone xhat >= x^2 plus the secant upper envelope."""
        xl, xu = x.lb, x.ub
        lb = 0.0 if xl <= 0.0 <= xu else min(xl * xl, xu * xu)
        xhat = self.add_var(tag, key, lb, max(xl * xl, xu * xu))
        self.add_quad_le([self.term([(x, 1.0)])], self.term([(xhat, 1.0)]),
                         self.term([], 1.0), f"sq:{xhat.name}")
        self.add_lin([(xhat, 1.0), (x, -(xl + xu))], -math.inf, -xl * xu,
                     f"secant:{xhat.name}")
        return xhat

    def onoff_cos(self, th: VarRef, z: VarRef, theta_bar: float, theta_max: float,
                  key: str) -> VarRef:
        """Disjunctive quadratic envelope of z*cos(theta); 0 when switched off."""
        cs = self.add_var("cs", key, 0.0, 1.0)
        cq = (1.0 - math.cos(theta_bar)) / theta_bar ** 2
        # cq*th^2 <= z - cs + cq*theta_max^2*(1-z)
        rhs = self.term([(z, 1.0 - cq * theta_max ** 2), (cs, -1.0)],
                        cq * theta_max ** 2)
        self.add_quad_le([self.term([(th, math.sqrt(cq))])], rhs,
                         self.term([], 1.0), f"cos_env:{key}")
        self.add_lin([(cs, 1.0), (z, -1.0)], -math.inf, 0.0, f"cos_ub:{key}")
        self.add_lin([(cs, 1.0), (z, -math.cos(theta_bar))], 0.0, math.inf,
                     f"cos_lb:{key}")
        return cs

    def onoff_sin(self, th: VarRef, z: VarRef, theta_bar: float, theta_max: float,
                  key: str) -> VarRef:
        """Disjunctive polyhedral envelope of z*sin(theta); 0 when switched off."""
        sb = math.sin(theta_bar)
        sn = self.add_var("s", key, -sb, sb)
        ch = math.cos(theta_bar / 2.0)
        bend = math.sin(theta_bar / 2.0) - (theta_bar / 2.0) * ch
        slack = ch * theta_max + 1.0
        # sn <= ch*th + z*bend + (1-z)*slack
        self.add_lin([(sn, 1.0), (th, -ch), (z, slack - bend)], -math.inf, slack,
                     f"sin_ub:{key}")
        # sn >= ch*th - z*bend - (1-z)*slack
        self.add_lin([(sn, 1.0), (th, -ch), (z, bend - slack)], -slack, math.inf,
                     f"sin_lb:{key}")
        self.add_lin([(sn, 1.0), (z, -sb)], -math.inf, 0.0, f"sin_cap_u:{key}")
        self.add_lin([(sn, 1.0), (z, sb)], 0.0, math.inf, f"sin_cap_l:{key}")
        return sn

    # -- objective -------------------------------------------------------------
    def add_obj(self, v: VarRef, coef: float) -> None:
        if coef != 0.0:
            self.obj[v.idx] = self.obj.get(v.idx, 0.0) + coef

    def finish(self, spec: CaseSpec, net: Network, dc: DcNetwork | None,
               dc_injections: Sequence[float]) -> RelaxedModel:
        return RelaxedModel(
            variables=tuple(self.variables),
            lin_rows=tuple(self.lin_rows),
            soc_rows=tuple(self.soc_rows),
            obj=tuple(sorted(self.obj.items())),
            obj_const=self.obj_const,
            quad_obj=tuple(self.quad_obj),
            binaries=tuple(self.binaries),
            var_index=dict(self.var_index),
            spec=spec, net=net, dc=dc, dc_injections=tuple(dc_injections))


def i_base_amps(kv: float, mva_base: float, config: Config = DEFAULTS) -> float:
    """Amps corresponding to 1 pu AC current at a voltage level (3-phase total)."""
    return config.gic_amps_per_pu_phases * mva_base * 1e6 / (math.sqrt(3) * kv * 1e3)


def dc_voltage_bound(net: Network, dc: DcNetwork, scen: GmdScenario,
                     config: Config = DEFAULTS) -> float:
    """Box half-width for DC nodal voltages: scaled all-on solve."""
    state = solve_gic(net, dc, None, scen)
    vmax = max((abs(v) for v in state.node_voltage.values()), default=0.0)
    return max(config.vd_bound_min, config.vd_bound_factor * vmax)


def build_relaxation(net: Network, spec: CaseSpec,
                     config: Config = DEFAULTS) -> RelaxedModel:
    """Assemble the full relaxed switching model for one case and scenario."""
    mb = ModelBuilder()
    base = net.mva_base
    tb, tm = net.theta_bar, net.theta_max
    mu_pu = net.mu * base

    with_gic = spec.case != "C1"
    dc = build_dc_network(net) if with_gic else None
    scen = spec.scenario

    gen_edge = {}
    for g in net.generators.values():
        gen_edge[g.id] = net.gen_edge_of(g)

    # -- switching variables ------------------------------------------------
    zvar: dict[str, VarRef] = {}
    for br in net.branches.values():
        if spec.case == "C4" or not br.switchable:
            fixed = 1.0
        elif spec.case == "C3":
            if br.id not in spec.z_fixed:
                raise ValueError(f"case C3: no fixed switch value for branch {br.id}")
            fixed = float(round(spec.z_fixed[br.id]))
        else:
            fixed = None
        zvar[br.id] = mb.add_binary("z", br.id, fixed)

    # -- bus variables ----------------------------------------------------------
    vvar, thvar, vhat = {}, {}, {}
    lpvar, lqvar, sgnq = {}, {}, {}
    for bus in net.buses.values():
        v = mb.add_var("V", bus.id, bus.v_lo, bus.v_hi)
        vvar[bus.id] = v
        thvar[bus.id] = mb.add_var("theta", bus.id, -tm, tm)
        vhat[bus.id] = mb.soc_square(v, "vhat", bus.id)
        lpvar[bus.id] = mb.add_var("lp", bus.id, 0.0, max(bus.d_p, 0.0))
        sgnq[bus.id] = 1.0 if bus.d_q >= 0.0 else -1.0
        lqvar[bus.id] = mb.add_var("lq", bus.id, min(0.0, bus.d_q), max(0.0, bus.d_q))
        mb.add_obj(lpvar[bus.id], mu_pu)
        mb.add_obj(lqvar[bus.id], mu_pu * sgnq[bus.id])

    # -- branch variables and physics ---------------------------------------
    flow_at: dict[str, list[tuple[VarRef, float]]] = {b: [] for b in net.buses}
    qflow_at: dict[str, list[tuple[VarRef, float]]] = {b: [] for b in net.buses}
    pvar, qvar, lvar, iavar = {}, {}, {}, {}

    for br in net.branches.values():
        z = zvar[br.id]
        ibar = net.branch_ibar(br)
        smax = br.s
        pf = mb.add_var("p_fr", br.id, -smax, smax)
        pt = mb.add_var("p_to", br.id, -smax, smax)
        qf = mb.add_var("q_fr", br.id, -smax, smax)
        qt = mb.add_var("q_to", br.id, -smax, smax)
        le = mb.add_var("l", br.id, 0.0, ibar * ibar)
        ia = mb.add_var("Ia", br.id, 0.0, ibar)
        pvar[br.id] = (pf, pt)
        qvar[br.id] = (qf, qt)
        lvar[br.id] = le
        iavar[br.id] = ia
        flow_at[br.from_bus].append((pf, 1.0))
        flow_at[br.to_bus].append((pt, 1.0))
        qflow_at[br.from_bus].append((qf, 1.0))
        qflow_at[br.to_bus].append((qt, 1.0))

        vi, vj = vvar[br.from_bus], vvar[br.to_bus]
        vhi, vhj = vhat[br.from_bus], vhat[br.to_bus]

        if br.kind is BranchKind.GEN_EDGE:
            mb.add_eq([(pf, 1.0), (pt, 1.0)], 0.0, f"gen_p:{br.id}")
            mb.add_eq([(qf, 1.0), (qt, 1.0)], 0.0, f"gen_q:{br.id}")
        else:
            ge = br.r / (br.r ** 2 + br.x ** 2)
            be = -br.x / (br.r ** 2 + br.x ** 2)
            bc = br.b_c

            th = mb.add_var("thij", br.id, -tm, tm)
            mb.add_eq([(th, 1.0), (thvar[br.from_bus], -1.0), (thvar[br.to_bus], 1.0)],
                      0.0, f"thdef:{br.id}")
            # |theta_ij| <= z*theta_bar + (1-z)*theta_max
            mb.add_le([(th, 1.0), (z, tm - tb)], tm, f"ang_u:{br.id}")
            mb.add_le([(th, -1.0), (z, tm - tb)], tm, f"ang_l:{br.id}")

            cs = mb.onoff_cos(th, z, tb, tm, br.id)
            sn = mb.onoff_sin(th, z, tb, tm, br.id)
            w = mb.mccormick(vi, vj, "w", br.id)
            zvi = mb.mccormick(z, vhi, "zv_fr", br.id)
            zvj = mb.mccormick(z, vhj, "zv_to", br.id)
            wc = mb.mccormick(w, cs, "wc", br.id)
            ws = mb.mccormick(w, sn, "ws", br.id)

            mb.add_eq([(pf, 1.0), (zvi, -ge), (wc, ge), (ws, be)], 0.0, f"pij:{br.id}")
            mb.add_eq([(qf, 1.0), (zvi, be + bc / 2.0), (wc, -be), (ws, ge)], 0.0,
                      f"qij:{br.id}")
            mb.add_eq([(pt, 1.0), (zvj, -ge), (wc, ge), (ws, -be)], 0.0, f"pji:{br.id}")
            mb.add_eq([(qt, 1.0), (zvj, be + bc / 2.0), (wc, -be), (ws, -ge)], 0.0,
                      f"qji:{br.id}")

            zl = mb.mccormick(z, le, "zl", br.id)
            zq = mb.mccormick(z, qf, "zq", br.id)
            # p loss: pf+pt = r*(zl + bc*zq + (bc/2)^2 * z vhat_i)
            mb.add_eq([(pf, 1.0), (pt, 1.0), (zl, -br.r), (zq, -br.r * bc),
                       (zvi, -br.r * (bc / 2.0) ** 2)], 0.0, f"ploss:{br.id}")
            mb.add_eq([(qf, 1.0), (qt, 1.0), (zl, -br.x), (zq, -br.x * bc),
                       (zvi, -br.x * (bc / 2.0) ** 2 + bc / 2.0), (zvj, bc / 2.0)],
                      0.0, f"qloss_row:{br.id}")

        # rotated cone pf^2+qf^2 <= l * vhat_i and current envelopes
        mb.add_quad_le([mb.term([(pf, 1.0)]), mb.term([(qf, 1.0)])],
                       mb.term([(le, 1.0)]), mb.term([(vhat[br.from_bus], 1.0)]),
                       f"cur_def:{br.id}")
        mb.add_quad_le([mb.term([(ia, 1.0)])], mb.term([(le, 1.0)]),
                       mb.term([], 1.0), f"cur_sq:{br.id}")
        mb.add_le([(le, 1.0), (ia, -ibar)], 0.0, f"cur_sec:{br.id}")
        # thermal capacity both directions: p^2+q^2 <= z*s^2
        mb.add_quad_le([mb.term([(pf, 1.0)]), mb.term([(qf, 1.0)])],
                       mb.term([(z, smax * smax)]), mb.term([], 1.0),
                       f"cap_fr:{br.id}")
        mb.add_quad_le([mb.term([(pt, 1.0)]), mb.term([(qt, 1.0)])],
                       mb.term([(z, smax * smax)]), mb.term([], 1.0),
                       f"cap_to:{br.id}")
        mb.add_le([(ia, 1.0), (z, -ibar)], 0.0, f"ia_onoff:{br.id}")

    # -- generators ---------------------------------------------------------
    fpvar, fqvar = {}, {}
    for g in net.generators.values():
        e = gen_edge[g.id]
        z = zvar[e.id]
        fp = mb.add_var("fp", g.id, min(g.gp_lo, 0.0), max(g.gp_hi, 0.0))
        fq = mb.add_var("fq", g.id, min(g.gq_lo, 0.0), max(g.gq_hi, 0.0))
        fpvar[g.id], fqvar[g.id] = fp, fq
        mb.add_le([(fp, 1.0), (z, -g.gp_hi)], 0.0, f"gp_u:{g.id}")
        mb.add_le([(fp, -1.0), (z, g.gp_lo)], 0.0, f"gp_l:{g.id}")
        mb.add_le([(fq, 1.0), (z, -g.gq_hi)], 0.0, f"gq_u:{g.id}")
        mb.add_le([(fq, -1.0), (z, g.gq_lo)], 0.0, f"gq_l:{g.id}")
        c1_pu, c2_pu = g.c1 * base, g.c2 * base * base
        mb.add_obj(fp, c1_pu)
        mb.add_obj(z, g.c0)
        if c2_pu > 0.0:
            hi = c2_pu * max(g.gp_lo ** 2, g.gp_hi ** 2)
            tg = mb.add_var("tg", g.id, 0.0, hi)
            mb.add_quad_le([mb.term([(fp, math.sqrt(c2_pu))])],
                           mb.term([(tg, 1.0)]), mb.term([], 1.0), f"cost:{g.id}")
            mb.add_obj(tg, 1.0)

    # -- GIC circuit ------------------------------------------------------------
    qloss_terms: dict[str, list[tuple[VarRef, float]]] = {}
    injections: list[float] = []
    if with_gic:
        vd_box = dc_voltage_bound(net, dc, scen, config)
        injections = list(emf_injections(dc, scen))
        qscale = qloss_scale(net, config)
        max_ibar = max(net.branch_ibar(br) for br in net.branches.values())

        vdvar = {}
        for nd in dc.nodes:
            vdvar[nd.id] = mb.add_var("Vd", nd.id, -vd_box, vd_box)

        zvd = {}
        for i, e in enumerate(dc.edges):
            wd = mb.add_var("wd", e.id, -2.0 * vd_box, 2.0 * vd_box)
            mb.add_eq([(wd, 1.0), (vdvar[dc.nodes[e.from_node].id], -1.0),
                       (vdvar[dc.nodes[e.to_node].id], 1.0)], 0.0, f"wd:{e.id}")
            zvd[e.id] = mb.mccormick(zvar[e.ac_branch], wd, "zvd", e.id)

        # KCL per DC node with switch-scaled injections and flows
        for m, nd in enumerate(dc.nodes):
            coefs: list[tuple[VarRef, float]] = [(vdvar[nd.id], nd.a_m)]
            rhs = 0.0
            for i, e in enumerate(dc.edges):
                sign = 1.0 if e.from_node == m else (-1.0 if e.to_node == m else 0.0)
                if sign == 0.0:
                    continue
                coefs.append((zvd[e.id], sign * e.a))
                if injections[i] != 0.0:
                    coefs.append((zvar[e.ac_branch], sign * injections[i]))
            mb.add_eq(coefs, rhs, f"gic_kcl:{nd.id}")

        # effective GIC on the winding edges driving saturation
        for tid, roles in dc.xfmr_edges.items():
            tr = net.transformers[tid]
            role = WindingRole.HV_PRIMARY if tr.kind is XfmrKind.GSU else WindingRole.COMMON
            e = dc.edges[roles[role]]
            kv = net.buses[tr.high_bus].base_kv
            cap = config.gic_cap_factor * max_ibar * i_base_amps(kv, base, config)
            cap = min(cap, e.a * 2.0 * vd_box)
            idv = mb.add_var("Id", e.id, -cap, cap)
            mb.add_eq([(idv, 1.0), (zvd[e.id], -e.a)], 0.0, f"id_def:{e.id}")
            itd = mb.add_var("Itd", e.id, 0.0, cap)
            mb.add_le([(idv, 1.0), (itd, -1.0)], 0.0, f"id_abs_p:{e.id}")
            mb.add_le([(idv, -1.0), (itd, -1.0)], 0.0, f"id_abs_n:{e.id}")

            ac_br = net.branches[e.ac_branch]
            if tr.eta0 is not None:
                ihat = mb.soc_square(itd, "Ihat", e.id)
                mb.add_le([(iavar[ac_br.id], 1.0), (itd, -tr.eta1), (ihat, -tr.eta2)],
                          tr.eta0, f"thermal:{tid}")
            abus = attributed_bus(tr)
            vi_hat = mb.mccormick(vvar[abus], itd, "VI", e.id)
            qloss_terms.setdefault(abus, []).append((vi_hat, tr.k * qscale))

    qlvar = {}
    for bus_id, terms in qloss_terms.items():
        hi = sum(coef * v.ub for v, coef in terms)
        ql = mb.add_var("Qloss", bus_id, 0.0, hi)
        mb.add_eq([(ql, 1.0)] + [(v, -coef) for v, coef in terms], 0.0,
                  f"qloss_def:{bus_id}")
        qlvar[bus_id] = ql

    # -- nodal balances ----------------------------------------------------------
    gens_at: dict[str, list] = {}
    for g in net.generators.values():
        gens_at.setdefault(g.bus, []).append(g)
    for bus in net.buses.values():
        coefs = list(flow_at[bus.id])
        coefs += [(fpvar[g.id], -1.0) for g in gens_at.get(bus.id, [])]
        coefs += [(lpvar[bus.id], -1.0), (vhat[bus.id], bus.g)]
        mb.add_eq(coefs, -bus.d_p, f"pbal:{bus.id}")

        coefs = list(qflow_at[bus.id])
        coefs += [(fqvar[g.id], -1.0) for g in gens_at.get(bus.id, [])]
        coefs += [(lqvar[bus.id], -1.0), (vhat[bus.id], -bus.b)]
        if bus.id in qlvar:
            coefs.append((qlvar[bus.id], 1.0))
        mb.add_eq(coefs, -bus.d_q, f"qbal:{bus.id}")

    return mb.finish(spec, net, dc, injections)


def dump_model(model: RelaxedModel) -> str:
    """Conic interchange text: var/lin/soc records, one per line."""
    out = [f"# case {model.spec.case} vars {model.n} lin {len(model.lin_rows)} "
           f"soc {len(model.soc_rows)}"]
    for v in model.variables:
        out.append(f"var {v.idx} {v.name} {v.kind.value} {v.lb!r} {v.ub!r}")
    obj = " ".join(f"{i}:{c!r}" for i, c in model.obj)
    out.append(f"min {obj} const {model.obj_const!r}")
    for q in model.quad_obj:
        out.append(f"quadobj {q.idx} {q.coef!r}")
    for row in model.lin_rows:
        body = " ".join(f"{i}:{c!r}" for i, c in row.coefs)
        out.append(f"lin {row.lo!r} <= {body} <= {row.hi!r}  # {row.name}")
    for row in model.soc_rows:
        terms = "; ".join(
            " ".join(f"{i}:{c!r}" for i, c in coefs) + f" +{const!r}"
            for coefs, const in row.terms)
        rc, r0 = row.rhs
        rhs = " ".join(f"{i}:{c!r}" for i, c in rc) + f" +{r0!r}"
        out.append(f"soc ||{terms}|| <= {rhs}  # {row.name}")
    return "\n".join(out) + "\n"
