"""Hot numerical kernels for exact-model residuals and the recovery penalty.

The augmented-Lagrangian inner loop evaluates the exact nonconvex constraint
set and its gradient tens of thousands of times; that evaluation is the
package's dominant inner loop.  Two interchangeable implementations live
here: a numba-compiled one (default) and a vectorized pure-numpy fallback.
Set ``GICOTS_PURE_NUMPY=1`` to force the fallback; it is also selected
automatically when numba is unavailable.

All arrays in a `PackedProblem` are plain ndarrays so both paths share one
data layout.  DC quantities are scaled by `DC_SCALE` (volts and amps in
hundreds) so every residual is O(1) in per-unit terms.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np

DC_SCALE = 100.0  # volts/amps per internal DC unit

_FORCE_NUMPY = os.environ.get("GICOTS_PURE_NUMPY", "").strip() not in ("", "0")
try:  # pragma: no cover - exercised implicitly by IMPL selection
    if _FORCE_NUMPY:
        raise ImportError
    from numba import njit

    HAVE_NUMBA = True
except ImportError:
    HAVE_NUMBA = False

    def njit(*a, **kw):  # type: ignore[misc]
        def wrap(fn):
            return fn
        return wrap(a[0]) if a and callable(a[0]) else wrap

IMPL = "numba" if HAVE_NUMBA else "numpy"

# equality-row families (indices into ResidualReport)
FAM_BALANCE, FAM_FLOW, FAM_LOSS, FAM_GEN, FAM_CURDEF, FAM_CURMAG = 0, 1, 2, 3, 4, 5
FAM_GIC, FAM_LIMITS, FAM_THERMAL, FAM_QLOSS, FAM_NONE = 6, 7, 8, 9, -1


@dataclass
class PackedProblem:
    """Array view of one network + scenario + fixed switching state."""
    nb: int
    ng: int
    ne: int
    nd: int
    nt: int
    # x offsets: V th fp fq lp lq pf pt qf qt l ia vd id itd ql, total
    off: np.ndarray
    # edges
    fr: np.ndarray
    to: np.ndarray
    isgen: np.ndarray
    ge: np.ndarray
    be: np.ndarray
    bc: np.ndarray
    rr: np.ndarray
    xx: np.ndarray
    s2: np.ndarray
    z: np.ndarray
    theta_bar: float
    theta_max: float
    # buses
    gsh: np.ndarray
    bsh: np.ndarray
    dp: np.ndarray
    dq: np.ndarray
    sgnq: np.ndarray
    # generators
    gbus: np.ndarray
    c1pu: np.ndarray
    c2pu: np.ndarray
    mu_pu: float
    obj_const: float
    # dc circuit (scaled by DC_SCALE)
    node_am: np.ndarray
    dm: np.ndarray
    dn: np.ndarray
    da: np.ndarray
    dj: np.ndarray
    dz: np.ndarray
    # saturation windings
    tau_de: np.ndarray
    tau_ac: np.ndarray
    tau_k: np.ndarray
    tau_bus: np.ndarray
    tau_e0: np.ndarray
    tau_e1: np.ndarray
    tau_e2: np.ndarray
    eq_family: np.ndarray = field(default=None)  # filled by layout builder
    ineq_family: np.ndarray = field(default=None)
    vlo: np.ndarray = field(default=None)  # bus voltage boxes, reporting only
    vhi: np.ndarray = field(default=None)

    @property
    def n(self) -> int:
        return int(self.off[16])

    @property
    def m_eq(self) -> int:
        return 2 * self.nb + 8 * self.ne + self.nd + self.nt + self.nb

    @property
    def m_ineq(self) -> int:
        return 4 * self.ne + 3 * self.nt + 1

    def flat(self) -> tuple:
        return (self.off, self.fr, self.to, self.isgen, self.ge, self.be,
                self.bc, self.rr, self.xx, self.s2, self.z, self.theta_bar,
                self.theta_max, self.gsh, self.bsh, self.dp, self.dq,
                self.sgnq, self.gbus, self.c1pu, self.c2pu, self.mu_pu,
                self.obj_const, self.node_am, self.dm, self.dn, self.da,
                self.dj, self.dz, self.tau_de, self.tau_ac, self.tau_k,
                self.tau_bus, self.tau_e0, self.tau_e1, self.tau_e2)


def build_families(pk: PackedProblem) -> None:
    """Label every residual row with its constraint family."""
    nb, ne, nd, nt = pk.nb, pk.ne, pk.nd, pk.nt
    eq = np.full(pk.m_eq, FAM_NONE, dtype=np.int8)
    eq[:2 * nb] = FAM_BALANCE
    for e in range(ne):
        base = 2 * nb + 6 * e
        if pk.isgen[e]:
            eq[base:base + 2] = FAM_GEN
        else:
            eq[base:base + 4] = FAM_FLOW
            eq[base + 4:base + 6] = FAM_LOSS
    eq[2 * nb + 6 * ne:2 * nb + 7 * ne] = FAM_CURDEF
    eq[2 * nb + 7 * ne:2 * nb + 8 * ne] = FAM_CURMAG
    eq[2 * nb + 8 * ne:2 * nb + 8 * ne + nd + nt] = FAM_GIC
    eq[2 * nb + 8 * ne + nd + nt:] = FAM_QLOSS
    pk.eq_family = eq

    ineq = np.full(pk.m_ineq, FAM_NONE, dtype=np.int8)
    ineq[:2 * ne] = FAM_LIMITS
    for e in range(ne):
        if not pk.isgen[e]:
            ineq[2 * ne + 2 * e:2 * ne + 2 * e + 2] = FAM_LIMITS
    ineq[4 * ne:4 * ne + 2 * nt] = FAM_GIC
    thermal = 4 * ne + 2 * nt
    for t in range(nt):
        if np.isfinite(pk.tau_e0[t]):
            ineq[thermal + t] = FAM_THERMAL
    # final row is the recovery objective cap: internal, FAM_NONE
    pk.ineq_family = ineq


# ---------------------------------------------------------------------------
# Vectorized (pure numpy) implementation
# ---------------------------------------------------------------------------

def _parts(x: np.ndarray, off: np.ndarray):
    return (x[off[0]:off[1]], x[off[1]:off[2]], x[off[2]:off[3]],
            x[off[3]:off[4]], x[off[4]:off[5]], x[off[5]:off[6]],
            x[off[6]:off[7]], x[off[7]:off[8]], x[off[8]:off[9]],
            x[off[9]:off[10]], x[off[10]:off[11]], x[off[11]:off[12]],
            x[off[12]:off[13]], x[off[13]:off[14]], x[off[14]:off[15]],
            x[off[15]:off[16]])


def eq_residuals(x: np.ndarray, pk: PackedProblem) -> np.ndarray:
    v, th, fp, fq, lp, lq, pf, pt, qf, qt, l, ia, vd, idv, itd, ql = _parts(x, pk.off)
    nb, ne, nd, nt = pk.nb, pk.ne, pk.nd, pk.nt
    h = np.zeros(pk.m_eq)

    pbal = np.zeros(nb)
    qbal = np.zeros(nb)
    np.add.at(pbal, pk.fr, pf)
    np.add.at(pbal, pk.to, pt)
    np.add.at(qbal, pk.fr, qf)
    np.add.at(qbal, pk.to, qt)
    if pk.ng:
        np.add.at(pbal, pk.gbus, -fp)
        np.add.at(qbal, pk.gbus, -fq)
    pbal += -lp + pk.gsh * v * v + pk.dp
    qbal += -lq - pk.bsh * v * v + pk.dq + ql
    h[:nb] = pbal
    h[nb:2 * nb] = qbal

    vi, vj = v[pk.fr], v[pk.to]
    thd = th[pk.fr] - th[pk.to]
    cosd, sind = np.cos(thd), np.sin(thd)
    w = vi * vj
    z, ge, be, bc = pk.z, pk.ge, pk.be, pk.bc
    blk = h[2 * nb:2 * nb + 6 * ne].reshape(ne, 6)
    gen = pk.isgen.astype(bool)
    ngen = ~gen
    blk[gen, 0] = (pf + pt)[gen]
    blk[gen, 1] = (qf + qt)[gen]
    blk[ngen, 0] = (pf - z * (ge * vi * vi - ge * w * cosd - be * w * sind))[ngen]
    blk[ngen, 1] = (qf - z * (-(be + bc / 2) * vi * vi + be * w * cosd - ge * w * sind))[ngen]
    blk[ngen, 2] = (pt - z * (ge * vj * vj - ge * w * cosd + be * w * sind))[ngen]
    blk[ngen, 3] = (qt - z * (-(be + bc / 2) * vj * vj + be * w * cosd + ge * w * sind))[ngen]
    core = l + bc * qf + (bc / 2) ** 2 * vi * vi
    blk[ngen, 4] = (pf + pt - z * pk.rr * core)[ngen]
    blk[ngen, 5] = (qf + qt - z * (pk.xx * core - bc / 2 * (vi * vi + vj * vj)))[ngen]

    h[2 * nb + 6 * ne:2 * nb + 7 * ne] = pf * pf + qf * qf - l * vi * vi
    h[2 * nb + 7 * ne:2 * nb + 8 * ne] = l - ia * ia

    if nd:
        kcl = np.zeros(nd)
        flow = pk.dz * (pk.da * (vd[pk.dm] - vd[pk.dn]) + pk.dj)
        np.add.at(kcl, pk.dm, flow)
        np.add.at(kcl, pk.dn, -flow)
        kcl += pk.node_am * vd
        h[2 * nb + 8 * ne:2 * nb + 8 * ne + nd] = kcl
    if nt:
        de = pk.tau_de
        h[2 * nb + 8 * ne + nd:2 * nb + 8 * ne + nd + nt] = (
            idv - pk.dz[de] * pk.da[de] * (vd[pk.dm[de]] - vd[pk.dn[de]]))

    qdef = ql.copy()
    if nt:
        np.add.at(qdef, pk.tau_bus, -pk.tau_k * v[pk.tau_bus] * itd)
    h[2 * nb + 8 * ne + nd + nt:] = qdef
    return h


def ineq_residuals(x: np.ndarray, pk: PackedProblem,
                   cap: float = np.inf, obj_scale: float = 1.0) -> np.ndarray:
    v, th, fp, fq, lp, lq, pf, pt, qf, qt, l, ia, vd, idv, itd, ql = _parts(x, pk.off)
    ne, nt = pk.ne, pk.nt
    g = np.full(pk.m_ineq, -1.0)
    g[0:2 * ne:2] = pf * pf + qf * qf - pk.z * pk.s2
    g[1:2 * ne:2] = pt * pt + qt * qt - pk.z * pk.s2
    thd = th[pk.fr] - th[pk.to]
    lim = pk.z * pk.theta_bar + (1.0 - pk.z) * pk.theta_max
    ngen = ~pk.isgen.astype(bool)
    ang = g[2 * ne:4 * ne].reshape(ne, 2)
    ang[ngen, 0] = (thd - lim)[ngen]
    ang[ngen, 1] = (-thd - lim)[ngen]
    if nt:
        g[4 * ne:4 * ne + 2 * nt:2] = idv - itd
        g[4 * ne + 1:4 * ne + 2 * nt:2] = -idv - itd
        th_ok = np.isfinite(pk.tau_e0)
        tg = ia[pk.tau_ac] - (np.where(th_ok, pk.tau_e0, 0.0)
                              + pk.tau_e1 * itd + pk.tau_e2 * itd * itd)
        g[4 * ne + 2 * nt:4 * ne + 3 * nt] = np.where(th_ok, tg, -1.0)
    if np.isfinite(cap):
        g[-1] = (objective(x, pk)[0] - cap) / obj_scale
    return g


def objective(x: np.ndarray, pk: PackedProblem) -> tuple[float, np.ndarray]:
    """Dispatch plus shed cost in $-units, with gradient."""
    v, th, fp, fq, lp, lq, *_ = _parts(x, pk.off)
    grad = np.zeros_like(x)
    val = pk.obj_const
    if pk.ng:
        val += float(np.sum(pk.c2pu * fp * fp + pk.c1pu * fp))
        grad[pk.off[2]:pk.off[3]] = 2.0 * pk.c2pu * fp + pk.c1pu
    val += pk.mu_pu * float(np.sum(lp) + np.sum(pk.sgnq * lq))
    grad[pk.off[4]:pk.off[5]] = pk.mu_pu
    grad[pk.off[5]:pk.off[6]] = pk.mu_pu * pk.sgnq
    return val, grad


def al_value_grad_numpy(x: np.ndarray, lam: np.ndarray, mu: np.ndarray,
                        rho: float, pk: PackedProblem, cap: float,
                        obj_scale: float) -> tuple[float, np.ndarray]:
    """Augmented-Lagrangian value and gradient, vectorized fallback path."""
    off = pk.off
    v, th, fp, fq, lp, lq, pf, pt, qf, qt, l, ia, vd, idv, itd, ql = _parts(x, off)
    nb, ne, nd, nt = pk.nb, pk.ne, pk.nd, pk.nt

    fobj, fgrad = objective(x, pk)
    h = eq_residuals(x, pk)
    g = ineq_residuals(x, pk, cap, obj_scale)

    wh = lam + rho * h
    tg = np.maximum(0.0, mu + rho * g)
    phi = (fobj / obj_scale + float(lam @ h) + 0.5 * rho * float(h @ h)
           + float(np.sum(tg * tg - mu * mu)) / (2.0 * rho))

    grad = fgrad * ((1.0 + tg[-1]) / obj_scale)

    gv = np.zeros(nb)
    gth = np.zeros(nb)
    # balances
    wp, wq = wh[:nb], wh[nb:2 * nb]
    np.add.at(grad, off[6] + np.arange(ne), wp[pk.fr])
    np.add.at(grad, off[7] + np.arange(ne), wp[pk.to])
    np.add.at(grad, off[8] + np.arange(ne), wq[pk.fr])
    np.add.at(grad, off[9] + np.arange(ne), wq[pk.to])
    if pk.ng:
        np.add.at(grad, off[2] + np.arange(pk.ng), -wp[pk.gbus])
        np.add.at(grad, off[3] + np.arange(pk.ng), -wq[pk.gbus])
    grad[off[4]:off[5]] += -wp
    grad[off[5]:off[6]] += -wq
    gv += 2.0 * v * (wp * pk.gsh - wq * pk.bsh)
    grad[off[15]:off[16]] += wq

    # branch physics
    z, ge, be, bc, rr, xx = pk.z, pk.ge, pk.be, pk.bc, pk.rr, pk.xx
    vi, vj = v[pk.fr], v[pk.to]
    thd = th[pk.fr] - th[pk.to]
    cosd, sind = np.cos(thd), np.sin(thd)
    w = vi * vj
    blkw = wh[2 * nb:2 * nb + 6 * ne].reshape(ne, 6).copy()
    gen = pk.isgen.astype(bool)
    w1, w2, w3, w4 = blkw[:, 0].copy(), blkw[:, 1].copy(), blkw[:, 2], blkw[:, 3]
    wl1, wl2 = blkw[:, 4].copy(), blkw[:, 5].copy()
    # gen edges: rows 0/1 are pf+pt, qf+qt
    np.add.at(grad, off[6] + np.flatnonzero(gen), w1[gen])
    np.add.at(grad, off[7] + np.flatnonzero(gen), w1[gen])
    np.add.at(grad, off[8] + np.flatnonzero(gen), w2[gen])
    np.add.at(grad, off[9] + np.flatnonzero(gen), w2[gen])
    w1[gen] = w2[gen] = w3[gen] = w4[gen] = 0.0
    wl1[gen] = wl2[gen] = 0.0

    idx = np.arange(ne)
    grad[off[6] + idx] += w1
    grad[off[8] + idx] += w2
    grad[off[7] + idx] += w3
    grad[off[9] + idx] += w4

    dvi = (-z * (2 * ge * vi - ge * vj * cosd - be * vj * sind) * w1
           - z * (-2 * (be + bc / 2) * vi + be * vj * cosd - ge * vj * sind) * w2
           - z * (-ge * vj * cosd + be * vj * sind) * w3
           - z * (be * vj * cosd + ge * vj * sind) * w4)
    dvj = (-z * (-ge * vi * cosd - be * vi * sind) * w1
           - z * (be * vi * cosd - ge * vi * sind) * w2
           - z * (2 * ge * vj - ge * vi * cosd + be * vi * sind) * w3
           - z * (-2 * (be + bc / 2) * vj + be * vi * cosd + ge * vi * sind) * w4)
    dthd = (-z * (ge * w * sind - be * w * cosd) * w1
            - z * (-be * w * sind - ge * w * cosd) * w2
            - z * (ge * w * sind + be * w * cosd) * w3
            - z * (-be * w * sind + ge * w * cosd) * w4)

    # loss rows
    grad[off[6] + idx] += wl1
    grad[off[7] + idx] += wl1
    grad[off[8] + idx] += wl2 * (1.0 - z * xx * bc) + wl1 * (-z * rr * bc)
    grad[off[9] + idx] += wl2
    grad[off[10] + idx] += -z * rr * wl1 - z * xx * wl2
    dvi += -z * rr * (bc / 2) ** 2 * 2 * vi * wl1 + (-z * xx * (bc / 2) ** 2 * 2 * vi + z * bc * vi) * wl2
    dvj += z * bc * vj * wl2

    # current definition rows
    wc = wh[2 * nb + 6 * ne:2 * nb + 7 * ne]
    grad[off[6] + idx] += 2 * pf * wc
    grad[off[8] + idx] += 2 * qf * wc
    grad[off[10] + idx] += -vi * vi * wc
    dvi += -2 * l * vi * wc
    wm = wh[2 * nb + 7 * ne:2 * nb + 8 * ne]
    grad[off[10] + idx] += wm
    grad[off[11] + idx] += -2 * ia * wm

    np.add.at(gv, pk.fr, dvi)
    np.add.at(gv, pk.to, dvj)
    np.add.at(gth, pk.fr, dthd)
    np.add.at(gth, pk.to, -dthd)

    # GIC rows
    if nd:
        wk = wh[2 * nb + 8 * ne:2 * nb + 8 * ne + nd]
        gvd = wk * pk.node_am
        za = pk.dz * pk.da
        coef = za * (wk[pk.dm] - wk[pk.dn])
        np.add.at(gvd, pk.dm, coef)
        np.add.at(gvd, pk.dn, -coef)
        if nt:
            wi = wh[2 * nb + 8 * ne + nd:2 * nb + 8 * ne + nd + nt]
            de = pk.tau_de
            grad[off[13]:off[14]] += wi
            np.add.at(gvd, pk.dm[de], -za[de] * wi)
            np.add.at(gvd, pk.dn[de], za[de] * wi)
        grad[off[12]:off[13]] += gvd

    wq2 = wh[2 * nb + 8 * ne + nd + nt:]
    grad[off[15]:off[16]] += wq2
    if nt:
        vb = v[pk.tau_bus]
        grad[off[14]:off[15]] += -pk.tau_k * vb * wq2[pk.tau_bus]
        np.add.at(gv, pk.tau_bus, -pk.tau_k * itd * wq2[pk.tau_bus])

    # inequality families
    tf = tg[0:2 * ne:2]
    tt = tg[1:2 * ne:2]
    grad[off[6] + idx] += 2 * pf * tf
    grad[off[8] + idx] += 2 * qf * tf
    grad[off[7] + idx] += 2 * pt * tt
    grad[off[9] + idx] += 2 * qt * tt
    ta = tg[2 * ne:4 * ne].reshape(ne, 2)
    dthd2 = np.where(gen, 0.0, ta[:, 0] - ta[:, 1])
    np.add.at(gth, pk.fr, dthd2)
    np.add.at(gth, pk.to, -dthd2)
    if nt:
        tp = tg[4 * ne:4 * ne + 2 * nt:2]
        tn = tg[4 * ne + 1:4 * ne + 2 * nt:2]
        grad[off[13]:off[14]] += tp - tn
        grad[off[14]:off[15]] += -(tp + tn)
        tt2 = tg[4 * ne + 2 * nt:4 * ne + 3 * nt]
        ok = np.isfinite(pk.tau_e0)
        np.add.at(grad, off[11] + pk.tau_ac[ok], tt2[ok])
        grad[off[14]:off[15]] += np.where(ok, -(pk.tau_e1 + 2 * pk.tau_e2 * itd) * tt2, 0.0)

    grad[off[0]:off[1]] += gv
    grad[off[1]:off[2]] += gth
    return phi, grad


# ---------------------------------------------------------------------------
# numba twin of the hot kernel
# ---------------------------------------------------------------------------

@njit(cache=True)
def _al_jit(x, lam, mu, rho, cap, obj_scale,
            off, fr, to, isgen, ge, be, bc, rr, xx, s2, z, theta_bar, theta_max,
            gsh, bsh, dp, dq, sgnq, gbus, c1pu, c2pu, mu_pu, obj_const,
            node_am, dm, dn, da, dj, dz,
            tau_de, tau_ac, tau_k, tau_bus, tau_e0, tau_e1, tau_e2):  # pragma: no cover - numba path
    nb = off[1] - off[0]
    ng = off[3] - off[2]
    ne = off[7] - off[6]
    nd = off[13] - off[12]
    nt = off[14] - off[13]
    n = off[16]
    oV, oTH, oFP, oFQ, oLP, oLQ = off[0], off[1], off[2], off[3], off[4], off[5]
    oPF, oPT, oQF, oQT, oL, oIA = off[6], off[7], off[8], off[9], off[10], off[11]
    oVD, oID, oITD, oQL = off[12], off[13], off[14], off[15]

    grad = np.zeros(n)
    phi = 0.0

    # objective
    fobj = obj_const
    for gidx in range(ng):
        fpv = x[oFP + gidx]
        fobj += c2pu[gidx] * fpv * fpv + c1pu[gidx] * fpv
    for i in range(nb):
        fobj += mu_pu * (x[oLP + i] + sgnq[i] * x[oLQ + i])
    # cap multiplier applied to the objective gradient after g_cap known
    g_cap = (fobj - cap) / obj_scale if np.isfinite(cap) else -1.0
    t_cap = mu[4 * ne + 3 * nt] + rho * g_cap
    if t_cap < 0.0:
        t_cap = 0.0
    phi += fobj / obj_scale
    phi += (t_cap * t_cap - mu[4 * ne + 3 * nt] ** 2) / (2.0 * rho)
    obj_w = (1.0 + t_cap) / obj_scale if np.isfinite(cap) else 1.0 / obj_scale
    for gidx in range(ng):
        grad[oFP + gidx] += (2.0 * c2pu[gidx] * x[oFP + gidx] + c1pu[gidx]) * obj_w
    for i in range(nb):
        grad[oLP + i] += mu_pu * obj_w
        grad[oLQ + i] += mu_pu * sgnq[i] * obj_w

    # balance rows: assemble residuals first
    pb = np.zeros(nb)
    qb = np.zeros(nb)
    for e in range(ne):
        pb[fr[e]] += x[oPF + e]
        pb[to[e]] += x[oPT + e]
        qb[fr[e]] += x[oQF + e]
        qb[to[e]] += x[oQT + e]
    for gidx in range(ng):
        pb[gbus[gidx]] -= x[oFP + gidx]
        qb[gbus[gidx]] -= x[oFQ + gidx]
    for i in range(nb):
        vi = x[oV + i]
        hp = pb[i] - x[oLP + i] + gsh[i] * vi * vi + dp[i]
        hq = qb[i] - x[oLQ + i] - bsh[i] * vi * vi + dq[i] + x[oQL + i]
        wp = lam[i] + rho * hp
        wq = lam[nb + i] + rho * hq
        phi += lam[i] * hp + 0.5 * rho * hp * hp
        phi += lam[nb + i] * hq + 0.5 * rho * hq * hq
        pb[i] = wp  # reuse as weights
        qb[i] = wq
        grad[oLP + i] -= wp
        grad[oLQ + i] -= wq
        grad[oQL + i] += wq
        grad[oV + i] += 2.0 * vi * (wp * gsh[i] - wq * bsh[i])

    for e in range(ne):
        grad[oPF + e] += pb[fr[e]]
        grad[oPT + e] += pb[to[e]]
        grad[oQF + e] += qb[fr[e]]
        grad[oQT + e] += qb[to[e]]
    for gidx in range(ng):
        grad[oFP + gidx] -= pb[gbus[gidx]]
        grad[oFQ + gidx] -= qb[gbus[gidx]]

    # branch physics + cones + limits
    for e in range(ne):
        i, jj = fr[e], to[e]
        vi, vj = x[oV + i], x[oV + jj]
        pfe, pte = x[oPF + e], x[oPT + e]
        qfe, qte = x[oQF + e], x[oQT + e]
        le, iae = x[oL + e], x[oIA + e]
        base = 2 * nb + 6 * e
        if isgen[e]:
            h1 = pfe + pte
            h2 = qfe + qte
            w1 = lam[base] + rho * h1
            w2 = lam[base + 1] + rho * h2
            phi += lam[base] * h1 + 0.5 * rho * h1 * h1
            phi += lam[base + 1] * h2 + 0.5 * rho * h2 * h2
            grad[oPF + e] += w1
            grad[oPT + e] += w1
            grad[oQF + e] += w2
            grad[oQT + e] += w2
        else:
            ze = z[e]
            thd = x[oTH + i] - x[oTH + jj]
            cd, sd = np.cos(thd), np.sin(thd)
            ww = vi * vj
            gee, bee, bce = ge[e], be[e], bc[e]
            h1 = pfe - ze * (gee * vi * vi - gee * ww * cd - bee * ww * sd)
            h2 = qfe - ze * (-(bee + bce / 2) * vi * vi + bee * ww * cd - gee * ww * sd)
            h3 = pte - ze * (gee * vj * vj - gee * ww * cd + bee * ww * sd)
            h4 = qte - ze * (-(bee + bce / 2) * vj * vj + bee * ww * cd + gee * ww * sd)
            core = le + bce * qfe + (bce / 2) ** 2 * vi * vi
            h5 = pfe + pte - ze * rr[e] * core
            h6 = qfe + qte - ze * (xx[e] * core - bce / 2 * (vi * vi + vj * vj))
            w1 = lam[base] + rho * h1
            w2 = lam[base + 1] + rho * h2
            w3 = lam[base + 2] + rho * h3
            w4 = lam[base + 3] + rho * h4
            w5 = lam[base + 4] + rho * h5
            w6 = lam[base + 5] + rho * h6
            phi += (lam[base] * h1 + lam[base + 1] * h2 + lam[base + 2] * h3
                    + lam[base + 3] * h4 + lam[base + 4] * h5 + lam[base + 5] * h6)
            phi += 0.5 * rho * (h1 * h1 + h2 * h2 + h3 * h3 + h4 * h4 + h5 * h5 + h6 * h6)
            grad[oPF + e] += w1 + w5
            grad[oQF + e] += w2 + w6 * (1.0 - ze * xx[e] * bce) - ze * rr[e] * bce * w5
            grad[oPT + e] += w3 + w5
            grad[oQT + e] += w4 + w6
            grad[oL + e] += -ze * rr[e] * w5 - ze * xx[e] * w6
            dvi = (-ze * (2 * gee * vi - gee * vj * cd - bee * vj * sd) * w1
                   - ze * (-2 * (bee + bce / 2) * vi + bee * vj * cd - gee * vj * sd) * w2
                   - ze * (-gee * vj * cd + bee * vj * sd) * w3
                   - ze * (bee * vj * cd + gee * vj * sd) * w4
                   - ze * rr[e] * (bce / 2) ** 2 * 2 * vi * w5
                   + (-ze * xx[e] * (bce / 2) ** 2 * 2 * vi + ze * bce * vi) * w6)
            dvj = (-ze * (-gee * vi * cd - bee * vi * sd) * w1
                   - ze * (bee * vi * cd - gee * vi * sd) * w2
                   - ze * (2 * gee * vj - gee * vi * cd + bee * vi * sd) * w3
                   - ze * (-2 * (bee + bce / 2) * vj + bee * vi * cd + gee * vi * sd) * w4
                   + ze * bce * vj * w6)
            dthd = (-ze * (gee * ww * sd - bee * ww * cd) * w1
                    - ze * (-bee * ww * sd - gee * ww * cd) * w2
                    - ze * (gee * ww * sd + bee * ww * cd) * w3
                    - ze * (-bee * ww * sd + gee * ww * cd) * w4)
            grad[oV + i] += dvi
            grad[oV + jj] += dvj
            grad[oTH + i] += dthd
            grad[oTH + jj] -= dthd
            # angle limits
            lim = ze * theta_bar + (1.0 - ze) * theta_max
            ga1 = thd - lim
            ga2 = -thd - lim
            t1 = mu[2 * ne + 2 * e] + rho * ga1
            t2 = mu[2 * ne + 2 * e + 1] + rho * ga2
            if t1 > 0.0:
                phi += (t1 * t1 - mu[2 * ne + 2 * e] ** 2) / (2.0 * rho)
                grad[oTH + i] += t1
                grad[oTH + jj] -= t1
            else:
                phi -= mu[2 * ne + 2 * e] ** 2 / (2.0 * rho)
            if t2 > 0.0:
                phi += (t2 * t2 - mu[2 * ne + 2 * e + 1] ** 2) / (2.0 * rho)
                grad[oTH + i] -= t2
                grad[oTH + jj] += t2
            else:
                phi -= mu[2 * ne + 2 * e + 1] ** 2 / (2.0 * rho)

        # current definition and magnitude
        hc = pfe * pfe + qfe * qfe - le * vi * vi
        wcc = lam[2 * nb + 6 * ne + e] + rho * hc
        phi += lam[2 * nb + 6 * ne + e] * hc + 0.5 * rho * hc * hc
        grad[oPF + e] += 2 * pfe * wcc
        grad[oQF + e] += 2 * qfe * wcc
        grad[oL + e] += -vi * vi * wcc
        grad[oV + i] += -2 * le * vi * wcc
        hm = le - iae * iae
        wmm = lam[2 * nb + 7 * ne + e] + rho * hm
        phi += lam[2 * nb + 7 * ne + e] * hm + 0.5 * rho * hm * hm
        grad[oL + e] += wmm
        grad[oIA + e] += -2 * iae * wmm

        # capacity cones
        gc1 = pfe * pfe + qfe * qfe - z[e] * s2[e]
        gc2 = pte * pte + qte * qte - z[e] * s2[e]
        tc1 = mu[2 * e] + rho * gc1
        tc2 = mu[2 * e + 1] + rho * gc2
        if tc1 > 0.0:
            phi += (tc1 * tc1 - mu[2 * e] ** 2) / (2.0 * rho)
            grad[oPF + e] += 2 * pfe * tc1
            grad[oQF + e] += 2 * qfe * tc1
        else:
            phi -= mu[2 * e] ** 2 / (2.0 * rho)
        if tc2 > 0.0:
            phi += (tc2 * tc2 - mu[2 * e + 1] ** 2) / (2.0 * rho)
            grad[oPT + e] += 2 * pte * tc2
            grad[oQT + e] += 2 * qte * tc2
        else:
            phi -= mu[2 * e + 1] ** 2 / (2.0 * rho)

    # GIC equality rows
    if nd > 0:
        kw = np.zeros(nd)
        for m in range(nd):
            kw[m] = node_am[m] * x[oVD + m]
        for d in range(len(dm)):
            flow = dz[d] * (da[d] * (x[oVD + dm[d]] - x[oVD + dn[d]]) + dj[d])
            kw[dm[d]] += flow
            kw[dn[d]] -= flow
        for m in range(nd):
            hk = kw[m]
            wk = lam[2 * nb + 8 * ne + m] + rho * hk
            phi += lam[2 * nb + 8 * ne + m] * hk + 0.5 * rho * hk * hk
            kw[m] = wk
        for m in range(nd):
            grad[oVD + m] += kw[m] * node_am[m]
        for d in range(len(dm)):
            za = dz[d] * da[d]
            coef = za * (kw[dm[d]] - kw[dn[d]])
            grad[oVD + dm[d]] += coef
            grad[oVD + dn[d]] -= coef

    for t in range(nt):
        d = tau_de[t]
        za = dz[d] * da[d]
        hi = x[oID + t] - za * (x[oVD + dm[d]] - x[oVD + dn[d]])
        r = 2 * nb + 8 * ne + nd + t
        wi = lam[r] + rho * hi
        phi += lam[r] * hi + 0.5 * rho * hi * hi
        grad[oID + t] += wi
        grad[oVD + dm[d]] -= za * wi
        grad[oVD + dn[d]] += za * wi

    # reactive loss definition
    qsum = np.zeros(nb)
    for t in range(nt):
        qsum[tau_bus[t]] += tau_k[t] * x[oV + tau_bus[t]] * x[oITD + t]
    for i in range(nb):
        hq = x[oQL + i] - qsum[i]
        r = 2 * nb + 8 * ne + nd + nt + i
        wq2 = lam[r] + rho * hq
        phi += lam[r] * hq + 0.5 * rho * hq * hq
        grad[oQL + i] += wq2
        qsum[i] = wq2
    for t in range(nt):
        i = tau_bus[t]
        grad[oITD + t] -= tau_k[t] * x[oV + i] * qsum[i]
        grad[oV + i] -= tau_k[t] * x[oITD + t] * qsum[i]

    # GIC magnitude and thermal inequalities
    for t in range(nt):
        gp = x[oID + t] - x[oITD + t]
        gn = -x[oID + t] - x[oITD + t]
        kp = mu[4 * ne + 2 * t] + rho * gp
        kn = mu[4 * ne + 2 * t + 1] + rho * gn
        if kp > 0.0:
            phi += (kp * kp - mu[4 * ne + 2 * t] ** 2) / (2.0 * rho)
            grad[oID + t] += kp
            grad[oITD + t] -= kp
        else:
            phi -= mu[4 * ne + 2 * t] ** 2 / (2.0 * rho)
        if kn > 0.0:
            phi += (kn * kn - mu[4 * ne + 2 * t + 1] ** 2) / (2.0 * rho)
            grad[oID + t] -= kn
            grad[oITD + t] -= kn
        else:
            phi -= mu[4 * ne + 2 * t + 1] ** 2 / (2.0 * rho)
        if np.isfinite(tau_e0[t]):
            itdv = x[oITD + t]
            gt = x[oIA + tau_ac[t]] - (tau_e0[t] + tau_e1[t] * itdv + tau_e2[t] * itdv * itdv)
            kt = mu[4 * ne + 2 * nt + t] + rho * gt
            if kt > 0.0:
                phi += (kt * kt - mu[4 * ne + 2 * nt + t] ** 2) / (2.0 * rho)
                grad[oIA + tau_ac[t]] += kt
                grad[oITD + t] -= (tau_e1[t] + 2 * tau_e2[t] * itdv) * kt
            else:
                phi -= mu[4 * ne + 2 * nt + t] ** 2 / (2.0 * rho)
        else:
            kt = mu[4 * ne + 2 * nt + t] - rho  # slot carries constant g = -1
            if kt > 0.0:
                phi += (kt * kt - mu[4 * ne + 2 * nt + t] ** 2) / (2.0 * rho)
            else:
                phi -= mu[4 * ne + 2 * nt + t] ** 2 / (2.0 * rho)

    # inactive inequality slots carry g = -1; account for their mu terms
    for e in range(ne):
        if isgen[e]:
            for kslot in (2 * ne + 2 * e, 2 * ne + 2 * e + 1):
                tk = mu[kslot] - rho
                if tk > 0.0:
                    phi += (tk * tk - mu[kslot] ** 2) / (2.0 * rho)
                else:
                    phi -= mu[kslot] ** 2 / (2.0 * rho)
    return phi, grad


def al_value_grad(x, lam, mu, rho, pk: PackedProblem, cap, obj_scale):
    if HAVE_NUMBA:
        return _al_jit(x, lam, mu, rho, cap, obj_scale, *pk.flat())
    return al_value_grad_numpy(x, lam, mu, rho, pk, cap, obj_scale)
