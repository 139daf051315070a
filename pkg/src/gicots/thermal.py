"""Transformer thermal capability curves and GIC reactive losses.

The capability curve bounds feasible AC loading (per-unit current) as a
quadratic in effective GIC (amps): i_ac <= eta0 + eta1*g + eta2*g^2 with
eta2 <= 0, so headroom shrinks as GIC grows.  Reactive loss follows the
standard saturation model k * V * Itilde_d, bridged into per-unit by a single
configurable constant.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

from .config import DEFAULTS, Config
from .dc import DcNetwork, GmdScenario, solve_gic
from .net import Network, Transformer, XfmrKind


@dataclass(frozen=True)
class ThermalCurve:
    eta0: float
    eta1: float
    eta2: float

    def __post_init__(self):
        if self.eta2 > 0.0:
            raise ValueError("eta2 must be <= 0 (curve bends downward)")

    def limit(self, i_gic: float) -> float:
        return self.eta0 + self.eta1 * i_gic + self.eta2 * i_gic * i_gic


def curve_of(tr: Transformer) -> ThermalCurve:
    if tr.eta0 is None or tr.eta1 is None or tr.eta2 is None:
        raise ValueError(f"transformer {tr.id} has no thermal curve")
    return ThermalCurve(tr.eta0, tr.eta1, tr.eta2)


def fit_thermal_curve(points: Sequence[tuple[float, float]]) -> ThermalCurve:
    """Least-squares quadratic through (gic, ac_limit) samples."""
    if len(points) < 3:
        raise ValueError("need at least 3 points to fit a quadratic")
    g = np.asarray([p[0] for p in points], dtype=float)
    y = np.asarray([p[1] for p in points], dtype=float)
    if np.unique(g).size < 3:
        raise ValueError("need at least 3 distinct gic values")
    a = np.column_stack([np.ones_like(g), g, g * g])
    coef, _, rank, _ = np.linalg.lstsq(a, y, rcond=None)
    if rank < 3:
        raise ValueError("rank-deficient design matrix")
    return ThermalCurve(float(coef[0]), float(coef[1]), min(float(coef[2]), 0.0))


def thermal_headroom(curve: ThermalCurve, i_ac: float, i_gic: float) -> float:
    """Remaining AC-loading margin; the operating point is feasible iff >= 0."""
    if i_gic < 0:
        raise ValueError("effective GIC must be >= 0")
    return curve.limit(i_gic) - i_ac


def q_loss(v: float, loss_factors: Iterable[float], eff_gic: Iterable[float]) -> float:
    """Saturation reactive demand Sum k_e * V * Itilde_d over a bus's windings.

    Raw units (amps times per-unit voltage); divide by
    (qloss_amps_div * mva_base) to enter the per-unit reactive balance.
    """
    return sum(k * v * g for k, g in zip(loss_factors, eff_gic))


def qloss_scale(net: Network, config: Config = DEFAULTS) -> float:
    """Single named bridge from raw k*V*I units into per-unit reactive power."""
    return 1.0 / (config.qloss_amps_div * net.mva_base)


def attributed_bus(tr: Transformer) -> str:
    """Bus whose voltage multiplies the transformer's saturation loss.

    GSU losses land on the network-side (high) bus; autotransformer losses on
    the high-voltage bus.
    """
    return tr.high_bus


@dataclass(frozen=True)
class OverheatReport:
    scenario: GmdScenario
    violations: tuple[tuple[str, float], ...]  # (transformer id, headroom < 0)

    @property
    def violated_ids(self) -> tuple[str, ...]:
        return tuple(tid for tid, _ in self.violations)


def screen_overheating(net: Network, dc: DcNetwork,
                       z: Mapping[str, float] | None,
                       scenarios: Sequence[GmdScenario],
                       ac_loading: Mapping[str, float]) -> list[OverheatReport]:
    """Fixed-topology, fixed-loading overheating screen.

    `ac_loading` maps transformer id to the AC current (per-unit) carried by
    its associated AC edge; transformers absent from the map are skipped.
    """
    reports = []
    for scen in scenarios:
        state = solve_gic(net, dc, z, scen)
        bad = []
        for tid, tr in net.transformers.items():
            if tid not in ac_loading:
                continue
            margin = thermal_headroom(curve_of(tr), ac_loading[tid],
                                      state.effective[tid])
            if margin < 0.0:
                bad.append((tid, margin))
        reports.append(OverheatReport(scen, tuple(bad)))
    return reports
