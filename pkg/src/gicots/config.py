"""Tunable constants shared across the package.

Values here are deliberate engineering choices, not data read from any test
system.  Anything that bridges unit systems (amps vs per-unit) or sets solver
behaviour lives in one place so a single override changes the whole pipeline.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, fields, replace

# Flat-earth geographic conversion: miles per degree of latitude.  Longitude
# displacements additionally scale with cos(mean latitude).
MILES_PER_DEG_LAT = 69.1


@dataclass(frozen=True)
class Config:
    # --- GIC / GMD effects -------------------------------------------------
    # Reactive loss enters the per-unit balance as k_e * V_i * Itilde_d * qloss_scale.
    # The raw product k*V*I is in "MVar-like" units per amp of effective GIC;
    # dividing by (3 * mva_base) converts 3-phase-total amps to a per-phase
    # figure and then to per-unit on the system base.
    qloss_amps_div: float = 3.0
    # Per-unit AC current -> amps bridge for the GIC magnitude cap uses the
    # 3-phase total base current at the transformer's high-side voltage level.
    gic_amps_per_pu_phases: float = 3.0
    gic_cap_factor: float = 2.0  # cap = factor * max AC current limit, in amps

    # Default transformer thermal capability curve, expressed as fractions of
    # the associated AC edge's current limit per amp of effective GIC.  These
    # are placeholders for desk-scale studies; real curves come from
    # manufacturer data and should be supplied in the input file.
    thermal_eta1_ratio: float = -0.0012
    thermal_eta2_ratio: float = -2.0e-7

    # --- Relaxation bounds --------------------------------------------------
    # DC voltage box = vd_bound_factor * max |V^d| of an all-on solve at the
    # case scenario (floor vd_bound_min).  Tighter than the worst-case nodal
    # bound, which is far too loose to give informative McCormick envelopes.
    vd_bound_factor: float = 4.0
    vd_bound_min: float = 1.0

    # --- Continuous solver (outer approximation over LP) --------------------
    oa_feas_tol: float = 1.0e-7  # scaled second-order-cone violation
    oa_max_iter: int = 400
    oa_cut_trigger: float = 1.0e-9

    # --- Branch and bound ----------------------------------------------------
    gap_target: float = 1.0e-4
    node_limit: int = 100_000
    time_limit: float = 7200.0
    integrality_tol: float = 1.0e-6
    dive_period: int = 10

    # --- Recovery -------------------------------------------------------------
    recover_delta: float = 0.03
    recover_feas_tol: float = 1.0e-6
    recover_max_outer: int = 60
    recover_starts: int = 3

    def override(self, **kw) -> "Config":
        return replace(self, **kw)

    @classmethod
    def from_json(cls, path: str, base: "Config | None" = None) -> "Config":
        """Load overrides from a JSON file on top of `base` (or defaults)."""
        base = base or cls()
        with open(path) as fh:
            raw = json.load(fh)
        known = {f.name for f in fields(cls)}
        unknown = set(raw) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return replace(base, **raw)


DEFAULTS = Config()
