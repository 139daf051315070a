"""Built-in test systems.

`build_rts96` constructs the modified single-area RTS-96: every generator gets
a step-up transformer and terminal bus, the five network transformers are
autotransformers, and substations carry geographic coordinates so a uniform
geo-electric field induces line EMFs.  `build_validation_case` loads the
six-bus GIC benchmark shipped as a data file.
"""

from __future__ import annotations

import importlib.resources
import math

from .config import DEFAULTS, Config
from .net import (Branch, BranchKind, Bus, Generator, Network, Substation,
                  Transformer, XfmrKind, parse_network, validate_network)

# Substation layout (western Pennsylvania), grounding 0.1 ohm everywhere.
_SUBS = [
    ("SUB 1", 40.44, -78.80), ("SUB 2", 40.44, -78.73), ("SUB 3", 40.90, -79.61),
    ("SUB 4", 40.70, -79.26), ("SUB 5", 40.70, -79.07), ("SUB 6", 41.08, -78.61),
    ("SUB 7", 40.50, -78.20), ("SUB 8", 40.53, -78.50), ("SUB 9", 41.03, -78.99),
    ("SUB 10", 41.22, -78.35), ("SUB 11", 41.48, -79.26), ("SUB 12", 41.45, -79.71),
    ("SUB 13", 41.63, -79.75), ("SUB 14", 41.86, -79.94), ("SUB 15", 42.01, -79.86),
    ("SUB 16", 41.77, -79.45), ("SUB 17", 42.01, -78.95), ("SUB 18", 41.95, -79.52),
    ("SUB 19", 42.41, -78.73), ("SUB 20", 42.02, -78.65),
]

# Buses sharing a substation are joined by zero-length branches below.
_BUS_SUB = {1: 1, 2: 2, 3: 3, 4: 4, 5: 5, 6: 6, 7: 7, 8: 8,
            9: 9, 10: 9, 11: 9, 12: 9, 13: 10, 14: 11, 15: 12, 16: 13,
            17: 14, 18: 15, 19: 16, 20: 17, 21: 18, 22: 19, 23: 20, 24: 3}

# bus: (Pd MW, Qd MVar, shunt B MVar at 1 pu)
_BUS_LOAD = {1: (108, 22, 0), 2: (97, 20, 0), 3: (180, 37, 0), 4: (74, 15, 0),
             5: (71, 14, 0), 6: (136, 28, -100), 7: (125, 25, 0), 8: (171, 35, 0),
             9: (175, 36, 0), 10: (195, 40, 0), 11: (0, 0, 0), 12: (0, 0, 0),
             13: (265, 54, 0), 14: (194, 39, 0), 15: (317, 64, 0), 16: (100, 20, 0),
             17: (0, 0, 0), 18: (333, 68, 0), 19: (181, 37, 0), 20: (128, 26, 0),
             21: (0, 0, 0), 22: (0, 0, 0), 23: (0, 0, 0), 24: (0, 0, 0)}

# line no: (from, to, new miles, original miles, r, x, b_c, rating MVA)
_LINES = [
    (1, 1, 2, 3.98, 3.0, 0.0026, 0.0139, 0.4611, 175),
    (2, 1, 3, 53.15, 55.0, 0.0546, 0.2112, 0.0572, 175),
    (3, 1, 5, 22.78, 22.0, 0.0218, 0.0845, 0.0229, 175),
    (4, 2, 4, 33.16, 33.0, 0.0328, 0.1267, 0.0343, 175),
    (5, 2, 6, 44.49, 50.0, 0.0497, 0.1920, 0.0520, 175),
    (6, 3, 9, 33.56, 31.0, 0.0308, 0.1190, 0.0322, 175),
    (7, 3, 24, 0.00, 0.0, 0.0023, 0.0839, 0.0, 400),
    (8, 4, 9, 26.89, 27.0, 0.0268, 0.1037, 0.0281, 175),
    (9, 5, 10, 23.38, 23.0, 0.0228, 0.0883, 0.0239, 175),
    (10, 6, 10, 19.96, 16.0, 0.0139, 0.0605, 2.459, 175),
    (11, 7, 8, 16.04, 16.0, 0.0159, 0.0614, 0.0166, 175),
    (12, 8, 9, 43.51, 43.0, 0.0427, 0.1651, 0.0447, 175),
    (13, 8, 10, 43.51, 43.0, 0.0427, 0.1651, 0.0447, 175),
    (14, 9, 11, 0.00, 0.0, 0.0023, 0.0839, 0.0, 400),
    (15, 9, 12, 0.00, 0.0, 0.0023, 0.0839, 0.0, 400),
    (16, 10, 11, 0.00, 0.0, 0.0023, 0.0839, 0.0, 400),
    (17, 10, 12, 0.00, 0.0, 0.0023, 0.0839, 0.0, 400),
    (18, 11, 13, 35.95, 33.0, 0.0061, 0.0476, 0.0999, 500),
    (19, 11, 14, 33.98, 29.0, 0.0054, 0.0418, 0.0879, 500),
    (20, 12, 13, 35.95, 33.0, 0.0061, 0.0476, 0.0999, 500),
    (21, 12, 23, 70.48, 67.0, 0.0124, 0.0966, 0.2030, 500),
    (22, 13, 23, 57.39, 60.0, 0.0111, 0.0865, 0.1818, 500),
    (23, 14, 16, 27.36, 27.0, 0.0050, 0.0389, 0.0818, 500),
    (24, 15, 16, 12.18, 12.0, 0.0022, 0.0173, 0.0364, 500),
    (25, 15, 21, 35.44, 34.0, 0.0063, 0.0490, 0.1030, 500),
    (26, 15, 21, 35.44, 34.0, 0.0063, 0.0490, 0.1030, 500),
    (27, 15, 24, 38.43, 36.0, 0.0067, 0.0519, 0.1091, 500),
    (28, 16, 17, 18.77, 18.0, 0.0033, 0.0259, 0.0545, 500),
    (29, 16, 19, 18.57, 16.0, 0.0030, 0.0231, 0.0485, 500),
    (30, 17, 18, 10.75, 10.0, 0.0018, 0.0144, 0.0303, 500),
    (31, 17, 22, 72.84, 73.0, 0.0135, 0.1053, 0.2212, 500),
    (32, 18, 21, 17.96, 18.0, 0.0033, 0.0259, 0.0545, 500),
    (33, 18, 21, 17.96, 18.0, 0.0033, 0.0259, 0.0545, 500),
    (34, 19, 20, 29.97, 27.5, 0.0051, 0.0396, 0.0833, 500),
    (35, 19, 20, 29.97, 27.5, 0.0051, 0.0396, 0.0833, 500),
    (36, 20, 23, 15.59, 15.0, 0.0028, 0.0216, 0.0455, 500),
    (37, 20, 23, 15.59, 15.0, 0.0028, 0.0216, 0.0455, 500),
    (38, 21, 22, 51.83, 47.0, 0.0087, 0.0678, 0.1424, 500),
]

# Autotransformers on the five zero-length branches; series winding 0.12 ohm,
# common winding 0.18 ohm, high side is the 230 kV bus.
_AUTOS = [("A 1", 7, 24, 3), ("A 2", 14, 11, 9), ("A 3", 15, 12, 9),
          ("A 4", 16, 11, 10), ("A 5", 17, 12, 10)]

# Unit blocks: (type, count, bus) in catalogue order; terminal buses 25..57
# and generator edges 44..76 follow the same order.
_UNITS = [
    ("U20", 2, 1), ("U76", 2, 1), ("U20", 2, 2), ("U76", 2, 2),
    ("U100", 3, 7), ("U197", 3, 13), ("SYNC", 1, 14),
    ("U12", 5, 15), ("U155", 1, 15), ("U155", 1, 16), ("U400", 1, 18),
    ("U400", 1, 21), ("U50", 6, 22), ("U155", 2, 23), ("U350", 1, 23),
]

# type: (Pmin, Pmax, Qmin, Qmax, c2 $/MW^2h, c1 $/MWh, c0 $/h)
_UNIT_DATA = {
    "U12": (2.4, 12, 0, 6, 0.328412, 56.564, 86.3852),
    "U20": (15.8, 20, 0, 10, 0.0, 130.0, 400.6849),
    "U50": (10, 50, -10, 16, 0.0, 0.001, 0.001),
    "U76": (15.2, 76, -25, 30, 0.014142, 16.0811, 212.3076),
    "U100": (25, 100, 0, 60, 0.052672, 43.6615, 781.521),
    "U155": (54.3, 155, -50, 80, 0.008342, 12.3883, 382.2391),
    "U197": (69, 197, 0, 80, 0.00717, 48.5804, 832.7575),
    "U350": (140, 350, -25, 150, 0.004895, 11.8495, 665.1094),
    "U400": (100, 400, -50, 200, 0.000213, 4.4231, 395.3749),
    "SYNC": (0, 0, -50, 200, 0.0, 0.0, 0.0),
}

_KV_138 = tuple(range(1, 11))


def build_rts96(config: Config = DEFAULTS) -> Network:
    """Modified single-area RTS-96 with GSU transformers and geographic layout.

    The thermal capability curves attached here are desk-scale placeholders
    derived from `config`, not manufacturer data.
    """
    base = 100.0
    subs = {name: Substation(name, lat, lon, 0.1) for name, lat, lon in _SUBS}

    buses: dict[str, Bus] = {}
    for b in range(1, 25):
        pd, qd, bs = _BUS_LOAD[b]
        buses[str(b)] = Bus(
            str(b), f"SUB {_BUS_SUB[b]}", 138.0 if b in _KV_138 else 230.0,
            0.95, 1.05, 0.0, bs / base, pd / base, qd / base)

    branches: dict[str, Branch] = {}
    xfmrs: dict[str, Transformer] = {}
    auto_by_line = {line: (name, hi, lo) for name, line, hi, lo in _AUTOS}
    for no, f, t, new_len, orig_len, r, x, bc, rate in _LINES:
        # r, x scaled by the ratio of new to original length; the catalogue
        # values stand when the original length is zero (in-substation ties).
        beta = new_len / orig_len if orig_len > 0 else 1.0
        if no in auto_by_line:
            name, hi, lo = auto_by_line[no]
            xfmrs[name] = Transformer(name, XfmrKind.AUTO, str(hi), str(lo),
                                      0.12, 0.18, 1.8)
            branches[str(no)] = Branch(str(no), str(f), str(t), BranchKind.XFMR_EDGE,
                                       r, x, bc, rate / base,
                                       switchable=True, length_miles=0.0,
                                       transformer_id=name)
        else:
            branches[str(no)] = Branch(str(no), str(f), str(t), BranchKind.LINE,
                                       beta * r, beta * x, bc, rate / base,
                                       switchable=True, length_miles=new_len)

    gens: dict[str, Generator] = {}
    gen_no = 0
    for unit, count, bus in _UNITS:
        for _ in range(count):
            gen_no += 1
            pmin, pmax, qmin, qmax, c2, c1, c0 = _UNIT_DATA[unit]
            gname = f"G {gen_no}"
            term = str(24 + gen_no)          # terminal buses 25..57
            edge = str(43 + gen_no)          # generator edges 44..76
            buses[term] = Bus(term, f"SUB {_BUS_SUB[bus]}", 18.0, 0.95, 1.05)
            xfmrs[gname] = Transformer(gname, XfmrKind.GSU, str(bus), term, 0.3, None, 1.8)
            s = math.hypot(pmax, max(abs(qmin), abs(qmax))) / base
            branches[edge] = Branch(edge, term, str(bus), BranchKind.GEN_EDGE,
                                    0.0, 0.0, 0.0, s, switchable=True,
                                    transformer_id=gname)
            # cost coefficients stay in $/h, $/MWh, $/MW^2h; power bounds in pu
            gens[gname] = Generator(gname, term, c0, c1, c2,
                                    pmin / base, pmax / base,
                                    qmin / base, qmax / base,
                                    transformer_id=gname)

    net = Network(buses=buses, substations=subs, branches=branches,
                  transformers=xfmrs, generators=gens,
                  mva_base=base, mu=1000.0, theta_bar=math.radians(30.0))
    net = _attach_default_curves(net, config)
    validate_network(net)
    return net


def _attach_default_curves(net: Network, config: Config) -> Network:
    """Fill missing thermal curves: full rating at zero GIC, sloping down."""
    fixed = {}
    xfmr_edge = {br.transformer_id: br for br in net.branches.values()
                 if br.transformer_id is not None}
    for tid, tr in net.transformers.items():
        if tr.eta0 is not None:
            fixed[tid] = tr
            continue
        ibar = net.branch_ibar(xfmr_edge[tid])
        fixed[tid] = Transformer(
            tr.id, tr.kind, tr.high_bus, tr.low_bus, tr.w1, tr.w2, tr.k,
            eta0=ibar, eta1=config.thermal_eta1_ratio * ibar,
            eta2=config.thermal_eta2_ratio * ibar, ratio=tr.ratio)
    return Network(buses=net.buses, substations=net.substations,
                   branches=net.branches, transformers=fixed,
                   generators=net.generators, mva_base=net.mva_base,
                   mu=net.mu, theta_bar=net.theta_bar)


def build_validation_case() -> Network:
    """Six-bus GIC benchmark (two GSUs, one autotransformer, three grounds)."""
    text = importlib.resources.files("gicots.data").joinpath("gic6.grid").read_text()
    return parse_network(text)


# Benchmark scenario the six-bus case was laid out for: uniform eastward field.
GIC6_FIELD_VPM = 10.0
GIC6_FIELD_DIR_DEG = 0.0

_BUILTIN = {"rts96": build_rts96, "gic6": build_validation_case}


def builtin_case(name: str) -> Network:
    try:
        return _BUILTIN[name]()
    except KeyError:
        raise ValueError(f"unknown built-in case {name!r}; choose from {sorted(_BUILTIN)}") from None
