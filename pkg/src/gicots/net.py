"""AC network domain model, text-format parsing and serialization.

Conventions fixed at parse time: electrical quantities in per-unit on the
declared MVA base, winding/grounding resistances in ohms, line lengths in
miles, coordinates in degrees, angle limits in radians internally (degrees in
files).  A `Network` is immutable after construction and safe to share across
threads.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Mapping


class NetworkError(ValueError):
    """Raised for schema violations, dangling references and bad values.

    The message always names the offending section/field path.
    """


class BranchKind(Enum):
    LINE = "LINE"
    XFMR_EDGE = "XFMR_EDGE"
    GEN_EDGE = "GEN_EDGE"


class XfmrKind(Enum):
    GSU = "GSU"
    AUTO = "AUTO"


@dataclass(frozen=True)
class Substation:
    id: str
    latitude: float
    longitude: float
    rg_ohm: float | None  # None marks an explicitly ungrounded substation


@dataclass(frozen=True)
class Bus:
    id: str
    substation_id: str
    base_kv: float
    v_lo: float
    v_hi: float
    g: float = 0.0
    b: float = 0.0
    d_p: float = 0.0
    d_q: float = 0.0


@dataclass(frozen=True)
class Branch:
    id: str
    from_bus: str
    to_bus: str
    kind: BranchKind
    r: float
    x: float
    b_c: float
    s: float
    i_bar: float | None = None  # None -> s / min endpoint v_lo
    switchable: bool = True
    length_miles: float = 0.0
    transformer_id: str | None = None


@dataclass(frozen=True)
class Transformer:
    id: str
    kind: XfmrKind
    high_bus: str
    # Second terminal: the low-voltage bus for AUTO, the generator terminal
    # bus for GSU (whose delta winding keeps it out of the DC circuit).
    low_bus: str
    w1: float  # series winding (AUTO) / HV primary winding (GSU), ohm/phase
    w2: float | None = None  # common winding, AUTO only
    k: float = 1.8  # reactive loss factor
    eta0: float | None = None
    eta1: float | None = None
    eta2: float | None = None
    ratio: float = 1.0


@dataclass(frozen=True)
class Generator:
    id: str
    bus: str
    c0: float
    c1: float
    c2: float
    gp_lo: float
    gp_hi: float
    gq_lo: float
    gq_hi: float
    transformer_id: str | None = None


@dataclass(frozen=True)
class Network:
    buses: Mapping[str, Bus]
    substations: Mapping[str, Substation]
    branches: Mapping[str, Branch]
    transformers: Mapping[str, Transformer]
    generators: Mapping[str, Generator]
    mva_base: float = 100.0
    mu: float = 1000.0  # $ per MW (or MVar) of shed load
    theta_bar: float = math.radians(30.0)

    @property
    def theta_max(self) -> float:
        """Big-M angle bound: |AC edges| * theta_bar, derived on demand."""
        return len(self.branches) * self.theta_bar

    def branch_ibar(self, br: Branch) -> float:
        if br.i_bar is not None:
            return br.i_bar
        vmin = min(self.buses[br.from_bus].v_lo, self.buses[br.to_bus].v_lo)
        return br.s / vmin

    def gen_edge_of(self, gen: Generator) -> Branch:
        for br in self.branches.values():
            if br.kind is BranchKind.GEN_EDGE and gen.bus in (br.from_bus, br.to_bus):
                return br
        raise NetworkError(f"generators[{gen.id}]: no GEN_EDGE touches bus {gen.bus}")


def _err(path: str, msg: str) -> NetworkError:
    return NetworkError(f"{path}: {msg}")


def validate_network(net: Network) -> None:
    """Check every structural invariant; raises NetworkError naming the path."""
    for sid, sub in net.substations.items():
        if abs(sub.latitude) > 90.0:
            raise _err(f"substations[{sid}].latitude", "outside [-90, 90]")
        if sub.rg_ohm is not None and sub.rg_ohm <= 0.0:
            raise _err(f"substations[{sid}].rg_ohm", "must be > 0 or marked ungrounded")
    for bid, bus in net.buses.items():
        if bus.substation_id not in net.substations:
            raise _err(f"buses[{bid}].substation_id",
                       f"unknown substation {bus.substation_id!r}")
        if not (0.0 < bus.v_lo <= bus.v_hi):
            raise _err(f"buses[{bid}]", "requires 0 < v_lo <= v_hi")
        if bus.base_kv <= 0.0:
            raise _err(f"buses[{bid}].base_kv", "must be positive")
    for tid, tr in net.transformers.items():
        for fieldname, busref in (("high_bus", tr.high_bus), ("low_bus", tr.low_bus)):
            if busref not in net.buses:
                raise _err(f"transformers[{tid}].{fieldname}", f"unknown bus {busref!r}")
        if tr.w1 <= 0.0:
            raise _err(f"transformers[{tid}].w1", "must be > 0")
        if tr.kind is XfmrKind.AUTO and (tr.w2 is None or tr.w2 <= 0.0):
            raise _err(f"transformers[{tid}].w2", "AUTO requires w2 > 0")
        if tr.eta2 is not None and tr.eta2 > 0.0:
            raise _err(f"transformers[{tid}].eta2", "capability curve must bend down")
        if tr.ratio <= 0.0:
            raise _err(f"transformers[{tid}].ratio", "must be > 0")
    for brid, br in net.branches.items():
        for fieldname, busref in (("from_bus", br.from_bus), ("to_bus", br.to_bus)):
            if busref not in net.buses:
                raise _err(f"branches[{brid}].{fieldname}", f"unknown bus {busref!r}")
        if br.kind in (BranchKind.LINE, BranchKind.XFMR_EDGE) and br.x == 0.0:
            raise _err(f"branches[{brid}].x", "must be nonzero for LINE/XFMR_EDGE")
        if br.length_miles < 0.0:
            raise _err(f"branches[{brid}].length_miles", "must be >= 0")
        if br.kind in (BranchKind.XFMR_EDGE, BranchKind.GEN_EDGE):
            if br.transformer_id is None or br.transformer_id not in net.transformers:
                raise _err(f"branches[{brid}].transformer_id",
                           f"unknown transformer {br.transformer_id!r}")
        if br.s <= 0.0:
            raise _err(f"branches[{brid}].s", "must be > 0")
    for gid, gen in net.generators.items():
        if gen.bus not in net.buses:
            raise _err(f"generators[{gid}].bus", f"unknown bus {gen.bus!r}")
        if gen.c2 < 0.0:
            raise _err(f"generators[{gid}].c2", "dispatch cost must be convex")
        if gen.gp_lo > gen.gp_hi:
            raise _err(f"generators[{gid}]", "requires gp_lo <= gp_hi")
        if gen.transformer_id is not None and gen.transformer_id not in net.transformers:
            raise _err(f"generators[{gid}].transformer_id",
                       f"unknown transformer {gen.transformer_id!r}")
        # exactly one GEN_EDGE per generator terminal bus
        touching = [br for br in net.branches.values()
                    if br.kind is BranchKind.GEN_EDGE and gen.bus in (br.from_bus, br.to_bus)]
        if len(touching) != 1:
            raise _err(f"generators[{gid}]",
                       f"bus {gen.bus} must touch exactly one GEN_EDGE, found {len(touching)}")


# ---------------------------------------------------------------------------
# Text format.  Comma-separated rows inside [section] headers; '-' marks an
# absent optional value; '#' starts a comment.
# ---------------------------------------------------------------------------

_SECTIONS = ("params", "substations", "buses", "branches", "transformers", "generators")


def _opt_float(tok: str) -> float | None:
    return None if tok == "-" else float(tok)


def _fmt_opt(v: float | None) -> str:
    return "-" if v is None else repr(v)


def parse_network(text: str) -> Network:
    """Parse the self-contained network document format into a Network."""
    sections: dict[str, list[tuple[int, list[str]]]] = {s: [] for s in _SECTIONS}
    current: str | None = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            name = line[1:-1].strip().lower()
            if name not in sections:
                raise _err(f"line {lineno}", f"unknown section [{name}]")
            current = name
            continue
        if current is None:
            raise _err(f"line {lineno}", "content before any [section] header")
        sections[current].append((lineno, [tok.strip() for tok in line.split(",")]))

    params: dict[str, float] = {}
    for lineno, toks in sections["params"]:
        kv = ",".join(toks)
        if "=" not in kv:
            raise _err(f"params line {lineno}", "expected key = value")
        key, val = (part.strip() for part in kv.split("=", 1))
        params[key] = float(val)
    known = {"mva_base", "mu", "theta_bar_deg"}
    unknown = set(params) - known
    if unknown:
        raise _err("params", f"unknown keys {sorted(unknown)}")

    def need(toks, n, path):
        if len(toks) != n:
            raise _err(path, f"expected {n} fields, got {len(toks)}")

    subs: dict[str, Substation] = {}
    for lineno, toks in sections["substations"]:
        need(toks, 4, f"substations line {lineno}")
        sid = toks[0]
        subs[sid] = Substation(sid, float(toks[1]), float(toks[2]), _opt_float(toks[3]))

    buses: dict[str, Bus] = {}
    for lineno, toks in sections["buses"]:
        need(toks, 9, f"buses line {lineno}")
        bid = toks[0]
        buses[bid] = Bus(bid, toks[1], *(float(t) for t in toks[2:9]))

    xfmrs: dict[str, Transformer] = {}
    for lineno, toks in sections["transformers"]:
        need(toks, 11, f"transformers line {lineno}")
        tid = toks[0]
        try:
            kind = XfmrKind(toks[1])
        except ValueError:
            raise _err(f"transformers[{tid}].kind", f"unknown kind {toks[1]!r}") from None
        xfmrs[tid] = Transformer(
            tid, kind, toks[2], toks[3], float(toks[4]), _opt_float(toks[5]),
            float(toks[6]), _opt_float(toks[7]), _opt_float(toks[8]),
            _opt_float(toks[9]), float(toks[10]))

    branches: dict[str, Branch] = {}
    for lineno, toks in sections["branches"]:
        need(toks, 12, f"branches line {lineno}")
        brid = toks[0]
        try:
            kind = BranchKind(toks[3])
        except ValueError:
            raise _err(f"branches[{brid}].kind", f"unknown kind {toks[3]!r}") from None
        branches[brid] = Branch(
            brid, toks[1], toks[2], kind, float(toks[4]), float(toks[5]),
            float(toks[6]), float(toks[7]), _opt_float(toks[8]),
            toks[9] in ("1", "yes", "true"), float(toks[10]),
            None if toks[11] == "-" else toks[11])

    gens: dict[str, Generator] = {}
    for lineno, toks in sections["generators"]:
        need(toks, 10, f"generators line {lineno}")
        gid = toks[0]
        gens[gid] = Generator(
            gid, toks[1], *(float(t) for t in toks[2:9]),
            None if toks[9] == "-" else toks[9])

    net = Network(
        buses=buses, substations=subs, branches=branches,
        transformers=xfmrs, generators=gens,
        mva_base=params.get("mva_base", 100.0),
        mu=params.get("mu", 1000.0),
        theta_bar=math.radians(params.get("theta_bar_deg", 30.0)))
    validate_network(net)
    return net


def serialize_network(net: Network) -> str:
    """Mirror of parse_network; round-trips to an identical Network."""
    out = ["[params]",
           f"mva_base = {net.mva_base!r}",
           f"mu = {net.mu!r}",
           f"theta_bar_deg = {math.degrees(net.theta_bar)!r}",
           "",
           "[substations]",
           "# id, latitude, longitude, rg_ohm"]
    for s in net.substations.values():
        out.append(f"{s.id}, {s.latitude!r}, {s.longitude!r}, {_fmt_opt(s.rg_ohm)}")
    out += ["", "[buses]",
            "# id, substation_id, base_kv, v_lo, v_hi, g, b, d_p, d_q"]
    for b in net.buses.values():
        out.append(f"{b.id}, {b.substation_id}, {b.base_kv!r}, {b.v_lo!r}, {b.v_hi!r}, "
                   f"{b.g!r}, {b.b!r}, {b.d_p!r}, {b.d_q!r}")
    out += ["", "[transformers]",
            "# id, kind, high_bus, low_bus, w1, w2, k, eta0, eta1, eta2, ratio"]
    for t in net.transformers.values():
        out.append(f"{t.id}, {t.kind.value}, {t.high_bus}, {t.low_bus}, {t.w1!r}, "
                   f"{_fmt_opt(t.w2)}, {t.k!r}, {_fmt_opt(t.eta0)}, {_fmt_opt(t.eta1)}, "
                   f"{_fmt_opt(t.eta2)}, {t.ratio!r}")
    out += ["", "[branches]",
            "# id, from_bus, to_bus, kind, r, x, b_c, s, i_bar, switchable, length_miles, transformer_id"]
    for br in net.branches.values():
        out.append(f"{br.id}, {br.from_bus}, {br.to_bus}, {br.kind.value}, {br.r!r}, "
                   f"{br.x!r}, {br.b_c!r}, {br.s!r}, {_fmt_opt(br.i_bar)}, "
                   f"{'yes' if br.switchable else 'no'}, {br.length_miles!r}, "
                   f"{br.transformer_id or '-'}")
    out += ["", "[generators]",
            "# id, bus, c0, c1, c2, gp_lo, gp_hi, gq_lo, gq_hi, transformer_id"]
    for g in net.generators.values():
        out.append(f"{g.id}, {g.bus}, {g.c0!r}, {g.c1!r}, {g.c2!r}, {g.gp_lo!r}, "
                   f"{g.gp_hi!r}, {g.gq_lo!r}, {g.gq_hi!r}, {g.transformer_id or '-'}")
    out.append("")
    return "\n".join(out)


def load_network(path: str) -> Network:
    with open(path) as fh:
        return parse_network(fh.read())
