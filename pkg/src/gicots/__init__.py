"""GIC-aware optimal transmission switching toolkit."""

__version__ = "0.1.0"

from .net import (Branch, BranchKind, Bus, Generator, Network, NetworkError,
                  Substation, Transformer, XfmrKind, load_network,
                  parse_network, serialize_network)
from .dc import (DcNetwork, GicState, GmdScenario, WindingRole,
                 build_dc_network, effective_gic, line_emf, solve_gic)
from .cases import build_rts96, build_validation_case, builtin_case

__all__ = [
    "Branch", "BranchKind", "Bus", "Generator", "Network", "NetworkError",
    "Substation", "Transformer", "XfmrKind", "load_network", "parse_network",
    "serialize_network", "DcNetwork", "GicState", "GmdScenario", "WindingRole",
    "build_dc_network", "effective_gic", "line_emf", "solve_gic",
    "build_rts96", "build_validation_case", "builtin_case", "__version__",
]
