"""Chain event graph toolkit: exact probability trees, stage and position
partitions, graph construction, causal manipulations, and back-door
identification checked against brute-force enumeration."""

from .tree import (
    SINK,
    SUB_ROOT,
    AtomicEvent,
    Label,
    ProbabilityTree,
    format_fraction,
    parse_fraction,
    parse_tree,
)
from .equivalence import Partition, compute_positions, compute_stages, positions_of
from .ceg import (
    CegEdge,
    ChainEventGraph,
    EventVariable,
    build_ceg,
    build_ceg_auto,
    parse_variables,
)
from .intervention import (
    ActiveBackgroundSplit,
    Manipulation,
    amenability_report,
    apply_manipulation,
    background_route_factor,
    classify_simple,
    is_amenable,
    is_forced_to,
    is_positioned,
    is_staged,
    parse_manipulation,
    pure_manipulation,
)
from .identification import (
    Distribution,
    IdentificationReport,
    SuffixVariable,
    backdoor_identify,
    brute_force_effect,
    extend_variable,
    find_wz,
    forced_position_identities,
    identify_forced_set,
    suffix_variable_from_leaf_variable,
)
from .bn import (
    DiscreteBN,
    bn_to_tree,
    check_bn_ceg_shape,
    do_to_manipulation,
    parse_bn,
    truncated_marginal,
)

__version__ = "0.1.0"
