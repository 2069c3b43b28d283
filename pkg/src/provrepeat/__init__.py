"""Provenance-driven repeatability toolkit.

Builds causally valid provenance graphs from execution-trace logs, certifies
exact re-execution via graph isomorphism, plans partial and modified repeats,
summarizes replete graphs, and stores container payloads with content-defined
deduplication.  The ``provrepeat`` command exposes the same functionality as
a Git-like CLI.
"""

from .dependency_inference import (
    CausalPathWitness,
    CycleReport,
    depends,
    detect_cycles,
    find_witness,
    infer_provenance,
    version_entities,
)
from .isomorphism import (
    Bijection,
    NodeSignature,
    RepeatVerdict,
    build_hash_values,
    find_bijection,
    verify_exact_repeat,
)
from .prov_graph import (
    GraphBuilder,
    ProvEdge,
    ProvenanceGraph,
    ProvLabel,
    ProvNode,
    export_dot,
    export_prov_json,
    import_prov_json,
)
from .repeat_planner import (
    RerunSet,
    SubContainerPlan,
    build_sub_container,
    get_deps,
    get_procs,
    plan_modified_repeat,
    plan_partial_repeat,
    simulate_replay,
)
from .store import (
    Chunk,
    ChunkStore,
    ContainerManifest,
    chunk_stream,
    materialize,
    put_container,
)
from .summarizer import (
    Grouping,
    SummaryGraph,
    ancestry_degree_grouping,
    annotate_shared_files,
    collapse_packability,
    collapse_similarity,
    expand,
    expand_all,
    summarize_collapse,
    summary_stats,
)
from .trace_model import (
    ExecutionTrace,
    NodeKind,
    TimeInterval,
    TraceEdge,
    TraceLabel,
    TraceNode,
    Violation,
    parse_trace_log,
    serialize_trace,
    validate_trace,
)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
