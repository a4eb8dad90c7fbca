"""Deadline-driven fine-grained operator scheduling for stream dataflows.

The package pairs a priority-scheduling runtime (priority contexts carried
with messages, laxity/deadline policies, a two-level operator scheduler) with
a deterministic virtual-time simulator and a multi-tenant experiment harness.
"""
from .context import (
    ContextConverter,
    PriorityContext,
    RcStore,
    ReplyContext,
    build_ctx_at_operator,
    build_ctx_at_source,
    cxt_convert,
    prepare_reply,
    process_ctx_from_reply,
)
from .harness import run, summarize, sweep, write_report
from .model import (
    DataflowGraph,
    Event,
    Message,
    OperatorSpec,
    OutputRecord,
    compute_latency,
    static_critical_path,
    validate_graph,
)
from .policy import (
    CostEstimate,
    Priority,
    TokenBucket,
    UNTOKENED,
    edf_deadline,
    issue_token,
    llf_deadline,
    sjf_priority,
    token_priority,
)
from .progress import (
    ModelUnfitError,
    RegressionModel,
    frontier,
    model_update,
    progress_map_event,
    progress_map_ingestion,
    transform,
)
from .runtime import Clock, OperatorRuntime, RunReport, Simulator, profile_update, simulate
from .scenario import (
    JobSetup,
    Scenario,
    ScenarioError,
    SourceProfile,
    load_scenario,
    make_pipeline_graph,
    with_config,
)
from .scheduler import (
    CameoDispatcher,
    FifoDispatcher,
    LocalFirstDispatcher,
    ReadyQueue,
    SchedulerConfig,
)
from .workload import (
    TenantGroupSpec,
    build_scenario,
    bulk_analytics,
    calibrate_constraint,
    generate_arrivals,
    latency_sensitive,
)

__version__ = "0.1.0"
