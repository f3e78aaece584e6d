//! Activity, reliability and queueing networks: simulators, symbolic
//! unrolling, and queueing performance measures.

mod dag;
mod queueing;
mod unroll;

pub use dag::{
    simulate_activity, simulate_reliability, ActivityNetwork, Dag, DagKind, DagNetwork,
    ReliabilityNetwork,
};
pub use queueing::{
    measures, run_queueing, simulate_queueing, stochastic_measure_value, EventTrace, Measures,
    Observer, QueueingNetwork, Router, Routing, RoutingTable, RunSummary, ServiceDraw,
    ServiceRecord, Status, TargetRecorder, TraceRecorder, DEFAULT_EVENT_CAP, MIXTURE_STREAM,
};
pub use unroll::{unroll_queueing, unroll_queueing_at, Unrolled, DEFAULT_NODE_BUDGET};
