//! Ranking metrics, the tabular value-iteration oracle, parameter counts,
//! latency benchmarks and held-out policy evaluation.

pub mod bench;
pub mod evaluate;
pub mod metrics;
pub mod oracle;
pub mod policy;

pub use bench::{bench_latency, LatencyReport, LatencyStats, MIN_REPETITIONS};
pub use evaluate::{evaluate_policies, render_table, EvalReport, TaskResult, AGGREGATION_NOTE};
pub use metrics::{average_precision, mean_average_precision, ndcg_at_k, precision_at_k};
pub use oracle::{bellman_backup, count_params, greedy_policy, sup_norm_diff, value_iteration};
pub use policy::{
    build_policy, PolicySources, RandomPolicy, RankingPolicy, StudentPolicy, TeacherPolicy, POLICY_NAMES,
};
