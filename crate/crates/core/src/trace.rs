//! Per-round records of one `(policy, seed)` run.

/// Column order of every trace file.
pub const TRACE_HEADER: [&str; 8] = [
    "t",
    "policy",
    "seed",
    "instant_regret",
    "cumulative_regret",
    "comm_count_cumulative",
    "num_global_clusters",
    "partition_correct",
];

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    pub t: u64,
    pub instant_regret: f64,
    pub cumulative_regret: f64,
    pub comm_count_cumulative: u64,
    pub num_global_clusters: usize,
    pub partition_correct: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub policy: String,
    pub seed: u64,
    pub rows: Vec<TraceRecord>,
}

impl Trace {
    pub fn new(policy: &str, seed: u64) -> Self {
        Self { policy: policy.to_string(), seed, rows: Vec::new() }
    }

    pub fn final_regret(&self) -> f64 {
        self.rows.last().map_or(0.0, |r| r.cumulative_regret)
    }

    pub fn final_comm(&self) -> u64 {
        self.rows.last().map_or(0, |r| r.comm_count_cumulative)
    }

    /// Cumulative regret after round `t` (0 before the first round).
    pub fn regret_at(&self, t: u64) -> f64 {
        if t == 0 {
            return 0.0;
        }
        self.rows[(t as usize - 1).min(self.rows.len() - 1)].cumulative_regret
    }
}
