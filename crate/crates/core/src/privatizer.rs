//! Tree-based Gaussian mechanism for continual release of sufficient
//! statistics.
//!
//! A privatizer owns a binary tree of noise nodes. Pop `c` returns the sum of
//! node noises over the dyadic cover of `[1, c]`; pop `0` returns a dedicated
//! root node. Each node is a symmetrized `(d+1)×(d+1)` Gaussian matrix whose
//! top-left block becomes `H` and whose last column becomes `h`.
//!
//! Node noise is drawn lazily from a ChaCha stream keyed on `(seed, node)`,
//! so the result is independent of the order in which nodes are touched.

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PrivacyError {
    #[error("perturbation queue exhausted after {capacity} pops")]
    Exhausted { capacity: u64 },
    #[error("invalid privacy budget: {0}")]
    InvalidBudget(String),
}

/// Symmetric noise pair added to a released `(gram, moment)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Perturbation {
    pub matrix: DMatrix<f64>,
    pub vector: DVector<f64>,
}

impl Perturbation {
    pub fn zeros(d: usize) -> Self {
        Self {
            matrix: DMatrix::zeros(d, d),
            vector: DVector::zeros(d),
        }
    }

    pub fn dim(&self) -> usize {
        self.vector.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrivacyBudget {
    pub epsilon: f64,
    pub delta: f64,
    /// Maximum number of upload increments the tree covers.
    pub t_c: u64,
    /// Tree depth.
    pub nu: u32,
}

impl PrivacyBudget {
    pub fn new(epsilon: f64, delta: f64, t_c: u64) -> Result<Self, PrivacyError> {
        if !(epsilon > 0.0 && epsilon.is_finite()) {
            return Err(PrivacyError::InvalidBudget(format!("epsilon = {epsilon}")));
        }
        if !(delta > 0.0 && delta < 1.0) {
            return Err(PrivacyError::InvalidBudget(format!("delta = {delta}")));
        }
        if t_c == 0 {
            return Err(PrivacyError::InvalidBudget("t_c = 0".into()));
        }
        Ok(Self { epsilon, delta, t_c, nu: tree_depth(t_c) })
    }

    /// Budget whose tree covers `⌈d·ln T / ln(min{U, D})⌉ + 1` uploads.
    pub fn for_horizon(
        epsilon: f64,
        delta: f64,
        d: usize,
        horizon: u64,
        upload_threshold: f64,
        download_threshold: f64,
    ) -> Result<Self, PrivacyError> {
        Self::new(epsilon, delta, upload_capacity(d, horizon, upload_threshold, download_threshold)?)
    }
}

/// `⌈d·ln T / ln(min{U, D})⌉ + 1`.
pub fn upload_capacity(d: usize, horizon: u64, upload: f64, download: f64) -> Result<u64, PrivacyError> {
    let thr = upload.min(download);
    if !(thr > 1.0) {
        return Err(PrivacyError::InvalidBudget(format!("thresholds must exceed 1, got {thr}")));
    }
    let raw = (d as f64 * (horizon.max(2) as f64).ln() / thr.ln()).ceil();
    // `as` saturates on overflow
    Ok((raw as u64).saturating_add(1))
}

/// `⌈log₂(t_c + 1)⌉ + 1`.
pub fn tree_depth(t_c: u64) -> u32 {
    let x = t_c.saturating_add(1);
    let ceil_log2 = if x <= 1 { 0 } else { 64 - (x - 1).leading_zeros() };
    ceil_log2 + 1
}

/// `64·ν·ln(2/δ)² / ε²`, the per-entry variance of every node.
pub fn noise_variance(budget: &PrivacyBudget) -> f64 {
    let l = (2.0 / budget.delta).ln();
    64.0 * budget.nu as f64 * l * l / (budget.epsilon * budget.epsilon)
}

/// `8√2·ν·ln(4/δ)·(4√d + 2·ln(2mL/α)) / ε`.
pub fn rho_bound(epsilon: f64, delta: f64, d: usize, m: usize, servers: usize, alpha: f64, nu: u32) -> f64 {
    8.0 * 2f64.sqrt() * nu as f64 * (4.0 / delta).ln()
        * (4.0 * (d as f64).sqrt() + 2.0 * (2.0 * (m * servers) as f64 / alpha).ln())
        / epsilon
}

/// Identifier of a tree node covering `[index·2^level + 1, (index+1)·2^level]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum NodeId {
    Root,
    Tree { level: u32, index: u64 },
}

impl NodeId {
    fn stream(self) -> u64 {
        match self {
            NodeId::Root => 0,
            NodeId::Tree { level, index } => ((level as u64 + 1) << 56) | (index & ((1 << 56) - 1)),
        }
    }
}

/// Nodes whose intervals partition `[1, c]`; empty cover maps to the root.
pub fn dyadic_cover(c: u64) -> Vec<NodeId> {
    if c == 0 {
        return vec![NodeId::Root];
    }
    let mut nodes = Vec::with_capacity(c.count_ones() as usize);
    let mut start = 0u64;
    for level in (0..64).rev() {
        if c & (1u64 << level) != 0 {
            nodes.push(NodeId::Tree { level, index: start >> level });
            start += 1u64 << level;
        }
    }
    nodes
}

#[derive(Debug, Clone)]
pub struct Privatizer {
    d: usize,
    seed: u64,
    std_dev: f64,
    capacity: u64,
    popped: u64,
    nodes: HashMap<NodeId, DMatrix<f64>>,
}

impl Privatizer {
    pub fn new(budget: &PrivacyBudget, d: usize, seed: u64) -> Self {
        Self {
            d,
            seed,
            std_dev: noise_variance(budget).sqrt(),
            capacity: budget.t_c.saturating_add(1),
            popped: 0,
            nodes: HashMap::new(),
        }
    }

    /// Noise-free privatizer for non-private runs. Every pop is zero and the
    /// queue never runs out.
    pub fn disabled(d: usize) -> Self {
        Self {
            d,
            seed: 0,
            std_dev: 0.0,
            capacity: u64::MAX,
            popped: 0,
            nodes: HashMap::new(),
        }
    }

    pub fn is_disabled(&self) -> bool {
        self.std_dev == 0.0
    }

    pub fn popped(&self) -> u64 {
        self.popped
    }

    pub fn capacity(&self) -> u64 {
        self.capacity
    }

    pub fn next_perturbation(&mut self) -> Result<Perturbation, PrivacyError> {
        if self.popped >= self.capacity {
            return Err(PrivacyError::Exhausted { capacity: self.capacity });
        }
        let c = self.popped;
        self.popped += 1;
        Ok(self.partial_sum(c))
    }

    /// Perturbation for pop `c`, without advancing the queue.
    pub fn partial_sum(&mut self, c: u64) -> Perturbation {
        if self.is_disabled() {
            return Perturbation::zeros(self.d);
        }
        let mut total = DMatrix::zeros(self.d + 1, self.d + 1);
        for node in dyadic_cover(c) {
            total += self.node_noise(node);
        }
        split(&total, self.d)
    }

    /// Symmetrized `(d+1)×(d+1)` noise of one node.
    pub fn node_noise(&mut self, node: NodeId) -> &DMatrix<f64> {
        let (seed, d, std_dev) = (self.seed, self.d, self.std_dev);
        self.nodes.entry(node).or_insert_with(|| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(node.stream());
            let raw = DMatrix::from_fn(d + 1, d + 1, |_, _| {
                let z: f64 = StandardNormal.sample(&mut rng);
                z * std_dev
            });
            (&raw + raw.transpose()) * std::f64::consts::FRAC_1_SQRT_2
        })
    }
}

fn split(total: &DMatrix<f64>, d: usize) -> Perturbation {
    Perturbation {
        matrix: total.view((0, 0), (d, d)).into_owned(),
        vector: total.view((0, d), (d, 1)).column(0).into_owned(),
    }
}
