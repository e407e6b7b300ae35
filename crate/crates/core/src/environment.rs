//! Ground truth: user preferences, cluster membership, server assignment,
//! round sampling, rewards and the regret oracle.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use thiserror::Error;

use crate::rng::{lane_rng, Lane};

#[derive(Debug, Error)]
pub enum EnvError {
    #[error("infeasible world: {0}")]
    Infeasible(String),
    #[error("chosen item {chosen} not in a set of {len} items")]
    ChosenNotInSet { chosen: usize, len: usize },
    #[error("{path}:{line}: {msg}")]
    Parse { path: String, line: usize, msg: String },
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Immutable ground truth shared by every policy in a run.
#[derive(Debug, Clone)]
pub struct World {
    /// Row `i` is user `i`'s preference vector.
    pub preferences: DMatrix<f64>,
    pub membership: Vec<usize>,
    pub assignment: Vec<usize>,
    pub num_clusters: usize,
    pub num_servers: usize,
    pub gap: f64,
    pub sigma0: f64,
    pub clamp_rewards: bool,
    /// Empirical item embeddings; `None` samples the unit sphere.
    pub item_pool: Option<Vec<DVector<f64>>>,
}

#[derive(Debug, Clone)]
pub struct Round {
    pub t: u64,
    pub user: usize,
    pub items: Vec<DVector<f64>>,
}

/// Independent environment lanes of one seeded run.
#[derive(Debug, Clone)]
pub struct EnvStreams {
    pub arrivals: ChaCha8Rng,
    pub items: ChaCha8Rng,
    pub noise: ChaCha8Rng,
}

impl EnvStreams {
    pub fn new(seed: u64) -> Self {
        Self {
            arrivals: lane_rng(seed, Lane::Arrivals),
            items: lane_rng(seed, Lane::Items),
            noise: lane_rng(seed, Lane::RewardNoise),
        }
    }
}

impl World {
    pub fn num_users(&self) -> usize {
        self.preferences.nrows()
    }

    pub fn dim(&self) -> usize {
        self.preferences.ncols()
    }

    pub fn theta(&self, user: usize) -> DVector<f64> {
        self.preferences.row(user).transpose()
    }

    pub fn users_on(&self, server: usize) -> Vec<usize> {
        (0..self.num_users()).filter(|&u| self.assignment[u] == server).collect()
    }

    /// Ground-truth clusters as sorted user lists, ordered by smallest member.
    pub fn true_partition(&self) -> Vec<Vec<usize>> {
        let mut groups = vec![Vec::new(); self.num_clusters];
        for (u, &c) in self.membership.iter().enumerate() {
            groups[c].push(u);
        }
        groups.retain(|g| !g.is_empty());
        groups.sort();
        groups
    }

    /// Draws the arriving user and `k` candidate items for round `t`.
    pub fn sample_round(&self, t: u64, k: usize, streams: &mut EnvStreams) -> Round {
        let user = streams.arrivals.random_range(0..self.num_users());
        let items = (0..k)
            .map(|_| match &self.item_pool {
                Some(pool) => pool[streams.items.random_range(0..pool.len())].clone(),
                None => unit_sphere(self.dim(), &mut streams.items),
            })
            .collect();
        Round { t, user, items }
    }

    /// `θᵀx + η`, `η ~ N(0, σ₀²)`. One noise draw per call regardless of `x`.
    pub fn sample_reward(&self, user: usize, x: &DVector<f64>, rng: &mut ChaCha8Rng) -> f64 {
        let z: f64 = StandardNormal.sample(rng);
        let y = self.expected_reward(user, x) + self.sigma0 * z;
        if self.clamp_rewards {
            y.clamp(0.0, 1.0)
        } else {
            y
        }
    }

    pub fn expected_reward(&self, user: usize, x: &DVector<f64>) -> f64 {
        self.preferences.row(user).transpose().dot(x)
    }

    pub fn instant_regret(&self, user: usize, items: &[DVector<f64>], chosen: usize) -> Result<f64, EnvError> {
        if chosen >= items.len() {
            return Err(EnvError::ChosenNotInSet { chosen, len: items.len() });
        }
        let best = items
            .iter()
            .map(|x| self.expected_reward(user, x))
            .fold(f64::NEG_INFINITY, f64::max);
        Ok((best - self.expected_reward(user, &items[chosen])).max(0.0))
    }
}

/// Standard Gaussian normalized to unit length.
pub fn unit_sphere(d: usize, rng: &mut impl Rng) -> DVector<f64> {
    loop {
        let v = DVector::<f64>::from_fn(d, |_, _| StandardNormal.sample(rng));
        let n = v.norm();
        if n > 1e-12 {
            return v / n;
        }
    }
}

/// Synthetic world with `m` orthogonal cluster vectors scaled so distinct
/// clusters sit `gamma` apart (`gamma ≤ √2` keeps every norm ≤ 1).
pub fn generate_world(
    n: usize,
    m: usize,
    servers: usize,
    d: usize,
    gamma: f64,
    sigma0: f64,
    seed: u64,
) -> Result<World, EnvError> {
    if n == 0 || m == 0 || servers == 0 || d == 0 {
        return Err(EnvError::Infeasible("n, m, L and d must be positive".into()));
    }
    if m > n || m > d || servers > n {
        return Err(EnvError::Infeasible(format!("need m <= n, m <= d, L <= n (n={n}, m={m}, L={servers}, d={d})")));
    }
    if !(gamma > 0.0 && gamma <= std::f64::consts::SQRT_2 + 1e-12) {
        return Err(EnvError::Infeasible(format!("gamma {gamma} outside (0, sqrt 2]")));
    }
    if !(sigma0 >= 0.0) {
        return Err(EnvError::Infeasible(format!("sigma0 {sigma0} < 0")));
    }
    let mut rng = lane_rng(seed, Lane::World);
    let gauss = DMatrix::<f64>::from_fn(d, m, |_, _| StandardNormal.sample(&mut rng));
    let q = gauss.qr().q();
    let scale = gamma / std::f64::consts::SQRT_2;

    let membership: Vec<usize> = (0..n).map(|i| i % m).collect();
    let preferences = DMatrix::from_fn(n, d, |i, k| scale * q[(k, membership[i])]);
    let assignment = assign_servers(n, servers, &mut rng);

    Ok(World {
        preferences,
        membership,
        assignment,
        num_clusters: m,
        num_servers: servers,
        gap: gamma,
        sigma0,
        clamp_rewards: false,
        item_pool: None,
    })
}

/// Shuffles users; the first `servers` go one per server, the rest uniformly.
pub(crate) fn assign_servers(n: usize, servers: usize, rng: &mut impl Rng) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let mut assignment = vec![0; n];
    for (pos, &u) in order.iter().enumerate() {
        assignment[u] = if pos < servers { pos } else { rng.random_range(0..servers) };
    }
    assignment
}
