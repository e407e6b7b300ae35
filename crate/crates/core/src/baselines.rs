//! Comparison policies.
//!
//! `linucb` and `club` are standalone; the remaining names are
//! configurations of [`Federation`]:
//!
//! | name        | clustering | sync      | privacy |
//! |-------------|------------|-----------|---------|
//! | `homo`      | off        | instant   | off     |
//! | `homo_dc`   | off        | buffered  | off     |
//! | `fclub`     | on         | instant   | off     |
//! | `fclub_dc`  | on         | buffered  | off     |
//! | `fclub_cdp` | on         | buffered  | on      |

use std::fmt;
use std::str::FromStr;

use nalgebra::DVector;

use crate::environment::{Round, World};
use crate::error::{Error, Result};
use crate::federation::{connected_components, Federation, FederationConfig, PrivacyParams, SyncMode};
use crate::policy::{argmax_first, simulate, Policy};
use crate::stats::{self, beta_width, confidence_f, ridge_estimate, SpectralBounds, SufficientStatistics};
use crate::trace::Trace;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Baseline {
    LinUcb,
    Club,
    Homo,
    HomoDc,
    Fclub,
    FclubDc,
    FclubCdp,
    /// Reserved; always errors.
    Sclub,
}

impl Baseline {
    pub const ALL: [Baseline; 7] = [
        Baseline::LinUcb,
        Baseline::Club,
        Baseline::Homo,
        Baseline::HomoDc,
        Baseline::Fclub,
        Baseline::FclubDc,
        Baseline::FclubCdp,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Baseline::LinUcb => "linucb",
            Baseline::Club => "club",
            Baseline::Homo => "homo",
            Baseline::HomoDc => "homo_dc",
            Baseline::Fclub => "fclub",
            Baseline::FclubDc => "fclub_dc",
            Baseline::FclubCdp => "fclub_cdp",
            Baseline::Sclub => "sclub",
        }
    }
}

impl fmt::Display for Baseline {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Baseline {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "linucb" => Baseline::LinUcb,
            "club" => Baseline::Club,
            "homo" => Baseline::Homo,
            "homo_dc" => Baseline::HomoDc,
            "fclub" => Baseline::Fclub,
            "fclub_dc" => Baseline::FclubDc,
            "fclub_cdp" => Baseline::FclubCdp,
            "sclub" => Baseline::Sclub,
            other => return Err(Error::UnknownBaseline(other.to_string())),
        })
    }
}

/// Algorithm parameters shared by all policies.
#[derive(Debug, Clone, PartialEq)]
pub struct AlgorithmParams {
    pub horizon: u64,
    pub num_clusters: usize,
    pub upload_threshold: f64,
    pub download_threshold: f64,
    pub alpha1: f64,
    pub alpha2: f64,
    pub lambda: f64,
    pub alpha: f64,
    pub sigma0: f64,
    pub epsilon: f64,
    pub delta: f64,
}

impl AlgorithmParams {
    pub fn federation(&self, baseline: Baseline) -> Result<FederationConfig> {
        let (clustering, sync, private) = match baseline {
            Baseline::Homo => (false, SyncMode::Instant, false),
            Baseline::HomoDc => (false, SyncMode::Buffered, false),
            Baseline::Fclub => (true, SyncMode::Instant, false),
            Baseline::FclubDc => (true, SyncMode::Buffered, false),
            Baseline::FclubCdp => (true, SyncMode::Buffered, true),
            other => return Err(Error::Config(format!("{other} is not a federation baseline"))),
        };
        Ok(FederationConfig {
            horizon: self.horizon,
            num_clusters: self.num_clusters,
            alpha: self.alpha,
            alpha1: self.alpha1,
            alpha2: self.alpha2,
            lambda: self.lambda,
            sigma0: self.sigma0,
            upload_threshold: self.upload_threshold,
            download_threshold: self.download_threshold,
            sync,
            privacy: private.then_some(PrivacyParams { epsilon: self.epsilon, delta: self.delta }),
            clustering,
            count_detection_uploads: clustering,
        })
    }

    fn regularized_beta(&self, count: f64, d: usize, servers: usize) -> Result<f64> {
        Ok(beta_width(
            count,
            1,
            &SpectralBounds::regularized(self.lambda),
            self.sigma0,
            self.alpha,
            self.num_clusters,
            servers,
            d,
        )?)
    }
}

pub fn build_policy(baseline: Baseline, world: &World, params: &AlgorithmParams, seed: u64) -> Result<Box<dyn Policy + Send>> {
    Ok(match baseline {
        Baseline::LinUcb => Box::new(LinUcb::new(world, params.clone())),
        Baseline::Club => Box::new(Club::new(world, params.clone(), true)),
        Baseline::Sclub => return Err(Error::NotImplemented("sclub".into())),
        fed => Box::new(Federation::new(fed.as_str(), world, params.federation(fed)?, seed)?),
    })
}

/// Runs one baseline for `params.horizon` rounds of `k` items.
pub fn run_baseline(baseline: Baseline, world: &World, params: &AlgorithmParams, k: usize, seed: u64) -> Result<Trace> {
    let mut policy = build_policy(baseline, world, params, seed)?;
    simulate(policy.as_mut(), world, params.horizon, k, seed, |_, _| Ok(()))
}

fn ucb_choice(stats: &SufficientStatistics, lambda: f64, items: &[DVector<f64>], beta: f64) -> Result<usize> {
    let chol = stats::cholesky(&stats.gram, lambda)?;
    Ok(argmax_first(items.iter().map(|x| stats::ucb_with_factor(x, &chol, &stats.moment, beta))))
}

// ── LinUCB ──────────────────────────────────────────────────────────────

/// Independent ridge UCB per user.
#[derive(Debug, Clone)]
pub struct LinUcb {
    params: AlgorithmParams,
    users: Vec<SufficientStatistics>,
    servers: usize,
}

impl LinUcb {
    pub fn new(world: &World, params: AlgorithmParams) -> Self {
        Self {
            users: vec![SufficientStatistics::zeros(world.dim()); world.num_users()],
            servers: world.num_servers,
            params,
        }
    }
}

impl Policy for LinUcb {
    fn name(&self) -> &str {
        "linucb"
    }

    fn choose(&mut self, world: &World, round: &Round) -> Result<usize> {
        let s = &self.users[round.user];
        let beta = self.params.regularized_beta(s.count, world.dim(), self.servers)?;
        ucb_choice(s, self.params.lambda, &round.items, beta)
    }

    fn observe(&mut self, _world: &World, round: &Round, chosen: usize, reward: f64) -> Result<()> {
        self.users[round.user].observe(&round.items[chosen], reward);
        Ok(())
    }

    fn num_clusters(&self) -> usize {
        self.users.len()
    }

    fn partition_correct(&self, world: &World) -> bool {
        world.num_clusters == world.num_users()
    }
}

// ── CLUB ────────────────────────────────────────────────────────────────

#[derive(Debug, Clone)]
struct ClubServer {
    users: Vec<usize>,
    graph: Vec<Vec<bool>>,
    components: Vec<Vec<usize>>,
    labels: Vec<usize>,
}

impl ClubServer {
    fn relabel(&mut self) {
        self.components = connected_components(&self.graph);
        for (c, comp) in self.components.iter().enumerate() {
            for &p in comp {
                self.labels[p] = c;
            }
        }
    }
}

/// Per-server graph clustering with edge checks after every observation;
/// no cross-server sharing.
#[derive(Debug, Clone)]
pub struct Club {
    params: AlgorithmParams,
    users: Vec<SufficientStatistics>,
    servers: Vec<ClubServer>,
    /// User to `(server, local position)`.
    location: Vec<(usize, usize)>,
}

impl Club {
    /// `complete = false` starts from an edgeless graph.
    pub fn new(world: &World, params: AlgorithmParams, complete: bool) -> Self {
        let mut location = vec![(0, 0); world.num_users()];
        let servers = (0..world.num_servers)
            .map(|l| {
                let users = world.users_on(l);
                for (p, &u) in users.iter().enumerate() {
                    location[u] = (l, p);
                }
                let n = users.len();
                let mut s = ClubServer {
                    graph: (0..n).map(|a| (0..n).map(|b| complete && a != b).collect()).collect(),
                    components: Vec::new(),
                    labels: vec![0; n],
                    users,
                };
                s.relabel();
                s
            })
            .collect();
        Self {
            users: vec![SufficientStatistics::zeros(world.dim()); world.num_users()],
            servers,
            location,
            params,
        }
    }

    fn cluster_stats(&self, user: usize) -> SufficientStatistics {
        let (l, p) = self.location[user];
        let server = &self.servers[l];
        let comp = &server.components[server.labels[p]];
        SufficientStatistics::sum(self.users[user].dim(), comp.iter().map(|&q| &self.users[server.users[q]]))
    }

    /// Current user grouping, sorted.
    pub fn user_groups(&self) -> Vec<Vec<usize>> {
        let mut out: Vec<Vec<usize>> = self
            .servers
            .iter()
            .flat_map(|s| s.components.iter().map(|c| c.iter().map(|&p| s.users[p]).collect::<Vec<_>>()))
            .collect();
        out.sort();
        out
    }
}

impl Policy for Club {
    fn name(&self) -> &str {
        "club"
    }

    fn choose(&mut self, world: &World, round: &Round) -> Result<usize> {
        let s = self.cluster_stats(round.user);
        let beta = self.params.regularized_beta(s.count, world.dim(), self.servers.len())?;
        ucb_choice(&s, self.params.lambda, &round.items, beta)
    }

    fn observe(&mut self, _world: &World, round: &Round, chosen: usize, reward: f64) -> Result<()> {
        let user = round.user;
        self.users[user].observe(&round.items[chosen], reward);
        let (l, p) = self.location[user];
        let own = ridge_estimate(&self.users[user], self.params.lambda)?;
        let own_f = confidence_f(self.users[user].count)?;
        let server = &mut self.servers[l];
        let mut deleted = false;
        for q in 0..server.users.len() {
            if !server.graph[p][q] {
                continue;
            }
            let other = &self.users[server.users[q]];
            let dist = (&own - ridge_estimate(other, self.params.lambda)?).norm();
            if dist > self.params.alpha1 * (own_f + confidence_f(other.count)?) {
                server.graph[p][q] = false;
                server.graph[q][p] = false;
                deleted = true;
            }
        }
        if deleted {
            server.relabel();
        }
        Ok(())
    }

    fn num_clusters(&self) -> usize {
        self.servers.iter().map(|s| s.components.len()).sum()
    }

    fn partition_correct(&self, world: &World) -> bool {
        self.user_groups() == world.true_partition()
    }
}
