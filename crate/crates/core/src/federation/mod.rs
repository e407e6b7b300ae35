//! Federated clustering of bandits with cluster-level differential privacy.
//!
//! [`Federation`] drives the whole protocol: phase-start cluster detection
//! (edge deletion on every local server, merging on the global server,
//! renewal of shared statistics when the grouping changes) and, inside each
//! phase, recommendation followed by the determinant-triggered upload and
//! download checks. The same engine runs the non-private and instantly
//! synchronized ablations through [`FederationConfig`].

pub mod global;
pub mod local;

use std::cell::Cell;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::environment::{Round, World};
use crate::error::{Error, Result};
use crate::policy::Policy;
use crate::privatizer::{rho_bound, PrivacyBudget, Privatizer};
use crate::rng::{lane_rng, Lane};
use crate::stats::{beta_width, SpectralBounds, DET_FLOOR};

pub use global::{merge_global, GlobalServer, Member, Partition};
pub use local::{connected_components, LocalCluster, LocalServer, PhaseUpload};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrivacyParams {
    pub epsilon: f64,
    pub delta: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SyncMode {
    /// Determinant-ratio triggered uploads and downloads.
    Buffered,
    /// Every observation is uploaded and fanned out in the same round.
    Instant,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FederationConfig {
    pub horizon: u64,
    /// Number of clusters assumed by the confidence and noise bounds.
    pub num_clusters: usize,
    /// Failure probability.
    pub alpha: f64,
    pub alpha1: f64,
    pub alpha2: f64,
    pub lambda: f64,
    pub sigma0: f64,
    pub upload_threshold: f64,
    pub download_threshold: f64,
    pub sync: SyncMode,
    pub privacy: Option<PrivacyParams>,
    pub clustering: bool,
    pub count_detection_uploads: bool,
}

impl FederationConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.sync == SyncMode::Buffered && !(self.upload_threshold > 1.0 && self.download_threshold > 1.0) {
            return bad(format!("U and D must exceed 1 (U={}, D={})", self.upload_threshold, self.download_threshold));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return bad(format!("alpha {} not in (0, 1)", self.alpha));
        }
        if !(self.alpha1 >= 0.0 && self.alpha2 >= 0.0) {
            return bad("alpha1 and alpha2 must be non-negative".into());
        }
        if !(self.lambda > 0.0) {
            return bad(format!("lambda {} must be positive", self.lambda));
        }
        if let Some(p) = self.privacy {
            if !(p.epsilon > 0.0) || !(p.delta > 0.0 && p.delta < 1.0) {
                return bad(format!("invalid privacy budget ({}, {})", p.epsilon, p.delta));
            }
            if !(self.upload_threshold > 1.0 && self.download_threshold > 1.0) {
                return bad("private runs size the noise tree from U and D, both must exceed 1".into());
            }
        }
        Ok(())
    }
}

/// `sqrt(D·(1 + (L'−1)(U−1)) + U − 1)`.
pub fn gamma_bound(upload: f64, download: f64, num_sharing: usize) -> f64 {
    (download * (1.0 + (num_sharing as f64 - 1.0) * (upload - 1.0)) + upload - 1.0).sqrt()
}

/// Hands out privatizers with seeds drawn from the policy lane.
#[derive(Debug, Clone)]
pub struct PrivatizerFactory {
    budget: Option<PrivacyBudget>,
    d: usize,
    rng: ChaCha8Rng,
    created: u64,
}

impl PrivatizerFactory {
    pub fn new(budget: Option<PrivacyBudget>, d: usize, seed: u64) -> Self {
        Self { budget, d, rng: lane_rng(seed, Lane::Policy), created: 0 }
    }

    pub fn disabled(d: usize) -> Self {
        Self::new(None, d, 0)
    }

    pub fn make(&mut self) -> Privatizer {
        self.created += 1;
        match &self.budget {
            Some(b) => Privatizer::new(b, self.d, self.rng.random()),
            None => Privatizer::disabled(self.d),
        }
    }

    pub fn created(&self) -> u64 {
        self.created
    }
}

/// Outcome of the last played round.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct SyncEvents {
    pub uploaded: bool,
    pub downloads: usize,
}

#[derive(Debug, Clone)]
pub struct Federation {
    name: String,
    config: FederationConfig,
    servers: Vec<LocalServer>,
    global: GlobalServer,
    factory: PrivatizerFactory,
    rho: f64,
    bounds: SpectralBounds,
    floor: f64,
    comm: u64,
    phase: u32,
    started: bool,
    acting: Option<Member>,
    last_events: SyncEvents,
    last_uploads: Vec<PhaseUpload>,
    correct: Cell<Option<bool>>,
}

impl Federation {
    pub fn new(name: &str, world: &World, config: FederationConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let d = world.dim();
        let servers_n = world.num_servers;
        let (budget, rho, bounds, floor) = match config.privacy {
            Some(p) => {
                let budget = PrivacyBudget::for_horizon(
                    p.epsilon,
                    p.delta,
                    d,
                    config.horizon,
                    config.upload_threshold,
                    config.download_threshold,
                )?;
                let rho = rho_bound(p.epsilon, p.delta, d, config.num_clusters, servers_n, config.alpha, budget.nu);
                let thr = config.upload_threshold.min(config.download_threshold);
                (Some(budget), rho, SpectralBounds::from_rho(rho, d, config.horizon, thr, 0.0), 0.0)
            }
            None => (None, 0.0, SpectralBounds::regularized(config.lambda), DET_FLOOR),
        };
        let mut factory = PrivatizerFactory::new(budget, d, seed);
        let servers: Vec<LocalServer> = (0..servers_n)
            .map(|l| LocalServer::new(l, world.users_on(l), d, &mut factory))
            .collect();
        let global = GlobalServer::new(&servers, d);
        Ok(Self {
            name: name.to_string(),
            config,
            servers,
            global,
            factory,
            rho,
            bounds,
            floor,
            comm: 0,
            phase: 0,
            started: false,
            acting: None,
            last_events: SyncEvents::default(),
            last_uploads: Vec::new(),
            correct: Cell::new(None),
        })
    }

    pub fn config(&self) -> &FederationConfig {
        &self.config
    }

    pub fn servers(&self) -> &[LocalServer] {
        &self.servers
    }

    pub fn global(&self) -> &GlobalServer {
        &self.global
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn bounds(&self) -> SpectralBounds {
        self.bounds
    }

    /// Diagonal shift used inside determinants and solves.
    pub fn floor(&self) -> f64 {
        self.floor
    }

    pub fn phase(&self) -> u32 {
        self.phase
    }

    pub fn acting(&self) -> Option<Member> {
        self.acting
    }

    pub fn last_events(&self) -> SyncEvents {
        self.last_events
    }

    /// Phase uploads of the most recent detection.
    pub fn last_phase_uploads(&self) -> &[PhaseUpload] {
        &self.last_uploads
    }

    pub fn privatizers_created(&self) -> u64 {
        self.factory.created()
    }

    /// Detection and adjustment at the start of phase `s`.
    pub fn begin_phase(&mut self, s: u32) -> Result<bool> {
        self.phase = s;
        let mut roster_changed = false;
        if self.config.clustering {
            for server in &mut self.servers {
                roster_changed |= server.delete_edges(self.config.alpha1, self.config.lambda, &mut self.factory)?;
            }
        }
        let mut uploads = Vec::new();
        for server in &mut self.servers {
            uploads.extend(server.build_phase_upload(self.rho)?);
        }
        if self.config.count_detection_uploads {
            self.comm += uploads.len() as u64;
        }
        let partition = if self.config.clustering {
            merge_global(&uploads, self.config.alpha2, self.floor, s)?
        } else {
            Partition::single(uploads.iter().map(|u| (u.server, u.cluster)).collect(), s)
        };
        let renew = !self.started || roster_changed || !partition.same_grouping(&self.global.partition);
        if renew {
            self.global
                .renew_cluster_info(&mut self.servers, &uploads, partition, self.rho, &mut self.factory)?;
            self.correct.set(None);
        }
        self.started = true;
        self.last_uploads = uploads;
        Ok(renew)
    }

    fn member_of(&self, world: &World, user: usize) -> Result<Member> {
        let l = world.assignment[user];
        let j = self.servers[l]
            .cluster_of(user)
            .ok_or(Error::Membership { user, server: l, cluster: usize::MAX })?;
        Ok((l, j))
    }

    /// Confidence width of `member` under its current group size.
    pub fn beta_for(&self, member: Member) -> Result<f64> {
        let (l, j) = member;
        let cluster = &self.servers[l].clusters[j];
        let sharing = self.global.group_members(self.global.group_of(member)).len();
        let bounds = if self.rho > 0.0 {
            self.bounds.with_kappa(cluster.current.vector.norm() / self.rho.sqrt())
        } else {
            self.bounds
        };
        Ok(beta_width(
            cluster.synced.count,
            sharing,
            &bounds,
            self.config.sigma0,
            self.config.alpha,
            self.config.num_clusters,
            self.servers.len(),
            cluster.synced.moment.len(),
        )?)
    }

    fn sync_after_feedback(&mut self, member: Member) -> Result<()> {
        let k = self.global.group_of(member);
        let mut events = SyncEvents::default();
        match self.config.sync {
            SyncMode::Buffered => {
                events.uploaded = self.global.check_upload(
                    &mut self.servers,
                    member,
                    self.config.upload_threshold,
                    self.rho,
                    self.floor,
                )?;
                events.downloads =
                    self.global.check_download(&mut self.servers, k, self.config.download_threshold, self.floor)?;
            }
            SyncMode::Instant => {
                self.global.apply_upload(&mut self.servers, member, self.rho)?;
                events.uploaded = true;
                let members = self.global.group_members(k).to_vec();
                for m in members {
                    if self.global.download_buffers[m.0][m.1].count > 0.0 {
                        self.global.apply_download(&mut self.servers, m);
                        events.downloads += 1;
                    }
                }
            }
        }
        self.comm += events.uploaded as u64 + events.downloads as u64;
        self.last_events = events;
        Ok(())
    }
}

impl Policy for Federation {
    fn name(&self) -> &str {
        &self.name
    }

    fn begin_round(&mut self, t: u64) -> Result<()> {
        // phases start at t = 2^s − 1
        if (t + 1).is_power_of_two() {
            self.begin_phase((t + 1).trailing_zeros())?;
        }
        Ok(())
    }

    fn choose(&mut self, world: &World, round: &Round) -> Result<usize> {
        let member = self.member_of(world, round.user)?;
        self.acting = Some(member);
        let beta = self.beta_for(member)?;
        self.servers[member.0].recommend(member.1, &round.items, beta, self.floor)
    }

    fn observe(&mut self, world: &World, round: &Round, chosen: usize, reward: f64) -> Result<()> {
        let member = self.member_of(world, round.user)?;
        self.servers[member.0].record_feedback(round.user, member.1, &round.items[chosen], reward)?;
        self.sync_after_feedback(member)
    }

    fn comm_count(&self) -> u64 {
        self.comm
    }

    fn num_clusters(&self) -> usize {
        self.global.partition.groups.len()
    }

    fn partition_correct(&self, world: &World) -> bool {
        if let Some(c) = self.correct.get() {
            return c;
        }
        let c = self.global.partition.user_groups(&self.servers) == world.true_partition();
        self.correct.set(Some(c));
        c
    }
}
