//! The global server: partition of local clusters, per-group statistics and
//! per-member download buffers, plus the upload/download protocol.

use std::collections::HashMap;

use crate::error::Result;
use crate::stats::{confidence_f, det_ratio, log_det, ridge_estimate, SufficientStatistics};

use super::local::{LocalServer, PhaseUpload};
use super::PrivatizerFactory;

/// A `(server, local cluster)` pair.
pub type Member = (usize, usize);

#[derive(Debug, Clone, PartialEq)]
pub struct Partition {
    /// Each group sorted; groups ordered by first member.
    pub groups: Vec<Vec<Member>>,
    /// Phase index of the last change.
    pub version: u32,
}

impl Partition {
    pub fn new(mut groups: Vec<Vec<Member>>, version: u32) -> Self {
        for g in &mut groups {
            g.sort_unstable();
        }
        groups.retain(|g| !g.is_empty());
        groups.sort();
        Self { groups, version }
    }

    pub fn single(members: Vec<Member>, version: u32) -> Self {
        Self::new(vec![members], version)
    }

    pub fn same_grouping(&self, other: &Partition) -> bool {
        self.groups == other.groups
    }

    pub fn group_index(&self) -> HashMap<Member, usize> {
        let mut map = HashMap::new();
        for (k, g) in self.groups.iter().enumerate() {
            for &m in g {
                map.insert(m, k);
            }
        }
        map
    }

    /// Users sharing statistics, one sorted list per group, ordered.
    pub fn user_groups(&self, servers: &[LocalServer]) -> Vec<Vec<usize>> {
        let mut out: Vec<Vec<usize>> = self
            .groups
            .iter()
            .map(|g| {
                let mut users: Vec<usize> = g
                    .iter()
                    .flat_map(|&(l, j)| servers[l].clusters[j].members.iter().copied())
                    .collect();
                users.sort_unstable();
                users
            })
            .collect();
        out.sort();
        out
    }
}

/// Links local clusters on different servers whose estimates
/// `Ṽ⁻¹b̃` are closer than `alpha2·(F(T̃₁) + F(T̃₂))` and returns the
/// components of that graph.
pub fn merge_global(uploads: &[PhaseUpload], alpha2: f64, floor: f64, version: u32) -> Result<Partition> {
    let estimates = uploads
        .iter()
        .map(|u| ridge_estimate(&u.stats, floor))
        .collect::<Result<Vec<_>, _>>()?;
    let widths = uploads
        .iter()
        .map(|u| confidence_f(u.stats.count))
        .collect::<Result<Vec<_>, _>>()?;
    let n = uploads.len();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut [usize], mut a: usize) -> usize {
        while parent[a] != a {
            parent[a] = parent[parent[a]];
            a = parent[a];
        }
        a
    }
    for a in 0..n {
        for b in (a + 1)..n {
            if uploads[a].server == uploads[b].server {
                continue;
            }
            if (&estimates[a] - &estimates[b]).norm() < alpha2 * (widths[a] + widths[b]) {
                let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
                parent[ra] = rb;
            }
        }
    }
    let mut groups: HashMap<usize, Vec<Member>> = HashMap::new();
    for a in 0..n {
        let r = find(&mut parent, a);
        groups.entry(r).or_default().push((uploads[a].server, uploads[a].cluster));
    }
    Ok(Partition::new(groups.into_values().collect(), version))
}

#[derive(Debug, Clone)]
pub struct GlobalServer {
    pub partition: Partition,
    pub global_stats: Vec<SufficientStatistics>,
    /// Indexed `[server][local cluster]`.
    pub download_buffers: Vec<Vec<SufficientStatistics>>,
    group_of: HashMap<Member, usize>,
    d: usize,
}

impl GlobalServer {
    /// One group holding every server's first local cluster, zero statistics.
    pub fn new(servers: &[LocalServer], d: usize) -> Self {
        let partition = Partition::single(servers.iter().map(|s| (s.id, 0)).collect(), 0);
        let download_buffers = servers
            .iter()
            .map(|s| vec![SufficientStatistics::zeros(d); s.clusters.len()])
            .collect();
        Self {
            group_of: partition.group_index(),
            global_stats: vec![SufficientStatistics::zeros(d); partition.groups.len()],
            partition,
            download_buffers,
            d,
        }
    }

    pub fn group_of(&self, member: Member) -> usize {
        self.group_of[&member]
    }

    pub fn group_members(&self, k: usize) -> &[Member] {
        &self.partition.groups[k]
    }

    /// Installs `partition`: every group's statistics become the sum of its
    /// members' phase uploads, members copy them, get a fresh privatizer and
    /// a buffer carrying only the perturbation rotation, and download buffers
    /// are cleared.
    pub fn renew_cluster_info(
        &mut self,
        servers: &mut [LocalServer],
        uploads: &[PhaseUpload],
        partition: Partition,
        rho: f64,
        factory: &mut PrivatizerFactory,
    ) -> Result<()> {
        let by_member: HashMap<Member, &PhaseUpload> = uploads.iter().map(|u| ((u.server, u.cluster), u)).collect();
        self.download_buffers = servers
            .iter()
            .map(|s| vec![SufficientStatistics::zeros(self.d); s.clusters.len()])
            .collect();
        self.global_stats = Vec::with_capacity(partition.groups.len());
        for group in &partition.groups {
            let total = SufficientStatistics::sum(self.d, group.iter().map(|m| &by_member[m].stats));
            for &(l, j) in group {
                let cluster = &mut servers[l].clusters[j];
                cluster.synced = total.clone();
                cluster.privatizer = factory.make();
                cluster.current = by_member[&(l, j)].perturbation.clone();
                cluster.next = cluster.privatizer.next_perturbation()?;
                cluster.reset_buffer(rho);
            }
            self.global_stats.push(total);
        }
        self.group_of = partition.group_index();
        self.partition = partition;
        Ok(())
    }

    /// Pushes `(l, j)`'s buffer to its group and peers, folds it into the
    /// member's own statistics and rotates its perturbation.
    pub fn apply_upload(&mut self, servers: &mut [LocalServer], member: Member, rho: f64) -> Result<()> {
        let (l, j) = member;
        let k = self.group_of(member);
        let delta = servers[l].clusters[j].upload_buffer.clone();
        self.global_stats[k].add_assign(&delta);
        for &(ol, oj) in &self.partition.groups[k] {
            if (ol, oj) != member {
                self.download_buffers[ol][oj].add_assign(&delta);
            }
        }
        let cluster = &mut servers[l].clusters[j];
        cluster.synced.add_assign(&delta);
        cluster.rotate(rho)
    }

    /// Uploads when `det(S + ΔS) / det(S) ≥ threshold`.
    pub fn check_upload(
        &mut self,
        servers: &mut [LocalServer],
        member: Member,
        threshold: f64,
        rho: f64,
        floor: f64,
    ) -> Result<bool> {
        let cluster = &servers[member.0].clusters[member.1];
        let inflated = &cluster.synced.gram + &cluster.upload_buffer.gram;
        if det_ratio(&inflated, &cluster.synced.gram, floor)? >= threshold {
            self.apply_upload(servers, member, rho)?;
            Ok(true)
        } else {
            Ok(false)
        }
    }

    pub fn apply_download(&mut self, servers: &mut [LocalServer], member: Member) {
        let (l, j) = member;
        let buffer = std::mem::replace(&mut self.download_buffers[l][j], SufficientStatistics::zeros(self.d));
        servers[l].clusters[j].synced.add_assign(&buffer);
    }

    /// Downloads to every member of group `k` with
    /// `det(S^g) / det(S^ℓ) ≥ threshold`; returns how many fired.
    pub fn check_download(&mut self, servers: &mut [LocalServer], k: usize, threshold: f64, floor: f64) -> Result<usize> {
        let global = log_det(&self.global_stats[k].gram, floor)?;
        let mut fired = 0;
        for idx in 0..self.partition.groups[k].len() {
            let member = self.partition.groups[k][idx];
            let local = log_det(&servers[member.0].clusters[member.1].synced.gram, floor)?;
            if (global - local).exp() >= threshold {
                self.apply_download(servers, member);
                fired += 1;
            }
        }
        Ok(fired)
    }
}
