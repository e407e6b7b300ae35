//! Local servers: per-user statistics, the similarity graph, and the
//! per-local-cluster sharing state.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::policy::argmax_first;
use crate::privatizer::{Perturbation, Privatizer};
use crate::stats::{self, confidence_f, ridge_estimate, SufficientStatistics};

use super::PrivatizerFactory;

/// Sharing state of one connected component of a server's graph.
#[derive(Debug, Clone)]
pub struct LocalCluster {
    /// Sorted global user ids.
    pub members: Vec<usize>,
    pub synced: SufficientStatistics,
    pub upload_buffer: SufficientStatistics,
    /// Perturbation already folded into what this cluster has released.
    pub current: Perturbation,
    /// Perturbation folded into the pending upload buffer.
    pub next: Perturbation,
    pub privatizer: Privatizer,
}

impl LocalCluster {
    fn new(members: Vec<usize>, d: usize, privatizer: Privatizer) -> Self {
        Self {
            members,
            synced: SufficientStatistics::zeros(d),
            upload_buffer: SufficientStatistics::zeros(d),
            current: Perturbation::zeros(d),
            next: Perturbation::zeros(d),
            privatizer,
        }
    }

    /// `(3ρI + next − current, next_h − current_h, 0)`.
    pub fn reset_buffer(&mut self, rho: f64) {
        let mut gram = &self.next.matrix - &self.current.matrix;
        for i in 0..gram.nrows() {
            gram[(i, i)] += 3.0 * rho;
        }
        self.upload_buffer = SufficientStatistics {
            gram,
            moment: &self.next.vector - &self.current.vector,
            count: 0.0,
        };
    }

    /// After an upload: the pending perturbation becomes current and a new
    /// one is drawn for the fresh buffer.
    pub fn rotate(&mut self, rho: f64) -> Result<()> {
        let fresh = self.privatizer.next_perturbation()?;
        self.current = std::mem::replace(&mut self.next, fresh);
        self.reset_buffer(rho);
        Ok(())
    }
}

/// One cluster's phase-start release.
#[derive(Debug, Clone)]
pub struct PhaseUpload {
    pub server: usize,
    pub cluster: usize,
    pub members: Vec<usize>,
    /// `(2ρI + H, h, 0) + Σ (V, b, T)` over members.
    pub stats: SufficientStatistics,
    pub perturbation: Perturbation,
}

#[derive(Debug, Clone)]
pub struct LocalServer {
    pub id: usize,
    pub users: Vec<usize>,
    pub user_stats: Vec<SufficientStatistics>,
    /// Adjacency over local positions.
    pub graph: Vec<Vec<bool>>,
    /// Local position to cluster index.
    pub labels: Vec<usize>,
    pub clusters: Vec<LocalCluster>,
    d: usize,
}

impl LocalServer {
    /// Complete graph over `users`, one local cluster.
    pub fn new(id: usize, users: Vec<usize>, d: usize, factory: &mut PrivatizerFactory) -> Self {
        Self::with_graph(id, users, d, true, factory)
    }

    pub fn with_graph(id: usize, users: Vec<usize>, d: usize, complete: bool, factory: &mut PrivatizerFactory) -> Self {
        let n = users.len();
        let graph = (0..n).map(|a| (0..n).map(|b| complete && a != b).collect()).collect();
        let mut server = Self {
            id,
            user_stats: vec![SufficientStatistics::zeros(d); n],
            users,
            graph,
            labels: vec![0; n],
            clusters: Vec::new(),
            d,
        };
        server.relabel(factory);
        server
    }

    pub fn position(&self, user: usize) -> Option<usize> {
        self.users.binary_search(&user).ok()
    }

    pub fn cluster_of(&self, user: usize) -> Option<usize> {
        self.position(user).map(|p| self.labels[p])
    }

    pub fn num_edges(&self) -> usize {
        self.graph.iter().map(|row| row.iter().filter(|&&e| e).count()).sum::<usize>() / 2
    }

    /// Removes every edge whose endpoint estimates are farther apart than
    /// `alpha1·(F(T₁) + F(T₂))`, then recomputes components. Returns whether
    /// any cluster roster changed.
    pub fn delete_edges(&mut self, alpha1: f64, lambda: f64, factory: &mut PrivatizerFactory) -> Result<bool> {
        let estimates = self
            .user_stats
            .iter()
            .map(|s| ridge_estimate(s, lambda))
            .collect::<Result<Vec<_>, _>>()?;
        let widths = self
            .user_stats
            .iter()
            .map(|s| confidence_f(s.count))
            .collect::<Result<Vec<_>, _>>()?;
        let n = self.users.len();
        for a in 0..n {
            for b in (a + 1)..n {
                if self.graph[a][b] && (&estimates[a] - &estimates[b]).norm() > alpha1 * (widths[a] + widths[b]) {
                    self.graph[a][b] = false;
                    self.graph[b][a] = false;
                }
            }
        }
        Ok(self.relabel(factory))
    }

    /// Recomputes components, keeping the state of clusters whose roster is
    /// unchanged. Clusters are ordered by their smallest member.
    fn relabel(&mut self, factory: &mut PrivatizerFactory) -> bool {
        let components = connected_components(&self.graph);
        let mut old: Vec<Option<LocalCluster>> = std::mem::take(&mut self.clusters).into_iter().map(Some).collect();
        let mut changed = false;
        for (j, comp) in components.iter().enumerate() {
            let members: Vec<usize> = comp.iter().map(|&p| self.users[p]).collect();
            for &p in comp {
                self.labels[p] = j;
            }
            let kept = old.iter_mut().find(|c| c.as_ref().is_some_and(|c| c.members == members));
            match kept.and_then(Option::take) {
                Some(cluster) => self.clusters.push(cluster),
                None => {
                    changed = true;
                    self.clusters.push(LocalCluster::new(members, self.d, factory.make()));
                }
            }
        }
        changed
    }

    /// Draws one perturbation per cluster and returns `I_{s,ℓ}`.
    pub fn build_phase_upload(&mut self, rho: f64) -> Result<Vec<PhaseUpload>> {
        let d = self.d;
        let mut out = Vec::with_capacity(self.clusters.len());
        for (j, cluster) in self.clusters.iter_mut().enumerate() {
            let pert = cluster.privatizer.next_perturbation()?;
            let mut stats = SufficientStatistics {
                gram: &pert.matrix + DMatrix::<f64>::identity(d, d) * (2.0 * rho),
                moment: pert.vector.clone(),
                count: 0.0,
            };
            for &u in &cluster.members {
                let p = self.users.binary_search(&u).expect("member on server");
                stats.add_assign(&self.user_stats[p]);
            }
            out.push(PhaseUpload {
                server: self.id,
                cluster: j,
                members: cluster.members.clone(),
                stats,
                perturbation: pert,
            });
        }
        Ok(out)
    }

    /// Highest UCB score on `cluster`'s synced statistics.
    pub fn recommend(&self, cluster: usize, items: &[DVector<f64>], beta: f64, floor: f64) -> Result<usize> {
        let synced = &self.clusters[cluster].synced;
        let chol = stats::cholesky(&synced.gram, floor)?;
        Ok(argmax_first(items.iter().map(|x| stats::ucb_with_factor(x, &chol, &synced.moment, beta))))
    }

    /// Adds `(xxᵀ, yx, 1)` to the user's statistics and the cluster's upload buffer.
    pub fn record_feedback(&mut self, user: usize, cluster: usize, x: &DVector<f64>, y: f64) -> Result<()> {
        let p = self.position(user).ok_or(Error::Membership { user, server: self.id, cluster })?;
        if self.labels[p] != cluster {
            return Err(Error::Membership { user, server: self.id, cluster });
        }
        self.user_stats[p].observe(x, y);
        self.clusters[cluster].upload_buffer.observe(x, y);
        Ok(())
    }
}

/// Components of an adjacency matrix, each sorted, ordered by first element.
pub fn connected_components(adj: &[Vec<bool>]) -> Vec<Vec<usize>> {
    let n = adj.len();
    let mut seen = vec![false; n];
    let mut out = Vec::new();
    for start in 0..n {
        if seen[start] {
            continue;
        }
        seen[start] = true;
        let mut comp = vec![start];
        let mut stack = vec![start];
        while let Some(a) = stack.pop() {
            for b in 0..n {
                if adj[a][b] && !seen[b] {
                    seen[b] = true;
                    comp.push(b);
                    stack.push(b);
                }
            }
        }
        comp.sort_unstable();
        out.push(comp);
    }
    out
}
