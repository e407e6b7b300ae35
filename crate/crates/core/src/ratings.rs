//! Builds a [`World`] from a `(user, item, rating)` file.
//!
//! Observed ratings are centered on their global mean, missing entries are
//! zero, and a rank-`d` truncated SVD (block subspace iteration) yields user
//! and item factors. User vectors are scaled so the largest has unit norm;
//! item embeddings are unit-normalized and become the item pool.

use std::collections::BTreeMap;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::seq::index::sample;
use rand_distr::{Distribution, StandardNormal};

use crate::environment::{assign_servers, EnvError, World};
use crate::rng::{lane_rng, Lane};

const SUBSPACE_ITERS: usize = 60;
const SAME_VECTOR_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct Rating {
    pub user: i64,
    pub item: i64,
    pub value: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Delimiter {
    Tab,
    Comma,
    DoubleColon,
}

impl Delimiter {
    fn detect(line: &str) -> Option<Self> {
        if line.contains("::") {
            Some(Self::DoubleColon)
        } else if line.contains('\t') {
            Some(Self::Tab)
        } else if line.contains(',') {
            Some(Self::Comma)
        } else {
            None
        }
    }

    fn split<'a>(&self, line: &'a str) -> Vec<&'a str> {
        match self {
            Self::Tab => line.split('\t').collect(),
            Self::Comma => line.split(',').collect(),
            Self::DoubleColon => line.split("::").collect(),
        }
    }
}

pub fn parse_ratings(text: &str, path: &str) -> Result<Vec<Rating>, EnvError> {
    let err = |line: usize, msg: String| EnvError::Parse { path: path.to_string(), line, msg };
    let mut delim = None;
    let mut out = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let lineno = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let dl = match delim {
            Some(d) => d,
            None => {
                let d = Delimiter::detect(line).ok_or_else(|| err(lineno, "no delimiter among tab, comma, '::'".into()))?;
                delim = Some(d);
                d
            }
        };
        let fields: Vec<&str> = dl.split(line).into_iter().map(str::trim).collect();
        if fields.len() < 3 {
            return Err(err(lineno, format!("expected 3 fields, found {}", fields.len())));
        }
        let user = fields[0].parse::<i64>();
        let item = fields[1].parse::<i64>();
        let value = fields[2].parse::<f64>();
        match (user, item, value) {
            (Ok(user), Ok(item), Ok(value)) if value.is_finite() => out.push(Rating { user, item, value }),
            // a non-numeric first data line is a header
            _ if out.is_empty() && fields[0].parse::<f64>().is_err() => continue,
            _ => return Err(err(lineno, format!("cannot parse record '{line}'"))),
        }
    }
    Ok(out)
}

/// Loads a ratings file and factorizes it into a `d`-dimensional world of
/// `n_select` randomly chosen users spread over `servers` servers.
pub fn load_ratings_dataset(
    path: &Path,
    d: usize,
    n_select: usize,
    servers: usize,
    sigma0: f64,
    seed: u64,
) -> Result<World, EnvError> {
    let text = std::fs::read_to_string(path)?;
    let ratings = parse_ratings(&text, &path.display().to_string())?;
    world_from_ratings(&ratings, d, n_select, servers, sigma0, seed)
}

pub fn world_from_ratings(
    ratings: &[Rating],
    d: usize,
    n_select: usize,
    servers: usize,
    sigma0: f64,
    seed: u64,
) -> Result<World, EnvError> {
    if d == 0 || servers == 0 || n_select == 0 {
        return Err(EnvError::Infeasible("d, L and n_select must be positive".into()));
    }
    if servers > n_select {
        return Err(EnvError::Infeasible(format!("L = {servers} exceeds n_select = {n_select}")));
    }
    let users: BTreeMap<i64, usize> = index_of(ratings.iter().map(|r| r.user));
    let items: BTreeMap<i64, usize> = index_of(ratings.iter().map(|r| r.item));
    if users.len() < n_select {
        return Err(EnvError::InsufficientData(format!(
            "{} users have ratings, {n_select} requested",
            users.len()
        )));
    }
    if d > users.len().min(items.len()) {
        return Err(EnvError::InsufficientData(format!(
            "rank {d} exceeds the {}x{} ratings matrix",
            users.len(),
            items.len()
        )));
    }

    let mean = ratings.iter().map(|r| r.value).sum::<f64>() / ratings.len() as f64;
    let mut matrix = DMatrix::<f64>::zeros(users.len(), items.len());
    for r in ratings {
        matrix[(users[&r.user], items[&r.item])] = r.value - mean;
    }

    let (user_factors, item_factors) = truncated_factors(&matrix, d, seed);

    let mut rng = lane_rng(seed, Lane::World);
    let mut chosen = sample(&mut rng, users.len(), n_select).into_vec();
    chosen.sort_unstable();
    let mut preferences = DMatrix::from_fn(n_select, d, |i, k| user_factors[(chosen[i], k)]);
    let max_norm = preferences.row_iter().map(|r| r.norm()).fold(0.0, f64::max);
    if max_norm > 0.0 {
        preferences /= max_norm;
    }

    let item_pool: Vec<DVector<f64>> = (0..item_factors.nrows())
        .map(|i| item_factors.row(i).transpose())
        .filter(|v: &DVector<f64>| v.norm() > 1e-12)
        .map(|v| v.normalize())
        .collect();
    if item_pool.is_empty() {
        return Err(EnvError::InsufficientData("all item embeddings vanish".into()));
    }

    let (membership, num_clusters, gap) = group_identical(&preferences);
    let assignment = assign_servers(n_select, servers, &mut rng);
    Ok(World {
        preferences,
        membership,
        assignment,
        num_clusters,
        num_servers: servers,
        gap,
        sigma0,
        clamp_rewards: false,
        item_pool: Some(item_pool),
    })
}

fn index_of(ids: impl Iterator<Item = i64>) -> BTreeMap<i64, usize> {
    let mut map: BTreeMap<i64, usize> = ids.map(|id| (id, 0)).collect();
    for (i, v) in map.values_mut().enumerate() {
        *v = i;
    }
    map
}

/// Rank-`d` factors `(U·Σ^½, V·Σ^½)` of `matrix` by block subspace iteration.
fn truncated_factors(matrix: &DMatrix<f64>, d: usize, seed: u64) -> (DMatrix<f64>, DMatrix<f64>) {
    let mut rng = lane_rng(seed ^ 0x5eed, Lane::World);
    let cols = matrix.ncols();
    let mut basis = DMatrix::from_fn(cols, d, |_, _| StandardNormal.sample(&mut rng)).qr().q();
    for _ in 0..SUBSPACE_ITERS {
        let left = (matrix * &basis).qr().q();
        basis = (matrix.transpose() * left).qr().q();
    }
    // project onto the converged subspace and take an exact small SVD there
    let projected = matrix * &basis;
    let svd = projected.svd(true, true);
    let u = svd.u.expect("left vectors");
    let vt = svd.v_t.expect("right vectors");
    let root = svd.singular_values.map(f64::sqrt);
    let rank = root.len().min(d);
    let user_factors = DMatrix::from_fn(matrix.nrows(), d, |i, k| if k < rank { u[(i, k)] * root[k] } else { 0.0 });
    let right = &basis * vt.transpose();
    let item_factors = DMatrix::from_fn(cols, d, |i, k| if k < rank { right[(i, k)] * root[k] } else { 0.0 });
    (user_factors, item_factors)
}

/// Groups rows that coincide within tolerance; returns the labels, the
/// number of groups and the smallest distance between distinct groups.
fn group_identical(preferences: &DMatrix<f64>) -> (Vec<usize>, usize, f64) {
    let n = preferences.nrows();
    let mut labels = vec![usize::MAX; n];
    let mut reps: Vec<usize> = Vec::new();
    for i in 0..n {
        let found = reps
            .iter()
            .position(|&r| (preferences.row(i) - preferences.row(r)).norm() <= SAME_VECTOR_TOL);
        labels[i] = match found {
            Some(k) => k,
            None => {
                reps.push(i);
                reps.len() - 1
            }
        };
    }
    let mut gap = f64::INFINITY;
    for a in 0..reps.len() {
        for b in (a + 1)..reps.len() {
            gap = gap.min((preferences.row(reps[a]) - preferences.row(reps[b])).norm());
        }
    }
    if !gap.is_finite() {
        gap = 0.0;
    }
    (labels, reps.len(), gap)
}
