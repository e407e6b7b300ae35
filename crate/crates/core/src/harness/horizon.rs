//! Closed-form diagnostics: the round count after which clusters are
//! correct with high probability, and the communication bound.

use crate::error::Result;
use crate::privatizer::{rho_bound, PrivacyBudget};
use crate::stats::SpectralBounds;

use super::config::ExperimentConfig;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HorizonTerms {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
    pub e: f64,
    /// `max{A, B, C, D, E}`.
    pub per_user: f64,
    /// `16n·ln(T/α) + 4n·T̄`.
    pub t0: f64,
}

impl HorizonTerms {
    /// The calculator's answer, `2·T₀`.
    pub fn horizon(&self) -> f64 {
        2.0 * self.t0
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HorizonInputs {
    pub n: usize,
    pub m: usize,
    pub servers: usize,
    pub d: usize,
    pub horizon: u64,
    pub gamma: f64,
    pub sigma0: f64,
    pub epsilon: f64,
    pub delta: f64,
    pub alpha: f64,
    pub lambda_x: f64,
    pub nu: u32,
}

impl HorizonInputs {
    pub fn from_config(cfg: &ExperimentConfig) -> Result<Self> {
        let a = &cfg.algorithm;
        let budget = PrivacyBudget::for_horizon(a.epsilon, a.delta, cfg.world.d, a.horizon, a.upload, a.download)?;
        Ok(Self {
            n: cfg.world.n,
            m: cfg.world.m,
            servers: cfg.world.servers,
            d: cfg.world.d,
            horizon: a.horizon,
            gamma: cfg.world.gamma,
            sigma0: cfg.world.sigma0,
            epsilon: a.epsilon,
            delta: a.delta,
            alpha: cfg.alpha(),
            lambda_x: cfg.lambda_x(),
            nu: budget.nu,
        })
    }
}

pub fn detection_horizon(p: &HorizonInputs) -> HorizonTerms {
    let lx = p.lambda_x;
    let g2 = p.gamma * p.gamma;
    let s96 = (96.0 * p.sigma0).powi(2);
    let d = p.d as f64;
    let nu = p.nu as f64;
    let ln4d = (4.0 / p.delta).ln();
    let a = s96 * (2.0 / p.alpha).ln() / (lx * g2);
    let b = s96 * d / (lx * g2) * (4608.0 * p.sigma0 * p.sigma0 / (lx * g2)).ln();
    let c = 192f64.powi(2) * 6.0 * 2f64.sqrt() * nu * ln4d * d.sqrt() / (p.epsilon * lx * g2);
    let dd = 192f64.powi(2) * 3.0 * 2f64.sqrt() * nu * ln4d * (2.0 * (p.m * p.servers) as f64 / p.alpha).ln()
        / (p.epsilon * lx * g2);
    let e = 1024.0 / (lx * lx) * (512.0 * p.n as f64 * d / (lx * lx * p.alpha)).ln();
    let per_user = a.max(b).max(c).max(dd).max(e);
    let n = p.n as f64;
    let t0 = 16.0 * n * (p.horizon as f64 / p.alpha).ln() + 4.0 * n * per_user;
    HorizonTerms { a, b, c, d: dd, e, per_user, t0 }
}

/// Communication bound of the private protocol:
///
/// `mL·(log₂T + d·ln(ρ_max/ρ_min + T/(dρ_min))/ln(min{U,D})
///      + d·ln(ρ_max/ρ_min + 2T₀/(dρ_min))·log₂(2T₀)/ln(min{U,D}))`
///
/// with `2T₀` capped at `T` (no phase can start after the horizon).
pub fn communication_bound(p: &HorizonInputs, upload: f64, download: f64) -> f64 {
    let thr = upload.min(download);
    let rho = rho_bound(p.epsilon, p.delta, p.d, p.m, p.servers, p.alpha, p.nu);
    let bounds = SpectralBounds::from_rho(rho, p.d, p.horizon, thr, 0.0);
    let d = p.d as f64;
    let t = p.horizon as f64;
    let ratio = bounds.rho_max / bounds.rho_min;
    let two_t0 = detection_horizon(p).horizon().min(t).max(2.0);
    let phase = t.max(2.0).log2();
    let steady = d * (ratio + t / (d * bounds.rho_min)).ln() / thr.ln();
    let early = d * (ratio + two_t0 / (d * bounds.rho_min)).ln() * two_t0.log2() / thr.ln();
    (p.m * p.servers) as f64 * (phase + steady + early)
}
