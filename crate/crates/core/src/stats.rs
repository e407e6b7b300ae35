//! Ridge-regression sufficient statistics and the confidence quantities built
//! on top of them.
//!
//! Every server, buffer and upload package in the federation carries a
//! [`SufficientStatistics`] triple `(gram, moment, count)`. The functions here
//! are pure; they never mutate their inputs.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use thiserror::Error;

/// Diagonal floor applied inside determinant and inversion routines when a
/// gram carries no privacy offset (non-private mode).
pub const DET_FLOOR: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinalgError {
    #[error("matrix is singular or not positive definite")]
    Singular,
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("argument out of domain: {0}")]
    Domain(String),
}

/// Gram matrix, moment vector and observation count.
#[derive(Debug, Clone, PartialEq)]
pub struct SufficientStatistics {
    pub gram: DMatrix<f64>,
    pub moment: DVector<f64>,
    pub count: f64,
}

impl SufficientStatistics {
    pub fn zeros(d: usize) -> Self {
        Self {
            gram: DMatrix::zeros(d, d),
            moment: DVector::zeros(d),
            count: 0.0,
        }
    }

    pub fn dim(&self) -> usize {
        self.moment.len()
    }

    /// Adds one observation `(x xᵀ, y x, 1)`.
    pub fn observe(&mut self, x: &DVector<f64>, y: f64) {
        self.gram.ger(1.0, x, x, 1.0);
        self.moment.axpy(y, x, 1.0);
        self.count += 1.0;
    }

    pub fn add_assign(&mut self, other: &SufficientStatistics) {
        self.gram += &other.gram;
        self.moment += &other.moment;
        self.count += other.count;
    }

    pub fn sum<'a>(d: usize, items: impl IntoIterator<Item = &'a SufficientStatistics>) -> Self {
        let mut acc = Self::zeros(d);
        for s in items {
            acc.add_assign(s);
        }
        acc
    }

    /// Adds `scale·I` to the gram.
    pub fn add_identity(&mut self, scale: f64) {
        for i in 0..self.dim() {
            self.gram[(i, i)] += scale;
        }
    }

    pub fn is_empty(&self) -> bool {
        self.count == 0.0 && self.gram.iter().all(|v| *v == 0.0) && self.moment.iter().all(|v| *v == 0.0)
    }

    /// Relative Frobenius asymmetry `‖G − Gᵀ‖ / max(1, ‖G‖)`.
    pub fn asymmetry(&self) -> f64 {
        let diff = &self.gram - self.gram.transpose();
        diff.norm() / self.gram.norm().max(1.0)
    }
}

/// Spectral bounds on accumulated privacy perturbations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectralBounds {
    pub rho_min: f64,
    pub rho_max: f64,
    pub kappa: f64,
    pub rho: f64,
}

impl SpectralBounds {
    /// Bounds implied by the privatizer's `rho`: `rho_min = rho` and
    /// `rho_max = 3ρ + 3ρ·d·ln T / ln(min{U, D})`.
    pub fn from_rho(rho: f64, d: usize, horizon: u64, min_threshold: f64, kappa: f64) -> Self {
        let uploads = d as f64 * (horizon.max(2) as f64).ln() / min_threshold.ln();
        Self {
            rho_min: rho,
            rho_max: 3.0 * rho + 3.0 * rho * uploads,
            kappa,
            rho,
        }
    }

    /// Bounds used when no perturbation is present: the user regularizer
    /// stands in for both spectral bounds.
    pub fn regularized(lambda: f64) -> Self {
        Self {
            rho_min: lambda,
            rho_max: lambda,
            kappa: 0.0,
            rho: 0.0,
        }
    }

    pub fn with_kappa(self, kappa: f64) -> Self {
        Self { kappa, ..self }
    }
}

/// Cholesky factor of `gram + shift·I`.
pub fn cholesky(gram: &DMatrix<f64>, shift: f64) -> Result<Cholesky<f64, Dyn>, LinalgError> {
    let mut m = gram.clone();
    if shift != 0.0 {
        for i in 0..m.nrows() {
            m[(i, i)] += shift;
        }
    }
    // symmetrize so tiny float asymmetries don't leak into the factor
    let m = (&m + m.transpose()) * 0.5;
    Cholesky::new(m).ok_or(LinalgError::Singular)
}

/// `ln det(gram + shift·I)` via Cholesky.
pub fn log_det(gram: &DMatrix<f64>, shift: f64) -> Result<f64, LinalgError> {
    let chol = cholesky(gram, shift)?;
    let l = chol.l_dirty();
    Ok((0..l.nrows()).map(|i| 2.0 * l[(i, i)].ln()).sum())
}

/// `(λI + gram)⁻¹ · moment`.
pub fn ridge_estimate(stats: &SufficientStatistics, regularizer: f64) -> Result<DVector<f64>, LinalgError> {
    if regularizer < 0.0 {
        return Err(LinalgError::Domain(format!("regularizer {regularizer} < 0")));
    }
    let chol = cholesky(&stats.gram, regularizer)?;
    Ok(chol.solve(&stats.moment))
}

/// `F(x) = sqrt((1 + ln(1 + x)) / (1 + x))`.
pub fn confidence_f(x: f64) -> Result<f64, LinalgError> {
    if !(x >= 0.0) {
        return Err(LinalgError::Domain(format!("confidence_F needs x >= 0, got {x}")));
    }
    Ok(((1.0 + x.ln_1p()) / (1.0 + x)).sqrt())
}

/// Confidence width of a local cluster sharing with `num_sharing` clusters:
///
/// `σ₀·sqrt(2 ln(mL/α) + d ln(ρ_max/ρ_min + count/(d·L'·ρ_min))) + sqrt(L'·ρ_max) + sqrt(L')·κ`
#[allow(clippy::too_many_arguments)]
pub fn beta_width(
    count: f64,
    num_sharing: usize,
    bounds: &SpectralBounds,
    sigma0: f64,
    alpha: f64,
    m: usize,
    servers: usize,
    d: usize,
) -> Result<f64, LinalgError> {
    if !(count >= 0.0) {
        return Err(LinalgError::Domain(format!("count {count} < 0")));
    }
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(LinalgError::Domain(format!("alpha {alpha} not in (0, 1]")));
    }
    if num_sharing == 0 || !(bounds.rho_min > 0.0) {
        return Err(LinalgError::Domain("num_sharing and rho_min must be positive".into()));
    }
    let l = num_sharing as f64;
    let dd = d as f64;
    let log_term = 2.0 * ((m * servers) as f64 / alpha).ln()
        + dd * (bounds.rho_max / bounds.rho_min + count / (dd * l * bounds.rho_min)).ln();
    Ok(sigma0 * log_term.max(0.0).sqrt() + (l * bounds.rho_max).sqrt() + l.sqrt() * bounds.kappa)
}

/// `det(numerator) / det(denominator)`, computed as an exponentiated
/// log-determinant difference. `shift` is added to both diagonals first.
pub fn det_ratio(numerator: &DMatrix<f64>, denominator: &DMatrix<f64>, shift: f64) -> Result<f64, LinalgError> {
    let den = log_det(denominator, shift)?;
    let num = log_det(numerator, shift)?;
    Ok((num - den).exp())
}

/// `xᵀ S⁻¹ u + β·sqrt(xᵀ S⁻¹ x)`, with `S` shifted by `shift·I`.
pub fn ucb_score(x: &DVector<f64>, stats: &SufficientStatistics, beta: f64, shift: f64) -> Result<f64, LinalgError> {
    let chol = cholesky(&stats.gram, shift)?;
    Ok(ucb_with_factor(x, &chol, &stats.moment, beta))
}

/// Score against an already-factored gram; `recommend` factors once per round.
pub fn ucb_with_factor(x: &DVector<f64>, chol: &Cholesky<f64, Dyn>, moment: &DVector<f64>, beta: f64) -> f64 {
    let sx = chol.solve(x);
    let mean = sx.dot(moment);
    let width = x.dot(&sx).max(0.0).sqrt();
    mean + beta * width
}

/// Largest generalized eigenvalue `max_θ θᵀAθ / θᵀBθ` for symmetric `A` and PD `B`.
pub fn max_generalized_eigenvalue(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<f64, LinalgError> {
    let chol = cholesky(b, 0.0)?;
    let l = chol.l();
    let l_inv = l.clone().try_inverse().ok_or(LinalgError::Singular)?;
    let c = &l_inv * a * l_inv.transpose();
    let c = (&c + c.transpose()) * 0.5;
    let eig = c.symmetric_eigenvalues();
    Ok(eig.iter().cloned().fold(f64::NEG_INFINITY, f64::max))
}

pub fn min_eigenvalue(a: &DMatrix<f64>) -> f64 {
    let sym = (a + a.transpose()) * 0.5;
    sym.symmetric_eigenvalues().iter().cloned().fold(f64::INFINITY, f64::min)
}
