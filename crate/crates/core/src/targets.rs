//! Level hierarchies of posterior scores `∇log π_ℓ`.
//!
//! Every target here has a Gaussian prior `N(0, C₀)` with diagonal `C₀`,
//! isotropic Gaussian noise `σ² I` and a linear forward map, so
//!
//! ```text
//! ∇log π_ℓ(x) = -A_ℓᵀ (A_ℓ x - y) / σ² - C₀⁻¹ x.
//! ```
//!
//! For the PDE benchmark `A_ℓ` is the FEM forward matrix on level `ℓ`; the
//! analytic variant uses one matrix for all levels and has closed-form
//! posterior moments.

use std::collections::BTreeMap;

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fem::{self, ForwardMatrix};
use crate::rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriorSpec {
    pub dim: usize,
    /// Diagonal of the prior covariance.
    pub variances: Vec<f64>,
}

impl PriorSpec {
    pub fn new(variances: Vec<f64>) -> Result<Self> {
        if variances.is_empty() {
            return Err(Error::invalid("prior needs at least one dimension"));
        }
        if let Some(v) = variances.iter().find(|v| !(v.is_finite() && **v > 0.0)) {
            return Err(Error::invalid(format!(
                "prior variance {v} is not positive"
            )));
        }
        Ok(Self {
            dim: variances.len(),
            variances,
        })
    }

    /// `C₀ = diag(i⁻²)`, `i = 1..=dim`.
    pub fn decaying(dim: usize) -> Result<Self> {
        Self::new((1..=dim).map(|i| 1.0 / (i * i) as f64).collect())
    }

    pub fn precisions(&self) -> Vec<f64> {
        self.variances.iter().map(|v| 1.0 / v).collect()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        self.variances
            .iter()
            .map(|v| v.sqrt() * rng.sample::<f64, _>(StandardNormal))
            .collect()
    }

    fn validate(&self) -> Result<()> {
        if self.dim != self.variances.len() {
            return Err(Error::invalid("prior dim does not match variances"));
        }
        Self::new(self.variances.clone()).map(|_| ())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub n_y: usize,
    /// Observation noise variance `σ²`.
    pub variance: f64,
}

impl NoiseSpec {
    pub fn new(n_y: usize, variance: f64) -> Result<Self> {
        if !(variance.is_finite() && variance > 0.0) {
            return Err(Error::invalid(format!(
                "noise variance {variance} is not positive"
            )));
        }
        Ok(Self { n_y, variance })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetKind {
    PdePosterior,
    AnalyticGaussian,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ForwardModel {
    /// One forward matrix per available level.
    Levels(BTreeMap<u32, ForwardMatrix>),
    /// A single exact forward matrix shared by every level.
    Exact(DMatrix<f64>),
}

/// A hierarchy of score functions indexed by level, with a prior that serves
/// as the initial particle distribution.
pub trait LevelTarget: Sync {
    fn dim(&self) -> usize;

    fn prior(&self) -> &PriorSpec;

    /// Writes `∇log π_level(x)` into `out`.
    fn grad_log_density(&self, level: u32, x: &[f64], out: &mut [f64]) -> Result<()>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelTargetSpec {
    pub prior: PriorSpec,
    pub noise: NoiseSpec,
    pub data: Vec<f64>,
    pub forward: ForwardModel,
    /// Cost exponent: one score evaluation on level `ℓ` costs `2^{qℓ}` units.
    pub q: f64,
    /// Assumed decay order of the level error, `2^{-βℓ}`.
    pub beta: f64,
}

impl LevelTargetSpec {
    /// PDE posterior over the given forward matrices.
    pub fn pde(
        prior: PriorSpec,
        noise: NoiseSpec,
        data: Vec<f64>,
        matrices: impl IntoIterator<Item = ForwardMatrix>,
        q: f64,
        beta: f64,
    ) -> Result<Self> {
        let map: BTreeMap<u32, ForwardMatrix> =
            matrices.into_iter().map(|m| (m.level, m)).collect();
        let spec = Self {
            prior,
            noise,
            data,
            forward: ForwardModel::Levels(map),
            q,
            beta,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Conjugate Gaussian posterior with a single exact forward matrix.
    pub fn analytic(
        prior: PriorSpec,
        noise: NoiseSpec,
        data: Vec<f64>,
        matrix: DMatrix<f64>,
        q: f64,
        beta: f64,
    ) -> Result<Self> {
        let spec = Self {
            prior,
            noise,
            data,
            forward: ForwardModel::Exact(matrix),
            q,
            beta,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        self.prior.validate()?;
        NoiseSpec::new(self.noise.n_y, self.noise.variance)?;
        if !(self.q.is_finite() && self.q >= 0.0) {
            return Err(Error::invalid(format!(
                "cost exponent q = {} must be >= 0",
                self.q
            )));
        }
        if !(self.beta.is_finite() && self.beta > 0.0) {
            return Err(Error::invalid(format!("beta = {} must be > 0", self.beta)));
        }
        if self.data.len() != self.noise.n_y {
            return Err(Error::invalid(format!(
                "data has length {} but n_y = {}",
                self.data.len(),
                self.noise.n_y
            )));
        }
        let check = |m: &DMatrix<f64>| -> Result<()> {
            if m.nrows() != self.noise.n_y || m.ncols() != self.prior.dim {
                return Err(Error::invalid(format!(
                    "forward matrix is {}x{}, expected {}x{}",
                    m.nrows(),
                    m.ncols(),
                    self.noise.n_y,
                    self.prior.dim
                )));
            }
            Ok(())
        };
        match &self.forward {
            ForwardModel::Levels(map) => {
                if map.is_empty() {
                    return Err(Error::invalid("PDE target has no levels"));
                }
                for (level, fm) in map {
                    if *level != fm.level {
                        return Err(Error::invalid(
                            "forward matrix stored under the wrong level",
                        ));
                    }
                    check(&fm.matrix)?;
                }
            }
            ForwardModel::Exact(m) => check(m)?,
        }
        Ok(())
    }

    pub fn kind(&self) -> TargetKind {
        match self.forward {
            ForwardModel::Levels(_) => TargetKind::PdePosterior,
            ForwardModel::Exact(_) => TargetKind::AnalyticGaussian,
        }
    }

    pub fn has_level(&self, level: u32) -> bool {
        match &self.forward {
            ForwardModel::Levels(map) => map.contains_key(&level),
            ForwardModel::Exact(_) => true,
        }
    }

    pub fn levels(&self) -> Option<Vec<u32>> {
        match &self.forward {
            ForwardModel::Levels(map) => Some(map.keys().copied().collect()),
            ForwardModel::Exact(_) => None,
        }
    }

    /// The forward matrix used on `level`.
    pub fn matrix(&self, level: u32) -> Result<&DMatrix<f64>> {
        match &self.forward {
            ForwardModel::Levels(map) => map
                .get(&level)
                .map(|fm| &fm.matrix)
                .ok_or(Error::LevelNotAvailable(level)),
            ForwardModel::Exact(m) => Ok(m),
        }
    }

    fn check_point(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.prior.dim {
            return Err(Error::invalid(format!(
                "target of dimension {} evaluated at vector of length {}",
                self.prior.dim,
                x.len()
            )));
        }
        Ok(())
    }

    fn residual(&self, a: &DMatrix<f64>, x: &[f64]) -> Vec<f64> {
        let (n_y, d) = a.shape();
        let mut r: Vec<f64> = self.data.iter().map(|y| -y).collect();
        for j in 0..d {
            let xj = x[j];
            for (i, ri) in r.iter_mut().enumerate().take(n_y) {
                *ri += a[(i, j)] * xj;
            }
        }
        r
    }

    /// `∇log π_level(x)`.
    pub fn grad_log_posterior(&self, level: u32, x: &[f64]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.prior.dim];
        self.grad_into(level, x, &mut out)?;
        Ok(out)
    }

    fn grad_into(&self, level: u32, x: &[f64], out: &mut [f64]) -> Result<()> {
        self.check_point(x)?;
        if out.len() != x.len() {
            return Err(Error::invalid("gradient buffer has the wrong length"));
        }
        let a = self.matrix(level)?;
        let r = self.residual(a, x);
        let inv_noise = 1.0 / self.noise.variance;
        for (j, o) in out.iter_mut().enumerate() {
            let mut atr = 0.0;
            for (i, ri) in r.iter().enumerate() {
                atr += a[(i, j)] * ri;
            }
            *o = -atr * inv_noise - x[j] / self.prior.variances[j];
        }
        Ok(())
    }

    /// Unnormalised `log π_level(x) = -½‖A x - y‖²/σ² - ½ xᵀ C₀⁻¹ x`.
    pub fn log_posterior(&self, level: u32, x: &[f64]) -> Result<f64> {
        self.check_point(x)?;
        let a = self.matrix(level)?;
        let misfit: f64 = self.residual(a, x).iter().map(|r| r * r).sum();
        let prior: f64 = x
            .iter()
            .zip(&self.prior.variances)
            .map(|(xi, v)| xi * xi / v)
            .sum();
        Ok(-0.5 * misfit / self.noise.variance - 0.5 * prior)
    }

    /// Data `y = A_level x_true + σ ξ` with `ξ` drawn from the seeded
    /// generator. Any data already stored in `self` is ignored.
    pub fn synthesize_data(&self, x_true: &[f64], data_level: u32, seed: u64) -> Result<Vec<f64>> {
        self.check_point(x_true)?;
        let a = self.matrix(data_level)?;
        let clean = a * DVector::from_column_slice(x_true);
        let mut rng = rng::stream_rng(seed, 0);
        let sigma = self.noise.variance.sqrt();
        Ok(clean
            .iter()
            .map(|v| v + sigma * rng.sample::<f64, _>(StandardNormal))
            .collect())
    }

    /// Posterior moments on `level`; exact for every level since the forward
    /// map is linear.
    pub fn posterior_moments(&self, level: u32) -> Result<(Vec<f64>, DMatrix<f64>)> {
        analytic_posterior_moments(self.matrix(level)?, &self.data, &self.noise, &self.prior)
    }
}

impl LevelTarget for LevelTargetSpec {
    fn dim(&self) -> usize {
        self.prior.dim
    }

    fn prior(&self) -> &PriorSpec {
        &self.prior
    }

    fn grad_log_density(&self, level: u32, x: &[f64], out: &mut [f64]) -> Result<()> {
        self.grad_into(level, x, out)
    }
}

/// Mean and covariance of the Gaussian posterior for the linear model
/// `y = A x + η`, `η ~ N(0, σ² I)`, `x ~ N(0, C₀)`:
///
/// ```text
/// cov  = (AᵀA/σ² + C₀⁻¹)⁻¹
/// mean = cov Aᵀ y / σ²
/// ```
pub fn analytic_posterior_moments(
    a: &DMatrix<f64>,
    y: &[f64],
    noise: &NoiseSpec,
    prior: &PriorSpec,
) -> Result<(Vec<f64>, DMatrix<f64>)> {
    if a.ncols() != prior.dim || a.nrows() != y.len() {
        return Err(Error::invalid(format!(
            "forward matrix {}x{} inconsistent with data length {} and dimension {}",
            a.nrows(),
            a.ncols(),
            y.len(),
            prior.dim
        )));
    }
    let inv_noise = 1.0 / noise.variance;
    let mut precision = a.transpose() * a * inv_noise;
    for (i, v) in prior.variances.iter().enumerate() {
        precision[(i, i)] += 1.0 / v;
    }
    let chol = Cholesky::new(precision)
        .ok_or_else(|| Error::Internal("posterior precision is not positive definite".into()))?;
    let mut cov = chol.inverse();
    // symmetrise away rounding
    let d = cov.nrows();
    for i in 0..d {
        for j in 0..i {
            let m = 0.5 * (cov[(i, j)] + cov[(j, i)]);
            cov[(i, j)] = m;
            cov[(j, i)] = m;
        }
    }
    let rhs = a.transpose() * DVector::from_column_slice(y) * inv_noise;
    let mean = chol.solve(&rhs);
    Ok((mean.as_slice().to_vec(), cov))
}

fn default_dim() -> usize {
    8
}
fn default_n_y() -> usize {
    15
}
fn default_sigma() -> f64 {
    0.05
}
fn default_data_level() -> u32 {
    12
}
fn default_max_level() -> u32 {
    10
}
fn default_one() -> f64 {
    1.0
}

/// JSON description of the PDE benchmark posterior.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PdeTargetConfig {
    #[serde(default = "default_dim")]
    pub dim: usize,
    #[serde(default = "default_n_y")]
    pub n_y: usize,
    /// Prior variances; `i⁻²` when omitted.
    #[serde(default)]
    pub variances: Option<Vec<f64>>,
    /// Observation noise standard deviation.
    #[serde(default = "default_sigma")]
    pub sigma: f64,
    /// Seed for the ground truth draw from the prior.
    #[serde(default)]
    pub truth_seed: u64,
    /// Seed for the observation noise.
    #[serde(default = "default_noise_seed")]
    pub noise_seed: u64,
    /// Level the synthetic data is generated on.
    #[serde(default = "default_data_level")]
    pub data_level: u32,
    /// Forward matrices are built for levels `1..=max_level` (and `data_level`).
    #[serde(default = "default_max_level")]
    pub max_level: u32,
    #[serde(default = "default_one")]
    pub q: f64,
    #[serde(default = "default_one")]
    pub beta: f64,
}

fn default_noise_seed() -> u64 {
    1
}

impl Default for PdeTargetConfig {
    fn default() -> Self {
        Self {
            dim: default_dim(),
            n_y: default_n_y(),
            variances: None,
            sigma: default_sigma(),
            truth_seed: 0,
            noise_seed: default_noise_seed(),
            data_level: default_data_level(),
            max_level: default_max_level(),
            q: 1.0,
            beta: 1.0,
        }
    }
}

impl PdeTargetConfig {
    pub fn prior(&self) -> Result<PriorSpec> {
        match &self.variances {
            Some(v) => {
                if v.len() != self.dim {
                    return Err(Error::Config(format!(
                        "{} prior variances given for dimension {}",
                        v.len(),
                        self.dim
                    )));
                }
                PriorSpec::new(v.clone())
            }
            None => PriorSpec::decaying(self.dim),
        }
    }

    pub fn truth(&self) -> Result<Vec<f64>> {
        Ok(self
            .prior()?
            .sample(&mut rng::stream_rng(self.truth_seed, 0)))
    }

    /// Builds forward matrices, draws the truth and synthesises data.
    pub fn build(&self) -> Result<LevelTargetSpec> {
        if self.dim == 0 || self.n_y == 0 {
            return Err(Error::Config("dim and n_y must be positive".into()));
        }
        if self.max_level == 0 || self.data_level == 0 {
            return Err(Error::Config("levels start at 1".into()));
        }
        if !(self.sigma.is_finite() && self.sigma > 0.0) {
            return Err(Error::Config(format!(
                "sigma = {} must be positive",
                self.sigma
            )));
        }
        let prior = self.prior()?;
        let noise = NoiseSpec::new(self.n_y, self.sigma * self.sigma)?;
        let points = fem::observation_points(self.n_y);
        let mut matrices = Vec::new();
        for level in 1..=self.max_level.max(self.data_level) {
            matrices.push(fem::forward_matrix(level, self.dim, &points)?);
        }
        let mut spec = LevelTargetSpec::pde(
            prior,
            noise,
            vec![0.0; self.n_y],
            matrices,
            self.q,
            self.beta,
        )?;
        let x_true = self.truth()?;
        spec.data = spec.synthesize_data(&x_true, self.data_level, self.noise_seed)?;
        Ok(spec)
    }
}
