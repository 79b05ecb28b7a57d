//! Discrete-time SVGD:
//!
//! ```text
//! X_{n+1}^i = X_n^i + (γ/N) Σ_j [ k(X_n^j, X_n^i) ∇log π(X_n^j) + ∇₁k(X_n^j, X_n^i) ]
//! ```
//!
//! All particles are moved from the same pre-step snapshot. The ascent sign
//! is used, i.e. `X - γ R̂(X)` with `R̂ = -(1/N) Σ_j [k ∇log π + ∇₁k]`.

use std::f64::consts::{PI, SQRT_2};
use std::fmt;
use std::io::Write;
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::KernelSpec;
use crate::targets::{LevelTarget, PriorSpec};

/// Something that evaluates `∇log π` at a point.
pub trait Score {
    fn score(&self, x: &[f64], out: &mut [f64]) -> Result<()>;
}

impl<F> Score for F
where
    F: Fn(&[f64], &mut [f64]) -> Result<()>,
{
    fn score(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        self(x, out)
    }
}

/// One level of a [`LevelTarget`] viewed as a plain score.
pub struct AtLevel<'a, T: ?Sized> {
    pub target: &'a T,
    pub level: u32,
}

impl<'a, T: LevelTarget + ?Sized> AtLevel<'a, T> {
    pub fn new(target: &'a T, level: u32) -> Self {
        Self { target, level }
    }
}

impl<T: LevelTarget + ?Sized> Score for AtLevel<'_, T> {
    fn score(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        self.target.grad_log_density(self.level, x, out)
    }
}

/// `N` particles in `R^d`, stored row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ensemble {
    positions: Vec<f64>,
    dim: usize,
    pub level: u32,
    pub step_count: usize,
}

impl Ensemble {
    pub fn from_flat(positions: Vec<f64>, dim: usize, level: u32) -> Result<Self> {
        if dim == 0 || positions.is_empty() || !positions.len().is_multiple_of(dim) {
            return Err(Error::invalid(format!(
                "{} coordinates cannot form a non-empty ensemble in dimension {dim}",
                positions.len()
            )));
        }
        if positions.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("ensemble positions must be finite"));
        }
        Ok(Self {
            positions,
            dim,
            level,
            step_count: 0,
        })
    }

    pub fn from_rows(rows: &[Vec<f64>], level: u32) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != dim) {
            return Err(Error::invalid("ensemble rows have different lengths"));
        }
        Self::from_flat(rows.concat(), dim, level)
    }

    /// `n` i.i.d. draws from the prior.
    pub fn sample_prior<R: Rng + ?Sized>(
        prior: &PriorSpec,
        n: usize,
        level: u32,
        rng: &mut R,
    ) -> Result<Self> {
        let mut positions = Vec::with_capacity(n * prior.dim);
        for _ in 0..n {
            positions.extend(prior.sample(rng));
        }
        Self::from_flat(positions, prior.dim, level)
    }

    /// Same positions, relabelled to another level (used to couple a fine
    /// ensemble with its auxiliary coarse copy).
    pub fn with_level(&self, level: u32) -> Self {
        Self {
            level,
            ..self.clone()
        }
    }

    pub fn len(&self) -> usize {
        self.positions.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn particle(&self, i: usize) -> &[f64] {
        &self.positions[i * self.dim..(i + 1) * self.dim]
    }

    pub fn particles(&self) -> impl Iterator<Item = &[f64]> {
        self.positions.chunks_exact(self.dim)
    }

    pub fn positions(&self) -> &[f64] {
        &self.positions
    }

    pub fn mean(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.dim];
        for p in self.particles() {
            for (a, b) in m.iter_mut().zip(p) {
                *a += b;
            }
        }
        let n = self.len() as f64;
        m.iter_mut().for_each(|a| *a /= n);
        m
    }

    /// One row per particle, header `x0,...,x{d-1}`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let header: Vec<String> = (0..self.dim).map(|i| format!("x{i}")).collect();
        writeln!(w, "{}", header.join(","))?;
        for p in self.particles() {
            let row: Vec<String> = p.iter().map(|v| v.to_string()).collect();
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub gamma: f64,
    pub n_steps: usize,
    pub kernel: KernelSpec,
}

impl RunConfig {
    pub fn new(gamma: f64, n_steps: usize, kernel: KernelSpec) -> Result<Self> {
        let cfg = Self {
            gamma,
            n_steps,
            kernel,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma.is_finite() && self.gamma > 0.0) {
            return Err(Error::invalid(format!(
                "step size {} must be positive",
                self.gamma
            )));
        }
        Ok(())
    }
}

/// Scratch buffers reused across steps.
#[derive(Default)]
struct Workspace {
    grads: Vec<f64>,
    drift: Vec<f64>,
    diff: Vec<f64>,
    scaled: Vec<f64>,
}

impl Workspace {
    fn step<S: Score + ?Sized>(
        &mut self,
        e: &mut Ensemble,
        score: &S,
        cfg: &RunConfig,
    ) -> Result<()> {
        let n = e.len();
        let d = e.dim;
        if n == 0 {
            return Err(Error::invalid("cannot step an empty ensemble"));
        }
        if cfg.kernel.dim() != d {
            return Err(Error::invalid(format!(
                "kernel dimension {} does not match ensemble dimension {d}",
                cfg.kernel.dim()
            )));
        }
        self.grads.resize(n * d, 0.0);
        self.drift.clear();
        self.drift.resize(n * d, 0.0);
        self.diff.resize(d, 0.0);
        self.scaled.resize(d, 0.0);

        for (j, (x, g)) in e
            .positions
            .chunks_exact(d)
            .zip(self.grads.chunks_exact_mut(d))
            .enumerate()
        {
            score.score(x, g)?;
            if g.iter().any(|v| !v.is_finite()) {
                return Err(Error::NumericalFailure {
                    particle: j,
                    step: e.step_count,
                    what: "non-finite score",
                });
            }
        }

        // drift_i = Σ_j k_ij (g_j + M (x_i - x_j)); each pair is visited once
        // and contributes to both rows, self term has k = 1 and zero kernel
        // gradient.
        let x = &e.positions;
        for i in 0..n {
            let xi = &x[i * d..(i + 1) * d];
            let gi = &self.grads[i * d..(i + 1) * d];
            {
                let di = &mut self.drift[i * d..(i + 1) * d];
                for (a, b) in di.iter_mut().zip(gi) {
                    *a += b;
                }
            }
            for j in i + 1..n {
                let xj = &x[j * d..(j + 1) * d];
                for ((df, a), b) in self.diff.iter_mut().zip(xi).zip(xj) {
                    *df = a - b;
                }
                let k = cfg.kernel.weight(&self.diff, &mut self.scaled);
                let gj = &self.grads[j * d..(j + 1) * d];
                let (lo, hi) = self.drift.split_at_mut(j * d);
                let di = &mut lo[i * d..(i + 1) * d];
                let dj = &mut hi[..d];
                for c in 0..d {
                    di[c] += k * (gj[c] + self.scaled[c]);
                    dj[c] += k * (gi[c] - self.scaled[c]);
                }
            }
        }

        let scale = cfg.gamma / n as f64;
        for (i, (p, dr)) in e
            .positions
            .chunks_exact_mut(d)
            .zip(self.drift.chunks_exact(d))
            .enumerate()
        {
            for (a, b) in p.iter_mut().zip(dr) {
                *a += scale * b;
            }
            if p.iter().any(|v| !v.is_finite()) {
                return Err(Error::NumericalFailure {
                    particle: i,
                    step: e.step_count,
                    what: "non-finite position",
                });
            }
        }
        e.step_count += 1;
        Ok(())
    }
}

/// One synchronous SVGD update; returns the new ensemble.
pub fn svgd_step<S: Score + ?Sized>(e: &Ensemble, score: &S, cfg: &RunConfig) -> Result<Ensemble> {
    cfg.validate()?;
    let mut next = e.clone();
    Workspace::default().step(&mut next, score, cfg)?;
    Ok(next)
}

/// Applies [`svgd_step`] `cfg.n_steps` times.
pub fn svgd_run<S: Score + ?Sized>(e0: &Ensemble, score: &S, cfg: &RunConfig) -> Result<Ensemble> {
    cfg.validate()?;
    let mut e = e0.clone();
    let mut ws = Workspace::default();
    for _ in 0..cfg.n_steps {
        ws.step(&mut e, score, cfg)?;
    }
    Ok(e)
}

/// `‖f(x, ·)‖_{L²(0,1)}` for the spectral field, by the trapezoid rule on
/// the uniform grid with `2^quad_level` cells.
pub fn phi_l2_field(x: &[f64], quad_level: u32) -> Result<f64> {
    if quad_level == 0 || quad_level > crate::fem::MAX_LEVEL {
        return Err(Error::invalid(format!(
            "quadrature level {quad_level} out of range"
        )));
    }
    let cells = 1usize << quad_level;
    let h = 1.0 / cells as f64;
    let mut sum = 0.0;
    for k in 0..=cells {
        let f = crate::fem::spectral_field(x, k as f64 * h);
        let w = if k == 0 || k == cells { 0.5 } else { 1.0 };
        sum += w * f * f;
    }
    Ok((h * sum).sqrt())
}

/// Precomputed trapezoid evaluation of the field norm. The endpoint terms
/// vanish because every basis function is zero there.
#[derive(Clone)]
pub struct FieldNorm {
    dim: usize,
    quad_level: u32,
    /// Basis values at interior grid points, one row of length `dim` per point.
    table: Arc<Vec<f64>>,
}

impl FieldNorm {
    pub fn new(dim: usize, quad_level: u32) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("field norm needs a positive dimension"));
        }
        if quad_level == 0 || quad_level > 20 {
            return Err(Error::invalid(format!(
                "quadrature level {quad_level} out of range"
            )));
        }
        let cells = 1usize << quad_level;
        let h = 1.0 / cells as f64;
        let mut table = Vec::with_capacity((cells - 1) * dim);
        for k in 1..cells {
            let s = k as f64 * h;
            table.extend((1..=dim).map(|i| SQRT_2 / PI * (i as f64 * PI * s).sin()));
        }
        Ok(Self {
            dim,
            quad_level,
            table: Arc::new(table),
        })
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.dim);
        let h = 1.0 / (1usize << self.quad_level) as f64;
        let sum: f64 = self
            .table
            .chunks_exact(self.dim)
            .map(|row| {
                let f: f64 = row.iter().zip(x).map(|(b, xi)| b * xi).sum();
                f * f
            })
            .sum();
        (h * sum).sqrt()
    }
}

type CustomFn = dyn Fn(&[f64]) -> f64 + Send + Sync;

/// Quantity of interest `φ: R^d -> R`, assumed Lipschitz on bounded sets.
#[derive(Clone)]
pub enum Functional {
    /// `‖f(x, ·)‖_{L²}` of the spectral field.
    L2NormOfField(FieldNorm),
    /// A single coordinate `x_i`.
    Coordinate(usize),
    Custom {
        name: String,
        f: Arc<CustomFn>,
    },
}

impl fmt::Debug for Functional {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Functional({})", self.name())
    }
}

impl Functional {
    pub fn l2_norm_of_field(dim: usize, quad_level: u32) -> Result<Self> {
        Ok(Functional::L2NormOfField(FieldNorm::new(dim, quad_level)?))
    }

    pub fn custom(
        name: impl Into<String>,
        f: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Functional::Custom {
            name: name.into(),
            f: Arc::new(f),
        }
    }

    pub fn name(&self) -> String {
        match self {
            Functional::L2NormOfField(n) => {
                format!("l2_norm_of_field(quad_level={})", n.quad_level)
            }
            Functional::Coordinate(i) => format!("coordinate({i})"),
            Functional::Custom { name, .. } => name.clone(),
        }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        match self {
            Functional::L2NormOfField(n) => n.eval(x),
            Functional::Coordinate(i) => x[*i],
            Functional::Custom { f, .. } => f(x),
        }
    }
}

/// Empirical mean `(1/N) Σ_i φ(X^i)`.
pub fn estimate(e: &Ensemble, phi: &Functional) -> f64 {
    e.particles().map(|p| phi.eval(p)).sum::<f64>() / e.len() as f64
}
