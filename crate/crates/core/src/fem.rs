//! Piecewise-linear finite elements for
//!
//! ```text
//! -u''(s) + u(s) = f(s),  s in (0, 1),   u(0) = u(1) = 0
//! ```
//!
//! on the dyadic mesh with `2^level` elements. The load enters through the
//! mass matrix applied to the nodal interpolant of `f`, and the tridiagonal
//! system is solved by forward elimination and back substitution.
//!
//! Since the problem is linear in `f`, the composite map
//! `x -> observe(solve(interpolate(x)))` is a matrix per level, see
//! [`ForwardMatrix`].

use std::f64::consts::{PI, SQRT_2};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Levels above this would overflow the interior node count of a `usize` on
/// small targets and are far beyond anything useful here.
pub const MAX_LEVEL: u32 = 24;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Mesh1D {
    pub level: u32,
    pub n_elements: usize,
    pub h: f64,
}

impl Mesh1D {
    pub fn new(level: u32) -> Result<Self> {
        if level == 0 {
            return Err(Error::invalid("level 0 mesh has no interior nodes"));
        }
        if level > MAX_LEVEL {
            return Err(Error::invalid(format!("level {level} exceeds {MAX_LEVEL}")));
        }
        let n_elements = 1usize << level;
        Ok(Self {
            level,
            n_elements,
            h: 1.0 / n_elements as f64,
        })
    }

    pub fn n_interior(&self) -> usize {
        self.n_elements - 1
    }

    /// Coordinate of interior node `k` (0-based), i.e. `(k + 1) h`.
    pub fn node(&self, k: usize) -> f64 {
        (k + 1) as f64 * self.h
    }
}

/// Interior nodal values of a continuous piecewise-linear function that
/// vanishes at both boundary points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodalFunction {
    pub level: u32,
    pub values: Vec<f64>,
}

impl NodalFunction {
    pub fn new(level: u32, values: Vec<f64>) -> Result<Self> {
        let mesh = Mesh1D::new(level)?;
        if values.len() != mesh.n_interior() {
            return Err(Error::invalid(format!(
                "level {level} needs {} interior values, got {}",
                mesh.n_interior(),
                values.len()
            )));
        }
        Ok(Self { level, values })
    }

    pub fn zeros(level: u32) -> Result<Self> {
        let mesh = Mesh1D::new(level)?;
        Ok(Self {
            level,
            values: vec![0.0; mesh.n_interior()],
        })
    }

    /// Nodal interpolant of an arbitrary function.
    pub fn interpolate(level: u32, f: impl Fn(f64) -> f64) -> Result<Self> {
        let mesh = Mesh1D::new(level)?;
        let values = (0..mesh.n_interior()).map(|k| f(mesh.node(k))).collect();
        Ok(Self { level, values })
    }

    pub fn mesh(&self) -> Mesh1D {
        Mesh1D::new(self.level).expect("level validated at construction")
    }
}

/// The `i`-th spectral basis function (1-based), `(√2/π) sin(iπs)`.
#[inline]
pub fn basis(i: usize, s: f64) -> f64 {
    SQRT_2 / PI * (i as f64 * PI * s).sin()
}

/// `f(x, s) = Σ_i x_i (√2/π) sin(iπs)`.
pub fn spectral_field(x: &[f64], s: f64) -> f64 {
    x.iter()
        .enumerate()
        .map(|(i, xi)| xi * basis(i + 1, s))
        .sum()
}

/// Nodal interpolation of the truncated spectral expansion with coefficients
/// `x` at the interior nodes of the level mesh.
pub fn spectral_to_nodal(x: &[f64], level: u32) -> Result<NodalFunction> {
    if x.is_empty() {
        return Err(Error::invalid("spectral coefficient vector is empty"));
    }
    NodalFunction::interpolate(level, |s| spectral_field(x, s))
}

/// Symmetric tridiagonal matrix stored by diagonals.
#[derive(Debug, Clone, PartialEq)]
pub struct SymTridiagonal {
    pub main: Vec<f64>,
    /// `off[k]` couples unknowns `k` and `k + 1`.
    pub off: Vec<f64>,
}

impl SymTridiagonal {
    pub fn to_dense(&self) -> DMatrix<f64> {
        let n = self.main.len();
        DMatrix::from_fn(n, n, |i, j| {
            if i == j {
                self.main[i]
            } else if i + 1 == j {
                self.off[i]
            } else if j + 1 == i {
                self.off[j]
            } else {
                0.0
            }
        })
    }

    /// Solves `A u = rhs` by the Thomas algorithm. Assumes the matrix is
    /// diagonally dominant or positive definite so that no pivoting is needed.
    pub fn solve(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        let n = self.main.len();
        if rhs.len() != n || self.off.len() + 1 != n.max(1) {
            return Err(Error::invalid("tridiagonal system dimension mismatch"));
        }
        if n == 0 {
            return Ok(Vec::new());
        }
        let mut diag = self.main.clone();
        let mut r = rhs.to_vec();
        for k in 1..n {
            let m = self.off[k - 1] / diag[k - 1];
            diag[k] -= m * self.off[k - 1];
            r[k] -= m * r[k - 1];
        }
        let mut u = vec![0.0; n];
        u[n - 1] = r[n - 1] / diag[n - 1];
        for k in (0..n - 1).rev() {
            u[k] = (r[k] - self.off[k] * u[k + 1]) / diag[k];
        }
        Ok(u)
    }
}

/// Stiffness plus mass matrix, `(1/h) tridiag(-1, 2, -1) + (h/6) tridiag(1, 4, 1)`.
pub fn system_matrix(mesh: &Mesh1D) -> SymTridiagonal {
    let h = mesh.h;
    let n = mesh.n_interior();
    SymTridiagonal {
        main: vec![2.0 / h + 4.0 * h / 6.0; n],
        off: vec![-1.0 / h + h / 6.0; n.saturating_sub(1)],
    }
}

/// `(h/6) tridiag(1, 4, 1)` applied to interior values with zero boundary data.
pub fn mass_apply(mesh: &Mesh1D, f: &[f64]) -> Vec<f64> {
    let n = f.len();
    let c = mesh.h / 6.0;
    (0..n)
        .map(|k| {
            let left = if k > 0 { f[k - 1] } else { 0.0 };
            let right = if k + 1 < n { f[k + 1] } else { 0.0 };
            c * (left + 4.0 * f[k] + right)
        })
        .collect()
}

/// Galerkin solution of the boundary value problem with load `f`.
pub fn solve_bvp(level: u32, f: &NodalFunction) -> Result<NodalFunction> {
    if f.level != level {
        return Err(Error::invalid(format!(
            "load given on level {} but solve requested on level {level}",
            f.level
        )));
    }
    let mesh = Mesh1D::new(level)?;
    if f.values.len() != mesh.n_interior() {
        return Err(Error::invalid("load vector length does not match mesh"));
    }
    let rhs = mass_apply(&mesh, &f.values);
    let values = system_matrix(&mesh).solve(&rhs)?;
    Ok(NodalFunction { level, values })
}

/// Piecewise-linear evaluation of `u` at each observation point.
pub fn observe(u: &NodalFunction, points: &[f64]) -> Result<Vec<f64>> {
    let mesh = u.mesh();
    if u.values.len() != mesh.n_interior() {
        return Err(Error::invalid(
            "nodal function length does not match its level",
        ));
    }
    let nodal = |k: usize| -> f64 {
        if k == 0 || k == mesh.n_elements {
            0.0
        } else {
            u.values[k - 1]
        }
    };
    points
        .iter()
        .map(|&s| {
            if !(s > 0.0 && s < 1.0) {
                return Err(Error::invalid(format!(
                    "observation point {s} is not inside (0, 1)"
                )));
            }
            let scaled = s * mesh.n_elements as f64;
            let k = (scaled.floor() as usize).min(mesh.n_elements - 1);
            let t = scaled - k as f64;
            Ok((1.0 - t) * nodal(k) + t * nodal(k + 1))
        })
        .collect()
}

/// Equispaced observation points `s_i = i / (n_y + 1)`, `i = 1..=n_y`.
pub fn observation_points(n_y: usize) -> Vec<f64> {
    (1..=n_y).map(|i| i as f64 / (n_y + 1) as f64).collect()
}

/// The level-`ℓ` forward map `x -> O(u^ℓ_{f(x)})` as an `n_y × d` matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForwardMatrix {
    pub level: u32,
    pub matrix: DMatrix<f64>,
    pub obs_points: Vec<f64>,
}

impl ForwardMatrix {
    /// Wraps an explicitly given matrix, e.g. for synthetic level hierarchies.
    pub fn from_matrix(level: u32, matrix: DMatrix<f64>, obs_points: Vec<f64>) -> Result<Self> {
        if matrix.nrows() != obs_points.len() {
            return Err(Error::invalid(format!(
                "matrix has {} rows but {} observation points were given",
                matrix.nrows(),
                obs_points.len()
            )));
        }
        Ok(Self {
            level,
            matrix,
            obs_points,
        })
    }

    pub fn dim(&self) -> usize {
        self.matrix.ncols()
    }

    pub fn n_obs(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.dim() {
            return Err(Error::invalid(format!(
                "forward matrix of dimension {} applied to vector of length {}",
                self.dim(),
                x.len()
            )));
        }
        Ok((&self.matrix * DVector::from_column_slice(x))
            .as_slice()
            .to_vec())
    }
}

/// Assembles the forward matrix column by column from the basis vectors.
pub fn forward_matrix(level: u32, d: usize, obs_points: &[f64]) -> Result<ForwardMatrix> {
    if d == 0 {
        return Err(Error::invalid("parameter dimension must be positive"));
    }
    let mut matrix = DMatrix::zeros(obs_points.len(), d);
    let mut e = vec![0.0; d];
    for j in 0..d {
        e.fill(0.0);
        e[j] = 1.0;
        let f = spectral_to_nodal(&e, level)?;
        let u = solve_bvp(level, &f)?;
        let column = observe(&u, obs_points)?;
        matrix.set_column(j, &DVector::from_vec(column));
    }
    Ok(ForwardMatrix {
        level,
        matrix,
        obs_points: obs_points.to_vec(),
    })
}
