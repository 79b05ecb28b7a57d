//! Error-versus-cost experiment on the PDE posterior.
//!
//! A run consists of a high-accuracy reference estimate per step count, then
//! for every tolerance `ε` in the grid a batch of independent single-level and
//! multilevel estimates whose root-mean-square error against the reference is
//! tabulated next to the predicted cost. Results are written as CSV with the
//! header [`CSV_HEADER`].

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::kernel::KernelSpec;
use crate::multilevel::{
    ledger_costs, predicted_evaluations, run_ml, run_sl, schedule_ml, schedule_sl, CostLedger,
    MLSchedule,
};
use crate::rng::{derive_seed, stream_rng, BASE_STREAM};
use crate::stats::{fit_line, mean, LineFit};
use crate::svgd::{estimate, svgd_run, AtLevel, Ensemble, Functional, RunConfig};
use crate::targets::{LevelTarget, LevelTargetSpec, PdeTargetConfig};

pub const CSV_HEADER: &str =
    "epsilon,n_steps,rmse_sl,cost_sl,rmse_ml,cost_ml,reps,failures,seed_base";

/// Tag mixed into the run seed to obtain the reference seed.
const REFERENCE_TAG: u64 = 0x7265_6665_7265_6e63;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputPaths {
    /// Directory for CSV and JSON artifacts.
    #[serde(default = "default_out_dir")]
    pub dir: PathBuf,
    /// Reference cache; `<dir>/cache` when omitted.
    #[serde(default)]
    pub cache_dir: Option<PathBuf>,
}

impl Default for OutputPaths {
    fn default() -> Self {
        Self {
            dir: default_out_dir(),
            cache_dir: None,
        }
    }
}

impl OutputPaths {
    pub fn cache_dir(&self) -> PathBuf {
        self.cache_dir
            .clone()
            .unwrap_or_else(|| self.dir.join("cache"))
    }
}

fn default_out_dir() -> PathBuf {
    PathBuf::from("results")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub target: PdeTargetConfig,
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    #[serde(default = "default_n_steps")]
    pub n_steps: Vec<usize>,
    #[serde(default = "default_ell0")]
    pub ell0: u32,
    #[serde(default = "default_l_ref")]
    pub l_ref: u32,
    #[serde(default = "default_n_ref")]
    pub n_ref: usize,
    #[serde(default = "default_epsilons")]
    pub epsilons: Vec<f64>,
    #[serde(default = "default_repetitions")]
    pub repetitions: usize,
    /// Base seed of the sweep; repetition `r` uses `derive_seed(seed, r)`.
    #[serde(default)]
    pub seed: u64,
    /// Seed of the reference run; derived from `seed` when omitted.
    #[serde(default)]
    pub reference_seed: Option<u64>,
    #[serde(default = "default_one")]
    pub beta: f64,
    #[serde(default = "default_one")]
    pub q: f64,
    #[serde(default = "default_c_sl")]
    pub c_sl: f64,
    #[serde(default = "default_c_ml")]
    pub c_ml: f64,
    /// Trapezoid level used to evaluate `φ`.
    #[serde(default = "default_quad_level")]
    pub quad_level: u32,
    #[serde(default)]
    pub outputs: OutputPaths,
}

fn default_gamma() -> f64 {
    0.1
}
fn default_n_steps() -> Vec<usize> {
    vec![10, 100, 200]
}
fn default_ell0() -> u32 {
    3
}
fn default_l_ref() -> u32 {
    10
}
fn default_n_ref() -> usize {
    3000
}
fn default_epsilons() -> Vec<f64> {
    (2..=5).map(|k| 2f64.powi(-k)).collect()
}
fn default_repetitions() -> usize {
    20
}
fn default_one() -> f64 {
    1.0
}
fn default_c_sl() -> f64 {
    1.0
}
fn default_c_ml() -> f64 {
    1e-3
}
fn default_quad_level() -> u32 {
    10
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("all fields have defaults")
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn schedules(&self, epsilon: f64) -> Result<(MLSchedule, MLSchedule)> {
        let sl = schedule_sl(epsilon, self.beta, self.q, self.c_sl, self.ell0)?;
        let ml = schedule_ml(epsilon, self.beta, self.q, self.c_ml, self.ell0)?;
        Ok((sl, ml))
    }

    /// Checks the configuration, including that the reference run is finer
    /// and larger than every scheduled run.
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if !(self.gamma.is_finite() && self.gamma > 0.0) {
            return bad(format!("gamma = {} must be positive", self.gamma));
        }
        if self.n_steps.is_empty() || self.epsilons.is_empty() {
            return bad("n_steps and epsilons must be non-empty".into());
        }
        if self.repetitions < 2 {
            return bad(format!(
                "repetitions = {} must be at least 2",
                self.repetitions
            ));
        }
        if self.ell0 == 0 {
            return bad("ell0 must be at least 1".into());
        }
        if self.quad_level == 0 {
            return bad("quad_level must be at least 1".into());
        }
        let mut max_l = 0;
        let mut max_n = 0;
        for &eps in &self.epsilons {
            let (sl, ml) = self
                .schedules(eps)
                .map_err(|e| Error::Config(e.to_string()))?;
            max_l = max_l.max(sl.max_level);
            max_n = max_n.max(sl.max_size()).max(ml.max_size());
        }
        if self.l_ref <= max_l {
            return bad(format!(
                "l_ref = {} must exceed the finest scheduled level {max_l}",
                self.l_ref
            ));
        }
        if self.n_ref < max_n {
            return bad(format!(
                "n_ref = {} is below the largest scheduled ensemble {max_n}",
                self.n_ref
            ));
        }
        Ok(())
    }

    pub fn reference_seed(&self) -> u64 {
        self.reference_seed
            .unwrap_or_else(|| derive_seed(self.seed, REFERENCE_TAG))
    }

    /// The posterior, with forward matrices up to `l_ref`.
    pub fn build_target(&self) -> Result<LevelTargetSpec> {
        let mut t = self.target.clone();
        t.max_level = t.max_level.max(self.l_ref);
        t.q = self.q;
        t.beta = self.beta;
        t.build()
    }
}

/// A posterior together with the functional and settings of one experiment.
pub struct Experiment {
    pub config: ExperimentConfig,
    pub target: LevelTargetSpec,
    pub phi: Functional,
    pub kernel: KernelSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Reference {
    pub n_steps: usize,
    pub value: f64,
    pub key: String,
    #[serde(skip)]
    pub cached: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub epsilon: f64,
    pub n_steps: usize,
    pub rmse_sl: f64,
    pub cost_sl: f64,
    pub rmse_ml: f64,
    pub cost_ml: f64,
    pub reps: usize,
    pub failures: usize,
    pub seed_base: u64,
}

impl SweepRow {
    pub fn to_csv_line(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{}",
            self.epsilon,
            self.n_steps,
            self.rmse_sl,
            self.cost_sl,
            self.rmse_ml,
            self.cost_ml,
            self.reps,
            self.failures,
            self.seed_base
        )
    }
}

#[derive(Serialize)]
struct ReferenceKey<'a> {
    target: &'a LevelTargetSpec,
    phi: String,
    kernel: &'a KernelSpec,
    gamma: f64,
    n_steps: usize,
    l_ref: u32,
    n_ref: usize,
    seed: u64,
}

impl Experiment {
    /// The PDE posterior experiment described by `config`.
    pub fn new(config: ExperimentConfig) -> Result<Self> {
        config.validate()?;
        let target = config.build_target()?;
        let phi = Functional::l2_norm_of_field(target.dim(), config.quad_level)?;
        Self::with_target(config, target, phi)
    }

    /// Runs the experiment protocol of `config` on another target.
    /// The target must provide levels `ell0 - 1..=l_ref`.
    pub fn with_target(
        config: ExperimentConfig,
        target: LevelTargetSpec,
        phi: Functional,
    ) -> Result<Self> {
        config.validate()?;
        for level in config.ell0 - 1..=config.l_ref {
            if !target.has_level(level) {
                return Err(Error::LevelNotAvailable(level));
            }
        }
        let kernel = KernelSpec::from_diagonal(&target.prior().precisions())?;
        Ok(Self {
            config,
            target,
            phi,
            kernel,
        })
    }

    pub fn run_config(&self, n_steps: usize) -> Result<RunConfig> {
        RunConfig::new(self.config.gamma, n_steps, self.kernel.clone())
    }

    /// Hash of everything the reference value depends on.
    pub fn reference_key(&self, n_steps: usize) -> Result<String> {
        let key = ReferenceKey {
            target: &self.target,
            phi: self.phi.name(),
            kernel: &self.kernel,
            gamma: self.config.gamma,
            n_steps,
            l_ref: self.config.l_ref,
            n_ref: self.config.n_ref,
            seed: self.config.reference_seed(),
        };
        let digest = Sha256::digest(serde_json::to_vec(&key)?);
        Ok(digest.iter().fold(String::new(), |mut s, b| {
            let _ = write!(s, "{b:02x}");
            s
        }))
    }

    /// One single-level run at `(l_ref, n_ref)`, without caching.
    pub fn compute_reference(&self, n_steps: usize) -> Result<f64> {
        let level = self.config.l_ref;
        let mut rng = stream_rng(self.config.reference_seed(), BASE_STREAM);
        let e0 = Ensemble::sample_prior(self.target.prior(), self.config.n_ref, level, &mut rng)?;
        let e = svgd_run(
            &e0,
            &AtLevel::new(&self.target, level),
            &self.run_config(n_steps)?,
        )?;
        Ok(estimate(&e, &self.phi))
    }

    /// The reference value for `n_steps`, read from `cache_dir` when present
    /// and stored there otherwise.
    pub fn generate_reference(
        &self,
        n_steps: usize,
        cache_dir: Option<&Path>,
    ) -> Result<Reference> {
        let key = self.reference_key(n_steps)?;
        let path = cache_dir.map(|d| d.join(format!("reference-{key}.json")));
        if let Some(p) = &path {
            if let Ok(text) = fs::read_to_string(p) {
                if let Ok(r) = serde_json::from_str::<Reference>(&text) {
                    if r.key == key && r.n_steps == n_steps {
                        return Ok(Reference { cached: true, ..r });
                    }
                }
            }
        }
        let value = self.compute_reference(n_steps)?;
        let r = Reference {
            n_steps,
            value,
            key,
            cached: false,
        };
        if let Some(p) = &path {
            if let Some(dir) = p.parent() {
                fs::create_dir_all(dir)?;
            }
            let tmp = p.with_extension("json.tmp");
            fs::write(&tmp, serde_json::to_vec_pretty(&r)?)?;
            fs::rename(&tmp, p)?;
        }
        Ok(r)
    }

    /// References for every configured step count.
    pub fn references(&self, cache_dir: Option<&Path>) -> Result<Vec<Reference>> {
        self.config
            .n_steps
            .iter()
            .map(|&n| self.generate_reference(n, cache_dir))
            .collect()
    }

    /// One sweep cell: `repetitions` SL and ML estimates at `(epsilon, n_steps)`.
    pub fn run_cell(&self, epsilon: f64, n_steps: usize, reference: f64) -> Result<SweepRow> {
        let cfg = self.run_config(n_steps)?;
        let (sl, ml) = self.config.schedules(epsilon)?;
        let (cost_sl, cost_ml) = (ledger_costs(n_steps, &sl).0, ledger_costs(n_steps, &ml).1);
        let (evals_sl, evals_ml) = (
            predicted_evaluations(n_steps, &sl),
            predicted_evaluations(n_steps, &ml),
        );
        let seed_base = self.config.seed;
        let rep = |r: usize| -> Result<(Option<f64>, Option<f64>)> {
            let seed = derive_seed(seed_base, r as u64);
            let a = match run_sl(&sl, &self.target, &self.phi, &cfg, seed) {
                Ok(out) => {
                    check_ledger(&out.ledger, &evals_sl)?;
                    Some(out.value)
                }
                Err(Error::NumericalFailure { .. }) => None,
                Err(e) => return Err(e),
            };
            let b = match run_ml(&ml, &self.target, &self.phi, &cfg, seed, false) {
                Ok(out) => {
                    check_ledger(&out.ledger, &evals_ml)?;
                    Some(out.value)
                }
                Err(Error::NumericalFailure { .. }) => None,
                Err(e) => return Err(e),
            };
            Ok((a, b))
        };
        let results: Vec<(Option<f64>, Option<f64>)> = (0..self.config.repetitions)
            .into_par_iter()
            .map(rep)
            .collect::<Result<_>>()?;
        let rmse = |vals: Vec<f64>| -> f64 {
            if vals.is_empty() {
                return f64::NAN;
            }
            let sq: Vec<f64> = vals.iter().map(|v| (v - reference).powi(2)).collect();
            mean(&sq).sqrt()
        };
        let sl_vals: Vec<f64> = results.iter().filter_map(|r| r.0).collect();
        let ml_vals: Vec<f64> = results.iter().filter_map(|r| r.1).collect();
        let failures = 2 * results.len() - sl_vals.len() - ml_vals.len();
        Ok(SweepRow {
            epsilon,
            n_steps,
            rmse_sl: rmse(sl_vals),
            cost_sl,
            rmse_ml: rmse(ml_vals),
            cost_ml,
            reps: self.config.repetitions,
            failures,
            seed_base,
        })
    }

    /// All sweep rows, ordered by step count and then by tolerance as listed
    /// in the configuration.
    pub fn run_sweep(&self, references: &[Reference]) -> Result<Vec<SweepRow>> {
        let mut rows = Vec::new();
        for &n in &self.config.n_steps {
            let reference = references
                .iter()
                .find(|r| r.n_steps == n)
                .ok_or_else(|| Error::invalid(format!("no reference for n_steps = {n}")))?;
            for &eps in &self.config.epsilons {
                rows.push(self.run_cell(eps, n, reference.value)?);
            }
        }
        Ok(rows)
    }
}

fn check_ledger(ledger: &CostLedger, predicted: &BTreeMap<u32, u64>) -> Result<()> {
    if &ledger.evaluations != predicted {
        return Err(Error::Internal(format!(
            "recorded evaluations {:?} differ from the schedule's {predicted:?}",
            ledger.evaluations
        )));
    }
    Ok(())
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut s = String::with_capacity(64 * (rows.len() + 1));
    s.push_str(CSV_HEADER);
    s.push('\n');
    for r in rows {
        s.push_str(&r.to_csv_line());
        s.push('\n');
    }
    s
}

pub fn write_sweep_csv(path: &Path, rows: &[SweepRow]) -> Result<()> {
    let mut f = fs::File::create(path)?;
    f.write_all(sweep_csv(rows).as_bytes())?;
    Ok(())
}

/// Parses CSV produced by [`sweep_csv`].
pub fn parse_sweep_csv(text: &str) -> Result<Vec<SweepRow>> {
    let mut lines = text.lines();
    let header = lines.next().unwrap_or_default();
    if header != CSV_HEADER {
        return Err(Error::Config(format!("unexpected CSV header: {header}")));
    }
    let names: Vec<&str> = CSV_HEADER.split(',').collect();
    lines
        .enumerate()
        .filter(|(_, l)| !l.is_empty())
        .map(|(i, line)| {
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != names.len() {
                return Err(Error::Config(format!(
                    "row {}: expected {} fields",
                    i + 1,
                    names.len()
                )));
            }
            let bad =
                |k: usize| Error::Config(format!("row {}: bad value for {}", i + 1, names[k]));
            let f = |k: usize| fields[k].parse::<f64>().map_err(|_| bad(k));
            let u = |k: usize| fields[k].parse::<usize>().map_err(|_| bad(k));
            Ok(SweepRow {
                epsilon: f(0)?,
                n_steps: u(1)?,
                rmse_sl: f(2)?,
                cost_sl: f(3)?,
                rmse_ml: f(4)?,
                cost_ml: f(5)?,
                reps: u(6)?,
                failures: u(7)?,
                seed_base: fields[8].parse().map_err(|_| bad(8))?,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostSlopes {
    pub n_steps: usize,
    /// Fit of `log cost_sl` against `log rmse_sl`.
    pub sl: Option<LineFit>,
    pub ml: Option<LineFit>,
}

/// Least-squares slopes of log cost against log RMSE for the rows with the
/// given step count. Rows with failures or non-positive RMSE are skipped.
pub fn fit_cost_rmse_slopes(rows: &[SweepRow], n_steps: usize) -> CostSlopes {
    let usable: Vec<&SweepRow> = rows
        .iter()
        .filter(|r| r.n_steps == n_steps && r.failures == 0)
        .collect();
    let fit = |pick: fn(&SweepRow) -> (f64, f64)| {
        let (xs, ys): (Vec<f64>, Vec<f64>) = usable
            .iter()
            .map(|r| pick(r))
            .filter(|(rmse, cost)| *rmse > 0.0 && rmse.is_finite() && *cost > 0.0)
            .map(|(rmse, cost)| (rmse.ln(), cost.ln()))
            .unzip();
        fit_line(&xs, &ys)
    };
    CostSlopes {
        n_steps,
        sl: fit(|r| (r.rmse_sl, r.cost_sl)),
        ml: fit(|r| (r.rmse_ml, r.cost_ml)),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BetaFit {
    pub levels: Vec<u32>,
    /// Mean of `‖∇log π_ℓ(x) - ∇log π_{ℓ-1}(x)‖` over the prior samples.
    pub mean_differences: Vec<f64>,
    /// Slope of `log₂` of the mean differences against `ℓ`.
    pub slope: f64,
    pub r_squared: f64,
    /// Set when a difference vanishes and no rate can be fitted.
    pub degenerate: bool,
}

/// Fits the decay `2^{-βℓ}` of score differences between consecutive levels.
pub fn estimate_beta<T: LevelTarget + ?Sized>(
    target: &T,
    levels: &[u32],
    n_samples: usize,
    seed: u64,
) -> Result<BetaFit> {
    if levels.len() < 3 {
        return Err(Error::invalid(format!(
            "need at least 3 levels, got {}",
            levels.len()
        )));
    }
    if n_samples == 0 {
        return Err(Error::invalid("need at least one prior sample"));
    }
    if levels.contains(&0) {
        return Err(Error::invalid("level 0 has no coarser neighbour"));
    }
    let mut rng = stream_rng(seed, 0);
    let samples: Vec<Vec<f64>> = (0..n_samples)
        .map(|_| target.prior().sample(&mut rng))
        .collect();
    let d = target.dim();
    let (mut fine, mut coarse) = (vec![0.0; d], vec![0.0; d]);
    let mut mean_differences = Vec::with_capacity(levels.len());
    for &level in levels {
        let mut total = 0.0;
        for x in &samples {
            target.grad_log_density(level, x, &mut fine)?;
            target.grad_log_density(level - 1, x, &mut coarse)?;
            total += fine
                .iter()
                .zip(&coarse)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
        }
        mean_differences.push(total / n_samples as f64);
    }
    let degenerate = mean_differences.iter().any(|&m| m <= 0.0 || m.is_nan());
    let fit = if degenerate {
        None
    } else {
        let xs: Vec<f64> = levels.iter().map(|&l| f64::from(l)).collect();
        let ys: Vec<f64> = mean_differences.iter().map(|m| m.log2()).collect();
        fit_line(&xs, &ys)
    };
    Ok(BetaFit {
        levels: levels.to_vec(),
        mean_differences,
        slope: fit.map_or(f64::NAN, |f| f.slope),
        r_squared: fit.map_or(f64::NAN, |f| f.r_squared),
        degenerate,
    })
}

/// Full sweep report written next to the CSV.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepReport {
    pub config: ExperimentConfig,
    pub references: Vec<Reference>,
    pub rows: Vec<SweepRow>,
    pub slopes: Vec<CostSlopes>,
    pub schedules: Vec<MLSchedule>,
    pub forward: crate::targets::ForwardModel,
}

impl Experiment {
    pub fn report(&self, references: Vec<Reference>, rows: Vec<SweepRow>) -> Result<SweepReport> {
        let slopes = self
            .config
            .n_steps
            .iter()
            .map(|&n| fit_cost_rmse_slopes(&rows, n))
            .collect();
        let mut schedules = Vec::new();
        for &eps in &self.config.epsilons {
            let (sl, ml) = self.config.schedules(eps)?;
            schedules.push(sl);
            schedules.push(ml);
        }
        Ok(SweepReport {
            config: self.config.clone(),
            references,
            rows,
            slopes,
            schedules,
            forward: self.target.forward.clone(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_config() -> ExperimentConfig {
        ExperimentConfig {
            n_steps: vec![5],
            epsilons: vec![0.25, 0.125],
            repetitions: 2,
            l_ref: 6,
            n_ref: 40,
            c_sl: 0.5,
            c_ml: 1e-3,
            target: PdeTargetConfig {
                max_level: 6,
                data_level: 8,
                ..Default::default()
            },
            ..Default::default()
        }
    }

    #[test]
    fn defaults_validate() {
        ExperimentConfig::default().validate().unwrap();
    }

    #[test]
    fn rejects_dominated_reference() {
        let mut c = small_config();
        c.l_ref = 4;
        assert!(matches!(c.validate(), Err(Error::Config(_))));
        let mut c = small_config();
        c.n_ref = 10;
        assert!(matches!(c.validate(), Err(Error::Config(_))));
        let mut c = small_config();
        c.repetitions = 1;
        assert!(matches!(c.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn unknown_field_is_config_error() {
        assert!(matches!(
            ExperimentConfig::from_json(r#"{"gama": 0.1}"#),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn json_round_trip() {
        let c = small_config();
        let back = ExperimentConfig::from_json(&serde_json::to_string(&c).unwrap()).unwrap();
        assert_eq!(c, back);
    }

    #[test]
    fn zero_step_reference_is_prior_mean() {
        let x = Experiment::new(small_config()).unwrap();
        let r = x.compute_reference(0).unwrap();
        let mut rng = stream_rng(x.config.reference_seed(), BASE_STREAM);
        let e = Ensemble::sample_prior(x.target.prior(), 40, 6, &mut rng).unwrap();
        assert_eq!(r, estimate(&e, &x.phi));
    }

    #[test]
    fn reference_is_cached() {
        let dir = tempfile::tempdir().unwrap();
        let x = Experiment::new(small_config()).unwrap();
        let a = x.generate_reference(5, Some(dir.path())).unwrap();
        let b = x.generate_reference(5, Some(dir.path())).unwrap();
        assert!(!a.cached);
        assert!(b.cached);
        assert_eq!(a.value.to_bits(), b.value.to_bits());
        assert_ne!(x.reference_key(5).unwrap(), x.reference_key(6).unwrap());
    }

    #[test]
    fn smoke_sweep_shape() {
        let x = Experiment::new(small_config()).unwrap();
        let refs = x.references(None).unwrap();
        let rows = x.run_sweep(&refs).unwrap();
        assert_eq!(rows.len(), 2);
        let text = sweep_csv(&rows);
        assert!(!text.contains('\r'));
        let back = parse_sweep_csv(&text).unwrap();
        assert_eq!(back, rows);
        for r in &back {
            for v in [r.epsilon, r.rmse_sl, r.cost_sl, r.rmse_ml, r.cost_ml] {
                assert!(v.is_finite());
            }
            assert!(r.cost_sl > 0.0 && r.cost_ml > 0.0);
        }
    }

    #[test]
    fn csv_floats_round_trip() {
        let row = SweepRow {
            epsilon: 0.1 + 0.2,
            n_steps: 3,
            rmse_sl: 1.0 / 3.0,
            cost_sl: 1e300,
            rmse_ml: 5e-324,
            cost_ml: 12345.678901234567,
            reps: 2,
            failures: 0,
            seed_base: u64::MAX,
        };
        assert_eq!(
            parse_sweep_csv(&sweep_csv(std::slice::from_ref(&row))).unwrap(),
            vec![row]
        );
    }

    #[test]
    fn bad_header_names_column() {
        let err = parse_sweep_csv("epsilon,n_steps\n").unwrap_err();
        assert!(err.to_string().contains("header"));
        let text = format!("{CSV_HEADER}\n0.5,x,1,1,1,1,2,0,0\n");
        assert!(parse_sweep_csv(&text)
            .unwrap_err()
            .to_string()
            .contains("n_steps"));
    }

    #[test]
    fn slope_of_constructed_rows() {
        let rows: Vec<SweepRow> = (1..=4)
            .map(|k| {
                let rmse = 2f64.powi(-k);
                SweepRow {
                    epsilon: rmse,
                    n_steps: 1,
                    rmse_sl: rmse,
                    cost_sl: rmse.powi(-3),
                    rmse_ml: rmse,
                    cost_ml: rmse.powi(-2),
                    reps: 2,
                    failures: 0,
                    seed_base: 0,
                }
            })
            .collect();
        let s = fit_cost_rmse_slopes(&rows, 1);
        assert!((s.sl.unwrap().slope + 3.0).abs() < 1e-12);
        assert!((s.ml.unwrap().slope + 2.0).abs() < 1e-12);
        assert!(fit_cost_rmse_slopes(&rows, 2).sl.is_none());
    }

    #[test]
    fn beta_needs_three_levels() {
        let t = small_config().build_target().unwrap();
        assert!(matches!(
            estimate_beta(&t, &[4, 5], 5, 0),
            Err(Error::InvalidArgument(_))
        ));
    }
}
