//! Multilevel SVGD.
//!
//! The estimator combines one base ensemble on level `ℓ₀` with one coupled
//! pair per finer level:
//!
//! ```text
//! ρ̂^ML = ρ̂^{ℓ₀}[φ] + Σ_{ℓ=ℓ₀+1}^{L} ( ρ̂^ℓ[φ] - ρ̃^{ℓ-1}[φ] )
//! ```
//!
//! where `ρ̃^{ℓ-1}` is an auxiliary ensemble driven by `∇log π_{ℓ-1}` but
//! started from exactly the same particles as `ρ̂^ℓ`. The base ensemble and
//! every pair are drawn from disjoint random streams of the run seed.
//!
//! Level indices in schedules and costs are taken relative to `ℓ₀`: one
//! score evaluation on level `ℓ` costs `2^{q(ℓ-ℓ₀)}` units.

use std::cell::Cell;
use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{stream_rng, BASE_STREAM};
use crate::svgd::{estimate, svgd_run, AtLevel, Ensemble, Functional, RunConfig, Score};
use crate::targets::LevelTarget;

/// Smallest ensemble any schedule hands out.
pub const MIN_ENSEMBLE: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScheduleKind {
    SingleLevel,
    MultiLevel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MLSchedule {
    pub kind: ScheduleKind,
    pub epsilon: f64,
    /// Finest level `L`.
    pub max_level: u32,
    /// Base level `ℓ₀`; cost units are relative to it.
    pub base_level: u32,
    /// Ensemble sizes: `[N_L]` for single level, `[N_{ℓ₀}, ..., N_L]` otherwise.
    pub sizes: Vec<usize>,
    pub beta: f64,
    pub q: f64,
    /// Proportionality constant in front of the ensemble-size formula.
    pub constant: f64,
}

/// `ceil`, treating values within a relative 1e-9 of an integer as that
/// integer so that e.g. `(1/81)·81·4` gives 4 and not 5.
fn snapped_ceil(v: f64) -> f64 {
    let r = v.round();
    if (v - r).abs() <= 1e-9 * r.abs().max(1.0) {
        r
    } else {
        v.ceil()
    }
}

/// `L = ⌈log(2/ε) / (β log 2)⌉`.
pub fn max_level_for(epsilon: f64, beta: f64) -> Result<u32> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::invalid(format!(
            "tolerance {epsilon} must lie in (0, 1)"
        )));
    }
    if !(beta.is_finite() && beta > 0.0) {
        return Err(Error::invalid(format!("beta = {beta} must be positive")));
    }
    let l = snapped_ceil((2.0 / epsilon).ln() / (beta * std::f64::consts::LN_2));
    if l > u32::MAX as f64 {
        return Err(Error::invalid("tolerance too small"));
    }
    Ok(l as u32)
}

fn check_common(q: f64, c: f64) -> Result<()> {
    if !(q.is_finite() && q >= 0.0) {
        return Err(Error::invalid(format!(
            "cost exponent q = {q} must be >= 0"
        )));
    }
    if !(c.is_finite() && c > 0.0) {
        return Err(Error::invalid(format!(
            "schedule constant {c} must be positive"
        )));
    }
    Ok(())
}

fn ensemble_size(raw: f64) -> usize {
    let n = snapped_ceil(raw);
    (n as usize).max(MIN_ENSEMBLE)
}

/// Single-level schedule: `N_L = max(2, ⌈c ε⁻²⌉)`.
pub fn schedule_sl(
    epsilon: f64,
    beta: f64,
    q: f64,
    c_sl: f64,
    base_level: u32,
) -> Result<MLSchedule> {
    let max_level = max_level_for(epsilon, beta)?;
    check_common(q, c_sl)?;
    Ok(MLSchedule {
        kind: ScheduleKind::SingleLevel,
        epsilon,
        max_level,
        base_level,
        sizes: vec![ensemble_size(c_sl / (epsilon * epsilon))],
        beta,
        q,
        constant: c_sl,
    })
}

/// Multilevel schedule:
/// `N_ℓ = max(2, ⌈c (L+1)⁴ 2^{-2β(ℓ-ℓ₀)} ε⁻²⌉)` for `ℓ = ℓ₀..=L`.
pub fn schedule_ml(
    epsilon: f64,
    beta: f64,
    q: f64,
    c_ml: f64,
    base_level: u32,
) -> Result<MLSchedule> {
    let max_level = max_level_for(epsilon, beta)?;
    check_common(q, c_ml)?;
    if max_level < base_level {
        return Err(Error::invalid(format!(
            "tolerance {epsilon} gives finest level {max_level}, below the base level {base_level}"
        )));
    }
    let lead = c_ml * f64::from(max_level + 1).powi(4) / (epsilon * epsilon);
    let sizes = (base_level..=max_level)
        .map(|l| ensemble_size(lead * (-2.0 * beta * f64::from(l - base_level)).exp2()))
        .collect();
    Ok(MLSchedule {
        kind: ScheduleKind::MultiLevel,
        epsilon,
        max_level,
        base_level,
        sizes,
        beta,
        q,
        constant: c_ml,
    })
}

impl MLSchedule {
    /// `(level, N)` pairs in increasing level order.
    pub fn levels(&self) -> Vec<(u32, usize)> {
        match self.kind {
            ScheduleKind::SingleLevel => vec![(self.max_level, self.sizes[0])],
            ScheduleKind::MultiLevel => (self.base_level..)
                .zip(self.sizes.iter().copied())
                .collect(),
        }
    }

    pub fn max_size(&self) -> usize {
        self.sizes.iter().copied().max().unwrap_or(0)
    }

    /// Cost of one score evaluation on `level`.
    pub fn unit_cost(&self, level: u32) -> f64 {
        (self.q * (f64::from(level) - f64::from(self.base_level))).exp2()
    }

    pub fn validate(&self) -> Result<()> {
        let expected = max_level_for(self.epsilon, self.beta)?;
        if expected != self.max_level {
            return Err(Error::invalid(format!(
                "max level {} does not match the tolerance (expected {expected})",
                self.max_level
            )));
        }
        if self.sizes.iter().any(|&n| n < MIN_ENSEMBLE) {
            return Err(Error::invalid("every ensemble size must be at least 2"));
        }
        match self.kind {
            ScheduleKind::SingleLevel => {
                if self.sizes.len() != 1 {
                    return Err(Error::invalid(
                        "single-level schedule needs exactly one size",
                    ));
                }
            }
            ScheduleKind::MultiLevel => {
                if self.max_level < self.base_level
                    || self.sizes.len() != (self.max_level - self.base_level + 1) as usize
                {
                    return Err(Error::invalid(
                        "one ensemble size per level ℓ₀..=L is required",
                    ));
                }
                if self.sizes.windows(2).any(|w| w[1] > w[0]) {
                    return Err(Error::invalid(
                        "ensemble sizes must be non-increasing in level",
                    ));
                }
            }
        }
        Ok(())
    }
}

/// Closed-form costs of an `n`-step run under `schedule`:
///
/// ```text
/// cost_SL = n N_L 2^{q(L-ℓ₀)}
/// cost_ML = n ( Σ_{ℓ≥ℓ₀} N_ℓ 2^{q(ℓ-ℓ₀)} + Σ_{ℓ>ℓ₀} N_ℓ 2^{q(ℓ-1-ℓ₀)} )
/// ```
///
/// For a single-level schedule both values coincide.
pub fn ledger_costs(n: usize, schedule: &MLSchedule) -> (f64, f64) {
    let n = n as f64;
    let levels = schedule.levels();
    let (top_level, top_n) = *levels.last().expect("schedule has at least one level");
    let cost_sl = n * top_n as f64 * schedule.unit_cost(top_level);
    let mut ml = 0.0;
    for (i, &(level, size)) in levels.iter().enumerate() {
        ml += size as f64 * schedule.unit_cost(level);
        if i > 0 {
            ml += size as f64 * schedule.unit_cost(level - 1);
        }
    }
    (cost_sl, n * ml)
}

/// Score evaluations an `n`-step run under `schedule` performs on each level.
pub fn predicted_evaluations(n: usize, schedule: &MLSchedule) -> BTreeMap<u32, u64> {
    let mut counts = BTreeMap::new();
    let n = n as u64;
    for (i, (level, size)) in schedule.levels().into_iter().enumerate() {
        *counts.entry(level).or_insert(0) += n * size as u64;
        if i > 0 {
            *counts.entry(level - 1).or_insert(0) += n * size as u64;
        }
    }
    counts
}

/// Score evaluations actually performed, per level, and their cost.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostLedger {
    pub q: f64,
    pub base_level: u32,
    pub evaluations: BTreeMap<u32, u64>,
}

impl CostLedger {
    pub fn new(q: f64, base_level: u32) -> Self {
        Self {
            q,
            base_level,
            evaluations: BTreeMap::new(),
        }
    }

    pub fn record(&mut self, level: u32, evaluations: u64) {
        *self.evaluations.entry(level).or_insert(0) += evaluations;
    }

    pub fn merge(&mut self, other: &CostLedger) {
        for (&level, &count) in &other.evaluations {
            self.record(level, count);
        }
    }

    pub fn per_level(&self) -> BTreeMap<u32, f64> {
        self.evaluations
            .iter()
            .map(|(&level, &count)| {
                let unit = (self.q * (f64::from(level) - f64::from(self.base_level))).exp2();
                (level, count as f64 * unit)
            })
            .collect()
    }

    pub fn total(&self) -> f64 {
        self.per_level().values().sum()
    }

    pub fn total_evaluations(&self) -> u64 {
        self.evaluations.values().sum()
    }
}

/// Counts calls that reach the wrapped score.
struct Counted<'a, S: ?Sized> {
    inner: &'a S,
    calls: Cell<u64>,
}

impl<'a, S: Score + ?Sized> Counted<'a, S> {
    fn new(inner: &'a S) -> Self {
        Self {
            inner,
            calls: Cell::new(0),
        }
    }
}

impl<S: Score + ?Sized> Score for Counted<'_, S> {
    fn score(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        self.calls.set(self.calls.get() + 1);
        self.inner.score(x, out)
    }
}

/// Runs `e0` on `level` and books every evaluation in `ledger`.
fn run_counted<T: LevelTarget + ?Sized>(
    target: &T,
    level: u32,
    e0: &Ensemble,
    cfg: &RunConfig,
    ledger: &mut CostLedger,
) -> Result<Ensemble> {
    let at = AtLevel::new(target, level);
    let counted = Counted::new(&at);
    let result = svgd_run(&e0.with_level(level), &counted, cfg);
    ledger.record(level, counted.calls.get());
    result
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SlOutcome {
    pub value: f64,
    pub ledger: CostLedger,
    #[serde(skip)]
    pub ensemble: Option<Ensemble>,
}

/// Single-level estimate on level `L` with `N_L` prior draws.
pub fn run_sl<T: LevelTarget + ?Sized>(
    schedule: &MLSchedule,
    target: &T,
    phi: &Functional,
    cfg: &RunConfig,
    seed: u64,
) -> Result<SlOutcome> {
    cfg.validate()?;
    let (level, size) = *schedule.levels().last().expect("non-empty schedule");
    let mut rng = stream_rng(seed, BASE_STREAM);
    let e0 = Ensemble::sample_prior(target.prior(), size, level, &mut rng)?;
    let mut ledger = CostLedger::new(schedule.q, schedule.base_level);
    let e = run_counted(target, level, &e0, cfg, &mut ledger)?;
    Ok(SlOutcome {
        value: estimate(&e, phi),
        ledger,
        ensemble: Some(e),
    })
}

/// One telescoping term of the multilevel estimator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelReport {
    pub level: u32,
    #[serde(rename = "N")]
    pub n: usize,
    pub estimate_fine: f64,
    /// `None` for the base level, which has no auxiliary ensemble.
    pub estimate_aux: Option<f64>,
    pub difference: f64,
    pub cost_units: f64,
}

/// A fine ensemble and its auxiliary coarse copy after `n` steps.
#[derive(Debug, Clone)]
pub struct PairOutcome {
    pub fine: Ensemble,
    pub aux: Ensemble,
    pub ledger: CostLedger,
}

/// Draws `size` particles from the prior on stream `level` of `seed` and
/// evolves one copy on `level` and one on `level - 1`.
pub fn run_pair<T: LevelTarget + ?Sized>(
    target: &T,
    level: u32,
    size: usize,
    cfg: &RunConfig,
    seed: u64,
    q: f64,
    base_level: u32,
) -> Result<PairOutcome> {
    if level == 0 {
        return Err(Error::invalid(
            "a coupled pair needs a fine level of at least 1",
        ));
    }
    let mut rng = stream_rng(seed, u64::from(level));
    let e0 = Ensemble::sample_prior(target.prior(), size, level, &mut rng)?;
    let mut ledger = CostLedger::new(q, base_level);
    let fine = run_counted(target, level, &e0, cfg, &mut ledger)?;
    let aux = run_counted(target, level - 1, &e0, cfg, &mut ledger)?;
    Ok(PairOutcome { fine, aux, ledger })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MlOutcome {
    pub value: f64,
    pub ledger: CostLedger,
    pub levels: Vec<LevelReport>,
    /// Final ensembles: the base ensemble, then `(fine, aux)` per pair.
    #[serde(skip)]
    pub ensembles: Vec<Ensemble>,
}

/// Multilevel estimate. Pairs run one after another, or on the rayon pool
/// when `parallel` is set; the result is the same either way.
pub fn run_ml<T: LevelTarget + ?Sized>(
    schedule: &MLSchedule,
    target: &T,
    phi: &Functional,
    cfg: &RunConfig,
    seed: u64,
    parallel: bool,
) -> Result<MlOutcome> {
    cfg.validate()?;
    if schedule.kind != ScheduleKind::MultiLevel {
        return Err(Error::invalid("run_ml needs a multilevel schedule"));
    }
    let levels = schedule.levels();
    let (base_level, base_size) = levels[0];
    let q = schedule.q;
    let n_steps = cfg.n_steps as f64;

    let mut rng = stream_rng(seed, BASE_STREAM);
    let base0 = Ensemble::sample_prior(target.prior(), base_size, base_level, &mut rng)?;
    let mut ledger = CostLedger::new(q, schedule.base_level);
    let base = run_counted(target, base_level, &base0, cfg, &mut ledger)?;
    let base_estimate = estimate(&base, phi);

    let pair_job = |&(level, size): &(u32, usize)| {
        run_pair(target, level, size, cfg, seed, q, schedule.base_level)
    };
    let pairs: Vec<PairOutcome> = if parallel {
        levels[1..]
            .par_iter()
            .map(pair_job)
            .collect::<Result<_>>()?
    } else {
        levels[1..].iter().map(pair_job).collect::<Result<_>>()?
    };

    let mut reports = vec![LevelReport {
        level: base_level,
        n: base_size,
        estimate_fine: base_estimate,
        estimate_aux: None,
        difference: base_estimate,
        cost_units: n_steps * base_size as f64 * schedule.unit_cost(base_level),
    }];
    let mut value = base_estimate;
    let mut ensembles = vec![base];
    for (&(level, size), pair) in levels[1..].iter().zip(pairs) {
        let fine = estimate(&pair.fine, phi);
        let aux = estimate(&pair.aux, phi);
        value += fine - aux;
        ledger.merge(&pair.ledger);
        reports.push(LevelReport {
            level,
            n: size,
            estimate_fine: fine,
            estimate_aux: Some(aux),
            difference: fine - aux,
            cost_units: n_steps
                * size as f64
                * (schedule.unit_cost(level) + schedule.unit_cost(level - 1)),
        });
        ensembles.push(pair.fine);
        ensembles.push(pair.aux);
    }
    Ok(MlOutcome {
        value,
        ledger,
        levels: reports,
        ensembles,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::KernelSpec;
    use crate::stats::fit_line;
    use crate::targets::{LevelTargetSpec, NoiseSpec, PriorSpec};
    use nalgebra::DMatrix;
    use proptest::prelude::*;

    #[test]
    fn sl_schedule_examples() {
        let s = schedule_sl(0.5, 1.0, 1.0, 1.0, 0).unwrap();
        assert_eq!((s.max_level, s.sizes.clone()), (2, vec![4]));
        let s = schedule_sl(0.25, 1.0, 1.0, 1.0, 0).unwrap();
        assert_eq!((s.max_level, s.sizes.clone()), (3, vec![16]));
        let s = schedule_sl(0.1, 0.5, 1.0, 2.0, 0).unwrap();
        // ⌈ln 20 / (0.5 ln 2)⌉ = ⌈8.64⌉ = 9, 2 / 0.01 = 200
        assert_eq!((20f64.ln() / (0.5 * 2f64.ln())).ceil(), 9.0);
        assert_eq!((s.max_level, s.sizes.clone()), (9, vec![200]));
        s.validate().unwrap();
    }

    #[test]
    fn tolerance_out_of_range() {
        for eps in [1.0, 1.5, 0.0, -0.1, f64::NAN] {
            assert!(matches!(
                schedule_sl(eps, 1.0, 1.0, 1.0, 0),
                Err(Error::InvalidArgument(_))
            ));
            assert!(matches!(
                schedule_ml(eps, 1.0, 1.0, 1.0, 0),
                Err(Error::InvalidArgument(_))
            ));
        }
        assert!(schedule_ml(0.5, 1.0, 1.0, 1.0, 3).is_err());
    }

    #[test]
    fn ml_schedule_with_cancelling_constant() {
        let s = schedule_ml(0.5, 1.0, 1.0, 1.0 / 81.0, 0).unwrap();
        assert_eq!(s.max_level, 2);
        assert_eq!(s.sizes, vec![4, 2, 2]);
    }

    #[test]
    fn ml_schedule_unit_constant() {
        let s = schedule_ml(0.5, 1.0, 1.0, 1.0, 0).unwrap();
        assert_eq!(s.sizes, vec![324, 81, 21]);
        s.validate().unwrap();
    }

    #[test]
    fn ml_schedule_shifted_base() {
        let s = schedule_ml(0.125, 1.0, 1.0, 1.0, 2).unwrap();
        assert_eq!(s.max_level, 4);
        assert_eq!(
            s.levels().iter().map(|l| l.0).collect::<Vec<_>>(),
            vec![2, 3, 4]
        );
        // 625 · 64 · 4^{-k}
        assert_eq!(s.sizes, vec![40000, 10000, 2500]);
    }

    proptest! {
        #[test]
        fn ml_sizes_non_increasing(eps in 0.01..0.99f64, beta in 0.2..3.0f64, q in 0.0..4.0f64, c in 1e-4..10.0f64) {
            let s = schedule_ml(eps, beta, q, c, 0).unwrap();
            prop_assert!(s.sizes.windows(2).all(|w| w[1] <= w[0]));
            prop_assert!(s.sizes.iter().all(|&n| n >= 2));
            prop_assert!(s.validate().is_ok());
        }
    }

    #[test]
    fn closed_form_costs() {
        let s = MLSchedule {
            kind: ScheduleKind::SingleLevel,
            epsilon: 0.5,
            max_level: 2,
            base_level: 2,
            sizes: vec![1],
            beta: 1.0,
            q: 0.0,
            constant: 1.0,
        };
        assert_eq!(ledger_costs(1, &s).0, 1.0);

        let s = MLSchedule {
            kind: ScheduleKind::SingleLevel,
            epsilon: 0.25,
            max_level: 3,
            base_level: 1,
            sizes: vec![4],
            beta: 1.0,
            q: 1.0,
            constant: 1.0,
        };
        assert_eq!(ledger_costs(10, &s).0, 160.0);

        let s = MLSchedule {
            kind: ScheduleKind::MultiLevel,
            epsilon: 0.9,
            max_level: 1,
            base_level: 0,
            sizes: vec![4, 2],
            beta: 1.0,
            q: 1.0,
            constant: 1.0,
        };
        assert_eq!(ledger_costs(10, &s).1, 100.0);
    }

    fn ml_cost_slope(q: f64) -> (f64, f64) {
        let eps: Vec<f64> = (2..=6).map(|k| 2f64.powi(-k)).collect();
        let mut raw = Vec::new();
        let mut normalised = Vec::new();
        for &e in &eps {
            let s = schedule_ml(e, 1.0, q, 1.0, 0).unwrap();
            let cost = ledger_costs(1, &s).1;
            raw.push(cost.ln());
            normalised.push((cost / f64::from(s.max_level + 1).powi(4)).ln());
        }
        let x: Vec<f64> = eps.iter().map(|e| e.ln()).collect();
        (
            fit_line(&x, &raw).unwrap().slope,
            fit_line(&x, &normalised).unwrap().slope,
        )
    }

    #[test]
    fn ml_cost_rate_below_critical_q() {
        // q < 2β: ε⁻² up to the (L+1)⁴ factor
        let (raw, normalised) = ml_cost_slope(1.0);
        assert!(
            (normalised + 2.0).abs() < 0.3,
            "normalised slope {normalised}"
        );
        assert!(raw < normalised);
    }

    #[test]
    fn ml_cost_rate_above_critical_q() {
        // q > 2β: ε^{-q/β} up to the (L+1)⁴ factor
        let (raw, normalised) = ml_cost_slope(3.0);
        assert!(
            (normalised + 3.0).abs() < 0.3,
            "normalised slope {normalised}"
        );
        assert!(raw < normalised);
    }

    fn toy_target() -> LevelTargetSpec {
        LevelTargetSpec::analytic(
            PriorSpec::decaying(2).unwrap(),
            NoiseSpec::new(2, 0.5).unwrap(),
            vec![0.3, -0.4],
            DMatrix::from_row_slice(2, 2, &[1.0, 0.5, -0.2, 0.8]),
            1.0,
            1.0,
        )
        .unwrap()
    }

    fn toy_cfg(n: usize) -> RunConfig {
        RunConfig::new(0.1, n, KernelSpec::from_diagonal(&[1.0, 4.0]).unwrap()).unwrap()
    }

    #[test]
    fn zero_steps_single_level_is_prior_mean() {
        let t = toy_target();
        let s = schedule_sl(0.25, 1.0, 1.0, 1.0, 0).unwrap();
        let out = run_sl(&s, &t, &Functional::Coordinate(0), &toy_cfg(0), 4).unwrap();
        let mut rng = stream_rng(4, BASE_STREAM);
        let e = Ensemble::sample_prior(&t.prior, 16, 3, &mut rng).unwrap();
        assert_eq!(out.value, estimate(&e, &Functional::Coordinate(0)));
        assert_eq!(out.ledger.total(), 0.0);
    }

    #[test]
    fn single_level_ledger() {
        let t = toy_target();
        let s = schedule_sl(0.5, 1.0, 1.0, 1.0, 0).unwrap();
        let out = run_sl(&s, &t, &Functional::Coordinate(1), &toy_cfg(10), 1).unwrap();
        assert_eq!(out.ledger.total_evaluations(), 40);
        assert_eq!(out.ledger.total(), ledger_costs(10, &s).0);
        assert_eq!(out.ledger.total(), 10.0 * 4.0 * 4.0);
        assert_eq!(out.ledger.evaluations, predicted_evaluations(10, &s));
    }

    #[test]
    fn coupled_pair_starts_identical() {
        let t = toy_target();
        let out = run_pair(&t, 3, 8, &toy_cfg(0), 11, 1.0, 0).unwrap();
        assert_eq!(out.fine.positions(), out.aux.positions());
        assert_eq!((out.fine.level, out.aux.level), (3, 2));
    }

    #[test]
    fn ml_requires_multilevel_schedule() {
        let t = toy_target();
        let s = schedule_sl(0.5, 1.0, 1.0, 1.0, 0).unwrap();
        assert!(run_ml(&s, &t, &Functional::Coordinate(0), &toy_cfg(1), 0, false).is_err());
    }

    #[test]
    fn parallel_and_sequential_agree() {
        let t = toy_target();
        let s = schedule_ml(0.25, 1.0, 1.0, 0.01, 0).unwrap();
        let phi = Functional::Coordinate(0);
        let a = run_ml(&s, &t, &phi, &toy_cfg(5), 8, false).unwrap();
        let b = run_ml(&s, &t, &phi, &toy_cfg(5), 8, true).unwrap();
        assert_eq!(a.value.to_bits(), b.value.to_bits());
        assert_eq!(a.levels, b.levels);
        assert_eq!(a.ledger, b.ledger);
        assert_eq!(a.ledger.evaluations, predicted_evaluations(5, &s));
        assert_eq!(a.ledger.total(), ledger_costs(5, &s).1);
    }

    #[test]
    fn level_report_serialises_with_documented_keys() {
        let r = LevelReport {
            level: 4,
            n: 10,
            estimate_fine: 1.0,
            estimate_aux: Some(0.5),
            difference: 0.5,
            cost_units: 20.0,
        };
        let v: serde_json::Value = serde_json::to_value(&r).unwrap();
        let keys: Vec<&str> = v.as_object().unwrap().keys().map(String::as_str).collect();
        for k in [
            "level",
            "N",
            "estimate_fine",
            "estimate_aux",
            "difference",
            "cost_units",
        ] {
            assert!(keys.contains(&k), "missing {k}");
        }
    }
}
