//! Replicated simulation experiments comparing estimators of τ.

use std::fmt::Write as _;
use std::io::Write;
use std::path::Path;

use givbma::data::Dataset;
use givbma::fit::fit;
use givbma::inference::quantile_interval;
use givbma::priors::GPriorSpec;
use givbma::sampler::SamplerConfig;
use nalgebra::{DMatrix, DVector};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{jive, ols, tsls, with_intercept, Estimate, NaiveBma};
use crate::dgp::{DgpSpec, Replication, Truth};
use crate::error::{BenchError, Result};
use crate::method::Method;
use crate::metrics::{metrics, Metrics};

pub const LEVEL: f64 = 0.95;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplerBudget {
    /// Total sweeps, burn-in included.
    pub iterations: usize,
    pub burn_in: usize,
}

impl Default for SamplerBudget {
    fn default() -> Self {
        Self {
            iterations: 2500,
            burn_in: 500,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub name: String,
    pub dgp: DgpSpec,
    pub methods: Vec<Method>,
    #[serde(default)]
    pub sampler: SamplerBudget,
    #[serde(default)]
    pub seed: u64,
}

impl ExperimentSpec {
    pub fn from_json(s: &str) -> Result<Self> {
        let spec: Self = serde_json::from_str(s).map_err(|e| BenchError::Spec(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        self.dgp.validate()?;
        if self.methods.is_empty() {
            return Err(BenchError::Spec("no methods listed".into()));
        }
        if let Some(Method::OutOfScope(name)) = self.methods.iter().find(|m| matches!(m, Method::OutOfScope(_))) {
            return Err(BenchError::OutOfScope(name.clone()));
        }
        if self.sampler.burn_in >= self.sampler.iterations {
            return Err(BenchError::Spec("burn_in must be below iterations".into()));
        }
        Ok(())
    }

    fn base_config(&self) -> SamplerConfig {
        SamplerConfig {
            iterations: self.sampler.iterations,
            burn_in: self.sampler.burn_in,
            ..SamplerConfig::default()
        }
    }

    /// Seed for the sampler of method `k` in replication `rep`.
    fn method_seed(&self, rep: usize, k: usize) -> u64 {
        let mut rng = ChaCha20Rng::seed_from_u64(self.seed);
        rng.set_stream((1 << 40) | ((rep as u64) << 12) | k as u64);
        rng.next_u64()
    }

    pub fn replication(&self, rep: usize) -> Replication {
        let mut rng = ChaCha20Rng::seed_from_u64(self.seed);
        rng.set_stream(rep as u64);
        self.dgp.generate(&mut rng)
    }
}

/// One method on one replication.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RawRow {
    pub replication: usize,
    pub method: String,
    pub tau_hat: Vec<f64>,
    pub intervals: Vec<(f64, f64)>,
    pub lps: Option<f64>,
    /// Posterior pmf of the number of valid instruments.
    pub nz_posterior: Option<Vec<f64>>,
    /// Posterior probability of the exact true treatment model.
    pub true_treatment_prob: Option<f64>,
    pub mean_treatment_size: Option<f64>,
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub method: String,
    pub label: String,
    pub succeeded: usize,
    pub failures: usize,
    #[serde(flatten)]
    pub metrics: Option<Metrics>,
    pub mean_lps: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub name: String,
    pub truth_tau: Vec<f64>,
    pub aggregate: Vec<AggregateRow>,
    pub raw: Vec<RawRow>,
}

struct Outcome {
    tau_hat: Vec<f64>,
    intervals: Vec<(f64, f64)>,
    lps: Option<f64>,
    nz_posterior: Option<Vec<f64>>,
    true_treatment_prob: Option<f64>,
    mean_treatment_size: Option<f64>,
}

impl Outcome {
    fn classical(est: &Estimate, l: usize, lps: Option<f64>) -> Self {
        Self {
            tau_hat: (1..=l).map(|j| est.coef[j]).collect(),
            intervals: (1..=l).map(|j| est.interval(j)).collect(),
            lps,
            nz_posterior: None,
            true_treatment_prob: None,
            mean_treatment_size: None,
        }
    }
}

fn select(m: &DMatrix<f64>, keep: &[bool]) -> DMatrix<f64> {
    let idx: Vec<usize> = (0..keep.len()).filter(|&j| keep[j]).collect();
    m.select_columns(&idx)
}

/// Regressor and first-stage designs for the classical estimators.
struct Designs {
    u: DMatrix<f64>,
    v: DMatrix<f64>,
}

fn designs(method: &Method, d: &Dataset<f64>, truth: &Truth) -> Designs {
    let covariates: Vec<bool> = truth.instruments.iter().map(|&b| !b).collect();
    let w = select(d.z(), &covariates);
    match method {
        Method::OracleTsls => {
            let out = select(d.z(), &truth.outcome_model);
            let first: Vec<bool> = truth
                .outcome_model
                .iter()
                .zip(&truth.treatment_model)
                .map(|(&a, &b)| a || b)
                .collect();
            Designs {
                u: with_intercept(&[d.x(), &out]),
                v: with_intercept(&[&select(d.z(), &first)]),
            }
        }
        _ => Designs {
            u: with_intercept(&[d.x(), &w]),
            v: with_intercept(&[&select(d.z(), &truth.instruments), &w]),
        },
    }
}

fn classical_lps(est: &Estimate, y: &DVector<f64>, u: &DMatrix<f64>) -> Option<f64> {
    if y.is_empty() {
        return None;
    }
    let total: f64 = (0..y.len()).map(|i| est.logdensity(y[i], &u.row(i).transpose())).sum();
    Some(-total / y.len() as f64)
}

fn run_method(spec: &ExperimentSpec, method: &Method, k: usize, rep: usize, data: &Replication) -> Result<Outcome> {
    let (train, holdout, truth) = (&data.train, &data.holdout, &data.truth);
    let l = truth.l();
    let seed = spec.method_seed(rep, k);
    match method {
        Method::Givbma { .. } => {
            let mut cfg = method.sampler_config(&spec.base_config()).expect("gIVBMA method");
            cfg.seed = seed;
            let f = fit(train, &cfg)?;
            let summary = f.summary(LEVEL)?;
            let retained = f.chain.retained();
            let s = retained.len() as f64;
            let hits = retained.iter().filter(|d| d.models.treatment == truth.treatment_model).count();
            let size: usize = retained.iter().map(|d| d.models.treatment.iter().filter(|&&b| b).count()).sum();
            Ok(Outcome {
                tau_hat: summary.tau.iter().map(|i| i.mean).collect(),
                intervals: summary.tau.iter().map(|i| (i.lower, i.upper)).collect(),
                lps: if holdout.n() > 0 { Some(f.lps(holdout)?) } else { None },
                nz_posterior: Some(summary.nz_posterior),
                true_treatment_prob: Some(hits as f64 / s),
                mean_treatment_size: Some(size as f64 / s),
            })
        }
        Method::NaiveBma => {
            let keep: Vec<bool> = train.fixed_mask().iter().map(|&b| !b).collect();
            let pool = select(train.z(), &keep);
            let bma = NaiveBma::fit(
                train.y(),
                train.x(),
                &pool,
                &GPriorSpec::hyper_g_n(),
                spec.sampler.iterations,
                spec.sampler.burn_in,
                seed,
            )?;
            let intervals = (0..l)
                .map(|j| {
                    let xs: Vec<f64> = bma.tau_draws.iter().map(|t| t[j]).collect();
                    quantile_interval(&xs, LEVEL)
                })
                .collect();
            let lps = (holdout.n() > 0).then(|| {
                let hz = select(holdout.z(), &keep);
                let total: f64 = (0..holdout.n())
                    .map(|i| {
                        bma.logdensity(
                            holdout.y()[i],
                            &holdout.x().row(i).transpose(),
                            &hz.row(i).transpose(),
                        )
                    })
                    .sum();
                -total / holdout.n() as f64
            });
            Ok(Outcome {
                tau_hat: bma.tau_mean.iter().copied().collect(),
                intervals,
                lps,
                nz_posterior: None,
                true_treatment_prob: None,
                mean_treatment_size: None,
            })
        }
        Method::Ols | Method::Tsls | Method::OracleTsls | Method::Jive => {
            let train_d = designs(method, train, truth);
            let est = match method {
                Method::Ols => ols(train.y(), &train_d.u)?,
                Method::Jive => jive(train.y(), &train_d.u, &train_d.v)?,
                _ => tsls(train.y(), &train_d.u, &train_d.v)?,
            };
            let lps = if holdout.n() > 0 {
                classical_lps(&est, holdout.y(), &designs(method, holdout, truth).u)
            } else {
                None
            };
            Ok(Outcome::classical(&est, l, lps))
        }
        Method::OutOfScope(name) => Err(BenchError::OutOfScope(name.clone())),
    }
}

fn aggregate(spec: &ExperimentSpec, truth_tau: &[f64], raw: &[RawRow]) -> Vec<AggregateRow> {
    spec.methods
        .iter()
        .map(|m| {
            let name = m.name();
            let rows: Vec<&RawRow> = raw.iter().filter(|r| r.method == name).collect();
            let ok: Vec<&RawRow> = rows.iter().copied().filter(|r| r.error.is_none()).collect();
            let metrics = (!ok.is_empty()).then(|| {
                let est: Vec<Vec<f64>> = ok.iter().map(|r| r.tau_hat.clone()).collect();
                let iv: Vec<Vec<(f64, f64)>> = ok.iter().map(|r| r.intervals.clone()).collect();
                metrics(&est, truth_tau, &iv)
            });
            let lps: Vec<f64> = ok.iter().filter_map(|r| r.lps).collect();
            AggregateRow {
                method: name,
                label: m.to_string(),
                succeeded: ok.len(),
                failures: rows.len() - ok.len(),
                metrics,
                mean_lps: (!lps.is_empty()).then(|| lps.iter().sum::<f64>() / lps.len() as f64),
            }
        })
        .collect()
}

/// Runs every method on every replication. Replications run in parallel on
/// the current rayon pool; results do not depend on the thread count.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<ExperimentResult> {
    spec.validate()?;
    let truth_tau = spec.replication(0).truth.tau;
    let raw: Vec<RawRow> = (0..spec.dgp.replications)
        .into_par_iter()
        .map(|rep| {
            let data = spec.replication(rep);
            spec.methods
                .iter()
                .enumerate()
                .map(|(k, m)| {
                    let l = data.truth.l();
                    match run_method(spec, m, k, rep, &data) {
                        Ok(o) => RawRow {
                            replication: rep,
                            method: m.name(),
                            tau_hat: o.tau_hat,
                            intervals: o.intervals,
                            lps: o.lps,
                            nz_posterior: o.nz_posterior,
                            true_treatment_prob: o.true_treatment_prob,
                            mean_treatment_size: o.mean_treatment_size,
                            error: None,
                        },
                        Err(e) => RawRow {
                            replication: rep,
                            method: m.name(),
                            tau_hat: vec![f64::NAN; l],
                            intervals: vec![(f64::NAN, f64::NAN); l],
                            lps: None,
                            nz_posterior: None,
                            true_treatment_prob: None,
                            mean_treatment_size: None,
                            error: Some(e.to_string()),
                        },
                    }
                })
                .collect::<Vec<_>>()
        })
        .collect::<Vec<_>>()
        .into_iter()
        .flatten()
        .collect();
    let aggregate = aggregate(spec, &truth_tau, &raw);
    Ok(ExperimentResult {
        name: spec.name.clone(),
        truth_tau,
        aggregate,
        raw,
    })
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

impl ExperimentResult {
    pub fn write_aggregate_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["method", "label", "succeeded", "failures", "mae", "median_bias", "coverage", "mean_lps"])?;
        for a in &self.aggregate {
            let m = a.metrics;
            w.write_record([
                a.method.clone(),
                a.label.clone(),
                a.succeeded.to_string(),
                a.failures.to_string(),
                opt(m.map(|m| m.mae)),
                opt(m.map(|m| m.median_bias)),
                opt(m.map(|m| m.coverage)),
                opt(a.mean_lps),
            ])?;
        }
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }

    pub fn write_raw_csv<W: Write>(&self, out: W) -> Result<()> {
        let l = self.truth_tau.len();
        let nz_len = self.raw.iter().filter_map(|r| r.nz_posterior.as_ref().map(Vec::len)).max().unwrap_or(0);
        let mut header = vec!["replication".to_string(), "method".to_string()];
        for j in 0..l {
            header.extend([format!("tau_hat_{j}"), format!("lower_{j}"), format!("upper_{j}")]);
        }
        header.extend(["lps", "true_treatment_prob", "mean_treatment_size"].map(String::from));
        header.extend((0..nz_len).map(|k| format!("nz_{k}")));
        header.push("error".into());
        let mut w = csv::Writer::from_writer(out);
        w.write_record(&header)?;
        for r in &self.raw {
            let mut rec = vec![r.replication.to_string(), r.method.clone()];
            for j in 0..l {
                rec.extend([r.tau_hat[j], r.intervals[j].0, r.intervals[j].1].map(|v| v.to_string()));
            }
            rec.extend([opt(r.lps), opt(r.true_treatment_prob), opt(r.mean_treatment_size)]);
            for k in 0..nz_len {
                rec.push(opt(r.nz_posterior.as_ref().and_then(|v| v.get(k).copied())));
            }
            rec.push(r.error.clone().unwrap_or_default());
            w.write_record(&rec)?;
        }
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }

    pub fn write_files(&self, dir: &Path) -> Result<()> {
        let io = |path: &Path| {
            let path = path.to_path_buf();
            move |source| BenchError::Io { path, source }
        };
        std::fs::create_dir_all(dir).map_err(io(dir))?;
        let agg = dir.join(format!("{}_aggregate.csv", self.name));
        self.write_aggregate_csv(std::fs::File::create(&agg).map_err(io(&agg))?)?;
        let raw = dir.join(format!("{}_raw.csv", self.name));
        self.write_raw_csv(std::fs::File::create(&raw).map_err(io(&raw))?)?;
        let table = dir.join(format!("{}_table.txt", self.name));
        std::fs::write(&table, self.table()).map_err(io(&table))?;
        Ok(())
    }

    /// Fixed-width comparison table: one row per method.
    pub fn table(&self) -> String {
        let width = self.aggregate.iter().map(|a| a.label.len()).max().unwrap_or(6).max(6);
        let mut s = String::new();
        let _ = writeln!(s, "{}", self.name);
        let _ = writeln!(
            s,
            "{:<width$}  {:>7}  {:>7}  {:>7}  {:>7}  {:>5}",
            "method", "MAE", "bias", "cover", "LPS", "fail"
        );
        let cell = |v: Option<f64>| v.filter(|x| x.is_finite()).map(|x| format!("{x:.3}")).unwrap_or_else(|| "-".into());
        for a in &self.aggregate {
            let m = a.metrics;
            let _ = writeln!(
                s,
                "{:<width$}  {:>7}  {:>7}  {:>7}  {:>7}  {:>5}",
                a.label,
                cell(m.map(|m| m.mae)),
                cell(m.map(|m| m.median_bias)),
                cell(m.map(|m| m.coverage)),
                cell(a.mean_lps),
                a.failures
            );
        }
        s
    }

    pub fn row(&self, method: &str) -> Option<&AggregateRow> {
        self.aggregate.iter().find(|a| a.method == method)
    }

    pub fn raw_rows<'a>(&'a self, method: &'a str) -> impl Iterator<Item = &'a RawRow> + 'a {
        self.raw.iter().filter(move |r| r.method == method)
    }
}

/// Experiment configurations shipped with the crate, by name.
pub const BUNDLED: [(&str, &str); 14] = [
    ("invalid-n50-s3", include_str!("../specs/invalid-n50-s3.json")),
    ("invalid-n50-s6", include_str!("../specs/invalid-n50-s6.json")),
    ("invalid-n500-s3", include_str!("../specs/invalid-n500-s3.json")),
    ("invalid-n500-s6", include_str!("../specs/invalid-n500-s6.json")),
    ("multend-n50", include_str!("../specs/multend-n50.json")),
    ("multend-n500", include_str!("../specs/multend-n500.json")),
    ("manyweak-n50-r2001-gauss", include_str!("../specs/manyweak-n50-r2001-gauss.json")),
    ("manyweak-n50-r201-gauss", include_str!("../specs/manyweak-n50-r201-gauss.json")),
    ("manyweak-n500-r2001-gauss", include_str!("../specs/manyweak-n500-r2001-gauss.json")),
    ("manyweak-n500-r201-gauss", include_str!("../specs/manyweak-n500-r201-gauss.json")),
    ("manyweak-n50-r2001-poisson", include_str!("../specs/manyweak-n50-r2001-poisson.json")),
    ("manyweak-n50-r201-poisson", include_str!("../specs/manyweak-n50-r201-poisson.json")),
    ("manyweak-n500-r2001-poisson", include_str!("../specs/manyweak-n500-r2001-poisson.json")),
    ("manyweak-n500-r201-poisson", include_str!("../specs/manyweak-n500-r201-poisson.json")),
];

pub fn bundled(name: &str) -> Result<ExperimentSpec> {
    let (_, json) = BUNDLED
        .iter()
        .find(|(n, _)| *n == name)
        .ok_or_else(|| BenchError::Spec(format!("no bundled experiment named `{name}`")))?;
    ExperimentSpec::from_json(json)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_specs_parse() {
        for (name, _) in BUNDLED {
            let spec = bundled(name).unwrap();
            assert_eq!(spec.name, name);
        }
    }

    #[test]
    fn out_of_scope_method_rejected_up_front() {
        let mut spec = bundled("invalid-n50-s3").unwrap();
        spec.methods.push("sisVIVE".parse().unwrap());
        assert!(matches!(spec.validate(), Err(BenchError::OutOfScope(n)) if n == "sisVIVE"));
    }

    #[test]
    fn failed_replications_are_counted_and_excluded() {
        let spec = ExperimentSpec {
            methods: vec![Method::Tsls, Method::Jive],
            ..bundled("invalid-n50-s3").unwrap()
        };
        let row = |rep: usize, method: &str, tau: f64, error: Option<&str>| RawRow {
            replication: rep,
            method: method.into(),
            tau_hat: vec![tau],
            intervals: vec![(tau - 0.1, tau + 0.1)],
            lps: error.is_none().then_some(1.5),
            nz_posterior: None,
            true_treatment_prob: None,
            mean_treatment_size: None,
            error: error.map(String::from),
        };
        let raw = vec![
            row(0, "tsls", 0.3, None),
            row(0, "jive", f64::NAN, Some("leverage")),
            row(1, "tsls", f64::NAN, Some("singular")),
            row(1, "jive", f64::NAN, Some("leverage")),
        ];
        let agg = aggregate(&spec, &[0.1], &raw);
        assert_eq!((agg[0].succeeded, agg[0].failures), (1, 1));
        let m = agg[0].metrics.unwrap();
        assert!((m.mae - 0.2).abs() < 1e-12 && m.coverage == 0.0);
        assert_eq!(agg[0].mean_lps, Some(1.5));
        assert_eq!((agg[1].succeeded, agg[1].failures), (0, 2));
        assert!(agg[1].metrics.is_none() && agg[1].mean_lps.is_none());
    }

    #[test]
    fn method_seeds_are_distinct() {
        let spec = bundled("invalid-n50-s3").unwrap();
        let mut seeds: Vec<u64> = (0..4).flat_map(|r| (0..4).map(move |k| (r, k))).map(|(r, k)| spec.method_seed(r, k)).collect();
        seeds.sort();
        seeds.dedup();
        assert_eq!(seeds.len(), 16);
    }
}
