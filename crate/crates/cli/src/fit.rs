use std::path::{Path, PathBuf};

use clap::Args;
use givbma::chain_io::write_chain;
use givbma::data::{ingest_csv, Schema};
use givbma::fit::fit;
use givbma::sampler::SamplerConfig;
use givbma::{Dataset64, Fit64};

use crate::error::{CliError, CliResult};
use crate::manifest::{create_dir, write_file, ManifestBuilder};

pub const CHAIN: &str = "chain.csv";
pub const SUMMARY: &str = "summary.json";
pub const DENSITY: &str = "tau_density.csv";
pub const STANDARDIZATION: &str = "standardization.json";

#[derive(Debug, Args)]
pub struct FitArgs {
    /// Training data CSV with a header row.
    #[arg(long)]
    pub data: PathBuf,
    /// JSON schema assigning column roles and families.
    #[arg(long)]
    pub schema: PathBuf,
    /// Sampler configuration JSON; defaults apply when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// Overrides the seed in the config.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Credible level for the summary intervals.
    #[arg(long, default_value_t = 0.95)]
    pub level: f64,
    /// Grid points per treatment in the density CSV.
    #[arg(long, default_value_t = 201)]
    pub grid: usize,
}

pub fn load_config(path: Option<&Path>) -> CliResult<SamplerConfig> {
    let Some(path) = path else {
        return Ok(SamplerConfig::default());
    };
    let text = std::fs::read_to_string(path).map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::config(format!("{}: {e}", path.display())))
}

pub fn load_schema(path: &Path) -> CliResult<Schema> {
    Schema::from_json_file(path).map_err(|e| CliError::data(format!("{}: {e}", path.display())))
}

fn density_csv(fit: &Fit64, names: &[String], grid: usize) -> CliResult<Vec<u8>> {
    let retained = fit.chain.retained();
    let mut w = csv::Writer::from_writer(Vec::new());
    let csv_err = |e: csv::Error| CliError::new(crate::error::OTHER, e.to_string());
    w.write_record(["treatment", "tau", "density"]).map_err(csv_err)?;
    for j in 0..fit.chain.l {
        let draws: Vec<f64> = retained
            .iter()
            .map(|d| fit.standardization.tau_to_original(j, d.tau[j]))
            .collect();
        let lo = draws.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = draws.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let pad = 0.25 * (hi - lo).max(1e-8);
        let (lo, hi) = (lo - pad, hi + pad);
        let step = (hi - lo) / (grid.max(2) - 1) as f64;
        let points: Vec<f64> = (0..grid.max(2)).map(|k| lo + k as f64 * step).collect();
        let dens = fit.tau_density(j, &points).map_err(CliError::from_run)?;
        let name = &names[j];
        for (t, d) in points.iter().zip(dens) {
            w.write_record([name.clone(), t.to_string(), d.to_string()]).map_err(csv_err)?;
        }
    }
    w.into_inner().map_err(|e| CliError::new(crate::error::OTHER, e.to_string()))
}

pub fn run(args: &FitArgs) -> CliResult<()> {
    let mut cfg = load_config(args.config.as_deref())?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if !(args.level > 0.0 && args.level < 1.0) {
        return Err(CliError::config(format!("--level must lie in (0, 1), got {}", args.level)));
    }
    let schema = load_schema(&args.schema)?;
    let data: Dataset64 = ingest_csv(&args.data, &schema).map_err(CliError::from_data)?;
    cfg.validate(&data).map_err(CliError::from_data)?;

    let mut manifest = ManifestBuilder::start("fit", &cfg, Some(cfg.seed));
    manifest.input("data", &args.data)?;
    manifest.input("schema", &args.schema)?;
    if let Some(c) = &args.config {
        manifest.input("config", c)?;
    }

    let fit = fit(&data, &cfg).map_err(CliError::from_run)?;
    let summary = fit.summary(args.level).map_err(CliError::from_run)?;

    create_dir(&args.out)?;
    let mut chain = Vec::new();
    write_chain(&fit.chain, &mut chain).map_err(CliError::from_run)?;
    write_file(&args.out.join(CHAIN), &chain)?;
    write_file(&args.out.join(SUMMARY), (serde_json::to_string_pretty(&summary).expect("summary serializes") + "\n").as_bytes())?;
    write_file(&args.out.join(DENSITY), &density_csv(&fit, &data.names().treatments, args.grid)?)?;
    write_file(
        &args.out.join(STANDARDIZATION),
        (serde_json::to_string_pretty(&fit.standardization).expect("standardization serializes") + "\n").as_bytes(),
    )?;

    manifest.diagnostics(&fit.chain.diagnostics);
    manifest.finish(&args.out, &[CHAIN, SUMMARY, DENSITY, STANDARDIZATION])?;
    for (j, t) in summary.tau.iter().enumerate() {
        println!(
            "{}: mean {:.4}, {:.0}% interval [{:.4}, {:.4}]",
            schema.treatments[j].column,
            t.mean,
            100.0 * args.level,
            t.lower,
            t.upper
        );
    }
    Ok(())
}
