use std::path::PathBuf;

use clap::Args;
use givbma::chain_io::read_chain_file;
use givbma::data::{ingest_holdout_csv, Standardization};
use givbma::{Dataset64, Fit64};

use crate::error::{CliError, CliResult, OTHER};
use crate::fit::{load_schema, STANDARDIZATION};
use crate::manifest::{create_dir, write_file, ManifestBuilder};

pub const OUTPUT: &str = "predictive.csv";

#[derive(Debug, Args)]
pub struct PredictArgs {
    /// Chain CSV written by `fit`.
    #[arg(long)]
    pub chain: PathBuf,
    #[arg(long)]
    pub holdout: PathBuf,
    #[arg(long)]
    pub schema: PathBuf,
    /// Standardization JSON written by `fit`; defaults to the one next to the
    /// chain, or no rescaling if there is none.
    #[arg(long)]
    pub standardization: Option<PathBuf>,
    /// Output directory; defaults to the chain's directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn run(args: &PredictArgs) -> CliResult<()> {
    let schema = load_schema(&args.schema)?;
    let (l, p) = (schema.treatments.len(), schema.pool.len());
    let chain_dir = args.chain.parent().map(PathBuf::from).unwrap_or_default();
    let std_path = args
        .standardization
        .clone()
        .or_else(|| Some(chain_dir.join(STANDARDIZATION)).filter(|p| p.is_file()));
    let standardization = match &std_path {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
            serde_json::from_str::<Standardization>(&text).map_err(|e| CliError::data(format!("{}: {e}", path.display())))?
        }
        None => Standardization::identity(l, p),
    };
    if standardization.x.len() != l || standardization.z.len() != p {
        return Err(CliError::data("standardization does not match the schema"));
    }
    let chain = read_chain_file(&args.chain, schema.outcome.family, schema.treatments.iter().map(|c| c.family).collect())
        .map_err(CliError::from_data)?;
    if chain.p != p {
        return Err(CliError::data(format!("chain has {} pool columns, schema has {p}", chain.p)));
    }
    let holdout: Dataset64 = ingest_holdout_csv(&args.holdout, &schema).map_err(CliError::from_data)?;

    let mut manifest = ManifestBuilder::start("predict", &(&schema, &standardization), None);
    manifest.input("chain", &args.chain)?;
    manifest.input("holdout", &args.holdout)?;
    manifest.input("schema", &args.schema)?;
    if let Some(s) = &std_path {
        manifest.input("standardization", s)?;
    }

    let fit = Fit64 { chain, standardization };
    let rows = fit.row_logdensities(&holdout).map_err(CliError::from_run)?;
    let lps = -rows.iter().sum::<f64>() / rows.len() as f64;

    let out = args.out.clone().unwrap_or(chain_dir);
    create_dir(&out)?;
    let mut w = csv::Writer::from_writer(Vec::new());
    let csv_err = |e: csv::Error| CliError::new(OTHER, e.to_string());
    w.write_record(["row", "log_density"]).map_err(csv_err)?;
    for (i, v) in rows.iter().enumerate() {
        w.write_record([i.to_string(), v.to_string()]).map_err(csv_err)?;
    }
    write_file(&out.join(OUTPUT), &w.into_inner().map_err(|e| CliError::new(OTHER, e.to_string()))?)?;
    manifest.diagnostics(serde_json::json!({ "rows": rows.len(), "lps": lps }));
    manifest.finish(&out, &[OUTPUT])?;
    println!("LPS {lps}");
    Ok(())
}
