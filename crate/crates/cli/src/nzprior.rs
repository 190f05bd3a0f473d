use std::path::PathBuf;

use clap::Args;
use givbma::priors::nz_prior_pmf;

use crate::error::{CliError, CliResult};
use crate::manifest::{create_dir, write_file, ManifestBuilder};

pub const OUTPUT: &str = "nzprior.csv";

#[derive(Debug, Args)]
pub struct NzArgs {
    /// Number of pool columns.
    #[arg(long)]
    pub p: usize,
    /// Prior mean outcome model size; defaults to p/2.
    #[arg(long)]
    pub m_l: Option<f64>,
    /// Prior mean treatment model size; defaults to p/2.
    #[arg(long)]
    pub m_m: Option<f64>,
    /// Also write the table and a manifest here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn run(args: &NzArgs) -> CliResult<()> {
    let half = args.p as f64 / 2.0;
    let (m_l, m_m) = (args.m_l.unwrap_or(half), args.m_m.unwrap_or(half));
    let pmf = nz_prior_pmf(args.p, m_l, m_m).map_err(|e| CliError::config(e.to_string()))?;
    let mut table = String::from("n_z,probability\n");
    for (k, v) in pmf.iter().enumerate() {
        table += &format!("{k},{v}\n");
    }
    print!("{table}");
    if let Some(out) = &args.out {
        let manifest = ManifestBuilder::start("nzprior", &(args.p, m_l, m_m), None);
        create_dir(out)?;
        write_file(&out.join(OUTPUT), table.as_bytes())?;
        manifest.finish(out, &[OUTPUT])?;
    }
    Ok(())
}
