use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use clap::Args;
use givbma_bench::experiment::BUNDLED;
use givbma_bench::{bundled, run_experiment, ExperimentSpec};

use crate::error::{CliError, CliResult};
use crate::manifest::{create_dir, ManifestBuilder};

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// Experiment spec JSON file, or the name of a bundled spec.
    #[arg(long, required_unless_present = "list")]
    pub experiment: Option<String>,
    #[arg(long, required_unless_present = "list")]
    pub out: Option<PathBuf>,
    /// Overrides the spec seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Overrides the spec replication count.
    #[arg(long)]
    pub replications: Option<usize>,
    /// List the bundled specs and exit.
    #[arg(long, conflicts_with_all = ["experiment", "out"])]
    pub list: bool,
}

fn load(experiment: &str) -> CliResult<(ExperimentSpec, Option<PathBuf>)> {
    let path = Path::new(experiment);
    if path.is_file() {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
        return Ok((ExperimentSpec::from_json(&text)?, Some(path.to_path_buf())));
    }
    bundled(experiment).map(|s| (s, None)).map_err(|_| {
        let names: Vec<&str> = BUNDLED.iter().map(|(n, _)| *n).collect();
        CliError::config(format!(
            "`{experiment}` is neither a spec file nor a bundled spec; bundled specs: {}",
            names.join(", ")
        ))
    })
}

pub fn run(args: &BenchArgs) -> CliResult<()> {
    if args.list {
        for (name, _) in BUNDLED.iter() {
            println!("{name}");
        }
        return Ok(());
    }
    let (Some(experiment), Some(out)) = (&args.experiment, &args.out) else {
        unreachable!("clap enforces --experiment and --out without --list");
    };
    let (mut spec, file) = load(experiment)?;
    if let Some(seed) = args.seed {
        spec.seed = seed;
    }
    if let Some(reps) = args.replications {
        spec.dgp.replications = reps;
    }
    spec.validate()?;

    let mut manifest = ManifestBuilder::start("bench", &spec, Some(spec.seed));
    if let Some(f) = &file {
        manifest.input("experiment", f)?;
    }
    let result = run_experiment(&spec)?;
    create_dir(out)?;
    result.write_files(out)?;

    let failures: BTreeMap<&str, usize> = result.aggregate.iter().map(|r| (r.method.as_str(), r.failures)).collect();
    manifest.diagnostics(serde_json::json!({
        "replications": spec.dgp.replications,
        "truth_tau": result.truth_tau,
        "failures": failures,
    }));
    let names = ["aggregate.csv", "raw.csv", "table.txt"].map(|s| format!("{}_{s}", spec.name));
    manifest.finish(out, &names.each_ref().map(String::as_str))?;
    print!("{}", result.table());
    Ok(())
}
