//! Drives the batch front-end from code, the same way the `aggruin` binary
//! does, and reads back one CSV and the path dump.
//!
//!     cargo run --release --example run_config

use std::path::Path;

use aggruin::cli::{run, Format, RunArgs};
use aggruin::config::CommandName;
use aggruin::simulation::PathBatch;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out = std::env::temp_dir().join("aggruin-run-config");
    let configs = Path::new(env!("CARGO_MANIFEST_DIR")).join("configs");

    let cfg = out.join("small_bm.toml");
    std::fs::create_dir_all(&out)?;
    std::fs::write(
        &cfg,
        r#"seed = 1
u_grid = [0.5, 1.0]
[model]
T = 1.0
components = [{ weight = 1.0, family = "fbm", hurst = 0.5 }]
trend = { kind = "linear", rate = 1.0 }
[simulation]
method = "crude"
m = 256
n = 20000
dump_paths = 4
"#,
    )?;

    let args = |config: &Path| RunArgs {
        config: config.to_path_buf(),
        seed: None,
        workers: Some(2),
        out: Some(out.clone()),
        format: Format::Csv,
    };
    let summary = run(CommandName::Simulate, &args(&cfg)).map_err(|e| e.to_string())?;
    for p in &summary.outputs {
        println!("wrote {}", p.display());
    }
    print!("{}", std::fs::read_to_string(&summary.outputs[0])?);

    let dump = std::fs::File::open(out.join("paths.bin"))?;
    let batch = PathBatch::read_dump(dump, 1.0)?;
    println!("dump: {} paths, X(T) of the first = {:.4}", batch.n, batch.row(0)[batch.grid.m()]);

    let s = run(CommandName::Asym, &args(&configs.join("rough_mixture_asym.toml")));
    match s {
        Ok(s) => print!("{}", std::fs::read_to_string(&s.outputs[0])?),
        Err(e) => println!("asym failed with exit code {}: {e}", e.exit_code()),
    }
    Ok(())
}
