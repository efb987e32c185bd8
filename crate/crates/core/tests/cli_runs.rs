use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const ROUGH_MIXTURE: &str = r#"
command = "asym"
u_grid = [5.0, 10.0, 20.0]

[model]
T = 1.0
components = [
    { weight = 1.0, family = "fbm", hurst = 0.4 },
    { weight = 1.0, family = "time_changed_bm", hurst = 0.4 },
]
trend = { kind = "linear", rate = 1.0 }

[constants]
mode = "mc"
horizon = 10.0
grid_per_unit = 64
reps = 1000
"#;

const SIMULATE: &str = r#"
command = "simulate"
u_grid = [0.5, 1.0]

[model]
T = 1.0
components = [{ weight = 1.0, family = "fbm", hurst = 0.7 }]
trend = { kind = "linear", rate = 1.0 }

[simulation]
method = "importance"
m = 64
n = 4000
dump_paths = 5
"#;

fn write_config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn aggruin(sub: &str, config: &Path, out: &Path, extra: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_aggruin"))
        .arg(sub)
        .arg("--config")
        .arg(config)
        .arg("--out")
        .arg(out)
        .args(["--format", "csv"])
        .args(extra)
        .output()
        .unwrap()
}

fn csv_rows(path: &Path) -> Vec<csv::StringRecord> {
    csv::Reader::from_path(path).unwrap().records().map(Result::unwrap).collect()
}

#[test]
fn asym_on_rough_mixture_gives_three_rows_below_the_diagonal() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "mixture.toml", ROUGH_MIXTURE);
    let out = aggruin("asym", &cfg, dir.path(), &[]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let rows = csv_rows(&dir.path().join("asym.csv"));
    assert_eq!(rows.len(), 3);
    assert!(rows.iter().all(|r| &r[2] == "ALPHA_LT_BETA"));
    let manifest = std::fs::read_to_string(dir.path().join("asym.manifest.toml")).unwrap();
    assert!(manifest.contains("config_sha256") && manifest.contains("seed"));
}

#[test]
fn negative_weight_exits_one_naming_the_key() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "bad.toml", &ROUGH_MIXTURE.replacen("weight = 1.0", "weight = -1.0", 1));
    let out = aggruin("asym", &cfg, dir.path(), &[]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("model.components[0].weight"), "{err}");
    assert!(!dir.path().join("asym.csv").exists());
}

#[test]
fn unknown_key_exits_one_naming_the_key() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "bad.toml", &ROUGH_MIXTURE.replace("T = 1.0", "T = 1.0\nhorizon_typo = 2"));
    let out = aggruin("asym", &cfg, dir.path(), &[]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("model.horizon_typo"));
}

#[test]
fn small_constant_budget_names_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "bad.toml", &ROUGH_MIXTURE.replace("reps = 1000", "reps = 10"));
    let out = aggruin("asym", &cfg, dir.path(), &[]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("constants.reps"));
}

#[test]
fn missing_config_exits_three() {
    let dir = tempfile::tempdir().unwrap();
    let out = aggruin("asym", &dir.path().join("absent.toml"), dir.path(), &[]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn simulate_is_reproducible_across_runs_and_workers() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "sim.toml", SIMULATE);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert_eq!(aggruin("simulate", &cfg, &a, &["--workers", "1"]).status.code(), Some(0));
    assert_eq!(aggruin("simulate", &cfg, &b, &["--workers", "4"]).status.code(), Some(0));
    for file in ["simulate.csv", "paths.bin"] {
        let (x, y) = (std::fs::read(a.join(file)).unwrap(), std::fs::read(b.join(file)).unwrap());
        assert_eq!(x, y, "{file}");
    }
    let header = &std::fs::read(a.join("paths.bin")).unwrap()[..16];
    assert_eq!(&header[..8], b"GPPATHS1");
    assert_eq!(u32::from_le_bytes(header[8..12].try_into().unwrap()), 64);
    assert_eq!(u32::from_le_bytes(header[12..16].try_into().unwrap()), 5);

    let other = dir.path().join("c");
    aggruin("simulate", &cfg, &other, &["--seed", "7"]);
    assert_ne!(std::fs::read(a.join("simulate.csv")).unwrap(), std::fs::read(other.join("simulate.csv")).unwrap());

    // Nothing but outputs and manifests is left behind.
    let mut names: Vec<_> = std::fs::read_dir(&a).unwrap().map(|e| e.unwrap().file_name()).collect();
    names.sort();
    assert_eq!(names, ["paths.bin", "simulate.csv", "simulate.manifest.toml"]);
}

#[test]
fn command_mismatch_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "sim.toml", SIMULATE);
    let out = aggruin("asym", &cfg, dir.path(), &[]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("command"));
}

#[test]
fn shipped_configs_parse() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("configs");
    for entry in std::fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        let parsed = aggruin::config::load_config(&path).unwrap();
        assert!(parsed.is_ok(), "{}: {:?}", path.display(), parsed.err());
    }
}
