//! Every subcommand end to end on a small configuration.

use std::path::Path;

use rectilinear::report::output::strip_comments;
use rectilinear::report::{run_command, verdict_from_csv, Command, ExperimentConfig};

fn small_config(dir: &Path) -> ExperimentConfig {
    let mut c = ExperimentConfig::default();
    c.output_dir = dir.to_string_lossy().into_owned();
    c.simulation.paths = 3000;
    c.audit.theta_grid_points = 1000;
    c.audit.identity_grid_points = 16;
    c.audit.uniform_exit_points = 4;
    c.audit.uniform_exit_paths = 400;
    c
}

#[test]
fn all_commands_write_consistent_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    for cmd in Command::ALL {
        let out = run_command(cmd, &cfg).unwrap_or_else(|e| panic!("{}: {e}", cmd.name()));
        assert!(!out.lines.is_empty(), "{}", cmd.name());
        let manifest: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&out.manifest).unwrap()).unwrap();
        let embedded: ExperimentConfig = serde_json::from_value(manifest["config"].clone()).unwrap();
        assert_eq!(embedded, cfg);
        assert_eq!(manifest["provenance"]["seed"], cfg.seed);
        assert_eq!(manifest["provenance"]["command"], cmd.name());
        for f in manifest["files"].as_array().unwrap() {
            assert!(dir.path().join(f.as_str().unwrap()).exists());
        }
    }
    for entry in std::fs::read_dir(dir.path()).unwrap() {
        let path = entry.unwrap().path();
        let text = std::fs::read_to_string(&path).unwrap();
        match path.extension().and_then(|e| e.to_str()) {
            Some("csv") => {
                assert!(text.starts_with("# command="), "{}", path.display());
                let body = strip_comments(&text);
                let mut rd = csv::Reader::from_reader(body.as_bytes());
                let width = rd.headers().unwrap().len();
                for rec in rd.records() {
                    assert_eq!(rec.unwrap().len(), width, "{}", path.display());
                }
            }
            Some("svg") => {
                roxmltree::Document::parse(&text).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
            }
            Some("json") => {
                serde_json::from_str::<serde_json::Value>(&text).unwrap();
            }
            _ => panic!("unexpected file {}", path.display()),
        }
    }
    // the saved ratio table alone reproduces the verdict in the JSON report
    let saved: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("density_verdict.json")).unwrap()).unwrap();
    let first = &saved["reports"][0]["verdict"];
    let csv = strip_comments(&std::fs::read_to_string(dir.path().join("ratio_identity_start0.csv")).unwrap());
    let again = verdict_from_csv(&csv, cfg.verdict.spread_max).unwrap();
    assert_eq!(again.pass, first["pass"].as_bool().unwrap());
    assert_eq!(again.spread, first["spread"].as_f64().unwrap());
}

#[test]
fn bad_configs_are_rejected_before_running() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small_config(dir.path());
    cfg.alpha = 2.0;
    assert!(run_command(Command::ThetaBuild, &cfg).is_err());
    let mut cfg = small_config(dir.path());
    cfg.field.compare = vec!["nonexistent".into()];
    let err = run_command(Command::ThetaBuild, &cfg).unwrap_err().to_string();
    assert!(err.contains("nonexistent"), "{err}");
    assert!(ExperimentConfig::from_toml_str("[ball]\nradius = 1.0\n").is_err());
}
