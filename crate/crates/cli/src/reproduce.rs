//! Runs every registered experiment at its defaults, twice, and tabulates the criteria.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::error::{io, Result};
use crate::experiments::{run, timed, Experiment};
use crate::manifest::{sha256_hex, unix_now, Check, Manifest, OutputDir, CRITERIA, REPRODUCE_ALL};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub criterion: u32,
    pub experiment: String,
    pub claim: String,
    pub passed: bool,
    pub runtime_s: f64,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub rows: Vec<SummaryRow>,
    pub manifests: Vec<Manifest>,
    /// CSV files whose bytes differ between the two passes.
    pub mismatched_csv: Vec<String>,
    pub compared_csv: usize,
    pub runtime_s: f64,
}

impl Summary {
    pub fn passed(&self) -> bool {
        self.rows.iter().all(|r| r.passed)
    }

    pub fn failed_criteria(&self) -> Vec<u32> {
        self.rows.iter().filter(|r| !r.passed).map(|r| r.criterion).collect()
    }

    pub fn table(&self) -> String {
        let mut s = format!("{:>3}  {:<13} {:<48} {:<6} {:>9}\n", "#", "experiment", "claim", "result", "runtime");
        for r in &self.rows {
            s.push_str(&format!(
                "{:>3}  {:<13} {:<48} {:<6} {:>8.1}s\n",
                r.criterion,
                r.experiment,
                r.claim,
                if r.passed { "PASS" } else { "FAIL" },
                r.runtime_s
            ));
        }
        s
    }
}

fn run_or_fail(exp: &dyn Experiment, seed: u64, dir: &Path) -> Manifest {
    let mut cfg = RunConfig::new(exp.name());
    cfg.seed = seed;
    run(exp, &cfg, Some(dir)).unwrap_or_else(|e| Manifest {
        experiment: exp.name().to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        config_sha256: String::new(),
        seed,
        started_unix_s: unix_now(),
        finished_unix_s: unix_now(),
        runtime_s: 0.0,
        passed: false,
        checks: exp.criteria().iter().map(|&n| Check::failed(n, e.to_string(), 0.0)).collect(),
        outputs: Vec::new(),
    })
}

fn csv_files(dir: &Path) -> BTreeMap<String, String> {
    let mut files = BTreeMap::new();
    if let Ok(entries) = std::fs::read_dir(dir) {
        for e in entries.flatten() {
            let name = e.file_name().to_string_lossy().to_string();
            if name.ends_with(".csv") {
                if let Ok(bytes) = std::fs::read(e.path()) {
                    files.insert(name, sha256_hex(&bytes));
                }
            }
        }
    }
    files
}

/// Runs the registry into `out/<experiment>`, repeats every run into a
/// scratch directory and compares the CSV bytes, then writes
/// `out/manifest.json` (criterion 15) and `out/summary.json`.
pub fn reproduce_all(registry: &[Box<dyn Experiment>], out: &Path, seed: u64) -> Result<Summary> {
    let started = unix_now();
    let rerun_root = out.join("rerun");
    let ((manifests, mismatched, compared), runtime) = timed(|| {
        let manifests: Vec<Manifest> =
            registry.iter().map(|e| run_or_fail(e.as_ref(), seed, &out.join(e.name()))).collect();
        let mut mismatched = Vec::new();
        let mut compared = 0;
        for e in registry {
            run_or_fail(e.as_ref(), seed, &rerun_root.join(e.name()));
            let a = csv_files(&out.join(e.name()));
            let b = csv_files(&rerun_root.join(e.name()));
            for name in a.keys().chain(b.keys().filter(|k| !a.contains_key(*k))) {
                compared += 1;
                if a.get(name) != b.get(name) {
                    mismatched.push(format!("{}/{name}", e.name()));
                }
            }
        }
        (manifests, mismatched, compared)
    });
    if rerun_root.exists() {
        std::fs::remove_dir_all(&rerun_root).map_err(io(&rerun_root))?;
    }

    let check15 = Check::new(15)
        .at_most("CSV files differing between runs", mismatched.len() as f64, 0.0)
        .at_least("CSV files compared", compared as f64, 1.0)
        .finish(runtime);
    let mut rows = Vec::new();
    for c in &CRITERIA {
        let found = if c.experiment == REPRODUCE_ALL {
            Some(&check15)
        } else {
            manifests.iter().flat_map(|m| &m.checks).find(|k| k.criterion == c.number)
        };
        let row = match found {
            Some(k) => SummaryRow {
                criterion: c.number,
                experiment: c.experiment.to_string(),
                claim: c.claim.to_string(),
                passed: k.passed,
                runtime_s: k.runtime_s,
                detail: k.detail(),
            },
            None => SummaryRow {
                criterion: c.number,
                experiment: c.experiment.to_string(),
                claim: c.claim.to_string(),
                passed: false,
                runtime_s: 0.0,
                detail: "no experiment reported this criterion".into(),
            },
        };
        rows.push(row);
    }

    let mut dir = OutputDir::create(out)?;
    let manifest = Manifest {
        experiment: REPRODUCE_ALL.to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        config_sha256: sha256_hex(format!("seed = {seed}\n").as_bytes()),
        seed,
        started_unix_s: started,
        finished_unix_s: unix_now(),
        runtime_s: runtime,
        passed: check15.passed,
        checks: vec![check15],
        outputs: manifests
            .iter()
            .flat_map(|m| {
                m.outputs.iter().map(|o| {
                    let mut o = o.clone();
                    o.path = format!("{}/{}", m.experiment, o.path);
                    o
                })
            })
            .collect(),
    };
    dir.write_json("manifest.json", &manifest)?;
    let summary = Summary { rows, manifests, mismatched_csv: mismatched, compared_csv: compared, runtime_s: runtime };
    dir.write_json("summary.json", &summary)?;
    Ok(summary)
}
