//! Acceptance checks, output inventories and run manifests.

use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{io, CliError, Result};

/// One acceptance criterion with its owning experiment and runtime budget.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Criterion {
    pub number: u32,
    pub experiment: &'static str,
    pub claim: &'static str,
    pub budget_s: f64,
}

pub const REPRODUCE_ALL: &str = "reproduce-all";

pub const CRITERIA: [Criterion; 15] = [
    Criterion { number: 1, experiment: "stencil", claim: "stencil weights recovered", budget_s: 30.0 },
    Criterion { number: 2, experiment: "stencil", claim: "sine-trained stencil transfers to cosine", budget_s: 30.0 },
    Criterion { number: 3, experiment: "euler", claim: "explicit Euler weights recovered", budget_s: 30.0 },
    Criterion { number: 4, experiment: "quadrature", claim: "Gauss rules recovered for n = 2, 3, 4", budget_s: 120.0 },
    Criterion { number: 5, experiment: "chidenn", claim: "C-HiDeNN interpolation properties", budget_s: 120.0 },
    Criterion { number: 6, experiment: "chidenn", claim: "s = 0 reduces to linear FEM", budget_s: 60.0 },
    Criterion { number: 7, experiment: "chidenn", claim: "C-HiDeNN convergence against FEM", budget_s: 600.0 },
    Criterion { number: 8, experiment: "stfem", claim: "clean identification of (m, c, k)", budget_s: 300.0 },
    Criterion { number: 9, experiment: "stfem", claim: "clean model predicts new conditions", budget_s: 60.0 },
    Criterion { number: 10, experiment: "stfem", claim: "noisy identification and prediction", budget_s: 300.0 },
    Criterion {
        number: 11,
        experiment: "stfem",
        claim: "stepper equals direct solve, gradients checked",
        budget_s: 60.0,
    },
    Criterion { number: 12, experiment: "sca", claim: "SCA matches the analytic oracle at k = 33", budget_s: 60.0 },
    Criterion { number: 13, experiment: "sca", claim: "GKN training reduces NMSE tenfold", budget_s: 900.0 },
    Criterion { number: 14, experiment: "sca", claim: "GKN extrapolates to 300 clusters", budget_s: 60.0 },
    Criterion { number: 15, experiment: REPRODUCE_ALL, claim: "reproduce-all is byte-deterministic", budget_s: 2700.0 },
];

pub fn criterion(number: u32) -> &'static Criterion {
    CRITERIA.iter().find(|c| c.number == number).expect("criterion numbers are 1..=15")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Relation {
    #[serde(rename = "<=")]
    AtMost,
    #[serde(rename = "<")]
    Below,
    #[serde(rename = ">=")]
    AtLeast,
}

impl Relation {
    fn holds(self, value: f64, threshold: f64) -> bool {
        match self {
            Relation::AtMost => value <= threshold,
            Relation::Below => value < threshold,
            Relation::AtLeast => value >= threshold,
        }
    }

    fn symbol(self) -> &'static str {
        match self {
            Relation::AtMost => "<=",
            Relation::Below => "<",
            Relation::AtLeast => ">=",
        }
    }
}

/// One measured quantity of a criterion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Part {
    pub name: String,
    pub value: f64,
    pub relation: Relation,
    pub threshold: f64,
    pub passed: bool,
}

impl Part {
    pub fn describe(&self) -> String {
        let mark = if self.passed { "ok" } else { "FAIL" };
        format!("{} = {:.4e} {} {:.4e} [{mark}]", self.name, self.value, self.relation.symbol(), self.threshold)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub criterion: u32,
    pub claim: String,
    pub passed: bool,
    pub parts: Vec<Part>,
    pub runtime_s: f64,
    pub budget_s: f64,
    pub error: Option<String>,
}

impl Check {
    pub fn new(number: u32) -> Self {
        let c = criterion(number);
        Self {
            criterion: number,
            claim: c.claim.to_string(),
            passed: false,
            parts: Vec::new(),
            runtime_s: 0.0,
            budget_s: c.budget_s,
            error: None,
        }
    }

    pub fn failed(number: u32, error: impl Into<String>, runtime_s: f64) -> Self {
        let mut c = Self::new(number);
        c.error = Some(error.into());
        c.runtime_s = runtime_s;
        c
    }

    pub fn part(mut self, name: impl Into<String>, value: f64, relation: Relation, threshold: f64) -> Self {
        let passed = relation.holds(value, threshold);
        self.parts.push(Part { name: name.into(), value, relation, threshold, passed });
        self
    }

    pub fn at_most(self, name: impl Into<String>, value: f64, threshold: f64) -> Self {
        self.part(name, value, Relation::AtMost, threshold)
    }

    pub fn below(self, name: impl Into<String>, value: f64, threshold: f64) -> Self {
        self.part(name, value, Relation::Below, threshold)
    }

    pub fn at_least(self, name: impl Into<String>, value: f64, threshold: f64) -> Self {
        self.part(name, value, Relation::AtLeast, threshold)
    }

    /// Records the runtime and settles the verdict: every part holds, no
    /// error occurred and the runtime is within budget.
    pub fn finish(mut self, runtime_s: f64) -> Self {
        self.runtime_s = runtime_s;
        self.passed = self.error.is_none()
            && !self.parts.is_empty()
            && self.parts.iter().all(|p| p.passed)
            && runtime_s <= self.budget_s;
        self
    }

    pub fn detail(&self) -> String {
        if let Some(e) = &self.error {
            return format!("error: {e}");
        }
        let mut s: Vec<String> = self.parts.iter().map(Part::describe).collect();
        if self.runtime_s > self.budget_s {
            s.push(format!("runtime {:.1} s over budget {:.0} s", self.runtime_s, self.budget_s));
        }
        s.join("; ")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutputFile {
    pub path: String,
    pub bytes: u64,
    pub sha256: String,
}

pub fn sha256_hex(data: &[u8]) -> String {
    Sha256::digest(data).iter().map(|b| format!("{b:02x}")).collect()
}

/// An experiment's output directory and the inventory of files written to it.
#[derive(Debug)]
pub struct OutputDir {
    root: PathBuf,
    files: Vec<OutputFile>,
}

impl OutputDir {
    pub fn create(root: &Path) -> Result<Self> {
        std::fs::create_dir_all(root).map_err(io(root))?;
        Ok(Self { root: root.to_path_buf(), files: Vec::new() })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn write(&mut self, name: &str, contents: &str) -> Result<()> {
        let path = self.root.join(name);
        std::fs::write(&path, contents).map_err(io(&path))?;
        self.files.retain(|f| f.path != name);
        self.files.push(OutputFile {
            path: name.to_string(),
            bytes: contents.len() as u64,
            sha256: sha256_hex(contents.as_bytes()),
        });
        Ok(())
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let mut text = serde_json::to_string_pretty(value)
            .map_err(|e| CliError::Serialize { what: name.into(), detail: e.to_string() })?;
        text.push('\n');
        self.write(name, &text)
    }

    pub fn files(&self) -> &[OutputFile] {
        &self.files
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub experiment: String,
    pub version: String,
    pub config_sha256: String,
    pub seed: u64,
    pub started_unix_s: f64,
    pub finished_unix_s: f64,
    pub runtime_s: f64,
    pub passed: bool,
    pub checks: Vec<Check>,
    pub outputs: Vec<OutputFile>,
}

impl Manifest {
    pub fn failed_criteria(&self) -> Vec<u32> {
        self.checks.iter().filter(|c| !c.passed).map(|c| c.criterion).collect()
    }
}

pub fn unix_now() -> f64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs_f64()).unwrap_or(0.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn criteria_are_numbered_once() {
        for (i, c) in CRITERIA.iter().enumerate() {
            assert_eq!(c.number as usize, i + 1);
        }
    }

    #[test]
    fn verdict_needs_every_part_and_the_budget() {
        let ok = Check::new(1).at_most("a", 1.0, 1.0).at_least("b", 2.0, 1.0).below("c", 0.5, 1.0).finish(1.0);
        assert!(ok.passed);
        assert!(!Check::new(1).at_most("a", 1.1, 1.0).at_most("b", 0.0, 1.0).finish(1.0).passed);
        assert!(!Check::new(1).below("a", 1.0, 1.0).finish(1.0).passed);
        assert!(!Check::new(1).at_most("a", 0.0, 1.0).finish(31.0).passed);
        assert!(!Check::new(1).finish(0.0).passed);
        assert!(!Check::new(1).at_most("a", f64::NAN, 1.0).finish(0.0).passed);
        assert!(!Check::failed(1, "boom", 0.0).passed);
    }

    #[test]
    fn inventory_hashes_written_bytes() {
        let dir = tempfile::tempdir().unwrap();
        let mut out = OutputDir::create(&dir.path().join("x")).unwrap();
        out.write("a.csv", "abc").unwrap();
        out.write("a.csv", "abc").unwrap();
        assert_eq!(out.files().len(), 1);
        assert_eq!(out.files()[0].sha256, "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
        assert_eq!(std::fs::read_to_string(dir.path().join("x/a.csv")).unwrap(), "abc");
    }
}
