//! Experiment registry: one entry per study, each reporting its acceptance checks.

mod calculus;
mod chidenn;
mod sca;
mod stfem;

use std::marker::PhantomData;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::de::DeserializeOwned;
use serde::Serialize;
use toml::Table;

use crate::config::{resolve, resolved_text, to_table, RunConfig};
use crate::error::{CliError, Result};
use crate::manifest::{sha256_hex, unix_now, Check, Manifest, OutputDir};

pub use calculus::{EulerConfig, QuadratureConfig, StencilConfig, ThreePointConfig};
pub use chidenn::ChidennConfig;

pub trait Experiment: Sync {
    fn name(&self) -> &'static str;
    /// Criterion numbers this experiment reports, each exactly once.
    fn criteria(&self) -> &'static [u32];
    /// Default values overlaid with `section`, validated and re-expanded.
    fn resolve(&self, section: &Table) -> Result<Table>;
    fn execute(&self, resolved: &Table, seed: u64, out: &mut OutputDir) -> Result<Vec<Check>>;
}

type Exec<C> = fn(&C, u64, &mut OutputDir) -> Result<Vec<Check>>;

/// An experiment backed by a typed configuration.
pub struct Typed<C> {
    name: &'static str,
    criteria: &'static [u32],
    exec: Exec<C>,
    _config: PhantomData<fn() -> C>,
}

impl<C> Typed<C> {
    pub const fn new(name: &'static str, criteria: &'static [u32], exec: Exec<C>) -> Self {
        Self { name, criteria, exec, _config: PhantomData }
    }
}

impl<C: Serialize + DeserializeOwned + Default> Experiment for Typed<C> {
    fn name(&self) -> &'static str {
        self.name
    }

    fn criteria(&self) -> &'static [u32] {
        self.criteria
    }

    fn resolve(&self, section: &Table) -> Result<Table> {
        let cfg: C = resolve(self.name, section)?;
        to_table(self.name, &cfg)
    }

    fn execute(&self, resolved: &Table, seed: u64, out: &mut OutputDir) -> Result<Vec<Check>> {
        let cfg: C = resolve(self.name, resolved)?;
        (self.exec)(&cfg, seed, out)
    }
}

pub fn registry() -> Vec<Box<dyn Experiment>> {
    vec![
        Box::new(Typed::new("stencil", &[1, 2], calculus::run_stencil)),
        Box::new(Typed::new("euler", &[3], calculus::run_euler)),
        Box::new(Typed::new("quadrature", &[4], calculus::run_quadrature)),
        Box::new(Typed::new("chidenn", &[5, 6, 7], chidenn::run_chidenn)),
        Box::new(Typed::new("stfem", &[8, 9, 10, 11], stfem::run_stfem)),
        Box::new(Typed::new("sca", &[12, 13, 14], sca::run_sca)),
    ]
}

pub fn find<'a>(registry: &'a [Box<dyn Experiment>], name: &str) -> Result<&'a dyn Experiment> {
    registry
        .iter()
        .find(|e| e.name() == name)
        .map(|e| e.as_ref())
        .ok_or_else(|| CliError::UnknownExperiment(name.into()))
}

/// Mixes the run seed into a fixed per-purpose seed; seed 0 leaves it unchanged.
pub fn derive_seed(seed: u64, base: u64) -> u64 {
    base.wrapping_add(seed.wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

pub(crate) fn timed<T>(f: impl FnOnce() -> T) -> (T, f64) {
    let start = Instant::now();
    let v = f();
    (v, start.elapsed().as_secs_f64())
}

pub fn default_output_dir(experiment: &str) -> PathBuf {
    Path::new("out").join(experiment)
}

/// Runs one experiment: writes the resolved config, its outputs and
/// `manifest.json` into the output directory. Configuration errors are
/// returned; failures inside the study become failed checks carrying the
/// error text.
pub fn run(exp: &dyn Experiment, cfg: &RunConfig, out_dir: Option<&Path>) -> Result<Manifest> {
    let resolved = exp.resolve(&cfg.section)?;
    let dir = out_dir
        .map(Path::to_path_buf)
        .or_else(|| cfg.output_dir.clone())
        .unwrap_or_else(|| default_output_dir(exp.name()));
    let mut out = OutputDir::create(&dir)?;
    let text = resolved_text(exp.name(), cfg.seed, &dir, resolved.clone())?;
    out.write("resolved_config.toml", &text)?;
    let started = unix_now();
    let (result, runtime) = timed(|| exp.execute(&resolved, cfg.seed, &mut out));
    let mut checks = match result {
        Ok(c) => c,
        Err(e) => {
            let msg = format!("{} failed: {e}", exp.name());
            exp.criteria().iter().map(|&n| Check::failed(n, msg.clone(), runtime)).collect()
        }
    };
    checks.retain(|c| exp.criteria().contains(&c.criterion));
    for &n in exp.criteria() {
        let count = checks.iter().filter(|c| c.criterion == n).count();
        if count != 1 {
            checks.retain(|c| c.criterion != n);
            checks.push(Check::failed(n, format!("reported {count} times"), 0.0));
        }
    }
    checks.sort_by_key(|c| c.criterion);
    let manifest = Manifest {
        experiment: exp.name().to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        config_sha256: sha256_hex(text.as_bytes()),
        seed: cfg.seed,
        started_unix_s: started,
        finished_unix_s: unix_now(),
        runtime_s: runtime,
        passed: checks.iter().all(|c| c.passed),
        checks,
        outputs: out.files().to_vec(),
    };
    let mut manifest_out = OutputDir::create(&dir)?;
    manifest_out.write_json("manifest.json", &manifest)?;
    Ok(manifest)
}
