use std::path::{Path, PathBuf};

use opidmd_core::generators::{
    gen_advdiff1d, gen_advection2d, gen_lorenz, gen_msd5, gen_schrodinger1d, load_cylinder,
};
use opidmd_core::snapshots::{
    add_noise, build_pairs, read_csv, split, write_csv_with_comment, NoiseSpec, SnapshotMatrix, SnapshotPairStream,
    Split,
};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::{ExperimentConfig, GeneratorSpec};
use crate::{io_error, CliError};

pub const CLEAN_FILE: &str = "clean.csv";
pub const NOISY_FILE: &str = "noisy.csv";
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone)]
pub struct Dataset {
    pub clean: SnapshotMatrix,
    pub noisy: SnapshotMatrix,
}

/// Training pairs, prediction start and test window derived from a dataset.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub split: Split,
    /// Pairs from the same window of the noise-free series.
    pub clean_train: SnapshotPairStream,
    pub dt: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub experiment: String,
    pub generator: String,
    pub config_sha256: String,
    pub seed: u64,
    pub noise_kind: String,
    pub noise_ratio: f64,
    pub n_state: usize,
    pub n_time: usize,
    pub dt: f64,
}

pub fn config_hash(cfg: &ExperimentConfig) -> String {
    hex(&Sha256::digest(cfg.to_json().as_bytes()))
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

pub fn simulate(generator: &GeneratorSpec) -> Result<SnapshotMatrix, CliError> {
    let series = match generator {
        GeneratorSpec::Advection2d(c) => gen_advection2d(c)?,
        GeneratorSpec::Schrodinger1d(c) => gen_schrodinger1d(c)?,
        GeneratorSpec::Advdiff1d(c) => gen_advdiff1d(c)?,
        GeneratorSpec::Lorenz(c) => gen_lorenz(c)?,
        GeneratorSpec::Msd5(c) => gen_msd5(c)?,
        GeneratorSpec::Cylinder(src) => load_cylinder(src)?,
        GeneratorSpec::Csv(src) => read_csv(&src.path)?,
    };
    Ok(series)
}

pub fn generate(cfg: &ExperimentConfig) -> Result<Dataset, CliError> {
    let clean = simulate(&cfg.generator)?;
    let noisy = add_noise(&clean, &NoiseSpec::new(cfg.noise.ratio, cfg.seed)?)?;
    Ok(Dataset { clean, noisy })
}

pub fn prepare(cfg: &ExperimentConfig, data: &Dataset) -> Result<Prepared, CliError> {
    let split = split(&data.clean, &data.noisy, &cfg.split)?;
    let clean_train = build_pairs(&data.clean.columns(0, cfg.split.m_train))?;
    Ok(Prepared { split, clean_train, dt: data.clean.dt() })
}

fn layout_note(generator: &GeneratorSpec) -> Option<String> {
    match generator {
        GeneratorSpec::Advection2d(c) => Some(format!("state index i*{}+j holds u(x_i, y_j); y varies fastest", c.ny)),
        GeneratorSpec::Schrodinger1d(c) => Some(format!("observable {:?}", c.observable)),
        GeneratorSpec::Msd5(_) => Some("rows 0-4 displacements, rows 5-9 velocities".into()),
        _ => None,
    }
}

pub fn write_dataset(dir: &Path, cfg: &ExperimentConfig, data: &Dataset) -> Result<Manifest, CliError> {
    std::fs::create_dir_all(dir).map_err(|e| io_error(dir, e))?;
    let note = layout_note(&cfg.generator);
    write_csv_with_comment(&data.clean, dir.join(CLEAN_FILE), note.as_deref())?;
    let noisy_note = format!(
        "{} noise ratio {} seed {}{}",
        NoiseSpec::KIND,
        cfg.noise.ratio,
        cfg.seed,
        note.as_deref().map(|n| format!("\n{n}")).unwrap_or_default()
    );
    write_csv_with_comment(&data.noisy, dir.join(NOISY_FILE), Some(&noisy_note))?;
    let manifest = Manifest {
        experiment: cfg.name.clone(),
        generator: cfg.generator.id().to_string(),
        config_sha256: config_hash(cfg),
        seed: cfg.seed,
        noise_kind: NoiseSpec::KIND.to_string(),
        noise_ratio: cfg.noise.ratio,
        n_state: data.clean.n_state(),
        n_time: data.clean.n_time(),
        dt: data.clean.dt(),
    };
    write_json(&dir.join(MANIFEST_FILE), &manifest)?;
    Ok(manifest)
}

pub fn read_dataset(dir: &Path) -> Result<Dataset, CliError> {
    let load = |name: &str| -> Result<SnapshotMatrix, CliError> {
        let path: PathBuf = dir.join(name);
        if !path.exists() {
            return Err(CliError::Config(format!(
                "{} not found; run `opidmd generate` with the same --out first",
                path.display()
            )));
        }
        Ok(read_csv(&path)?)
    };
    Ok(Dataset { clean: load(CLEAN_FILE)?, noisy: load(NOISY_FILE)? })
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).map_err(|e| CliError::Config(e.to_string()))?;
    std::fs::write(path, text + "\n").map_err(|e| io_error(path, e))
}
