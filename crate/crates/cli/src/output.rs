//! JSON envelopes and output plumbing. Every envelope carries `"schema": 1`
//! and the fully resolved inputs, so a run can be replayed from its output.

use std::fs;
use std::io::Write;
use std::path::Path;

use anyhow::Context as _;
use serde::{Deserialize, Serialize};

use domino_core::analysis::{BalanceResiduals, TailFit};
use domino_core::exact::ClusterDistribution;
use domino_core::sim::{EmpiricalDistribution, SimConfig, SimStats};
use domino_core::{DerivedQuantities, ModelParams};

use crate::{CmdResult, Failure};

pub const SCHEMA: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Coefficients {
    Float64(Vec<f64>),
    /// Integers or `p/q` strings.
    Exact(Vec<String>),
}

#[derive(Debug, Serialize, Deserialize)]
pub struct MotzkinConfig {
    pub m_max: usize,
    /// As given on the command line; exact mode parses it as a decimal.
    pub theta: String,
    pub mode: String,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct MotzkinOutput {
    pub schema: u32,
    pub command: String,
    pub config: MotzkinConfig,
    pub c: Coefficients,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SolveConfig {
    pub theta: f64,
    #[serde(rename = "N")]
    pub lattice_size: usize,
    /// Requested truncation; `None` means adaptive.
    pub i_max: Option<usize>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SolveOutput {
    pub schema: u32,
    pub command: String,
    pub config: SolveConfig,
    pub i_max: usize,
    pub derived: DerivedQuantities,
    pub balance: BalanceResiduals,
    pub distribution: ClusterDistribution,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SolveGeneralConfig {
    pub params: ModelParams,
    pub i_max: usize,
    pub tol: f64,
    pub max_iter: usize,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SolveGeneralOutput {
    pub schema: u32,
    pub command: String,
    pub config: SolveGeneralConfig,
    pub iterations: usize,
    pub residual: f64,
    pub working_len: usize,
    pub balance: BalanceResiduals,
    pub distribution: ClusterDistribution,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SimulateConfig {
    pub params: ModelParams,
    pub sim: SimConfig,
    pub replicas: u64,
    pub rng: String,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SimulateOutput {
    pub schema: u32,
    pub command: String,
    pub config: SimulateConfig,
    pub empirical: EmpiricalDistribution,
    pub stats: SimStats,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct AsymConfig {
    pub i_from: usize,
    pub i_to: usize,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct AsymOutput {
    pub schema: u32,
    pub command: String,
    pub config: AsymConfig,
    pub fit: TailFit,
    /// `motzkin_asymptotic(i_to) / M_{i_to}`.
    pub motzkin_ratio: f64,
}

/// The parts of a theory file `compare` needs. Accepts `solve` and
/// `solve-general` outputs.
#[derive(Debug, Deserialize)]
pub struct TheoryFile {
    pub schema: u32,
    pub distribution: ClusterDistribution,
}

#[derive(Debug, Deserialize)]
pub struct SimulationFile {
    pub schema: u32,
    pub empirical: EmpiricalDistribution,
}

pub fn to_json<T: Serialize>(value: &T) -> CmdResult<String> {
    let mut text = serde_json::to_string_pretty(value).context("serializing output")?;
    text.push('\n');
    Ok(text)
}

pub fn csv_string(write: impl FnOnce(&mut Vec<u8>) -> domino_core::Result<()>) -> CmdResult<String> {
    let mut buf = Vec::new();
    write(&mut buf).map_err(anyhow::Error::from)?;
    Ok(String::from_utf8(buf).context("csv output is not UTF-8")?)
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> CmdResult<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).map_err(|e| Failure::Runtime(anyhow::anyhow!("parsing {}: {e}", path.display())))
}

/// Writes the fully rendered output in one go, so failures never leave a
/// partial file behind.
pub fn emit(text: &str, path: Option<&Path>) -> CmdResult<()> {
    match path {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display()))?,
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes()).and_then(|_| out.flush()).context("writing to stdout")?;
        }
    }
    Ok(())
}
