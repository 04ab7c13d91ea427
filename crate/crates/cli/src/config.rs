//! Run configuration: a TOML file with one section per concern. Every
//! physical quantity carries its unit in the key name (`_khz`, `_us`,
//! `_rad`); frequencies are ordinary (not angular) frequencies.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use serde::{Deserialize, Serialize};

use recoilfree::model::{SystemParams, SR88_PROBE_SHIFT};

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub seed: Option<u64>,
    pub system: Option<SystemSection>,
    pub optimize: Option<OptimizeSection>,
    pub sweep: Option<SweepSection>,
    pub benchmark: Option<BenchmarkSection>,
    pub analyze: Option<AnalyzeSection>,
    pub tomography: Option<TomographySection>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemSection {
    /// Starting point for the remaining keys; only `sr88` is defined.
    pub preset: Option<String>,
    pub rabi_khz: Option<f64>,
    pub trap_khz: Option<f64>,
    pub eta: Option<f64>,
    pub p0: Option<f64>,
    /// Probe shift per unit relative intensity deviation, in units of Ω.
    pub probe_shift_per_rabi: Option<f64>,
    pub detuning_khz: Option<f64>,
    pub n_fock: Option<usize>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizeSection {
    pub preset: Option<String>,
    /// `rx90` or `mikado`.
    pub target: Option<String>,
    pub duration_us: Option<f64>,
    pub n_c: Option<usize>,
    pub restarts: Option<usize>,
    pub max_iterations: Option<usize>,
    pub w_ent: Option<f64>,
    pub w_uni: Option<f64>,
    pub w_mot: Option<f64>,
    pub init_amplitude_rad: Option<f64>,
    pub grid_points: Option<usize>,
    /// Half width of the relative intensity grid (dimensionless).
    pub grid_half_width: Option<f64>,
    pub n_steps: Option<usize>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    /// `duration`, `p0`, `intensity` or `gate-grid`.
    pub kind: Option<String>,
    pub durations_us: Option<Vec<f64>>,
    pub p0_values: Option<Vec<f64>>,
    pub rel_devs: Option<Vec<f64>>,
    pub theta_points: Option<usize>,
    pub pulse: Option<PathBuf>,
    pub mikado_pulse: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchmarkSection {
    /// `mikado`, `mossbauer` or `idealized-L4`.
    pub mode: Option<String>,
    pub depth_max: Option<usize>,
    pub n_circuits: Option<usize>,
    pub p0: Option<f64>,
    pub record_depths: Option<Vec<usize>>,
    pub pulse: Option<PathBuf>,
    pub theta_ent_rad: Option<f64>,
    pub n_steps: Option<usize>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalyzeSection {
    pub pulse: Option<PathBuf>,
    pub n_steps: Option<usize>,
    pub record_every: Option<usize>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TomographySection {
    pub pulse: Option<PathBuf>,
    /// `rx90`, `mikado` or `identity`.
    pub target: Option<String>,
    pub rel_dev: Option<f64>,
    pub n_steps: Option<usize>,
}

/// Loaded configuration together with its source text, so that semantic
/// errors can point at the offending section.
#[derive(Debug, Clone, Default)]
pub struct Loaded {
    pub file: ConfigFile,
    pub path: Option<PathBuf>,
    text: String,
}

impl Loaded {
    pub fn read(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path).with_context(|| format!("cannot read config file {}", path.display()))?;
        let file: ConfigFile = toml::from_str(&text).map_err(|e| anyhow!("{}: {e}", path.display()))?;
        Ok(Self { file, path: Some(path.to_path_buf()), text })
    }

    /// Location prefix for messages about `[section]`.
    pub fn locate(&self, section: &str) -> String {
        let header = format!("[{section}]");
        match (&self.path, self.text.lines().position(|l| l.trim() == header)) {
            (Some(p), Some(i)) => format!("{}:{}: [{section}]", p.display(), i + 1),
            (Some(p), None) => format!("{}: [{section}]", p.display()),
            (None, _) => format!("[{section}]"),
        }
    }

    pub fn missing(&self, section: &str, field: &str) -> anyhow::Error {
        anyhow!("{}: missing required field `{field}`", self.locate(section))
    }

    /// Resolves relative paths against the config file's directory.
    pub fn resolve_path(&self, p: &Path) -> PathBuf {
        match &self.path {
            Some(cfg) if p.is_relative() => cfg.parent().map(|d| d.join(p)).unwrap_or_else(|| p.to_path_buf()),
            _ => p.to_path_buf(),
        }
    }
}

const KHZ: f64 = 2.0 * PI * 1e3;

/// Fully resolved physical parameters, as written into artifacts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ResolvedSystem {
    pub rabi_khz: f64,
    pub trap_khz: f64,
    pub eta: f64,
    pub p0: f64,
    pub probe_shift_per_rabi: f64,
    pub detuning_khz: f64,
    pub n_fock: usize,
}

impl ResolvedSystem {
    pub fn params(&self) -> Result<SystemParams> {
        let mut p = SystemParams::new(self.rabi_khz * KHZ, self.trap_khz * KHZ, self.eta, self.p0)?;
        p.probe_shift_coeff = self.probe_shift_per_rabi;
        p.detuning = self.detuning_khz * KHZ;
        let p = p.with_n_fock(self.n_fock)?;
        p.validate()?;
        Ok(p)
    }
}

/// Command-line overrides of system keys.
#[derive(Debug, Clone, Copy, Default)]
pub struct SystemOverrides {
    pub rabi_khz: Option<f64>,
    pub trap_khz: Option<f64>,
    pub eta: Option<f64>,
    pub p0: Option<f64>,
}

pub fn resolve_system(loaded: &Loaded, ov: &SystemOverrides) -> Result<ResolvedSystem> {
    let s = loaded.file.system.clone().unwrap_or_default();
    match s.preset.as_deref() {
        None | Some("sr88") => {}
        Some(other) => bail!("{}: unknown preset `{other}` (expected `sr88`)", loaded.locate("system")),
    }
    let base = SystemParams::sr88();
    let rabi_khz = ov.rabi_khz.or(s.rabi_khz).unwrap_or(base.omega_rabi / KHZ);
    let trap_khz = ov.trap_khz.or(s.trap_khz).unwrap_or(base.omega_trap / KHZ);
    let eta = ov.eta.or(s.eta).unwrap_or(base.eta);
    let p0 = ov.p0.or(s.p0).unwrap_or(base.p0);
    let probe = s.probe_shift_per_rabi.unwrap_or(SR88_PROBE_SHIFT);
    let detuning_khz = s.detuning_khz.unwrap_or(0.0);
    // The default cutoff depends on p0; build once to read it.
    let draft = SystemParams::new(rabi_khz * KHZ, trap_khz * KHZ, eta, p0).map_err(|e| anyhow!("{}: {e}", loaded.locate("system")))?;
    let n_fock = s.n_fock.unwrap_or(draft.n_fock);
    let r = ResolvedSystem { rabi_khz, trap_khz, eta, p0, probe_shift_per_rabi: probe, detuning_khz, n_fock };
    r.params().map_err(|e| anyhow!("{}: {e}", loaded.locate("system")))?;
    Ok(r)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn loaded(text: &str) -> Loaded {
        Loaded { file: toml::from_str(text).unwrap(), path: Some(PathBuf::from("run.toml")), text: text.to_string() }
    }

    #[test]
    fn defaults_are_the_sr88_preset() {
        let r = resolve_system(&Loaded::default(), &SystemOverrides::default()).unwrap();
        assert!((r.rabi_khz - 20.0).abs() < 1e-12 && (r.trap_khz - 100.0).abs() < 1e-12);
        let p = r.params().unwrap();
        assert!((p.omega_rabi / SystemParams::sr88().omega_rabi - 1.0).abs() < 1e-14);
        assert_eq!(p.n_fock, SystemParams::sr88().n_fock);
    }

    #[test]
    fn overrides_win_over_file() {
        let l = loaded("[system]\ntrap_khz = 80.0\np0 = 0.9\n");
        let r = resolve_system(&l, &SystemOverrides { trap_khz: Some(120.0), ..Default::default() }).unwrap();
        assert_eq!(r.trap_khz, 120.0);
        assert_eq!(r.p0, 0.9);
    }

    #[test]
    fn unknown_keys_are_rejected_with_a_line() {
        let e = toml::from_str::<ConfigFile>("[system]\nrabi = 20.0\n").unwrap_err().to_string();
        assert!(e.contains("line 2") && e.contains("rabi"), "{e}");
    }

    #[test]
    fn semantic_errors_name_the_section_line() {
        let l = loaded("seed = 3\n\n[optimize]\nn_c = 4\n");
        assert_eq!(l.missing("optimize", "duration_us").to_string(), "run.toml:3: [optimize]: missing required field `duration_us`");
        let bad = loaded("[system]\np0 = 1.5\n");
        assert!(resolve_system(&bad, &SystemOverrides::default()).unwrap_err().to_string().starts_with("run.toml:1: [system]"));
    }
}
