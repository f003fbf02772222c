//! Scenario layer: configuration files, the shipped catalog, execution and
//! report output.

pub mod algebra;
pub mod config;
pub mod report;
pub mod run;

use std::path::{Path, PathBuf};

pub use config::{ConfigError, ScenarioConfig, Suite};
pub use report::{write_reports, WrittenReports};
pub use run::{run_config, Check, LeafReport, RunError, RunOptions, ScenarioReport};

/// A scenario shipped with the library.
#[derive(Debug, Clone, Copy)]
pub struct BuiltinScenario {
    pub name: &'static str,
    pub source: &'static str,
}

macro_rules! builtin {
    ($($name:literal),* $(,)?) => {
        &[$(BuiltinScenario { name: $name, source: include_str!(concat!("../../scenarios/", $name, ".cfg")) }),*]
    };
}

pub const BUILTIN: &[BuiltinScenario] = builtin![
    "sphere-killing",
    "cylinder-rminimal",
    "exp-warped",
    "tanh-warped",
    "mixed-warped",
    "cosh-warped",
    "cosh-warped-linear",
    "cosh-stability",
    "perturbed-warped",
];

/// One entry of `list`.
#[derive(Debug, Clone)]
pub struct CatalogEntry {
    pub name: String,
    pub description: String,
    /// `None` for shipped scenarios.
    pub path: Option<PathBuf>,
}

pub fn builtin(name: &str) -> Option<ScenarioConfig> {
    BUILTIN
        .iter()
        .find(|b| b.name == name)
        .map(|b| ScenarioConfig::from_toml(b.source).expect("shipped scenario parses"))
}

/// Shipped scenarios followed by every `*.cfg` in `dir`, sorted by file name.
pub fn catalog(dir: Option<&Path>) -> Result<Vec<CatalogEntry>, ConfigError> {
    let mut out: Vec<CatalogEntry> = BUILTIN
        .iter()
        .map(|b| {
            let c = ScenarioConfig::from_toml(b.source).expect("shipped scenario parses");
            CatalogEntry { name: c.name, description: c.description, path: None }
        })
        .collect();
    if let Some(dir) = dir {
        let rd = std::fs::read_dir(dir).map_err(|e| ConfigError(format!("{}: {e}", dir.display())))?;
        let mut paths: Vec<PathBuf> = rd
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "cfg"))
            .collect();
        paths.sort();
        for p in paths {
            let c = ScenarioConfig::load(&p)?;
            out.push(CatalogEntry { name: c.name, description: c.description, path: Some(p) });
        }
    }
    Ok(out)
}

/// Loads `target` as a file path if it exists, otherwise as a shipped scenario name.
pub fn resolve(target: &str) -> Result<ScenarioConfig, ConfigError> {
    let p = Path::new(target);
    if p.exists() {
        return ScenarioConfig::load(p);
    }
    builtin(target).ok_or_else(|| ConfigError(format!("no scenario file or shipped scenario named `{target}`")))
}
