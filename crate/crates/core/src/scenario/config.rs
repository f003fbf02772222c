//! Scenario files: TOML with `[ambient]`, `[leaf]`, `[analysis]` and `[output]` tables.

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::ambient::{make_warped, AmbientChart, DerivMode, WarpedSpec};
use crate::expr::Expr;
use crate::grid::DiffScheme;
use crate::hypersurface::{
    build_leaf, cylinder_immersion, default_warped_sizes, euclidean_for, sphere_immersion, warped_slice_immersion,
    warped_wave_immersion, Immersion, LeafFamily, Orientation,
};
use crate::varfields::AmbientVectorField;

/// Invalid or unreadable scenario configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "config error: {}", self.0)
    }
}

impl std::error::Error for ConfigError {}

fn cfg_err(msg: impl Into<String>) -> ConfigError {
    ConfigError(msg.into())
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    #[serde(default)]
    pub description: String,
    pub ambient: AmbientConfig,
    pub leaf: LeafConfig,
    #[serde(default)]
    pub analysis: AnalysisConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AmbientKind {
    Euclidean,
    WarpedDiagonal,
    WarpedIsotropic,
    WarpedIsotropicLinear,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DerivConfig {
    #[default]
    ClosedForm,
    FiniteDifference,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AmbientConfig {
    pub kind: AmbientKind,
    /// Ambient dimension for `euclidean`; taken from the leaf otherwise.
    pub dim: Option<usize>,
    /// `φ_i(t)` for `warped-diagonal`.
    #[serde(default)]
    pub phi: Vec<String>,
    /// `w(t)` (or the coefficient `w²` for `warped-isotropic-linear`).
    pub warp: Option<String>,
    #[serde(default)]
    pub leaf_curvature: f64,
    /// Leaf dimension for the isotropic kinds.
    pub n: Option<usize>,
    #[serde(default = "default_t_range")]
    pub t_range: [f64; 2],
    pub leaf_extent: Option<f64>,
    /// Named constants usable in expressions.
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
    #[serde(default)]
    pub derivatives: DerivConfig,
}

fn default_t_range() -> [f64; 2] {
    [-1.0, 1.0]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LeafKind {
    Sphere,
    Cylinder,
    WarpedSlice,
    WarpedWave,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SchemeConfig {
    #[default]
    Spectral,
    Fd4,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LeafConfig {
    pub kind: LeafKind,
    pub n: Option<usize>,
    /// Family parameter values: radius for spheres and cylinders, `t` for warped leaves.
    pub samples: Vec<f64>,
    /// Radial perturbation of spheres.
    #[serde(default)]
    pub perturbation: f64,
    /// Dimension of the round factor of a cylinder.
    pub round_dim: Option<usize>,
    #[serde(default = "default_box_len")]
    pub box_len: f64,
    /// Height of the wave in `warped-wave` leaves.
    #[serde(default)]
    pub amplitude: f64,
    pub grid: Option<Vec<usize>>,
    #[serde(default)]
    pub orientation: Orientation,
    #[serde(default)]
    pub scheme: SchemeConfig,
}

fn default_box_len() -> f64 {
    4.0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Deserialize, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Suite {
    Identities,
    Operators,
    Stability,
    Fields,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisConfig {
    #[serde(default = "default_r")]
    pub r: Vec<usize>,
    #[serde(default = "default_suites")]
    pub suites: Vec<Suite>,
    /// Vector-field catalog entries for the `fields` suite.
    #[serde(default)]
    pub fields: Vec<String>,
    /// Mode cutoff of the test-function basis.
    #[serde(default = "default_modes")]
    pub basis_modes: usize,
    /// Values of `r` for which the sign criterion must hold.
    #[serde(default)]
    pub expect_criterion: Vec<usize>,
    /// Values of `r` for which the sign criterion must fail.
    #[serde(default)]
    pub expect_no_criterion: Vec<usize>,
    /// Also run the kernel experiment of the Gram matrix (with constants).
    #[serde(default)]
    pub kernel: bool,
    /// Report the second difference of `𝒜_r` (no contract).
    #[serde(default)]
    pub second_variation: bool,
    /// Random curvature vectors in the algebraic identity suite.
    #[serde(default = "default_random_vectors")]
    pub random_vectors: usize,
    #[serde(default)]
    pub tolerances: Tolerances,
}

fn default_r() -> Vec<usize> {
    vec![0]
}

fn default_suites() -> Vec<Suite> {
    vec![Suite::Identities, Suite::Operators, Suite::Stability, Suite::Fields]
}

fn default_modes() -> usize {
    2
}

fn default_random_vectors() -> usize {
    200
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        Self {
            r: default_r(),
            suites: default_suites(),
            fields: Vec::new(),
            basis_modes: default_modes(),
            expect_criterion: Vec::new(),
            expect_no_criterion: Vec::new(),
            kernel: false,
            second_variation: false,
            random_vectors: default_random_vectors(),
            tolerances: Tolerances::default(),
        }
    }
}

/// Contract tolerances; residuals are compared against `tol · scale`.
#[derive(Debug, Clone, Copy, Deserialize, serde::Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    pub algebra: f64,
    pub anchor: f64,
    pub divergence_free: f64,
    pub operator_forms: f64,
    pub identity: f64,
    pub gradient_formula: f64,
    pub conformal: f64,
    pub jacobi: f64,
    pub preserving: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            algebra: 1e-9,
            anchor: 1e-8,
            divergence_free: 1e-7,
            operator_forms: 1e-6,
            identity: 1e-6,
            gradient_formula: 1e-6,
            conformal: 5e-5,
            jacobi: 5e-5,
            preserving: 1e-8,
        }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    pub json: Option<PathBuf>,
    pub csv: Option<PathBuf>,
    #[serde(default)]
    pub dump_nodes: bool,
}

/// Builds the immersion of the leaf with family parameter `s`.
pub type ImmersionFn = std::sync::Arc<dyn Fn(f64) -> crate::Result<Immersion> + Send + Sync>;

/// A validated scenario with its ambient chart and leaf family.
#[derive(Clone)]
pub struct Prepared {
    pub config: ScenarioConfig,
    pub chart: AmbientChart,
    pub warped: Option<WarpedSpec>,
    pub n: usize,
    pub sizes: Vec<usize>,
    pub immersion: ImmersionFn,
    pub family: LeafFamily,
    pub fields: Vec<AmbientVectorField>,
}

impl ScenarioConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| cfg_err(e.to_string()))
    }

    pub fn load(path: &std::path::Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| cfg_err(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    fn expr(&self, src: &str) -> Result<Expr, ConfigError> {
        Expr::parse_with(src, &self.ambient.params).map_err(|e| cfg_err(format!("expression `{src}`: {e}")))
    }

    fn leaf_dim(&self) -> Result<usize, ConfigError> {
        let a = &self.ambient;
        let n = match a.kind {
            AmbientKind::Euclidean => self.leaf.n.or(a.dim.map(|d| d.saturating_sub(1))),
            AmbientKind::WarpedDiagonal => Some(a.phi.len()),
            AmbientKind::WarpedIsotropic | AmbientKind::WarpedIsotropicLinear => a.n.or(self.leaf.n),
        }
        .ok_or_else(|| cfg_err("leaf dimension not given"))?;
        if let Some(m) = self.leaf.n {
            if m != n {
                return Err(cfg_err(format!("leaf.n = {m} disagrees with the ambient (n = {n})")));
            }
        }
        if !(1..=8).contains(&n) {
            return Err(cfg_err(format!("leaf dimension {n} outside 1..=8")));
        }
        Ok(n)
    }

    fn warped_spec(&self, n: usize) -> Result<WarpedSpec, ConfigError> {
        let a = &self.ambient;
        let range = (a.t_range[0], a.t_range[1]);
        let warp = || -> Result<Expr, ConfigError> {
            self.expr(a.warp.as_deref().ok_or_else(|| cfg_err("ambient.warp is required"))?)
        };
        let mut spec = match a.kind {
            AmbientKind::WarpedDiagonal => {
                if a.phi.is_empty() {
                    return Err(cfg_err("ambient.phi must list one expression per leaf axis"));
                }
                WarpedSpec::diagonal(a.phi.iter().map(|p| self.expr(p)).collect::<Result<_, _>>()?, range)
            }
            AmbientKind::WarpedIsotropic => WarpedSpec::isotropic(n, warp()?, a.leaf_curvature, range),
            AmbientKind::WarpedIsotropicLinear => WarpedSpec::isotropic_linear(n, warp()?, a.leaf_curvature, range),
            AmbientKind::Euclidean => unreachable!("euclidean has no warped spec"),
        };
        if let Some(e) = a.leaf_extent {
            spec.leaf_extent = e;
        }
        spec.validate().map_err(|e| cfg_err(e.to_string()))?;
        Ok(spec)
    }

    /// Validates the configuration and builds the chart, the leaf family and
    /// the vector fields. `grid_scale` multiplies every grid size.
    pub fn prepare(&self, grid_scale: usize) -> Result<Prepared, ConfigError> {
        if self.name.trim().is_empty() {
            return Err(cfg_err("name must not be empty"));
        }
        if !grid_scale.is_power_of_two() {
            return Err(cfg_err(format!("grid scale {grid_scale} is not a power of two")));
        }
        let n = self.leaf_dim()?;
        let leaf = &self.leaf;
        if leaf.samples.is_empty() {
            return Err(cfg_err("leaf.samples must not be empty"));
        }
        if let Some(&r) = self.analysis.r.iter().find(|&&r| r > n) {
            return Err(cfg_err(format!("r = {r} exceeds the leaf dimension {n}")));
        }
        let scheme = match leaf.scheme {
            SchemeConfig::Spectral => DiffScheme::Spectral,
            SchemeConfig::Fd4 => DiffScheme::FiniteDiff4,
        };
        let orientation = leaf.orientation;
        let warped_ambient = self.ambient.kind != AmbientKind::Euclidean;
        let warped_leaf = matches!(leaf.kind, LeafKind::WarpedSlice | LeafKind::WarpedWave);
        if warped_ambient != warped_leaf {
            return Err(cfg_err(format!("leaf kind {:?} does not fit ambient kind {:?}", leaf.kind, self.ambient.kind)));
        }
        let warped = if warped_ambient { Some(self.warped_spec(n)?) } else { None };
        let default_sizes = match (&warped, leaf.kind) {
            (Some(spec), _) => default_warped_sizes(spec),
            (None, LeafKind::Cylinder) => vec![16; n],
            (None, _) => vec![16; n],
        };
        let base = leaf.grid.clone().unwrap_or(default_sizes);
        if base.len() != n {
            return Err(cfg_err(format!("leaf.grid needs {n} sizes, got {}", base.len())));
        }
        let sizes: Vec<usize> = base.iter().map(|s| s * grid_scale).collect();
        if let Some(bad) = base.iter().chain(&sizes).find(|s| !s.is_power_of_two() || **s < 8 || **s > 512) {
            return Err(cfg_err(format!("grid size {bad} is not a power of two in 8..=512")));
        }
        let (chart, immersion): (AmbientChart, ImmersionFn) = match (&warped, leaf.kind) {
            (None, LeafKind::Sphere) => {
                if leaf.samples.iter().any(|r| !(*r > 0.0)) {
                    return Err(cfg_err("sphere radii must be positive"));
                }
                let extent = leaf.samples.iter().fold(0.0_f64, |m, v| m.max(*v)) * (1.0 + 2.0 * leaf.perturbation.abs());
                let (eps, sz) = (leaf.perturbation, sizes.clone());
                (
                    euclidean_for(n + 1, extent),
                    std::sync::Arc::new(move |radius| sphere_immersion(n, radius, eps, &sz, scheme)),
                )
            }
            (None, LeafKind::Cylinder) => {
                let r = leaf.round_dim.ok_or_else(|| cfg_err("leaf.round_dim is required for cylinders"))?;
                if r == 0 || r > n {
                    return Err(cfg_err(format!("round_dim must lie in 1..={n}")));
                }
                if leaf.samples.iter().any(|r| !(*r > 0.0)) {
                    return Err(cfg_err("cylinder radii must be positive"));
                }
                let extent = leaf.samples.iter().fold(leaf.box_len, |m, v| m.max(*v));
                let (bl, sz) = (leaf.box_len, sizes.clone());
                (
                    euclidean_for(n + 1, extent),
                    std::sync::Arc::new(move |radius| cylinder_immersion(n, r, radius, bl, &sz, scheme)),
                )
            }
            (Some(spec), kind) => {
                let (t0, t1) = spec.t_range;
                let margin = 0.05 * (t1 - t0) + leaf.amplitude.abs();
                if leaf.samples.iter().any(|t| *t - margin <= t0 || *t + margin >= t1) {
                    return Err(cfg_err(format!("leaf samples must stay inside the t-range ({t0}, {t1})")));
                }
                let mut chart = make_warped(spec).map_err(|e| cfg_err(e.to_string()))?;
                if self.ambient.derivatives == DerivConfig::FiniteDifference {
                    chart = chart.with_mode(DerivMode::FiniteDifference);
                }
                let (spec, sz, amp) = (spec.clone(), sizes.clone(), leaf.amplitude);
                let imm: ImmersionFn = if kind == LeafKind::WarpedSlice {
                    std::sync::Arc::new(move |t| warped_slice_immersion(&spec, t, &sz, scheme))
                } else {
                    std::sync::Arc::new(move |s| warped_wave_immersion(&spec, s, amp, &sz, scheme))
                };
                (chart, imm)
            }
            (None, kind) => return Err(cfg_err(format!("leaf kind {kind:?} needs a warped ambient"))),
        };
        if let Some(d) = self.ambient.dim {
            if d != chart.dim() {
                return Err(cfg_err(format!("ambient.dim = {d} but the leaf needs {}", chart.dim())));
            }
        }
        let fields = self
            .analysis
            .fields
            .iter()
            .map(|f| AmbientVectorField::parse(f, chart.dim()).map_err(|e| cfg_err(e.to_string())))
            .collect::<Result<Vec<_>, _>>()?;
        let family: LeafFamily = {
            let (chart, imm) = (chart.clone(), immersion.clone());
            std::sync::Arc::new(move |s| build_leaf(&chart, &imm(s)?, orientation))
        };
        Ok(Prepared {
            config: self.clone(),
            chart,
            warped,
            n,
            sizes,
            immersion,
            family,
            fields,
        })
    }
}
