//! Scenario execution: every suite turns its measurements into [`Check`]s,
//! and a check with a tolerance that is exceeded is a contract violation.

use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use super::algebra::{run_algebra_suite, AlgebraReport};
use super::config::{ConfigError, LeafKind, Prepared, ScenarioConfig, Suite};
use crate::ambient::{classify, sample_points, AmbientClass, ClassifyReport};
use crate::error::{GeomError, Result};
use crate::hypersurface::{curvature_fields, FoliationSlice, LeafPatch, LeafResiduals, LeafShape};
use crate::leafcalc::{case_applies, JacobiOperator, ScalarField};
use crate::stability::{
    gram_stability, second_variation_discrepancy, sign_criterion, criterion_identity_residual, CriterionReport,
    StabilityReport, ZeroMeanBasis,
};
use crate::symcurv::sigma;
use crate::testfns::default_basis;
use crate::varfields::{
    conformal_factor, foliation_preserving_residual, gradient_formula_residual, jacobi_check, kernel_preservation,
    killing_residual, leaf_samples, residual_scale, conformal_jacobi_residual, ConformalVerdict,
};

/// Basis functions used for per-function residuals (identities, operator forms).
const PROBE_FUNCTIONS: usize = 4;

#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub suite: Suite,
    pub name: String,
    pub r: Option<usize>,
    pub value: f64,
    /// Contract bound, already multiplied by the scale; `None` for report-only values.
    pub limit: Option<f64>,
    pub passed: Option<bool>,
    pub note: String,
}

impl Check {
    fn bound(suite: Suite, name: impl Into<String>, r: Option<usize>, value: f64, limit: f64) -> Self {
        Self {
            suite,
            name: name.into(),
            r,
            value,
            limit: Some(limit),
            passed: Some(value.is_finite() && value <= limit),
            note: String::new(),
        }
    }

    fn flag(suite: Suite, name: impl Into<String>, r: Option<usize>, ok: bool, note: impl Into<String>) -> Self {
        Self {
            suite,
            name: name.into(),
            r,
            value: if ok { 1.0 } else { 0.0 },
            limit: None,
            passed: Some(ok),
            note: note.into(),
        }
    }

    fn info(suite: Suite, name: impl Into<String>, r: Option<usize>, value: f64, note: impl Into<String>) -> Self {
        Self {
            suite,
            name: name.into(),
            r,
            value,
            limit: None,
            passed: None,
            note: note.into(),
        }
    }

    pub fn failed(&self) -> bool {
        self.passed == Some(false)
    }
}

/// Everything measured on one leaf.
#[derive(Debug, Clone, Serialize)]
pub struct LeafReport {
    pub scenario: String,
    pub index: usize,
    pub parameter: f64,
    pub leaf: String,
    pub orientation: String,
    pub nodes: usize,
    pub volume: f64,
    pub max_abs_curvature: f64,
    pub residuals: LeafResiduals,
    pub criteria: Vec<CriterionReport>,
    pub stability: Vec<StabilityReport>,
    pub checks: Vec<Check>,
    #[serde(skip)]
    pub patch: Option<Arc<LeafPatch>>,
}

/// One CSV row per `(scenario, r, parameter)`.
#[derive(Debug, Clone, Serialize)]
pub struct SummaryRow {
    pub scenario: String,
    pub r: usize,
    pub parameter: f64,
    pub r_tense: bool,
    pub t_r_sign: String,
    pub ns_r1_sign: String,
    pub criterion_met: String,
    pub hypothesis_met: String,
    pub verdict: String,
    pub subspace_dim: usize,
    pub min_eigenvalue: f64,
    pub max_eigenvalue: f64,
    pub identity_residual: f64,
    pub failed_checks: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct ScenarioReport {
    pub scenario: String,
    pub description: String,
    pub orientation_convention: String,
    pub ambient: String,
    pub ambient_class: String,
    pub classification: Option<ClassifyReport>,
    pub grid: Vec<usize>,
    pub r: Vec<usize>,
    pub seed: u64,
    pub algebra: Option<AlgebraReport>,
    pub checks: Vec<Check>,
    pub leaves: Vec<LeafReport>,
    pub elapsed_seconds: f64,
}

impl ScenarioReport {
    pub fn all_checks(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().chain(self.leaves.iter().flat_map(|l| l.checks.iter()))
    }

    /// Names of failed contracts, prefixed with the leaf parameter.
    pub fn failures(&self) -> Vec<String> {
        let mut out: Vec<String> = self.checks.iter().filter(|c| c.failed()).map(describe).collect();
        for l in &self.leaves {
            out.extend(
                l.checks
                    .iter()
                    .filter(|c| c.failed())
                    .map(|c| format!("[s = {}] {}", l.parameter, describe(c))),
            );
        }
        out
    }

    pub fn passed(&self) -> bool {
        self.all_checks().all(|c| !c.failed())
    }

    pub fn summary_rows(&self) -> Vec<SummaryRow> {
        let mut rows = Vec::new();
        for l in &self.leaves {
            for st in &l.stability {
                let crit = l.criteria.iter().find(|c| c.r == st.r);
                let identity = l
                    .checks
                    .iter()
                    .filter(|c| c.r == Some(st.r) && c.name.starts_with("integral identity"))
                    .fold(0.0_f64, |m, c| m.max(c.value));
                let opt = |b: Option<bool>| b.map(|v| v.to_string()).unwrap_or_else(|| "n/a".into());
                rows.push(SummaryRow {
                    scenario: self.scenario.clone(),
                    r: st.r,
                    parameter: l.parameter,
                    r_tense: st.r_tense,
                    t_r_sign: format!("{:?}", st.t_r_sign),
                    ns_r1_sign: crit.map(|c| format!("{:?}", c.ns_r1_sign)).unwrap_or_else(|| "n/a".into()),
                    criterion_met: opt(crit.map(|c| c.criterion_met)),
                    hypothesis_met: opt(crit.map(|c| c.hypothesis_met)),
                    verdict: st.verdict.to_string(),
                    subspace_dim: st.subspace_dim,
                    min_eigenvalue: st.gram_spectrum.first().copied().unwrap_or(f64::NAN),
                    max_eigenvalue: st.gram_spectrum.last().copied().unwrap_or(f64::NAN),
                    identity_residual: identity,
                    failed_checks: l.checks.iter().filter(|c| c.failed() && c.r == Some(st.r)).count(),
                });
            }
        }
        rows
    }
}

fn describe(c: &Check) -> String {
    let r = c.r.map(|r| format!(" (r = {r})")).unwrap_or_default();
    match c.limit {
        Some(l) => format!("{:?}: {}{r}: {:.3e} > {:.3e}", c.suite, c.name, c.value, l),
        None => format!("{:?}: {}{r}: {}", c.suite, c.name, c.note),
    }
}

/// Options that override the configuration from the command line.
#[derive(Debug, Clone, Copy)]
pub struct RunOptions {
    pub grid_scale: usize,
    pub seed: u64,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self { grid_scale: 1, seed: 0 }
    }
}

/// Why a run stopped.
#[derive(Debug)]
pub enum RunError {
    Config(ConfigError),
    /// A geometric computation failed outright.
    Numerical(String),
}

impl std::fmt::Display for RunError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::Config(e) => write!(f, "{e}"),
            Self::Numerical(m) => write!(f, "numerical failure: {m}"),
        }
    }
}

impl std::error::Error for RunError {}

impl From<ConfigError> for RunError {
    fn from(e: ConfigError) -> Self {
        Self::Config(e)
    }
}

fn num(context: &str) -> impl Fn(GeomError) -> RunError + '_ {
    move |e| RunError::Numerical(format!("{context}: {e}"))
}

fn ambient_description(p: &Prepared) -> String {
    let a = &p.config.ambient;
    match a.kind {
        super::config::AmbientKind::Euclidean => format!("euclidean R^{}", p.chart.dim()),
        super::config::AmbientKind::WarpedDiagonal => format!("dt^2 + sum exp(-2 int phi_i) dx_i^2, phi = {:?}", a.phi),
        super::config::AmbientKind::WarpedIsotropic => format!(
            "dt^2 + w^2 g_L, w = {}, leaf curvature {}",
            a.warp.as_deref().unwrap_or("?"),
            a.leaf_curvature
        ),
        super::config::AmbientKind::WarpedIsotropicLinear => format!(
            "dt^2 + w g_L, w = {}, leaf curvature {}",
            a.warp.as_deref().unwrap_or("?"),
            a.leaf_curvature
        ),
    }
}

/// Runs a scenario configuration end to end.
pub fn run_config(config: &ScenarioConfig, opts: RunOptions) -> std::result::Result<ScenarioReport, RunError> {
    let started = Instant::now();
    let prep = config.prepare(opts.grid_scale)?;
    let (class, classification) = if prep.chart.is_flat() {
        (AmbientClass::SpaceForm(0.0), None)
    } else {
        let rep = classify(&prep.chart, &sample_points(&prep.chart, 12)).map_err(num("ambient classification"))?;
        (rep.class, Some(rep))
    };
    let suites = &config.analysis.suites;
    let tol = config.analysis.tolerances;
    let mut checks = Vec::new();
    let mut algebra = None;
    if suites.contains(&Suite::Identities) && config.analysis.random_vectors > 0 {
        let rep = run_algebra_suite(opts.seed, config.analysis.random_vectors, 8);
        checks.push(Check::bound(Suite::Identities, "random curvature algebra", None, rep.worst(), tol.algebra));
        algebra = Some(rep);
    }
    let leaves = config
        .leaf
        .samples
        .iter()
        .enumerate()
        .map(|(i, &s)| run_leaf(&prep, class, i, s))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    let orientation_convention = match config.leaf.kind {
        LeafKind::Sphere | LeafKind::Cylinder => "natural = inward normal (toward the center or axis)",
        LeafKind::WarpedSlice | LeafKind::WarpedWave => "natural = normal along +dt",
    };
    Ok(ScenarioReport {
        scenario: config.name.clone(),
        description: config.description.clone(),
        orientation_convention: format!("{orientation_convention}; this run uses {:?}", config.leaf.orientation),
        ambient: ambient_description(&prep),
        ambient_class: class.to_string(),
        classification,
        grid: prep.sizes.clone(),
        r: config.analysis.r.clone(),
        seed: opts.seed,
        algebra,
        checks,
        leaves,
        elapsed_seconds: started.elapsed().as_secs_f64(),
    })
}

fn curvature_scale(leaf: &LeafPatch, r: usize) -> f64 {
    leaf.max_abs_curvature().powi(r as i32 + 2).max(1.0)
}

fn run_leaf(prep: &Prepared, class: AmbientClass, index: usize, s: f64) -> std::result::Result<LeafReport, RunError> {
    let cfg = &prep.config;
    let suites = &cfg.analysis.suites;
    let needs_slice = suites.contains(&Suite::Stability) || suites.contains(&Suite::Fields);
    let slice = if needs_slice {
        Some(FoliationSlice::new(prep.family.clone(), s).map_err(num("building the foliation slice"))?)
    } else {
        None
    };
    let leaf = match &slice {
        Some(sl) => sl.leaf().clone(),
        None => Arc::new((prep.family)(s).map_err(num("building the leaf"))?),
    };
    let mut report = LeafReport {
        scenario: cfg.name.clone(),
        index,
        parameter: s,
        leaf: leaf.description.clone(),
        orientation: leaf.orientation.clone(),
        nodes: leaf.len(),
        volume: leaf.volume(),
        max_abs_curvature: leaf.max_abs_curvature(),
        residuals: leaf.residuals,
        criteria: Vec::new(),
        stability: Vec::new(),
        checks: Vec::new(),
        patch: Some(leaf.clone()),
    };
    let basis_all = default_basis(&leaf, cfg.analysis.basis_modes).map_err(num("test functions"))?;
    if suites.contains(&Suite::Identities) {
        identities(prep, class, &leaf, s, &mut report.checks).map_err(num("identities"))?;
    }
    for &r in &cfg.analysis.r {
        if suites.contains(&Suite::Operators) {
            operators(prep, class, &leaf, r, &basis_all, &mut report.checks).map_err(num("operators"))?;
        }
        if let (true, Some(sl)) = (suites.contains(&Suite::Stability), &slice) {
            stability(prep, class, sl, r, &basis_all, &mut report).map_err(num("stability"))?;
        }
        if suites.contains(&Suite::Fields) {
            fields(prep, &leaf, slice.as_ref(), r, &mut report.checks).map_err(num("fields"))?;
        }
    }
    Ok(report)
}

/// Closed-form curvature anchors and the space-form curvature term.
fn identities(prep: &Prepared, class: AmbientClass, leaf: &Arc<LeafPatch>, s: f64, out: &mut Vec<Check>) -> Result<()> {
    let cfg = &prep.config;
    let tol = cfg.analysis.tolerances;
    let n = leaf.n;
    let fields = curvature_fields(leaf, 0)?;
    let sign = cfg.leaf.orientation.sign();
    let expected: Option<Vec<f64>> = match (&leaf.shape, cfg.leaf.kind) {
        (LeafShape::Sphere { .. }, _) if cfg.leaf.perturbation == 0.0 => Some(vec![sign / s; n]),
        (LeafShape::Cylinder { r, .. }, _) => {
            let mut k = vec![0.0; n];
            k[..*r].iter_mut().for_each(|v| *v = sign / s);
            Some(k)
        }
        (_, LeafKind::WarpedSlice) => prep
            .warped
            .as_ref()
            .map(|spec| spec.slice_curvatures(s).into_iter().map(|k| sign * k).collect()),
        _ => None,
    };
    if let Some(kappa) = expected {
        let mut worst = 0.0_f64;
        for k in 0..=n {
            let want = sigma(k, &kappa);
            let scale = want.abs().max(leaf.max_abs_curvature().max(1.0).powi(k as i32) * 1e-3).max(1e-300);
            for node in 0..leaf.len() {
                let got = fields.s[node][k];
                let err = if want == 0.0 { (got - want).abs() } else { (got - want).abs() / scale };
                worst = worst.max(err);
            }
        }
        out.push(Check::bound(Suite::Identities, "S_k against closed form", None, worst, 1e-7));
    }
    if let AmbientClass::SpaceForm(c) = class {
        for &r in &cfg.analysis.r {
            let op = JacobiOperator::new(leaf, r)?;
            let mut worst = 0.0_f64;
            let mut mag = 0.0_f64;
            for node in 0..leaf.len() {
                let want = (n - r) as f64 * c * op.fields.s_r(node);
                worst = worst.max((op.tr_rt[node] - want).abs());
                mag = mag.max(want.abs());
            }
            out.push(Check::bound(
                Suite::Identities,
                "curvature term Tr(R(N)T_r) = (n-r) c S_r",
                Some(r),
                worst,
                tol.anchor * mag.max(1.0),
            ));
        }
    }
    out.push(Check::info(
        Suite::Identities,
        "unit normal defect",
        None,
        leaf.residuals.normal_norm.max(leaf.residuals.normal_tangency),
        "max |<N,N> - 1| and normalized |<N, d_i x>|",
    ));
    out.push(Check::info(
        Suite::Identities,
        "shape operator asymmetry",
        None,
        leaf.residuals.self_adjointness,
        "before symmetrization",
    ));
    Ok(())
}

fn operators(
    prep: &Prepared,
    class: AmbientClass,
    leaf: &Arc<LeafPatch>,
    r: usize,
    basis: &[ScalarField],
    out: &mut Vec<Check>,
) -> Result<()> {
    let tol = prep.config.analysis.tolerances;
    let op = JacobiOperator::new(leaf, r)?;
    let scale = curvature_scale(leaf, r);
    let probes: Vec<&ScalarField> = basis.iter().take(PROBE_FUNCTIONS).collect();
    let mut forms = 0.0_f64;
    let mut p1 = 0.0_f64;
    let mut p2 = 0.0_f64;
    let applies = case_applies(class, r);
    for f in &probes {
        let a = op.lr_trace(f)?;
        let b = op.lr_divergence(f)?;
        let d = a.values().iter().zip(b.values()).fold(0.0_f64, |m, (x, y)| m.max((x - y).abs()));
        forms = forms.max(d / f.max_abs().max(1e-300));
        if applies {
            let (r1, r2) = op.divergence_free_residuals(f)?;
            let norm = f.inner(f)?.max(1.0);
            p1 = p1.max(r1 / norm.sqrt());
            p2 = p2.max(r2 / norm);
        }
    }
    out.push(Check::bound(
        Suite::Operators,
        "trace form vs divergence form of L_r",
        Some(r),
        forms,
        tol.operator_forms * scale,
    ));
    if applies {
        out.push(Check::bound(Suite::Operators, "int L_r f = 0", Some(r), p1, tol.divergence_free * scale));
        out.push(Check::bound(Suite::Operators, "int f L_r f = -int <T_r grad f, grad f>", Some(r), p2, tol.divergence_free * scale));
    } else {
        out.push(Check::info(
            Suite::Operators,
            "|div T_r|",
            Some(r),
            op.max_div_t(),
            format!("divergence-free case does not apply to {class}"),
        ));
    }
    Ok(())
}

fn stability(
    prep: &Prepared,
    class: AmbientClass,
    slice: &FoliationSlice,
    r: usize,
    basis_all: &[ScalarField],
    report: &mut LeafReport,
) -> Result<()> {
    let cfg = &prep.config.analysis;
    let tol = cfg.tolerances;
    let leaf = slice.leaf();
    let out = &mut report.checks;
    let crit = sign_criterion(slice, r)?;
    if cfg.expect_criterion.contains(&r) {
        out.push(Check::flag(
            Suite::Stability,
            "sign criterion holds",
            Some(r),
            crit.criterion_met,
            format!("T_r {:?}, N(S_r+1) {:?}, r-tense {}", crit.t_r_sign, crit.ns_r1_sign, crit.r_tense),
        ));
    }
    if cfg.expect_no_criterion.contains(&r) {
        out.push(Check::flag(
            Suite::Stability,
            "sign criterion fails (negative control)",
            Some(r),
            !crit.criterion_met,
            format!("N(S_r+1) {:?} in [{:.3e}, {:.3e}]", crit.ns_r1_sign, crit.ns_r1_min, crit.ns_r1_max),
        ));
    }
    let basis = ZeroMeanBasis::new(leaf, basis_all.to_vec())?;
    out.push(Check::bound(Suite::Stability, "zero-mean basis", Some(r), basis.max_mean_defect(), 1e-10));
    let st = gram_stability(leaf, r, &basis)?.with_criterion(&crit);
    let op = JacobiOperator::new(leaf, r)?;
    let div_free = case_applies(class, r) || op.max_div_t() < 1e-8 * curvature_scale(leaf, r);
    if crit.criterion_met && div_free {
        out.push(Check::flag(
            Suite::Stability,
            "spectrum agrees with the sign criterion",
            Some(r),
            !st.contradicts_criterion(&crit),
            st.summary.clone(),
        ));
    }
    let free = gram_stability(leaf, r, &ZeroMeanBasis::unconstrained(leaf, basis_all.to_vec())?)?;
    if st.verdict.is_stable() && crit.criterion_met && div_free {
        out.push(Check::flag(
            Suite::Stability,
            "verdict unchanged without the zero-mean constraint",
            Some(r),
            free.verdict == st.verdict || free.verdict == crate::stability::Verdict::Inconclusive,
            free.summary.clone(),
        ));
    } else {
        out.push(Check::info(Suite::Stability, "verdict without zero-mean constraint", Some(r), 0.0, free.summary.clone()));
    }
    for (i, f) in basis.functions.iter().take(PROBE_FUNCTIONS).enumerate() {
        let id = criterion_identity_residual(slice, r, f)?;
        let name = format!("integral identity, test function {i}");
        if div_free {
            out.push(Check::bound(Suite::Stability, name, Some(r), id.residual, tol.identity * id.scale));
        } else {
            out.push(Check::info(Suite::Stability, name, Some(r), id.residual, "div T_r != 0, no contract"));
        }
    }
    if cfg.kernel {
        let mut with_const = vec![ScalarField::constant(leaf, 1.0)];
        with_const.extend(basis_all.iter().cloned());
        let k = kernel_preservation(slice, r, &with_const)?;
        let scale = curvature_scale(leaf, r);
        out.push(Check::info(Suite::Stability, "Gram kernel dimension", Some(r), k.kernel_dim as f64, ""));
        out.push(Check::bound(
            Suite::Stability,
            "kernel functions satisfy grad f + f nabla_N N = 0",
            Some(r),
            k.max_cond_residual,
            tol.preserving * scale,
        ));
    }
    if cfg.second_variation && class.space_form_curvature().is_some() {
        let imm = (prep.immersion)(slice.s)?;
        let sv = second_variation_discrepancy(
            &prep.chart,
            &imm,
            prep.config.leaf.orientation,
            r,
            &|l| Ok(default_basis(l, 1)?.swap_remove(0).zero_mean()),
            1e-3,
        )?;
        out.push(Check::info(
            Suite::Stability,
            "second difference of A_r vs (r+1) I_r",
            Some(r),
            sv.discrepancy,
            format!("A_r'' = {:.6e}, (r+1) I_r = {:.6e}", sv.ar_second_difference, sv.expected),
        ));
    }
    report.criteria.push(crit);
    report.stability.push(st);
    Ok(())
}

fn fields(prep: &Prepared, leaf: &Arc<LeafPatch>, slice: Option<&FoliationSlice>, r: usize, out: &mut Vec<Check>) -> Result<()> {
    let tol = prep.config.analysis.tolerances;
    let samples = leaf_samples(leaf);
    let rows: Vec<Vec<Check>> = prep
        .fields
        .par_iter()
        .map(|u| -> Result<Vec<Check>> {
            let mut out = Vec::new();
            let conf = conformal_factor(&leaf.chart, u, &samples)?;
            let scale = residual_scale(leaf, u, r);
            let tag = |s: &str| format!("{}: {s}", u.name);
            out.push(Check::info(
                Suite::Fields,
                tag("classification"),
                Some(r),
                conf.max_deviation,
                format!("{} (max |k| = {:.3e})", conf.verdict, conf.max_abs_k),
            ));
            if conf.verdict != ConformalVerdict::NotConformal {
                let g = gradient_formula_residual(leaf, u)?;
                out.push(Check::bound(Suite::Fields, tag("gradient formula"), Some(r), g, tol.gradient_formula * scale));
                let t2 = conformal_jacobi_residual(leaf, u, r)?;
                out.push(Check::bound(Suite::Fields, tag("conformal J_r formula"), Some(r), t2.residual, tol.conformal * t2.scale));
            }
            if conf.verdict == ConformalVerdict::Killing {
                let k = killing_residual(leaf, u, r)?;
                out.push(Check::bound(Suite::Fields, tag("J_r f = -U^T(S_r+1)"), Some(r), k.residual, tol.jacobi * k.scale));
                match jacobi_check(leaf, u, r) {
                    Ok(j) => out.push(Check::bound(Suite::Fields, tag("Killing normal part is Jacobi"), Some(r), j.residual, tol.jacobi * j.scale)),
                    Err(GeomError::PreconditionFailed(m)) => {
                        out.push(Check::info(Suite::Fields, tag("Jacobi check skipped"), Some(r), 0.0, m))
                    }
                    Err(e) => return Err(e),
                }
            }
            if let Some(sl) = slice {
                match foliation_preserving_residual(sl, u, r) {
                    Ok(p) => {
                        out.push(Check::info(Suite::Fields, tag("grad f + f nabla_N N"), Some(r), p.cond_residual, ""));
                        if p.cond_residual < tol.preserving * p.scale {
                            out.push(Check::bound(
                                Suite::Fields,
                                tag("leaf-preserving field is Jacobi"),
                                Some(r),
                                p.jacobi_residual,
                                tol.jacobi * p.scale,
                            ));
                        } else {
                            out.push(Check::info(Suite::Fields, tag("|J_r f|"), Some(r), p.jacobi_residual, "field does not preserve the leaves"));
                        }
                    }
                    Err(GeomError::LeavesNotEquicurved(m)) => {
                        out.push(Check::info(Suite::Fields, tag("leaf-preserving check skipped"), Some(r), 0.0, m))
                    }
                    Err(e) => return Err(e),
                }
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;
    out.extend(rows.into_iter().flatten());
    Ok(())
}
