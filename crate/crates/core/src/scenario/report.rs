//! Report files: one JSON document per leaf, a CSV summary row per
//! `(scenario, r, parameter)`, a CSV of every check and optional node dumps.

use std::fs::File;
use std::io::{self, BufWriter};
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::run::{LeafReport, ScenarioReport};
use crate::hypersurface::curvature_fields;
use crate::leafcalc::{JacobiOperator, ScalarField};
use crate::testfns::default_basis;

#[derive(Debug, Clone, Default)]
pub struct WrittenReports {
    pub json: Vec<PathBuf>,
    pub csv: Vec<PathBuf>,
}

#[derive(Serialize)]
struct LeafDocument<'a> {
    scenario: &'a str,
    description: &'a str,
    ambient: &'a str,
    ambient_class: &'a str,
    orientation_convention: &'a str,
    grid: &'a [usize],
    seed: u64,
    scenario_checks: &'a [super::run::Check],
    #[serde(flatten)]
    leaf: &'a LeafReport,
}

#[derive(Serialize)]
struct CheckRow<'a> {
    scenario: &'a str,
    parameter: Option<f64>,
    suite: super::config::Suite,
    name: &'a str,
    r: Option<usize>,
    value: f64,
    limit: Option<f64>,
    passed: Option<bool>,
    note: &'a str,
}

fn io_err(e: impl std::fmt::Display) -> io::Error {
    io::Error::other(e.to_string())
}

/// Writes `<scenario>__s<i>.json` into `json_dir` and `<scenario>_summary.csv`
/// plus `<scenario>_checks.csv` into `csv_dir`. Node dumps go to `csv_dir`,
/// or to `json_dir` when no CSV directory is given.
pub fn write_reports(
    report: &ScenarioReport,
    json_dir: Option<&Path>,
    csv_dir: Option<&Path>,
    dump_nodes: bool,
) -> io::Result<WrittenReports> {
    let mut written = WrittenReports::default();
    if let Some(dir) = json_dir {
        std::fs::create_dir_all(dir)?;
        for leaf in &report.leaves {
            let path = dir.join(format!("{}__s{}.json", report.scenario, leaf.index));
            let doc = LeafDocument {
                scenario: &report.scenario,
                description: &report.description,
                ambient: &report.ambient,
                ambient_class: &report.ambient_class,
                orientation_convention: &report.orientation_convention,
                grid: &report.grid,
                seed: report.seed,
                scenario_checks: &report.checks,
                leaf,
            };
            serde_json::to_writer_pretty(BufWriter::new(File::create(&path)?), &doc).map_err(io_err)?;
            written.json.push(path);
        }
    }
    if let Some(dir) = csv_dir {
        std::fs::create_dir_all(dir)?;
        let path = dir.join(format!("{}_summary.csv", report.scenario));
        let mut w = csv::Writer::from_path(&path).map_err(io_err)?;
        for row in report.summary_rows() {
            w.serialize(row).map_err(io_err)?;
        }
        w.flush()?;
        written.csv.push(path);
        let checks = dir.join(format!("{}_checks.csv", report.scenario));
        let mut w = csv::Writer::from_path(&checks).map_err(io_err)?;
        let rows = report
            .checks
            .iter()
            .map(|c| (None, c))
            .chain(report.leaves.iter().flat_map(|l| l.checks.iter().map(move |c| (Some(l.parameter), c))));
        for (parameter, c) in rows {
            w.serialize(CheckRow {
                scenario: &report.scenario,
                parameter,
                suite: c.suite,
                name: &c.name,
                r: c.r,
                value: c.value,
                limit: c.limit,
                passed: c.passed,
                note: &c.note,
            })
            .map_err(io_err)?;
        }
        w.flush()?;
        written.csv.push(checks);
    }
    if dump_nodes {
        let dir = csv_dir.or(json_dir).map(Path::to_path_buf).unwrap_or_else(|| PathBuf::from("."));
        std::fs::create_dir_all(&dir)?;
        for leaf in &report.leaves {
            let path = dir.join(format!("{}__s{}_nodes.csv", report.scenario, leaf.index));
            dump_nodes_csv(leaf, &report.r, &path)?;
            written.csv.push(path);
        }
    }
    Ok(written)
}

/// Per node: index, ambient point, principal curvatures, `S_0..S_n`, area
/// weight, a zero-mean probe function `f` and `L_r f`, `J_r f` for every `r`.
pub fn dump_nodes_csv(leaf: &LeafReport, rs: &[usize], path: &Path) -> io::Result<()> {
    let patch = leaf
        .patch
        .as_ref()
        .ok_or_else(|| io_err("leaf geometry was not retained"))?;
    let fields = curvature_fields(patch, 0).map_err(io_err)?;
    let f = default_basis(patch, 1)
        .map_err(io_err)?
        .into_iter()
        .next()
        .ok_or_else(|| io_err("empty test-function basis"))?
        .zero_mean();
    let mut columns: Vec<(ScalarField, ScalarField)> = Vec::new();
    for &r in rs {
        let op = JacobiOperator::new(patch, r).map_err(io_err)?;
        columns.push((op.lr_trace(&f).map_err(io_err)?, op.jr(&f).map_err(io_err)?));
    }
    let n = patch.n;
    let mut w = csv::Writer::from_path(path).map_err(io_err)?;
    let mut header: Vec<String> = vec!["node".into()];
    header.extend((0..=n).map(|i| format!("x{i}")));
    header.extend((0..n).map(|i| format!("kappa{i}")));
    header.extend((0..=n).map(|k| format!("S{k}")));
    header.push("weight".into());
    header.push("f".into());
    for &r in rs {
        header.push(format!("L{r}f"));
        header.push(format!("J{r}f"));
    }
    w.write_record(&header).map_err(io_err)?;
    let fmt = |v: &f64| format!("{v:.17e}");
    for (i, node) in patch.nodes.iter().enumerate() {
        let mut rec: Vec<String> = vec![i.to_string()];
        rec.extend(node.point.iter().map(fmt));
        rec.extend(node.kappa.iter().map(fmt));
        rec.extend(fields.s[i].iter().map(fmt));
        rec.push(fmt(&node.weight));
        rec.push(fmt(&f.values()[i]));
        for (l, j) in &columns {
            rec.push(fmt(&l.values()[i]));
            rec.push(fmt(&j.values()[i]));
        }
        w.write_record(&rec).map_err(io_err)?;
    }
    w.flush()?;
    Ok(())
}
