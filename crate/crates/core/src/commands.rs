//! The five front-end commands and their run manifests.
//!
//! Every command writes its data files plus `manifest_<command>.json`, which
//! echoes the effective configuration and lists each emitted file with its
//! SHA-256 digest. Data files depend only on the configuration (never on the
//! worker count or wall-clock time); manifests carry timestamps.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use time::format_description::well_known::Rfc3339;
use time::OffsetDateTime;

use crate::analysis::{self, AlphaConvention, Exponent, IprClassification, SizePlateau};
use crate::config::ExperimentConfig;
use crate::dynamics::{Model, SimParams};
use crate::ensemble::{self, EnsembleSeries};
use crate::error::{Error, Result};
use crate::io::{self, fmt_f64, Table};
use crate::observables::Observable;
use crate::rgflow::{self, PhaseClass, RGParams, Terminal};

pub const INDEX_FILE: &str = "index.csv";
pub const SERIES_FILE: &str = "series.csv";
pub const EXPONENTS_FILE: &str = "exponents.json";
pub const ALPHA_TABLE_FILE: &str = "alpha_table.csv";
pub const RESCALED_FILE: &str = "fv_rescaled.csv";
pub const COLLAPSE_FILE: &str = "collapse.json";
pub const COLLAPSED_CURVES_FILE: &str = "collapsed.csv";
pub const PHASE_DIAGRAM_FILE: &str = "phase_diagram.csv";
pub const RG_INDEX_FILE: &str = "rg_index.csv";

pub const INDEX_HEADER: [&str; 6] = ["d", "gamma", "N", "model", "dt", "file"];
pub const ALPHA_TABLE_HEADER: [&str; 7] = [
    "model",
    "gamma",
    "N_small",
    "N_large",
    "volume",
    "alpha",
    "uncertainty",
];
pub const PHASE_DIAGRAM_HEADER: [&str; 7] = [
    "d",
    "gamma0",
    "lambda2_0",
    "Lambda",
    "r",
    "classification",
    "l_star_or_limit",
];
pub const RG_TRAJECTORY_HEADER: [&str; 5] = ["l", "re_lambda1", "im_lambda1", "lambda2", "gamma"];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub model: String,
    pub gamma: f64,
    #[serde(rename = "N")]
    pub n: usize,
    pub file: String,
    pub fingerprint: String,
    pub status: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub config: BTreeMap<String, String>,
    pub started_at: String,
    pub finished_at: Option<String>,
    pub files: Vec<FileDigest>,
    pub warnings: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub cells: Vec<SweepCell>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub failures: Vec<String>,
}

impl RunManifest {
    fn start(command: &str, config: &ExperimentConfig) -> Self {
        Self {
            tool: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            config: config.raw.effective(),
            started_at: now(),
            finished_at: None,
            files: Vec::new(),
            warnings: Vec::new(),
            cells: Vec::new(),
            failures: Vec::new(),
        }
    }

    pub fn file_name(command: &str) -> String {
        format!("manifest_{command}.json")
    }

    pub fn read(path: &Path) -> Result<Self> {
        serde_json::from_str(&io::read_to_string(path)?)
            .map_err(|e| Error::format("manifest", e.to_string()))
    }

    /// Checks every listed digest against the file on disk under `root`.
    pub fn verify(&self, root: &Path) -> Result<()> {
        for f in &self.files {
            let actual = io::sha256_file(&root.join(&f.path))?;
            if actual != f.sha256 {
                return Err(Error::format(
                    "manifest",
                    format!("digest mismatch for {}", f.path),
                ));
            }
        }
        Ok(())
    }
}

fn now() -> String {
    OffsetDateTime::now_utc()
        .format(&Rfc3339)
        .unwrap_or_else(|_| "unknown".to_string())
}

/// Output directory that records a digest for everything written to it.
struct Output {
    root: PathBuf,
    manifest: RunManifest,
}

impl Output {
    fn new(root: &Path, command: &str, config: &ExperimentConfig) -> Self {
        Self {
            root: root.to_path_buf(),
            manifest: RunManifest::start(command, config),
        }
    }

    fn write(&mut self, rel: &str, bytes: &[u8]) -> Result<()> {
        io::write_atomic(&self.root.join(rel), bytes)?;
        self.record(rel, io::sha256_hex(bytes), bytes.len() as u64);
        Ok(())
    }

    fn record(&mut self, rel: &str, sha256: String, bytes: u64) {
        self.manifest.files.retain(|f| f.path != rel);
        self.manifest.files.push(FileDigest {
            path: rel.to_string(),
            sha256,
            bytes,
        });
    }

    fn warn(&mut self, msg: impl Into<String>) {
        let msg = msg.into();
        log::warn!("{msg}");
        self.manifest.warnings.push(msg);
    }

    fn manifest_path(&self) -> PathBuf {
        self.root
            .join(RunManifest::file_name(&self.manifest.command))
    }

    fn flush_manifest(&self) -> Result<()> {
        io::write_atomic(&self.manifest_path(), &io::to_json_bytes(&self.manifest)?)
    }

    fn finish(mut self) -> Result<RunManifest> {
        self.manifest.finished_at = Some(now());
        self.flush_manifest()?;
        Ok(self.manifest)
    }
}

fn ensemble_warnings(out: &mut Output, label: &str, series: &EnsembleSeries, tail: f64) {
    if series.floored_total > 0 {
        out.warn(format!(
            "{label}: {} amplitude(s) clipped at the height floor",
            series.floored_total
        ));
    }
    if series.observable_index(Observable::Width).is_some() && series.record_times.len() >= 4 {
        if let Ok(p) = analysis::plateau_value(series, Observable::Width, tail) {
            if !p.saturated {
                out.warn(format!("{label}: width not saturated by t_max"));
            }
        }
    }
}

/// Runs one ensemble and writes `series.csv`.
pub fn cmd_simulate(config: &ExperimentConfig) -> Result<RunManifest> {
    if config.sizes.len() != 1 {
        return Err(Error::contract(
            "simulate takes exactly one lattice size (lattice.N)",
        ));
    }
    let mut out = Output::new(&config.out, "simulate", config);
    for w in config.params.validate(config.dim)? {
        out.warn(w);
    }
    let spec = config.ensemble_spec(config.sizes[0], config.params)?;
    let series = ensemble::run_ensemble(&spec, config.workers)?;
    out.write(SERIES_FILE, &io::series_to_csv(&series)?)?;
    ensemble_warnings(&mut out, "simulate", &series, config.analysis.tail_fraction);
    out.finish()
}

fn cell_file(model: Model, gamma: f64, n: usize) -> String {
    format!("series_{model}_g{gamma}_N{n}.csv")
}

/// Runs every (model, γ, N) cell and writes one series file per cell plus
/// `index.csv`. Cells whose file and fingerprint match a previous manifest
/// in the same directory are skipped.
pub fn cmd_sweep(config: &ExperimentConfig) -> Result<RunManifest> {
    let mut out = Output::new(&config.out, "sweep", config);
    let previous = RunManifest::read(&out.manifest_path()).ok();
    let mut first_failure = None;
    let mut index_rows = Vec::new();

    for &model in &config.models {
        for &gamma in &config.gammas {
            let params = SimParams {
                gamma,
                model,
                ..config.params
            };
            for &n in &config.sizes {
                let file = cell_file(model, gamma, n);
                let label = format!("{model} gamma={gamma} N={n}");
                let param_warnings = params.validate(config.dim)?;
                let spec = config.ensemble_spec(n, params)?;
                for w in param_warnings {
                    out.warn(format!("{label}: {w}"));
                }
                let fingerprint = spec.fingerprint();
                let mut cell = SweepCell {
                    model: model.to_string(),
                    gamma,
                    n,
                    file: file.clone(),
                    fingerprint: fingerprint.clone(),
                    status: "done".to_string(),
                };

                if let Some(digest) = reusable(previous.as_ref(), &config.out, &cell) {
                    log::info!("{label}: up to date, skipped");
                    out.record(&file, digest.sha256, digest.bytes);
                } else {
                    log::info!("{label}: running {} trajectories", spec.trajectories);
                    match ensemble::run_ensemble(&spec, config.workers) {
                        Ok(series) => {
                            out.write(&file, &io::series_to_csv(&series)?)?;
                            ensemble_warnings(
                                &mut out,
                                &label,
                                &series,
                                config.analysis.tail_fraction,
                            );
                        }
                        Err(e) => {
                            log::error!("{label}: {e}");
                            out.manifest.failures.push(format!("{label}: {e}"));
                            cell.status = "failed".to_string();
                            first_failure.get_or_insert(e);
                        }
                    }
                }
                if cell.status == "done" {
                    index_rows.push(vec![
                        config.dim.to_string(),
                        fmt_f64(gamma),
                        n.to_string(),
                        model.to_string(),
                        fmt_f64(params.dt),
                        file,
                    ]);
                }
                out.manifest.cells.push(cell);
                out.flush_manifest()?;
            }
        }
    }
    out.write(INDEX_FILE, &io::table_to_csv(&INDEX_HEADER, &index_rows)?)?;
    let manifest = out.finish()?;
    match first_failure {
        Some(e) => Err(e),
        None => Ok(manifest),
    }
}

fn reusable(previous: Option<&RunManifest>, root: &Path, cell: &SweepCell) -> Option<FileDigest> {
    let prev = previous?;
    prev.cells
        .iter()
        .find(|c| c.file == cell.file && c.fingerprint == cell.fingerprint && c.status == "done")?;
    let digest = prev.files.iter().find(|f| f.path == cell.file)?;
    let actual = io::sha256_file(&root.join(&cell.file)).ok()?;
    (actual == digest.sha256).then(|| digest.clone())
}

#[derive(Debug, Clone, Serialize)]
pub struct PlateauRecord {
    #[serde(rename = "N")]
    pub n: usize,
    pub volume: usize,
    pub width: f64,
    pub width_stderr: f64,
    pub saturated: bool,
    pub ipr: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct GrowthRecord {
    #[serde(rename = "N")]
    pub n: usize,
    pub early_window: (f64, f64),
    pub crossover_window: Option<(f64, f64)>,
    pub beta: Option<Exponent>,
    pub beta_error: Option<String>,
    pub nu: Option<Exponent>,
    pub nu_error: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct AlphaRecord {
    pub per_volume: Exponent,
    pub per_linear_size: Exponent,
    pub selected: AlphaConvention,
}

#[derive(Debug, Clone, Serialize)]
pub struct GroupAnalysis {
    pub model: String,
    pub gamma: f64,
    pub d: usize,
    pub sizes: Vec<usize>,
    pub plateaus: Vec<PlateauRecord>,
    pub alpha: Option<AlphaRecord>,
    pub alpha_omitted: Option<String>,
    pub growth: Vec<GrowthRecord>,
    pub ipr: Option<IprClassification>,
    pub ipr_omitted: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct AnalysisReport {
    pub tail_fraction: f64,
    pub saturation_fraction: f64,
    pub groups: Vec<GroupAnalysis>,
}

struct IndexEntry {
    d: usize,
    gamma: f64,
    dt: f64,
    n: usize,
    model: Model,
    file: String,
}

fn read_index(dir: &Path) -> Result<Vec<IndexEntry>> {
    const WHAT: &str = "index csv";
    let table = Table::read(&dir.join(INDEX_FILE), WHAT)?;
    let col = |name| table.column(name, WHAT);
    let (cd, cg, cn) = (col("d")?, col("gamma")?, col("N")?);
    let (cm, ct, cf) = (col("model")?, col("dt")?, col("file")?);
    table
        .rows
        .iter()
        .map(|row| {
            Ok(IndexEntry {
                d: row[cd]
                    .trim()
                    .parse()
                    .map_err(|_| Error::format(WHAT, format!("bad dimension '{}'", row[cd])))?,
                gamma: io::parse_f64(&row[cg], WHAT)?,
                dt: io::parse_f64(&row[ct], WHAT)?,
                n: row[cn]
                    .trim()
                    .parse()
                    .map_err(|_| Error::format(WHAT, format!("bad size '{}'", row[cn])))?,
                model: row[cm]
                    .parse()
                    .map_err(|_| Error::format(WHAT, format!("bad model '{}'", row[cm])))?,
                file: row[cf].clone(),
            })
        })
        .collect()
}

/// Exponents, IPR classification and Family–Vicsek curves for a sweep.
pub fn cmd_analyze(config: &ExperimentConfig) -> Result<RunManifest> {
    let settings = &config.analysis;
    let input = &settings.input;
    let entries = read_index(input)?;
    if entries.is_empty() {
        return Err(Error::contract(format!(
            "{} lists no series",
            input.join(INDEX_FILE).display()
        )));
    }
    for e in &entries {
        let p = input.join(&e.file);
        if !p.exists() {
            return Err(Error::MissingInput(p));
        }
    }
    let d = entries[0].d;
    if entries.iter().any(|e| e.d != d) {
        return Err(Error::format(
            "index csv",
            "all series must share one lattice dimension",
        ));
    }
    let mut out = Output::new(&config.out, "analyze", config);

    // group by (model, γ) in first-appearance order, sizes ascending
    let mut groups: Vec<(Model, f64, f64, Vec<(usize, EnsembleSeries)>)> = Vec::new();
    for e in &entries {
        let series = io::read_series(&input.join(&e.file))?;
        match groups
            .iter_mut()
            .find(|(m, g, _, _)| *m == e.model && g.to_bits() == e.gamma.to_bits())
        {
            Some((_, _, _, v)) => v.push((e.n, series)),
            None => groups.push((e.model, e.gamma, e.dt, vec![(e.n, series)])),
        }
    }

    let mut report = AnalysisReport {
        tail_fraction: settings.tail_fraction,
        saturation_fraction: settings.saturation_fraction,
        groups: Vec::new(),
    };
    let mut alpha_rows = Vec::new();
    let mut rescaled_rows = Vec::new();

    for (model, gamma, dt, mut runs) in groups {
        runs.sort_by_key(|(n, _)| *n);
        let label = format!("{model} gamma={gamma}");
        let mut plateaus = Vec::new();
        for (n, s) in &runs {
            let p = analysis::plateau_value(s, Observable::Width, settings.tail_fraction)?;
            if !p.saturated {
                out.warn(format!("{label} N={n}: width not saturated"));
            }
            let ipr = analysis::plateau_value(s, Observable::Ipr, settings.tail_fraction)
                .ok()
                .map(|p| p.mean);
            plateaus.push(PlateauRecord {
                n: *n,
                volume: n.pow(d as u32),
                width: p.mean,
                width_stderr: p.stderr,
                saturated: p.saturated,
                ipr,
            });
        }
        let size_plateaus: Vec<SizePlateau> = plateaus
            .iter()
            .map(|p| SizePlateau {
                volume: p.volume,
                width: p.width,
                stderr: Some(p.width_stderr),
            })
            .collect();

        let (alpha, alpha_omitted) = if runs.len() < 2 {
            (
                None,
                Some("alpha needs at least two lattice sizes".to_string()),
            )
        } else {
            let per_volume =
                analysis::extract_alpha(&size_plateaus, AlphaConvention::PerVolume, d)?;
            let per_linear_size =
                analysis::extract_alpha(&size_plateaus, AlphaConvention::PerLinearSize, d)?;
            (
                Some(AlphaRecord {
                    per_volume,
                    per_linear_size,
                    selected: settings.convention,
                }),
                None,
            )
        };
        for pair in size_plateaus.windows(2).zip(plateaus.windows(2)) {
            let (sp, pp) = pair;
            let a = analysis::extract_alpha(sp, settings.convention, d)?;
            let volume = ((sp[0].volume as f64) * (sp[1].volume as f64)).sqrt();
            alpha_rows.push(vec![
                model.to_string(),
                fmt_f64(gamma),
                pp[0].n.to_string(),
                pp[1].n.to_string(),
                fmt_f64(volume),
                fmt_f64(a.value),
                fmt_f64(a.uncertainty),
            ]);
        }

        let early = settings
            .early_window
            .unwrap_or_else(|| analysis::default_early_window(gamma, dt));
        let mut growth = Vec::new();
        for (n, s) in &runs {
            let (beta, beta_error) = split(analysis::width_growth_exponent(s, early));
            let crossover = match settings.crossover_window {
                Some(w) => Ok(w),
                None => analysis::saturation_onset(
                    s,
                    settings.saturation_fraction,
                    settings.tail_fraction,
                )
                .map(|t_sat| analysis::default_crossover_window(gamma, t_sat)),
            };
            let (crossover_window, nu, nu_error) = match crossover {
                Ok(w) if w.0 < early.1 && early.0 < w.1 => (
                    Some(w),
                    None,
                    Some(format!(
                        "crossover window [{}, {}] overlaps the early window",
                        w.0, w.1
                    )),
                ),
                Ok(w) => {
                    let (nu, err) = split(analysis::width_growth_exponent(s, w));
                    (Some(w), nu, err)
                }
                Err(e) => (None, None, Some(e.to_string())),
            };
            growth.push(GrowthRecord {
                n: *n,
                early_window: early,
                crossover_window,
                beta,
                beta_error,
                nu,
                nu_error,
            });
        }

        let ipr_points: Vec<(usize, f64)> = plateaus
            .iter()
            .filter_map(|p| p.ipr.map(|i| (p.volume, i)))
            .collect();
        let (ipr, ipr_omitted) = if ipr_points.len() < 2 {
            (
                None,
                Some(
                    "IPR classification needs the ipr observable at two or more sizes".to_string(),
                ),
            )
        } else {
            split(analysis::classify_ipr_scaling(
                &ipr_points,
                settings.ipr_thresholds,
            ))
        };

        let beta_largest = growth.last().and_then(|g| g.beta.map(|b| b.value));
        if let (Some(a), Some(b)) = (&alpha, beta_largest) {
            let curves: Vec<(usize, Vec<(f64, f64)>)> = runs
                .iter()
                .map(|(n, s)| {
                    let pts = s
                        .means(Observable::Width)
                        .unwrap_or_default()
                        .into_iter()
                        .filter(|&(t, _)| t > 0.0)
                        .collect();
                    (n.pow(d as u32), pts)
                })
                .collect();
            if let Ok(rescaled) = analysis::family_vicsek_rescale(&curves, a.per_volume.value, b) {
                for ((n, _), (_, pts)) in runs.iter().zip(rescaled) {
                    for (x, y) in pts {
                        rescaled_rows.push(vec![
                            model.to_string(),
                            fmt_f64(gamma),
                            n.to_string(),
                            fmt_f64(x),
                            fmt_f64(y),
                        ]);
                    }
                }
            }
        }

        report.groups.push(GroupAnalysis {
            model: model.to_string(),
            gamma,
            d,
            sizes: runs.iter().map(|(n, _)| *n).collect(),
            plateaus,
            alpha,
            alpha_omitted,
            growth,
            ipr,
            ipr_omitted,
        });
    }

    out.write(EXPONENTS_FILE, &io::to_json_bytes(&report)?)?;
    out.write(
        ALPHA_TABLE_FILE,
        &io::table_to_csv(&ALPHA_TABLE_HEADER, &alpha_rows)?,
    )?;
    out.write(
        RESCALED_FILE,
        &io::table_to_csv(&["model", "gamma", "N", "x", "y"], &rescaled_rows)?,
    )?;
    out.finish()
}

fn split<T>(r: Result<T>) -> (Option<T>, Option<String>) {
    match r {
        Ok(v) => (Some(v), None),
        Err(e) => (None, Some(e.to_string())),
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CollapseReport {
    pub model: String,
    pub volumes: Vec<f64>,
    #[serde(flatten)]
    pub result: analysis::CollapseResult,
}

/// Fits `(γ_c, ξ)` to the effective-α table written by `cmd_analyze`.
pub fn cmd_collapse(config: &ExperimentConfig) -> Result<RunManifest> {
    const WHAT: &str = "alpha table";
    let settings = &config.collapse;
    let table = Table::read(&settings.input.join(ALPHA_TABLE_FILE), WHAT)?;
    let col = |name| table.column(name, WHAT);
    let (cm, cg, cv, ca) = (col("model")?, col("gamma")?, col("volume")?, col("alpha")?);

    let mut models: Vec<Model> = Vec::new();
    let mut rows = Vec::new();
    for row in &table.rows {
        let m: Model = row[cm]
            .parse()
            .map_err(|_| Error::format(WHAT, format!("bad model '{}'", row[cm])))?;
        if !models.contains(&m) {
            models.push(m);
        }
        rows.push((
            m,
            io::parse_f64(&row[cg], WHAT)?,
            io::parse_f64(&row[cv], WHAT)?,
            io::parse_f64(&row[ca], WHAT)?,
        ));
    }
    let model = match (settings.model, models.as_slice()) {
        (Some(m), _) => m,
        (None, [m]) => *m,
        (None, []) => return Err(Error::contract("alpha table is empty")),
        (None, _) => {
            return Err(Error::contract(
                "alpha table holds several models; set collapse.model",
            ))
        }
    };

    let mut curves: Vec<(f64, Vec<(f64, f64)>)> = Vec::new();
    for &(m, gamma, volume, alpha) in &rows {
        if m != model {
            continue;
        }
        match curves
            .iter_mut()
            .find(|(v, _)| v.to_bits() == volume.to_bits())
        {
            Some((_, pts)) => pts.push((gamma, alpha)),
            None => curves.push((volume, vec![(gamma, alpha)])),
        }
    }
    curves.sort_by(|a, b| a.0.total_cmp(&b.0));
    for (_, pts) in curves.iter_mut() {
        pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    }
    if curves.len() < 2 {
        return Err(Error::contract(format!(
            "collapse needs alpha curves for at least two sizes, found {}",
            curves.len()
        )));
    }

    let result = analysis::fit_collapse(&curves, &settings.gamma_grid, &settings.xi_grid)?;
    let mut out = Output::new(&config.out, "collapse", config);
    let collapsed = analysis::collapse::collapse_curves(&curves, result.gamma_c, result.xi);
    let mut csv_rows = Vec::new();
    for ((volume, raw), pts) in curves.iter().zip(&collapsed) {
        for ((gamma, _), (x, alpha)) in raw.iter().zip(pts) {
            csv_rows.push(vec![
                fmt_f64(*volume),
                fmt_f64(*gamma),
                fmt_f64(*x),
                fmt_f64(*alpha),
            ]);
        }
    }
    let report = CollapseReport {
        model: model.to_string(),
        volumes: curves.iter().map(|(v, _)| *v).collect(),
        result,
    };
    out.write(COLLAPSE_FILE, &io::to_json_bytes(&report)?)?;
    out.write(
        COLLAPSED_CURVES_FILE,
        &io::table_to_csv(&["volume", "gamma", "x", "alpha"], &csv_rows)?,
    )?;
    out.finish()
}

fn fmt_extended(x: f64) -> String {
    if x.is_infinite() {
        if x > 0.0 { "inf" } else { "-inf" }.to_string()
    } else {
        fmt_f64(x)
    }
}

/// Value reported in the `l_star_or_limit` column.
pub fn l_star_or_limit(class: &PhaseClass, params: &RGParams) -> f64 {
    match *class {
        PhaseClass::AlwaysRough => {
            rgflow::pole_location(params.ratio(), params.dim).unwrap_or(f64::INFINITY)
        }
        PhaseClass::Divergent { l_star } => l_star,
        PhaseClass::ConvergentFinite { limit } => limit,
        PhaseClass::ConvergentZero => 0.0,
    }
}

/// Flow families per dimension: trajectory CSVs, classification table and index.
pub fn cmd_rgflow(config: &ExperimentConfig) -> Result<RunManifest> {
    let rg = &config.rg;
    if rg.dims.is_empty() {
        return Err(Error::contract("rg.d lists no dimensions"));
    }
    let mut out = Output::new(&config.out, "rgflow", config);
    let mut phase_rows = Vec::new();
    let mut index_rows = Vec::new();
    for &d in &rg.dims {
        let critical = rgflow::critical_lambda2(d, rg.gamma0, rg.cutoff);
        let family: Vec<(f64, Option<f64>)> = if rg.lambda2.is_empty() {
            rg.lambda2_factors
                .iter()
                .map(|&f| (f * critical, Some(f)))
                .collect()
        } else {
            rg.lambda2.iter().map(|&l| (l, None)).collect()
        };
        if family.is_empty() {
            return Err(Error::contract(
                "rg.lambda2 and rg.lambda2_factors are both empty",
            ));
        }
        for (i, (lambda2, factor)) in family.into_iter().enumerate() {
            let lambda1 = rg.lambda1.unwrap_or(lambda2);
            let params = RGParams {
                lambda1_0: num_complex::Complex64::new(lambda1, 0.0),
                lambda2_0: lambda2,
                gamma0: rg.gamma0,
                diffusion: rg.diffusion,
                cutoff: rg.cutoff,
                dim: d,
            };
            params.validate()?;
            let class = rgflow::classify_phase(&params);
            phase_rows.push(vec![
                d.to_string(),
                fmt_f64(rg.gamma0),
                fmt_f64(lambda2),
                fmt_f64(rg.cutoff),
                fmt_f64(params.ratio()),
                class.label().to_string(),
                fmt_extended(l_star_or_limit(&class, &params)),
            ]);

            let traj = rgflow::integrate_flow(&params, rg.l_max, rg.dl)?;
            let file = format!("rg_d{d}_{i:02}.csv");
            let rows: Vec<Vec<String>> = traj
                .samples
                .iter()
                .map(|s| {
                    vec![
                        fmt_f64(s.l),
                        fmt_f64(s.lambda1.re),
                        fmt_f64(s.lambda1.im),
                        fmt_f64(s.lambda2),
                        fmt_f64(s.gamma),
                    ]
                })
                .collect();
            out.write(&file, &io::table_to_csv(&RG_TRAJECTORY_HEADER, &rows)?)?;
            let (terminal, l_end) = match traj.terminal {
                Terminal::Completed => ("completed", traj.samples.last().map_or(0.0, |s| s.l)),
                Terminal::DivergedAt(l) => ("diverged", l),
            };
            index_rows.push(vec![
                d.to_string(),
                fmt_f64(lambda2),
                factor.map(fmt_f64).unwrap_or_default(),
                fmt_f64(critical),
                (factor == Some(1.0)).to_string(),
                class.label().to_string(),
                terminal.to_string(),
                fmt_f64(l_end),
                file,
            ]);
        }
    }
    out.write(
        PHASE_DIAGRAM_FILE,
        &io::table_to_csv(&PHASE_DIAGRAM_HEADER, &phase_rows)?,
    )?;
    out.write(
        RG_INDEX_FILE,
        &io::table_to_csv(
            &[
                "d",
                "lambda2_0",
                "factor",
                "lambda2_critical",
                "critical",
                "classification",
                "terminal",
                "l_end",
                "file",
            ],
            &index_rows,
        )?,
    )?;
    out.finish()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::RawConfig;

    fn config(dir: &Path, extra: &str) -> ExperimentConfig {
        let mut raw = RawConfig::parse(extra).unwrap();
        raw.set_value("output.dir", dir.to_str().unwrap()).unwrap();
        ExperimentConfig::from_raw(raw).unwrap()
    }

    #[test]
    fn simulate_writes_series_and_manifest() {
        let dir = tempfile::tempdir().unwrap();
        let c = config(
            dir.path(),
            "lattice.N = 8\nsim.model = local\nensemble.M = 4\nensemble.t_max = 0.05\nsim.dt = 0.01\nensemble.record = linear:0.01:0.05:5\n",
        );
        let m = cmd_simulate(&c).unwrap();
        let text = std::fs::read_to_string(dir.path().join(SERIES_FILE)).unwrap();
        assert_eq!(text.lines().count(), 1 + 6 * 3);
        assert_eq!(m.files.len(), 1);
        m.verify(dir.path()).unwrap();
        let back = RunManifest::read(&dir.path().join("manifest_simulate.json")).unwrap();
        assert_eq!(back.files, m.files);
        assert!(back.finished_at.is_some());
    }

    #[test]
    fn rgflow_single_row_at_zero_scale() {
        let dir = tempfile::tempdir().unwrap();
        let c = config(
            dir.path(),
            "rg.l_max = 0\nrg.d = 2\nrg.lambda2_factors = 0.5, 2\n",
        );
        cmd_rgflow(&c).unwrap();
        let t = Table::read(&dir.path().join("rg_d2_00.csv"), "t").unwrap();
        assert_eq!(t.rows.len(), 1);
        let pd = Table::read(&dir.path().join(PHASE_DIAGRAM_FILE), "t").unwrap();
        assert_eq!(pd.header, PHASE_DIAGRAM_HEADER);
        assert_eq!(pd.rows[0][5], "convergent_finite");
        assert_eq!(pd.rows[1][5], "divergent");
    }
}
