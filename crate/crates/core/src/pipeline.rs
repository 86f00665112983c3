//! End-to-end orchestration: framework mapping, application scanning, gap
//! computation, and map/trace diffing.
//!
//! Per-entry-point analyses are independent; the parallel driver fans rows
//! out over worker threads and merges results in row order, so output is
//! identical for any worker count.

use crate::callgraph::{Mode, ResolveError, build_id_graph, reachable_pep_sites_ids};
use crate::ir::{
    DynamicFeatures, Manifest, MethodRef, Program, ServiceTable, SinkConfig, ValidationReport,
    has_dynamic_features, validate, validate_manifest,
};
use crate::mapper::{
    AccessVector, GapReport, MapperError, PermissionAccessMatrix, SoundnessFlags, assemble_matrix,
    compute_gap, multiply,
};
use crate::oracle::{ExecError, ExecTrace};
use crate::pep::{
    PepResolution, PepStatus, identity_discard, resolve_permission_arg,
};
use crate::sniffer::{AppScan, ScanError, scan_app};
use crate::space::{AnalysisSpace, SpaceError};
use serde::Serialize;
use std::sync::atomic::{AtomicUsize, Ordering};

pub const DEFAULT_ASCENT_BUDGET: u32 = 5;

#[derive(Debug, Clone)]
pub struct MapOptions {
    pub mode: Mode,
    pub strict: bool,
    pub max_depth: Option<u32>,
    pub ascent_budget: u32,
    pub jobs: usize,
    /// Override the dynamic-features rejection; stamps the output unsound.
    pub force: bool,
}

impl Default for MapOptions {
    fn default() -> Self {
        MapOptions {
            mode: Mode::Rta,
            strict: false,
            max_depth: None,
            ascent_budget: DEFAULT_ASCENT_BUDGET,
            jobs: 1,
            force: false,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("validation failed:\n{0}")]
    Validation(ValidationReport),
    #[error("program uses dynamic features in {0:?} (pass force to override)")]
    DynamicFeatures(Vec<MethodRef>),
    #[error(transparent)]
    Space(#[from] SpaceError),
    #[error(transparent)]
    Resolve(#[from] ResolveError),
    #[error(transparent)]
    Mapper(#[from] MapperError),
    #[error(transparent)]
    Scan(#[from] ScanError),
    #[error(transparent)]
    Exec(#[from] ExecError),
    #[error("row spaces differ: {0}")]
    RowSpaceMismatch(String),
}

#[derive(Debug, Clone)]
pub struct MapOutcome {
    pub matrix: PermissionAccessMatrix,
    /// One line per unresolved check site, in row order.
    pub diagnostics: Vec<String>,
}

/// Runs `f` over `0..n` on `jobs` workers; results are merged in index
/// order so the outcome is independent of scheduling.
fn par_indexed<R, E, F>(n: usize, jobs: usize, f: F) -> Result<Vec<R>, E>
where
    R: Send,
    E: Send,
    F: Fn(usize) -> Result<R, E> + Sync,
{
    if jobs <= 1 || n <= 1 {
        return (0..n).map(&f).collect();
    }
    let counter = AtomicUsize::new(0);
    let worker_count = jobs.min(n);
    let mut buckets: Vec<Vec<(usize, Result<R, E>)>> = std::thread::scope(|scope| {
        let handles: Vec<_> = (0..worker_count)
            .map(|_| {
                scope.spawn(|| {
                    let mut local = Vec::new();
                    loop {
                        let i = counter.fetch_add(1, Ordering::Relaxed);
                        if i >= n {
                            break;
                        }
                        local.push((i, f(i)));
                    }
                    local
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("analysis worker panicked")).collect()
    });
    let mut merged: Vec<Option<Result<R, E>>> = (0..n).map(|_| None).collect();
    for bucket in buckets.iter_mut() {
        for (i, r) in bucket.drain(..) {
            merged[i] = Some(r);
        }
    }
    merged.into_iter().map(|r| r.expect("every index processed")).collect()
}

/// Per-entry-point analysis: call graph, check-site discovery, identity
/// discard, string resolution.
fn analyze_row(
    space: &AnalysisSpace<'_>,
    root: crate::space::MethodId,
    opts: &MapOptions,
) -> Result<(Vec<PepResolution>, Vec<String>), PipelineError> {
    let graph = build_id_graph(space, root, opts.mode, opts.max_depth)?;
    let sites = reachable_pep_sites_ids(space, &graph);
    let (discarded, survivors) = identity_discard(space, &sites);
    let callers = graph.callers_index();
    let mut resolutions: Vec<PepResolution> =
        discarded.iter().map(|r| r.materialize(space)).collect();
    let mut diagnostics = Vec::new();
    for site in survivors {
        let r = resolve_permission_arg(space, &site, &callers, opts.ascent_budget);
        if let PepStatus::Unresolved(reason) = &r.status {
            diagnostics.push(format!(
                "unresolved: {} site {} sink {}: {}",
                space.method_ref(site.method),
                site.site_index,
                space.method_ref(site.sink),
                reason.as_str(),
            ));
        }
        resolutions.push(r.materialize(space));
    }
    resolutions.sort_by(|a, b| a.site.cmp(&b.site));
    Ok((resolutions, diagnostics))
}

/// Builds the permission access matrix of a framework.
pub fn analyze_framework(
    fw: &Program,
    st: &ServiceTable,
    sc: &SinkConfig,
    opts: &MapOptions,
) -> Result<MapOutcome, PipelineError> {
    let mut reflection_forced = false;
    if let DynamicFeatures::Flagged(list) = has_dynamic_features(fw) {
        if !opts.force {
            return Err(PipelineError::DynamicFeatures(list));
        }
        reflection_forced = true;
    }
    let report = validate(fw, None, Some(st), sc);
    if !report.is_clean() {
        return Err(PipelineError::Validation(report));
    }
    let space = AnalysisSpace::build(fw, None, st, sc)?;
    let rows: Vec<crate::space::MethodId> = space.entry_rows().to_vec();
    let row_refs: Vec<MethodRef> = rows.iter().map(|m| space.method_ref(*m)).collect();

    let per_row = par_indexed(rows.len(), opts.jobs, |i| analyze_row(&space, rows[i], opts))?;
    let mut resolutions = Vec::with_capacity(per_row.len());
    let mut diagnostics = Vec::new();
    for (r, d) in per_row {
        resolutions.push(r);
        diagnostics.extend(d);
    }
    let matrix = assemble_matrix(
        &resolutions,
        &row_refs,
        sc,
        opts.strict,
        opts.mode,
        &fw.name,
        reflection_forced,
    )?;
    Ok(MapOutcome { matrix, diagnostics })
}

/// Validates and scans an application against a framework.
pub fn analyze_app(
    fw: &Program,
    app: &Program,
    manifest: &Manifest,
    st: &ServiceTable,
    sc: &SinkConfig,
    opts: &MapOptions,
) -> Result<AppScan, PipelineError> {
    if let DynamicFeatures::Flagged(list) = has_dynamic_features(fw) {
        if !opts.force {
            return Err(PipelineError::DynamicFeatures(list));
        }
    }
    let report = validate(app, Some(fw), Some(st), sc);
    if !report.is_clean() {
        return Err(PipelineError::Validation(report));
    }
    let report = validate_manifest(manifest, app, sc);
    if !report.is_clean() {
        return Err(PipelineError::Validation(report));
    }
    let space = AnalysisSpace::build(fw, Some(app), st, sc)?;
    Ok(scan_app(&space, manifest, opts.mode, opts.max_depth, opts.force)?)
}

#[derive(Debug, Clone)]
pub struct GapOutcome {
    pub report: GapReport,
    pub scan: AppScan,
    pub diagnostics: Vec<String>,
}

/// Full gap pipeline: map (or a cached matrix), scan, multiply, gap.
pub fn run_gap(
    fw: &Program,
    app: &Program,
    manifest: &Manifest,
    st: &ServiceTable,
    sc: &SinkConfig,
    opts: &MapOptions,
    cached_matrix: Option<PermissionAccessMatrix>,
) -> Result<GapOutcome, PipelineError> {
    let (matrix, diagnostics) = match cached_matrix {
        Some(m) => (m, Vec::new()),
        None => {
            let outcome = analyze_framework(fw, st, sc, opts)?;
            (outcome.matrix, outcome.diagnostics)
        }
    };
    // The scan must agree with the matrix's dispatch mode.
    let scan_opts = MapOptions { mode: matrix.mode, ..opts.clone() };
    let scan = analyze_app(fw, app, manifest, st, sc, &scan_opts)?;
    if scan.av.rows != matrix.rows {
        return Err(PipelineError::RowSpaceMismatch(format!(
            "matrix over {} entry points, scan over {}",
            matrix.rows.len(),
            scan.av.rows.len()
        )));
    }
    let ip = multiply(&scan.av, &matrix)?;
    let flags = SoundnessFlags {
        reflection_forced: matrix.reflection_forced || scan.dynamic_features_forced,
        unresolved_peps: !matrix.unresolved_rows.is_empty(),
    };
    let report = compute_gap(&manifest.app_name, &manifest.declared, &ip, flags)?;
    Ok(GapOutcome { report, scan, diagnostics })
}

/// Per-row comparison buckets of two permission maps (or of a map against
/// recorded execution traces).
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct DiffReport {
    pub compared: usize,
    pub identical: usize,
    pub superset_by_1: usize,
    pub superset_by_2_plus: usize,
    /// Rows where the left side misses something the right side has; for
    /// static-versus-dynamic comparisons this is a soundness violation.
    pub subset: usize,
    pub subset_rows: Vec<String>,
}

impl DiffReport {
    fn bucket(&mut self, name: &str, left: &crate::ir::PermissionSet, right: &crate::ir::PermissionSet) {
        self.compared += 1;
        if !right.is_subset(left) {
            self.subset += 1;
            self.subset_rows.push(name.to_string());
            return;
        }
        match left.difference(right).len() {
            0 => self.identical += 1,
            1 => self.superset_by_1 += 1,
            _ => self.superset_by_2_plus += 1,
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("serialization cannot fail");
        s.push('\n');
        s
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        use std::fmt::Write as _;
        let _ = writeln!(s, "rows compared:        {}", self.compared);
        let _ = writeln!(s, "identical:            {}", self.identical);
        let _ = writeln!(s, "left has one extra:   {}", self.superset_by_1);
        let _ = writeln!(s, "left has two or more: {}", self.superset_by_2_plus);
        let _ = writeln!(s, "left misses some:     {}", self.subset);
        for row in &self.subset_rows {
            let _ = writeln!(s, "  miss: {row}");
        }
        s
    }
}

/// Row-by-row comparison of two maps over the same row and column spaces.
pub fn diff_maps(
    left: &PermissionAccessMatrix,
    right: &PermissionAccessMatrix,
) -> Result<DiffReport, PipelineError> {
    if left.rows != right.rows {
        return Err(PipelineError::RowSpaceMismatch(
            "maps cover different entry points".into(),
        ));
    }
    if left.cols != right.cols {
        return Err(PipelineError::RowSpaceMismatch("maps cover different vocabularies".into()));
    }
    let mut report = DiffReport::default();
    for (i, row) in left.rows.iter().enumerate() {
        report.bucket(&row.to_string(), &left.row_set(i), &right.row_set(i));
    }
    Ok(report)
}

/// Compares a static map against recorded execution traces: for each trace
/// the statically inferred set (selected by the trace's invoked entries) is
/// diffed against the dynamically recorded checks.
pub fn diff_map_vs_traces(
    map: &PermissionAccessMatrix,
    traces: &[(String, ExecTrace)],
) -> Result<DiffReport, PipelineError> {
    let mut report = DiffReport::default();
    for (name, trace) in traces {
        let mut bits = crate::bits::BitVec::zeros(map.rows.len());
        for entry in &trace.invoked_entries {
            match map.rows.iter().position(|r| r == entry) {
                Some(i) => bits.set(i),
                None => {
                    return Err(PipelineError::RowSpaceMismatch(format!(
                        "trace {name} invokes {entry}, which is not a row of the map"
                    )));
                }
            }
        }
        let av = AccessVector { rows: map.rows.clone(), bits };
        let inferred = multiply(&av, map)?.to_set();
        report.bucket(name, &inferred, &trace.recorded_checks);
    }
    Ok(report)
}
