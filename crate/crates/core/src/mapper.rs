//! The permission access matrix, the AND/OR vector-matrix calculus, and
//! permission-gap reports.
//!
//! Rows are framework entry points in canonical order, columns the
//! permission vocabulary. `M(i, j)` is true iff entry point `i` reaches a
//! resolved check of permission `j`. The matrix condenses the reachability
//! information of all per-entry-point call graphs and is typically very
//! sparse.

use crate::bits::{BitMatrix, BitVec};
use crate::callgraph::Mode;
use crate::ir::{MethodRef, PermissionSet, SinkConfig};
use crate::pep::{PepResolution, PepStatus};
use serde::Serialize;
use std::collections::BTreeSet;

#[derive(Debug, thiserror::Error)]
pub enum MapperError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("unknown permission {0:?} in declared set")]
    UnknownPermission(String),
    #[error("matrix document malformed: {0}")]
    MalformedMatrix(String),
}

/// Boolean entry-point × permission matrix with provenance metadata.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PermissionAccessMatrix {
    pub rows: Vec<MethodRef>,
    pub cols: PermissionSet,
    pub bits: BitMatrix,
    /// Rows that contained at least one unresolved check site (populated in
    /// default mode only; strict mode saturates such rows instead).
    pub unresolved_rows: BTreeSet<usize>,
    pub mode: Mode,
    pub strict: bool,
    pub framework: String,
    pub reflection_forced: bool,
}

/// Boolean vector over the framework's entry points: which ones an
/// application's code may call.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AccessVector {
    pub rows: Vec<MethodRef>,
    pub bits: BitVec,
}

/// Result of the AND/OR product: which permissions are inferred.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InferredVector {
    pub cols: PermissionSet,
    pub bits: BitVec,
}

impl InferredVector {
    pub fn to_set(&self) -> PermissionSet {
        PermissionSet::from_iter(
            self.bits.iter_ones().map(|i| self.cols.as_slice()[i].clone()),
        )
    }
}

/// Soundness caveats that travel with gap reports.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SoundnessFlags {
    pub reflection_forced: bool,
    pub unresolved_peps: bool,
}

impl SoundnessFlags {
    pub fn to_strings(self) -> Vec<String> {
        let mut v = Vec::new();
        if self.reflection_forced {
            v.push("reflection_forced".to_string());
        }
        if self.unresolved_peps {
            v.push("unresolved_peps".to_string());
        }
        v
    }
}

/// Declared-versus-inferred comparison for one application.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct GapReport {
    pub app: String,
    pub declared: PermissionSet,
    pub inferred: PermissionSet,
    /// Declared but never usable: the unnecessary grants.
    pub gap: PermissionSet,
    /// Inferred but not declared; advisory only, never subtracted from the
    /// gap, because static over-approximation can inflate it.
    pub missing: PermissionSet,
    pub attack_surface_area: usize,
    pub soundness_flags: Vec<String>,
}

/// Builds `M` from per-entry-point resolution lists. Resolved sites set
/// bits, identity-discarded sites set nothing, unresolved sites mark the
/// row (default) or saturate it (strict).
#[allow(clippy::too_many_arguments)]
pub fn assemble_matrix(
    resolutions: &[Vec<PepResolution>],
    entries: &[MethodRef],
    sc: &SinkConfig,
    strict: bool,
    mode: Mode,
    framework: &str,
    reflection_forced: bool,
) -> Result<PermissionAccessMatrix, MapperError> {
    if resolutions.len() != entries.len() {
        return Err(MapperError::DimensionMismatch(format!(
            "{} resolution lists for {} entry points",
            resolutions.len(),
            entries.len()
        )));
    }
    let cols = sc.vocabulary.clone();
    let mut bits = BitMatrix::zeros(entries.len(), cols.len());
    let mut unresolved_rows = BTreeSet::new();
    for (row, list) in resolutions.iter().enumerate() {
        for resolution in list {
            match &resolution.status {
                PepStatus::Resolved => {
                    for perm in resolution.permissions.iter() {
                        let col = cols.index_of(perm).ok_or_else(|| {
                            MapperError::UnknownPermission(perm.to_string())
                        })?;
                        bits.set(row, col);
                    }
                }
                PepStatus::DiscardedIdentity => {}
                PepStatus::Unresolved(_) => {
                    if strict {
                        bits.set_row_all(row);
                    } else {
                        unresolved_rows.insert(row);
                    }
                }
            }
        }
    }
    Ok(PermissionAccessMatrix {
        rows: entries.to_vec(),
        cols,
        bits,
        unresolved_rows,
        mode,
        strict,
        framework: framework.to_string(),
        reflection_forced,
    })
}

/// `IP(j) = OR over i of (AV(i) AND M(i, j))`, word-parallel.
pub fn multiply(
    av: &AccessVector,
    m: &PermissionAccessMatrix,
) -> Result<InferredVector, MapperError> {
    if av.rows != m.rows {
        return Err(MapperError::DimensionMismatch(format!(
            "access vector over {} rows, matrix over {}",
            av.rows.len(),
            m.rows.len()
        )));
    }
    Ok(InferredVector { cols: m.cols.clone(), bits: m.bits.select_or(&av.bits) })
}

/// Gap = declared \ inferred; missing = inferred \ declared (reported, never
/// subtracted). The attack surface area is the gap size.
pub fn compute_gap(
    app: &str,
    declared: &PermissionSet,
    ip: &InferredVector,
    flags: SoundnessFlags,
) -> Result<GapReport, MapperError> {
    for perm in declared.iter() {
        if !ip.cols.contains(perm) {
            return Err(MapperError::UnknownPermission(perm.to_string()));
        }
    }
    let inferred = ip.to_set();
    let gap = declared.difference(&inferred);
    let missing = inferred.difference(declared);
    Ok(GapReport {
        app: app.to_string(),
        attack_surface_area: gap.len(),
        declared: declared.clone(),
        inferred,
        gap,
        missing,
        soundness_flags: flags.to_strings(),
    })
}

/// Summary statistics of a permission map.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct MapStats {
    pub entry_points: usize,
    /// Rows with at least one permission bit.
    pub mapped_rows: usize,
    /// Median permission count over mapped rows (lower median).
    pub median_perms_per_mapped_row: usize,
    pub max_perms_per_mapped_row: usize,
    pub total_set_bits: usize,
    pub unresolved_rows: usize,
}

impl PermissionAccessMatrix {
    pub fn stats(&self) -> MapStats {
        let mut counts: Vec<usize> = (0..self.rows.len())
            .map(|i| self.bits.row_count_ones(i))
            .filter(|c| *c > 0)
            .collect();
        counts.sort_unstable();
        let median = if counts.is_empty() { 0 } else { counts[(counts.len() - 1) / 2] };
        MapStats {
            entry_points: self.rows.len(),
            mapped_rows: counts.len(),
            median_perms_per_mapped_row: median,
            max_perms_per_mapped_row: counts.last().copied().unwrap_or(0),
            total_set_bits: self.bits.count_ones(),
            unresolved_rows: self.unresolved_rows.len(),
        }
    }

    /// Sparse coordinate-list JSON; byte-stable for fixed inputs.
    pub fn to_json(&self) -> String {
        self.render_json(false)
    }

    /// Same artifact with an embedded statistics block; `from_json` accepts
    /// both forms.
    pub fn to_json_with_stats(&self) -> String {
        self.render_json(true)
    }

    fn render_json(&self, with_stats: bool) -> String {
        #[derive(Serialize)]
        struct Doc<'a> {
            framework: &'a str,
            mode: &'a str,
            strict: bool,
            reflection_forced: bool,
            rows: Vec<String>,
            cols: &'a PermissionSet,
            cells: Vec<(usize, usize)>,
            unresolved: Vec<usize>,
            #[serde(skip_serializing_if = "Option::is_none")]
            stats: Option<MapStats>,
        }
        let mut cells = Vec::new();
        for i in 0..self.rows.len() {
            for j in self.bits.iter_row_ones(i) {
                cells.push((i, j));
            }
        }
        let doc = Doc {
            framework: &self.framework,
            mode: self.mode.as_str(),
            strict: self.strict,
            reflection_forced: self.reflection_forced,
            rows: self.rows.iter().map(|r| r.to_string()).collect(),
            cols: &self.cols,
            cells,
            unresolved: self.unresolved_rows.iter().copied().collect(),
            stats: with_stats.then(|| self.stats()),
        };
        let mut s = serde_json::to_string_pretty(&doc).expect("serialization cannot fail");
        s.push('\n');
        s
    }

    /// Dense 0/1 CSV for human inspection.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("entry");
        for p in self.cols.iter() {
            s.push(',');
            s.push_str(p);
        }
        s.push('\n');
        for (i, row) in self.rows.iter().enumerate() {
            s.push_str(&row.to_string());
            for j in 0..self.cols.len() {
                s.push(',');
                s.push(if self.bits.get(i, j) { '1' } else { '0' });
            }
            s.push('\n');
        }
        s
    }

    pub fn from_json(bytes: &[u8]) -> Result<Self, MapperError> {
        #[derive(serde::Deserialize)]
        struct Doc {
            framework: String,
            mode: String,
            strict: bool,
            #[serde(default)]
            reflection_forced: bool,
            rows: Vec<MethodRef>,
            cols: PermissionSet,
            cells: Vec<(usize, usize)>,
            #[serde(default)]
            unresolved: Vec<usize>,
        }
        let doc: Doc = serde_json::from_slice(bytes)
            .map_err(|e| MapperError::MalformedMatrix(e.to_string()))?;
        let mode: Mode =
            doc.mode.parse().map_err(MapperError::MalformedMatrix)?;
        let mut bits = BitMatrix::zeros(doc.rows.len(), doc.cols.len());
        for (i, j) in doc.cells {
            if i >= doc.rows.len() || j >= doc.cols.len() {
                return Err(MapperError::MalformedMatrix(format!(
                    "cell ({i}, {j}) outside {}x{}",
                    doc.rows.len(),
                    doc.cols.len()
                )));
            }
            bits.set(i, j);
        }
        for &r in &doc.unresolved {
            if r >= doc.rows.len() {
                return Err(MapperError::MalformedMatrix(format!("unresolved row {r} out of range")));
            }
        }
        Ok(PermissionAccessMatrix {
            rows: doc.rows,
            cols: doc.cols,
            bits,
            unresolved_rows: doc.unresolved.into_iter().collect(),
            mode,
            strict: doc.strict,
            framework: doc.framework,
            reflection_forced: doc.reflection_forced,
        })
    }

    /// Permission set of one row.
    pub fn row_set(&self, row: usize) -> PermissionSet {
        PermissionSet::from_iter(
            self.bits.iter_row_ones(row).map(|j| self.cols.as_slice()[j].clone()),
        )
    }
}

impl AccessVector {
    pub fn to_json(&self) -> String {
        #[derive(Serialize)]
        struct Doc {
            rows: Vec<String>,
            set: Vec<usize>,
        }
        let doc = Doc {
            rows: self.rows.iter().map(|r| r.to_string()).collect(),
            set: self.bits.iter_ones().collect(),
        };
        let mut s = serde_json::to_string_pretty(&doc).expect("serialization cannot fail");
        s.push('\n');
        s
    }
}

impl GapReport {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("serialization cannot fail");
        s.push('\n');
        s
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        use std::fmt::Write as _;
        let _ = writeln!(s, "application:        {}", self.app);
        let _ = writeln!(s, "declared:           {}", self.declared);
        let _ = writeln!(s, "inferred:           {}", self.inferred);
        let _ = writeln!(s, "gap (unnecessary):  {}", self.gap);
        let _ = writeln!(s, "missing (advisory): {}", self.missing);
        let _ = writeln!(s, "attack surface:     {}", self.attack_surface_area);
        if !self.soundness_flags.is_empty() {
            let _ = writeln!(s, "caveats:            {}", self.soundness_flags.join(", "));
        }
        s
    }
}
