//! Application scanning: which framework entry points may the
//! application's reachable code invoke.
//!
//! Call graphs are built from each manifest root over the combined
//! hierarchy (application plus framework) with the same dispatch rules as
//! the framework mapper. Only boundary calls (a site in an application
//! method whose resolved target is a framework entry point) set access
//! vector bits; framework-internal onward calls are the mapper's concern
//! through the matrix.

use crate::bits::BitVec;
use crate::callgraph::{Mode, ResolveError, build_id_graph};
use crate::ir::{DynamicFeatures, Manifest, MethodRef, Program, has_dynamic_features};
use crate::mapper::AccessVector;
use crate::space::AnalysisSpace;
use std::collections::BTreeSet;

#[derive(Debug, thiserror::Error)]
pub enum ScanError {
    #[error("application uses dynamic features in {0:?} (pass force to override)")]
    DynamicFeatures(Vec<MethodRef>),
    #[error(transparent)]
    Resolve(#[from] ResolveError),
}

/// Result of scanning one application against a framework.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AppScan {
    pub av: AccessVector,
    pub reached_app_methods: BTreeSet<MethodRef>,
    /// `(application method, site index, entry point)` triples, sorted.
    pub boundary_sites: Vec<(MethodRef, u32, MethodRef)>,
    /// True when dynamic features were present and overridden by force.
    pub dynamic_features_forced: bool,
}

impl AppScan {
    pub fn to_json(&self) -> String {
        #[derive(serde::Serialize)]
        struct Doc<'a> {
            av: serde_json::Value,
            boundary_sites: Vec<(String, u32, String)>,
            reached_app_methods: Vec<String>,
            flags: Vec<&'a str>,
        }
        let av: serde_json::Value =
            serde_json::from_str(&self.av.to_json()).expect("valid json");
        let doc = Doc {
            av,
            boundary_sites: self
                .boundary_sites
                .iter()
                .map(|(m, s, e)| (m.to_string(), *s, e.to_string()))
                .collect(),
            reached_app_methods: self.reached_app_methods.iter().map(|m| m.to_string()).collect(),
            flags: if self.dynamic_features_forced { vec!["reflection_forced"] } else { vec![] },
        };
        let mut s = serde_json::to_string_pretty(&doc).expect("serialization cannot fail");
        s.push('\n');
        s
    }
}

/// Extracts the access vector of an application: builds a call graph per
/// manifest root over the combined hierarchy and marks every entry point
/// some reached application call site resolves to. Roots are unioned; the
/// result is independent of root order.
pub fn scan_app(
    space: &AnalysisSpace<'_>,
    manifest: &Manifest,
    mode: Mode,
    max_depth: Option<u32>,
    force: bool,
) -> Result<AppScan, ScanError> {
    let app = space.app.expect("scan_app requires a space built with an application");
    let mut forced = false;
    match has_dynamic_features(app) {
        DynamicFeatures::Clean => {}
        DynamicFeatures::Flagged(list) => {
            if !force {
                return Err(ScanError::DynamicFeatures(list));
            }
            forced = true;
        }
    }

    let entries = space.entry_rows().to_vec();
    let mut bits = BitVec::zeros(entries.len());
    let mut reached_app_methods: BTreeSet<MethodRef> = BTreeSet::new();
    let mut boundary: BTreeSet<(MethodRef, u32, MethodRef)> = BTreeSet::new();

    for root in &manifest.roots {
        let root_id =
            space.method_id(root).ok_or_else(|| ResolveError::UnresolvedRoot(root.clone()))?;
        let graph = build_id_graph(space, root_id, mode, max_depth)?;
        for &node in &graph.nodes {
            if space.method(node).from_app {
                reached_app_methods.insert(space.method_ref(node));
            }
        }
        for (caller, site, callee) in &graph.edges {
            if !space.method(*caller).from_app {
                continue;
            }
            if let Some(row) = space.entry_row_index(*callee) {
                bits.set(row);
                boundary.insert((space.method_ref(*caller), *site, space.method_ref(*callee)));
            }
        }
    }

    let av = AccessVector {
        rows: entries.iter().map(|m| space.method_ref(*m)).collect(),
        bits,
    };
    Ok(AppScan {
        av,
        reached_app_methods,
        boundary_sites: boundary.into_iter().collect(),
        dynamic_features_forced: forced,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DirectUsage {
    Used,
    Unused,
}

/// The coarse pre-study technique: a pure syntactic scan, no reachability.
/// Used iff any instruction anywhere in the application invokes one of the
/// methods of interest (by static target).
pub fn direct_usage_check(app: &Program, methods_of_interest: &BTreeSet<MethodRef>) -> DirectUsage {
    for class in &app.classes {
        for method in &class.methods {
            for instr in &method.body {
                if let crate::ir::Instruction::Invoke { target, .. } = instr
                    && methods_of_interest.contains(target)
                {
                    return DirectUsage::Used;
                }
            }
        }
    }
    DirectUsage::Unused
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ir::{PermissionSet, ServiceTable, SinkConfig, parse_program};

    fn sinks() -> SinkConfig {
        SinkConfig {
            vocabulary: PermissionSet::from_iter(["p1"]),
            check_sinks: vec![],
            clear_identity_sig: MethodRef::new("Sys", "clearId", 0),
            restore_identity_sig: MethodRef::new("Sys", "restoreId", 0),
        }
    }

    fn framework() -> crate::ir::Program {
        parse_program(
            br#"{"kind":"framework","name":"fw","classes":[
            {"name":"Base","public":true,"methods":[
                {"name":"vm","arity":0,"public":true,"constructor":false,"locals":0,"body":[["return"]]}
            ]},
            {"name":"Der","super":"Base","public":true,"methods":[
                {"name":"vm","arity":0,"public":true,"constructor":false,"locals":0,"body":[["return"]]}
            ]},
            {"name":"Api","public":true,"methods":[
                {"name":"e1","arity":0,"public":true,"constructor":false,"locals":0,"body":[["return"]]}
            ]}
        ]}"#,
        )
        .unwrap()
    }

    #[test]
    fn empty_roots_scan_is_all_false() {
        let fw = framework();
        let app = parse_program(
            br#"{"kind":"application","name":"app","classes":[
            {"name":"App","public":true,"methods":[
                {"name":"s","arity":0,"public":true,"constructor":false,"locals":0,"body":[["return"]]}
            ]}
        ]}"#,
        )
        .unwrap();
        let st = ServiceTable::default();
        let sc = sinks();
        let space = AnalysisSpace::build(&fw, Some(&app), &st, &sc).unwrap();
        let manifest = Manifest {
            app_name: "app".into(),
            declared: PermissionSet::new(),
            roots: vec![MethodRef::new("App", "s", 0)],
        };
        let scan = scan_app(&space, &manifest, Mode::Cha, None, false).unwrap();
        assert!(!scan.av.bits.any());
        assert!(scan.boundary_sites.is_empty());
        assert_eq!(scan.reached_app_methods.len(), 1);
    }

    #[test]
    fn virtual_call_with_two_overrides_sets_both_bits_in_cha() {
        // The receiver is branch-dependent, so execution can reach either
        // override; the interpreter run in the oracle tests confirms both
        // entry points are hit.
        let fw = framework();
        let app = parse_program(
            br#"{"kind":"application","name":"app","classes":[
            {"name":"App","public":true,"methods":[
                {"name":"s","arity":0,"public":true,"constructor":false,"locals":1,
                 "body":[["branch","ELSE"],
                          ["new_obj",0,"Base"],["goto","CALL"],
                          ["label","ELSE"],["new_obj",0,"Der"],
                          ["label","CALL"],
                          ["invoke","virtual","Base::vm/0",0,[]],["return"]]}
            ]}
        ]}"#,
        )
        .unwrap();
        let st = ServiceTable::default();
        let sc = sinks();
        let space = AnalysisSpace::build(&fw, Some(&app), &st, &sc).unwrap();
        let manifest = Manifest {
            app_name: "app".into(),
            declared: PermissionSet::new(),
            roots: vec![MethodRef::new("App", "s", 0)],
        };
        let scan = scan_app(&space, &manifest, Mode::Cha, None, false).unwrap();
        let set: Vec<MethodRef> = scan
            .av
            .bits
            .iter_ones()
            .map(|i| scan.av.rows[i].clone())
            .collect();
        assert_eq!(
            set,
            vec![MethodRef::new("Base", "vm", 0), MethodRef::new("Der", "vm", 0)]
        );
    }

    #[test]
    fn dynamic_features_are_rejected_unless_forced() {
        let fw = framework();
        let app = parse_program(
            br#"{"kind":"application","name":"app","classes":[
            {"name":"App","public":true,"methods":[
                {"name":"s","arity":0,"public":true,"constructor":false,"locals":0,
                 "body":[["reflective"],["return"]]}
            ]}
        ]}"#,
        )
        .unwrap();
        let st = ServiceTable::default();
        let sc = sinks();
        let space = AnalysisSpace::build(&fw, Some(&app), &st, &sc).unwrap();
        let manifest = Manifest {
            app_name: "app".into(),
            declared: PermissionSet::new(),
            roots: vec![MethodRef::new("App", "s", 0)],
        };
        assert!(matches!(
            scan_app(&space, &manifest, Mode::Cha, None, false),
            Err(ScanError::DynamicFeatures(_))
        ));
        let scan = scan_app(&space, &manifest, Mode::Cha, None, true).unwrap();
        assert!(scan.dynamic_features_forced);
    }

    #[test]
    fn reached_entries_are_always_syntactically_present() {
        use crate::oracle::corpus::{GenSpec, generate_corpus};
        for seed in 0..10u64 {
            let bundle = generate_corpus(seed, &GenSpec::tiny(true)).unwrap();
            let space = AnalysisSpace::build(
                &bundle.framework,
                Some(&bundle.application),
                &bundle.services,
                &bundle.sinks,
            )
            .unwrap();
            let scan = scan_app(&space, &bundle.manifest, Mode::Cha, None, false).unwrap();
            for i in scan.av.bits.iter_ones() {
                let entry = scan.av.rows[i].clone();
                assert_eq!(
                    direct_usage_check(&bundle.application, &BTreeSet::from([entry.clone()])),
                    DirectUsage::Used,
                    "seed {seed}: {entry} reached but not syntactically present"
                );
            }
        }
    }

    #[test]
    fn direct_usage_is_syntactic_scan_without_reachability() {
        let interest: BTreeSet<MethodRef> = [MethodRef::new("Api", "e1", 0)].into();

        let used = parse_program(
            br#"{"kind":"application","name":"app","classes":[
            {"name":"App","public":true,"methods":[
                {"name":"dead","arity":0,"public":true,"constructor":false,"locals":1,
                 "body":[["new_obj",0,"Api"],["invoke","virtual","Api::e1/0",0,[]],["return"]]},
                {"name":"s","arity":0,"public":true,"constructor":false,"locals":0,"body":[["return"]]}
            ]}
        ]}"#,
        )
        .unwrap();
        assert_eq!(direct_usage_check(&used, &interest), DirectUsage::Used);

        let no_invokes = parse_program(
            br#"{"kind":"application","name":"app","classes":[
            {"name":"App","public":true,"methods":[
                {"name":"s","arity":0,"public":true,"constructor":false,"locals":0,"body":[["return"]]}
            ]}
        ]}"#,
        )
        .unwrap();
        assert_eq!(direct_usage_check(&no_invokes, &interest), DirectUsage::Unused);

        // The entry is invoked only from a method unreachable from the
        // roots: the syntactic check says used, the reachability scan does
        // not set the bit; presence over-approximates usage.
        let fw = framework();
        let st = ServiceTable::default();
        let sc = sinks();
        let space = AnalysisSpace::build(&fw, Some(&used), &st, &sc).unwrap();
        let manifest = Manifest {
            app_name: "app".into(),
            declared: PermissionSet::new(),
            roots: vec![MethodRef::new("App", "s", 0)],
        };
        let scan = scan_app(&space, &manifest, Mode::Cha, None, false).unwrap();
        let e1_row = scan.av.rows.iter().position(|r| r == &MethodRef::new("Api", "e1", 0)).unwrap();
        assert!(!scan.av.bits.get(e1_row));
    }
}
