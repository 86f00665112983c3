//! Browser bindings for the permission-gap toolkit.
//!
//! Three operations back the demo page: `analyze` runs the full static
//! pipeline (map, scan, multiply, gap) over a pasted bundle, `generate`
//! produces a seeded corpus bundle to explore, and `execute_trace` runs the
//! bounded interpreter so the page can show the dynamic under-approximation
//! next to the static result. All inputs and outputs are JSON strings; the
//! page owns the rendering.

use permgap_core::callgraph::Mode;
use permgap_core::ir::{
    parse_manifest, parse_program, parse_service_table, parse_sink_config, serialize_manifest,
    serialize_program, serialize_service_table, serialize_sink_config,
};
use permgap_core::mapper::multiply;
use permgap_core::oracle::corpus::{GenSpec, generate_corpus};
use permgap_core::oracle::{ExecConfig, execute};
use permgap_core::pipeline::{MapOptions, analyze_app, analyze_framework};
use permgap_core::space::AnalysisSpace;
use wasm_bindgen::prelude::*;

struct Bundle {
    framework: permgap_core::ir::Program,
    app: permgap_core::ir::Program,
    manifest: permgap_core::ir::Manifest,
    services: permgap_core::ir::ServiceTable,
    sinks: permgap_core::ir::SinkConfig,
}

fn parse_bundle(
    framework: &str,
    app: &str,
    manifest: &str,
    services: &str,
    sinks: &str,
) -> Result<Bundle, JsError> {
    let err = |doc: &str, e: String| JsError::new(&format!("{doc}: {e}"));
    Ok(Bundle {
        framework: parse_program(framework.as_bytes())
            .map_err(|e| err("framework", e.to_string()))?,
        app: parse_program(app.as_bytes()).map_err(|e| err("app", e.to_string()))?,
        manifest: parse_manifest(manifest.as_bytes())
            .map_err(|e| err("manifest", e.to_string()))?,
        services: parse_service_table(services.as_bytes())
            .map_err(|e| err("services", e.to_string()))?,
        sinks: parse_sink_config(sinks.as_bytes()).map_err(|e| err("sinks", e.to_string()))?,
    })
}

fn parse_mode(mode: &str) -> Result<Mode, JsError> {
    mode.parse().map_err(|e: String| JsError::new(&e))
}

/// Static pipeline over one bundle. Returns the matrix (sparse cells), its
/// statistics, the access and inferred vectors, and the gap report.
#[wasm_bindgen]
#[allow(clippy::too_many_arguments)]
pub fn analyze(
    framework: &str,
    app: &str,
    manifest: &str,
    services: &str,
    sinks: &str,
    mode: &str,
    strict: bool,
) -> Result<String, JsError> {
    let b = parse_bundle(framework, app, manifest, services, sinks)?;
    let opts = MapOptions { mode: parse_mode(mode)?, strict, ..MapOptions::default() };
    let fail = |e: permgap_core::pipeline::PipelineError| JsError::new(&e.to_string());
    let map = analyze_framework(&b.framework, &b.services, &b.sinks, &opts).map_err(fail)?;
    let scan = analyze_app(&b.framework, &b.app, &b.manifest, &b.services, &b.sinks, &opts)
        .map_err(fail)?;
    let ip = multiply(&scan.av, &map.matrix).map_err(|e| JsError::new(&e.to_string()))?;
    let flags = permgap_core::mapper::SoundnessFlags {
        reflection_forced: map.matrix.reflection_forced || scan.dynamic_features_forced,
        unresolved_peps: !map.matrix.unresolved_rows.is_empty(),
    };
    let report =
        permgap_core::mapper::compute_gap(&b.manifest.app_name, &b.manifest.declared, &ip, flags)
            .map_err(|e| JsError::new(&e.to_string()))?;

    let mut cells = Vec::new();
    for i in 0..map.matrix.rows.len() {
        for j in map.matrix.bits.iter_row_ones(i) {
            cells.push((i, j));
        }
    }
    let doc = serde_json::json!({
        "rows": map.matrix.rows.iter().map(|r| r.to_string()).collect::<Vec<_>>(),
        "cols": map.matrix.cols.as_slice(),
        "cells": cells,
        "unresolved": map.matrix.unresolved_rows.iter().collect::<Vec<_>>(),
        "stats": map.matrix.stats(),
        "av": scan.av.bits.iter_ones().collect::<Vec<_>>(),
        "ip": ip.bits.iter_ones().collect::<Vec<_>>(),
        "report": report,
        "diagnostics": map.diagnostics,
        "boundary_sites": scan
            .boundary_sites
            .iter()
            .map(|(m, s, e)| format!("{m} [{s}] -> {e}"))
            .collect::<Vec<_>>(),
    });
    Ok(doc.to_string())
}

/// Seeded corpus bundle; the page loads the returned documents into its
/// editors.
#[wasm_bindgen]
pub fn generate(
    seed: u64,
    classes: usize,
    methods: usize,
    perms: usize,
    services: usize,
    acyclic: bool,
) -> Result<String, JsError> {
    let spec = GenSpec {
        n_classes: classes,
        n_methods: methods,
        n_permissions: perms,
        n_services: services,
        p_branch: 0.35,
        p_identity_region: 0.3,
        acyclic,
        monomorphic: false,
    };
    let bundle = generate_corpus(seed, &spec).map_err(|e| JsError::new(&e.to_string()))?;
    let doc = serde_json::json!({
        "framework": serialize_program(&bundle.framework),
        "app": serialize_program(&bundle.application),
        "manifest": serialize_manifest(&bundle.manifest),
        "services": serialize_service_table(&bundle.services),
        "sinks": serialize_sink_config(&bundle.sinks),
        "ground_truth": bundle.ground_truth.as_slice(),
    });
    Ok(doc.to_string())
}

/// Bounded exhaustive execution; returns the recorded checks, invoked
/// entries and the exhaustion flag.
#[wasm_bindgen]
#[allow(clippy::too_many_arguments)]
pub fn execute_trace(
    framework: &str,
    app: &str,
    manifest: &str,
    services: &str,
    sinks: &str,
    loop_bound: u32,
    path_budget: u64,
    step_budget: u64,
) -> Result<String, JsError> {
    let b = parse_bundle(framework, app, manifest, services, sinks)?;
    let space = AnalysisSpace::build(&b.framework, Some(&b.app), &b.services, &b.sinks)
        .map_err(|e| JsError::new(&e.to_string()))?;
    let cfg = ExecConfig { loop_bound, path_budget, step_budget };
    let trace = execute(&space, &b.manifest, &cfg).map_err(|e| JsError::new(&e.to_string()))?;
    Ok(trace.to_json())
}

/// The bundled worked example, for first paint.
#[wasm_bindgen]
pub fn sample_bundle() -> String {
    serde_json::json!({
        "framework": include_str!("../../../fixtures/sample/framework.json"),
        "app": include_str!("../../../fixtures/sample/app.json"),
        "manifest": include_str!("../../../fixtures/sample/manifest.json"),
        "services": include_str!("../../../fixtures/sample/services.json"),
        "sinks": include_str!("../../../fixtures/sample/sinks.json"),
    })
    .to_string()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sample_analyzes_to_the_expected_gap() {
        let sample: serde_json::Value = serde_json::from_str(&sample_bundle()).unwrap();
        let get = |k: &str| sample[k].as_str().unwrap().to_string();
        let out = analyze(
            &get("framework"),
            &get("app"),
            &get("manifest"),
            &get("services"),
            &get("sinks"),
            "rta",
            false,
        )
        .unwrap();
        let doc: serde_json::Value = serde_json::from_str(&out).unwrap();
        assert_eq!(doc["report"]["gap"], serde_json::json!(["p2"]));
        assert_eq!(doc["av"], serde_json::json!([0, 1, 2]));
        assert_eq!(doc["ip"], serde_json::json!([0]));
    }

    #[test]
    fn generated_bundle_round_trips_through_analyze_and_execute() {
        let out = generate(5, 8, 24, 8, 1, true).unwrap();
        let doc: serde_json::Value = serde_json::from_str(&out).unwrap();
        let get = |k: &str| doc[k].as_str().unwrap().to_string();
        let analyzed = analyze(
            &get("framework"),
            &get("app"),
            &get("manifest"),
            &get("services"),
            &get("sinks"),
            "cha",
            false,
        )
        .unwrap();
        let analyzed: serde_json::Value = serde_json::from_str(&analyzed).unwrap();
        let traced = execute_trace(
            &get("framework"),
            &get("app"),
            &get("manifest"),
            &get("services"),
            &get("sinks"),
            3,
            10_000,
            10_000,
        )
        .unwrap();
        let traced: serde_json::Value = serde_json::from_str(&traced).unwrap();
        // The dynamic checks stay within the statically inferred set.
        let inferred: Vec<String> = analyzed["report"]["inferred"]
            .as_array()
            .unwrap()
            .iter()
            .map(|v| v.as_str().unwrap().to_string())
            .collect();
        for check in traced["checks"].as_array().unwrap() {
            assert!(inferred.contains(&check.as_str().unwrap().to_string()));
        }
    }
}
