//! Acceptance suite: one test per criterion, each asserting its stated
//! tolerance and printing a `[PASS]` line with timing. Run with
//! `cargo test -p permgap-cli --test acceptance -- --nocapture` to see the
//! per-criterion lines.

use permgap_core::callgraph::{Mode, build_id_graph, reachable_pep_sites_ids};
use permgap_core::ir::{MethodRef, PermissionSet, parse_manifest, parse_program,
    parse_service_table, parse_sink_config};
use permgap_core::mapper::{AccessVector, PermissionAccessMatrix, multiply};
use permgap_core::oracle::corpus::{CorpusBundle, GenSpec, generate_corpus};
use permgap_core::oracle::{ExecConfig, exact_required, execute};
use permgap_core::pep::identity_discard;
use permgap_core::pipeline::{MapOptions, analyze_app, analyze_framework};
use permgap_core::space::AnalysisSpace;
use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_permgap"))
}

fn sample_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/sample")
}

fn tmp(name: &str) -> PathBuf {
    let dir = Path::new(env!("CARGO_TARGET_TMPDIR")).join(name);
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

/// Mixed corpus used by the soundness, precision and discard criteria.
fn suite_spec(seed: u64) -> GenSpec {
    GenSpec {
        n_classes: 5 + (seed % 5) as usize,
        n_methods: 15 + (seed % 20) as usize,
        n_permissions: 4 + (seed % 6) as usize,
        n_services: (seed % 3) as usize,
        p_branch: 0.25 + 0.003 * (seed % 10) as f64,
        p_identity_region: 0.2 + 0.03 * (seed % 10) as f64,
        acyclic: seed.is_multiple_of(2),
        monomorphic: false,
    }
}

fn opts(mode: Mode, strict: bool) -> MapOptions {
    MapOptions { mode, strict, ..MapOptions::default() }
}

fn inferred_set(
    bundle: &CorpusBundle,
    matrix: &PermissionAccessMatrix,
    av: &AccessVector,
) -> PermissionSet {
    let _ = bundle;
    multiply(av, matrix).expect("row spaces match").to_set()
}

/// Worked example, exact: the four-entry framework yields
/// M = [[1,0,0],[1,0,0],[0,0,0],[0,1,0]], AV = (1,1,1,0), IP = (1,0,0),
/// inferred {p1}, gap {p2}; the gap command exits 2. Zero tolerance, < 1 s.
#[test]
fn a1_worked_example_exact() {
    let t0 = Instant::now();
    let dir = sample_dir();
    let read = |name: &str| std::fs::read(dir.join(name)).unwrap();
    let fw = parse_program(&read("framework.json")).unwrap();
    let app = parse_program(&read("app.json")).unwrap();
    let manifest = parse_manifest(&read("manifest.json")).unwrap();
    let st = parse_service_table(&read("services.json")).unwrap();
    let sc = parse_sink_config(&read("sinks.json")).unwrap();

    let out = analyze_framework(&fw, &st, &sc, &opts(Mode::Rta, false)).unwrap();
    let expected = [
        [true, false, false],
        [true, false, false],
        [false, false, false],
        [false, true, false],
    ];
    for (i, row) in expected.iter().enumerate() {
        for (j, want) in row.iter().enumerate() {
            assert_eq!(out.matrix.bits.get(i, j), *want, "matrix cell ({i}, {j})");
        }
    }
    let scan = analyze_app(&fw, &app, &manifest, &st, &sc, &opts(Mode::Rta, false)).unwrap();
    assert_eq!(scan.av.bits.iter_ones().collect::<Vec<_>>(), vec![0, 1, 2], "access vector");
    let ip = multiply(&scan.av, &out.matrix).unwrap();
    assert_eq!(ip.bits.iter_ones().collect::<Vec<_>>(), vec![0], "inferred vector");
    assert_eq!(ip.to_set().as_slice(), &["p1"], "inferred set");
    let gap = manifest.declared.difference(&ip.to_set());
    assert_eq!(gap.as_slice(), &["p2"], "permission gap");

    let status = bin().arg("gap").arg("--bundle").arg(&dir).output().unwrap();
    assert_eq!(status.status.code(), Some(2), "gap command exit code");

    let elapsed = t0.elapsed();
    assert!(elapsed.as_secs_f64() < 1.0, "took {elapsed:?}, budget 1 s");
    println!("[PASS] worked example exact: M, AV, IP, gap {{p2}}, exit 2 ({elapsed:?})");
}

/// Soundness: over 1000 seeded bundles (mixed cyclic/acyclic, all string
/// scenarios, identity regions, service indirection), everything the
/// interpreter records is inside the static inferred set, in every
/// (mode, strict) configuration. Zero violations, < 10 min.
#[test]
fn a2_soundness_static_covers_dynamic() {
    let t0 = Instant::now();
    let exec_cfg = ExecConfig { loop_bound: 3, path_budget: 400, step_budget: 4_000 };
    let mut checked = 0usize;
    for seed in 0..1000u64 {
        let bundle = generate_corpus(seed, &suite_spec(seed)).unwrap();
        let space = AnalysisSpace::build(
            &bundle.framework,
            Some(&bundle.application),
            &bundle.services,
            &bundle.sinks,
        )
        .unwrap();
        let trace = execute(&space, &bundle.manifest, &exec_cfg).unwrap();

        for mode in [Mode::Cha, Mode::Rta] {
            let scan = analyze_app(
                &bundle.framework,
                &bundle.application,
                &bundle.manifest,
                &bundle.services,
                &bundle.sinks,
                &opts(mode, false),
            )
            .unwrap();
            // Every entry point the interpreter crossed has its bit set.
            for entry in &trace.invoked_entries {
                let row = scan.av.rows.iter().position(|r| r == entry).unwrap();
                assert!(
                    scan.av.bits.get(row),
                    "seed {seed} {mode:?}: oracle invoked {entry} but the scan missed it"
                );
            }
            for strict in [false, true] {
                let map = analyze_framework(
                    &bundle.framework,
                    &bundle.services,
                    &bundle.sinks,
                    &opts(mode, strict),
                )
                .unwrap();
                let inferred = inferred_set(&bundle, &map.matrix, &scan.av);
                assert!(
                    trace.recorded_checks.is_subset(&inferred),
                    "seed {seed} {mode:?} strict={strict}: dynamic {} not within static {}",
                    trace.recorded_checks,
                    inferred
                );
                checked += 1;
            }
        }
    }
    let elapsed = t0.elapsed();
    assert!(elapsed.as_secs() < 600, "took {elapsed:?}, budget 10 min");
    println!(
        "[PASS] soundness: dynamic within static on 1000 bundles x {} configs ({elapsed:?})",
        checked / 1000
    );
}

/// Exactness: on 500 acyclic bundles with no virtual ambiguity and no
/// unresolved check sites, the static RTA inferred set equals exhaustive
/// execution. Zero mismatches, < 5 min.
#[test]
fn a3_exactness_on_acyclic_bundles() {
    let t0 = Instant::now();
    for seed in 5000..5500u64 {
        let spec = GenSpec {
            monomorphic: true,
            acyclic: true,
            ..suite_spec(seed)
        };
        let bundle = generate_corpus(seed, &spec).unwrap();
        let map = analyze_framework(
            &bundle.framework,
            &bundle.services,
            &bundle.sinks,
            &opts(Mode::Rta, false),
        )
        .unwrap();
        assert!(
            map.matrix.unresolved_rows.is_empty(),
            "seed {seed}: unresolved rows in a fully resolvable bundle"
        );
        let scan = analyze_app(
            &bundle.framework,
            &bundle.application,
            &bundle.manifest,
            &bundle.services,
            &bundle.sinks,
            &opts(Mode::Rta, false),
        )
        .unwrap();
        let inferred = inferred_set(&bundle, &map.matrix, &scan.av);

        let space = AnalysisSpace::build(
            &bundle.framework,
            Some(&bundle.application),
            &bundle.services,
            &bundle.sinks,
        )
        .unwrap();
        let exact = exact_required(&space, &bundle.manifest).unwrap();
        assert_eq!(
            inferred, exact,
            "seed {seed}: static {} differs from exhaustive execution {}",
            inferred, exact
        );
        assert_eq!(exact, bundle.ground_truth, "seed {seed}: planted truth diverged");
    }
    let elapsed = t0.elapsed();
    assert!(elapsed.as_secs() < 300, "took {elapsed:?}, budget 5 min");
    println!("[PASS] exactness: RTA inferred = exhaustive execution on 500 acyclic bundles ({elapsed:?})");
}

/// Precision ordering: the RTA inferred set is contained in the CHA one on
/// every corpus bundle, and the fixed suite contains at least one strict
/// inclusion. Zero violations.
#[test]
fn a4_precision_rta_within_cha() {
    let t0 = Instant::now();
    let mut strict_instances = 0usize;
    for seed in 0..1000u64 {
        let bundle = generate_corpus(seed, &suite_spec(seed)).unwrap();
        let mut sets = Vec::new();
        for mode in [Mode::Rta, Mode::Cha] {
            let map = analyze_framework(
                &bundle.framework,
                &bundle.services,
                &bundle.sinks,
                &opts(mode, false),
            )
            .unwrap();
            let scan = analyze_app(
                &bundle.framework,
                &bundle.application,
                &bundle.manifest,
                &bundle.services,
                &bundle.sinks,
                &opts(mode, false),
            )
            .unwrap();
            sets.push(inferred_set(&bundle, &map.matrix, &scan.av));
        }
        let (rta, cha) = (&sets[0], &sets[1]);
        assert!(rta.is_subset(cha), "seed {seed}: RTA {} escapes CHA {}", rta, cha);
        if rta != cha {
            strict_instances += 1;
        }
    }

    // The bundled precision fixtures are part of the fixed suite and
    // guarantee a strict instance.
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/precision");
    let read = |name: &str| std::fs::read(dir.join(name)).unwrap();
    let fw = parse_program(&read("framework.json")).unwrap();
    let app = parse_program(&read("app.json")).unwrap();
    let manifest = parse_manifest(&read("manifest.json")).unwrap();
    let st = parse_service_table(&read("services.json")).unwrap();
    let sc = parse_sink_config(&read("sinks.json")).unwrap();
    let mut fixture_sets = Vec::new();
    for mode in [Mode::Rta, Mode::Cha] {
        let map = analyze_framework(&fw, &st, &sc, &opts(mode, false)).unwrap();
        let scan = analyze_app(&fw, &app, &manifest, &st, &sc, &opts(mode, false)).unwrap();
        fixture_sets.push(multiply(&scan.av, &map.matrix).unwrap().to_set());
    }
    assert!(fixture_sets[0].is_subset(&fixture_sets[1]));
    if fixture_sets[0] != fixture_sets[1] {
        strict_instances += 1;
    }
    assert!(strict_instances >= 1, "no strict RTA-within-CHA instance in the fixed suite");

    let elapsed = t0.elapsed();
    println!(
        "[PASS] precision ordering: RTA within CHA on 1000 bundles, {strict_instances} strict ({elapsed:?})"
    );
}

/// Calculus equivalence: the packed AND/OR product equals brute-force
/// row-set union: exhaustively over all access vectors for 6x4 instances
/// (10^4 random matrices) and on 10^4 random larger instances.
#[test]
fn a5_calculus_equivalence() {
    let t0 = Instant::now();

    struct Mix(u64);
    impl Mix {
        fn next(&mut self) -> u64 {
            self.0 = self.0.wrapping_add(0x9e3779b97f4a7c15);
            let mut z = self.0;
            z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
            z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
            z ^ (z >> 31)
        }
        fn below(&mut self, n: usize) -> usize {
            (self.next() % n as u64) as usize
        }
    }

    fn matrix(rows: usize, cols: usize, fill: impl Fn(usize, usize) -> bool) -> PermissionAccessMatrix {
        let row_refs: Vec<MethodRef> =
            (0..rows).map(|i| MethodRef::new("C", format!("m{i:03}"), 0)).collect();
        let col_set = PermissionSet::from_iter((0..cols).map(|j| format!("q{j:03}")));
        let mut bits = permgap_core::bits::BitMatrix::zeros(rows, cols);
        for i in 0..rows {
            for j in 0..cols {
                if fill(i, j) {
                    bits.set(i, j);
                }
            }
        }
        PermissionAccessMatrix {
            rows: row_refs,
            cols: col_set,
            bits,
            unresolved_rows: BTreeSet::new(),
            mode: Mode::Cha,
            strict: false,
            framework: "calculus".into(),
            reflection_forced: false,
        }
    }

    fn union_oracle(m: &PermissionAccessMatrix, av: &AccessVector) -> PermissionSet {
        let mut out = PermissionSet::new();
        for i in av.bits.iter_ones() {
            out = out.union(&m.row_set(i));
        }
        out
    }

    let mut rng = Mix(0x5eed);
    let mut cases = 0u64;

    // Exhaustive over the 2^6 access vectors for each random 6x4 matrix.
    for _ in 0..10_000 {
        let cells = rng.next();
        let m = matrix(6, 4, |i, j| cells >> (i * 4 + j) & 1 == 1);
        for selection in 0..64u32 {
            let mut bits = permgap_core::bits::BitVec::zeros(6);
            for i in 0..6 {
                if selection >> i & 1 == 1 {
                    bits.set(i);
                }
            }
            let av = AccessVector { rows: m.rows.clone(), bits };
            let got = multiply(&av, &m).unwrap().to_set();
            assert_eq!(got, union_oracle(&m, &av));
            cases += 1;
        }
    }

    // Random larger instances.
    for _ in 0..10_000 {
        let rows = 1 + rng.below(64);
        let cols = 1 + rng.below(40);
        let mut filled = BTreeSet::new();
        for _ in 0..rng.below(rows * cols + 1) {
            filled.insert((rng.below(rows), rng.below(cols)));
        }
        let m = matrix(rows, cols, |i, j| filled.contains(&(i, j)));
        let mut bits = permgap_core::bits::BitVec::zeros(rows);
        for i in 0..rows {
            if rng.next() & 1 == 1 {
                bits.set(i);
            }
        }
        let av = AccessVector { rows: m.rows.clone(), bits };
        let got = multiply(&av, &m).unwrap().to_set();
        assert_eq!(got, union_oracle(&m, &av));
        cases += 1;
    }

    let elapsed = t0.elapsed();
    println!("[PASS] calculus equivalence: {cases} product/union comparisons agree ({elapsed:?})");
}

/// Identity discard safety: no check the interpreter records under caller
/// identity is ever discarded by the must-analysis. Zero violations.
#[test]
fn a6_identity_discard_safety() {
    let t0 = Instant::now();
    let exec_cfg = ExecConfig { loop_bound: 3, path_budget: 400, step_budget: 4_000 };
    let mut bundles_with_regions = 0usize;
    let mut discarded_total = 0usize;
    for seed in 2000..2300u64 {
        let spec = GenSpec {
            p_identity_region: 0.8,
            ..suite_spec(seed)
        };
        let bundle = generate_corpus(seed, &spec).unwrap();
        let space = AnalysisSpace::build(
            &bundle.framework,
            Some(&bundle.application),
            &bundle.services,
            &bundle.sinks,
        )
        .unwrap();

        // Collect every identity-discarded site over all entry graphs.
        let mut discarded: BTreeSet<(MethodRef, u32)> = BTreeSet::new();
        let fw_space =
            AnalysisSpace::build(&bundle.framework, None, &bundle.services, &bundle.sinks).unwrap();
        for &entry in fw_space.entry_rows() {
            let graph = build_id_graph(&fw_space, entry, Mode::Cha, None).unwrap();
            let sites = reachable_pep_sites_ids(&fw_space, &graph);
            let (dropped, _kept) = identity_discard(&fw_space, &sites);
            for r in dropped {
                discarded.insert((fw_space.method_ref(r.site.method), r.site.site_index));
            }
        }
        discarded_total += discarded.len();
        if !discarded.is_empty() {
            bundles_with_regions += 1;
        }

        let trace = execute(&space, &bundle.manifest, &exec_cfg).unwrap();
        for (method, site, perm) in &trace.recorded_sites {
            assert!(
                !discarded.contains(&(method.clone(), *site)),
                "seed {seed}: {method} site {site} recorded {perm} under caller identity \
                 but was discarded"
            );
        }
    }
    assert!(bundles_with_regions > 0, "corpus produced no discarded identity regions");
    let elapsed = t0.elapsed();
    println!(
        "[PASS] identity discard safety: {discarded_total} discarded sites across 300 bundles, \
         none dynamically recorded ({elapsed:?})"
    );
}

/// Determinism: map and gap outputs are byte-identical across three runs
/// and across one versus eight worker threads.
#[test]
fn a7_determinism_across_runs_and_jobs() {
    let t0 = Instant::now();
    let gen_dir = tmp("a7_bundle");
    let status = bin()
        .arg("gen")
        .arg("--seed")
        .arg("42")
        .arg("--out-dir")
        .arg(&gen_dir)
        .arg("--classes")
        .arg("30")
        .arg("--methods")
        .arg("120")
        .arg("--perms")
        .arg("12")
        .arg("--services")
        .arg("3")
        .output()
        .unwrap();
    assert!(status.status.success());

    for bundle in [sample_dir(), gen_dir] {
        let mut map_outputs = Vec::new();
        let mut gap_outputs = Vec::new();
        for jobs in ["1", "1", "1", "8"] {
            let map = bin()
                .arg("map")
                .arg("--bundle")
                .arg(&bundle)
                .arg("--jobs")
                .arg(jobs)
                .output()
                .unwrap();
            assert_eq!(map.status.code(), Some(0));
            map_outputs.push(map.stdout);
            let gap = bin()
                .arg("gap")
                .arg("--bundle")
                .arg(&bundle)
                .arg("--jobs")
                .arg(jobs)
                .output()
                .unwrap();
            assert!(matches!(gap.status.code(), Some(0) | Some(2)));
            gap_outputs.push(gap.stdout);
        }
        assert!(map_outputs.windows(2).all(|w| w[0] == w[1]), "map output varies");
        assert!(gap_outputs.windows(2).all(|w| w[0] == w[1]), "gap output varies");
    }
    let elapsed = t0.elapsed();
    println!("[PASS] determinism: map/gap byte-identical across 3 runs and jobs 1 vs 8 ({elapsed:?})");
}

/// Scale smoke test: a 10,000-method framework with 70 permissions maps in
/// RTA mode within five minutes.
#[test]
fn a8_scale_smoke_test() {
    let t0 = Instant::now();
    let dir = tmp("a8_scale");
    let status = bin()
        .arg("gen")
        .arg("--seed")
        .arg("777")
        .arg("--out-dir")
        .arg(&dir)
        .arg("--classes")
        .arg("1500")
        .arg("--methods")
        .arg("11000")
        .arg("--perms")
        .arg("70")
        .arg("--services")
        .arg("8")
        .output()
        .unwrap();
    assert!(status.status.success(), "{}", String::from_utf8_lossy(&status.stderr));
    let gen_elapsed = t0.elapsed();
    let fw: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.join("framework.json")).unwrap()).unwrap();
    let method_count: usize = fw["classes"]
        .as_array()
        .unwrap()
        .iter()
        .map(|c| c["methods"].as_array().unwrap().len())
        .sum();
    assert!(method_count >= 10_000, "framework has only {method_count} methods");

    let t1 = Instant::now();
    let map = bin()
        .arg("map")
        .arg("--bundle")
        .arg(&dir)
        .arg("--mode")
        .arg("rta")
        .arg("--jobs")
        .arg("8")
        .arg("--out")
        .arg(dir.join("map.json"))
        .output()
        .unwrap();
    assert_eq!(map.status.code(), Some(0), "{}", String::from_utf8_lossy(&map.stderr));
    let map_elapsed = t1.elapsed();
    assert!(
        map_elapsed.as_secs() < 300,
        "map took {map_elapsed:?}, budget 5 min"
    );

    let doc: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.join("map.json")).unwrap()).unwrap();
    let rows: usize = doc["rows"].as_array().unwrap().len();
    println!(
        "[PASS] scale smoke: {method_count} methods, {rows} entry points mapped in          {map_elapsed:?} (generation {gen_elapsed:?})"
    );
}
