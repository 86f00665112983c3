//! Seeded corpus generator for differential testing.
//!
//! Each bundle is a framework, an application, a manifest, a service table
//! and a sink configuration, generated deterministically from a seed, plus
//! the ground-truth permission set the application requires. Generated
//! programs exercise all three string-recovery scenarios (direct literal,
//! literal through a variable, array of literals), caller-passed permission
//! arguments, identity-cleared regions (full and mixed-entry), service
//! indirection, and virtual dispatch over class pairs; with `acyclic`
//! unset, bodies also contain loops and branch-guarded recursion.
//!
//! Ground truth comes from structural bookkeeping recorded while emitting
//! code ("planted" events), evaluated by a small reachability fixpoint that
//! is independent of the interpreter. Emission keeps planted truth exact:
//! every instruction is forward-reachable, every call site has a unique
//! dynamic target, permission locals are fresh per scenario, back-edges and
//! recursion are branch-guarded, and permission-parameter helpers are never
//! invoked under a cleared identity span. On acyclic bundles the planted
//! set is additionally asserted equal to exhaustive execution at
//! generation time.

use super::exact_required;
use crate::ir::{
    ArgShape, CheckSink, ClassDef, Instruction, InvokeKind, Manifest, MethodDef, MethodRef,
    PermissionSet, Program, ProgramKind, ServiceTable, SinkConfig, validate, validate_manifest,
};
use crate::space::AnalysisSpace;
use std::collections::{BTreeMap, BTreeSet};

#[derive(Debug, Clone, PartialEq)]
pub struct GenSpec {
    pub n_classes: usize,
    pub n_methods: usize,
    pub n_permissions: usize,
    pub n_services: usize,
    pub p_branch: f64,
    pub p_identity_region: f64,
    pub acyclic: bool,
    /// Restricts emission so static RTA analysis is exact: receivers match
    /// static target classes, override classes are never instantiated, and
    /// cleared regions contain only direct check calls.
    pub monomorphic: bool,
}

impl GenSpec {
    pub fn tiny(acyclic: bool) -> Self {
        GenSpec {
            n_classes: 6,
            n_methods: 18,
            n_permissions: 6,
            n_services: 1,
            p_branch: 0.4,
            p_identity_region: 0.35,
            acyclic,
            monomorphic: false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct CorpusBundle {
    pub framework: Program,
    pub application: Program,
    pub manifest: Manifest,
    pub services: ServiceTable,
    pub sinks: SinkConfig,
    pub ground_truth: PermissionSet,
}

#[derive(Debug, thiserror::Error)]
pub enum GenError {
    #[error("infeasible generator spec: {0}")]
    InfeasibleSpec(String),
    #[error("generator self-check failed: {0}")]
    SelfCheck(String),
}

/// SplitMix64; deterministic forever, no external dependency.
struct Rng(u64);

impl Rng {
    fn new(seed: u64) -> Self {
        Rng(seed.wrapping_add(0x9e3779b97f4a7c15))
    }

    fn next_u64(&mut self) -> u64 {
        self.0 = self.0.wrapping_add(0x9e3779b97f4a7c15);
        let mut z = self.0;
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
        z ^ (z >> 31)
    }

    fn below(&mut self, n: usize) -> usize {
        (self.next_u64() % n.max(1) as u64) as usize
    }

    fn range(&mut self, lo: usize, hi: usize) -> usize {
        lo + self.below(hi.saturating_sub(lo).max(1))
    }

    fn chance(&mut self, p: f64) -> bool {
        ((self.next_u64() >> 11) as f64 / (1u64 << 53) as f64) < p
    }
}

/// Identity span of an emitted event within its body.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Span {
    /// Outside any bracket before the first restore: flag = inherited.
    Never,
    /// Inside a full bracket: flag = cleared on every path.
    Always,
    /// Inside a mixed-entry bracket: flag = inherited or cleared.
    Mixed,
    /// After an unconditional restore: flag = caller on every path.
    After,
}

#[derive(Debug, Clone)]
enum PlantVal {
    Consts(BTreeSet<String>),
    Param(u32),
}

#[derive(Debug, Clone)]
enum PlantArg {
    Const(String),
    Param(u32),
}

#[derive(Debug, Clone)]
enum PlantEvent {
    Check { span: Span, values: PlantVal },
    Call { span: Span, callee: MethodRef, args: Vec<PlantArg> },
}

#[derive(Debug, Clone, Default)]
struct PlantBody {
    events: Vec<PlantEvent>,
}

type PlantMap = BTreeMap<MethodRef, PlantBody>;

fn flags_at(span: Span, inherited_caller: bool) -> Vec<bool> {
    match span {
        Span::Never => vec![inherited_caller],
        Span::Always => vec![false],
        Span::Mixed => {
            if inherited_caller {
                vec![true, false]
            } else {
                vec![false]
            }
        }
        Span::After => vec![true],
    }
}

/// The planted ground truth: permissions checked under caller identity on
/// some execution path from the roots.
fn planted_required(plants: &PlantMap, roots: &[MethodRef]) -> PermissionSet {
    // Reachability over (method, inherited-identity-is-caller).
    let mut reachable: BTreeSet<(MethodRef, bool)> = BTreeSet::new();
    let mut worklist: Vec<(MethodRef, bool)> = Vec::new();
    for root in roots {
        if reachable.insert((root.clone(), true)) {
            worklist.push((root.clone(), true));
        }
    }
    while let Some((method, inh)) = worklist.pop() {
        let Some(body) = plants.get(&method) else { continue };
        for event in &body.events {
            if let PlantEvent::Call { span, callee, .. } = event {
                for flag in flags_at(*span, inh) {
                    if reachable.insert((callee.clone(), flag)) {
                        worklist.push((callee.clone(), flag));
                    }
                }
            }
        }
    }

    // Values delivered into a permission parameter along caller-identity
    // chains. Parameter-forwarding chains are acyclic by construction.
    fn delivered(
        plants: &PlantMap,
        reachable: &BTreeSet<(MethodRef, bool)>,
        target: &MethodRef,
        param: u32,
        memo: &mut BTreeMap<(MethodRef, u32), BTreeSet<String>>,
    ) -> BTreeSet<String> {
        if let Some(hit) = memo.get(&(target.clone(), param)) {
            return hit.clone();
        }
        memo.insert((target.clone(), param), BTreeSet::new());
        let mut out = BTreeSet::new();
        for (caller, body) in plants {
            for event in &body.events {
                let PlantEvent::Call { span, callee, args } = event else { continue };
                if callee != target {
                    continue;
                }
                let caller_side_flags: Vec<bool> = [true, false]
                    .into_iter()
                    .filter(|inh| reachable.contains(&(caller.clone(), *inh)))
                    .flat_map(|inh| flags_at(*span, inh))
                    .collect();
                if !caller_side_flags.contains(&true) {
                    continue;
                }
                match args.get(param as usize) {
                    Some(PlantArg::Const(p)) => {
                        out.insert(p.clone());
                    }
                    Some(PlantArg::Param(j)) => {
                        out.extend(delivered(plants, reachable, caller, *j, memo));
                    }
                    None => {}
                }
            }
        }
        memo.insert((target.clone(), param), out.clone());
        out
    }

    let mut out: BTreeSet<String> = BTreeSet::new();
    let mut memo = BTreeMap::new();
    for (method, inh) in &reachable {
        let Some(body) = plants.get(method) else { continue };
        for event in &body.events {
            let PlantEvent::Check { span, values } = event else { continue };
            if !flags_at(*span, *inh).contains(&true) {
                continue;
            }
            match values {
                PlantVal::Consts(set) => out.extend(set.iter().cloned()),
                PlantVal::Param(i) => {
                    out.extend(delivered(plants, &reachable, method, *i, &mut memo));
                }
            }
        }
    }
    PermissionSet::from_iter(out)
}

/// Instruction-sequence builder tracking fresh locals, labels and the
/// identity suffix state of the body.
struct Body {
    arity: u32,
    next_local: u32,
    next_label: u32,
    instrs: Vec<Instruction>,
    /// Span for events emitted now, outside an explicit bracket.
    suffix: Span,
    events: Vec<PlantEvent>,
}

impl Body {
    fn new(arity: u32) -> Self {
        Body {
            arity,
            next_local: arity,
            next_label: 0,
            instrs: Vec::new(),
            suffix: Span::Never,
            events: Vec::new(),
        }
    }

    fn local(&mut self) -> u32 {
        let l = self.next_local;
        self.next_local += 1;
        l
    }

    fn label_name(&mut self) -> String {
        let l = self.next_label;
        self.next_label += 1;
        format!("L{l}")
    }

    fn const_str(&mut self, lit: &str) -> u32 {
        let dst = self.local();
        self.instrs.push(Instruction::ConstStr { dst, literal: lit.to_string() });
        dst
    }

    fn invoke_static(&mut self, target: MethodRef, args: Vec<u32>) {
        self.instrs.push(Instruction::Invoke {
            kind: InvokeKind::Static,
            target,
            receiver: None,
            args,
        });
    }

    fn finish(mut self) -> (MethodBody, Vec<PlantEvent>) {
        self.instrs.push(Instruction::Return);
        (MethodBody { locals: self.next_local - self.arity, instrs: self.instrs }, self.events)
    }
}

struct MethodBody {
    locals: u32,
    instrs: Vec<Instruction>,
}

pub fn generate_corpus(seed: u64, spec: &GenSpec) -> Result<CorpusBundle, GenError> {
    check_spec(spec)?;
    let mut g = Generator::new(seed, spec.clone());
    g.build_sinks();
    g.build_services();
    g.build_pairs();
    g.build_utils();
    g.build_apis();
    let framework = g.finish_framework();
    let (application, manifest) = g.build_application();

    let services = g.service_table.clone();
    let sinks = g.sink_config.clone();
    let ground_truth = planted_required(&g.plants, &manifest.roots);

    let bundle = CorpusBundle {
        framework,
        application,
        manifest: Manifest {
            app_name: manifest.app_name.clone(),
            declared: g.pick_declared(&ground_truth),
            roots: manifest.roots.clone(),
        },
        services,
        sinks,
        ground_truth,
    };
    self_check(&bundle, spec)?;
    Ok(bundle)
}

fn check_spec(spec: &GenSpec) -> Result<(), GenError> {
    if spec.n_permissions == 0 {
        return Err(GenError::InfeasibleSpec(
            "an empty permission vocabulary is rejected by the sink configuration".into(),
        ));
    }
    if spec.n_classes == 0 || spec.n_methods == 0 {
        return Err(GenError::InfeasibleSpec("class and method counts must be positive".into()));
    }
    if spec.n_services > spec.n_classes {
        return Err(GenError::InfeasibleSpec(format!(
            "{} services cannot fit in {} classes",
            spec.n_services, spec.n_classes
        )));
    }
    for (name, p) in [("p_branch", spec.p_branch), ("p_identity_region", spec.p_identity_region)] {
        if !(0.0..=1.0).contains(&p) {
            return Err(GenError::InfeasibleSpec(format!("{name} = {p} outside [0, 1]")));
        }
    }
    Ok(())
}

fn self_check(bundle: &CorpusBundle, spec: &GenSpec) -> Result<(), GenError> {
    let report = validate(&bundle.framework, None, Some(&bundle.services), &bundle.sinks);
    if !report.is_clean() {
        return Err(GenError::SelfCheck(format!("framework fails validation:\n{report}")));
    }
    let report =
        validate(&bundle.application, Some(&bundle.framework), Some(&bundle.services), &bundle.sinks);
    if !report.is_clean() {
        return Err(GenError::SelfCheck(format!("application fails validation:\n{report}")));
    }
    let report = validate_manifest(&bundle.manifest, &bundle.application, &bundle.sinks);
    if !report.is_clean() {
        return Err(GenError::SelfCheck(format!("manifest fails validation:\n{report}")));
    }
    if spec.acyclic {
        let space = AnalysisSpace::build(
            &bundle.framework,
            Some(&bundle.application),
            &bundle.services,
            &bundle.sinks,
        )
        .map_err(|e| GenError::SelfCheck(e.to_string()))?;
        let exact = exact_required(&space, &bundle.manifest)
            .map_err(|e| GenError::SelfCheck(format!("exhaustive execution failed: {e}")))?;
        if exact != bundle.ground_truth {
            return Err(GenError::SelfCheck(format!(
                "planted ground truth {} differs from exhaustive execution {}",
                bundle.ground_truth, exact
            )));
        }
    }
    Ok(())
}

/// A callable helper the generator may wire calls to.
#[derive(Debug, Clone)]
struct UtilMethod {
    target: MethodRef,
    layer: usize,
    /// Permission parameter index, for ascent helpers.
    perm_param: Option<u32>,
}

struct Generator {
    spec: GenSpec,
    rng: Rng,
    /// Remaining nondeterministic branches (bounded in acyclic mode so
    /// exhaustive execution stays tractable at generation time).
    branch_budget: u32,
    /// In acyclic mode every callee is wired from at most one live call
    /// site, keeping each body executed at most once per path.
    used_callees: BTreeSet<MethodRef>,
    vocabulary: Vec<String>,
    sink_config: SinkConfig,
    service_table: ServiceTable,
    fw_classes: Vec<ClassDef>,
    plants: PlantMap,
    /// Public API entry points the application may call, with receiver
    /// class for virtual calls (None = constructor call via direct).
    entry_menu: Vec<(MethodRef, EntryKind)>,
    utils: Vec<UtilMethod>,
    /// (interface method, impl method) per service op.
    service_ops: Vec<(MethodRef, MethodRef, String)>,
    /// (base vm, der vm) per dispatch pair.
    pairs: Vec<(MethodRef, MethodRef)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum EntryKind {
    Plain,
    Constructor,
}

impl Generator {
    fn new(seed: u64, spec: GenSpec) -> Self {
        let vocabulary: Vec<String> =
            (0..spec.n_permissions).map(|i| format!("perm.P{i:03}")).collect();
        let branch_budget = if spec.acyclic { 10 } else { u32::MAX };
        Generator {
            rng: Rng::new(seed),
            branch_budget,
            used_callees: BTreeSet::new(),
            spec,
            vocabulary,
            sink_config: SinkConfig {
                vocabulary: PermissionSet::new(),
                check_sinks: vec![],
                clear_identity_sig: MethodRef::new("Sys", "clearId", 0),
                restore_identity_sig: MethodRef::new("Sys", "restoreId", 0),
            },
            service_table: ServiceTable::default(),
            fw_classes: Vec::new(),
            plants: PlantMap::new(),
            entry_menu: Vec::new(),
            utils: Vec::new(),
            service_ops: Vec::new(),
            pairs: Vec::new(),
        }
    }

    fn perm(&mut self) -> String {
        self.vocabulary[self.rng.below(self.vocabulary.len())].clone()
    }

    fn take_branch(&mut self) -> bool {
        if self.branch_budget == 0 {
            return false;
        }
        if self.branch_budget != u32::MAX {
            self.branch_budget -= 1;
        }
        true
    }

    /// Claims a callee for a live call site; in acyclic mode each callee
    /// may only be claimed once.
    fn claim(&mut self, target: &MethodRef) -> bool {
        if !self.spec.acyclic {
            return true;
        }
        self.used_callees.insert(target.clone())
    }

    fn stub_method(name: &str, arity: u32, public: bool) -> MethodDef {
        MethodDef {
            name: name.to_string(),
            arity,
            is_public: public,
            is_constructor: false,
            locals: 0,
            body: vec![Instruction::Return],
        }
    }

    fn build_sinks(&mut self) {
        self.sink_config.vocabulary = PermissionSet::from_iter(self.vocabulary.clone());
        self.sink_config.check_sinks = vec![
            CheckSink {
                signature: MethodRef::new("Sys", "check", 1),
                perm_arg_index: 0,
                arg_shape: ArgShape::Single,
            },
            CheckSink {
                signature: MethodRef::new("Sys", "check2", 2),
                perm_arg_index: 1,
                arg_shape: ArgShape::Single,
            },
            CheckSink {
                signature: MethodRef::new("Sys", "checkArr", 1),
                perm_arg_index: 0,
                arg_shape: ArgShape::Array,
            },
        ];
        self.fw_classes.push(ClassDef {
            name: "Sys".into(),
            superclass: None,
            interfaces: vec![],
            is_public: false,
            methods: vec![
                Self::stub_method("check", 1, true),
                Self::stub_method("check2", 2, true),
                Self::stub_method("checkArr", 1, true),
                Self::stub_method("clearId", 0, true),
                Self::stub_method("restoreId", 0, true),
            ],
        });
    }

    fn build_services(&mut self) {
        for k in 0..self.spec.n_services {
            let iface = format!("ISvc{k:02}");
            let imp = format!("SvcImpl{k:02}");
            let svc_name = format!("svc{k:02}");
            let n_ops = self.rng.range(1, 3);
            let mut iface_methods = Vec::new();
            let mut impl_methods = Vec::new();
            for j in 0..n_ops {
                let op = format!("op{j}");
                iface_methods.push(Self::stub_method(&op, 0, true));
                let (body, events) = self.leaf_body(0, true);
                let impl_ref = MethodRef::new(imp.clone(), op.clone(), 0);
                self.plants.insert(impl_ref.clone(), PlantBody { events });
                impl_methods.push(MethodDef {
                    name: op.clone(),
                    arity: 0,
                    is_public: true,
                    is_constructor: false,
                    locals: body.locals,
                    body: body.instrs,
                });
                self.service_ops.push((
                    MethodRef::new(iface.clone(), op, 0),
                    impl_ref,
                    svc_name.clone(),
                ));
            }
            self.fw_classes.push(ClassDef {
                name: iface.clone(),
                superclass: None,
                interfaces: vec![],
                is_public: true,
                methods: iface_methods,
            });
            self.fw_classes.push(ClassDef {
                name: imp.clone(),
                superclass: Some(iface),
                interfaces: vec![],
                is_public: false,
                methods: impl_methods,
            });
            self.service_table.bindings.insert(svc_name, imp.clone());
            self.service_table.init_classes.push(imp);
        }
        self.service_table.init_classes.sort();
    }

    fn remaining_classes(&self) -> usize {
        self.spec.n_classes.saturating_sub(2 * self.spec.n_services)
    }

    fn methods_per_class(&self) -> usize {
        (self.spec.n_methods / self.spec.n_classes.max(1)).clamp(1, 8)
    }

    fn build_pairs(&mut self) {
        let n_pairs = (self.remaining_classes() / 6).min(40);
        for i in 0..n_pairs {
            let base = format!("Base{i:02}");
            let der = format!("Der{i:02}");
            let (base_body, base_events) = self.leaf_body(0, false);
            let (der_body, der_events) = self.leaf_body(0, false);
            let base_vm = MethodRef::new(base.clone(), "vm", 0);
            let der_vm = MethodRef::new(der.clone(), "vm", 0);
            self.plants.insert(base_vm.clone(), PlantBody { events: base_events });
            self.plants.insert(der_vm.clone(), PlantBody { events: der_events });
            self.fw_classes.push(ClassDef {
                name: base.clone(),
                superclass: None,
                interfaces: vec![],
                is_public: true,
                methods: vec![MethodDef {
                    name: "vm".into(),
                    arity: 0,
                    is_public: true,
                    is_constructor: false,
                    locals: base_body.locals,
                    body: base_body.instrs,
                }],
            });
            self.fw_classes.push(ClassDef {
                name: der,
                superclass: Some(base),
                interfaces: vec![],
                is_public: true,
                methods: vec![MethodDef {
                    name: "vm".into(),
                    arity: 0,
                    is_public: true,
                    is_constructor: false,
                    locals: der_body.locals,
                    body: der_body.instrs,
                }],
            });
            self.pairs.push((base_vm, der_vm));
        }
    }

    /// Leaf framework body: direct check scenarios and identity brackets
    /// only, no outgoing calls. `allow_bracket` gates identity regions.
    fn leaf_body(&mut self, arity: u32, allow_bracket: bool) -> (MethodBody, Vec<PlantEvent>) {
        let mut b = Body::new(arity);
        let n_actions = self.rng.range(0, 3);
        for _ in 0..n_actions {
            if allow_bracket && self.rng.chance(self.spec.p_identity_region) {
                self.emit_bracket_with_checks(&mut b);
            } else {
                self.emit_check_scenario(&mut b);
            }
        }
        b.finish()
    }

    /// One of the three string scenarios, on fresh locals, at the current
    /// suffix span. Decoy checks (a non-vocabulary string reaching a sink)
    /// are statically unresolvable, so monomorphic bundles skip
    /// them to stay fully resolvable.
    fn emit_check_scenario(&mut self, b: &mut Body) {
        let span = b.suffix;
        let choices = if self.spec.monomorphic { 3 } else { 4 };
        match self.rng.below(choices) {
            0 => {
                // Literal passed directly.
                let p = self.perm();
                let v = b.const_str(&p);
                b.invoke_static(MethodRef::new("Sys", "check", 1), vec![v]);
                b.events.push(PlantEvent::Check {
                    span,
                    values: PlantVal::Consts(BTreeSet::from([p])),
                });
            }
            1 => {
                // Literal initialized in a variable first; the second sink
                // argument position is exercised here too.
                let p = self.perm();
                let tmp = b.const_str(&p);
                let v = b.local();
                b.instrs.push(Instruction::Move { dst: v, src: tmp });
                let pad = b.const_str("ctx");
                b.invoke_static(MethodRef::new("Sys", "check2", 2), vec![pad, v]);
                b.events.push(PlantEvent::Check {
                    span,
                    values: PlantVal::Consts(BTreeSet::from([p])),
                });
            }
            2 => {
                // Array initialized with several permissions.
                let n = self.rng.range(1, 4);
                let arr = b.local();
                b.instrs.push(Instruction::ArrayNew { dst: arr, length: n as u32 });
                let mut planted = BTreeSet::new();
                for slot in 0..n {
                    let p = self.perm();
                    let v = b.const_str(&p);
                    b.instrs.push(Instruction::ArrayStore {
                        array: arr,
                        index: slot as u32,
                        src: v,
                    });
                    planted.insert(p);
                }
                b.invoke_static(MethodRef::new("Sys", "checkArr", 1), vec![arr]);
                b.events.push(PlantEvent::Check { span, values: PlantVal::Consts(planted) });
            }
            _ => {
                // Decoy: a non-vocabulary string reaches the sink and must
                // contribute nothing anywhere.
                let v = b.const_str("not.a.permission");
                b.invoke_static(MethodRef::new("Sys", "check", 1), vec![v]);
            }
        }
    }

    /// A full or mixed-entry identity bracket containing only direct check
    /// scenarios; the suffix state becomes `After` once closed.
    fn emit_bracket_with_checks(&mut self, b: &mut Body) {
        let mixed = !self.rng.chance(0.6) && self.take_branch();
        let skip = if mixed {
            let label = b.label_name();
            b.instrs.push(Instruction::Branch { label: label.clone() });
            Some(label)
        } else {
            None
        };
        b.invoke_static(MethodRef::new("Sys", "clearId", 0), vec![]);
        if let Some(label) = skip {
            b.instrs.push(Instruction::Label { name: label });
        }
        let saved = b.suffix;
        b.suffix = if mixed { Span::Mixed } else { Span::Always };
        let n = self.rng.range(1, 3);
        for _ in 0..n {
            self.emit_check_scenario(b);
        }
        b.invoke_static(MethodRef::new("Sys", "restoreId", 0), vec![]);
        let _ = saved;
        b.suffix = Span::After;
    }

    fn build_utils(&mut self) {
        let n_util_classes = (self.remaining_classes() / 4).max(1);
        let per_class = self.methods_per_class();
        let layers = 3usize;
        // Declare all utility methods first so bodies can call forward.
        let mut decls: Vec<(String, String, u32, usize, Option<u32>)> = Vec::new();
        for c in 0..n_util_classes {
            let class = format!("Util{c:02}");
            for m in 0..per_class {
                let layer = self.rng.below(layers);
                let perm_param = if self.rng.chance(0.3) { Some(0) } else { None };
                let arity = if perm_param.is_some() { 1 } else { 0 };
                let name = format!("u{m}");
                decls.push((class.clone(), name.clone(), arity, layer, perm_param));
                self.utils.push(UtilMethod {
                    target: MethodRef::new(class.clone(), name, arity),
                    layer,
                    perm_param,
                });
            }
        }
        let utils = self.utils.clone();
        let mut classes: BTreeMap<String, Vec<MethodDef>> = BTreeMap::new();
        for (class, name, arity, layer, perm_param) in decls {
            let target = MethodRef::new(class.clone(), name.clone(), arity);
            let (body, events) = self.util_body(&target, arity, layer, perm_param, &utils);
            self.plants.insert(target, PlantBody { events });
            classes.entry(class).or_default().push(MethodDef {
                name,
                arity,
                is_public: true,
                is_constructor: false,
                locals: body.locals,
                body: body.instrs,
            });
        }
        for (name, methods) in classes {
            self.fw_classes.push(ClassDef {
                name,
                superclass: None,
                interfaces: vec![],
                is_public: false,
                methods,
            });
        }
    }

    /// Emits a call to an ascent helper, passing either a fresh constant or
    /// (when the caller itself has a permission parameter) that parameter.
    fn emit_helper_call(&mut self, b: &mut Body, helper: &UtilMethod, own_perm_param: Option<u32>) {
        debug_assert!(b.suffix != Span::Always && b.suffix != Span::Mixed);
        let span = b.suffix;
        let (arg_local, plant_arg) = match own_perm_param {
            Some(p) if self.rng.chance(0.4) => (p, PlantArg::Param(p)),
            _ => {
                let perm = self.perm();
                (b.const_str(&perm), PlantArg::Const(perm))
            }
        };
        b.invoke_static(helper.target.clone(), vec![arg_local]);
        b.events.push(PlantEvent::Call {
            span,
            callee: helper.target.clone(),
            args: vec![plant_arg],
        });
    }

    fn emit_plain_call(&mut self, b: &mut Body, target: &MethodRef) {
        let span = b.suffix;
        b.invoke_static(target.clone(), vec![]);
        b.events.push(PlantEvent::Call { span, callee: target.clone(), args: vec![] });
    }

    /// A loop whose body carries one check scenario; the back edge is a
    /// nondeterministic branch so every iteration count terminates.
    fn emit_loop_with_check(&mut self, b: &mut Body) {
        let label = b.label_name();
        b.instrs.push(Instruction::Label { name: label.clone() });
        self.emit_check_scenario(b);
        b.instrs.push(Instruction::Branch { label });
    }

    fn util_body(
        &mut self,
        own: &MethodRef,
        arity: u32,
        layer: usize,
        perm_param: Option<u32>,
        utils: &[UtilMethod],
    ) -> (MethodBody, Vec<PlantEvent>) {
        let mut b = Body::new(arity);
        if let Some(p) = perm_param {
            // The parameter-fed check that caller ascent must resolve.
            b.invoke_static(MethodRef::new("Sys", "check", 1), vec![p]);
            b.events.push(PlantEvent::Check { span: b.suffix, values: PlantVal::Param(p) });
        }
        let deeper: Vec<UtilMethod> =
            utils.iter().filter(|u| u.layer > layer).cloned().collect();
        let n_actions = self.rng.range(1, 4);
        for _ in 0..n_actions {
            match self.rng.below(6) {
                0 | 1 => self.emit_check_scenario(&mut b),
                2 if !deeper.is_empty() => {
                    let callee = deeper[self.rng.below(deeper.len())].clone();
                    if !self.claim(&callee.target) {
                        continue;
                    }
                    if callee.perm_param.is_some() {
                        if b.suffix == Span::Never || b.suffix == Span::After {
                            self.emit_helper_call(&mut b, &callee, perm_param);
                        }
                    } else {
                        self.emit_plain_call(&mut b, &callee.target);
                    }
                }
                3 if self.rng.chance(self.spec.p_identity_region) => {
                    self.emit_bracket_with_checks(&mut b);
                }
                4 if !self.spec.acyclic && self.rng.chance(self.spec.p_branch) => {
                    self.emit_loop_with_check(&mut b);
                }
                5 if !self.spec.acyclic && perm_param.is_none() && self.rng.chance(0.5) => {
                    // Branch-guarded self-recursion.
                    let skip = b.label_name();
                    b.instrs.push(Instruction::Branch { label: skip.clone() });
                    b.invoke_static(own.clone(), vec![]);
                    b.events.push(PlantEvent::Call {
                        span: b.suffix,
                        callee: own.clone(),
                        args: vec![],
                    });
                    b.instrs.push(Instruction::Label { name: skip });
                }
                _ => self.emit_check_scenario(&mut b),
            }
        }
        b.finish()
    }

    fn build_apis(&mut self) {
        let n_pairs = self.pairs.len();
        let n_util_classes = (self.remaining_classes() / 4).max(1);
        let n_api_classes = self
            .remaining_classes()
            .saturating_sub(2 * n_pairs + n_util_classes)
            .max(1);
        // Spend the rest of the method budget here so the bundle lands near
        // the requested total.
        let emitted: usize = self.fw_classes.iter().map(|c| c.methods.len()).sum();
        let per_class =
            (self.spec.n_methods.saturating_sub(emitted) / n_api_classes).clamp(1, 12);
        let utils = self.utils.clone();
        let service_ops = self.service_ops.clone();
        let pairs = self.pairs.clone();

        for c in 0..n_api_classes {
            let class = format!("Api{c:02}");
            let mut methods = Vec::new();
            if self.rng.chance(0.25) {
                // A public constructor entry with a simple check.
                let (body, events) = self.leaf_body(0, false);
                let ctor = MethodRef::new(class.clone(), "init", 0);
                self.plants.insert(ctor.clone(), PlantBody { events });
                methods.push(MethodDef {
                    name: "init".into(),
                    arity: 0,
                    is_public: true,
                    is_constructor: true,
                    locals: body.locals,
                    body: body.instrs,
                });
                self.entry_menu.push((ctor, EntryKind::Constructor));
            }
            for m in 0..per_class {
                let name = format!("e{m}");
                let target = MethodRef::new(class.clone(), name.clone(), 0);
                let (body, events) = self.api_body(&utils, &service_ops, &pairs);
                self.plants.insert(target.clone(), PlantBody { events });
                methods.push(MethodDef {
                    name,
                    arity: 0,
                    is_public: true,
                    is_constructor: false,
                    locals: body.locals,
                    body: body.instrs,
                });
                self.entry_menu.push((target, EntryKind::Plain));
            }
            self.fw_classes.push(ClassDef {
                name: class,
                superclass: None,
                interfaces: vec![],
                is_public: true,
                methods,
            });
        }
    }

    /// Public API method body: the entry points the mapper analyzes.
    fn api_body(
        &mut self,
        utils: &[UtilMethod],
        service_ops: &[(MethodRef, MethodRef, String)],
        pairs: &[(MethodRef, MethodRef)],
    ) -> (MethodBody, Vec<PlantEvent>) {
        let mut b = Body::new(0);
        let n_actions = self.rng.range(1, 5);
        for _ in 0..n_actions {
            match self.rng.below(7) {
                0 => self.emit_check_scenario(&mut b),
                1 if !utils.is_empty() => {
                    let callee = utils[self.rng.below(utils.len())].clone();
                    if !self.claim(&callee.target) {
                        continue;
                    }
                    if callee.perm_param.is_some() {
                        if b.suffix == Span::Never || b.suffix == Span::After {
                            self.emit_helper_call(&mut b, &callee, None);
                        }
                    } else {
                        self.emit_plain_call(&mut b, &callee.target);
                    }
                }
                2 if !service_ops.is_empty() => {
                    // Service indirection: lookup plus a virtual call that
                    // redirects to the bound implementation.
                    let (iface_op, impl_op, svc) =
                        service_ops[self.rng.below(service_ops.len())].clone();
                    if !self.claim(&impl_op) {
                        continue;
                    }
                    let span = b.suffix;
                    let handle = b.local();
                    b.instrs
                        .push(Instruction::GetService { dst: handle, service: svc });
                    b.instrs.push(Instruction::Invoke {
                        kind: InvokeKind::Virtual,
                        target: iface_op,
                        receiver: Some(handle),
                        args: vec![],
                    });
                    b.events.push(PlantEvent::Call { span, callee: impl_op, args: vec![] });
                }
                3 if !pairs.is_empty() => {
                    // Virtual dispatch over a base/override pair. The
                    // runtime receiver class is unique per site; in
                    // monomorphic mode the override is never instantiated.
                    let (base_vm, der_vm) = pairs[self.rng.below(pairs.len())].clone();
                    let use_der = !self.spec.monomorphic && self.rng.chance(0.5);
                    let claim_target = if use_der { &der_vm } else { &base_vm };
                    if !self.claim(&claim_target.clone()) {
                        continue;
                    }
                    let span = b.suffix;
                    let runtime_class =
                        if use_der { der_vm.class.clone() } else { base_vm.class.clone() };
                    let recv = b.local();
                    b.instrs.push(Instruction::NewObj { dst: recv, class: runtime_class });
                    b.instrs.push(Instruction::Invoke {
                        kind: InvokeKind::Virtual,
                        target: base_vm.clone(),
                        receiver: Some(recv),
                        args: vec![],
                    });
                    let callee = if use_der { der_vm } else { base_vm };
                    b.events.push(PlantEvent::Call { span, callee, args: vec![] });
                }
                4 if self.rng.chance(self.spec.p_identity_region) => {
                    if self.spec.monomorphic {
                        self.emit_bracket_with_checks(&mut b);
                    } else {
                        self.emit_bracket_with_calls(&mut b, utils);
                    }
                }
                5 if self.rng.chance(self.spec.p_branch) && self.take_branch() => {
                    // A branch-guarded check: reachable on the fallthrough
                    // path, skipped on the other.
                    let skip = b.label_name();
                    b.instrs.push(Instruction::Branch { label: skip.clone() });
                    self.emit_check_scenario(&mut b);
                    b.instrs.push(Instruction::Label { name: skip });
                }
                _ => self.emit_check_scenario(&mut b),
            }
        }
        b.finish()
    }

    /// A bracket that may also call parameterless utilities: their checks
    /// run under the service identity at runtime while the intra-procedural
    /// discard cannot remove them; the static side keeps them, which is
    /// the sound direction.
    fn emit_bracket_with_calls(&mut self, b: &mut Body, utils: &[UtilMethod]) {
        let mixed = !self.rng.chance(0.6) && self.take_branch();
        let skip = if mixed {
            let label = b.label_name();
            b.instrs.push(Instruction::Branch { label: label.clone() });
            Some(label)
        } else {
            None
        };
        b.invoke_static(MethodRef::new("Sys", "clearId", 0), vec![]);
        if let Some(label) = skip {
            b.instrs.push(Instruction::Label { name: label });
        }
        b.suffix = if mixed { Span::Mixed } else { Span::Always };
        let plain: Vec<UtilMethod> =
            utils.iter().filter(|u| u.perm_param.is_none()).cloned().collect();
        let n = self.rng.range(1, 3);
        for _ in 0..n {
            if !plain.is_empty() && self.rng.chance(0.5) {
                let callee = plain[self.rng.below(plain.len())].target.clone();
                self.emit_plain_call(b, &callee);
            } else {
                self.emit_check_scenario(b);
            }
        }
        b.invoke_static(MethodRef::new("Sys", "restoreId", 0), vec![]);
        b.suffix = Span::After;
    }

    fn finish_framework(&mut self) -> Program {
        Program {
            kind: ProgramKind::Framework,
            name: "genfw".into(),
            classes: std::mem::take(&mut self.fw_classes),
        }
    }

    fn build_application(&mut self) -> (Program, Manifest) {
        let mut classes = Vec::new();
        let mut main_body = Body::new(0);
        let menu = self.entry_menu.clone();
        let pairs = self.pairs.clone();
        let n_calls = self.rng.range(1, 6).min(menu.len().max(1));

        for _ in 0..n_calls {
            if menu.is_empty() {
                break;
            }
            let (entry, kind) = menu[self.rng.below(menu.len())].clone();
            if !self.claim(&entry) {
                continue;
            }
            self.emit_app_entry_call(&mut main_body, &entry, kind);
        }
        let pair_callee_claimed = if pairs.is_empty() {
            false
        } else {
            self.rng.chance(0.5)
        };
        if pair_callee_claimed {
            // Boundary virtual dispatch on a public pair; in monomorphic
            // mode only the base class is ever instantiated.
            let (base_vm, der_vm) = pairs[self.rng.below(pairs.len())].clone();
            let use_der = !self.spec.monomorphic && self.rng.chance(0.5);
            let dynamic_callee = if use_der { der_vm.clone() } else { base_vm.clone() };
            if self.claim(&dynamic_callee) {
            let runtime_class = if use_der { der_vm.class.clone() } else { base_vm.class.clone() };
            let recv = main_body.local();
            main_body.instrs.push(Instruction::NewObj { dst: recv, class: runtime_class });
            main_body.instrs.push(Instruction::Invoke {
                kind: InvokeKind::Virtual,
                target: base_vm.clone(),
                receiver: Some(recv),
                args: vec![],
            });
            main_body.events.push(PlantEvent::Call {
                span: main_body.suffix,
                callee: dynamic_callee,
                args: vec![],
            });
            }
        }
        // An internal helper method reached from main.
        let helper_ref = MethodRef::new("AppWork", "go", 0);
        main_body.invoke_static(helper_ref.clone(), vec![]);
        main_body.events.push(PlantEvent::Call {
            span: main_body.suffix,
            callee: helper_ref.clone(),
            args: vec![],
        });
        let (main_def, main_events) = main_body.finish();
        let main_ref = MethodRef::new("AppMain", "main", 0);
        self.plants.insert(main_ref.clone(), PlantBody { events: main_events });

        let mut helper_body = Body::new(0);
        if !menu.is_empty() && self.rng.chance(0.8) {
            let (entry, kind) = menu[self.rng.below(menu.len())].clone();
            if self.claim(&entry) {
                self.emit_app_entry_call(&mut helper_body, &entry, kind);
            }
        }
        let (helper_def, helper_events) = helper_body.finish();
        self.plants.insert(helper_ref, PlantBody { events: helper_events });

        // Dead code: a method never reached from the roots that still
        // invokes an entry point; the syntactic usage check sees it, the
        // reachability scan must not.
        let mut dead_body = Body::new(0);
        if !menu.is_empty() {
            let (entry, kind) = menu[self.rng.below(menu.len())].clone();
            self.emit_app_entry_call(&mut dead_body, &entry, kind);
        }
        let (dead_def, _) = dead_body.finish();

        let mut roots = vec![main_ref];
        let mut appmain_methods = vec![MethodDef {
            name: "main".into(),
            arity: 0,
            is_public: true,
            is_constructor: false,
            locals: main_def.locals,
            body: main_def.instrs,
        }];
        if !menu.is_empty() && self.rng.chance(0.3) {
            // A second component root, unioned into the same scan.
            let mut second = Body::new(0);
            let (entry, kind) = menu[self.rng.below(menu.len())].clone();
            if self.claim(&entry) {
                self.emit_app_entry_call(&mut second, &entry, kind);
            }
            let (second_def, second_events) = second.finish();
            let second_ref = MethodRef::new("AppMain", "onEvent", 0);
            self.plants.insert(second_ref.clone(), PlantBody { events: second_events });
            appmain_methods.push(MethodDef {
                name: "onEvent".into(),
                arity: 0,
                is_public: true,
                is_constructor: false,
                locals: second_def.locals,
                body: second_def.instrs,
            });
            roots.push(second_ref);
        }
        roots.sort();

        classes.push(ClassDef {
            name: "AppMain".into(),
            superclass: None,
            interfaces: vec![],
            is_public: true,
            methods: appmain_methods,
        });
        classes.push(ClassDef {
            name: "AppWork".into(),
            superclass: None,
            interfaces: vec![],
            is_public: false,
            methods: vec![
                MethodDef {
                    name: "go".into(),
                    arity: 0,
                    is_public: true,
                    is_constructor: false,
                    locals: helper_def.locals,
                    body: helper_def.instrs,
                },
                MethodDef {
                    name: "deadCode".into(),
                    arity: 0,
                    is_public: false,
                    is_constructor: false,
                    locals: dead_def.locals,
                    body: dead_def.instrs,
                },
            ],
        });

        let app = Program { kind: ProgramKind::Application, name: "genapp".into(), classes };
        let manifest =
            Manifest { app_name: "genapp".into(), declared: PermissionSet::new(), roots };
        (app, manifest)
    }

    fn emit_app_entry_call(&mut self, b: &mut Body, entry: &MethodRef, kind: EntryKind) {
        let span = b.suffix;
        let recv = b.local();
        b.instrs.push(Instruction::NewObj { dst: recv, class: entry.class.clone() });
        b.instrs.push(Instruction::Invoke {
            kind: if kind == EntryKind::Constructor { InvokeKind::Direct } else { InvokeKind::Virtual },
            target: entry.clone(),
            receiver: Some(recv),
            args: vec![],
        });
        b.events.push(PlantEvent::Call { span, callee: entry.clone(), args: vec![] });
    }

    /// Declared set: the ground truth, sometimes with one required
    /// permission dropped (a missing declaration) and sometimes with extra
    /// unused permissions (a gap).
    fn pick_declared(&mut self, ground_truth: &PermissionSet) -> PermissionSet {
        let mut declared: Vec<String> = ground_truth.iter().map(str::to_string).collect();
        if !declared.is_empty() && self.rng.chance(0.25) {
            let drop = self.rng.below(declared.len());
            declared.remove(drop);
        }
        let n_extra = self.rng.below(3);
        for _ in 0..n_extra {
            let p = self.perm();
            if !ground_truth.contains(&p) {
                declared.push(p);
            }
        }
        PermissionSet::from_iter(declared)
    }
}
