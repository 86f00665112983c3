//! Bounded exhaustive interpreter over PBIR.
//!
//! Execution explores every outcome of each nondeterministic branch via
//! depth-first search over forked machine states, within configurable
//! budgets. The union of permission checks observed under caller identity
//! across all explored paths is the dynamic, under-approximating
//! counterpart of the statically inferred permission set. On loop-free
//! programs with unbounded budgets exploration is complete and yields the
//! exact required permission set.
//!
//! Semantics notes: virtual dispatch walks the receiver's runtime class
//! chain (runtime classes come from `new_obj` and from `get_service`, which
//! instantiates the bound implementation class); arrays pass by value
//! between frames (copy-on-write, callee stores stay invisible to the
//! caller); the identity flag is per frame, inherited by callees, mutated
//! by calls whose static target is the configured clear/restore signature,
//! and restored on return. No type discipline exists beyond arity, so a
//! receiver of an unrelated class may dispatch to any matching signature it
//! reaches; validated type-correct inputs never do.

pub mod corpus;

use crate::ir::{
    ArgShape, DynamicFeatures, Instruction, InvokeKind, Manifest, MethodRef, PermissionSet,
    has_dynamic_features,
};
use crate::pep::build_unit_graph;
use crate::space::{AnalysisSpace, ClassId, MethodId};
use std::collections::{BTreeMap, BTreeSet};
use std::rc::Rc;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ExecConfig {
    /// Maximum visits of each label per frame activation on one path.
    pub loop_bound: u32,
    /// Maximum number of explored paths across all roots.
    pub path_budget: u64,
    /// Maximum instructions executed along one path.
    pub step_budget: u64,
}

impl Default for ExecConfig {
    fn default() -> Self {
        Self { loop_bound: 3, path_budget: 100_000, step_budget: 10_000 }
    }
}

impl ExecConfig {
    pub const UNBOUNDED: ExecConfig =
        ExecConfig { loop_bound: u32::MAX, path_budget: u64::MAX, step_budget: u64::MAX };
}

/// What one execution observed.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ExecTrace {
    /// Permissions checked under caller identity, across all paths.
    pub recorded_checks: PermissionSet,
    /// Framework entry points invoked from application code.
    pub invoked_entries: BTreeSet<MethodRef>,
    /// True when a path or step budget cut exploration short. Loop-bound
    /// pruning does not set this: exploration is complete *under* the bound.
    pub exhausted: bool,
    /// `(method, site, permission)` for every caller-identity check, kept
    /// in memory for differential tests; not part of the wire format.
    pub recorded_sites: BTreeSet<(MethodRef, u32, String)>,
    /// Every method that gained a frame, kept in memory for differential
    /// tests; not part of the wire format.
    pub executed_methods: BTreeSet<MethodRef>,
}

impl ExecTrace {
    pub fn to_json(&self) -> String {
        #[derive(serde::Serialize)]
        struct Doc<'a> {
            checks: &'a PermissionSet,
            entries: Vec<String>,
            exhausted: bool,
        }
        let doc = Doc {
            checks: &self.recorded_checks,
            entries: self.invoked_entries.iter().map(|m| m.to_string()).collect(),
            exhausted: self.exhausted,
        };
        let mut s = serde_json::to_string_pretty(&doc).expect("serialization cannot fail");
        s.push('\n');
        s
    }

    pub fn from_json(bytes: &[u8]) -> Result<Self, serde_json::Error> {
        #[derive(serde::Deserialize)]
        struct Doc {
            checks: PermissionSet,
            entries: Vec<MethodRef>,
            exhausted: bool,
        }
        let doc: Doc = serde_json::from_slice(bytes)?;
        Ok(ExecTrace {
            recorded_checks: doc.checks,
            invoked_entries: doc.entries.into_iter().collect(),
            exhausted: doc.exhausted,
            recorded_sites: BTreeSet::new(),
            executed_methods: BTreeSet::new(),
        })
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ExecError {
    #[error("invalid execution config: {0}")]
    BadConfig(String),
    #[error("program uses dynamic features in {0:?}; the interpreter refuses")]
    DynamicFeatures(Vec<MethodRef>),
    #[error("root {0} does not resolve")]
    UnresolvedRoot(MethodRef),
    #[error("{method} body[{index}]: read of uninitialized local {local}")]
    UninitializedLocal { method: MethodRef, index: usize, local: u32 },
    #[error("{method} body[{index}]: {message}")]
    BadValue { method: MethodRef, index: usize, message: String },
    #[error("{method} body[{index}]: array index {array_index} out of bounds ({len})")]
    ArrayOutOfBounds { method: MethodRef, index: usize, array_index: u32, len: usize },
    #[error("{method} body[{index}]: no implementation found for {target}")]
    DispatchFailure { method: MethodRef, index: usize, target: MethodRef },
    #[error("{method} body[{index}]: unbound service {service:?}")]
    UnboundService { method: MethodRef, index: usize, service: String },
    #[error("program is not loop-free: {0}")]
    NotLoopFree(String),
}

#[derive(Debug, Clone)]
enum Value {
    Uninit,
    Str(Rc<str>),
    Arr(Rc<Vec<Option<Rc<str>>>>),
    Obj(ClassId),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Identity {
    Caller,
    Cleared,
}

#[derive(Debug, Clone)]
struct Frame {
    method: MethodId,
    pc: usize,
    locals: Vec<Value>,
    identity: Identity,
    label_visits: BTreeMap<usize, u32>,
}

#[derive(Debug, Clone)]
struct State {
    frames: Vec<Frame>,
    steps: u64,
}

struct Machine<'a, 'p> {
    space: &'a AnalysisSpace<'p>,
    cfg: ExecConfig,
    trace: ExecTrace,
    paths_done: u64,
}

enum PathEnd {
    Completed,
    Pruned,
}

impl<'a, 'p> Machine<'a, 'p> {
    fn frame_for(&mut self, method: MethodId, args: Vec<Value>, identity: Identity) -> Frame {
        self.trace.executed_methods.insert(self.space.method_ref(method));
        let def = self.space.method(method).def;
        let mut locals = vec![Value::Uninit; (def.arity + def.locals) as usize];
        for (slot, value) in args.into_iter().enumerate() {
            locals[slot] = value;
        }
        Frame { method, pc: 0, locals, identity, label_visits: BTreeMap::new() }
    }

    fn read_local(&self, frame: &Frame, local: u32) -> Result<Value, ExecError> {
        match frame.locals.get(local as usize) {
            Some(Value::Uninit) | None => Err(ExecError::UninitializedLocal {
                method: self.space.method_ref(frame.method),
                index: frame.pc,
                local,
            }),
            Some(v) => Ok(v.clone()),
        }
    }

    /// Runs one state to its end, pushing forked states onto `stack`.
    fn run(&mut self, mut state: State, stack: &mut Vec<State>) -> Result<PathEnd, ExecError> {
        loop {
            let Some(frame) = state.frames.last_mut() else {
                return Ok(PathEnd::Completed);
            };
            let method = frame.method;
            let info = self.space.method(method);
            let def = info.def;
            if frame.pc >= def.body.len() {
                // Implicit return at the end of the body.
                state.frames.pop();
                continue;
            }
            if state.steps >= self.cfg.step_budget {
                self.trace.exhausted = true;
                return Ok(PathEnd::Pruned);
            }
            state.steps += 1;
            let pc = frame.pc;
            let err_ref = || self.space.method_ref(method);
            match &def.body[pc] {
                Instruction::ConstStr { dst, literal } => {
                    frame.locals[*dst as usize] = Value::Str(Rc::from(literal.as_str()));
                    frame.pc += 1;
                }
                Instruction::Move { dst, src } => {
                    let v = self.read_local(frame, *src)?;
                    frame.locals[*dst as usize] = v;
                    frame.pc += 1;
                }
                Instruction::NewObj { dst, class } => {
                    let cid = self.space.class_id(class).ok_or_else(|| ExecError::BadValue {
                        method: err_ref(),
                        index: pc,
                        message: format!("unknown class {class:?}"),
                    })?;
                    frame.locals[*dst as usize] = Value::Obj(cid);
                    frame.pc += 1;
                }
                Instruction::ArrayNew { dst, length } => {
                    frame.locals[*dst as usize] = Value::Arr(Rc::new(vec![None; *length as usize]));
                    frame.pc += 1;
                }
                Instruction::ArrayStore { array, index, src } => {
                    let value = match self.read_local(frame, *src)? {
                        Value::Str(s) => s,
                        _ => {
                            return Err(ExecError::BadValue {
                                method: err_ref(),
                                index: pc,
                                message: "array elements must be strings".into(),
                            });
                        }
                    };
                    match &mut frame.locals[*array as usize] {
                        Value::Arr(arr) => {
                            let len = arr.len();
                            if *index as usize >= len {
                                return Err(ExecError::ArrayOutOfBounds {
                                    method: err_ref(),
                                    index: pc,
                                    array_index: *index,
                                    len,
                                });
                            }
                            Rc::make_mut(arr)[*index as usize] = Some(value);
                        }
                        Value::Uninit => {
                            return Err(ExecError::UninitializedLocal {
                                method: err_ref(),
                                index: pc,
                                local: *array,
                            });
                        }
                        _ => {
                            return Err(ExecError::BadValue {
                                method: err_ref(),
                                index: pc,
                                message: "store into a non-array local".into(),
                            });
                        }
                    }
                    frame.pc += 1;
                }
                Instruction::GetService { dst, service } => {
                    let cid = self.space.service_impl(service).ok_or_else(|| {
                        ExecError::UnboundService {
                            method: err_ref(),
                            index: pc,
                            service: service.clone(),
                        }
                    })?;
                    frame.locals[*dst as usize] = Value::Obj(cid);
                    frame.pc += 1;
                }
                Instruction::Label { .. } => {
                    let visits = frame.label_visits.entry(pc).or_insert(0);
                    *visits += 1;
                    if *visits > self.cfg.loop_bound {
                        return Ok(PathEnd::Pruned);
                    }
                    frame.pc += 1;
                }
                Instruction::Goto { label } => {
                    frame.pc = info.labels[label.as_str()];
                }
                Instruction::Branch { label } => {
                    let target = info.labels[label.as_str()];
                    let mut fork = state.clone();
                    fork.frames.last_mut().expect("frame exists").pc = target;
                    stack.push(fork);
                    state.frames.last_mut().expect("frame exists").pc = pc + 1;
                }
                Instruction::Reflective => {
                    return Err(ExecError::DynamicFeatures(vec![err_ref()]));
                }
                Instruction::Return => {
                    state.frames.pop();
                }
                Instruction::Invoke { kind, target, receiver, args } => {
                    self.step_invoke(&mut state, *kind, target, *receiver, args)?;
                }
            }
        }
    }

    fn step_invoke(
        &mut self,
        state: &mut State,
        kind: InvokeKind,
        target: &MethodRef,
        receiver: Option<u32>,
        args: &[u32],
    ) -> Result<(), ExecError> {
        let frame = state.frames.last_mut().expect("frame exists");
        let pc = frame.pc;
        let caller_method = frame.method;
        let err_ref = self.space.method_ref(caller_method);

        let resolved = match kind {
            InvokeKind::Static | InvokeKind::Direct => self
                .space
                .class_id(&target.class)
                .and_then(|cid| self.space.lookup_impl(cid, &target.name, target.arity)),
            InvokeKind::Virtual => {
                let recv = receiver.expect("virtual invokes carry a receiver (parse invariant)");
                match self.read_local(frame, recv)? {
                    Value::Obj(runtime) => {
                        self.space.lookup_impl(runtime, &target.name, target.arity)
                    }
                    _ => {
                        return Err(ExecError::BadValue {
                            method: err_ref,
                            index: pc,
                            message: "virtual receiver is not an object".into(),
                        });
                    }
                }
            }
        };
        let callee = resolved.ok_or_else(|| ExecError::DispatchFailure {
            method: err_ref.clone(),
            index: pc,
            target: target.clone(),
        })?;

        // Identity brackets match on the static target signature.
        if *target == self.space.sinks.clear_identity_sig {
            frame.identity = Identity::Cleared;
        } else if *target == self.space.sinks.restore_identity_sig {
            frame.identity = Identity::Caller;
        }

        // Argument values; reading them counts as a local read.
        let mut arg_values = Vec::with_capacity(args.len());
        for &a in args {
            arg_values.push(self.read_local(frame, a)?);
        }

        // Permission check sinks record their argument under caller identity.
        if let Some(sink_idx) = self.space.sink_index(callee) {
            let sink = &self.space.sinks.check_sinks[sink_idx];
            let value =
                arg_values.get(sink.perm_arg_index as usize).cloned().ok_or_else(|| {
                    ExecError::BadValue {
                        method: err_ref.clone(),
                        index: pc,
                        message: "check sink called with too few arguments".into(),
                    }
                })?;
            let mut names: Vec<Rc<str>> = Vec::new();
            match (sink.arg_shape, value) {
                (ArgShape::Single, Value::Str(s)) => names.push(s),
                (ArgShape::Array, Value::Arr(items)) => {
                    names.extend(items.iter().flatten().cloned());
                }
                _ => {
                    return Err(ExecError::BadValue {
                        method: err_ref,
                        index: pc,
                        message: "check sink permission argument has the wrong shape".into(),
                    });
                }
            }
            if frame.identity == Identity::Caller {
                for name in names {
                    if self.space.sinks.vocabulary.contains(&name) {
                        self.trace.recorded_checks.insert(name.to_string());
                        self.trace.recorded_sites.insert((
                            self.space.method_ref(caller_method),
                            pc as u32,
                            name.to_string(),
                        ));
                    }
                }
            }
        }

        // Boundary bookkeeping: application code invoking a framework entry.
        if self.space.method(caller_method).from_app && self.space.is_entry(callee) {
            self.trace.invoked_entries.insert(self.space.method_ref(callee));
        }

        let identity = frame.identity;
        frame.pc += 1;
        let callee_frame = self.frame_for(callee, arg_values, identity);
        state.frames.push(callee_frame);
        Ok(())
    }
}

/// Depth-first exploration of all branch outcomes from each manifest root.
pub fn execute(
    space: &AnalysisSpace<'_>,
    manifest: &Manifest,
    cfg: &ExecConfig,
) -> Result<ExecTrace, ExecError> {
    if cfg.loop_bound == 0 || cfg.path_budget == 0 || cfg.step_budget == 0 {
        return Err(ExecError::BadConfig("all budgets must be at least 1".into()));
    }
    for program in [Some(space.fw), space.app].into_iter().flatten() {
        if let DynamicFeatures::Flagged(list) = has_dynamic_features(program) {
            return Err(ExecError::DynamicFeatures(list));
        }
    }

    let mut machine = Machine { space, cfg: *cfg, trace: ExecTrace::default(), paths_done: 0 };
    let mut stack: Vec<State> = Vec::new();
    for root in manifest.roots.iter().rev() {
        let root_id =
            space.method_id(root).ok_or_else(|| ExecError::UnresolvedRoot(root.clone()))?;
        let frame = machine.frame_for(root_id, Vec::new(), Identity::Caller);
        stack.push(State { frames: vec![frame], steps: 0 });
    }

    while let Some(state) = stack.pop() {
        if machine.paths_done >= machine.cfg.path_budget {
            machine.trace.exhausted = true;
            break;
        }
        machine.run(state, &mut stack)?;
        machine.paths_done += 1;
    }
    Ok(machine.trace)
}

/// Checks that no method body has a control-flow cycle and no call chain
/// can recurse (over class-hierarchy-resolved targets, a superset of the
/// runtime call relation).
pub fn check_loop_free(space: &AnalysisSpace<'_>) -> Result<(), ExecError> {
    use crate::callgraph::{DispatchContext, Mode, resolve_call};

    for mid in 0..space.num_methods() {
        let method = MethodId(mid as u32);
        let info = space.method(method);
        if build_unit_graph(info.def).has_cycle() {
            return Err(ExecError::NotLoopFree(format!(
                "control-flow cycle in {}",
                space.method_ref(method)
            )));
        }
    }

    let ctx = DispatchContext::new(space);
    let mut edges: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); space.num_methods()];
    for (mid, out) in edges.iter_mut().enumerate() {
        let info = space.method(MethodId(mid as u32));
        for site in &info.call_sites {
            let service_classes = site
                .receiver
                .and_then(|r| info.service_locals.get(&r))
                .filter(|s| site.kind == InvokeKind::Virtual && !s.is_empty());
            if let Ok(targets) = resolve_call(site, &ctx, Mode::Cha, service_classes) {
                out.extend(targets.iter().map(|t| t.0 as usize));
            }
        }
    }
    let n = space.num_methods();
    let mut color = vec![0u8; n]; // 0 white, 1 gray, 2 black
    for start in 0..n {
        if color[start] != 0 {
            continue;
        }
        let mut dfs: Vec<(usize, Vec<usize>)> =
            vec![(start, edges[start].iter().copied().collect())];
        color[start] = 1;
        while let Some((node, pending)) = dfs.last_mut() {
            if let Some(next) = pending.pop() {
                match color[next] {
                    1 => {
                        return Err(ExecError::NotLoopFree(format!(
                            "recursive call chain through {}",
                            space.method_ref(MethodId(next as u32))
                        )));
                    }
                    0 => {
                        color[next] = 1;
                        dfs.push((next, edges[next].iter().copied().collect()));
                    }
                    _ => {}
                }
            } else {
                color[*node] = 2;
                dfs.pop();
            }
        }
    }
    Ok(())
}

/// Exhaustive execution on a loop-free program: the exact required
/// permission set.
pub fn exact_required(
    space: &AnalysisSpace<'_>,
    manifest: &Manifest,
) -> Result<PermissionSet, ExecError> {
    check_loop_free(space)?;
    let trace = execute(space, manifest, &ExecConfig::UNBOUNDED)?;
    debug_assert!(!trace.exhausted, "unbounded exploration cannot exhaust");
    Ok(trace.recorded_checks)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ir::{ServiceTable, SinkConfig, parse_program};

    fn sinks() -> SinkConfig {
        SinkConfig {
            vocabulary: PermissionSet::from_iter(["p1", "p2", "p3"]),
            check_sinks: vec![
                crate::ir::CheckSink {
                    signature: MethodRef::new("Sys", "check", 1),
                    perm_arg_index: 0,
                    arg_shape: ArgShape::Single,
                },
                crate::ir::CheckSink {
                    signature: MethodRef::new("Sys", "checkArr", 1),
                    perm_arg_index: 0,
                    arg_shape: ArgShape::Array,
                },
            ],
            clear_identity_sig: MethodRef::new("Sys", "clearId", 0),
            restore_identity_sig: MethodRef::new("Sys", "restoreId", 0),
        }
    }

    fn plain_framework() -> crate::ir::Program {
        parse_program(
            br#"{"kind":"framework","name":"fw","classes":[
            {"name":"Sys","public":false,"methods":[
                {"name":"check","arity":1,"public":true,"constructor":false,"locals":0,"body":[["return"]]},
                {"name":"checkArr","arity":1,"public":true,"constructor":false,"locals":0,"body":[["return"]]},
                {"name":"clearId","arity":0,"public":true,"constructor":false,"locals":0,"body":[["return"]]},
                {"name":"restoreId","arity":0,"public":true,"constructor":false,"locals":0,"body":[["return"]]}
            ]}
        ]}"#,
        )
        .unwrap()
    }

    fn app(classes_json: &str) -> crate::ir::Program {
        parse_program(
            format!(r#"{{"kind":"application","name":"app","classes":[{classes_json}]}}"#)
                .as_bytes(),
        )
        .unwrap()
    }

    fn manifest(roots: &[&str]) -> Manifest {
        Manifest {
            app_name: "app".into(),
            declared: PermissionSet::new(),
            roots: roots.iter().map(|r| r.parse().unwrap()).collect(),
        }
    }

    #[test]
    fn branch_explores_both_outcomes() {
        let fw = plain_framework();
        let a = app(
            r#"{"name":"App","public":true,"methods":[
                {"name":"s","arity":0,"public":true,"constructor":false,"locals":1,
                 "body":[["branch","SKIP"],
                          ["const_str",0,"p1"],
                          ["invoke","static","Sys::check/1",null,[0]],
                          ["label","SKIP"],["return"]]}
            ]}"#,
        );
        let st = ServiceTable::default();
        let sc = sinks();
        let space = AnalysisSpace::build(&fw, Some(&a), &st, &sc).unwrap();
        let trace = execute(&space, &manifest(&["App::s/0"]), &ExecConfig::default()).unwrap();
        assert_eq!(trace.recorded_checks.as_slice(), &["p1"]);
        assert!(!trace.exhausted);
    }

    #[test]
    fn check_inside_cleared_region_is_not_recorded() {
        let fw = plain_framework();
        let a = app(
            r#"{"name":"App","public":true,"methods":[
                {"name":"s","arity":0,"public":true,"constructor":false,"locals":1,
                 "body":[["invoke","static","Sys::clearId/0",null,[]],
                          ["const_str",0,"p1"],
                          ["invoke","static","Sys::check/1",null,[0]],
                          ["invoke","static","Sys::restoreId/0",null,[]],
                          ["const_str",0,"p2"],
                          ["invoke","static","Sys::check/1",null,[0]],
                          ["return"]]}
            ]}"#,
        );
        let st = ServiceTable::default();
        let sc = sinks();
        let space = AnalysisSpace::build(&fw, Some(&a), &st, &sc).unwrap();
        let trace = execute(&space, &manifest(&["App::s/0"]), &ExecConfig::default()).unwrap();
        // p1 sits between clear and restore; p2 comes after the restore.
        assert_eq!(trace.recorded_checks.as_slice(), &["p2"]);
    }

    #[test]
    fn callee_inherits_identity_and_own_frame_mutations_stay_local() {
        let fw = plain_framework();
        let a = app(
            r#"{"name":"App","public":true,"methods":[
                {"name":"s","arity":0,"public":true,"constructor":false,"locals":1,
                 "body":[["invoke","static","Sys::clearId/0",null,[]],
                          ["invoke","static","App::inCleared/0",null,[]],
                          ["invoke","static","Sys::restoreId/0",null,[]],
                          ["invoke","static","App::clearsItself/0",null,[]],
                          ["const_str",0,"p2"],
                          ["invoke","static","Sys::check/1",null,[0]],
                          ["return"]]},
                {"name":"inCleared","arity":0,"public":true,"constructor":false,"locals":1,
                 "body":[["const_str",0,"p1"],["invoke","static","Sys::check/1",null,[0]],["return"]]},
                {"name":"clearsItself","arity":0,"public":true,"constructor":false,"locals":1,
                 "body":[["invoke","static","Sys::clearId/0",null,[]],
                          ["const_str",0,"p3"],["invoke","static","Sys::check/1",null,[0]],["return"]]}
            ]}"#,
        );
        let st = ServiceTable::default();
        let sc = sinks();
        let space = AnalysisSpace::build(&fw, Some(&a), &st, &sc).unwrap();
        let trace = execute(&space, &manifest(&["App::s/0"]), &ExecConfig::default()).unwrap();
        // p1: the callee inherited the cleared flag. p3: the callee cleared
        // its own frame. p2: the root's flag was restored, and the callee's
        // own clear did not leak back.
        assert_eq!(trace.recorded_checks.as_slice(), &["p2"]);
    }

    #[test]
    fn loop_bound_prunes_without_setting_exhausted() {
        let fw = plain_framework();
        let a = app(
            r#"{"name":"App","public":true,"methods":[
                {"name":"s","arity":0,"public":true,"constructor":false,"locals":1,
                 "body":[["label","L"],["branch","L"],
                          ["const_str",0,"p1"],["invoke","static","Sys::check/1",null,[0]],
                          ["return"]]}
            ]}"#,
        );
        let st = ServiceTable::default();
        let sc = sinks();
        let space = AnalysisSpace::build(&fw, Some(&a), &st, &sc).unwrap();
        let trace = execute(&space, &manifest(&["App::s/0"]), &ExecConfig::default()).unwrap();
        assert_eq!(trace.recorded_checks.as_slice(), &["p1"]);
        assert!(!trace.exhausted);
    }

    #[test]
    fn uninitialized_local_read_is_an_error() {
        let fw = plain_framework();
        let a = app(
            r#"{"name":"App","public":true,"methods":[
                {"name":"s","arity":0,"public":true,"constructor":false,"locals":1,
                 "body":[["invoke","static","Sys::check/1",null,[0]],["return"]]}
            ]}"#,
        );
        let st = ServiceTable::default();
        let sc = sinks();
        let space = AnalysisSpace::build(&fw, Some(&a), &st, &sc).unwrap();
        assert!(matches!(
            execute(&space, &manifest(&["App::s/0"]), &ExecConfig::default()),
            Err(ExecError::UninitializedLocal { .. })
        ));
    }

    #[test]
    fn empty_roots_record_nothing_exactly() {
        let fw = plain_framework();
        let a = app(
            r#"{"name":"App","public":true,"methods":[
                {"name":"s","arity":0,"public":true,"constructor":false,"locals":0,"body":[["return"]]}
            ]}"#,
        );
        let st = ServiceTable::default();
        let sc = sinks();
        let space = AnalysisSpace::build(&fw, Some(&a), &st, &sc).unwrap();
        let set = exact_required(&space, &manifest(&["App::s/0"])).unwrap();
        assert!(set.is_empty());
    }

    #[test]
    fn recursion_fails_the_loop_free_check() {
        let fw = plain_framework();
        let a = app(
            r#"{"name":"App","public":true,"methods":[
                {"name":"s","arity":0,"public":true,"constructor":false,"locals":0,
                 "body":[["branch","SKIP"],["invoke","static","App::s/0",null,[]],
                          ["label","SKIP"],["return"]]}
            ]}"#,
        );
        let st = ServiceTable::default();
        let sc = sinks();
        let space = AnalysisSpace::build(&fw, Some(&a), &st, &sc).unwrap();
        assert!(matches!(
            exact_required(&space, &manifest(&["App::s/0"])),
            Err(ExecError::NotLoopFree(_))
        ));
    }

    #[test]
    fn array_checks_record_stored_vocabulary_literals_only() {
        let fw = plain_framework();
        let a = app(
            r#"{"name":"App","public":true,"methods":[
                {"name":"s","arity":0,"public":true,"constructor":false,"locals":3,
                 "body":[["array_new",0,3],
                          ["const_str",1,"p1"],["array_store",0,0,1],
                          ["const_str",2,"bogus"],["array_store",0,1,2],
                          ["invoke","static","Sys::checkArr/1",null,[0]],["return"]]}
            ]}"#,
        );
        let st = ServiceTable::default();
        let sc = sinks();
        let space = AnalysisSpace::build(&fw, Some(&a), &st, &sc).unwrap();
        let set = exact_required(&space, &manifest(&["App::s/0"])).unwrap();
        assert_eq!(set.as_slice(), &["p1"]);
    }

    #[test]
    fn growing_loop_bound_never_shrinks_recorded_checks() {
        let fw = plain_framework();
        let a = app(
            r#"{"name":"App","public":true,"methods":[
                {"name":"s","arity":0,"public":true,"constructor":false,"locals":1,
                 "body":[["label","L"],
                          ["const_str",0,"p1"],["invoke","static","Sys::check/1",null,[0]],
                          ["branch","L"],
                          ["const_str",0,"p2"],["invoke","static","Sys::check/1",null,[0]],
                          ["return"]]}
            ]}"#,
        );
        let st = ServiceTable::default();
        let sc = sinks();
        let space = AnalysisSpace::build(&fw, Some(&a), &st, &sc).unwrap();
        let m = manifest(&["App::s/0"]);
        let mut prev = PermissionSet::new();
        for loop_bound in 1..=4 {
            let cfg = ExecConfig { loop_bound, ..ExecConfig::default() };
            let trace = execute(&space, &m, &cfg).unwrap();
            assert!(prev.is_subset(&trace.recorded_checks));
            prev = trace.recorded_checks;
        }
        assert_eq!(prev.as_slice(), &["p1", "p2"]);
    }
}
