//! Cross-reference validation for PBIR programs and sidecar documents.
//!
//! Validation never fails: every broken invariant becomes a report entry.
//! An empty report means all invariants hold. Analyses require a clean
//! report before running.

use super::{ClassDef, Instruction, Manifest, Program, ProgramKind, ServiceTable, SinkConfig};
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IssueKind {
    DuplicateClass,
    DuplicateMethod,
    DuplicateInterface,
    UnresolvedClass,
    InheritanceCycle,
    UnresolvedMethod,
    ArityMismatch,
    LocalOutOfRange,
    ArrayStoreOutOfBounds,
    MissingServiceBinding,
    UnknownServiceClass,
    NonPublicBoundaryCall,
    SinkConfigInvalid,
    UnknownPermission,
    UnresolvedRoot,
}

impl fmt::Display for IssueKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            IssueKind::DuplicateClass => "duplicate-class",
            IssueKind::DuplicateMethod => "duplicate-method",
            IssueKind::DuplicateInterface => "duplicate-interface",
            IssueKind::UnresolvedClass => "unresolved-class",
            IssueKind::InheritanceCycle => "inheritance-cycle",
            IssueKind::UnresolvedMethod => "unresolved-method",
            IssueKind::ArityMismatch => "arity-mismatch",
            IssueKind::LocalOutOfRange => "local-out-of-range",
            IssueKind::ArrayStoreOutOfBounds => "array-store-out-of-bounds",
            IssueKind::MissingServiceBinding => "missing-service-binding",
            IssueKind::UnknownServiceClass => "unknown-service-class",
            IssueKind::NonPublicBoundaryCall => "non-public-boundary-call",
            IssueKind::SinkConfigInvalid => "sink-config-invalid",
            IssueKind::UnknownPermission => "unknown-permission",
            IssueKind::UnresolvedRoot => "unresolved-root",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Issue {
    pub kind: IssueKind,
    pub location: String,
    pub detail: String,
}

impl fmt::Display for Issue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}: {}", self.kind, self.location, self.detail)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ValidationReport {
    pub issues: Vec<Issue>,
}

impl ValidationReport {
    pub fn is_clean(&self) -> bool {
        self.issues.is_empty()
    }

    fn push(&mut self, kind: IssueKind, location: impl Into<String>, detail: impl Into<String>) {
        self.issues.push(Issue { kind, location: location.into(), detail: detail.into() });
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for issue in &self.issues {
            writeln!(f, "{issue}")?;
        }
        Ok(())
    }
}

/// Name-keyed class table over a program and its optional companion
/// framework, with method lookup along superclass chains and interfaces.
struct Table<'p> {
    classes: BTreeMap<&'p str, (&'p ClassDef, bool)>, // flag: defined in companion
}

impl<'p> Table<'p> {
    fn build(p: &'p Program, companion: Option<&'p Program>) -> (Self, Vec<Issue>) {
        let mut classes: BTreeMap<&str, (&ClassDef, bool)> = BTreeMap::new();
        let mut issues = Vec::new();
        if let Some(fw) = companion {
            for c in &fw.classes {
                classes.insert(&c.name, (c, true));
            }
        }
        for c in &p.classes {
            if classes.insert(&c.name, (c, false)).is_some() {
                issues.push(Issue {
                    kind: IssueKind::DuplicateClass,
                    location: format!("class {}", c.name),
                    detail: "class name collides with the companion program".into(),
                });
            }
        }
        (Table { classes }, issues)
    }

    fn get(&self, name: &str) -> Option<&'p ClassDef> {
        self.classes.get(name).map(|(c, _)| *c)
    }

    fn in_companion(&self, name: &str) -> bool {
        self.classes.get(name).is_some_and(|(_, comp)| *comp)
    }

    /// Walks the superclass chain, then the interface closure, for a method
    /// with the given name and arity. Mirrors runtime dispatch order.
    fn lookup(&self, class: &str, name: &str, arity: u32) -> Option<(&'p ClassDef, &'p super::MethodDef)> {
        let mut cur = self.get(class);
        let mut guard = 0usize;
        while let Some(c) = cur {
            if let Some(m) = c.methods.iter().find(|m| m.name == name && m.arity == arity) {
                return Some((c, m));
            }
            guard += 1;
            if guard > self.classes.len() {
                return None; // inheritance cycle, reported separately
            }
            cur = c.superclass.as_deref().and_then(|s| self.get(s));
        }
        // Breadth-first over the interface closure, declaration order.
        let mut queue: Vec<&str> =
            self.get(class)?.interfaces.iter().map(String::as_str).collect();
        let mut seen: BTreeSet<&str> = queue.iter().copied().collect();
        let mut i = 0;
        while i < queue.len() {
            if let Some(c) = self.get(queue[i]) {
                if let Some(m) = c.methods.iter().find(|m| m.name == name && m.arity == arity) {
                    return Some((c, m));
                }
                for next in c.interfaces.iter().chain(c.superclass.iter()) {
                    if seen.insert(next) {
                        queue.push(next);
                    }
                }
            }
            i += 1;
        }
        None
    }
}

/// Validates a program against its companion framework (for applications),
/// a service table, and the sink configuration.
pub fn validate(
    p: &Program,
    companion: Option<&Program>,
    st: Option<&ServiceTable>,
    sc: &SinkConfig,
) -> ValidationReport {
    let mut report = ValidationReport::default();
    validate_sink_config(sc, &mut report);

    let (table, dup_issues) = Table::build(p, companion);
    report.issues.extend(dup_issues);

    for c in &p.classes {
        validate_class(c, &table, &mut report);
        for m in &c.methods {
            validate_body(p, c, m, &table, st, &mut report);
        }
    }

    if let Some(st) = st {
        for (svc, cls) in &st.bindings {
            if table.get(cls).is_none() {
                report.push(
                    IssueKind::UnknownServiceClass,
                    format!("service {svc}"),
                    format!("implementing class {cls:?} is not defined"),
                );
            }
        }
        for cls in &st.init_classes {
            if table.get(cls).is_none() {
                report.push(
                    IssueKind::UnknownServiceClass,
                    "service init list".to_string(),
                    format!("class {cls:?} is not defined"),
                );
            }
        }
    }
    report
}

fn validate_class(c: &ClassDef, table: &Table<'_>, report: &mut ValidationReport) {
    let loc = format!("class {}", c.name);
    let mut ifaces = BTreeSet::new();
    for i in &c.interfaces {
        if !ifaces.insert(i.as_str()) {
            report.push(IssueKind::DuplicateInterface, &loc, format!("interface {i:?} listed twice"));
        }
        if table.get(i).is_none() {
            report.push(IssueKind::UnresolvedClass, &loc, format!("interface {i:?} is not defined"));
        }
    }
    if let Some(s) = &c.superclass
        && table.get(s).is_none()
    {
        report.push(IssueKind::UnresolvedClass, &loc, format!("superclass {s:?} is not defined"));
    }
    // Superclass chain cycle detection.
    let mut seen = BTreeSet::new();
    let mut cur = Some(c.name.as_str());
    while let Some(name) = cur {
        if !seen.insert(name) {
            report.push(IssueKind::InheritanceCycle, &loc, format!("cycle through {name:?}"));
            break;
        }
        cur = table.get(name).and_then(|cd| cd.superclass.as_deref());
    }
    let mut sigs = BTreeSet::new();
    for m in &c.methods {
        if !sigs.insert((m.name.as_str(), m.arity)) {
            report.push(
                IssueKind::DuplicateMethod,
                &loc,
                format!("method {}/{} declared twice", m.name, m.arity),
            );
        }
    }
}

fn validate_body(
    p: &Program,
    c: &ClassDef,
    m: &super::MethodDef,
    table: &Table<'_>,
    st: Option<&ServiceTable>,
    report: &mut ValidationReport,
) {
    let slots = m.arity + m.locals;
    let loc = |i: usize| format!("class {} method {}/{} body[{}]", c.name, m.name, m.arity, i);
    let mut array_lengths: BTreeMap<u32, u32> = BTreeMap::new();

    for (i, instr) in m.body.iter().enumerate() {
        let mut check_local = |l: u32| {
            if l >= slots {
                report.push(
                    IssueKind::LocalOutOfRange,
                    loc(i),
                    format!("local {l} out of range (arity {} + locals {})", m.arity, m.locals),
                );
            }
        };
        match instr {
            Instruction::ConstStr { dst, .. } => check_local(*dst),
            Instruction::Move { dst, src } => {
                check_local(*dst);
                check_local(*src);
            }
            Instruction::NewObj { dst, class } => {
                check_local(*dst);
                if table.get(class).is_none() {
                    report.push(IssueKind::UnresolvedClass, loc(i), format!("class {class:?} is not defined"));
                }
            }
            Instruction::ArrayNew { dst, length } => {
                check_local(*dst);
                array_lengths.insert(*dst, *length);
            }
            Instruction::ArrayStore { array, index, src } => {
                check_local(*array);
                check_local(*src);
                if let Some(len) = array_lengths.get(array)
                    && index >= len
                {
                    report.push(
                        IssueKind::ArrayStoreOutOfBounds,
                        loc(i),
                        format!("index {index} not below length {len}"),
                    );
                }
            }
            Instruction::Invoke { kind: _, target, receiver, args } => {
                if let Some(r) = receiver {
                    check_local(*r);
                }
                for a in args {
                    check_local(*a);
                }
                if args.len() as u32 != target.arity {
                    report.push(
                        IssueKind::ArityMismatch,
                        loc(i),
                        format!("{target} called with {} arguments", args.len()),
                    );
                }
                match table.lookup(&target.class, &target.name, target.arity) {
                    None => {
                        let detail = if table.get(&target.class).is_none() {
                            format!("target class {:?} is not defined", target.class)
                        } else {
                            format!("no declaration of {target} is visible")
                        };
                        report.push(IssueKind::UnresolvedMethod, loc(i), detail);
                    }
                    Some((decl_class, decl)) => {
                        // Application code must cross into the framework only
                        // through its public surface.
                        if p.kind == ProgramKind::Application && table.in_companion(&target.class) {
                            let target_class_public =
                                table.get(&target.class).is_some_and(|cd| cd.is_public);
                            if !target_class_public || !decl.is_public || !decl_class.is_public {
                                report.push(
                                    IssueKind::NonPublicBoundaryCall,
                                    loc(i),
                                    format!("{target} is not part of the framework's public surface"),
                                );
                            }
                        }
                    }
                }
            }
            Instruction::GetService { dst, service } => {
                check_local(*dst);
                match st {
                    Some(st) if st.bindings.contains_key(service) => {}
                    _ => {
                        report.push(
                            IssueKind::MissingServiceBinding,
                            loc(i),
                            format!("service {service:?} has no binding"),
                        );
                    }
                }
            }
            Instruction::Label { .. }
            | Instruction::Goto { .. }
            | Instruction::Branch { .. }
            | Instruction::Reflective
            | Instruction::Return => {}
        }
    }
}

fn validate_sink_config(sc: &SinkConfig, report: &mut ValidationReport) {
    if sc.vocabulary.is_empty() {
        report.push(IssueKind::SinkConfigInvalid, "sink config", "vocabulary is empty");
    }
    let mut seen = BTreeSet::new();
    for sink in &sc.check_sinks {
        if !seen.insert(&sink.signature) {
            report.push(
                IssueKind::SinkConfigInvalid,
                "sink config",
                format!("duplicate sink signature {}", sink.signature),
            );
        }
        if sink.signature == sc.clear_identity_sig || sink.signature == sc.restore_identity_sig {
            report.push(
                IssueKind::SinkConfigInvalid,
                "sink config",
                format!("sink {} collides with an identity signature", sink.signature),
            );
        }
        if sink.perm_arg_index >= sink.signature.arity {
            report.push(
                IssueKind::SinkConfigInvalid,
                "sink config",
                format!(
                    "permission argument index {} not below arity of {}",
                    sink.perm_arg_index, sink.signature
                ),
            );
        }
    }
}

/// Checks a manifest against the application it belongs to and the
/// permission vocabulary.
pub fn validate_manifest(m: &Manifest, app: &Program, sc: &SinkConfig) -> ValidationReport {
    let mut report = ValidationReport::default();
    for perm in m.declared.iter() {
        if !sc.vocabulary.contains(perm) {
            report.push(
                IssueKind::UnknownPermission,
                "manifest",
                format!("declared permission {perm:?} is not in the vocabulary"),
            );
        }
    }
    for root in &m.roots {
        let found = app.classes.iter().any(|c| {
            c.name == root.class
                && c.methods.iter().any(|mm| mm.name == root.name && mm.arity == root.arity)
        });
        if !found {
            report.push(
                IssueKind::UnresolvedRoot,
                "manifest",
                format!("root {root} does not resolve to an application method"),
            );
        }
    }
    report
}
