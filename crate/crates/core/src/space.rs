//! Interned view of a framework (plus optional application) used by all
//! analyses: class/method id tables, subtype closures, dispatch lookup, and
//! per-method pre-extracted call sites.
//!
//! Building a space assumes the inputs passed validation; dangling
//! references surface as [`SpaceError`] rather than panics.

use crate::ir::{
    ClassDef, Instruction, InvokeKind, MethodDef, MethodRef, Program, ServiceTable, SinkConfig,
    entry_points,
};
use std::collections::{BTreeMap, BTreeSet};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ClassId(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct MethodId(pub u32);

#[derive(Debug, thiserror::Error)]
pub enum SpaceError {
    #[error("unresolved class {0:?} (inputs did not pass validation)")]
    UnresolvedClass(String),
    #[error("program failed entry-point enumeration: {0}")]
    WrongKind(#[from] crate::ir::WrongProgramKind),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IdentityOp {
    Clear,
    Restore,
}

/// A pre-extracted invoke instruction.
#[derive(Debug, Clone)]
pub struct CallSite<'p> {
    /// Instruction index inside the body.
    pub index: usize,
    pub kind: InvokeKind,
    pub target: &'p MethodRef,
    /// Class the static target names, when it exists in the space.
    pub target_class: Option<ClassId>,
    pub receiver: Option<u32>,
    pub args: &'p [u32],
    /// Set when the static target equals a configured identity signature.
    pub identity_op: Option<IdentityOp>,
}

pub struct ClassInfo<'p> {
    pub def: &'p ClassDef,
    pub superclass: Option<ClassId>,
    pub interfaces: Vec<ClassId>,
    pub from_app: bool,
    methods: BTreeMap<(&'p str, u32), MethodId>,
}

pub struct MethodInfo<'p> {
    pub class: ClassId,
    pub def: &'p MethodDef,
    pub from_app: bool,
    /// Label name to instruction index.
    pub labels: BTreeMap<&'p str, usize>,
    pub call_sites: Vec<CallSite<'p>>,
    /// Flow-insensitive per-method service bindings: any local ever assigned
    /// by a `get_service` (possibly through moves) dispatches against the
    /// bound implementation class.
    pub service_locals: BTreeMap<u32, BTreeSet<ClassId>>,
    /// Classes this body instantiates: `new_obj` targets plus the bound
    /// implementations of `get_service` sites.
    pub instantiates: Vec<ClassId>,
}

pub struct AnalysisSpace<'p> {
    pub fw: &'p Program,
    pub app: Option<&'p Program>,
    pub services: &'p ServiceTable,
    pub sinks: &'p SinkConfig,
    classes: Vec<ClassInfo<'p>>,
    class_by_name: BTreeMap<&'p str, ClassId>,
    methods: Vec<MethodInfo<'p>>,
    /// Subtype cone per class (reflexive, sorted).
    cones: Vec<Vec<ClassId>>,
    /// Entry points of the framework, in canonical row order.
    entry_rows: Vec<MethodId>,
    entry_row_of: BTreeMap<MethodId, usize>,
    /// Methods that are configured check sinks, by index into
    /// `sinks.check_sinks`.
    sink_methods: BTreeMap<MethodId, usize>,
    service_impls: BTreeMap<&'p str, ClassId>,
}

impl<'p> AnalysisSpace<'p> {
    pub fn build(
        fw: &'p Program,
        app: Option<&'p Program>,
        services: &'p ServiceTable,
        sinks: &'p SinkConfig,
    ) -> Result<Self, SpaceError> {
        let mut classes: Vec<ClassInfo<'p>> = Vec::new();
        let mut class_by_name: BTreeMap<&'p str, ClassId> = BTreeMap::new();
        let mut methods: Vec<MethodInfo<'p>> = Vec::new();

        let programs: Vec<(&'p Program, bool)> = match app {
            Some(a) => vec![(fw, false), (a, true)],
            None => vec![(fw, false)],
        };
        for (program, from_app) in &programs {
            for c in &program.classes {
                let id = ClassId(classes.len() as u32);
                class_by_name.insert(&c.name, id);
                classes.push(ClassInfo {
                    def: c,
                    superclass: None,
                    interfaces: Vec::new(),
                    from_app: *from_app,
                    methods: BTreeMap::new(),
                });
            }
        }
        // Second pass: link hierarchy and intern methods.
        let mut next_method = 0u32;
        for (program, from_app) in &programs {
            for c in &program.classes {
                let cid = class_by_name[c.name.as_str()];
                let superclass = c
                    .superclass
                    .as_deref()
                    .map(|s| {
                        class_by_name
                            .get(s)
                            .copied()
                            .ok_or_else(|| SpaceError::UnresolvedClass(s.to_string()))
                    })
                    .transpose()?;
                let interfaces = c
                    .interfaces
                    .iter()
                    .map(|i| {
                        class_by_name
                            .get(i.as_str())
                            .copied()
                            .ok_or_else(|| SpaceError::UnresolvedClass(i.clone()))
                    })
                    .collect::<Result<Vec<_>, _>>()?;
                classes[cid.0 as usize].superclass = superclass;
                classes[cid.0 as usize].interfaces = interfaces;

                for m in &c.methods {
                    let mid = MethodId(next_method);
                    next_method += 1;
                    classes[cid.0 as usize].methods.insert((m.name.as_str(), m.arity), mid);
                    methods.push(MethodInfo {
                        class: cid,
                        def: m,
                        from_app: *from_app,
                        labels: BTreeMap::new(),
                        call_sites: Vec::new(),
                        service_locals: BTreeMap::new(),
                        instantiates: Vec::new(),
                    });
                }
            }
        }

        let service_impls: BTreeMap<&'p str, ClassId> = services
            .bindings
            .iter()
            .filter_map(|(svc, cls)| {
                class_by_name.get(cls.as_str()).map(|id| (svc.as_str(), *id))
            })
            .collect();

        let mut space = AnalysisSpace {
            fw,
            app,
            services,
            sinks,
            classes,
            class_by_name,
            methods,
            cones: Vec::new(),
            entry_rows: Vec::new(),
            entry_row_of: BTreeMap::new(),
            sink_methods: BTreeMap::new(),
            service_impls,
        };
        space.build_cones();
        space.extract_bodies()?;
        space.index_entries()?;
        space.index_sinks();
        Ok(space)
    }

    fn build_cones(&mut self) {
        // children[c] = classes whose superclass or interface list names c.
        let n = self.classes.len();
        let mut children: Vec<Vec<ClassId>> = vec![Vec::new(); n];
        for (i, c) in self.classes.iter().enumerate() {
            let child = ClassId(i as u32);
            if let Some(s) = c.superclass {
                children[s.0 as usize].push(child);
            }
            for iface in &c.interfaces {
                children[iface.0 as usize].push(child);
            }
        }
        self.cones = (0..n)
            .map(|root| {
                let mut seen: BTreeSet<ClassId> = BTreeSet::new();
                let mut queue = vec![ClassId(root as u32)];
                seen.insert(ClassId(root as u32));
                while let Some(c) = queue.pop() {
                    for &child in &children[c.0 as usize] {
                        if seen.insert(child) {
                            queue.push(child);
                        }
                    }
                }
                seen.into_iter().collect()
            })
            .collect();
    }

    fn extract_bodies(&mut self) -> Result<(), SpaceError> {
        for mi in 0..self.methods.len() {
            let def = self.methods[mi].def;
            let mut labels = BTreeMap::new();
            let mut call_sites = Vec::new();
            let mut instantiates = Vec::new();
            let mut service_locals: BTreeMap<u32, BTreeSet<ClassId>> = BTreeMap::new();
            let mut moves: Vec<(u32, u32)> = Vec::new();

            for (idx, instr) in def.body.iter().enumerate() {
                match instr {
                    Instruction::Label { name } => {
                        labels.insert(name.as_str(), idx);
                    }
                    Instruction::Invoke { kind, target, receiver, args } => {
                        let identity_op = if *target == self.sinks.clear_identity_sig {
                            Some(IdentityOp::Clear)
                        } else if *target == self.sinks.restore_identity_sig {
                            Some(IdentityOp::Restore)
                        } else {
                            None
                        };
                        call_sites.push(CallSite {
                            index: idx,
                            kind: *kind,
                            target,
                            target_class: self.class_by_name.get(target.class.as_str()).copied(),
                            receiver: *receiver,
                            args,
                            identity_op,
                        });
                    }
                    Instruction::NewObj { class, .. } => {
                        let id = self
                            .class_by_name
                            .get(class.as_str())
                            .copied()
                            .ok_or_else(|| SpaceError::UnresolvedClass(class.clone()))?;
                        instantiates.push(id);
                    }
                    Instruction::GetService { dst, service } => {
                        if let Some(&impl_class) = self.service_impls.get(service.as_str()) {
                            service_locals.entry(*dst).or_default().insert(impl_class);
                            instantiates.push(impl_class);
                        }
                    }
                    Instruction::Move { dst, src } => {
                        moves.push((*dst, *src));
                    }
                    _ => {}
                }
            }
            // Propagate service bindings through move chains to a fixpoint.
            loop {
                let mut changed = false;
                for &(dst, src) in &moves {
                    let Some(from) = service_locals.get(&src).cloned() else { continue };
                    let entry = service_locals.entry(dst).or_default();
                    let before = entry.len();
                    entry.extend(from);
                    changed |= entry.len() != before;
                }
                if !changed {
                    break;
                }
            }
            instantiates.sort();
            instantiates.dedup();
            let info = &mut self.methods[mi];
            info.labels = labels;
            info.call_sites = call_sites;
            info.instantiates = instantiates;
            info.service_locals = service_locals;
        }
        Ok(())
    }

    fn index_entries(&mut self) -> Result<(), SpaceError> {
        let refs = entry_points(self.fw)?;
        let mut rows = Vec::with_capacity(refs.len());
        for r in &refs {
            let cid = self
                .class_by_name
                .get(r.class.as_str())
                .copied()
                .ok_or_else(|| SpaceError::UnresolvedClass(r.class.clone()))?;
            let mid = self.classes[cid.0 as usize]
                .methods
                .get(&(r.name.as_str(), r.arity))
                .copied()
                .ok_or_else(|| SpaceError::UnresolvedClass(r.to_string()))?;
            rows.push(mid);
        }
        self.entry_row_of = rows.iter().enumerate().map(|(i, m)| (*m, i)).collect();
        self.entry_rows = rows;
        Ok(())
    }

    fn index_sinks(&mut self) {
        for (i, sink) in self.sinks.check_sinks.iter().enumerate() {
            let sig = &sink.signature;
            let Some(&cid) = self.class_by_name.get(sig.class.as_str()) else { continue };
            if let Some(&mid) = self.classes[cid.0 as usize].methods.get(&(sig.name.as_str(), sig.arity))
            {
                self.sink_methods.insert(mid, i);
            }
        }
    }

    pub fn class(&self, id: ClassId) -> &ClassInfo<'p> {
        &self.classes[id.0 as usize]
    }

    pub fn method(&self, id: MethodId) -> &MethodInfo<'p> {
        &self.methods[id.0 as usize]
    }

    pub fn num_methods(&self) -> usize {
        self.methods.len()
    }

    pub fn class_id(&self, name: &str) -> Option<ClassId> {
        self.class_by_name.get(name).copied()
    }

    pub fn method_id(&self, r: &MethodRef) -> Option<MethodId> {
        let cid = self.class_id(&r.class)?;
        self.classes[cid.0 as usize].methods.get(&(r.name.as_str(), r.arity)).copied()
    }

    pub fn method_ref(&self, id: MethodId) -> MethodRef {
        let info = self.method(id);
        let class = &self.class(info.class).def.name;
        MethodRef::new(class.clone(), info.def.name.clone(), info.def.arity)
    }

    /// Reflexive subtype cone of a class, over superclass and interface
    /// implementation edges.
    pub fn cone(&self, class: ClassId) -> &[ClassId] {
        &self.cones[class.0 as usize]
    }

    /// Runtime dispatch: the implementation a receiver of class `runtime`
    /// executes for `name/arity`. Walks the superclass chain, then the
    /// interface closure in declaration order.
    pub fn lookup_impl(&self, runtime: ClassId, name: &str, arity: u32) -> Option<MethodId> {
        let mut cur = Some(runtime);
        let mut guard = 0usize;
        while let Some(cid) = cur {
            let info = &self.classes[cid.0 as usize];
            if let Some(&mid) = info.methods.get(&(name, arity)) {
                return Some(mid);
            }
            guard += 1;
            if guard > self.classes.len() {
                return None;
            }
            cur = info.superclass;
        }
        let mut queue: Vec<ClassId> = self.classes[runtime.0 as usize].interfaces.clone();
        let mut seen: BTreeSet<ClassId> = queue.iter().copied().collect();
        let mut i = 0;
        while i < queue.len() {
            let info = &self.classes[queue[i].0 as usize];
            if let Some(&mid) = info.methods.get(&(name, arity)) {
                return Some(mid);
            }
            for next in info.interfaces.iter().chain(info.superclass.iter()) {
                if seen.insert(*next) {
                    queue.push(*next);
                }
            }
            i += 1;
        }
        None
    }

    /// Entry points in canonical row order.
    pub fn entry_rows(&self) -> &[MethodId] {
        &self.entry_rows
    }

    pub fn entry_row_index(&self, m: MethodId) -> Option<usize> {
        self.entry_row_of.get(&m).copied()
    }

    pub fn is_entry(&self, m: MethodId) -> bool {
        self.entry_row_of.contains_key(&m)
    }

    /// Index into the sink configuration when `m` is a configured check sink.
    pub fn sink_index(&self, m: MethodId) -> Option<usize> {
        self.sink_methods.get(&m).copied()
    }

    pub fn service_impl(&self, service: &str) -> Option<ClassId> {
        self.service_impls.get(service).copied()
    }

    /// Classes assumed instantiated at system start.
    pub fn init_classes(&self) -> impl Iterator<Item = ClassId> + '_ {
        self.services.init_classes.iter().filter_map(|c| self.class_id(c))
    }
}
