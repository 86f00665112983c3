//! Per-entry-point call graph construction.
//!
//! One graph is built per root by a worklist fixpoint over the resolution
//! rules. Virtual dispatch resolves by class-hierarchy analysis (every
//! subtype of the static receiver class) or by rapid type analysis (only
//! subtypes instantiated somewhere in the graph, seeded with the service
//! init classes and grown monotonically from reached `new_obj` and
//! `get_service` instructions until the graph is stable). Service lookups
//! redirect virtual calls on their destination locals to the bound
//! implementation class, with no widening to subclasses.

use crate::ir::{ArgShape, InvokeKind, MethodRef, SinkConfig};
use crate::space::{AnalysisSpace, CallSite, ClassId, MethodId};
use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt::Write as _;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Mode {
    Cha,
    Rta,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Cha => "cha",
            Mode::Rta => "rta",
        }
    }
}

impl std::str::FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "cha" => Ok(Mode::Cha),
            "rta" => Ok(Mode::Rta),
            other => Err(format!("unknown mode {other:?}, expected cha or rta")),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ResolveError {
    #[error("unresolved static target {0}")]
    UnresolvedTarget(MethodRef),
    #[error("unbound service name {0:?}")]
    UnboundService(String),
    #[error("root {0} does not resolve")]
    UnresolvedRoot(MethodRef),
}

/// Shared read-only dispatch inputs plus the set of classes assumed
/// instantiated (grown during RTA graph construction).
pub struct DispatchContext<'s, 'p> {
    pub space: &'s AnalysisSpace<'p>,
    pub instantiated: BTreeSet<ClassId>,
}

impl<'s, 'p> DispatchContext<'s, 'p> {
    /// Seeds the instantiated set with the service init classes.
    pub fn new(space: &'s AnalysisSpace<'p>) -> Self {
        Self { space, instantiated: space.init_classes().collect() }
    }

    /// Resolves a service lookup to the bound implementation class: exactly
    /// the bound class, never widened to its subclasses.
    pub fn resolve_service(&self, service: &str) -> Result<ClassId, ResolveError> {
        self.space
            .service_impl(service)
            .ok_or_else(|| ResolveError::UnboundService(service.to_string()))
    }
}

/// Resolves one invoke against the hierarchy.
///
/// `service_classes` carries the per-method service bindings of the
/// receiver local, when any; such calls dispatch against the bound
/// implementation classes directly.
pub fn resolve_call(
    site: &CallSite<'_>,
    ctx: &DispatchContext<'_, '_>,
    mode: Mode,
    service_classes: Option<&BTreeSet<ClassId>>,
) -> Result<BTreeSet<MethodId>, ResolveError> {
    let space = ctx.space;
    let unresolved = || ResolveError::UnresolvedTarget(site.target.clone());
    let target_class = site.target_class.ok_or_else(unresolved)?;
    let name = site.target.name.as_str();
    let arity = site.target.arity;

    match site.kind {
        InvokeKind::Static | InvokeKind::Direct => {
            let m = space.lookup_impl(target_class, name, arity).ok_or_else(unresolved)?;
            Ok(BTreeSet::from([m]))
        }
        InvokeKind::Virtual => {
            if let Some(classes) = service_classes {
                let mut out = BTreeSet::new();
                for &c in classes {
                    if let Some(m) = space.lookup_impl(c, name, arity) {
                        out.insert(m);
                    }
                }
                return Ok(out);
            }
            // Candidate runtime classes, then the implementation each one
            // would dispatch to.
            let mut out = BTreeSet::new();
            let mut any_candidate = false;
            for &c in space.cone(target_class) {
                if mode == Mode::Rta && !ctx.instantiated.contains(&c) {
                    continue;
                }
                any_candidate = true;
                if let Some(m) = space.lookup_impl(c, name, arity) {
                    out.insert(m);
                }
            }
            if out.is_empty() && !any_candidate {
                // Nothing instantiated in the cone (RTA): dead dispatch.
                return Ok(out);
            }
            if out.is_empty() && space.lookup_impl(target_class, name, arity).is_none() {
                return Err(unresolved());
            }
            Ok(out)
        }
    }
}

/// Directed call graph rooted at one method.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CallGraph {
    pub root: MethodRef,
    pub nodes: BTreeSet<MethodRef>,
    pub edges: BTreeSet<(MethodRef, u32, MethodRef)>,
    pub mode: Mode,
}

/// Id-level call graph used inside the pipeline.
#[derive(Debug, Clone)]
pub struct IdGraph {
    pub root: MethodId,
    pub nodes: BTreeSet<MethodId>,
    pub edges: BTreeSet<(MethodId, u32, MethodId)>,
    pub mode: Mode,
    /// Final instantiated set (RTA fixpoint result; init classes for CHA).
    pub instantiated: BTreeSet<ClassId>,
}

impl IdGraph {
    /// Caller edges grouped by callee, for ascent during string analysis.
    pub fn callers_index(&self) -> BTreeMap<MethodId, Vec<(MethodId, u32)>> {
        let mut index: BTreeMap<MethodId, Vec<(MethodId, u32)>> = BTreeMap::new();
        for (caller, site, callee) in &self.edges {
            index.entry(*callee).or_default().push((*caller, *site));
        }
        index
    }

    pub fn materialize(&self, space: &AnalysisSpace<'_>) -> CallGraph {
        CallGraph {
            root: space.method_ref(self.root),
            nodes: self.nodes.iter().map(|m| space.method_ref(*m)).collect(),
            edges: self
                .edges
                .iter()
                .map(|(a, s, b)| (space.method_ref(*a), *s, space.method_ref(*b)))
                .collect(),
            mode: self.mode,
        }
    }
}

/// Worklist fixpoint from `root`. In RTA mode the instantiated set grows
/// from reached bodies and dispatch is re-resolved until stable. When
/// `max_depth` is set, call sites of methods at that call-chain depth from
/// the root are not explored.
pub fn build_id_graph(
    space: &AnalysisSpace<'_>,
    root: MethodId,
    mode: Mode,
    max_depth: Option<u32>,
) -> Result<IdGraph, ResolveError> {
    let mut ctx = DispatchContext::new(space);
    loop {
        let mut nodes: BTreeSet<MethodId> = BTreeSet::new();
        let mut edges: BTreeSet<(MethodId, u32, MethodId)> = BTreeSet::new();
        // Shortest known depth per method; re-enqueue on improvement so a
        // depth cap cannot depend on discovery order.
        let mut depth: BTreeMap<MethodId, u32> = BTreeMap::new();
        let mut queue: VecDeque<MethodId> = VecDeque::new();
        nodes.insert(root);
        depth.insert(root, 0);
        queue.push_back(root);

        while let Some(m) = queue.pop_front() {
            let d = depth[&m];
            if max_depth.is_some_and(|cap| d >= cap) {
                continue;
            }
            let info = space.method(m);
            for site in &info.call_sites {
                let service_classes = site
                    .receiver
                    .and_then(|r| info.service_locals.get(&r))
                    .filter(|s| site.kind == InvokeKind::Virtual && !s.is_empty());
                let targets = resolve_call(site, &ctx, mode, service_classes)?;
                for callee in targets {
                    edges.insert((m, site.index as u32, callee));
                    let improved = match depth.get(&callee) {
                        None => true,
                        Some(&old) => d + 1 < old,
                    };
                    if improved {
                        depth.insert(callee, d + 1);
                        nodes.insert(callee);
                        queue.push_back(callee);
                    }
                }
            }
        }

        if mode == Mode::Cha {
            return Ok(IdGraph { root, nodes, edges, mode, instantiated: ctx.instantiated });
        }
        // RTA: grow the instantiated set from reached bodies; redo until the
        // graph no longer changes.
        let mut grown = false;
        for &m in &nodes {
            for &c in &space.method(m).instantiates {
                grown |= ctx.instantiated.insert(c);
            }
        }
        if !grown {
            return Ok(IdGraph { root, nodes, edges, mode, instantiated: ctx.instantiated });
        }
    }
}

/// Builds the call graph for one root, resolving the root reference first.
pub fn build_call_graph(
    space: &AnalysisSpace<'_>,
    root: &MethodRef,
    mode: Mode,
    max_depth: Option<u32>,
) -> Result<CallGraph, ResolveError> {
    let root_id =
        space.method_id(root).ok_or_else(|| ResolveError::UnresolvedRoot(root.clone()))?;
    Ok(build_id_graph(space, root_id, mode, max_depth)?.materialize(space))
}

/// A call site whose resolved callee is a configured check sink.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct PepSite {
    pub method: MethodRef,
    pub site_index: u32,
    pub sink: MethodRef,
    pub arg_shape: ArgShape,
}

/// Id-level PEP site used inside the pipeline.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct IdPepSite {
    pub method: MethodId,
    pub site_index: u32,
    pub sink: MethodId,
    pub sink_config_index: usize,
}

/// Every call site in the graph whose resolved callee is a check sink, in
/// deterministic `(method, site)` order.
pub fn reachable_pep_sites_ids(space: &AnalysisSpace<'_>, g: &IdGraph) -> Vec<IdPepSite> {
    let mut out: Vec<IdPepSite> = g
        .edges
        .iter()
        .filter_map(|(caller, site, callee)| {
            space.sink_index(*callee).map(|sink_config_index| IdPepSite {
                method: *caller,
                site_index: *site,
                sink: *callee,
                sink_config_index,
            })
        })
        .collect();
    out.sort();
    out.dedup();
    out
}

pub fn reachable_pep_sites(
    space: &AnalysisSpace<'_>,
    g: &IdGraph,
    sc: &SinkConfig,
) -> Vec<PepSite> {
    reachable_pep_sites_ids(space, g)
        .into_iter()
        .map(|s| PepSite {
            method: space.method_ref(s.method),
            site_index: s.site_index,
            sink: space.method_ref(s.sink),
            arg_shape: sc.check_sinks[s.sink_config_index].arg_shape,
        })
        .collect()
}

impl CallGraph {
    /// DOT rendering; PEP nodes (configured check sinks) are annotated.
    pub fn to_dot(&self, sc: &SinkConfig) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "digraph callgraph {{");
        let _ = writeln!(s, "  label=\"{} ({})\";", self.root, self.mode.as_str());
        for node in &self.nodes {
            let pep = sc.check_sinks.iter().any(|k| &k.signature == node);
            let attrs = if pep {
                " [shape=diamond, style=filled, fillcolor=lightgoldenrod, xlabel=\"PEP\"]"
            } else if node == &self.root {
                " [shape=box, style=bold]"
            } else {
                ""
            };
            let _ = writeln!(s, "  \"{node}\"{attrs};");
        }
        for (from, site, to) in &self.edges {
            let _ = writeln!(s, "  \"{from}\" -> \"{to}\" [label=\"{site}\"];");
        }
        let _ = writeln!(s, "}}");
        s
    }

    /// JSON adjacency rendering with PEP annotations.
    pub fn to_json(&self, sc: &SinkConfig) -> String {
        #[derive(serde::Serialize)]
        struct Node {
            id: String,
            pep: bool,
        }
        #[derive(serde::Serialize)]
        struct Doc {
            root: String,
            mode: &'static str,
            nodes: Vec<Node>,
            edges: Vec<(String, u32, String)>,
        }
        let doc = Doc {
            root: self.root.to_string(),
            mode: self.mode.as_str(),
            nodes: self
                .nodes
                .iter()
                .map(|n| Node {
                    id: n.to_string(),
                    pep: sc.check_sinks.iter().any(|k| &k.signature == n),
                })
                .collect(),
            edges: self
                .edges
                .iter()
                .map(|(a, s, b)| (a.to_string(), *s, b.to_string()))
                .collect(),
        };
        let mut out = serde_json::to_string_pretty(&doc).expect("serialization cannot fail");
        out.push('\n');
        out
    }
}
