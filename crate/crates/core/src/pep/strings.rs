//! Backward intra-procedural string analysis with bounded caller ascent.
//!
//! Starting from a check site, the permission argument local is chased
//! through move chains over the instructions backward-reachable from the
//! site (flow-insensitive within that region): string constants contribute
//! their literal when it belongs to the vocabulary, array arguments collect
//! every vocabulary literal stored into the array, and arguments that trace
//! to a method parameter recurse into every caller call site recorded in
//! the call-graph edge index, decrementing the ascent budget per level.
//!
//! The result over-approximates every runtime flow: any value reaching the
//! site at runtime was produced by definitions on some path to the site,
//! all of which lie in the backward region (or in a caller, reached by
//! ascent). A resolution is only reported when no pending ascent was cut by
//! the budget; a partial union is never presented as resolved.

use super::{IdPepResolution, PepStatus, UnresolvedReason, build_unit_graph};
use crate::callgraph::IdPepSite;
use crate::ir::{ArgShape, Instruction, PermissionSet};
use crate::space::{AnalysisSpace, MethodId};
use std::collections::{BTreeMap, BTreeSet};

/// Caller edges grouped by callee: `callee -> [(caller, site index)]`.
pub type CallersIndex = BTreeMap<MethodId, Vec<(MethodId, u32)>>;

struct Tracer<'a, 'p> {
    space: &'a AnalysisSpace<'p>,
    callers: &'a CallersIndex,
    perms: BTreeSet<String>,
    complete: bool,
    visited: BTreeSet<(MethodId, u32, u32, bool)>,
}

impl<'a, 'p> Tracer<'a, 'p> {
    /// Traces `local` backward from `site_index` inside `method`.
    /// `budget` counts remaining caller-ascent levels.
    fn trace(&mut self, method: MethodId, site_index: u32, local: u32, shape: ArgShape, budget: u32) {
        let is_array = matches!(shape, ArgShape::Array);
        if !self.visited.insert((method, site_index, local, is_array)) {
            return;
        }
        let def = self.space.method(method).def;
        let graph = build_unit_graph(def);
        if def.body.is_empty() {
            return;
        }
        let region = graph.backward_region(site_index as usize);
        // A parameter's implicit definition sits before instruction 0, so it
        // reaches the site when the entry is in the region or the site is
        // the entry itself.
        let entry_def_reaches = region.first().copied().unwrap_or(false) || site_index == 0;

        // Alias closure over move chains within the region.
        let mut aliases: BTreeSet<u32> = BTreeSet::from([local]);
        loop {
            let mut grew = false;
            for (i, instr) in def.body.iter().enumerate() {
                if !region[i] {
                    continue;
                }
                if let Instruction::Move { dst, src } = instr
                    && aliases.contains(dst)
                {
                    grew |= aliases.insert(*src);
                }
            }
            if !grew {
                break;
            }
        }

        let mut pending_params: BTreeSet<u32> = BTreeSet::new();
        for &a in &aliases {
            if a < def.arity && entry_def_reaches {
                pending_params.insert(a);
            }
        }

        match shape {
            ArgShape::Single => {
                for (i, instr) in def.body.iter().enumerate() {
                    if !region[i] {
                        continue;
                    }
                    if let Instruction::ConstStr { dst, literal } = instr
                        && aliases.contains(dst)
                        && self.space.sinks.vocabulary.contains(literal)
                    {
                        self.perms.insert(literal.clone());
                    }
                }
            }
            ArgShape::Array => {
                let mut stored: Vec<u32> = Vec::new();
                for (i, instr) in def.body.iter().enumerate() {
                    if !region[i] {
                        continue;
                    }
                    if let Instruction::ArrayStore { array, src, .. } = instr
                        && aliases.contains(array)
                    {
                        stored.push(*src);
                    }
                }
                for src in stored {
                    self.trace(method, site_index, src, ArgShape::Single, budget);
                }
            }
        }

        for param in pending_params {
            let Some(callers) = self.callers.get(&method) else { continue };
            if callers.is_empty() {
                continue;
            }
            if budget == 0 {
                self.complete = false;
                continue;
            }
            for &(caller, caller_site) in callers {
                let caller_def = self.space.method(caller).def;
                let Some(Instruction::Invoke { args, .. }) =
                    caller_def.body.get(caller_site as usize)
                else {
                    continue;
                };
                let Some(&actual) = args.get(param as usize) else { continue };
                self.trace(caller, caller_site, actual, shape, budget - 1);
            }
        }
    }
}

/// Recovers the permission names flowing into the check site's permission
/// argument. `callers` must be the edge index of the call graph the site
/// was discovered in, so ascent stays within that graph.
pub fn resolve_permission_arg(
    space: &AnalysisSpace<'_>,
    site: &IdPepSite,
    callers: &CallersIndex,
    ascent_budget: u32,
) -> IdPepResolution {
    let sink = &space.sinks.check_sinks[site.sink_config_index];
    let def = space.method(site.method).def;
    let arg_local = match def.body.get(site.site_index as usize) {
        Some(Instruction::Invoke { args, .. }) => {
            args.get(sink.perm_arg_index as usize).copied()
        }
        _ => None,
    };
    let Some(arg_local) = arg_local else {
        // The site does not address an invoke with enough arguments;
        // validation rejects such programs, so treat as unresolved.
        return IdPepResolution {
            site: *site,
            status: PepStatus::Unresolved(UnresolvedReason::NoVocabularyLiteral),
            permissions: PermissionSet::new(),
        };
    };

    let mut tracer = Tracer {
        space,
        callers,
        perms: BTreeSet::new(),
        complete: true,
        visited: BTreeSet::new(),
    };
    tracer.trace(site.method, site.site_index, arg_local, sink.arg_shape, ascent_budget);

    let permissions = PermissionSet::from_iter(tracer.perms);
    let status = if !tracer.complete {
        PepStatus::Unresolved(UnresolvedReason::AscentBudgetExhausted)
    } else if permissions.is_empty() {
        PepStatus::Unresolved(UnresolvedReason::NoVocabularyLiteral)
    } else {
        PepStatus::Resolved
    };
    let permissions =
        if matches!(status, PepStatus::Resolved) { permissions } else { PermissionSet::new() };
    IdPepResolution { site: *site, status, permissions }
}
