//! Service-identity regions: a forward must-analysis over the per-method
//! control-flow graph with the lattice `{caller, cleared, unknown}`.
//!
//! Code between an identity-clear call and the matching restore runs under
//! the service's own identity, so its permission checks do not bind the
//! calling application. Discarding is a must decision: only sites cleared
//! on *every* path may be removed, because a discard weakens the inferred
//! set.

use super::{IdPepResolution, PepStatus, build_unit_graph};
use crate::callgraph::IdPepSite;
use crate::ir::{Instruction, MethodDef, PermissionSet, SinkConfig};
use crate::space::AnalysisSpace;
use std::collections::BTreeMap;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IdentityState {
    Caller,
    Cleared,
    Unknown,
}

impl IdentityState {
    fn join(a: IdentityState, b: IdentityState) -> IdentityState {
        if a == b { a } else { IdentityState::Unknown }
    }
}

/// In-states per instruction; `None` marks instructions unreachable from
/// the method entry. Entry state is `Caller`: the intra-procedural analysis
/// assumes the caller's identity on entry.
pub fn identity_in_states(def: &MethodDef, sc: &SinkConfig) -> Vec<Option<IdentityState>> {
    let n = def.body.len();
    let graph = build_unit_graph(def);
    let transfer = |i: usize, state: IdentityState| -> IdentityState {
        match &def.body[i] {
            Instruction::Invoke { target, .. } if *target == sc.clear_identity_sig => {
                IdentityState::Cleared
            }
            Instruction::Invoke { target, .. } if *target == sc.restore_identity_sig => {
                IdentityState::Caller
            }
            _ => state,
        }
    };
    let mut in_states: Vec<Option<IdentityState>> = vec![None; n];
    if n == 0 {
        return in_states;
    }
    in_states[0] = Some(IdentityState::Caller);
    let mut worklist = vec![0usize];
    while let Some(i) = worklist.pop() {
        let out = transfer(i, in_states[i].expect("worklist nodes have in-states"));
        for &succ in graph.successors(i) {
            let joined = match in_states[succ] {
                None => out,
                Some(old) => IdentityState::join(old, out),
            };
            if in_states[succ] != Some(joined) {
                in_states[succ] = Some(joined);
                worklist.push(succ);
            }
        }
    }
    in_states
}

/// Splits check sites into those definitely executed under the service's
/// identity (discarded) and those that proceed to string resolution.
pub fn identity_discard(
    space: &AnalysisSpace<'_>,
    sites: &[IdPepSite],
) -> (Vec<IdPepResolution>, Vec<IdPepSite>) {
    let mut by_method: BTreeMap<crate::space::MethodId, Vec<&IdPepSite>> = BTreeMap::new();
    for site in sites {
        by_method.entry(site.method).or_default().push(site);
    }
    let mut discarded = Vec::new();
    let mut survivors = Vec::new();
    for (method, sites) in by_method {
        let states = identity_in_states(space.method(method).def, space.sinks);
        for site in sites {
            if states[site.site_index as usize] == Some(IdentityState::Cleared) {
                discarded.push(IdPepResolution {
                    site: *site,
                    status: PepStatus::DiscardedIdentity,
                    permissions: PermissionSet::new(),
                });
            } else {
                survivors.push(*site);
            }
        }
    }
    (discarded, survivors)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ir::{MethodRef, PermissionSet, parse_program};

    fn sinks() -> SinkConfig {
        SinkConfig {
            vocabulary: PermissionSet::from_iter(["p1", "p2", "p3"]),
            check_sinks: vec![crate::ir::CheckSink {
                signature: MethodRef::new("Sys", "check", 1),
                perm_arg_index: 0,
                arg_shape: crate::ir::ArgShape::Single,
            }],
            clear_identity_sig: MethodRef::new("Sys", "clearId", 0),
            restore_identity_sig: MethodRef::new("Sys", "restoreId", 0),
        }
    }

    fn method_with_body(body: &str) -> MethodDef {
        let doc = format!(
            r#"{{"kind":"framework","name":"fw","classes":[
                {{"name":"A","public":true,"methods":[
                    {{"name":"m","arity":0,"public":true,"constructor":false,"locals":4,"body":{body}}}
                ]}}
            ]}}"#
        );
        parse_program(doc.as_bytes()).unwrap().classes[0].methods[0].clone()
    }

    #[test]
    fn check_between_clear_and_restore_is_cleared_on_all_paths() {
        let def = method_with_body(
            r#"[["invoke","static","Sys::clearId/0",null,[]],
                ["const_str",0,"p1"],
                ["invoke","static","Sys::check/1",null,[0]],
                ["invoke","static","Sys::restoreId/0",null,[]],
                ["return"]]"#,
        );
        let states = identity_in_states(&def, &sinks());
        assert_eq!(states[2], Some(IdentityState::Cleared));
        // After the restore the state is back to caller.
        assert_eq!(states[4], Some(IdentityState::Caller));
    }

    #[test]
    fn check_before_any_clear_keeps_caller_state() {
        let def = method_with_body(
            r#"[["const_str",0,"p1"],
                ["invoke","static","Sys::check/1",null,[0]],
                ["invoke","static","Sys::clearId/0",null,[]],
                ["return"]]"#,
        );
        let states = identity_in_states(&def, &sinks());
        assert_eq!(states[1], Some(IdentityState::Caller));
    }

    #[test]
    fn mixed_paths_join_to_unknown() {
        // One path passes through the clear, the other jumps over it; the
        // check is not definitely cleared, so it must be kept.
        let def = method_with_body(
            r#"[["branch","L"],
                ["invoke","static","Sys::clearId/0",null,[]],
                ["label","L"],
                ["const_str",0,"p1"],
                ["invoke","static","Sys::check/1",null,[0]],
                ["return"]]"#,
        );
        let states = identity_in_states(&def, &sinks());
        assert_eq!(states[4], Some(IdentityState::Unknown));
    }
}
