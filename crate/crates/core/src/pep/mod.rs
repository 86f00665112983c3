//! Permission enforcement point analysis: per-method control-flow graphs,
//! the identity-region discard, and backward string analysis recovering the
//! concrete permission names at each check site.

mod identity;
mod strings;

pub use identity::{IdentityState, identity_discard, identity_in_states};
pub use strings::resolve_permission_arg;

use crate::callgraph::{IdPepSite, PepSite};
use crate::ir::{Instruction, MethodDef, PermissionSet};
use crate::space::AnalysisSpace;
use std::collections::BTreeMap;

/// Per-method control-flow graph over instruction indices.
///
/// Node `i` is instruction `i`; entry is node 0. A `branch` has two
/// successors (fallthrough and target), a `goto` one, a `return` none.
/// Falling off the end of the body terminates the method.
#[derive(Debug, Clone)]
pub struct UnitGraph {
    succs: Vec<Vec<usize>>,
    preds: Vec<Vec<usize>>,
}

impl UnitGraph {
    pub fn len(&self) -> usize {
        self.succs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.succs.is_empty()
    }

    pub fn successors(&self, node: usize) -> &[usize] {
        &self.succs[node]
    }

    pub fn predecessors(&self, node: usize) -> &[usize] {
        &self.preds[node]
    }

    /// True when some instruction is reachable from itself.
    pub fn has_cycle(&self) -> bool {
        // Iterative DFS with colors; bodies are small but arbitrary.
        #[derive(Clone, Copy, PartialEq)]
        enum Color {
            White,
            Gray,
            Black,
        }
        let n = self.len();
        let mut color = vec![Color::White; n];
        for start in 0..n {
            if color[start] != Color::White {
                continue;
            }
            let mut stack: Vec<(usize, usize)> = vec![(start, 0)];
            color[start] = Color::Gray;
            while let Some(&mut (node, ref mut next)) = stack.last_mut() {
                if *next < self.succs[node].len() {
                    let succ = self.succs[node][*next];
                    *next += 1;
                    match color[succ] {
                        Color::Gray => return true,
                        Color::White => {
                            color[succ] = Color::Gray;
                            stack.push((succ, 0));
                        }
                        Color::Black => {}
                    }
                } else {
                    color[node] = Color::Black;
                    stack.pop();
                }
            }
        }
        false
    }

    /// Instruction indices from which `site` is reachable, excluding the
    /// site itself unless it sits on a cycle through itself.
    pub fn backward_region(&self, site: usize) -> Vec<bool> {
        let mut in_region = vec![false; self.len()];
        let mut stack: Vec<usize> = self.preds[site].to_vec();
        while let Some(n) = stack.pop() {
            if in_region[n] {
                continue;
            }
            in_region[n] = true;
            stack.extend(self.preds[n].iter().copied());
        }
        in_region
    }
}

/// Builds the control-flow graph of a method body. Labels must have been
/// resolved by parsing; unresolved targets cannot occur here.
pub fn build_unit_graph(def: &MethodDef) -> UnitGraph {
    let n = def.body.len();
    let labels: BTreeMap<&str, usize> = def
        .body
        .iter()
        .enumerate()
        .filter_map(|(i, instr)| match instr {
            Instruction::Label { name } => Some((name.as_str(), i)),
            _ => None,
        })
        .collect();
    let mut succs: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (i, instr) in def.body.iter().enumerate() {
        match instr {
            Instruction::Return => {}
            Instruction::Goto { label } => succs[i].push(labels[label.as_str()]),
            Instruction::Branch { label } => {
                if i + 1 < n {
                    succs[i].push(i + 1);
                }
                let target = labels[label.as_str()];
                if !succs[i].contains(&target) {
                    succs[i].push(target);
                }
            }
            _ => {
                if i + 1 < n {
                    succs[i].push(i + 1);
                }
            }
        }
    }
    let mut preds: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (i, ss) in succs.iter().enumerate() {
        for &s in ss {
            preds[s].push(i);
        }
    }
    UnitGraph { succs, preds }
}

/// How a check site resolved.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PepStatus {
    Resolved,
    Unresolved(UnresolvedReason),
    DiscardedIdentity,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UnresolvedReason {
    /// No backward path yielded a vocabulary literal.
    NoVocabularyLiteral,
    /// A caller chain was cut by the ascent budget before completion.
    AscentBudgetExhausted,
}

impl UnresolvedReason {
    pub fn as_str(self) -> &'static str {
        match self {
            UnresolvedReason::NoVocabularyLiteral => "no vocabulary literal reaches the argument",
            UnresolvedReason::AscentBudgetExhausted => "caller ascent budget exhausted",
        }
    }
}

/// Resolution result for one check site.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IdPepResolution {
    pub site: IdPepSite,
    pub status: PepStatus,
    pub permissions: PermissionSet,
}

/// Name-level resolution result.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PepResolution {
    pub site: PepSite,
    pub status: PepStatus,
    pub permissions: PermissionSet,
}

impl IdPepResolution {
    pub fn materialize(&self, space: &AnalysisSpace<'_>) -> PepResolution {
        let sc = &space.sinks.check_sinks[self.site.sink_config_index];
        PepResolution {
            site: PepSite {
                method: space.method_ref(self.site.method),
                site_index: self.site.site_index,
                sink: space.method_ref(self.site.sink),
                arg_shape: sc.arg_shape,
            },
            status: self.status.clone(),
            permissions: self.permissions.clone(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ir::parse_program;

    fn body_of(doc: &str) -> MethodDef {
        let p = parse_program(doc.as_bytes()).unwrap();
        p.classes[0].methods[0].clone()
    }

    fn method_doc(body: &str) -> String {
        format!(
            r#"{{"kind":"framework","name":"fw","classes":[
                {{"name":"A","public":true,"methods":[
                    {{"name":"m","arity":0,"public":true,"constructor":false,"locals":4,"body":{body}}}
                ]}}
            ]}}"#
        )
    }

    #[test]
    fn straight_line_body_is_a_path_graph() {
        let def = body_of(&method_doc(r#"[["const_str",0,"p1"],["move",1,0],["return"]]"#));
        let g = build_unit_graph(&def);
        assert_eq!(g.len(), 3);
        assert_eq!(g.successors(0), &[1]);
        assert_eq!(g.successors(1), &[2]);
        assert!(g.successors(2).is_empty());
        assert!(!g.has_cycle());
    }

    #[test]
    fn branch_has_two_successors() {
        let def = body_of(&method_doc(
            r#"[["branch","L"],["const_str",0,"p1"],["label","L"],["return"]]"#,
        ));
        let g = build_unit_graph(&def);
        assert_eq!(g.successors(0), &[1, 2]);
        assert!(!g.has_cycle());
    }

    #[test]
    fn label_goto_self_is_a_cycle() {
        let def = body_of(&method_doc(r#"[["label","L"],["goto","L"]]"#));
        let g = build_unit_graph(&def);
        assert_eq!(g.successors(1), &[0]);
        assert!(g.has_cycle());
    }

    #[test]
    fn backward_region_follows_predecessors() {
        let def = body_of(&method_doc(
            r#"[["branch","L"],["const_str",0,"p1"],["label","L"],["const_str",1,"p2"],["return"]]"#,
        ));
        let g = build_unit_graph(&def);
        let region = g.backward_region(3);
        assert_eq!(region, vec![true, true, true, false, false]);
    }
}
