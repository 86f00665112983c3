//! The permission-based intermediate representation (PBIR) and its sidecar
//! documents: manifest, service table and sink configuration.
//!
//! PBIR is a minimal textual IR that keeps exactly the phenomena the
//! analyses care about: virtual dispatch over a single-inheritance class
//! hierarchy with interfaces, string constants and string arrays, service
//! lookup indirection, and identity brackets around permission checks.
//! Permission checks and identity brackets are ordinary invokes to
//! signatures designated by the [`SinkConfig`].

mod parse;
mod validate;

pub use parse::{
    ParseError, parse_manifest, parse_program, parse_service_table, parse_sink_config,
    serialize_manifest, serialize_program, serialize_service_table, serialize_sink_config,
};
pub use validate::{Issue, IssueKind, ValidationReport, validate, validate_manifest};

use serde::{Deserialize, Serialize, Serializer};
use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

/// Whether a program is the permission-enforcing layer or code built on it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProgramKind {
    Framework,
    Application,
}

/// One PBIR unit: a framework or an application.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Program {
    pub kind: ProgramKind,
    pub name: String,
    pub classes: Vec<ClassDef>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ClassDef {
    pub name: String,
    #[serde(rename = "super", skip_serializing_if = "Option::is_none")]
    pub superclass: Option<String>,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub interfaces: Vec<String>,
    #[serde(rename = "public")]
    pub is_public: bool,
    pub methods: Vec<MethodDef>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct MethodDef {
    pub name: String,
    pub arity: u32,
    #[serde(rename = "public")]
    pub is_public: bool,
    #[serde(rename = "constructor")]
    pub is_constructor: bool,
    /// Scratch slots in addition to the `arity` parameter slots; locals
    /// `0..arity` hold the arguments, `arity..arity+locals` are scratch.
    pub locals: u32,
    pub body: Vec<Instruction>,
}

/// A method reference `Class::name/arity`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct MethodRef {
    pub class: String,
    pub name: String,
    pub arity: u32,
}

impl MethodRef {
    pub fn new(class: impl Into<String>, name: impl Into<String>, arity: u32) -> Self {
        Self { class: class.into(), name: name.into(), arity }
    }
}

impl fmt::Display for MethodRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}::{}/{}", self.class, self.name, self.arity)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("malformed method reference {0:?}, expected \"Class::name/arity\"")]
pub struct MethodRefParseError(pub String);

impl FromStr for MethodRef {
    type Err = MethodRefParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || MethodRefParseError(s.to_string());
        let (class, rest) = s.split_once("::").ok_or_else(bad)?;
        let (name, arity) = rest.rsplit_once('/').ok_or_else(bad)?;
        if class.is_empty() || name.is_empty() {
            return Err(bad());
        }
        let arity: u32 = arity.parse().map_err(|_| bad())?;
        Ok(MethodRef::new(class, name, arity))
    }
}

impl Serialize for MethodRef {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for MethodRef {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum InvokeKind {
    Static,
    Virtual,
    Direct,
}

impl InvokeKind {
    pub fn as_str(self) -> &'static str {
        match self {
            InvokeKind::Static => "static",
            InvokeKind::Virtual => "virtual",
            InvokeKind::Direct => "direct",
        }
    }
}

/// PBIR instructions. Locals are slot indices; labels are body-local names.
///
/// `Branch` is a nondeterministic two-way branch: execution may fall through
/// or jump. `Reflective` marks a dynamic feature the analyses refuse to
/// reason about. Invokes have no result value; data flows only through
/// locals within one method and through call arguments.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Instruction {
    ConstStr { dst: u32, literal: String },
    Move { dst: u32, src: u32 },
    NewObj { dst: u32, class: String },
    ArrayNew { dst: u32, length: u32 },
    ArrayStore { array: u32, index: u32, src: u32 },
    Invoke { kind: InvokeKind, target: MethodRef, receiver: Option<u32>, args: Vec<u32> },
    GetService { dst: u32, service: String },
    Label { name: String },
    Goto { label: String },
    Branch { label: String },
    Reflective,
    Return,
}

/// A lexicographically sorted, duplicate-free set of permission names.
///
/// Permissions are flat tokens: no grouping, no hierarchy, no implication.
/// The canonical order makes every serialized artifact byte-stable.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct PermissionSet(Vec<String>);

impl PermissionSet {
    pub fn new() -> Self {
        Self(Vec::new())
    }

    pub fn insert(&mut self, perm: impl Into<String>) {
        let perm = perm.into();
        if let Err(pos) = self.0.binary_search(&perm) {
            self.0.insert(pos, perm);
        }
    }

    pub fn contains(&self, perm: &str) -> bool {
        self.0.binary_search_by(|p| p.as_str().cmp(perm)).is_ok()
    }

    /// Index of `perm` in canonical order.
    pub fn index_of(&self, perm: &str) -> Option<usize> {
        self.0.binary_search_by(|p| p.as_str().cmp(perm)).ok()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &str> {
        self.0.iter().map(String::as_str)
    }

    pub fn union(&self, other: &PermissionSet) -> PermissionSet {
        let mut v = self.0.clone();
        v.extend(other.0.iter().cloned());
        v.sort();
        v.dedup();
        PermissionSet(v)
    }

    /// `self \ other`.
    pub fn difference(&self, other: &PermissionSet) -> PermissionSet {
        PermissionSet(self.0.iter().filter(|p| !other.contains(p)).cloned().collect())
    }

    pub fn intersection(&self, other: &PermissionSet) -> PermissionSet {
        PermissionSet(self.0.iter().filter(|p| other.contains(p)).cloned().collect())
    }

    pub fn is_subset(&self, other: &PermissionSet) -> bool {
        self.0.iter().all(|p| other.contains(p))
    }

    pub fn as_slice(&self) -> &[String] {
        &self.0
    }
}

impl<S: Into<String>> FromIterator<S> for PermissionSet {
    fn from_iter<I: IntoIterator<Item = S>>(iter: I) -> Self {
        let mut v: Vec<String> = iter.into_iter().map(Into::into).collect();
        v.sort();
        v.dedup();
        Self(v)
    }
}

impl fmt::Display for PermissionSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{{}}}", self.0.join(", "))
    }
}

impl Serialize for PermissionSet {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        self.0.serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for PermissionSet {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let v = Vec::<String>::deserialize(deserializer)?;
        Ok(PermissionSet::from_iter(v))
    }
}

/// Application manifest: declared permissions plus the start methods.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    #[serde(rename = "app")]
    pub app_name: String,
    pub declared: PermissionSet,
    pub roots: Vec<MethodRef>,
}

/// Service lookup table: name-to-implementation bindings plus the classes
/// assumed instantiated at system start.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ServiceTable {
    pub bindings: BTreeMap<String, String>,
    #[serde(rename = "init")]
    pub init_classes: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ArgShape {
    Single,
    Array,
}

/// One designated permission-check signature and where its permission
/// argument sits.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CheckSink {
    #[serde(rename = "sig")]
    pub signature: MethodRef,
    #[serde(rename = "arg")]
    pub perm_arg_index: u32,
    #[serde(rename = "shape")]
    pub arg_shape: ArgShape,
}

/// Permission vocabulary, check-sink signatures and identity-bracket
/// signatures.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SinkConfig {
    pub vocabulary: PermissionSet,
    #[serde(rename = "sinks")]
    pub check_sinks: Vec<CheckSink>,
    #[serde(rename = "clear_sig")]
    pub clear_identity_sig: MethodRef,
    #[serde(rename = "restore_sig")]
    pub restore_identity_sig: MethodRef,
}

impl SinkConfig {
    pub fn sink_for(&self, target: &MethodRef) -> Option<&CheckSink> {
        self.check_sinks.iter().find(|s| &s.signature == target)
    }
}

/// Outcome of scanning a program for dynamic features the analyses refuse.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DynamicFeatures {
    Clean,
    Flagged(Vec<MethodRef>),
}

impl DynamicFeatures {
    pub fn is_clean(&self) -> bool {
        matches!(self, DynamicFeatures::Clean)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("expected a framework program, got an application ({0})")]
pub struct WrongProgramKind(pub String);

/// All public methods (including constructors) of public classes, sorted by
/// `(class, name, arity)`. This ordered list is the row index space of the
/// permission access matrix and of access vectors.
pub fn entry_points(p: &Program) -> Result<Vec<MethodRef>, WrongProgramKind> {
    if p.kind != ProgramKind::Framework {
        return Err(WrongProgramKind(p.name.clone()));
    }
    let mut out: Vec<MethodRef> = p
        .classes
        .iter()
        .filter(|c| c.is_public)
        .flat_map(|c| {
            c.methods
                .iter()
                .filter(|m| m.is_public)
                .map(|m| MethodRef::new(c.name.clone(), m.name.clone(), m.arity))
        })
        .collect();
    out.sort();
    out.dedup();
    Ok(out)
}

/// Flags every method whose body contains a reflective marker.
pub fn has_dynamic_features(p: &Program) -> DynamicFeatures {
    let mut offenders: Vec<MethodRef> = Vec::new();
    for c in &p.classes {
        for m in &c.methods {
            if m.body.iter().any(|i| matches!(i, Instruction::Reflective)) {
                offenders.push(MethodRef::new(c.name.clone(), m.name.clone(), m.arity));
            }
        }
    }
    offenders.sort();
    if offenders.is_empty() { DynamicFeatures::Clean } else { DynamicFeatures::Flagged(offenders) }
}
