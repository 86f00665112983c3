//! Static analysis toolkit for permission-based frameworks.
//!
//! Given a framework and an application in a small permission-based
//! intermediate representation (PBIR), this crate computes:
//!
//! * the framework's entry-point-to-permission map `M`, a boolean matrix
//!   with one row per public API method and one column per permission,
//! * an application's access vector `AV`, the framework entry points its
//!   reachable code may call,
//! * the inferred permission vector `IP = AV × M` under AND/OR algebra,
//! * the permission gap (declared permissions never usable by the code),
//!   whose size is the unnecessary attack surface of the application.
//!
//! The pipeline is: [`ir`] parses and validates documents, [`callgraph`]
//! builds one call graph per entry point (CHA or RTA dispatch, with
//! service-lookup redirection), [`pep`] recovers concrete permission names
//! at check sites via backward string analysis and discards checks that run
//! under the service's own identity, [`mapper`] assembles the matrix and the
//! gap report, and [`sniffer`] extracts access vectors from applications.
//! [`oracle`] is a bounded exhaustive interpreter used as the dynamic
//! (under-approximating) counterpart of the static results, plus a seeded
//! corpus generator for differential testing.

pub mod bits;
pub mod callgraph;
pub mod ir;
pub mod mapper;
pub mod oracle;
pub mod pep;
pub mod pipeline;
pub mod sniffer;
pub mod space;

pub use ir::{
    ArgShape, ClassDef, DynamicFeatures, Instruction, InvokeKind, Manifest, MethodDef, MethodRef,
    PermissionSet, Program, ProgramKind, ServiceTable, SinkConfig,
};
pub use mapper::{AccessVector, GapReport, InferredVector, PermissionAccessMatrix};
pub use space::AnalysisSpace;
