//! PBIR document parsing and canonical serialization.
//!
//! Documents are UTF-8 JSON. Instructions are encoded as arrays, e.g.
//! `["const_str", 0, "p1"]` or `["invoke", "virtual", "Cls::m/2", 3, [0, 1]]`.
//! Parsing goes through `serde_json::Value` so that pure syntax errors carry
//! line/column positions while structural errors carry a logical location
//! (class, method, body index). `serialize_program` emits a canonical form:
//! parse-then-serialize is bit-stable.

use super::{
    ArgShape, CheckSink, ClassDef, Instruction, InvokeKind, Manifest, MethodDef, MethodRef,
    PermissionSet, Program, ProgramKind, ServiceTable, SinkConfig,
};
use serde::Serialize;
use serde::ser::SerializeSeq;
use serde_json::Value;
use std::collections::BTreeSet;

#[derive(Debug, thiserror::Error)]
pub enum ParseError {
    #[error("syntax error at line {line}, column {column}: {message}")]
    Syntax { line: usize, column: usize, message: String },
    #[error("duplicate class {class:?}")]
    DuplicateClass { class: String },
    #[error("{location}: duplicate label {label:?}")]
    DuplicateLabel { location: String, label: String },
    #[error("{location}: unresolved label {label:?}")]
    UnresolvedLabel { location: String, label: String },
    #[error("{location}: {message}")]
    Shape { location: String, message: String },
}

fn shape(location: impl Into<String>, message: impl Into<String>) -> ParseError {
    ParseError::Shape { location: location.into(), message: message.into() }
}

fn parse_value(bytes: &[u8]) -> Result<Value, ParseError> {
    serde_json::from_slice(bytes).map_err(|e| ParseError::Syntax {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })
}

struct Ctx<'a> {
    value: &'a Value,
    location: String,
}

impl<'a> Ctx<'a> {
    fn obj(&self) -> Result<&'a serde_json::Map<String, Value>, ParseError> {
        self.value.as_object().ok_or_else(|| shape(&self.location, "expected an object"))
    }

    fn field(&self, name: &str) -> Result<Ctx<'a>, ParseError> {
        let v = self
            .obj()?
            .get(name)
            .ok_or_else(|| shape(&self.location, format!("missing field {name:?}")))?;
        Ok(Ctx { value: v, location: format!("{}.{}", self.location, name) })
    }

    fn opt_field(&self, name: &str) -> Result<Option<Ctx<'a>>, ParseError> {
        Ok(self
            .obj()?
            .get(name)
            .filter(|v| !v.is_null())
            .map(|v| Ctx { value: v, location: format!("{}.{}", self.location, name) }))
    }

    fn str(&self) -> Result<&'a str, ParseError> {
        self.value.as_str().ok_or_else(|| shape(&self.location, "expected a string"))
    }

    fn boolean(&self) -> Result<bool, ParseError> {
        self.value.as_bool().ok_or_else(|| shape(&self.location, "expected a boolean"))
    }

    fn u32(&self) -> Result<u32, ParseError> {
        self.value
            .as_u64()
            .and_then(|n| u32::try_from(n).ok())
            .ok_or_else(|| shape(&self.location, "expected a non-negative integer"))
    }

    fn array(&self) -> Result<Vec<Ctx<'a>>, ParseError> {
        let items = self
            .value
            .as_array()
            .ok_or_else(|| shape(&self.location, "expected an array"))?;
        Ok(items
            .iter()
            .enumerate()
            .map(|(i, v)| Ctx { value: v, location: format!("{}[{}]", self.location, i) })
            .collect())
    }

    fn method_ref(&self) -> Result<MethodRef, ParseError> {
        self.str()?.parse().map_err(|e| shape(&self.location, format!("{e}")))
    }
}

/// Parses a PBIR program document.
pub fn parse_program(bytes: &[u8]) -> Result<Program, ParseError> {
    let value = parse_value(bytes)?;
    let root = Ctx { value: &value, location: "program".into() };

    let kind = match root.field("kind")?.str()? {
        "framework" => ProgramKind::Framework,
        "application" => ProgramKind::Application,
        other => {
            return Err(shape("program.kind", format!("unknown kind {other:?}")));
        }
    };
    let name = root.field("name")?.str()?.to_string();

    let mut classes = Vec::new();
    let mut seen = BTreeSet::new();
    for cctx in root.field("classes")?.array()? {
        let class = parse_class(&cctx)?;
        if !seen.insert(class.name.clone()) {
            return Err(ParseError::DuplicateClass { class: class.name });
        }
        classes.push(class);
    }
    Ok(Program { kind, name, classes })
}

fn parse_class(ctx: &Ctx<'_>) -> Result<ClassDef, ParseError> {
    let name = ctx.field("name")?.str()?.to_string();
    let superclass = ctx.opt_field("super")?.map(|c| c.str().map(str::to_string)).transpose()?;
    let interfaces = match ctx.opt_field("interfaces")? {
        Some(c) => c.array()?.iter().map(|i| i.str().map(str::to_string)).collect::<Result<_, _>>()?,
        None => Vec::new(),
    };
    let is_public = ctx.field("public")?.boolean()?;
    let mut methods = Vec::new();
    for mctx in ctx.field("methods")?.array()? {
        methods.push(parse_method(&name, &mctx)?);
    }
    Ok(ClassDef { name, superclass, interfaces, is_public, methods })
}

fn parse_method(class: &str, ctx: &Ctx<'_>) -> Result<MethodDef, ParseError> {
    let name = ctx.field("name")?.str()?.to_string();
    let arity = ctx.field("arity")?.u32()?;
    let is_public = ctx.field("public")?.boolean()?;
    let is_constructor = ctx.field("constructor")?.boolean()?;
    let locals = ctx.field("locals")?.u32()?;
    let location = format!("class {class} method {name}/{arity}");

    let mut body = Vec::new();
    for ictx in ctx.field("body")?.array()? {
        body.push(parse_instruction(&ictx)?);
    }
    check_labels(&location, &body)?;
    Ok(MethodDef { name, arity, is_public, is_constructor, locals, body })
}

fn check_labels(location: &str, body: &[Instruction]) -> Result<(), ParseError> {
    let mut labels = BTreeSet::new();
    for instr in body {
        if let Instruction::Label { name } = instr
            && !labels.insert(name.clone())
        {
            return Err(ParseError::DuplicateLabel {
                location: location.to_string(),
                label: name.clone(),
            });
        }
    }
    for instr in body {
        let target = match instr {
            Instruction::Goto { label } | Instruction::Branch { label } => label,
            _ => continue,
        };
        if !labels.contains(target) {
            return Err(ParseError::UnresolvedLabel {
                location: location.to_string(),
                label: target.clone(),
            });
        }
    }
    Ok(())
}

fn parse_instruction(ctx: &Ctx<'_>) -> Result<Instruction, ParseError> {
    let items = ctx.array()?;
    let op = items
        .first()
        .ok_or_else(|| shape(&ctx.location, "empty instruction"))?
        .str()?;
    let expect = |n: usize| -> Result<(), ParseError> {
        if items.len() == n {
            Ok(())
        } else {
            Err(shape(&ctx.location, format!("{op} takes {} operands", n - 1)))
        }
    };
    let instr = match op {
        "const_str" => {
            expect(3)?;
            Instruction::ConstStr { dst: items[1].u32()?, literal: items[2].str()?.to_string() }
        }
        "move" => {
            expect(3)?;
            Instruction::Move { dst: items[1].u32()?, src: items[2].u32()? }
        }
        "new_obj" => {
            expect(3)?;
            Instruction::NewObj { dst: items[1].u32()?, class: items[2].str()?.to_string() }
        }
        "array_new" => {
            expect(3)?;
            Instruction::ArrayNew { dst: items[1].u32()?, length: items[2].u32()? }
        }
        "array_store" => {
            expect(4)?;
            Instruction::ArrayStore {
                array: items[1].u32()?,
                index: items[2].u32()?,
                src: items[3].u32()?,
            }
        }
        "invoke" => {
            expect(5)?;
            let kind = match items[1].str()? {
                "static" => InvokeKind::Static,
                "virtual" => InvokeKind::Virtual,
                "direct" => InvokeKind::Direct,
                other => {
                    return Err(shape(&items[1].location, format!("unknown invoke kind {other:?}")));
                }
            };
            let target = items[2].method_ref()?;
            let receiver = if items[3].value.is_null() { None } else { Some(items[3].u32()?) };
            match (kind, receiver) {
                (InvokeKind::Virtual, None) => {
                    return Err(shape(&ctx.location, "virtual invoke requires a receiver"));
                }
                (InvokeKind::Static, Some(_)) => {
                    return Err(shape(&ctx.location, "static invoke takes no receiver"));
                }
                _ => {}
            }
            let args = items[4].array()?.iter().map(|a| a.u32()).collect::<Result<_, _>>()?;
            Instruction::Invoke { kind, target, receiver, args }
        }
        "get_service" => {
            expect(3)?;
            Instruction::GetService { dst: items[1].u32()?, service: items[2].str()?.to_string() }
        }
        "label" => {
            expect(2)?;
            Instruction::Label { name: items[1].str()?.to_string() }
        }
        "goto" => {
            expect(2)?;
            Instruction::Goto { label: items[1].str()?.to_string() }
        }
        "branch" => {
            expect(2)?;
            Instruction::Branch { label: items[1].str()?.to_string() }
        }
        "reflective" => {
            expect(1)?;
            Instruction::Reflective
        }
        "return" => {
            expect(1)?;
            Instruction::Return
        }
        other => return Err(shape(&ctx.location, format!("unknown instruction {other:?}"))),
    };
    Ok(instr)
}

impl Serialize for Instruction {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let mut seq = serializer.serialize_seq(None)?;
        match self {
            Instruction::ConstStr { dst, literal } => {
                seq.serialize_element("const_str")?;
                seq.serialize_element(dst)?;
                seq.serialize_element(literal)?;
            }
            Instruction::Move { dst, src } => {
                seq.serialize_element("move")?;
                seq.serialize_element(dst)?;
                seq.serialize_element(src)?;
            }
            Instruction::NewObj { dst, class } => {
                seq.serialize_element("new_obj")?;
                seq.serialize_element(dst)?;
                seq.serialize_element(class)?;
            }
            Instruction::ArrayNew { dst, length } => {
                seq.serialize_element("array_new")?;
                seq.serialize_element(dst)?;
                seq.serialize_element(length)?;
            }
            Instruction::ArrayStore { array, index, src } => {
                seq.serialize_element("array_store")?;
                seq.serialize_element(array)?;
                seq.serialize_element(index)?;
                seq.serialize_element(src)?;
            }
            Instruction::Invoke { kind, target, receiver, args } => {
                seq.serialize_element("invoke")?;
                seq.serialize_element(kind.as_str())?;
                seq.serialize_element(target)?;
                seq.serialize_element(receiver)?;
                seq.serialize_element(args)?;
            }
            Instruction::GetService { dst, service } => {
                seq.serialize_element("get_service")?;
                seq.serialize_element(dst)?;
                seq.serialize_element(service)?;
            }
            Instruction::Label { name } => {
                seq.serialize_element("label")?;
                seq.serialize_element(name)?;
            }
            Instruction::Goto { label } => {
                seq.serialize_element("goto")?;
                seq.serialize_element(label)?;
            }
            Instruction::Branch { label } => {
                seq.serialize_element("branch")?;
                seq.serialize_element(label)?;
            }
            Instruction::Reflective => seq.serialize_element("reflective")?,
            Instruction::Return => seq.serialize_element("return")?,
        }
        seq.end()
    }
}

fn to_canonical_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serialization cannot fail");
    s.push('\n');
    s
}

/// Canonical serialization; `parse_program(serialize_program(p))` equals `p`
/// and re-serializing yields identical bytes.
pub fn serialize_program(p: &Program) -> String {
    to_canonical_json(p)
}

pub fn parse_manifest(bytes: &[u8]) -> Result<Manifest, ParseError> {
    let value = parse_value(bytes)?;
    let root = Ctx { value: &value, location: "manifest".into() };
    let app_name = root.field("app")?.str()?.to_string();
    let declared = PermissionSet::from_iter(
        root.field("declared")?.array()?.iter().map(|c| c.str().map(str::to_string)).collect::<Result<Vec<_>, _>>()?,
    );
    let mut roots: Vec<MethodRef> =
        root.field("roots")?.array()?.iter().map(|c| c.method_ref()).collect::<Result<_, _>>()?;
    roots.sort();
    roots.dedup();
    Ok(Manifest { app_name, declared, roots })
}

pub fn serialize_manifest(m: &Manifest) -> String {
    let mut m = m.clone();
    m.roots.sort();
    m.roots.dedup();
    to_canonical_json(&m)
}

pub fn parse_service_table(bytes: &[u8]) -> Result<ServiceTable, ParseError> {
    let value = parse_value(bytes)?;
    let root = Ctx { value: &value, location: "services".into() };
    let mut bindings = std::collections::BTreeMap::new();
    for (k, v) in root.field("bindings")?.obj()? {
        let cls = v
            .as_str()
            .ok_or_else(|| shape(format!("services.bindings.{k}"), "expected a class name"))?;
        bindings.insert(k.clone(), cls.to_string());
    }
    let mut init_classes: Vec<String> = root
        .field("init")?
        .array()?
        .iter()
        .map(|c| c.str().map(str::to_string))
        .collect::<Result<_, _>>()?;
    init_classes.sort();
    init_classes.dedup();
    Ok(ServiceTable { bindings, init_classes })
}

pub fn serialize_service_table(st: &ServiceTable) -> String {
    let mut st = st.clone();
    st.init_classes.sort();
    st.init_classes.dedup();
    to_canonical_json(&st)
}

pub fn parse_sink_config(bytes: &[u8]) -> Result<SinkConfig, ParseError> {
    let value = parse_value(bytes)?;
    let root = Ctx { value: &value, location: "sinks".into() };
    let vocabulary = PermissionSet::from_iter(
        root.field("vocabulary")?.array()?.iter().map(|c| c.str().map(str::to_string)).collect::<Result<Vec<_>, _>>()?,
    );
    let mut check_sinks = Vec::new();
    for sctx in root.field("sinks")?.array()? {
        let signature = sctx.field("sig")?.method_ref()?;
        let perm_arg_index = sctx.field("arg")?.u32()?;
        let arg_shape = match sctx.field("shape")?.str()? {
            "single" => ArgShape::Single,
            "array" => ArgShape::Array,
            other => {
                return Err(shape(sctx.location, format!("unknown arg shape {other:?}")));
            }
        };
        check_sinks.push(CheckSink { signature, perm_arg_index, arg_shape });
    }
    check_sinks.sort_by(|a, b| a.signature.cmp(&b.signature));
    let clear_identity_sig = root.field("clear_sig")?.method_ref()?;
    let restore_identity_sig = root.field("restore_sig")?.method_ref()?;
    Ok(SinkConfig { vocabulary, check_sinks, clear_identity_sig, restore_identity_sig })
}

pub fn serialize_sink_config(sc: &SinkConfig) -> String {
    let mut sc = sc.clone();
    sc.check_sinks.sort_by(|a, b| a.signature.cmp(&b.signature));
    to_canonical_json(&sc)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_framework_document() {
        let p = parse_program(br#"{"kind":"framework","name":"fw","classes":[]}"#).unwrap();
        assert_eq!(p.kind, ProgramKind::Framework);
        assert!(p.classes.is_empty());
    }

    #[test]
    fn duplicate_class_is_rejected() {
        let doc = br#"{"kind":"framework","name":"fw","classes":[
            {"name":"A","public":true,"methods":[]},
            {"name":"A","public":false,"methods":[]}
        ]}"#;
        match parse_program(doc) {
            Err(ParseError::DuplicateClass { class }) => assert_eq!(class, "A"),
            other => panic!("expected duplicate class error, got {other:?}"),
        }
    }

    #[test]
    fn unresolved_label_is_rejected() {
        let doc = br#"{"kind":"framework","name":"fw","classes":[
            {"name":"A","public":true,"methods":[
                {"name":"m","arity":0,"public":true,"constructor":false,"locals":0,
                 "body":[["goto","NOPE"],["return"]]}
            ]}
        ]}"#;
        match parse_program(doc) {
            Err(ParseError::UnresolvedLabel { label, .. }) => assert_eq!(label, "NOPE"),
            other => panic!("expected unresolved label error, got {other:?}"),
        }
    }

    #[test]
    fn syntax_errors_carry_positions() {
        match parse_program(b"{\n  \"kind\": framework") {
            Err(ParseError::Syntax { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected syntax error, got {other:?}"),
        }
    }

    #[test]
    fn virtual_invoke_requires_receiver() {
        let doc = br#"{"kind":"framework","name":"fw","classes":[
            {"name":"A","public":true,"methods":[
                {"name":"m","arity":0,"public":true,"constructor":false,"locals":0,
                 "body":[["invoke","virtual","A::m/0",null,[]],["return"]]}
            ]}
        ]}"#;
        assert!(matches!(parse_program(doc), Err(ParseError::Shape { .. })));
    }

    #[test]
    fn instruction_forms_round_trip() {
        let doc = br#"{"kind":"framework","name":"fw","classes":[
            {"name":"A","super":"B","interfaces":["I"],"public":true,"methods":[
                {"name":"m","arity":2,"public":true,"constructor":false,"locals":4,
                 "body":[
                    ["const_str",2,"p1"],
                    ["move",3,2],
                    ["new_obj",4,"B"],
                    ["array_new",5,2],
                    ["array_store",5,0,2],
                    ["invoke","virtual","B::v/1",4,[3]],
                    ["invoke","static","B::s/0",null,[]],
                    ["invoke","direct","B::d/1",4,[2]],
                    ["get_service",3,"acct"],
                    ["label","L"],
                    ["branch","L"],
                    ["goto","L"],
                    ["reflective"],
                    ["return"]
                 ]}
            ]},
            {"name":"B","public":false,"methods":[]},
            {"name":"I","public":true,"methods":[]}
        ]}"#;
        let p = parse_program(doc).unwrap();
        let s1 = serialize_program(&p);
        let p2 = parse_program(s1.as_bytes()).unwrap();
        assert_eq!(p, p2);
        assert_eq!(s1, serialize_program(&p2));
    }

    #[test]
    fn sidecar_documents_round_trip() {
        let m = parse_manifest(br#"{"app":"a","declared":["p2","p1"],"roots":["A::s/0"]}"#).unwrap();
        assert_eq!(m.declared.as_slice(), &["p1", "p2"]);
        let m2 = parse_manifest(serialize_manifest(&m).as_bytes()).unwrap();
        assert_eq!(m, m2);

        let st =
            parse_service_table(br#"{"bindings":{"acct":"AcctImpl"},"init":["AcctImpl"]}"#).unwrap();
        let st2 = parse_service_table(serialize_service_table(&st).as_bytes()).unwrap();
        assert_eq!(st, st2);

        let sc = parse_sink_config(
            br#"{"vocabulary":["p1"],
                 "sinks":[{"sig":"Sys::check/1","arg":0,"shape":"single"}],
                 "clear_sig":"Sys::clearId/0","restore_sig":"Sys::restoreId/0"}"#,
        )
        .unwrap();
        assert_eq!(sc.check_sinks.len(), 1);
        let sc2 = parse_sink_config(serialize_sink_config(&sc).as_bytes()).unwrap();
        assert_eq!(sc, sc2);
    }
}
