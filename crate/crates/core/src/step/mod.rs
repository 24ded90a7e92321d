//! ISO 10303-21 (Part 21) exchange structure: lexing, parsing and writing.
//!
//! Parsing keeps real literals digit-faithful and string literals opaque, so a
//! parse/serialize cycle reproduces every parameter as written. Comments are
//! dropped except branch annotations, which attach to the entity they precede.

mod lexer;
mod model;
mod parser;

use std::collections::HashSet;
use std::fmt::Write as _;

use thiserror::Error;

pub(crate) use lexer::{annotation_comment, parse_annotation_body};
pub use model::{BranchStats, ComplexPart, EntityInstance, HeaderRecord, ParamValue, Real, StepFile};

/// The terminator line of a complete exchange structure.
pub const TERMINATOR: &str = "END-ISO-10303-21;";

pub const DEFAULT_MAX_ENTITIES: usize = 100_000;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum StepError {
    #[error("syntax error at line {line}, column {column}: expected {expected}, found {found}")]
    Syntax {
        offset: usize,
        line: usize,
        column: usize,
        expected: String,
        found: String,
    },
    #[error("duplicate entity id #{0}")]
    DuplicateId(u64),
    #[error("file exceeds the limit of {limit} entities")]
    TooManyEntities { limit: usize },
    #[error("unsupported section {0}")]
    UnsupportedSection(String),
    #[error("invalid model: {0}")]
    InvalidModel(String),
}

impl StepError {
    pub(crate) fn syntax(text: &str, offset: usize, expected: &str, found: &str) -> Self {
        let before = &text[..offset.min(text.len())];
        let line = before.matches('\n').count() + 1;
        let column = before.rfind('\n').map_or(before.len(), |nl| before.len() - nl - 1) + 1;
        StepError::Syntax {
            offset,
            line,
            column,
            expected: expected.to_string(),
            found: found.to_string(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParseOptions {
    pub max_entities: usize,
}

impl Default for ParseOptions {
    fn default() -> Self {
        ParseOptions {
            max_entities: DEFAULT_MAX_ENTITIES,
        }
    }
}

/// Parses a Part-21 document with the default entity limit.
pub fn parse_step(text: &str) -> Result<StepFile, StepError> {
    parse_step_with(text, ParseOptions::default())
}

pub fn parse_step_with(text: &str, opts: ParseOptions) -> Result<StepFile, StepError> {
    parser::Parser::new(text, opts)?.parse_file()
}

/// Writes `file` as a Part-21 document, one record per line.
///
/// The terminator line is written only when `file.trailing_complete` is set,
/// so truncated inputs survive a round trip unchanged.
pub fn serialize_step(file: &StepFile) -> Result<String, StepError> {
    validate(file)?;
    let mut out = String::with_capacity(64 * file.entities.len() + 256);
    out.push_str("ISO-10303-21;\nHEADER;\n");
    for record in &file.header {
        out.push_str(&record.name);
        out.push('(');
        model::write_params(&mut out, &record.params).expect("writing to a String");
        out.push_str(");\n");
    }
    out.push_str("ENDSEC;\nDATA;\n");
    for entity in &file.entities {
        write_entity(&mut out, entity);
    }
    out.push_str("ENDSEC;\n");
    if file.trailing_complete {
        out.push_str(TERMINATOR);
        out.push('\n');
    }
    Ok(out)
}

fn write_entity(out: &mut String, entity: &EntityInstance) {
    if let Some(stats) = &entity.annotation {
        out.push_str(&annotation_comment(stats));
        out.push('\n');
    }
    write!(out, "#{}=", entity.id).expect("writing to a String");
    match &entity.complex_parts {
        None => {
            out.push_str(&entity.type_name);
            out.push('(');
            model::write_params(out, &entity.params).expect("writing to a String");
            out.push(')');
        }
        Some(parts) => {
            out.push('(');
            out.push_str(&entity.type_name);
            out.push('(');
            model::write_params(out, &entity.params).expect("writing to a String");
            out.push(')');
            for part in parts {
                out.push_str(&part.type_name);
                out.push('(');
                model::write_params(out, &part.params).expect("writing to a String");
                out.push(')');
            }
            out.push(')');
        }
    }
    out.push_str(";\n");
}

fn validate(file: &StepFile) -> Result<(), StepError> {
    let mut ids = HashSet::with_capacity(file.entities.len());
    for entity in &file.entities {
        if entity.id == 0 {
            return Err(StepError::InvalidModel("entity id 0".into()));
        }
        if !ids.insert(entity.id) {
            return Err(StepError::InvalidModel(format!("duplicate entity id #{}", entity.id)));
        }
        let names = std::iter::once(&entity.type_name)
            .chain(entity.complex_parts.iter().flatten().map(|p| &p.type_name));
        for name in names {
            if !model::is_valid_keyword(name) {
                return Err(StepError::InvalidModel(format!("invalid type name {name:?} on #{}", entity.id)));
            }
        }
    }
    for record in &file.header {
        if !model::is_valid_keyword(&record.name) {
            return Err(StepError::InvalidModel(format!("invalid header record name {:?}", record.name)));
        }
    }
    Ok(())
}

/// Whether raw text ends with the standard terminator, ignoring trailing
/// whitespace. Pure string check; never parses.
pub fn check_completion(text: &str) -> bool {
    let trimmed = text.trim_end();
    match trimmed.strip_suffix(TERMINATOR) {
        None => false,
        Some(before) => !before
            .bytes()
            .last()
            .is_some_and(|b| b.is_ascii_alphanumeric() || b == b'_' || b == b'-'),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "ISO-10303-21;HEADER;ENDSEC;DATA;#12=CARTESIAN_POINT('',(0.,0.,0.));ENDSEC;END-ISO-10303-21;";

    fn wrap(data: &str) -> String {
        format!("ISO-10303-21;\nHEADER;\nENDSEC;\nDATA;\n{data}\nENDSEC;\nEND-ISO-10303-21;\n")
    }

    #[test]
    fn parses_minimal_file() {
        let file = parse_step(MINIMAL).unwrap();
        assert!(file.trailing_complete);
        assert_eq!(file.entities.len(), 1);
        let e = &file.entities[0];
        assert_eq!(e.id, 12);
        assert_eq!(e.type_name, "CARTESIAN_POINT");
        assert_eq!(e.params[0], ParamValue::Text(String::new()));
        let ParamValue::List(coords) = &e.params[1] else {
            panic!("expected a list");
        };
        assert_eq!(coords.len(), 3);
        for c in coords {
            let ParamValue::Real(r) = c else { panic!("expected a real") };
            assert_eq!(r.value(), 0.0);
        }
    }

    #[test]
    fn missing_terminator_keeps_entities() {
        let complete = parse_step(&wrap("#12=CARTESIAN_POINT('',(0.,0.,0.));")).unwrap();
        let text = wrap("#12=CARTESIAN_POINT('',(0.,0.,0.));");
        let truncated = text.trim_end().strip_suffix(TERMINATOR).unwrap();
        let file = parse_step(truncated).unwrap();
        assert!(!file.trailing_complete);
        assert_eq!(file.entities, complete.entities);
    }

    #[test]
    fn truncation_between_entities_is_tolerated() {
        let text = "ISO-10303-21;\nHEADER;\nENDSEC;\nDATA;\n#1=A();\n#2=B(#1);\n";
        let file = parse_step(text).unwrap();
        assert_eq!(file.entities.len(), 2);
        assert!(!file.trailing_complete);
    }

    #[test]
    fn unclosed_parameter_list_reports_the_semicolon() {
        let text = "ISO-10303-21;\nHEADER;\nENDSEC;\nDATA;\n#1=FOO(#2;\n";
        let err = parse_step(text).unwrap_err();
        let semicolon = text.find("#2;").unwrap() + 2;
        match err {
            StepError::Syntax {
                offset, line, column, ..
            } => {
                assert_eq!(offset, semicolon);
                assert_eq!(line, 5);
                assert_eq!(column, 10);
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn duplicate_ids_are_rejected() {
        let err = parse_step(&wrap("#1=A();\n#1=B();")).unwrap_err();
        assert_eq!(err, StepError::DuplicateId(1));
    }

    #[test]
    fn entity_limit_is_enforced() {
        let text = wrap("#1=A();\n#2=A();\n#3=A();");
        let err = parse_step_with(&text, ParseOptions { max_entities: 2 }).unwrap_err();
        assert_eq!(err, StepError::TooManyEntities { limit: 2 });
        assert!(parse_step_with(&text, ParseOptions { max_entities: 3 }).is_ok());
    }

    #[test]
    fn extension_sections_are_rejected() {
        let text = "ISO-10303-21;\nHEADER;\nENDSEC;\nANCHOR;\nENDSEC;\nEND-ISO-10303-21;\n";
        assert_eq!(parse_step(text).unwrap_err(), StepError::UnsupportedSection("ANCHOR".into()));
    }

    #[test]
    fn complex_instances_round_trip() {
        let text = wrap(
            "#7=(GEOMETRIC_REPRESENTATION_CONTEXT(3)GLOBAL_UNIT_ASSIGNED_CONTEXT((#8,#9))REPRESENTATION_CONTEXT('',''));\n#8=A();\n#9=B();",
        );
        let file = parse_step(&text).unwrap();
        let e = &file.entities[0];
        assert_eq!(e.type_name, "GEOMETRIC_REPRESENTATION_CONTEXT");
        assert_eq!(e.complex_parts.as_ref().unwrap().len(), 2);
        assert_eq!(e.references(), vec![8, 9]);
        let again = parse_step(&serialize_step(&file).unwrap()).unwrap();
        assert_eq!(again, file);
    }

    #[test]
    fn typed_values_and_special_tokens() {
        let file = parse_step(&wrap("#1=MEASURE(LENGTH_MEASURE(2.5),*,$,.T.,-3);")).unwrap();
        let e = &file.entities[0];
        assert_eq!(
            e.params[0],
            ParamValue::Typed("LENGTH_MEASURE".into(), Box::new(ParamValue::real(2.5)))
        );
        assert_eq!(e.params[1], ParamValue::Derived);
        assert_eq!(e.params[2], ParamValue::Omitted);
        assert_eq!(e.params[3], ParamValue::Enum("T".into()));
        assert_eq!(e.params[4], ParamValue::Integer(-3));
    }

    #[test]
    fn serialization_preserves_order_and_digits() {
        let text = wrap("#3=A(#1,1.50000,*);\n#1=B('x''y');");
        let file = parse_step(&text).unwrap();
        let out = serialize_step(&file).unwrap();
        let pos3 = out.find("#3=").unwrap();
        let pos1 = out.find("#1=").unwrap();
        assert!(pos3 < pos1);
        assert!(out.contains("#3=A(#1,1.50000,*);"));
        assert!(out.contains("#1=B('x''y');"));
        assert_eq!(parse_step(&out).unwrap(), file);
    }

    #[test]
    fn header_is_preserved_and_not_counted() {
        let text = "ISO-10303-21;\nHEADER;\nFILE_DESCRIPTION(('demo'),'2;1');\nFILE_NAME('a.step','2024-01-01T00:00:00',(''),(''),'','','');\nFILE_SCHEMA(('AUTOMOTIVE_DESIGN'));\nENDSEC;\nDATA;\n#1=A();\nENDSEC;\nEND-ISO-10303-21;\n";
        let file = parse_step(text).unwrap();
        assert_eq!(file.header.len(), 3);
        assert_eq!(file.entity_count(), 1);
        assert_eq!(serialize_step(&file).unwrap(), text);
    }

    #[test]
    fn invalid_models_are_reported_on_write() {
        let mut file = StepFile::default();
        file.entities.push(EntityInstance::new(1, "A", vec![]));
        file.entities.push(EntityInstance::new(1, "B", vec![]));
        assert!(matches!(serialize_step(&file), Err(StepError::InvalidModel(_))));
        let mut file = StepFile::default();
        file.entities.push(EntityInstance::new(1, "lower", vec![]));
        assert!(matches!(serialize_step(&file), Err(StepError::InvalidModel(_))));
    }

    #[test]
    fn completion_predicate() {
        assert!(check_completion(MINIMAL));
        assert!(check_completion("...\nENDSEC;\nEND-ISO-10303-21;\n\n"));
        assert!(check_completion("END-ISO-10303-21;"));
        assert!(!check_completion("ISO-10303-21;\nHEADER;\nENDSEC;\nDATA;\n#1=CARTESIAN_POINT('',(0.,"));
        assert!(!check_completion("XEND-ISO-10303-21;"));
        assert!(!check_completion("END-ISO-10303-21"));
        assert!(!check_completion(""));
    }
}
