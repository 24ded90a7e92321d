use std::fmt;

/// Branch statistics carried by an annotation comment in front of an entity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub struct BranchStats {
    pub child_count: usize,
    pub branch_depth: usize,
    pub subtree_size: usize,
}

/// A Part-21 real literal.
///
/// The source spelling is kept next to the parsed value so that writing a file
/// back out reproduces the original digits. Equality is defined on the text.
#[derive(Debug, Clone)]
pub struct Real {
    value: f64,
    text: String,
}

impl Real {
    /// Builds a real from its Part-21 spelling. The caller guarantees the text
    /// is a valid real token (the lexer or the float formatter).
    pub(crate) fn from_token(text: String) -> Option<Self> {
        let value = text.parse::<f64>().ok()?;
        if !value.is_finite() {
            return None;
        }
        Some(Real { value, text })
    }

    /// Builds a real from a value, spelled with the shortest round-trip digits.
    pub fn from_f64(value: f64) -> Self {
        let text = crate::reserialize::format_real(value, 17);
        Real { value, text }
    }

    pub fn value(&self) -> f64 {
        self.value
    }

    pub fn text(&self) -> &str {
        &self.text
    }
}

impl PartialEq for Real {
    fn eq(&self, other: &Self) -> bool {
        self.text == other.text
    }
}

impl Eq for Real {}

/// One parameter of an entity or header record.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ParamValue {
    Real(Real),
    Integer(i64),
    /// Raw string content between the quotes, escapes left encoded.
    Text(String),
    /// Enumeration token without the surrounding dots.
    Enum(String),
    Reference(u64),
    List(Vec<ParamValue>),
    /// `$`
    Omitted,
    /// `*`
    Derived,
    Typed(String, Box<ParamValue>),
}

impl ParamValue {
    pub fn real(value: f64) -> Self {
        ParamValue::Real(Real::from_f64(value))
    }

    /// Calls `f` for every reference in left-to-right parameter order.
    pub fn for_each_reference(&self, f: &mut impl FnMut(u64)) {
        match self {
            ParamValue::Reference(id) => f(*id),
            ParamValue::List(items) => items.iter().for_each(|p| p.for_each_reference(f)),
            ParamValue::Typed(_, inner) => inner.for_each_reference(f),
            _ => {}
        }
    }

    /// Returns a copy with every reference passed through `map`.
    pub fn map_references(&self, map: &mut impl FnMut(u64) -> u64) -> ParamValue {
        match self {
            ParamValue::Reference(id) => ParamValue::Reference(map(*id)),
            ParamValue::List(items) => {
                ParamValue::List(items.iter().map(|p| p.map_references(map)).collect())
            }
            ParamValue::Typed(name, inner) => {
                ParamValue::Typed(name.clone(), Box::new(inner.map_references(map)))
            }
            other => other.clone(),
        }
    }

    /// Returns a copy with every real passed through `map`.
    pub fn map_reals(&self, map: &mut impl FnMut(&Real) -> Real) -> ParamValue {
        match self {
            ParamValue::Real(r) => ParamValue::Real(map(r)),
            ParamValue::List(items) => ParamValue::List(items.iter().map(|p| p.map_reals(map)).collect()),
            ParamValue::Typed(name, inner) => ParamValue::Typed(name.clone(), Box::new(inner.map_reals(map))),
            other => other.clone(),
        }
    }

    pub fn for_each_real(&self, f: &mut impl FnMut(&Real)) {
        match self {
            ParamValue::Real(r) => f(r),
            ParamValue::List(items) => items.iter().for_each(|p| p.for_each_real(f)),
            ParamValue::Typed(_, inner) => inner.for_each_real(f),
            _ => {}
        }
    }
}

/// One record of the HEADER section, e.g. `FILE_NAME(...)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HeaderRecord {
    pub name: String,
    pub params: Vec<ParamValue>,
}

/// One keyword of a complex (multi-keyword) instance.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ComplexPart {
    pub type_name: String,
    pub params: Vec<ParamValue>,
}

/// A `#id=...;` record of the DATA section.
///
/// For a complex instance `#id=(A(..)B(..)C(..));` the first keyword lives in
/// `type_name`/`params` and the remaining ones in `complex_parts`, in file order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EntityInstance {
    pub id: u64,
    pub type_name: String,
    pub params: Vec<ParamValue>,
    pub complex_parts: Option<Vec<ComplexPart>>,
    /// Branch annotation comment found directly before the instance.
    pub annotation: Option<BranchStats>,
}

impl EntityInstance {
    pub fn new(id: u64, type_name: impl Into<String>, params: Vec<ParamValue>) -> Self {
        EntityInstance {
            id,
            type_name: type_name.into(),
            params,
            complex_parts: None,
            annotation: None,
        }
    }

    pub fn is_complex(&self) -> bool {
        self.complex_parts.is_some()
    }

    /// All parameters in left-to-right order, including those of complex parts.
    pub fn all_params(&self) -> impl Iterator<Item = &ParamValue> {
        let rest = self.complex_parts.iter().flatten().flat_map(|part| part.params.iter());
        self.params.iter().chain(rest)
    }

    /// Referenced ids in parameter order, duplicates preserved.
    pub fn references(&self) -> Vec<u64> {
        let mut out = Vec::new();
        for p in self.all_params() {
            p.for_each_reference(&mut |id| out.push(id));
        }
        out
    }

    /// Copy with every reference passed through `map`. Annotation is kept.
    pub fn map_references(&self, mut map: impl FnMut(u64) -> u64) -> EntityInstance {
        EntityInstance {
            id: self.id,
            type_name: self.type_name.clone(),
            params: self.params.iter().map(|p| p.map_references(&mut map)).collect(),
            complex_parts: self.complex_parts.as_ref().map(|parts| {
                parts
                    .iter()
                    .map(|part| ComplexPart {
                        type_name: part.type_name.clone(),
                        params: part.params.iter().map(|p| p.map_references(&mut map)).collect(),
                    })
                    .collect()
            }),
            annotation: self.annotation,
        }
    }

    pub fn map_reals(&self, mut map: impl FnMut(&Real) -> Real) -> EntityInstance {
        EntityInstance {
            id: self.id,
            type_name: self.type_name.clone(),
            params: self.params.iter().map(|p| p.map_reals(&mut map)).collect(),
            complex_parts: self.complex_parts.as_ref().map(|parts| {
                parts
                    .iter()
                    .map(|part| ComplexPart {
                        type_name: part.type_name.clone(),
                        params: part.params.iter().map(|p| p.map_reals(&mut map)).collect(),
                    })
                    .collect()
            }),
            annotation: self.annotation,
        }
    }
}

/// A parsed exchange structure: header records plus entity instances in file order.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct StepFile {
    pub header: Vec<HeaderRecord>,
    pub entities: Vec<EntityInstance>,
    /// Whether the text ended with `END-ISO-10303-21;`.
    pub trailing_complete: bool,
}

impl StepFile {
    pub fn entity_count(&self) -> usize {
        self.entities.len()
    }

    pub fn get(&self, id: u64) -> Option<&EntityInstance> {
        self.entities.iter().find(|e| e.id == id)
    }
}

pub(crate) fn is_valid_keyword(name: &str) -> bool {
    let name = name.strip_prefix('!').unwrap_or(name);
    let mut chars = name.chars();
    match chars.next() {
        Some(c) if c.is_ascii_uppercase() || c == '_' => {}
        _ => return false,
    }
    chars.all(|c| c.is_ascii_uppercase() || c.is_ascii_digit() || c == '_')
}

impl fmt::Display for ParamValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ParamValue::Real(r) => f.write_str(r.text()),
            ParamValue::Integer(i) => write!(f, "{i}"),
            ParamValue::Text(s) => write!(f, "'{s}'"),
            ParamValue::Enum(e) => write!(f, ".{e}."),
            ParamValue::Reference(id) => write!(f, "#{id}"),
            ParamValue::List(items) => {
                f.write_str("(")?;
                write_params(f, items)?;
                f.write_str(")")
            }
            ParamValue::Omitted => f.write_str("$"),
            ParamValue::Derived => f.write_str("*"),
            ParamValue::Typed(name, inner) => write!(f, "{name}({inner})"),
        }
    }
}

pub(crate) fn write_params(f: &mut impl fmt::Write, params: &[ParamValue]) -> fmt::Result {
    for (i, p) in params.iter().enumerate() {
        if i > 0 {
            f.write_char(',')?;
        }
        write!(f, "{p}")?;
    }
    Ok(())
}
