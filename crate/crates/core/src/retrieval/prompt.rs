use super::RetrievalError;
use crate::reserialize::{reserialize_dfs, ReserializeOptions};
use crate::step::{parse_step, serialize_step};

pub const BLOCK_OPEN: &str = "{#retrieved}";
pub const BLOCK_CLOSE: &str = "{/retrieved}";

pub const DEFAULT_INSTRUCTION: &str =
    "Generate an ISO 10303-21 STEP file for the part described by the caption.";

/// Template slots are `{instruction}`, `{retrieved_step}` and `{caption}`.
/// Lines between a `{#retrieved}` line and a `{/retrieved}` line are kept
/// only when a retrieved file is supplied.
pub const DEFAULT_TEMPLATE: &str = "{instruction}
{#retrieved}
Reference STEP file of a similar part:
{retrieved_step}
{/retrieved}
Caption: {caption}
";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    pub text: String,
    pub instruction: String,
}

impl Default for PromptTemplate {
    fn default() -> Self {
        PromptTemplate {
            text: DEFAULT_TEMPLATE.to_string(),
            instruction: DEFAULT_INSTRUCTION.to_string(),
        }
    }
}

impl PromptTemplate {
    pub fn new(text: impl Into<String>, instruction: impl Into<String>) -> Result<Self, RetrievalError> {
        let t = PromptTemplate {
            text: text.into(),
            instruction: instruction.into(),
        };
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<(), RetrievalError> {
        if !self.text.contains("{caption}") {
            return Err(RetrievalError::InvalidTemplate("template has no {caption} slot".into()));
        }
        let mut open = false;
        for line in self.text.lines() {
            match line.trim() {
                BLOCK_OPEN if open => return Err(RetrievalError::InvalidTemplate("nested {#retrieved} block".into())),
                BLOCK_OPEN => open = true,
                BLOCK_CLOSE if !open => {
                    return Err(RetrievalError::InvalidTemplate("{/retrieved} without {#retrieved}".into()))
                }
                BLOCK_CLOSE => open = false,
                _ => {}
            }
        }
        if open {
            return Err(RetrievalError::InvalidTemplate("unclosed {#retrieved} block".into()));
        }
        Ok(())
    }
}

/// Single left-to-right pass, so slot-like text inside substituted values is
/// never expanded again.
fn substitute(line: &str, slots: &[(&str, &str)]) -> String {
    let mut out = String::with_capacity(line.len());
    let mut rest = line;
    'outer: while let Some(pos) = rest.find('{') {
        out.push_str(&rest[..pos]);
        let tail = &rest[pos..];
        for (name, value) in slots {
            if let Some(after) = tail.strip_prefix(name) {
                out.push_str(value);
                rest = after;
                continue 'outer;
            }
        }
        out.push('{');
        rest = &tail[1..];
    }
    out.push_str(rest);
    out
}

/// Renders the template. With `retrieved_step == None` (no retrieval) the
/// retrieved block is dropped and any stray `{retrieved_step}` becomes empty.
pub fn assemble_prompt(caption: &str, retrieved_step: Option<&str>, template: &PromptTemplate) -> Result<String, RetrievalError> {
    template.validate()?;
    let retrieved = retrieved_step.map(|s| s.trim_end_matches('\n'));
    let slots = [
        ("{instruction}", template.instruction.as_str()),
        ("{retrieved_step}", retrieved.unwrap_or("")),
        ("{caption}", caption),
    ];
    let mut out = String::with_capacity(template.text.len() + caption.len() + retrieved.map_or(0, str::len));
    let mut in_block = false;
    for line in template.text.split_inclusive('\n') {
        match line.trim() {
            BLOCK_OPEN => {
                in_block = true;
                continue;
            }
            BLOCK_CLOSE => {
                in_block = false;
                continue;
            }
            _ => {}
        }
        if in_block && retrieved.is_none() {
            continue;
        }
        out.push_str(&substitute(line, &slots));
    }
    Ok(out)
}

/// Parses a retrieved STEP file and rewrites it in reserialized form (DFS
/// order, sequential ids, normalized floats, branch annotations per `opts`).
pub fn prepare_retrieved_step(step_text: &str, opts: &ReserializeOptions) -> Result<String, RetrievalError> {
    let file = parse_step(step_text).map_err(|e| RetrievalError::Step(e.to_string()))?;
    let out = reserialize_dfs(&file, opts).map_err(|e| RetrievalError::Step(e.to_string()))?;
    serialize_step(&out).map_err(|e| RetrievalError::Step(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    const STEP: &str = "ISO-10303-21;\nHEADER;\nENDSEC;\nDATA;\n#10=A(#7,#23);\n#7=B();\n#23=C(#7);\nENDSEC;\nEND-ISO-10303-21;\n";

    #[test]
    fn with_and_without_retrieval() {
        let t = PromptTemplate::default();
        let with = assemble_prompt("a bracket", Some("STEP TEXT\n"), &t).unwrap();
        assert_eq!(
            with,
            format!("{DEFAULT_INSTRUCTION}\nReference STEP file of a similar part:\nSTEP TEXT\nCaption: a bracket\n")
        );
        let without = assemble_prompt("a bracket", None, &t).unwrap();
        assert_eq!(without, format!("{DEFAULT_INSTRUCTION}\nCaption: a bracket\n"));
        let step_at = with.find("STEP TEXT").unwrap();
        assert!(step_at < with.find("a bracket").unwrap());
    }

    #[test]
    fn values_are_not_reexpanded() {
        let t = PromptTemplate::new("{caption}|{retrieved_step}", "").unwrap();
        assert_eq!(assemble_prompt("{retrieved_step}", Some("x"), &t).unwrap(), "{retrieved_step}|x");
        assert_eq!(assemble_prompt("c", None, &t).unwrap(), "c|");
    }

    #[test]
    fn invalid_templates() {
        assert!(PromptTemplate::new("no slot", "").is_err());
        assert!(PromptTemplate::new("{#retrieved}\n{caption}\n", "").is_err());
        assert!(PromptTemplate::new("{/retrieved}\n{caption}\n", "").is_err());
    }

    #[test]
    fn retrieved_step_is_reserialized() {
        let s = prepare_retrieved_step(STEP, &ReserializeOptions::default()).unwrap();
        assert!(s.contains("#1=B();\n#2=C(#1);\n/* STEPLLM branch children=2 depth=2 size=3 */\n#3=A(#1,#2);"));
    }
}
