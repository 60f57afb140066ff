//! Fixed output schemas for hybrid skills and the structural verifier stage.

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum FieldKind {
    Text,
    Number,
    Enum {
        values: Vec<String>,
    },
    /// `{"value": "...", "source": "<artifact id>"}`
    Cited,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FieldSpec {
    pub name: String,
    #[serde(flatten)]
    pub kind: FieldKind,
    #[serde(default)]
    pub required: bool,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub description: String,
    /// Regex whose first capture group locates the value in the prompt.
    #[serde(default, rename = "x-extract", skip_serializing_if = "Option::is_none")]
    pub extract: Option<String>,
    /// Preferred enum value.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hint: Option<String>,
}

impl FieldSpec {
    fn new(name: &str, kind: FieldKind) -> Self {
        Self {
            name: name.to_string(),
            kind,
            required: true,
            description: String::new(),
            extract: None,
            hint: None,
        }
    }

    pub fn text(name: &str) -> Self {
        Self::new(name, FieldKind::Text)
    }

    pub fn number(name: &str) -> Self {
        Self::new(name, FieldKind::Number)
    }

    pub fn one_of(name: &str, values: &[&str]) -> Self {
        Self::new(
            name,
            FieldKind::Enum {
                values: values.iter().map(|v| v.to_string()).collect(),
            },
        )
    }

    pub fn cited(name: &str) -> Self {
        Self::new(name, FieldKind::Cited)
    }

    pub fn optional(mut self) -> Self {
        self.required = false;
        self
    }

    pub fn extract(mut self, regex: &str) -> Self {
        self.extract = Some(regex.to_string());
        self
    }

    pub fn describe(mut self, text: &str) -> Self {
        self.description = text.to_string();
        self
    }

    pub fn hint(mut self, value: &str) -> Self {
        self.hint = Some(value.to_string());
        self
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutputSchema {
    pub title: String,
    pub fields: Vec<FieldSpec>,
}

impl OutputSchema {
    pub fn new(title: &str, fields: Vec<FieldSpec>) -> Self {
        Self {
            title: title.to_string(),
            fields,
        }
    }

    pub fn to_value(&self) -> Value {
        serde_json::to_value(self).expect("schema serializes")
    }

    pub fn field(&self, name: &str) -> Option<&FieldSpec> {
        self.fields.iter().find(|f| f.name == name)
    }

    /// Instructions appended to hybrid system prompts so real models know the shape.
    pub fn instructions(&self) -> String {
        let mut out = String::from("Respond with a single JSON object and nothing else. Fields:\n");
        for f in &self.fields {
            let kind = match &f.kind {
                FieldKind::Text => "string".to_string(),
                FieldKind::Number => "number".to_string(),
                FieldKind::Enum { values } => format!("one of {}", values.join(" | ")),
                FieldKind::Cited => {
                    "object {\"value\": string copied verbatim from the evidence, \"source\": the ARTIFACT id it came from}".to_string()
                }
            };
            out.push_str(&format!(
                "- {} ({}{}){}\n",
                f.name,
                kind,
                if f.required {
                    ", required"
                } else {
                    ", optional"
                },
                if f.description.is_empty() {
                    String::new()
                } else {
                    format!(": {}", f.description)
                }
            ));
        }
        out.push_str("Do not add fields that are not listed.\n");
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerifierViolation {
    pub path: String,
    pub rule: String,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerifierReport {
    pub ok: bool,
    pub violations: Vec<VerifierViolation>,
}

impl VerifierReport {
    pub fn pass() -> Self {
        Self {
            ok: true,
            violations: Vec::new(),
        }
    }

    pub fn from_violations(violations: Vec<VerifierViolation>) -> Self {
        Self {
            ok: violations.is_empty(),
            violations,
        }
    }

    pub fn push(&mut self, path: &str, rule: &str, message: impl Into<String>) {
        self.violations.push(VerifierViolation {
            path: path.to_string(),
            rule: rule.to_string(),
            message: message.into(),
        });
        self.ok = false;
    }

    pub fn summary(&self) -> String {
        self.violations
            .iter()
            .map(|v| format!("{} [{}] {}", v.path, v.rule, v.message))
            .collect::<Vec<_>>()
            .join("; ")
    }
}

/// First verifier stage: JSON shape against the schema.
pub fn check_structure(
    schema: &OutputSchema,
    response: &str,
) -> Result<Map<String, Value>, VerifierReport> {
    let mut report = VerifierReport::pass();
    let value: Value = match serde_json::from_str(response.trim()) {
        Ok(v) => v,
        Err(e) => {
            report.push("$", "json", format!("response is not JSON: {e}"));
            return Err(report);
        }
    };
    let Value::Object(map) = value else {
        report.push("$", "object", "response must be a JSON object");
        return Err(report);
    };
    for key in map.keys() {
        if schema.field(key).is_none() {
            report.push(
                &format!("$.{key}"),
                "unknown-field",
                "field is not in the schema",
            );
        }
    }
    for f in &schema.fields {
        let path = format!("$.{}", f.name);
        let Some(v) = map.get(&f.name) else {
            if f.required {
                report.push(&path, "required", "required field is missing");
            }
            continue;
        };
        match &f.kind {
            FieldKind::Text if !v.is_string() => report.push(&path, "type", "expected a string"),
            FieldKind::Number if !v.is_number() => report.push(&path, "type", "expected a number"),
            FieldKind::Enum { values } => match v.as_str() {
                Some(s) if values.iter().any(|x| x == s) => {}
                _ => report.push(
                    &path,
                    "enum",
                    format!("expected one of {}", values.join(", ")),
                ),
            },
            FieldKind::Cited => {
                let ok = v.get("value").is_some_and(Value::is_string)
                    && v.get("source").is_some_and(Value::is_string)
                    && v.as_object().is_some_and(|o| o.len() == 2);
                if !ok {
                    report.push(
                        &path,
                        "cited",
                        "expected {\"value\": string, \"source\": string}",
                    );
                }
            }
            _ => {}
        }
    }
    if report.ok {
        Ok(map)
    } else {
        Err(report)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn schema() -> OutputSchema {
        OutputSchema::new(
            "t",
            vec![
                FieldSpec::text("summary"),
                FieldSpec::one_of("verdict", &["Buy", "Pass", "Hold", "Sell"]),
                FieldSpec::cited("revenue").optional(),
            ],
        )
    }

    #[test]
    fn accepts_conforming_object() {
        let m = check_structure(
            &schema(),
            r#"{"summary":"x","verdict":"Pass","revenue":{"value":"1","source":"ab"}}"#,
        )
        .unwrap();
        assert_eq!(m.len(), 3);
    }

    #[test]
    fn rejects_extra_and_missing_fields() {
        let r = check_structure(&schema(), r#"{"verdict":"Maybe","extra":1}"#).unwrap_err();
        let rules: Vec<_> = r.violations.iter().map(|v| v.rule.as_str()).collect();
        assert_eq!(rules, vec!["unknown-field", "required", "enum"]);
        assert!(!r.ok);
    }

    #[test]
    fn schema_round_trips_through_json() {
        let s = schema();
        let back: OutputSchema = serde_json::from_value(s.to_value()).unwrap();
        assert_eq!(back, s);
    }
}
