//! The small directive language persona bodies use to describe their output
//! structure, plus the variable environment built from read artifacts.
//!
//! ```text
//! @compute band_low = round(owner_fcf_per_share * 20)
//! @verdict Pass when market_snapshot.price > band_high
//! @themes AI Infrastructure, Valuation Discipline
//! @section Circle of Competence | modes=full | cites=filings,segments
//! Template text with {coverage_brief.company} and {band_low|usd0}.
//! ```
//!
//! Real models read these as instructions; the stub provider executes them.

use std::collections::BTreeMap;

use evalexpr::{ContextWithMutableVariables, HashMapContext, Value as EvalValue};
use regex::Regex;
use serde_json::Value;

#[derive(Debug, Clone, PartialEq)]
pub struct SectionDirective {
    pub title: String,
    /// Empty means every mode.
    pub modes: Vec<String>,
    pub cites: Vec<String>,
    pub template: String,
}

impl SectionDirective {
    pub fn applies_to(&self, mode: &str) -> bool {
        self.modes.is_empty() || self.modes.iter().any(|m| m == mode)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerdictRule {
    pub verdict: String,
    pub condition: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Directives {
    pub computes: Vec<(String, String)>,
    pub verdicts: Vec<VerdictRule>,
    pub themes: Vec<String>,
    pub sections: Vec<SectionDirective>,
}

impl Directives {
    pub fn parse(body: &str) -> Self {
        let mut out = Directives::default();
        let mut current: Option<SectionDirective> = None;
        let flush = |cur: &mut Option<SectionDirective>, out: &mut Directives| {
            if let Some(mut s) = cur.take() {
                s.template = s.template.trim().to_string();
                out.sections.push(s);
            }
        };
        for line in body.lines() {
            let Some(rest) = line.strip_prefix('@') else {
                // A markdown heading ends the open section: text after it is
                // reference material, not section template.
                if line.starts_with('#') {
                    flush(&mut current, &mut out);
                    continue;
                }
                if let Some(s) = current.as_mut() {
                    s.template.push_str(line);
                    s.template.push('\n');
                }
                continue;
            };
            flush(&mut current, &mut out);
            let (word, arg) = rest.split_once(' ').unwrap_or((rest, ""));
            let arg = arg.trim();
            match word {
                "compute" => {
                    if let Some((name, expr)) = arg.split_once('=') {
                        out.computes
                            .push((name.trim().to_string(), expr.trim().to_string()));
                    }
                }
                "verdict" => {
                    let (verdict, condition) = match arg.split_once(" when ") {
                        Some((v, c)) => (v.trim(), Some(c.trim().to_string())),
                        None => (arg, None),
                    };
                    out.verdicts.push(VerdictRule {
                        verdict: verdict.to_string(),
                        condition,
                    });
                }
                "themes" => out.themes.extend(
                    arg.split(',')
                        .map(str::trim)
                        .filter(|t| !t.is_empty())
                        .map(String::from),
                ),
                "section" => {
                    let mut parts = arg.split('|').map(str::trim);
                    let title = parts.next().unwrap_or_default().to_string();
                    let mut s = SectionDirective {
                        title,
                        modes: Vec::new(),
                        cites: Vec::new(),
                        template: String::new(),
                    };
                    for p in parts {
                        if let Some((k, v)) = p.split_once('=') {
                            let list = v
                                .split(',')
                                .map(|x| x.trim().to_string())
                                .filter(|x| !x.is_empty());
                            match k.trim() {
                                "modes" => s.modes = list.collect(),
                                "cites" => s.cites = list.collect(),
                                _ => {}
                            }
                        }
                    }
                    current = Some(s);
                }
                _ => {}
            }
        }
        flush(&mut current, &mut out);
        out
    }
}

/// Variables visible to templates and `compute`: flattened artifact fields
/// (`market_snapshot.price`, `kpis.revenue_fy`) plus computed results.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Vars {
    values: BTreeMap<String, Value>,
}

impl Vars {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, name: &str) -> Option<&Value> {
        self.values.get(name)
    }

    pub fn number(&self, name: &str) -> Option<f64> {
        self.values.get(name).and_then(Value::as_f64)
    }

    pub fn set(&mut self, name: &str, value: Value) {
        self.values.insert(name.to_string(), value);
    }

    /// Adds without overwriting: the first artifact of a category wins.
    pub fn add_default(&mut self, name: String, value: Value) {
        self.values.entry(name).or_insert(value);
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Value)> {
        self.values.iter()
    }

    /// Flattens a structured payload under its category prefix.
    pub fn absorb(&mut self, category: &str, payload: &Value) {
        let mut flat = Vec::new();
        flatten(category, payload, &mut flat);
        for (k, v) in flat {
            if let Some(alias) = alias_of(&k) {
                self.add_default(alias, v.clone());
            }
            self.add_default(k, v);
        }
    }

    pub fn eval_number(&self, expression: &str) -> Result<f64, String> {
        match self.eval(expression)? {
            EvalValue::Float(f) => Ok(f),
            EvalValue::Int(i) => Ok(i as f64),
            other => Err(format!("`{expression}` evaluated to {other}, not a number")),
        }
    }

    pub fn eval_bool(&self, expression: &str) -> Result<bool, String> {
        match self.eval(expression)? {
            EvalValue::Boolean(b) => Ok(b),
            other => Err(format!(
                "`{expression}` evaluated to {other}, not a boolean"
            )),
        }
    }

    fn eval(&self, expression: &str) -> Result<EvalValue, String> {
        let mut ctx = HashMapContext::new();
        for (k, v) in &self.values {
            if let Some(n) = v.as_f64() {
                ctx.set_value(k.clone(), EvalValue::Float(n))
                    .map_err(|e| e.to_string())?;
            }
        }
        evalexpr::eval_with_context(expression, &ctx).map_err(|e| e.to_string())
    }

    /// Fills `{name}` / `{name|format}` placeholders. Unknown names render as `n/a`.
    pub fn render(&self, template: &str) -> String {
        placeholder_re()
            .replace_all(template, |caps: &regex::Captures| {
                let name = &caps[1];
                let fmt = caps.get(2).map(|m| m.as_str());
                match self.values.get(name) {
                    Some(v) => format_value(v, fmt),
                    None => "n/a".to_string(),
                }
            })
            .into_owned()
    }

    /// Category prefixes of the placeholders a template uses.
    pub fn referenced_categories(template: &str) -> Vec<String> {
        let mut cats: Vec<String> = placeholder_re()
            .captures_iter(template)
            .filter_map(|c| c[1].split_once('.').map(|(p, _)| p.to_string()))
            .collect();
        cats.sort();
        cats.dedup();
        cats
    }
}

fn placeholder_re() -> &'static Regex {
    static RE: std::sync::OnceLock<Regex> = std::sync::OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\{([A-Za-z_][A-Za-z0-9_.]*)(?:\|([a-z0-9_]+))?\}").unwrap())
}

fn flatten(prefix: &str, v: &Value, out: &mut Vec<(String, Value)>) {
    match v {
        Value::Object(map) => {
            for (k, child) in map {
                flatten(&format!("{prefix}.{k}"), child, out);
            }
        }
        Value::Number(_) | Value::String(_) | Value::Bool(_) => {
            out.push((prefix.to_string(), v.clone()))
        }
        Value::Array(items) => {
            let strings: Vec<&str> = items.iter().filter_map(Value::as_str).collect();
            if !strings.is_empty() && strings.len() == items.len() {
                out.push((prefix.to_string(), Value::String(strings.join(", "))));
            }
        }
        Value::Null => {}
    }
}

/// `kpis.metrics.revenue_fy.value` → `kpis.revenue_fy`;
/// `filings.sections.mdna` → `filings.mdna`.
fn alias_of(key: &str) -> Option<String> {
    let parts: Vec<&str> = key.split('.').collect();
    match parts.as_slice() {
        [cat, "metrics", name, "value"] => Some(format!("{cat}.{name}")),
        [cat, "sections", name] => Some(format!("{cat}.{name}")),
        _ => None,
    }
}

pub fn format_value(v: &Value, fmt: Option<&str>) -> String {
    if let Some(n) = v.as_f64() {
        return match fmt {
            Some("usd_b") => format!("${:.1}B", n / 1e9),
            Some("usd_t") => format!("${:.2} trillion", n / 1e12),
            Some("usd0") => format!("${n:.0}"),
            Some("usd2") => format!("${n:.2}"),
            Some("pct") => format!("{:.1}%", n * 100.0),
            Some("x1") => format!("{n:.1}x"),
            Some("num1") => format!("{n:.1}"),
            Some("num0") => format!("{n:.0}"),
            _ => {
                if n.fract() == 0.0 && n.abs() < 1e15 {
                    format!("{n:.0}")
                } else {
                    format!("{n}")
                }
            }
        };
    }
    let s = match v {
        Value::String(s) => s.clone(),
        other => other.to_string(),
    };
    match fmt {
        Some("first_sentence") => first_sentence(&s),
        Some("upper") => s.to_uppercase(),
        _ => s,
    }
}

pub fn first_sentence(text: &str) -> String {
    let t = text.trim();
    let mut end = t.len();
    let bytes = t.as_bytes();
    for (i, c) in t.char_indices() {
        if c == '.' {
            let next = bytes.get(i + 1).copied();
            if next.is_none() || next == Some(b' ') || next == Some(b'\n') {
                end = i + 1;
                break;
            }
        }
    }
    t[..end].replace('\n', " ")
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    const BODY: &str = "\
Intro prose is ignored.
@compute fcf_per_share = kpis.free_cash_flow_fy / market_snapshot.shares_outstanding
@compute band_low = round(fcf_per_share * 20)
@verdict Pass when market_snapshot.price > band_low
@verdict Buy
@themes AI Infrastructure, Moats
@section Financial Snapshot | modes=full,quick | cites=kpis
Revenue {kpis.revenue_fy|usd_b}; band from {band_low|usd0}.
@section Sell Check | modes=sell
Nothing to sell.
";

    #[test]
    fn heading_closes_open_section() {
        let d =
            Directives::parse("@section Risks\nDebt.\n\n## Reference: notes.md\nKeep a list.\n");
        assert_eq!(d.sections.len(), 1);
        assert_eq!(d.sections[0].template, "Debt.");
    }

    #[test]
    fn parses_all_directive_kinds() {
        let d = Directives::parse(BODY);
        assert_eq!(d.computes.len(), 2);
        assert_eq!(
            d.verdicts[0].condition.as_deref(),
            Some("market_snapshot.price > band_low")
        );
        assert_eq!(d.verdicts[1].condition, None);
        assert_eq!(d.themes, vec!["AI Infrastructure", "Moats"]);
        assert_eq!(d.sections.len(), 2);
        assert!(d.sections[0].applies_to("quick"));
        assert!(!d.sections[1].applies_to("full"));
        assert_eq!(d.sections[1].template, "Nothing to sell.");
    }

    #[test]
    fn computes_and_renders_with_aliases() {
        let mut vars = Vars::new();
        vars.absorb(
            "kpis",
            &json!({"metrics": {"free_cash_flow_fy": {"value": 93.5e9}, "revenue_fy": {"value": 215.9e9}}}),
        );
        vars.absorb(
            "market_snapshot",
            &json!({"price": 235.0, "shares_outstanding": 24.3e9}),
        );
        let d = Directives::parse(BODY);
        for (name, expr) in &d.computes {
            let v = vars.eval_number(expr).unwrap();
            vars.set(name, json!(v));
        }
        assert_eq!(vars.number("band_low"), Some(77.0));
        assert!(vars
            .eval_bool(d.verdicts[0].condition.as_deref().unwrap())
            .unwrap());
        assert_eq!(
            vars.render(&d.sections[0].template),
            "Revenue $215.9B; band from $77."
        );
        assert_eq!(vars.render("{missing.thing}"), "n/a");
    }

    #[test]
    fn first_sentence_stops_at_period_space() {
        assert_eq!(
            first_sentence("We sell 3.5 units. Then more."),
            "We sell 3.5 units."
        );
    }
}
