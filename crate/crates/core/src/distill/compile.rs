//! Steps 3 and 4: compile a persona document into a compose-phase skill spec,
//! then package the spec as a pack. Neither step touches a provider.

use std::collections::BTreeMap;

use super::{BundleConfig, DistillError, PersonaDocument};
use crate::category::{Phase, RunnerKind};
use crate::planner::{PlanTemplate, TemplateCatalog};
use crate::registry::{validate_spec, Limits, PackManifest, SkillSpec};
use crate::runners::first_sentence;

pub const PERSONA_NEEDS: &[&str] = &[
    "coverage_brief",
    "filings",
    "market_snapshot",
    "kpis",
    "segments",
    "gate_report",
    "news",
    "transcripts",
];

/// Placeholder template for a section title, chosen by keyword, plus the
/// persona field whose first sentence follows it.
fn section_template(title: &str) -> (&'static str, &'static str) {
    let t = title.to_lowercase();
    let has = |words: &[&str]| words.iter().any(|w| t.contains(w));
    if has(&["valuation", "margin of safety", "intrinsic", "price"]) {
        (
            "Free cash flow of {kpis.free_cash_flow_fy|usd_b} against a market value of {market_snapshot.market_cap|usd_t}; the shares last traded at {market_snapshot.price|usd2}.",
            "investment_heuristics",
        )
    } else if has(&["financial", "owner earnings", "snapshot"]) {
        (
            "Fiscal revenue {kpis.revenue_fy|usd_b}, growth {kpis.revenue_yoy|pct}, fourth-quarter gross margin {kpis.gross_margin_q4|pct}, free cash flow {kpis.free_cash_flow_fy|usd_b}.",
            "preferred_evidence",
        )
    } else if has(&["risk", "sell"]) {
        ("{filings.risk_factors|first_sentence}", "risk_profile")
    } else if has(&["management", "integrity"]) {
        ("{filings.mdna|first_sentence}", "traits")
    } else if has(&["business", "moat", "competence", "segment"]) {
        (
            "{coverage_brief.company} reports its results by segment: {segments.reportable_segments}.",
            "traits",
        )
    } else if has(&["catalyst", "monitor", "news"]) {
        ("Latest headline: {news.headline}", "preferred_evidence")
    } else if has(&["verdict"]) {
        (
            "{verdict}. {coverage_brief.company} trades at {market_snapshot.price|usd2}; free cash flow of {kpis.free_cash_flow_fy|usd_b} is a {fcf_yield|pct} yield on {market_snapshot.market_cap|usd_t} of market value.",
            "investment_heuristics",
        )
    } else if has(&["filter", "question", "checklist"]) {
        (
            "- Business: two segments, {segments.reportable_segments}.\n- Moat evidence: fourth-quarter gross margin of {kpis.gross_margin_q4|pct}.\n- Cash: free cash flow of {kpis.free_cash_flow_fy|usd_b}.\n- Price: {market_snapshot.price|usd2} a share.",
            "investment_heuristics",
        )
    } else if has(&["thesis", "summary"]) {
        (
            "{coverage_brief.company} ({coverage_brief.ticker}) at {market_snapshot.price|usd2} per share, {market_snapshot.market_cap|usd_t} in total.",
            "investment_heuristics",
        )
    } else {
        (
            "{coverage_brief.company} ({coverage_brief.ticker}).",
            "traits",
        )
    }
}

fn persona_field<'a>(doc: &'a PersonaDocument, name: &str) -> &'a str {
    match name {
        "traits" => &doc.traits,
        "investment_heuristics" => &doc.investment_heuristics,
        "risk_profile" => &doc.risk_profile,
        "preferred_evidence" => &doc.preferred_evidence,
        _ => &doc.communication_style,
    }
}

fn template_mode(t: &PlanTemplate) -> String {
    t.params
        .get("mode")
        .and_then(|v| v.as_str())
        .unwrap_or("full")
        .to_string()
}

/// Directive lines must not be forged by persona text.
fn escape_directives(text: &str) -> String {
    text.lines()
        .map(|l| {
            if l.starts_with('@') {
                format!(" {l}")
            } else {
                l.to_string()
            }
        })
        .collect::<Vec<_>>()
        .join("\n")
}

/// Deterministic compilation of a persona into a compose-phase agent skill.
/// Sections come from the templates the persona's workflows name; templates
/// missing from the catalog contribute nothing here and are rejected by
/// [`bundle`].
pub fn specify(
    doc: &PersonaDocument,
    config: &BundleConfig,
    catalog: &TemplateCatalog,
) -> SkillSpec {
    let mut sections: BTreeMap<String, (usize, Vec<String>)> = BTreeMap::new();
    let mut verdict_required = false;
    for wf in &config.workflows {
        let Some(t) = catalog.get(&wf.template_id) else {
            continue;
        };
        verdict_required |=
            t.params.get("verdict_required").and_then(|v| v.as_bool()) == Some(true);
        let mode = template_mode(t);
        for title in t.required_sections() {
            if title.eq_ignore_ascii_case("sources") {
                continue;
            }
            let next = sections.len();
            let entry = sections.entry(title).or_insert((next, Vec::new()));
            if !entry.1.contains(&mode) {
                entry.1.push(mode.clone());
            }
        }
    }
    let mut ordered: Vec<_> = sections.into_iter().collect();
    ordered.sort_by_key(|(_, (order, _))| *order);

    let mut body = format!(
        "You are {}, {}. Speak in the first person and stay within your own evidence.\n\n{}\n",
        config.name,
        config.title,
        escape_directives(&doc.to_markdown())
    );
    body.push('\n');
    if verdict_required {
        body.push_str("@compute fcf_yield = kpis.free_cash_flow_fy / market_snapshot.market_cap\n");
        body.push_str("@verdict Buy when fcf_yield > 0.06\n");
        body.push_str("@verdict Hold when fcf_yield > 0.03\n");
        body.push_str("@verdict Pass\n");
    }
    for (title, (_, modes)) in ordered {
        let (template, field) = section_template(&title);
        body.push_str(&format!("@section {title} | modes={}\n", modes.join(",")));
        body.push_str(template);
        body.push('\n');
        let voice = first_sentence(persona_field(doc, field).trim_start_matches(['-', '*', ' ']));
        if !voice.is_empty() {
            body.push_str(&escape_directives(&voice));
            body.push('\n');
        }
    }

    let mut spec = SkillSpec::new(&config.skill_id(), Phase::Compose, RunnerKind::Agent)
        .needs(PERSONA_NEEDS)
        .produces(&["persona_view"])
        .body(body);
    spec.name = format!("{} analysis", config.name);
    spec.limits = Limits::default();
    spec.owner_persona = Some(config.id.clone());
    spec.metadata.insert(
        "capabilities".into(),
        "read_artifact, search_artifacts, compute".into(),
    );
    spec.metadata.insert("origin".into(), "distilled".into());
    spec
}

/// Packages a spec with the persona record fields. Every workflow must name a
/// template the catalog knows.
pub fn bundle(
    spec: &SkillSpec,
    config: &BundleConfig,
    catalog: &TemplateCatalog,
) -> Result<PackManifest, DistillError> {
    let violations = validate_spec(spec);
    if !violations.is_empty() {
        return Err(DistillError::InvalidSpec(
            violations
                .iter()
                .map(ToString::to_string)
                .collect::<Vec<_>>()
                .join("; "),
        ));
    }
    if config.workflows.is_empty() {
        return Err(DistillError::UnknownWorkflowTemplate("<none>".into()));
    }
    for wf in &config.workflows {
        if !catalog.contains(&wf.template_id) {
            return Err(DistillError::UnknownWorkflowTemplate(
                wf.template_id.clone(),
            ));
        }
    }
    if !catalog.contains(&config.default_template) {
        return Err(DistillError::UnknownWorkflowTemplate(
            config.default_template.clone(),
        ));
    }
    Ok(PackManifest {
        id: config.id.clone(),
        name: config.name.clone(),
        title: config.title.clone(),
        sector_hint: config.sector_hint.clone(),
        voice: config.voice.clone(),
        default_template: config.default_template.clone(),
        workflows: config.workflows.clone(),
        config: config.config.clone(),
        skills: vec![spec.clone()],
    })
}
