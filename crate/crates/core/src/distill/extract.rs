//! Step 1: rule-based extraction. Sentences are matched against a keyword
//! lexicon per judgment type; short first-person sentences become style cues
//! and sentences carrying rule words become heuristics.

use std::collections::BTreeSet;
use std::sync::OnceLock;

use regex::Regex;

use super::{DistillError, Excerpt, JudgmentType, SourceCorpus, StructuredMaterial};

const MAX_STYLE_CUES: usize = 6;
const MAX_HEURISTICS: usize = 8;
const STYLE_CUE_MAX_WORDS: usize = 16;

fn lexicon(kind: JudgmentType) -> &'static Regex {
    static RES: OnceLock<Vec<Regex>> = OnceLock::new();
    let all = RES.get_or_init(|| {
        JudgmentType::ALL
            .iter()
            .map(|k| {
                let words = match k {
                    JudgmentType::BusinessQuality => {
                        "moats?|durable|competitive advantage|brand|pricing power|franchise|managers?|management|return on (?:equity|capital)|switching costs?|customers"
                    }
                    JudgmentType::ValuationDiscipline => {
                        "price|prices|valuation|intrinsic value|margin of safety|overpay|owner earnings|cash flow|multiple|cheap|expensive"
                    }
                    JudgmentType::RiskAssessment => {
                        "risk|risks|debt|leverage|borrow(?:ed|ing)?|loss|losses|lose|downside|permanent|fragile|ruin"
                    }
                    JudgmentType::MacroSensitivity => {
                        "interest rates?|inflation|economy|recession|macro|central bank|currency|cycles?|forecasts?"
                    }
                };
                Regex::new(&format!(r"(?i)\b(?:{words})\b")).unwrap()
            })
            .collect()
    });
    &all[kind as usize]
}

fn first_person_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?i)\b(?:i|i'm|i've|i'd|my|me|we|our|us)\b").unwrap())
}

fn rule_word_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?i)\b(?:never|always|only|avoid|rule|must|insist)\b").unwrap())
}

pub(super) fn is_first_person(text: &str) -> bool {
    first_person_re().is_match(text)
}

/// Splits prose into sentences. Heading lines (`#`) and blank lines are
/// boundaries and are dropped.
pub fn sentences(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    for para in text.split("\n\n") {
        let joined: String = para
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .collect::<Vec<_>>()
            .join(" ");
        let mut current = String::new();
        let mut chars = joined.chars().peekable();
        while let Some(c) = chars.next() {
            current.push(c);
            if matches!(c, '.' | '!' | '?') && chars.peek().is_none_or(|n| n.is_whitespace()) {
                push_sentence(&mut out, &mut current);
            }
        }
        push_sentence(&mut out, &mut current);
    }
    out
}

fn push_sentence(out: &mut Vec<String>, current: &mut String) {
    let s = current.trim();
    if s.split_whitespace().count() >= 3 {
        out.push(s.to_string());
    }
    current.clear();
}

pub fn extract(corpus: &SourceCorpus) -> Result<StructuredMaterial, DistillError> {
    corpus.validate()?;
    let mut excerpts = Vec::new();
    let mut style_cues = Vec::new();
    let mut heuristics = Vec::new();
    let mut seen_cues = BTreeSet::new();
    let mut seen_rules = BTreeSet::new();
    for doc in &corpus.documents {
        for sentence in sentences(&doc.text) {
            for kind in JudgmentType::ALL {
                if lexicon(kind).is_match(&sentence) {
                    excerpts.push(Excerpt {
                        text: sentence.clone(),
                        source: doc.file.clone(),
                        judgment_type: kind,
                    });
                }
            }
            let words = sentence.split_whitespace().count();
            if words <= STYLE_CUE_MAX_WORDS
                && is_first_person(&sentence)
                && style_cues.len() < MAX_STYLE_CUES
                && seen_cues.insert(sentence.clone())
            {
                style_cues.push(sentence.clone());
            }
            if rule_word_re().is_match(&sentence)
                && heuristics.len() < MAX_HEURISTICS
                && seen_rules.insert(sentence.clone())
            {
                heuristics.push(sentence.clone());
            }
        }
    }
    Ok(StructuredMaterial {
        excerpts,
        style_cues,
        heuristics,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sentences_skip_headings_and_fragments() {
        let s = sentences(
            "# Letter\n\nI like cash. Debt worries me a lot!\nOk.\n\nA second paragraph here.",
        );
        assert_eq!(
            s,
            vec![
                "I like cash.",
                "Debt worries me a lot!",
                "A second paragraph here."
            ]
        );
    }

    #[test]
    fn decimals_do_not_split() {
        let s = sentences("We paid 1.5 times book value for it.");
        assert_eq!(s.len(), 1);
    }

    #[test]
    fn lexicons_are_word_bounded() {
        assert!(lexicon(JudgmentType::RiskAssessment).is_match("too much debt"));
        assert!(!lexicon(JudgmentType::RiskAssessment).is_match("a debtor nation"));
        assert!(lexicon(JudgmentType::MacroSensitivity).is_match("Interest rates rose"));
    }
}
