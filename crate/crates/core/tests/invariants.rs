use std::collections::BTreeSet;
use std::sync::Arc;

use analyst_pod::category::{Phase, RunnerKind};
use analyst_pod::clock::Clock;
use analyst_pod::planner::TaskStatus;
use analyst_pod::registry::{validate_spec, Registry, SkillSpec};
use analyst_pod::store::{verify_dir, ArtifactDraft, ArtifactId, EvidenceStore};
use proptest::prelude::*;

const CATEGORIES: &[&str] = &["filings", "kpis", "segments", "memo", "news"];

#[derive(Debug, Clone)]
struct Draft {
    category: usize,
    payload: String,
    parents: Vec<usize>,
    ticker: Option<String>,
}

fn drafts() -> impl Strategy<Value = Vec<Draft>> {
    proptest::collection::vec(
        (
            0..CATEGORIES.len(),
            // Long enough on occasion to land in the object directory.
            prop_oneof!["[a-z ]{0,40}", "[a-z ]{600,900}"],
            proptest::collection::vec(any::<prop::sample::Index>(), 0..3),
            proptest::option::of("[A-Z]{2,4}"),
        ),
        1..24,
    )
    .prop_map(|raw| {
        raw.into_iter()
            .enumerate()
            .map(|(i, (category, payload, parents, ticker))| Draft {
                category,
                payload,
                parents: if i == 0 {
                    Vec::new()
                } else {
                    parents.iter().map(|p| p.index(i)).collect()
                },
                ticker,
            })
            .collect()
    })
}

fn load(store: &EvidenceStore, drafts: &[Draft]) -> Vec<ArtifactId> {
    let mut ids: Vec<ArtifactId> = Vec::new();
    for (i, d) in drafts.iter().enumerate() {
        let parents: Vec<ArtifactId> = d.parents.iter().map(|p| ids[*p].clone()).collect();
        let id = store
            .append(
                ArtifactDraft::text(CATEGORIES[d.category], d.payload.clone())
                    .produced_by("eng-prop", "skill", &format!("task-{i}"))
                    .ticker(d.ticker.clone())
                    .parents(parents),
            )
            .unwrap();
        ids.push(id);
    }
    ids
}

fn files_under(dir: &std::path::Path, out: &mut Vec<std::path::PathBuf>) {
    let Ok(entries) = std::fs::read_dir(dir) else {
        return;
    };
    for e in entries.flatten() {
        let p = e.path();
        if p.is_dir() {
            files_under(&p, out);
        } else {
            out.push(p);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn store_is_content_addressed_and_closed_under_lineage(ds in drafts()) {
        let store = EvidenceStore::in_memory(Arc::new(Clock::logical()));
        let ids = load(&store, &ds);
        for id in &ids {
            let a = store.get(id).unwrap();
            prop_assert_eq!(&a.recompute_id(), id);
            let lineage = store.lineage(id).unwrap();
            prop_assert_eq!(&lineage.nodes[0], id);
            let nodes: BTreeSet<&ArtifactId> = lineage.nodes.iter().collect();
            for (child, parent) in &lineage.edges {
                prop_assert!(nodes.contains(child) && nodes.contains(parent));
                prop_assert!(store.get(child).unwrap().parent_ids.contains(parent));
            }
            for p in &a.parent_ids {
                prop_assert!(lineage.contains(p));
            }
        }
        prop_assert!(store.verify_integrity().is_ok());

        let before = store.len();
        let again = load(&store, &ds);
        prop_assert_eq!(again, ids);
        prop_assert_eq!(store.len(), before);
    }

    #[test]
    fn disk_store_reopens_identically_and_detects_any_flip(
        ds in drafts(),
        pick in any::<prop::sample::Index>(),
        byte in any::<prop::sample::Index>(),
    ) {
        let tmp = tempfile::tempdir().unwrap();
        let ids: BTreeSet<ArtifactId> = {
            let store = EvidenceStore::open(tmp.path(), Arc::new(Clock::logical())).unwrap();
            load(&store, &ds).into_iter().collect()
        };
        let reopened = EvidenceStore::open(tmp.path(), Arc::new(Clock::logical())).unwrap();
        let seen: BTreeSet<ArtifactId> = reopened.all().iter().map(|a| a.id.clone()).collect();
        prop_assert_eq!(&seen, &ids);
        drop(reopened);
        prop_assert!(verify_dir(tmp.path()).is_ok());

        let mut files = Vec::new();
        files_under(tmp.path(), &mut files);
        files.sort();
        let victim = pick.get(&files);
        let mut bytes = std::fs::read(victim).unwrap();
        prop_assume!(!bytes.is_empty());
        let at = byte.index(bytes.len());
        // Keep the flip printable so the index stays parseable text.
        bytes[at] = if bytes[at] == b'x' { b'y' } else { b'x' };
        std::fs::write(victim, bytes).unwrap();
        prop_assert!(!verify_dir(tmp.path()).is_ok(), "flip in {} at {at} went unnoticed", victim.display());
    }

    #[test]
    fn producers_are_sorted_and_pins_only_reorder(
        specs in proptest::collection::vec((0usize..5, 1u8..32), 1..10),
        pin in any::<prop::sample::Index>(),
    ) {
        let mut r = Registry::new();
        for (i, (phase, mask)) in specs.iter().enumerate() {
            let produces: Vec<&str> = CATEGORIES
                .iter()
                .enumerate()
                .filter(|(b, _)| mask & (1 << b) != 0)
                .map(|(_, c)| *c)
                .collect();
            let spec = SkillSpec::new(&format!("k{}", specs.len() - i), Phase::ALL[*phase], RunnerKind::Deterministic)
                .produces(&produces);
            prop_assert!(validate_spec(&spec).is_empty());
            r.register_skill(spec).unwrap();
        }
        for c in CATEGORIES {
            let all = r.producers_of(c);
            let mut sorted = all.clone();
            sorted.sort();
            prop_assert_eq!(&all, &sorted);
            for id in &all {
                prop_assert!(r.get_skill(id).unwrap().produces_category(c));
            }
            if all.is_empty() {
                continue;
            }
            let chosen = pin.get(&all).clone();
            let pinned = r.producers_for(c, Some(&chosen));
            prop_assert_eq!(&pinned[0], &chosen);
            let a: BTreeSet<_> = pinned.iter().collect();
            let b: BTreeSet<_> = all.iter().collect();
            prop_assert_eq!(a, b);
            prop_assert_eq!(r.producers_for(c, Some("not-a-producer")), all);
        }
    }

    #[test]
    fn done_is_absorbing(steps in proptest::collection::vec(0usize..5, 0..30)) {
        use TaskStatus::*;
        let all = [Pending, InProgress, Done, Error, Skipped];
        let mut s = Pending;
        let mut reached_done = false;
        for k in steps {
            let to = all[k];
            if s.can_transition(to) {
                s = to;
            }
            reached_done |= s == Done;
            if reached_done {
                prop_assert_eq!(s, Done);
            }
        }
        for to in all {
            prop_assert!(!Done.can_transition(to));
        }
    }
}

#[test]
fn overlapping_contract_is_rejected() {
    let spec = SkillSpec::new("loop", Phase::Analyze, RunnerKind::Deterministic)
        .needs(&["kpis"])
        .produces(&["kpis"]);
    let rules: Vec<_> = validate_spec(&spec).into_iter().map(|v| v.rule).collect();
    assert_eq!(rules, ["needs-produces-overlap"]);
}
