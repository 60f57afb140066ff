//! Brute-force reference planner and a generator of random skill registries.
//!
//! The oracle recomputes the backward closure as a plain fixpoint over the
//! whole registry, with no queue and no shared code with the real planner.

#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use analyst_pod::category::{CategoryId, Phase, RunnerKind};
use analyst_pod::planner::{derive_dag, PlanError, PlanTarget, PlanTemplate};
use analyst_pod::registry::{Registry, SkillSpec};
use chrono::{TimeZone, Utc};
use proptest::prelude::*;

const POOL: &[&str] = &[
    "c0",
    "c1",
    "c2",
    "c3",
    "c4",
    "c5",
    "c6",
    "c7",
    "news",
    "transcripts",
];
const OPTIONAL: &[&str] = analyst_pod::category::OPTIONAL_CATEGORIES;

#[derive(Debug, Clone)]
pub struct GenSkill {
    pub id: String,
    pub phase: Phase,
    pub needs: BTreeSet<String>,
    pub produces: BTreeSet<String>,
}

#[derive(Debug, Clone)]
pub struct Case {
    pub skills: Vec<GenSkill>,
    pub compose: String,
    pub maintain: bool,
    pub pins: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Expected {
    Graph {
        nodes: BTreeSet<String>,
        edges: BTreeSet<(String, String, String)>,
    },
    Missing(BTreeSet<String>),
    Cycle,
    Invalid,
}

impl Case {
    /// A case over an existing registry; the oracle only reads contracts.
    pub fn from_registry(
        registry: &Registry,
        compose: &str,
        maintain: bool,
        pins: BTreeMap<String, String>,
    ) -> Self {
        Case {
            skills: registry
                .skills()
                .map(|s| GenSkill {
                    id: s.id.clone(),
                    phase: s.phase,
                    needs: s.needs.iter().map(|c| c.to_string()).collect(),
                    produces: s.produces.iter().map(|c| c.to_string()).collect(),
                })
                .collect(),
            compose: compose.to_string(),
            maintain,
            pins,
        }
    }

    pub fn registry(&self) -> Registry {
        let mut r = Registry::new();
        for s in &self.skills {
            let needs: Vec<&str> = s.needs.iter().map(String::as_str).collect();
            let produces: Vec<&str> = s.produces.iter().map(String::as_str).collect();
            r.register_skill(
                SkillSpec::new(&s.id, s.phase, RunnerKind::Deterministic)
                    .needs(&needs)
                    .produces(&produces),
            )
            .expect("generated spec is valid");
        }
        r
    }

    pub fn template(&self) -> PlanTemplate {
        let mut phases = vec![Phase::Setup, Phase::Ingest, Phase::Analyze, Phase::Compose];
        if self.maintain {
            phases.push(Phase::Maintain);
        }
        PlanTemplate {
            id: "random".into(),
            engagement_type: "random".into(),
            compose_skill: self.compose.clone(),
            required_phases: phases,
            pinned_producers: self
                .pins
                .iter()
                .map(|(c, s)| (CategoryId::new(c.clone()).unwrap(), s.clone()))
                .collect(),
            params: Default::default(),
            description: String::new(),
        }
    }

    fn skill(&self, id: &str) -> &GenSkill {
        self.skills
            .iter()
            .find(|s| s.id == id)
            .expect("known skill")
    }

    fn producer(&self, category: &str) -> Option<String> {
        if let Some(pin) = self.pins.get(category) {
            if self
                .skills
                .iter()
                .any(|s| &s.id == pin && s.produces.contains(category))
            {
                return Some(pin.clone());
            }
        }
        self.skills
            .iter()
            .filter(|s| s.produces.contains(category))
            .map(|s| s.id.clone())
            .min()
    }

    /// What a correct planner must return for this case.
    pub fn expected(&self) -> Expected {
        let mut nodes: BTreeSet<String> = [self.compose.clone()].into();
        if self.maintain {
            match self.producer("graph_facts") {
                Some(w) => {
                    nodes.insert(w);
                }
                None => return Expected::Missing(["graph_facts".to_string()].into()),
            }
        }
        loop {
            let mut next = nodes.clone();
            for n in &nodes {
                for need in &self.skill(n).needs {
                    if let Some(p) = self.producer(need) {
                        next.insert(p);
                    }
                }
            }
            if next == nodes {
                break;
            }
            nodes = next;
        }
        let mut edges = BTreeSet::new();
        let mut missing = BTreeSet::new();
        for n in &nodes {
            for need in &self.skill(n).needs {
                match self.producer(need) {
                    Some(p) => {
                        edges.insert((p, n.clone(), need.clone()));
                    }
                    None if OPTIONAL.contains(&need.as_str()) => {}
                    None => {
                        missing.insert(need.clone());
                    }
                }
            }
        }
        if !missing.is_empty() {
            return Expected::Missing(missing);
        }
        if has_cycle(&nodes, &edges) {
            return Expected::Cycle;
        }
        for (from, to, _) in &edges {
            if self.skill(from).phase > self.skill(to).phase {
                return Expected::Invalid;
            }
        }
        for n in &nodes {
            let leaf = !edges.iter().any(|(_, to, _)| to == n);
            if leaf && *n != self.compose && self.skill(n).phase != Phase::Setup {
                return Expected::Invalid;
            }
        }
        Expected::Graph { nodes, edges }
    }

    /// What the real planner returned, in the oracle's vocabulary.
    pub fn actual(&self) -> Expected {
        let target = PlanTarget {
            engagement_id: "eng-oracle".into(),
            ticker: None,
            persona_id: None,
            params: Default::default(),
            requested_at: Utc.with_ymd_and_hms(2026, 1, 1, 0, 0, 0).unwrap(),
        };
        match derive_dag(&self.template(), &target, &self.registry()) {
            Ok(g) => Expected::Graph {
                nodes: g.tasks.iter().map(|t| t.id.clone()).collect(),
                edges: g
                    .edges
                    .iter()
                    .map(|e| (e.from.clone(), e.to.clone(), e.category.to_string()))
                    .collect(),
            },
            Err(PlanError::MissingProducer(m)) => Expected::Missing(m.into_iter().collect()),
            Err(PlanError::CycleDetected(_)) => Expected::Cycle,
            Err(PlanError::InvalidGraph(_)) => Expected::Invalid,
            Err(e) => panic!("unexpected planner error: {e}"),
        }
    }
}

fn has_cycle(nodes: &BTreeSet<String>, edges: &BTreeSet<(String, String, String)>) -> bool {
    // Repeatedly strip nodes with no incoming edge from the remaining set.
    let mut left = nodes.clone();
    loop {
        let free: Vec<String> = left
            .iter()
            .filter(|n| !edges.iter().any(|(f, t, _)| t == *n && left.contains(f)))
            .cloned()
            .collect();
        if free.is_empty() {
            return !left.is_empty();
        }
        for f in free {
            left.remove(&f);
        }
    }
}

fn subset(pool: Vec<String>, mask: u32) -> BTreeSet<String> {
    pool.into_iter()
        .enumerate()
        .filter(|(i, _)| mask & (1 << i) != 0)
        .map(|(_, c)| c)
        .collect()
}

/// Random registries whose contracts can only point backwards in id order,
/// so every derived graph is acyclic and phase-monotone.
pub fn acyclic_case() -> impl Strategy<Value = Case> {
    (
        1usize..=11,
        proptest::collection::vec((0usize..4, any::<u32>(), any::<u32>(), any::<bool>()), 11),
        any::<bool>(),
        any::<u32>(),
    )
        .prop_map(|(n, raw, maintain, compose_mask)| {
            let mut skills: Vec<GenSkill> = Vec::new();
            let mut phase_floor = 0usize;
            for (i, (step, need_mask, prod_mask, optional)) in raw.into_iter().take(n).enumerate() {
                let earlier: Vec<String> = skills
                    .iter()
                    .flat_map(|s| s.produces.iter().cloned())
                    .collect::<BTreeSet<_>>()
                    .into_iter()
                    .collect();
                let mut needs = subset(earlier, need_mask);
                if optional {
                    needs.insert("transcripts".to_string());
                }
                let mut produces =
                    subset(POOL[..8].iter().map(|s| s.to_string()).collect(), prod_mask);
                produces.retain(|c| !needs.contains(c));
                if produces.is_empty() {
                    produces.insert(format!("x{i}"));
                }
                let phase = if needs.iter().all(|c| OPTIONAL.contains(&c.as_str())) {
                    Phase::Setup
                } else {
                    phase_floor = phase_floor.max(step.min(2));
                    Phase::ALL[phase_floor]
                };
                skills.push(GenSkill {
                    id: format!("s{i:02}"),
                    phase,
                    needs,
                    produces,
                });
            }
            let earlier: Vec<String> = skills
                .iter()
                .flat_map(|s| s.produces.iter().cloned())
                .collect::<BTreeSet<_>>()
                .into_iter()
                .collect();
            let compose_needs = subset(earlier, compose_mask);
            skills.push(GenSkill {
                id: "s98_compose".into(),
                phase: Phase::Compose,
                needs: compose_needs,
                produces: ["memo".to_string()].into(),
            });
            skills.push(GenSkill {
                id: "s99_kg".into(),
                phase: Phase::Maintain,
                needs: ["memo".to_string()].into(),
                produces: ["graph_facts".to_string()].into(),
            });
            Case {
                skills,
                compose: "s98_compose".into(),
                maintain,
                pins: BTreeMap::new(),
            }
        })
}

/// Unconstrained registries: needs, phases and pins are arbitrary, so the
/// planner must also report missing producers, cycles and invariant breaks.
pub fn arbitrary_case() -> impl Strategy<Value = Case> {
    (
        1usize..=11,
        proptest::collection::vec((0usize..4, any::<u32>(), any::<u32>()), 11),
        any::<u32>(),
        any::<bool>(),
        proptest::collection::vec((0usize..8, 0usize..12), 0..3),
    )
        .prop_map(|(n, raw, compose_mask, maintain, pins)| {
            let pool: Vec<String> = POOL.iter().map(|s| s.to_string()).collect();
            let mut skills: Vec<GenSkill> = raw
                .into_iter()
                .take(n)
                .enumerate()
                .map(|(i, (phase, need_mask, prod_mask))| {
                    let needs = subset(pool.clone(), need_mask & 0x3ff & !(prod_mask & 0xff));
                    let mut produces = subset(pool[..8].to_vec(), prod_mask);
                    if produces.is_empty() {
                        produces.insert(format!("x{i}"));
                    }
                    GenSkill {
                        id: format!("s{i:02}"),
                        phase: Phase::ALL[phase],
                        needs,
                        produces,
                    }
                })
                .collect();
            skills.push(GenSkill {
                id: "s98_compose".into(),
                phase: Phase::Compose,
                needs: subset(pool.clone(), compose_mask & 0x3ff),
                produces: ["memo".to_string()].into(),
            });
            if maintain {
                skills.push(GenSkill {
                    id: "s99_kg".into(),
                    phase: Phase::Maintain,
                    needs: ["memo".to_string()].into(),
                    produces: ["graph_facts".to_string()].into(),
                });
            }
            let pins = pins
                .into_iter()
                .filter(|(_, s)| *s < n)
                .map(|(c, s)| (POOL[c].to_string(), format!("s{s:02}")))
                .collect();
            Case {
                skills,
                compose: "s98_compose".into(),
                maintain: maintain || compose_mask & 1 == 1,
                pins,
            }
        })
}
