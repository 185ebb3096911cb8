//! Seeded random datasets of at most 20 trials over a random multi-parent
//! taxonomy, each with a random multi-group query.

use std::collections::BTreeSet;

use ade_core::glyph::Styles;
use ade_core::model::{
    assemble_dataset, AdeObservation, AdeTerm, ClinicalTrial, DrugTreatment, PatientGroup, Period, PeriodKind,
};
use ade_core::query::{compute_exclusions, APSpec, GroupQuery, QuerySpec};
use ade_core::taxonomy::{NodeKind, Taxonomy, TaxonomyNode};
use ade_core::Dataset;
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const MAX_TRIALS: usize = 20;

#[derive(Debug, Clone)]
pub struct Fixture {
    pub seed: u64,
    pub taxonomy: Taxonomy,
    pub trials: Vec<ClinicalTrial>,
    pub terms: Vec<AdeTerm>,
    pub observations: Vec<AdeObservation>,
    /// Query with exclusions already computed.
    pub query: QuerySpec,
    pub dataset: Dataset,
}

fn ap(i: usize) -> String {
    format!("ap{i}")
}

fn random_taxonomy(rng: &mut ChaCha8Rng) -> Taxonomy {
    let mut nodes = vec![
        TaxonomyNode::new("tt_any", NodeKind::TrialType, "any trial"),
        TaxonomyNode::new("tt_rct", NodeKind::TrialType, "randomized").with_parent("tt_any"),
        TaxonomyNode::new("tt_open", NodeKind::TrialType, "open label").with_parent("tt_any"),
        TaxonomyNode::new("placebo", NodeKind::ActivePrinciple, "placebo"),
    ];
    let n_ind = rng.random_range(2..=5);
    for i in 0..n_ind {
        let mut node = TaxonomyNode::new(format!("ind{i}"), NodeKind::Indication, format!("indication {i}"));
        for _ in 0..rng.random_range(0..=2usize.min(i)) {
            node = node.with_parent(format!("ind{}", rng.random_range(0..i)));
        }
        nodes.push(node);
    }
    let n_ap = rng.random_range(3..=10);
    for i in 0..n_ap {
        let mut node = TaxonomyNode::new(ap(i), NodeKind::ActivePrinciple, format!("principle {i}"));
        for _ in 0..rng.random_range(0..=2usize.min(i)) {
            node = node.with_parent(ap(rng.random_range(0..i)));
        }
        nodes.push(node);
    }
    for style in Styles::builtin().categories() {
        nodes.push(TaxonomyNode::new(&style.category_id, NodeKind::AdeCategory, &style.category_id));
    }
    Taxonomy::from_nodes(nodes).expect("generated taxonomy is acyclic")
}

fn random_terms(rng: &mut ChaCha8Rng, t: &Taxonomy) -> Vec<AdeTerm> {
    let cats: Vec<&str> = t.ids_of_kind(NodeKind::AdeCategory).collect();
    (0..rng.random_range(2..=10))
        .map(|i| {
            let mut category_ids = BTreeSet::new();
            category_ids.insert(cats.choose(rng).unwrap().to_string());
            if rng.random_bool(0.3) {
                category_ids.insert(cats.choose(rng).unwrap().to_string());
            }
            AdeTerm {
                label: format!("term {i}"),
                meddra_code: Some(format!("{}", 10_000_000 + i)),
                soc: "General disorders".into(),
                category_ids,
            }
        })
        .collect()
}

fn random_group(rng: &mut ChaCha8Rng, id: String, principles: &[String], indications: &[String]) -> PatientGroup {
    let treatments = if rng.random_bool(0.3) {
        vec![DrugTreatment::new("placebo")]
    } else {
        let mut picked: Vec<String> = Vec::new();
        for _ in 0..rng.random_range(1..=2) {
            let p = principles.choose(rng).unwrap().clone();
            if !picked.contains(&p) {
                picked.push(p);
            }
        }
        picked.into_iter().map(DrugTreatment::new).collect()
    };
    PatientGroup {
        label: id.clone(),
        id,
        n_patients: rng.random_range(1..=300),
        treatments,
        indication_ids: BTreeSet::from([indications.choose(rng).unwrap().clone()]),
    }
}

fn random_query_group(rng: &mut ChaCha8Rng, principles: &[String], indications: &[String]) -> GroupQuery {
    let mut gq = GroupQuery::default();
    let n = if rng.random_bool(0.8) { 1 } else { 2 };
    for _ in 0..n {
        let p = if rng.random_bool(0.1) { "placebo".to_string() } else { principles.choose(rng).unwrap().clone() };
        gq.ap_specs.push(APSpec::new(p));
    }
    gq.open_list = rng.random_bool(0.3);
    if rng.random_bool(0.15) {
        gq.indication_ids.insert(indications.choose(rng).unwrap().clone());
    }
    if rng.random_bool(0.1) {
        gq.trial_type_ids.insert("tt_rct".into());
    }
    gq
}

impl Fixture {
    pub fn generate(seed: u64) -> Fixture {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let taxonomy = random_taxonomy(&mut rng);
        let principles: Vec<String> =
            taxonomy.ids_of_kind(NodeKind::ActivePrinciple).filter(|id| *id != "placebo").map(String::from).collect();
        let indications: Vec<String> = taxonomy.ids_of_kind(NodeKind::Indication).map(String::from).collect();
        let terms = random_terms(&mut rng, &taxonomy);

        let mut trials = Vec::new();
        let mut observations = Vec::new();
        for ti in 0..rng.random_range(1..=MAX_TRIALS) {
            let id = format!("T{ti:02}");
            let kinds = if rng.random_bool(0.15) {
                vec![PeriodKind::Titration, PeriodKind::Maintenance]
            } else {
                vec![PeriodKind::Single]
            };
            let mut periods = Vec::new();
            for (pi, kind) in kinds.into_iter().enumerate() {
                let groups: Vec<PatientGroup> = (0..rng.random_range(1..=4))
                    .map(|gi| random_group(&mut rng, format!("P{pi}G{gi}"), &principles, &indications))
                    .collect();
                for g in &groups {
                    for term in &terms {
                        for serious in [false, true] {
                            if rng.random_bool(if serious { 0.15 } else { 0.4 }) {
                                observations.push(AdeObservation {
                                    trial_id: id.clone(),
                                    period_index: pi,
                                    group_id: g.id.clone(),
                                    term: term.label.clone(),
                                    serious,
                                    event_count: rng.random_range(1..=u64::from(g.n_patients)),
                                });
                            }
                        }
                    }
                }
                periods.push(Period { kind, groups });
            }
            let trial_type = if rng.random_bool(0.7) { "tt_rct" } else { "tt_open" };
            trials.push(ClinicalTrial {
                title: format!("trial {ti}"),
                id,
                completion_date: None,
                trial_type_ids: BTreeSet::from([trial_type.to_string()]),
                periods,
            });
        }

        let query = QuerySpec {
            groups: (0..rng.random_range(1..=3))
                .map(|_| random_query_group(&mut rng, &principles, &indications))
                .collect(),
            excluded_trial_ids: BTreeSet::new(),
        };
        let query = compute_exclusions(&query, &taxonomy);
        Fixture::assemble(seed, taxonomy, trials, terms, observations, query)
    }

    fn assemble(
        seed: u64,
        taxonomy: Taxonomy,
        trials: Vec<ClinicalTrial>,
        terms: Vec<AdeTerm>,
        observations: Vec<AdeObservation>,
        query: QuerySpec,
    ) -> Fixture {
        let (dataset, _) = assemble_dataset(taxonomy.clone(), trials.clone(), terms.clone(), observations.clone())
            .expect("generated dataset is valid");
        Fixture { seed, taxonomy, trials, terms, observations, query, dataset }
    }

    /// Every group size and event count multiplied by `k`.
    pub fn scaled(&self, k: u32) -> Fixture {
        let mut trials = self.trials.clone();
        for g in trials.iter_mut().flat_map(|t| t.periods.iter_mut()).flat_map(|p| p.groups.iter_mut()) {
            g.n_patients *= k;
        }
        let mut observations = self.observations.clone();
        for o in &mut observations {
            o.event_count *= u64::from(k);
        }
        Fixture::assemble(
            self.seed,
            self.taxonomy.clone(),
            trials,
            self.terms.clone(),
            observations,
            self.query.clone(),
        )
    }

    /// Number of the query's groups.
    pub fn n_queries(&self) -> usize {
        self.query.groups.len()
    }
}
