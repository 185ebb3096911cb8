//! Multi-parent classification hierarchies.
//!
//! A [`Taxonomy`] holds four kind-segregated DAGs (active principles,
//! indications, trial types and ADE categories). Subsumption is
//! "descendant-or-self": a node is subsumed by every node reachable through
//! zero or more parent edges. Ancestor closures are computed once at load
//! time; the structure is immutable afterwards.
//!
//! The on-disk format is one node per line:
//!
//! ```text
//! id|kind|label_en|label_fr|parent_id;parent_id;...
//! ```
//!
//! Blank lines and lines starting with `#` are ignored. An empty parent list
//! marks a root.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeKind {
    ActivePrinciple,
    Indication,
    TrialType,
    AdeCategory,
}

impl NodeKind {
    pub const ALL: [NodeKind; 4] =
        [NodeKind::ActivePrinciple, NodeKind::Indication, NodeKind::TrialType, NodeKind::AdeCategory];

    pub fn as_str(self) -> &'static str {
        match self {
            NodeKind::ActivePrinciple => "active_principle",
            NodeKind::Indication => "indication",
            NodeKind::TrialType => "trial_type",
            NodeKind::AdeCategory => "ade_category",
        }
    }
}

impl fmt::Display for NodeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for NodeKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        NodeKind::ALL.into_iter().find(|k| k.as_str() == s).ok_or_else(|| format!("unknown node kind `{s}`"))
    }
}

/// Display language for labels.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Lang {
    #[default]
    En,
    Fr,
}

impl FromStr for Lang {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "en" => Ok(Lang::En),
            "fr" => Ok(Lang::Fr),
            other => Err(format!("unsupported language `{other}`")),
        }
    }
}

impl Lang {
    pub fn as_str(self) -> &'static str {
        match self {
            Lang::En => "en",
            Lang::Fr => "fr",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaxonomyNode {
    pub id: String,
    pub kind: NodeKind,
    pub label_en: String,
    pub label_fr: Option<String>,
    pub parents: BTreeSet<String>,
}

impl TaxonomyNode {
    pub fn new(id: impl Into<String>, kind: NodeKind, label_en: impl Into<String>) -> Self {
        TaxonomyNode { id: id.into(), kind, label_en: label_en.into(), label_fr: None, parents: BTreeSet::new() }
    }

    pub fn with_parent(mut self, parent: impl Into<String>) -> Self {
        self.parents.insert(parent.into());
        self
    }

    pub fn with_label_fr(mut self, label: impl Into<String>) -> Self {
        self.label_fr = Some(label.into());
        self
    }

    /// Label in `lang`, falling back to English when no translation exists.
    pub fn label(&self, lang: Lang) -> &str {
        match lang {
            Lang::En => &self.label_en,
            Lang::Fr => self.label_fr.as_deref().unwrap_or(&self.label_en),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TaxonomyError {
    #[error("line {line}: {reason}")]
    Malformed { line: usize, reason: String },
    #[error("duplicate node id `{id}`")]
    DuplicateId { id: String },
    #[error("node `{id}` has an empty English label")]
    EmptyLabel { id: String },
    #[error("node `{id}` references unknown parent `{parent}`")]
    DanglingParent { id: String, parent: String },
    #[error("node `{id}` ({kind}) has parent `{parent}` of kind {parent_kind}")]
    KindMismatch { id: String, kind: NodeKind, parent: String, parent_kind: NodeKind },
    #[error("cycle detected: {}", .nodes.join(" -> "))]
    Cycle { nodes: Vec<String> },
    #[error("unknown taxonomy id `{0}`")]
    UnknownId(String),
    #[error("`{node}` ({node_kind}) and `{ancestor}` ({ancestor_kind}) belong to different kinds")]
    CrossKind { node: String, node_kind: NodeKind, ancestor: String, ancestor_kind: NodeKind },
}

/// One autocomplete hit.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Suggestion {
    pub id: String,
    pub label: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Taxonomy {
    /// Node ids in definition order; export preserves it.
    order: Vec<String>,
    nodes: BTreeMap<String, TaxonomyNode>,
    by_kind: BTreeMap<NodeKind, BTreeSet<String>>,
    children: BTreeMap<String, BTreeSet<String>>,
    /// Reflexive-transitive ancestor closure of every node.
    ancestors: BTreeMap<String, BTreeSet<String>>,
}

/// Parse and validate a taxonomy document.
pub fn load_taxonomy(document: &str) -> Result<Taxonomy, TaxonomyError> {
    let mut nodes = Vec::new();
    let mut seen = BTreeSet::new();
    for (idx, raw) in document.lines().enumerate() {
        let line = idx + 1;
        let text = raw.trim();
        if text.is_empty() || text.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = text.split('|').collect();
        if fields.len() != 5 {
            return Err(TaxonomyError::Malformed {
                line,
                reason: format!("expected 5 `|`-separated fields, found {}", fields.len()),
            });
        }
        let id = fields[0].trim();
        if id.is_empty() {
            return Err(TaxonomyError::Malformed { line, reason: "empty node id".into() });
        }
        if id.contains(';') {
            return Err(TaxonomyError::Malformed { line, reason: format!("node id `{id}` contains reserved `;`") });
        }
        let kind = NodeKind::from_str(fields[1].trim()).map_err(|reason| TaxonomyError::Malformed { line, reason })?;
        if !seen.insert(id.to_string()) {
            return Err(TaxonomyError::DuplicateId { id: id.to_string() });
        }
        let label_fr = fields[3].trim();
        nodes.push(TaxonomyNode {
            id: id.to_string(),
            kind,
            label_en: fields[2].trim().to_string(),
            label_fr: (!label_fr.is_empty()).then(|| label_fr.to_string()),
            parents: fields[4].split(';').map(str::trim).filter(|p| !p.is_empty()).map(String::from).collect(),
        });
    }
    Taxonomy::from_nodes(nodes)
}

impl Taxonomy {
    /// Validate a node list and build the closure indexes.
    pub fn from_nodes(nodes: Vec<TaxonomyNode>) -> Result<Self, TaxonomyError> {
        let mut tax = Taxonomy::default();
        for node in nodes {
            if node.label_en.trim().is_empty() {
                return Err(TaxonomyError::EmptyLabel { id: node.id });
            }
            if tax.nodes.contains_key(&node.id) {
                return Err(TaxonomyError::DuplicateId { id: node.id });
            }
            tax.order.push(node.id.clone());
            tax.by_kind.entry(node.kind).or_default().insert(node.id.clone());
            tax.nodes.insert(node.id.clone(), node);
        }
        for node in tax.nodes.values() {
            for parent in &node.parents {
                let Some(p) = tax.nodes.get(parent) else {
                    return Err(TaxonomyError::DanglingParent { id: node.id.clone(), parent: parent.clone() });
                };
                if p.kind != node.kind {
                    return Err(TaxonomyError::KindMismatch {
                        id: node.id.clone(),
                        kind: node.kind,
                        parent: parent.clone(),
                        parent_kind: p.kind,
                    });
                }
                tax.children.entry(parent.clone()).or_default().insert(node.id.clone());
            }
        }
        let topo = tax.topological_order()?;
        for id in topo {
            let mut closure = BTreeSet::from([id.clone()]);
            for parent in &tax.nodes[&id].parents {
                closure.extend(tax.ancestors[parent].iter().cloned());
            }
            tax.ancestors.insert(id, closure);
        }
        Ok(tax)
    }

    /// Parents-first ordering; fails with the node ids of one cycle.
    fn topological_order(&self) -> Result<Vec<String>, TaxonomyError> {
        #[derive(Clone, Copy, PartialEq)]
        enum Mark {
            Fresh,
            Active,
            Done,
        }
        let mut marks: BTreeMap<&str, Mark> = self.nodes.keys().map(|k| (k.as_str(), Mark::Fresh)).collect();
        let mut out = Vec::with_capacity(self.nodes.len());
        for root in self.nodes.keys() {
            if marks[root.as_str()] != Mark::Fresh {
                continue;
            }
            // Iterative DFS over parent edges; `path` mirrors the recursion stack.
            let mut path: Vec<(&str, Vec<&str>)> = Vec::new();
            marks.insert(root, Mark::Active);
            path.push((root, self.nodes[root].parents.iter().map(String::as_str).collect()));
            while let Some((node, pending)) = path.last_mut() {
                let node = *node;
                if let Some(parent) = pending.pop() {
                    match marks[parent] {
                        Mark::Fresh => {
                            marks.insert(parent, Mark::Active);
                            let next = self.nodes[parent].parents.iter().map(String::as_str).collect();
                            path.push((parent, next));
                        }
                        Mark::Active => {
                            let start = path.iter().position(|(n, _)| *n == parent).unwrap_or(0);
                            let nodes = path[start..].iter().map(|(n, _)| n.to_string()).collect();
                            return Err(TaxonomyError::Cycle { nodes });
                        }
                        Mark::Done => {}
                    }
                } else {
                    marks.insert(node, Mark::Done);
                    out.push(node.to_string());
                    path.pop();
                }
            }
        }
        Ok(out)
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&TaxonomyNode> {
        self.nodes.get(id)
    }

    pub fn node(&self, id: &str) -> Result<&TaxonomyNode, TaxonomyError> {
        self.nodes.get(id).ok_or_else(|| TaxonomyError::UnknownId(id.to_string()))
    }

    pub fn contains(&self, id: &str) -> bool {
        self.nodes.contains_key(id)
    }

    pub fn kind_of(&self, id: &str) -> Option<NodeKind> {
        self.nodes.get(id).map(|n| n.kind)
    }

    /// Whether `id` exists and is of `kind`.
    pub fn has(&self, id: &str, kind: NodeKind) -> bool {
        self.kind_of(id) == Some(kind)
    }

    /// Nodes in definition order.
    pub fn iter(&self) -> impl Iterator<Item = &TaxonomyNode> {
        self.order.iter().map(move |id| &self.nodes[id])
    }

    pub fn ids_of_kind(&self, kind: NodeKind) -> impl Iterator<Item = &str> {
        self.by_kind.get(&kind).into_iter().flatten().map(String::as_str)
    }

    pub fn children(&self, id: &str) -> impl Iterator<Item = &str> {
        self.children.get(id).into_iter().flatten().map(String::as_str)
    }

    /// Reflexive ancestor closure of `id`.
    pub fn ancestors_or_self(&self, id: &str) -> Result<&BTreeSet<String>, TaxonomyError> {
        self.ancestors.get(id).ok_or_else(|| TaxonomyError::UnknownId(id.to_string()))
    }

    /// True iff `ancestor` is reachable from `node` through zero or more
    /// parent edges. Cross-kind pairs are rejected.
    pub fn is_descendant_or_self(&self, node: &str, ancestor: &str) -> Result<bool, TaxonomyError> {
        let n = self.node(node)?;
        let a = self.node(ancestor)?;
        if n.kind != a.kind {
            return Err(TaxonomyError::CrossKind {
                node: node.to_string(),
                node_kind: n.kind,
                ancestor: ancestor.to_string(),
                ancestor_kind: a.kind,
            });
        }
        Ok(self.ancestors[node].contains(ancestor))
    }

    /// Descendant-or-self test that treats unknown or cross-kind ids as
    /// unrelated. Used on validated data where errors cannot occur.
    pub fn subsumes(&self, ancestor: &str, node: &str) -> bool {
        self.ancestors.get(node).is_some_and(|set| set.contains(ancestor))
    }

    pub fn is_strict_descendant(&self, node: &str, ancestor: &str) -> Result<bool, TaxonomyError> {
        Ok(node != ancestor && self.is_descendant_or_self(node, ancestor)?)
    }

    /// Full downward closure of `id`, including `id` itself.
    pub fn descendants_or_self(&self, id: &str) -> Result<BTreeSet<String>, TaxonomyError> {
        self.node(id)?;
        let mut out = BTreeSet::new();
        let mut stack = vec![id];
        while let Some(cur) = stack.pop() {
            if out.insert(cur.to_string()) {
                stack.extend(self.children(cur));
            }
        }
        Ok(out)
    }

    /// Nodes whose label in `lang` contains `fragment` case-insensitively,
    /// ranked by match position, then label length, then label. An empty
    /// fragment lists labels alphabetically. `kind = None` searches all kinds.
    pub fn autocomplete(&self, fragment: &str, kind: Option<NodeKind>, lang: Lang, limit: usize) -> Vec<Suggestion> {
        let needle = fragment.trim().to_lowercase();
        let mut hits: Vec<(usize, usize, String, &TaxonomyNode)> = self
            .nodes
            .values()
            .filter(|n| kind.is_none_or(|k| n.kind == k))
            .filter_map(|n| {
                let lower = n.label(lang).to_lowercase();
                let byte_pos = lower.find(&needle)?;
                let pos = lower[..byte_pos].chars().count();
                Some((pos, lower.chars().count(), lower, n))
            })
            .collect();
        if needle.is_empty() {
            hits.sort_by(|a, b| a.2.cmp(&b.2).then_with(|| a.3.id.cmp(&b.3.id)));
        } else {
            hits.sort_by(|a, b| (a.0, a.1, &a.2, &a.3.id).cmp(&(b.0, b.1, &b.2, &b.3.id)));
        }
        hits.into_iter()
            .take(limit)
            .map(|(_, _, _, n)| Suggestion { id: n.id.clone(), label: n.label(lang).to_string() })
            .collect()
    }

    /// Resolve a user-typed id or label (either language, case-insensitive)
    /// to a node id of `kind`.
    pub fn resolve(&self, text: &str, kind: NodeKind) -> Option<&str> {
        let text = text.trim();
        if let Some(node) = self.nodes.get(text).filter(|n| n.kind == kind) {
            return Some(&node.id);
        }
        let lower = text.to_lowercase();
        self.by_kind.get(&kind)?.iter().map(|id| &self.nodes[id]).find_map(|n| {
            let hit =
                n.label_en.to_lowercase() == lower || n.label_fr.as_ref().is_some_and(|l| l.to_lowercase() == lower);
            hit.then_some(n.id.as_str())
        })
    }

    pub fn label(&self, id: &str, lang: Lang) -> Option<&str> {
        self.nodes.get(id).map(|n| n.label(lang))
    }

    /// Serialize back to the line format, preserving definition order.
    pub fn to_text(&self) -> String {
        let mut out = String::from("# id|kind|label_en|label_fr|parents\n");
        for node in self.iter() {
            let parents: Vec<&str> = node.parents.iter().map(String::as_str).collect();
            out.push_str(&format!(
                "{}|{}|{}|{}|{}\n",
                node.id,
                node.kind,
                node.label_en,
                node.label_fr.as_deref().unwrap_or(""),
                parents.join(";")
            ));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const CHAIN: &str = "\
# tiny chain
analgesic|active_principle|analgesic||
nsai|active_principle|NSAI|AINS|analgesic
ibuprofen|active_principle|ibuprofen|ibuprofène|nsai
";

    #[test]
    fn chain_loads_and_subsumes() {
        let t = load_taxonomy(CHAIN).unwrap();
        assert_eq!(t.len(), 3);
        assert!(t.is_descendant_or_self("ibuprofen", "nsai").unwrap());
        assert!(t.is_descendant_or_self("ibuprofen", "analgesic").unwrap());
        assert!(t.is_descendant_or_self("nsai", "analgesic").unwrap());
        assert!(!t.is_descendant_or_self("analgesic", "ibuprofen").unwrap());
        assert!(t.is_descendant_or_self("ibuprofen", "ibuprofen").unwrap());
    }

    #[test]
    fn empty_document_is_empty_taxonomy() {
        let t = load_taxonomy("").unwrap();
        assert!(t.is_empty());
        let t = load_taxonomy("# only a comment\n\n").unwrap();
        assert!(t.is_empty());
    }

    #[test]
    fn two_node_cycle_is_reported() {
        let doc = "a|indication|A||b\nb|indication|B||a\n";
        match load_taxonomy(doc) {
            Err(TaxonomyError::Cycle { nodes }) => {
                let set: BTreeSet<_> = nodes.into_iter().collect();
                assert_eq!(set, BTreeSet::from(["a".to_string(), "b".to_string()]));
            }
            other => panic!("expected cycle, got {other:?}"),
        }
    }

    #[test]
    fn self_loop_is_a_cycle() {
        let err = load_taxonomy("a|indication|A||a\n").unwrap_err();
        assert_eq!(err, TaxonomyError::Cycle { nodes: vec!["a".into()] });
    }

    #[test]
    fn load_errors() {
        let dup = "a|indication|A||\na|indication|A2||\n";
        assert_eq!(load_taxonomy(dup).unwrap_err(), TaxonomyError::DuplicateId { id: "a".into() });
        let dangling = "a|indication|A||zzz\n";
        assert!(matches!(
            load_taxonomy(dangling).unwrap_err(),
            TaxonomyError::DanglingParent { parent, .. } if parent == "zzz"
        ));
        let malformed = "a|indication|A||\n\nb|indication|B\n";
        assert!(matches!(load_taxonomy(malformed).unwrap_err(), TaxonomyError::Malformed { line: 3, .. }));
        let bad_kind = "a|drug|A||\n";
        assert!(matches!(load_taxonomy(bad_kind).unwrap_err(), TaxonomyError::Malformed { line: 1, .. }));
        let mixed = "a|indication|A||\nb|active_principle|B||a\n";
        assert!(matches!(load_taxonomy(mixed).unwrap_err(), TaxonomyError::KindMismatch { .. }));
        let unlabeled = "a|indication| ||\n";
        assert!(matches!(load_taxonomy(unlabeled).unwrap_err(), TaxonomyError::EmptyLabel { .. }));
    }

    #[test]
    fn cross_kind_and_unknown_are_errors() {
        let t = load_taxonomy("a|indication|A||\nb|active_principle|B||\n").unwrap();
        assert!(matches!(t.is_descendant_or_self("a", "b"), Err(TaxonomyError::CrossKind { .. })));
        assert_eq!(t.is_descendant_or_self("a", "nope"), Err(TaxonomyError::UnknownId("nope".into())));
        assert!(t.descendants_or_self("nope").is_err());
    }

    #[test]
    fn leaf_descendants_are_singleton() {
        let t = load_taxonomy(CHAIN).unwrap();
        assert_eq!(t.descendants_or_self("ibuprofen").unwrap(), BTreeSet::from(["ibuprofen".to_string()]));
    }

    #[test]
    fn autocomplete_ranking() {
        let doc = "\
x|indication|pain||
y|indication|acute pain||x
z|indication|painful neuropathy||x
w|indication|back pain||x
";
        let t = load_taxonomy(doc).unwrap();
        let ids: Vec<_> =
            t.autocomplete("PAIN", Some(NodeKind::Indication), Lang::En, 10).into_iter().map(|s| s.id).collect();
        // position 0 (pain, painful neuropathy), then position 5 (back pain), 6 (acute pain)
        assert_eq!(ids, ["x", "z", "w", "y"]);
        let limited = t.autocomplete("pain", Some(NodeKind::Indication), Lang::En, 1);
        assert_eq!(limited.len(), 1);
        let empty = t.autocomplete("", Some(NodeKind::Indication), Lang::En, 3);
        let labels: Vec<_> = empty.into_iter().map(|s| s.label).collect();
        assert_eq!(labels, ["acute pain", "back pain", "pain"]);
        assert!(t.autocomplete("ZZZZ", None, Lang::En, 5).is_empty());
    }

    #[test]
    fn french_labels_fall_back_to_english() {
        let t = load_taxonomy(CHAIN).unwrap();
        assert_eq!(t.label("analgesic", Lang::Fr), Some("analgesic"));
        assert_eq!(t.label("ibuprofen", Lang::Fr), Some("ibuprofène"));
        let hits = t.autocomplete("ibuprofè", Some(NodeKind::ActivePrinciple), Lang::Fr, 5);
        assert_eq!(hits[0].id, "ibuprofen");
    }

    #[test]
    fn resolve_by_id_or_label() {
        let t = load_taxonomy(CHAIN).unwrap();
        assert_eq!(t.resolve("nsai", NodeKind::ActivePrinciple), Some("nsai"));
        assert_eq!(t.resolve(" Ibuprofen ", NodeKind::ActivePrinciple), Some("ibuprofen"));
        assert_eq!(t.resolve("AINS", NodeKind::ActivePrinciple), Some("nsai"));
        assert_eq!(t.resolve("ibuprofen", NodeKind::Indication), None);
    }

    #[test]
    fn text_round_trip() {
        let t = load_taxonomy(CHAIN).unwrap();
        let again = load_taxonomy(&t.to_text()).unwrap();
        assert_eq!(t, again);
    }
}
