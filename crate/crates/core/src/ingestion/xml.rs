//! Registry results XML (ClinicalTrials.gov legacy results subset).

use std::collections::BTreeMap;

use chrono::NaiveDate;
use roxmltree::{Document, Node};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum XmlError {
    #[error("malformed XML: {0}")]
    Parse(String),
    #[error("schema violation at `{path}`: {reason}")]
    Schema { path: String, reason: String },
    #[error("negative count at `{path}`: {value}")]
    NegativeCount { path: String, value: i64 },
    #[error("event references undeclared group `{0}`")]
    UndeclaredGroup(String),
}

/// Group as declared in `reported_events > group_list`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegistryGroup {
    pub id: String,
    pub title: String,
    pub description: String,
    /// Largest `subjects_at_risk` reported for the group, if any.
    pub subjects_at_risk: Option<u32>,
}

impl RegistryGroup {
    /// Free text handed to regimen extraction and curation.
    pub fn free_text(&self) -> String {
        if self.description.is_empty() {
            self.title.clone()
        } else {
            format!("{}: {}", self.title, self.description)
        }
    }
}

/// One `counts` element of an event row.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawEvent {
    pub group_id: String,
    pub soc: String,
    pub label: String,
    pub serious: bool,
    pub event_count: u64,
}

/// Everything extracted from one registry document, before curation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegistryRecord {
    pub trial_id: String,
    pub title: String,
    pub completion_date: Option<NaiveDate>,
    /// Raw design labels (`study_type`, `allocation`, `phase`), resolved
    /// against trial-type labels when the dataset is built.
    pub design_labels: Vec<String>,
    pub groups: Vec<RegistryGroup>,
    pub events: Vec<RawEvent>,
}

fn child<'a, 'i>(node: Node<'a, 'i>, name: &str) -> Option<Node<'a, 'i>> {
    node.children().find(|c| c.has_tag_name(name))
}

fn children<'a, 'i: 'a>(node: Node<'a, 'i>, name: &'a str) -> impl Iterator<Item = Node<'a, 'i>> + 'a {
    node.children().filter(move |c| c.has_tag_name(name))
}

fn text_of(node: Node<'_, '_>) -> String {
    normalize_space(&node.descendants().filter(|n| n.is_text()).filter_map(|n| n.text()).collect::<String>())
}

pub(crate) fn normalize_space(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn required<'a, 'i>(node: Node<'a, 'i>, name: &str, path: &str) -> Result<Node<'a, 'i>, XmlError> {
    child(node, name)
        .ok_or_else(|| XmlError::Schema { path: format!("{path}/{name}"), reason: "missing element".into() })
}

fn count_attr(node: Node<'_, '_>, attr: &str, path: &str) -> Result<Option<u64>, XmlError> {
    let Some(raw) = node.attribute(attr) else {
        return Ok(None);
    };
    let value: i64 = raw.trim().parse().map_err(|_| XmlError::Schema {
        path: format!("{path}/@{attr}"),
        reason: format!("not an integer: `{raw}`"),
    })?;
    if value < 0 {
        return Err(XmlError::NegativeCount { path: format!("{path}/@{attr}"), value });
    }
    Ok(Some(value as u64))
}

/// Registry dates come as "March 2015", "March 15, 2015" or ISO forms.
pub fn parse_registry_date(text: &str) -> Option<NaiveDate> {
    let text = text.trim();
    NaiveDate::parse_from_str(text, "%Y-%m-%d")
        .or_else(|_| NaiveDate::parse_from_str(text, "%B %d, %Y"))
        .or_else(|_| NaiveDate::parse_from_str(&format!("1 {text}"), "%d %B %Y"))
        .or_else(|_| NaiveDate::parse_from_str(&format!("{text}-01"), "%Y-%m-%d"))
        .ok()
}

/// Parse one registry results document.
///
/// Event rows in categories titled `Total` are registry summary lines and
/// are skipped. Event counts use `@events`, falling back to
/// `@subjects_affected`.
pub fn parse_registry_xml(document: &str) -> Result<RegistryRecord, XmlError> {
    let doc = Document::parse(document).map_err(|e| XmlError::Parse(e.to_string()))?;
    let root = doc.root_element();
    if !root.has_tag_name("clinical_study") {
        return Err(XmlError::Schema {
            path: root.tag_name().name().to_string(),
            reason: "root element must be `clinical_study`".into(),
        });
    }
    let base = "clinical_study";
    let id_info = required(root, "id_info", base)?;
    let trial_id = text_of(required(id_info, "nct_id", "clinical_study/id_info")?);
    if trial_id.is_empty() {
        return Err(XmlError::Schema {
            path: "clinical_study/id_info/nct_id".into(),
            reason: "empty identifier".into(),
        });
    }
    let title = child(root, "official_title")
        .or_else(|| child(root, "brief_title"))
        .map(text_of)
        .ok_or_else(|| XmlError::Schema { path: format!("{base}/official_title"), reason: "missing element".into() })?;
    let completion_date = match child(root, "completion_date") {
        Some(node) => {
            let raw = text_of(node);
            Some(parse_registry_date(&raw).ok_or_else(|| XmlError::Schema {
                path: format!("{base}/completion_date"),
                reason: format!("unrecognised date `{raw}`"),
            })?)
        }
        None => None,
    };
    let mut design_labels = Vec::new();
    if let Some(node) = child(root, "study_type") {
        design_labels.push(text_of(node));
    }
    if let Some(node) = child(root, "study_design_info").and_then(|d| child(d, "allocation")) {
        design_labels.push(text_of(node));
    }
    if let Some(node) = child(root, "phase") {
        design_labels.extend(text_of(node).split('/').map(|s| s.trim().to_string()));
    }
    design_labels.retain(|l| !l.is_empty() && l != "N/A");

    let results = required(root, "clinical_results", base)?;
    let events_path = "clinical_study/clinical_results/reported_events";
    let reported = required(results, "reported_events", "clinical_study/clinical_results")?;

    let mut groups = Vec::new();
    let mut index = BTreeMap::new();
    if let Some(list) = child(reported, "group_list") {
        let path = format!("{events_path}/group_list/group");
        for node in children(list, "group") {
            let id = node.attribute("group_id").map(str::trim).unwrap_or("");
            if id.is_empty() {
                return Err(XmlError::Schema { path: format!("{path}/@group_id"), reason: "missing group id".into() });
            }
            if index.contains_key(id) {
                return Err(XmlError::Schema {
                    path: format!("{path}/@group_id"),
                    reason: format!("group `{id}` declared twice"),
                });
            }
            index.insert(id.to_string(), groups.len());
            groups.push(RegistryGroup {
                id: id.to_string(),
                title: text_of(required(node, "title", &path)?),
                description: child(node, "description").map(text_of).unwrap_or_default(),
                subjects_at_risk: None,
            });
        }
    }

    let mut events = Vec::new();
    for (section, serious) in [("serious_events", true), ("other_events", false)] {
        let Some(section_node) = child(reported, section) else {
            continue;
        };
        let Some(categories) = child(section_node, "category_list") else {
            continue;
        };
        let cat_path = format!("{events_path}/{section}/category_list/category");
        for category in children(categories, "category") {
            let soc = child(category, "title").map(text_of).unwrap_or_default();
            if soc.eq_ignore_ascii_case("total") {
                continue;
            }
            let Some(list) = child(category, "event_list") else {
                continue;
            };
            let ev_path = format!("{cat_path}/event_list/event");
            for event in children(list, "event") {
                let label = text_of(required(event, "sub_title", &ev_path)?);
                if label.is_empty() {
                    return Err(XmlError::Schema {
                        path: format!("{ev_path}/sub_title"),
                        reason: "empty event label".into(),
                    });
                }
                let counts_path = format!("{ev_path}/counts");
                for counts in children(event, "counts") {
                    let group_id = counts.attribute("group_id").map(str::trim).unwrap_or("");
                    let Some(&gi) = index.get(group_id) else {
                        return Err(XmlError::UndeclaredGroup(group_id.to_string()));
                    };
                    let events_attr = count_attr(counts, "events", &counts_path)?;
                    let affected = count_attr(counts, "subjects_affected", &counts_path)?;
                    let at_risk = count_attr(counts, "subjects_at_risk", &counts_path)?;
                    if let Some(n) = at_risk {
                        let n = u32::try_from(n).unwrap_or(u32::MAX);
                        let slot = &mut groups[gi].subjects_at_risk;
                        *slot = Some(slot.map_or(n, |m: u32| m.max(n)));
                    }
                    let event_count = events_attr.or(affected).ok_or_else(|| XmlError::Schema {
                        path: counts_path.clone(),
                        reason: "neither @events nor @subjects_affected present".into(),
                    })?;
                    events.push(RawEvent {
                        group_id: group_id.to_string(),
                        soc: soc.clone(),
                        label: label.clone(),
                        serious,
                        event_count,
                    });
                }
            }
        }
    }

    Ok(RegistryRecord { trial_id, title, completion_date, design_labels, groups, events })
}
