//! The search URL scheme and the documents served by the HTTP API.
//!
//! Group N of a query is described by `group_N_*` parameters:
//!
//! | parameter | value |
//! |---|---|
//! | `group_N_ap` | comma-separated active principles (labels or ids), optionally ending with `etc` |
//! | `group_N_indication` | comma-separated indications |
//! | `group_N_trialtype` | comma-separated trial types |
//! | `group_N_release`, `group_N_route` | per principle |
//! | `group_N_dose` | per principle, `10` or `5-10` |
//! | `group_N_unit` | per principle, required with a dose |
//! | `group_N_intakes` | per principle, `2` or `1-2` |
//!
//! Per-principle values align with `group_N_ap` by position; empty items
//! are allowed and a single value applies to every principle. Other
//! parameters: `exclude_trials`, `set` (`direct`, `mixed`, `absolute`),
//! `titration=1`, `lang` (`en`, `fr`) and `tab`.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::glyph::{
    glyph_canvas_px, render_flower_svg, render_overlay_svg, shared_reference_rate, table_color, GlyphError, GlyphSpec,
    Styles,
};
use crate::model::{Dataset, DoseRange, IntakeRange, PeriodKind, Release, Route};
use crate::normalization::{normalize, AdeProfile, NormError, Normalization, ResultSetKind};
use crate::query::{
    compute_exclusions, execute, APSpec, ExecuteOptions, GroupQuery, MatchSource, MatchedGroup, QueryError, QuerySpec,
    ResultSets,
};
use crate::taxonomy::{Lang, NodeKind, Taxonomy};

/// A rejected URL parameter.
#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize, Deserialize)]
#[error("{param}: {message}")]
pub struct ParamError {
    pub param: String,
    pub message: String,
}

fn param_error(param: impl Into<String>, message: impl Into<String>) -> ParamError {
    ParamError { param: param.into(), message: message.into() }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchParams {
    pub spec: QuerySpec,
    pub set: ResultSetKind,
    pub include_titration: bool,
    pub lang: Lang,
    pub tab: Option<u32>,
}

impl SearchParams {
    pub fn new(spec: QuerySpec) -> Self {
        SearchParams { spec, set: ResultSetKind::Direct, include_titration: false, lang: Lang::En, tab: None }
    }
}

const GROUP_FIELDS: [&str; 8] = ["ap", "indication", "trialtype", "release", "route", "dose", "unit", "intakes"];

fn list(value: &str) -> Vec<&str> {
    value.split(',').map(str::trim).filter(|s| !s.is_empty()).collect()
}

fn parse_range(text: &str) -> Option<(f64, f64)> {
    let num = |s: &str| s.trim().parse::<f64>().ok().filter(|v| v.is_finite() && *v >= 0.0);
    let (lo, hi) = match text.split_once('-') {
        Some((a, b)) => (num(a)?, num(b)?),
        None => {
            let v = num(text)?;
            (v, v)
        }
    };
    (lo <= hi).then_some((lo, hi))
}

fn fmt_range(min: f64, max: f64) -> String {
    if min == max {
        format!("{min}")
    } else {
        format!("{min}-{max}")
    }
}

fn resolve_ids(t: &Taxonomy, value: &str, kind: NodeKind, param: &str) -> Result<BTreeSet<String>, ParamError> {
    list(value)
        .into_iter()
        .map(|item| {
            t.resolve(item, kind)
                .map(String::from)
                .ok_or_else(|| param_error(param, format!("unknown {kind} `{item}`")))
        })
        .collect()
}

/// Positional per-principle values: `n_aps` entries, `None` for empty items.
fn per_principle<'a>(value: Option<&'a str>, n_aps: usize, param: &str) -> Result<Vec<Option<&'a str>>, ParamError> {
    let Some(value) = value else {
        return Ok(vec![None; n_aps]);
    };
    let items: Vec<Option<&str>> = value.split(',').map(str::trim).map(|s| (!s.is_empty()).then_some(s)).collect();
    if items.iter().all(Option::is_none) {
        return Ok(vec![None; n_aps]);
    }
    if n_aps == 0 {
        return Err(param_error(param, "per-principle value given without active principle"));
    }
    if items.len() == 1 {
        return Ok(vec![items[0]; n_aps]);
    }
    if items.len() > n_aps {
        return Err(param_error(param, format!("{} values for {} active principles", items.len(), n_aps)));
    }
    let mut out = items;
    out.resize(n_aps, None);
    Ok(out)
}

fn parse_group(n: usize, fields: &BTreeMap<&str, String>, t: &Taxonomy) -> Result<GroupQuery, ParamError> {
    let name = |f: &str| format!("group_{n}_{f}");
    let get = |f: &str| fields.get(f).map(String::as_str);
    let mut gq = GroupQuery::default();
    if let Some(v) = get("trialtype") {
        gq.trial_type_ids = resolve_ids(t, v, NodeKind::TrialType, &name("trialtype"))?;
    }
    if let Some(v) = get("indication") {
        gq.indication_ids = resolve_ids(t, v, NodeKind::Indication, &name("indication"))?;
    }
    if let Some(v) = get("ap") {
        let mut items = list(v);
        if items.last().is_some_and(|s| s.eq_ignore_ascii_case("etc")) {
            items.pop();
            gq.open_list = true;
            if items.is_empty() {
                return Err(param_error(name("ap"), "`etc` needs at least one active principle"));
            }
        }
        for item in items {
            let id = t
                .resolve(item, NodeKind::ActivePrinciple)
                .ok_or_else(|| param_error(name("ap"), format!("unknown active principle `{item}`")))?;
            gq.ap_specs.push(APSpec::new(id));
        }
    }
    let n_aps = gq.ap_specs.len();
    let release = per_principle(get("release"), n_aps, &name("release"))?;
    let route = per_principle(get("route"), n_aps, &name("route"))?;
    let dose = per_principle(get("dose"), n_aps, &name("dose"))?;
    let unit = per_principle(get("unit"), n_aps, &name("unit"))?;
    let intakes = per_principle(get("intakes"), n_aps, &name("intakes"))?;
    for (i, spec) in gq.ap_specs.iter_mut().enumerate() {
        if let Some(r) = release[i] {
            spec.release = Some(r.parse::<Release>().map_err(|e| param_error(name("release"), e))?);
        }
        if let Some(r) = route[i] {
            spec.route = Some(r.parse::<Route>().map_err(|e| param_error(name("route"), e))?);
        }
        if let Some(d) = dose[i] {
            let (lo, hi) = parse_range(d).ok_or_else(|| param_error(name("dose"), format!("malformed range `{d}`")))?;
            let u = unit[i].ok_or_else(|| param_error(name("dose"), "dose given without group unit"))?;
            spec.dose_range = Some(DoseRange::new(lo, hi, u));
        }
        if let Some(d) = intakes[i] {
            let (lo, hi) =
                parse_range(d).ok_or_else(|| param_error(name("intakes"), format!("malformed range `{d}`")))?;
            spec.intakes_range = Some(IntakeRange::new(lo, hi));
        }
    }
    Ok(gq)
}

/// Parse a search query string (with or without the leading `?`).
pub fn parse_search_params(query: &str, t: &Taxonomy) -> Result<SearchParams, ParamError> {
    let query = query.strip_prefix('?').unwrap_or(query);
    let mut groups: BTreeMap<usize, BTreeMap<&'static str, String>> = BTreeMap::new();
    let mut params = SearchParams::new(QuerySpec::default());
    for (key, value) in url::form_urlencoded::parse(query.as_bytes()) {
        let value = value.into_owned();
        if let Some(rest) = key.strip_prefix("group_") {
            let (n, field) = rest
                .split_once('_')
                .and_then(|(n, f)| Some((n.parse::<usize>().ok().filter(|n| *n >= 1)?, f)))
                .ok_or_else(|| param_error(key.as_ref(), "expected group_<N>_<field>"))?;
            let field = GROUP_FIELDS
                .iter()
                .find(|f| **f == field)
                .ok_or_else(|| param_error(key.as_ref(), format!("unknown group field `{field}`")))?;
            groups.entry(n).or_default().insert(field, value);
            continue;
        }
        match key.as_ref() {
            "exclude_trials" => params.spec.excluded_trial_ids.extend(list(&value).into_iter().map(String::from)),
            "set" => params.set = value.parse().map_err(|e: String| param_error("set", e))?,
            "titration" => {
                params.include_titration = match value.trim() {
                    "1" | "true" | "yes" => true,
                    "0" | "false" | "no" | "" => false,
                    other => return Err(param_error("titration", format!("expected 0 or 1, got `{other}`"))),
                }
            }
            "lang" => params.lang = value.parse().map_err(|e: String| param_error("lang", e))?,
            "tab" => {
                params.tab = Some(
                    value
                        .trim()
                        .parse()
                        .map_err(|_| param_error("tab", format!("expected a tab number, got `{value}`")))?,
                )
            }
            _ => {}
        }
    }
    for (n, fields) in &groups {
        let gq = parse_group(*n, fields, t)?;
        if !gq.is_empty() {
            params.spec.groups.push(gq);
        }
    }
    if params.spec.groups.is_empty() {
        return Err(param_error("group_1", "at least one group with a criterion is required"));
    }
    params.spec = compute_exclusions(&params.spec, t);
    Ok(params)
}

/// Query string of a parameter set, using taxonomy ids. Computed exclusions
/// are not written; parsing recomputes them.
pub fn serialize_search_params(p: &SearchParams) -> String {
    let mut s = url::form_urlencoded::Serializer::new(String::new());
    for (i, g) in p.spec.groups.iter().enumerate() {
        let n = i + 1;
        let join = |ids: &BTreeSet<String>| ids.iter().cloned().collect::<Vec<_>>().join(",");
        if !g.ap_specs.is_empty() {
            let mut aps: Vec<&str> = g.ap_specs.iter().map(|a| a.ap_id.as_str()).collect();
            if g.open_list {
                aps.push("etc");
            }
            s.append_pair(&format!("group_{n}_ap"), &aps.join(","));
        }
        if !g.indication_ids.is_empty() {
            s.append_pair(&format!("group_{n}_indication"), &join(&g.indication_ids));
        }
        if !g.trial_type_ids.is_empty() {
            s.append_pair(&format!("group_{n}_trialtype"), &join(&g.trial_type_ids));
        }
        let mut positional = |field: &str, f: &dyn Fn(&APSpec) -> Option<String>| {
            let items: Vec<String> = g.ap_specs.iter().map(|a| f(a).unwrap_or_default()).collect();
            if items.iter().any(|x| !x.is_empty()) {
                s.append_pair(&format!("group_{n}_{field}"), &items.join(","));
            }
        };
        positional("release", &|a| a.release.map(|r| r.to_string()));
        positional("route", &|a| a.route.map(|r| r.to_string()));
        positional("dose", &|a| a.dose_range.as_ref().map(|d| fmt_range(d.min, d.max)));
        positional("unit", &|a| a.dose_range.as_ref().map(|d| d.unit.clone()));
        positional("intakes", &|a| a.intakes_range.as_ref().map(|d| fmt_range(d.min, d.max)));
    }
    if !p.spec.excluded_trial_ids.is_empty() {
        s.append_pair("exclude_trials", &p.spec.excluded_trial_ids.iter().cloned().collect::<Vec<_>>().join(","));
    }
    if p.set != ResultSetKind::Direct {
        s.append_pair("set", p.set.param());
    }
    if p.include_titration {
        s.append_pair("titration", "1");
    }
    if p.lang != Lang::En {
        s.append_pair("lang", p.lang.as_str());
    }
    if let Some(tab) = p.tab {
        s.append_pair("tab", &tab.to_string());
    }
    s.finish()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Labeled {
    pub id: String,
    pub label: String,
}

fn labeled(t: &Taxonomy, id: &str, lang: Lang) -> Labeled {
    Labeled { id: id.to_string(), label: t.label(id, lang).unwrap_or(id).to_string() }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SetCount {
    pub kind: ResultSetKind,
    pub trials: usize,
    pub patients: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupResult {
    pub index: usize,
    pub caption: String,
    pub profile: AdeProfile,
    pub glyph_svg: String,
    pub correction_summary: String,
    /// Patients of the matched groups, before weighting.
    pub n_patients: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventRow {
    pub category_id: String,
    pub category_label: String,
    pub term: String,
    /// One rate per query group.
    pub rates: Vec<f64>,
    /// `table_color` of each rate.
    pub colors: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub ids: Vec<String>,
    pub label: String,
    pub n_trials: usize,
    pub n_groups: usize,
    pub n_patients: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialListEntry {
    pub trial_id: String,
    pub title: String,
    /// Overall ADE rate of the trial's groups for each query group.
    pub rates: Vec<Option<f64>>,
    pub included: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tabs {
    pub all_events: Vec<EventRow>,
    pub serious_events: Vec<EventRow>,
    pub indication_summary: Vec<SummaryRow>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub treatment_summary: Option<Vec<SummaryRow>>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub comparable_treatments: Option<Vec<SummaryRow>>,
    pub trial_list: Vec<TrialListEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchResponse {
    pub result_set_kind: ResultSetKind,
    pub lang: Lang,
    pub tab: Option<u32>,
    /// Canonical query string of the request.
    pub query: String,
    pub empty: bool,
    pub sets: Vec<SetCount>,
    pub reference_rate: f64,
    pub canvas_px: u32,
    pub groups: Vec<GroupResult>,
    pub tabs: Tabs,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SearchError {
    #[error(transparent)]
    Param(#[from] ParamError),
    #[error(transparent)]
    Query(#[from] QueryError),
    #[error(transparent)]
    Normalization(#[from] NormError),
    #[error(transparent)]
    Glyph(#[from] GlyphError),
}

fn set_groups(results: &ResultSets, kind: ResultSetKind) -> Vec<MatchedGroup> {
    match kind {
        ResultSetKind::Direct => results.direct.iter().flat_map(|t| t.matched.iter().cloned()).collect(),
        ResultSetKind::DirectIndirect => {
            results.direct_indirect.iter().flat_map(|t| t.matched.iter().cloned()).collect()
        }
        ResultSetKind::Absolute => results.absolute.clone(),
    }
}

fn set_count(ds: &Dataset, results: &ResultSets, kind: ResultSetKind) -> SetCount {
    let groups = set_groups(results, kind);
    SetCount {
        kind,
        trials: groups.iter().map(|m| m.trial_id.as_str()).collect::<BTreeSet<_>>().len(),
        patients: crate::query::set_patients(ds, &groups),
    }
}

fn group_caption(gq: &GroupQuery, t: &Taxonomy, lang: Lang) -> String {
    let label = |id: &str| t.label(id, lang).unwrap_or(id).to_string();
    let mut parts: Vec<String> = gq
        .ap_specs
        .iter()
        .map(|a| {
            let mut s = label(&a.ap_id);
            if let Some(d) = &a.dose_range {
                s += &format!(" {} {}", fmt_range(d.min, d.max), d.unit);
            }
            if let Some(r) = a.route {
                s += &format!(" {r}");
            }
            if let Some(r) = a.release {
                s += &format!(" {r}");
            }
            s
        })
        .collect();
    if gq.open_list {
        parts.push("etc".into());
    }
    let mut caption = parts.join(" + ");
    let context: Vec<String> = gq.indication_ids.iter().chain(&gq.trial_type_ids).map(|id| label(id)).collect();
    if !context.is_empty() {
        if !caption.is_empty() {
            caption += " | ";
        }
        caption += &context.join(", ");
    }
    caption
}

fn correction_summary(norm: &Normalization, results: &ResultSets, qi: usize, lang: Lang) -> String {
    let trials = |source: Option<MatchSource>| {
        norm.weights
            .iter()
            .filter(|w| w.query_index == qi && source.is_none_or(|s| w.source == s))
            .map(|w| w.trial_id.as_str())
            .collect::<BTreeSet<_>>()
            .len()
    };
    match (norm.kind, lang) {
        (ResultSetKind::Absolute, Lang::En) => {
            format!("Absolute values over {} trials: no correction applied.", trials(None))
        }
        (ResultSetKind::Absolute, Lang::Fr) => {
            format!("Valeurs absolues sur {} essais : aucune correction appliquée.", trials(None))
        }
        (ResultSetKind::Direct, Lang::En) => format!(
            "Direct comparison over {} trials: groups weighted by the smallest group of their trial.",
            trials(None)
        ),
        (ResultSetKind::Direct, Lang::Fr) => format!(
            "Comparaison directe sur {} essais : groupes pondérés par le plus petit groupe de leur essai.",
            trials(None)
        ),
        (ResultSetKind::DirectIndirect, lang) => {
            let dir = trials(Some(MatchSource::Direct));
            let ind = trials(Some(MatchSource::Indirect));
            let bridges = results.direct_indirect.iter().filter(|t| t.source == MatchSource::Indirect).count();
            let r = norm.mixing.as_ref().and_then(|m| m.r);
            let (k_dir, k_ind) = norm.mixing.as_ref().and_then(|m| m.k.get(qi).copied()).unwrap_or((1.0, 1.0));
            match lang {
                Lang::En => {
                    let mut s = format!("{dir} direct and {ind} indirect trials: direct groups weighted by trial");
                    if ind > 0 {
                        let _ =
                            write!(s, "; indirect counts corrected by the placebo rate averaged over {bridges} trials");
                    }
                    match r {
                        Some(r) => {
                            let _ = write!(s, "; mixed with r = {r:.3} (k_dir = {k_dir:.3}, k_ind = {k_ind:.3}).");
                        }
                        None => s.push('.'),
                    }
                    s
                }
                Lang::Fr => {
                    let mut s = format!("{dir} essais directs et {ind} indirects : groupes directs pondérés par essai");
                    if ind > 0 {
                        let _ =
                            write!(s, " ; effectifs indirects corrigés par le taux placebo moyen sur {bridges} essais");
                    }
                    match r {
                        Some(r) => {
                            let _ = write!(s, " ; mélange avec r = {r:.3} (k_dir = {k_dir:.3}, k_ind = {k_ind:.3}).");
                        }
                        None => s.push('.'),
                    }
                    s
                }
            }
        }
    }
}

fn event_rows(ds: &Dataset, profiles: &[AdeProfile], lang: Lang, serious: bool) -> Vec<EventRow> {
    let t = ds.taxonomy();
    let mut by_term: BTreeMap<&str, (Vec<String>, Vec<f64>)> = BTreeMap::new();
    for (qi, p) in profiles.iter().enumerate() {
        for tr in &p.terms {
            let rate = if serious { tr.serious_rate } else { tr.rate };
            let e =
                by_term.entry(tr.term.as_str()).or_insert_with(|| (tr.category_ids.clone(), vec![0.0; profiles.len()]));
            e.1[qi] = rate;
        }
    }
    let mut rows = Vec::new();
    for cat in t.ids_of_kind(NodeKind::AdeCategory) {
        let mut cat_rows: Vec<(f64, EventRow)> = by_term
            .iter()
            .filter(|(_, (cats, rates))| cats.iter().any(|c| c == cat) && rates.iter().any(|r| *r > 0.0))
            .map(|(term, (_, rates))| {
                let max = rates.iter().copied().fold(0.0, f64::max);
                (
                    max,
                    EventRow {
                        category_id: cat.to_string(),
                        category_label: t.label(cat, lang).unwrap_or(cat).to_string(),
                        term: term.to_string(),
                        rates: rates.clone(),
                        colors: rates.iter().map(|r| table_color(*r).unwrap_or_default()).collect(),
                    },
                )
            })
            .collect();
        cat_rows.sort_by(|a, b| b.0.total_cmp(&a.0).then_with(|| a.1.term.cmp(&b.1.term)));
        rows.extend(cat_rows.into_iter().map(|(_, r)| r));
    }
    rows
}

#[derive(Default)]
struct Tally {
    trials: BTreeSet<String>,
    groups: BTreeSet<(String, usize, String)>,
    patients: u64,
}

impl Tally {
    fn add(&mut self, trial: &str, pi: usize, gid: &str, n: u32) {
        self.trials.insert(trial.to_string());
        if self.groups.insert((trial.to_string(), pi, gid.to_string())) {
            self.patients += u64::from(n);
        }
    }
}

fn summary_rows(tallies: BTreeMap<Vec<String>, Tally>, t: &Taxonomy, lang: Lang) -> Vec<SummaryRow> {
    let mut rows: Vec<SummaryRow> = tallies
        .into_iter()
        .map(|(ids, tally)| SummaryRow {
            label: ids.iter().map(|id| t.label(id, lang).unwrap_or(id)).collect::<Vec<_>>().join(" + "),
            ids,
            n_trials: tally.trials.len(),
            n_groups: tally.groups.len(),
            n_patients: tally.patients,
        })
        .collect();
    rows.sort_by(|a, b| {
        b.n_trials.cmp(&a.n_trials).then(b.n_patients.cmp(&a.n_patients)).then_with(|| a.ids.cmp(&b.ids))
    });
    rows
}

fn treatment_key(g: &crate::model::PatientGroup) -> Vec<String> {
    g.treatments.iter().map(|t| t.active_principle_id.clone()).collect::<BTreeSet<_>>().into_iter().collect()
}

struct Pipeline {
    norm: Normalization,
    profiles: Vec<AdeProfile>,
    specs: Vec<GlyphSpec>,
    response: SearchResponse,
}

fn run(ds: &Dataset, params: &SearchParams, styles: &Styles) -> Result<Pipeline, SearchError> {
    let t = ds.taxonomy();
    let lang = params.lang;
    let options = ExecuteOptions { include_titration: params.include_titration };
    let results = execute(ds, &params.spec, options)?;
    let n = params.spec.groups.len();
    let norm = normalize(ds, n, &results, params.set)?;
    let category_ids: Vec<String> = t.ids_of_kind(NodeKind::AdeCategory).map(String::from).collect();
    let empty = norm.profiles.iter().all(Option::is_none);
    let profiles: Vec<AdeProfile> =
        norm.profiles.iter().map(|p| p.clone().unwrap_or_else(|| AdeProfile::zero(&category_ids))).collect();
    let reference_rate = shared_reference_rate(&profiles);
    let canvas_px = glyph_canvas_px(n);
    let specs: Vec<GlyphSpec> = params
        .spec
        .groups
        .iter()
        .zip(&profiles)
        .map(|(gq, p)| GlyphSpec { profile: p.clone(), reference_rate, canvas_px, caption: group_caption(gq, t, lang) })
        .collect();

    let selected = set_groups(&results, params.set);
    let mut groups = Vec::with_capacity(n);
    for (qi, spec) in specs.iter().enumerate() {
        let mine: Vec<MatchedGroup> = selected.iter().filter(|m| m.query_index == qi).cloned().collect();
        groups.push(GroupResult {
            index: qi,
            caption: spec.caption.clone(),
            profile: spec.profile.clone(),
            glyph_svg: render_flower_svg(spec, styles)?,
            correction_summary: correction_summary(&norm, &results, qi, lang),
            n_patients: crate::query::set_patients(ds, &mine),
        });
    }

    // Trial periods of the selected set, for the summary tabs.
    let mut indications: BTreeMap<Vec<String>, Tally> = BTreeMap::new();
    let mut treatments: BTreeMap<Vec<String>, Tally> = BTreeMap::new();
    let mut comparable: BTreeMap<Vec<String>, Tally> = BTreeMap::new();
    let matched_keys: BTreeSet<(&str, usize, &str)> =
        selected.iter().map(|m| (m.trial_id.as_str(), m.period_index, m.group_id.as_str())).collect();
    let periods: BTreeSet<(&str, usize)> = selected.iter().map(|m| (m.trial_id.as_str(), m.period_index)).collect();
    for &(tid, pi) in &periods {
        let Some(trial) = ds.trial(tid) else { continue };
        for g in &trial.periods[pi].groups {
            if matched_keys.contains(&(tid, pi, g.id.as_str())) {
                for ind in &g.indication_ids {
                    indications.entry(vec![ind.clone()]).or_default().add(tid, pi, &g.id, g.n_patients);
                }
                treatments.entry(treatment_key(g)).or_default().add(tid, pi, &g.id, g.n_patients);
            } else {
                comparable.entry(treatment_key(g)).or_default().add(tid, pi, &g.id, g.n_patients);
            }
        }
    }
    let has_aps = params.spec.has_active_principles();

    // Trial list: every trial of the set, excluded ones included.
    let mut unrestricted = params.spec.clone();
    unrestricted.excluded_trial_ids.clear();
    let all = execute(ds, &unrestricted, options)?;
    let mut per_trial: BTreeMap<&str, Vec<(f64, f64)>> = BTreeMap::new();
    for w in &norm.weights {
        per_trial.entry(w.trial_id.as_str()).or_insert_with(|| vec![(0.0, 0.0); n]);
    }
    for (qi, slice) in norm.slices.iter().enumerate() {
        for g in slice {
            let e = per_trial.entry(g.trial_id.as_str()).or_insert_with(|| vec![(0.0, 0.0); n]);
            e[qi].0 += g.factor * g.counts.values().sum::<f64>();
            e[qi].1 += g.factor * g.n_patients;
        }
    }
    let mut trial_list = Vec::new();
    let mut listed = BTreeSet::new();
    for m in set_groups(&all, params.set) {
        if !listed.insert(m.trial_id.clone()) {
            continue;
        }
        let Some(trial) = ds.trial(&m.trial_id) else {
            continue;
        };
        let included = !params.spec.excluded_trial_ids.contains(&trial.id);
        let rates = if included {
            per_trial
                .get(trial.id.as_str())
                .map(|v| v.iter().map(|&(e, p)| (p > 0.0).then(|| (e / p).max(0.0))).collect())
                .unwrap_or_else(|| vec![None; n])
        } else {
            let mut acc = vec![(0.0, 0.0); n];
            for mg in set_groups(&all, params.set).iter().filter(|x| x.trial_id == trial.id) {
                if let Some(g) = trial.group(mg.period_index, &mg.group_id) {
                    let events: u64 =
                        ds.group_observations(&trial.id, mg.period_index, &g.id).iter().map(|o| o.event_count).sum();
                    acc[mg.query_index].0 += events as f64;
                    acc[mg.query_index].1 += f64::from(g.n_patients);
                }
            }
            acc.iter().map(|&(e, p)| (p > 0.0).then(|| e / p)).collect()
        };
        trial_list.push(TrialListEntry { trial_id: trial.id.clone(), title: trial.title.clone(), rates, included });
    }

    let tabs = Tabs {
        all_events: event_rows(ds, &profiles, lang, false),
        serious_events: event_rows(ds, &profiles, lang, true),
        indication_summary: summary_rows(indications, t, lang),
        treatment_summary: (!has_aps).then(|| summary_rows(treatments, t, lang)),
        comparable_treatments: has_aps.then(|| summary_rows(comparable, t, lang)),
        trial_list,
    };
    let response = SearchResponse {
        result_set_kind: params.set,
        lang,
        tab: params.tab,
        query: serialize_search_params(params),
        empty,
        sets: ResultSetKind::ALL.iter().map(|k| set_count(ds, &results, *k)).collect(),
        reference_rate,
        canvas_px,
        groups,
        tabs,
    };
    Ok(Pipeline { norm, profiles, specs, response })
}

/// Execute, normalize and render a search.
pub fn search(ds: &Dataset, params: &SearchParams, styles: &Styles) -> Result<SearchResponse, SearchError> {
    Ok(run(ds, params, styles)?.response)
}

/// Glyph of query group `target` with the outline of group `selected`.
pub fn overlay_svg(
    ds: &Dataset,
    params: &SearchParams,
    selected: usize,
    target: usize,
    styles: &Styles,
) -> Result<String, SearchError> {
    let p = run(ds, params, styles)?;
    let get = |i: usize, name: &str| {
        p.specs
            .get(i)
            .ok_or_else(|| param_error(name, format!("no query group {i} (0-based, {} groups)", p.specs.len())))
    };
    Ok(render_overlay_svg(get(selected, "selected")?, get(target, "target")?, styles)?)
}

/// Every weight and corrected count of a search, as CSV.
pub fn explain_csv(ds: &Dataset, params: &SearchParams) -> Result<String, SearchError> {
    let p = run(ds, params, &Styles::builtin())?;
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut row = |fields: [String; 15]| w.write_record(&fields).expect("in-memory CSV");
    row([
        "record",
        "query_index",
        "trial_id",
        "period_index",
        "group_id",
        "source",
        "n_patients",
        "w",
        "k_dir",
        "k_ind",
        "factor",
        "term",
        "serious",
        "raw",
        "corrected",
    ]
    .map(String::from));
    for g in &p.norm.weights {
        row([
            "weight".into(),
            g.query_index.to_string(),
            g.trial_id.clone(),
            g.period_index.to_string(),
            g.group_id.clone(),
            format!("{:?}", g.source).to_lowercase(),
            g.n_patients.to_string(),
            g.w.to_string(),
            g.k_dir.to_string(),
            g.k_ind.to_string(),
            g.factor().to_string(),
            String::new(),
            String::new(),
            String::new(),
            String::new(),
        ]);
    }
    for c in &p.norm.corrected {
        row([
            "correction".into(),
            c.query_index.to_string(),
            c.trial_id.clone(),
            c.period_index.to_string(),
            c.group_id.clone(),
            "indirect".into(),
            String::new(),
            String::new(),
            String::new(),
            String::new(),
            String::new(),
            c.term.clone(),
            c.serious.to_string(),
            c.raw.to_string(),
            c.corrected.to_string(),
        ]);
    }
    for (qi, prof) in p.profiles.iter().enumerate() {
        for c in &prof.categories {
            row([
                "category".into(),
                qi.to_string(),
                String::new(),
                String::new(),
                String::new(),
                String::new(),
                String::new(),
                String::new(),
                String::new(),
                String::new(),
                String::new(),
                c.category_id.clone(),
                String::new(),
                c.total_rate.to_string(),
                c.serious_rate.to_string(),
            ]);
        }
    }
    Ok(String::from_utf8(w.into_inner().expect("flush")).expect("utf-8"))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreatmentDetail {
    pub active_principle: Labeled,
    pub release: Release,
    pub route: Route,
    pub dose_range: Option<DoseRange>,
    pub intakes_per_day: Option<IntakeRange>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventDetail {
    pub term: String,
    pub soc: String,
    pub category_ids: Vec<String>,
    pub serious: bool,
    pub event_count: u64,
    pub rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupDetail {
    pub id: String,
    pub label: String,
    pub n_patients: u32,
    pub placebo: bool,
    pub indications: Vec<Labeled>,
    pub treatments: Vec<TreatmentDetail>,
    pub events: Vec<EventDetail>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeriodDetail {
    pub index: usize,
    pub kind: PeriodKind,
    pub groups: Vec<GroupDetail>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialDetail {
    pub id: String,
    pub title: String,
    pub completion_date: Option<chrono::NaiveDate>,
    pub trial_types: Vec<Labeled>,
    pub periods: Vec<PeriodDetail>,
    pub n_groups: usize,
    pub n_events: usize,
}

/// Groups, treatments and event tables of one trial.
pub fn trial_detail(ds: &Dataset, id: &str, lang: Lang) -> Option<TrialDetail> {
    let trial = ds.trial(id)?;
    let t = ds.taxonomy();
    let periods: Vec<PeriodDetail> = trial
        .periods
        .iter()
        .enumerate()
        .map(|(pi, period)| PeriodDetail {
            index: pi,
            kind: period.kind,
            groups: period
                .groups
                .iter()
                .map(|g| GroupDetail {
                    id: g.id.clone(),
                    label: g.label.clone(),
                    n_patients: g.n_patients,
                    placebo: g.is_placebo(t),
                    indications: g.indication_ids.iter().map(|i| labeled(t, i, lang)).collect(),
                    treatments: g
                        .treatments
                        .iter()
                        .map(|tr| TreatmentDetail {
                            active_principle: labeled(t, &tr.active_principle_id, lang),
                            release: tr.release,
                            route: tr.route,
                            dose_range: tr.dose_range.clone(),
                            intakes_per_day: tr.intakes_per_day.clone(),
                        })
                        .collect(),
                    events: ds
                        .group_observations(id, pi, &g.id)
                        .iter()
                        .map(|o| {
                            let term = ds.term(&o.term);
                            EventDetail {
                                term: o.term.clone(),
                                soc: term.map(|x| x.soc.clone()).unwrap_or_default(),
                                category_ids: term
                                    .map(|x| x.category_ids.iter().cloned().collect())
                                    .unwrap_or_default(),
                                serious: o.serious,
                                event_count: o.event_count,
                                rate: o.event_count as f64 / f64::from(g.n_patients),
                            }
                        })
                        .collect(),
                })
                .collect(),
        })
        .collect();
    Some(TrialDetail {
        id: trial.id.clone(),
        title: trial.title.clone(),
        completion_date: trial.completion_date,
        trial_types: trial.trial_type_ids.iter().map(|i| labeled(t, i, lang)).collect(),
        n_groups: periods.iter().map(|p| p.groups.len()).sum(),
        n_events: periods.iter().flat_map(|p| &p.groups).map(|g| g.events.len()).sum(),
        periods,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::taxonomy::load_taxonomy;

    fn tax() -> Taxonomy {
        load_taxonomy(
            "\
acute_pain|indication|acute pain|douleur aiguë|
opioid|active_principle|opioid|opioïde|
morphine|active_principle|morphine||opioid
tapentadol|active_principle|tapentadol||opioid
acetaminophen|active_principle|acetaminophen|paracétamol|
",
        )
        .unwrap()
    }

    #[test]
    fn positional_fields_and_broadcast() {
        let p = parse_search_params(
            "group_1_ap=morphine,acetaminophen&group_1_dose=10,500-1000&group_1_unit=mg&group_1_route=oral",
            &tax(),
        )
        .unwrap();
        let specs = &p.spec.groups[0].ap_specs;
        assert_eq!(specs[0].dose_range, Some(DoseRange::new(10.0, 10.0, "mg")));
        assert_eq!(specs[1].dose_range, Some(DoseRange::new(500.0, 1000.0, "mg")));
        assert!(specs.iter().all(|s| s.route == Some(Route::Oral)));

        let p = parse_search_params("group_1_ap=morphine,acetaminophen&group_1_route=,oral", &tax()).unwrap();
        assert_eq!(p.spec.groups[0].ap_specs[0].route, None);
        assert_eq!(p.spec.groups[0].ap_specs[1].route, Some(Route::Oral));
    }

    #[test]
    fn errors_name_the_parameter() {
        let err = |q: &str| parse_search_params(q, &tax()).unwrap_err().param;
        assert_eq!(err("group_1_ap=notadrug"), "group_1_ap");
        assert_eq!(err(""), "group_1");
        assert_eq!(err("group_1_ap=morphine&group_1_dose=10"), "group_1_dose");
        assert_eq!(err("group_1_ap=morphine&group_1_dose=10-5&group_1_unit=mg"), "group_1_dose");
        assert_eq!(err("group_1_ap=morphine&group_1_route=oral,oral"), "group_1_route");
        assert_eq!(err("group_1_ap=morphine&group_1_route=sideways"), "group_1_route");
        assert_eq!(err("group_1_ap=morphine&lang=de"), "lang");
        assert_eq!(err("group_1_ap=morphine&set=best"), "set");
        assert_eq!(err("group_1_indication=acute pain&group_1_route=oral"), "group_1_route");
        assert_eq!(err("group_1_colour=red"), "group_1_colour");
    }

    #[test]
    fn etc_and_empty_groups() {
        let p = parse_search_params("group_1_ap=morphine, etc&group_2_ap=&group_3_indication=acute%20pain", &tax())
            .unwrap();
        assert_eq!(p.spec.groups.len(), 2);
        assert!(p.spec.groups[0].open_list);
        assert_eq!(p.spec.groups[1].indication_ids, BTreeSet::from(["acute_pain".to_string()]));
    }

    #[test]
    fn serialization_round_trip() {
        let q = "group_1_ap=tapentadol&group_1_route=oral&group_1_dose=50-100&group_1_unit=mg&group_2_ap=opioid,etc&group_2_indication=acute%20pain&exclude_trials=NCT2,NCT1&set=mixed&titration=1&lang=fr&tab=2";
        let p = parse_search_params(q, &tax()).unwrap();
        assert_eq!(p.spec.groups[1].excluded_ap_ids, BTreeSet::from(["tapentadol".to_string()]));
        let again = parse_search_params(&serialize_search_params(&p), &tax()).unwrap();
        assert_eq!(again, p);
    }
}
