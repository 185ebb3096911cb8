//! Acceptance gate: one PASS/FAIL line per criterion, nonzero exit on any
//! failure.

use std::collections::BTreeMap;
use std::process::ExitCode;
use std::sync::Arc;
use std::time::{Duration, Instant};

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;
use tower::ServiceExt;

use ade_acceptance::corpus::{self, Manifest, REGIMEN_CASES};
use ade_acceptance::{invariants, Fixture};
use ade_core::glyph::{render_flower_svg, GlyphSpec, Slot, Styles};
use ade_core::ingestion::{ingest_files, read_dataset};
use ade_core::normalization::{
    mix_weights, per_trial_weights, placebo_correct, AdeProfile, CategoryRate, PlaceboTrial,
};
use ade_server::{router, AppState};

type Outcome = Result<String, String>;

fn report(name: &str, outcome: Outcome) -> bool {
    match outcome {
        Ok(detail) => {
            println!("PASS {name}: {detail}");
            true
        }
        Err(reason) => {
            println!("FAIL {name}: {reason}");
            false
        }
    }
}

fn ensure(cond: bool, reason: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(reason())
    }
}

fn weights_golden() -> Outcome {
    let start = Instant::now();
    let t1 = per_trial_weights(&[100, 100]).map_err(|e| e.to_string())?;
    let t2 = per_trial_weights(&[100, 200]).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    let got = [t1, t2].concat();
    ensure(got == [1.0, 1.0, 1.0, 0.5], || format!("weights {got:?}"))?;
    ensure(elapsed < Duration::from_millis(1), || format!("took {elapsed:?}"))?;
    Ok(format!("(1, 1, 1, 0.5) in {elapsed:?}"))
}

fn placebo_golden() -> Outcome {
    let trials = [
        PlaceboTrial { placebo_events: 10.0, placebo_patients: 100.0, arms: vec![(20.0, 100.0)] },
        PlaceboTrial { placebo_events: 30.0, placebo_patients: 100.0, arms: vec![(30.0, 100.0)] },
    ];
    let c = placebo_correct(&trials).map_err(|e| e.to_string())?;
    ensure(c.corrected == [vec![30.0], vec![20.0]], || format!("corrected {:?}", c.corrected))?;
    ensure(c.global_rate == 0.2, || format!("global rate {}", c.global_rate))?;
    Ok("corrected 30 and 20, placebo rate 0.20".into())
}

fn mixing_golden() -> Outcome {
    let sizes = [(100.0, 100.0), (100.0, 200.0)];
    let m = mix_weights(&sizes);
    let r = m.r.ok_or("no ratio")?;
    ensure((r - 1.5).abs() <= 1e-12, || format!("r = {r}"))?;
    ensure((m.k[0].0 - 2.0 / 3.0).abs() <= 1e-9, || format!("k_dir(D1) = {}", m.k[0].0))?;
    ensure((m.k[1].1 - 0.75).abs() <= 1e-9, || format!("k_ind(D2) = {}", m.k[1].1))?;
    for (&(d, i), &(kd, ki)) in sizes.iter().zip(&m.k) {
        let balance = ki * i / (kd * d);
        ensure((balance - r).abs() <= 1e-9 * r, || format!("balance {balance} != r {r}"))?;
        ensure(kd.max(ki) == 1.0, || format!("max(k) = {}", kd.max(ki)))?;
    }
    Ok(format!("r = {r}, k = {:?}", m.k))
}

const N_FIXTURES: u64 = 1000;

fn invariant_suite() -> Outcome {
    type Inv = fn(&Fixture) -> invariants::Check;
    let checks: [(&str, Inv); 6] = [
        ("effective-size equality", invariants::effective_size_equality),
        ("scale invariance", invariants::scale_invariance),
        ("category-split conservation", invariants::category_split_conservation),
        ("result-set monotonicity", invariants::result_set_monotonicity),
        ("exclusion soundness", invariants::exclusion_soundness),
        ("taxonomy oracle equivalence", invariants::taxonomy_oracle_equivalence),
    ];
    let start = Instant::now();
    let mut failures: BTreeMap<&str, (usize, String)> = BTreeMap::new();
    let mut record = |name, result: invariants::Check, seed: u64| {
        if let Err(e) = result {
            let entry = failures.entry(name).or_insert((0, format!("seed {seed}: {e}")));
            entry.0 += 1;
        }
    };
    let mut max_trials = 0;
    for seed in 0..N_FIXTURES {
        let fx = Fixture::generate(seed);
        max_trials = max_trials.max(fx.dataset.trials().count());
        for (name, check) in checks {
            record(name, check(&fx), seed);
        }
        record("placebo no-op", invariants::placebo_noop(seed), seed);
    }
    let elapsed = start.elapsed();
    ensure(max_trials <= ade_acceptance::fixture::MAX_TRIALS, || format!("fixture with {max_trials} trials"))?;
    if !failures.is_empty() {
        let lines: Vec<String> =
            failures.iter().map(|(n, (c, first))| format!("{n}: {c} failures, first {first}")).collect();
        return Err(lines.join("; "));
    }
    ensure(elapsed < Duration::from_secs(60), || format!("took {elapsed:?}"))?;
    Ok(format!("7 invariants over {N_FIXTURES} fixtures (at most {max_trials} trials) in {elapsed:.1?}"))
}

fn aggregation_oracle() -> Outcome {
    let start = Instant::now();
    for seed in 0..N_FIXTURES {
        invariants::aggregation_oracle(&Fixture::generate(seed), 1e-9).map_err(|e| format!("seed {seed}: {e}"))?;
    }
    Ok(format!("{N_FIXTURES} fixtures equal to 1e-9 relative in {:.1?}", start.elapsed()))
}

type Point = (f64, f64);

/// Absolute coordinates of a path made of M, L, Q, C and Z commands.
fn path_points(d: &str) -> Result<Vec<(char, Vec<Point>)>, String> {
    let mut out: Vec<(char, Vec<Point>)> = Vec::new();
    for token in d.split_whitespace() {
        let mut rest = token;
        if let Some(c) = rest.chars().next().filter(char::is_ascii_alphabetic) {
            out.push((c, Vec::new()));
            rest = &rest[1..];
        }
        if rest.is_empty() {
            continue;
        }
        let (x, y) = rest.split_once(',').ok_or_else(|| format!("bad point `{rest}`"))?;
        let p = (x.parse().map_err(|_| format!("bad x `{x}`"))?, y.parse().map_err(|_| format!("bad y `{y}`"))?);
        out.last_mut().ok_or("point before command")?.1.push(p);
    }
    Ok(out)
}

/// Flatten the path and take its shoelace area.
fn shoelace(d: &str) -> Result<f64, String> {
    const STEPS: usize = 256;
    let mut poly: Vec<(f64, f64)> = Vec::new();
    for (cmd, pts) in path_points(d)? {
        let from = poly.last().copied().unwrap_or((0.0, 0.0));
        match (cmd, pts.as_slice()) {
            ('M', [p]) | ('L', [p]) => poly.push(*p),
            ('Q', [c, p]) => poly.extend((1..=STEPS).map(|i| {
                let t = i as f64 / STEPS as f64;
                let u = 1.0 - t;
                (u * u * from.0 + 2.0 * u * t * c.0 + t * t * p.0, u * u * from.1 + 2.0 * u * t * c.1 + t * t * p.1)
            })),
            ('C', [c1, c2, p]) => poly.extend((1..=STEPS).map(|i| {
                let t = i as f64 / STEPS as f64;
                let u = 1.0 - t;
                let b = [u * u * u, 3.0 * u * u * t, 3.0 * u * t * t, t * t * t];
                (
                    b[0] * from.0 + b[1] * c1.0 + b[2] * c2.0 + b[3] * p.0,
                    b[0] * from.1 + b[1] * c1.1 + b[2] * c2.1 + b[3] * p.1,
                )
            })),
            ('Z', []) => {}
            (c, p) => return Err(format!("unexpected `{c}` with {} points", p.len())),
        }
    }
    let n = poly.len();
    let twice: f64 = (0..n).map(|i| poly[i].0 * poly[(i + 1) % n].1 - poly[(i + 1) % n].0 * poly[i].1).sum();
    Ok(twice.abs() / 2.0)
}

/// Largest distance from the glyph center to a path vertex.
fn reach(d: &str, center: (f64, f64)) -> Result<f64, String> {
    let pts = path_points(d)?;
    Ok(pts.iter().filter_map(|(_, p)| p.last()).map(|p| (p.0 - center.0).hypot(p.1 - center.1)).fold(0.0, f64::max))
}

fn random_profile(rng: &mut ChaCha8Rng, styles: &Styles) -> AdeProfile {
    let categories = styles
        .categories()
        .iter()
        .map(|st| {
            let total = if rng.random_bool(0.1) { 0.0 } else { 10f64.powf(rng.random_range(-3.0..0.3)) };
            let serious = if rng.random_bool(0.3) { 0.0 } else { total * rng.random_range(0.01..1.0) };
            CategoryRate { category_id: st.category_id.clone(), total_rate: total, serious_rate: serious }
        })
        .collect();
    let mut p = AdeProfile::zero(&[]);
    p.categories = categories;
    p
}

#[derive(Default)]
struct Shape {
    area: f64,
    reach: f64,
    serious_reach: Option<f64>,
}

fn glyph_shapes(svg: &str, canvas: f64) -> Result<BTreeMap<String, Shape>, String> {
    let doc = roxmltree::Document::parse(svg).map_err(|e| e.to_string())?;
    let center = (canvas / 2.0, canvas / 2.0);
    let mut shapes: BTreeMap<String, Shape> = BTreeMap::new();
    for node in doc.descendants().filter(|n| n.is_element()) {
        let (Some(class), Some(cat)) = (node.attribute("class"), node.attribute("data-category")) else { continue };
        let shape = shapes.entry(cat.to_string()).or_default();
        let num = |a: &str| -> Result<f64, String> {
            node.attribute(a).ok_or(format!("missing {a}"))?.parse().map_err(|_| format!("bad {a}"))
        };
        match class {
            "petal" => {
                let d = node.attribute("d").ok_or("petal without d")?;
                shape.area = shoelace(d)?;
                shape.reach = reach(d, center)?;
            }
            "petal serious" => {
                shape.serious_reach = Some(reach(node.attribute("d").ok_or("petal without d")?, center)?)
            }
            "center" => {
                let r = num("r")?;
                shape.area = std::f64::consts::PI * r * r;
                shape.reach = r;
            }
            "center serious" => shape.serious_reach = Some(num("r")?),
            _ => {}
        }
    }
    Ok(shapes)
}

fn glyph_geometry() -> Outcome {
    const CANVAS: u32 = 520;
    let styles = Styles::builtin();
    let mut worst_area = 0.0f64;
    let mut worst_scale = 0.0f64;
    let mut n_centers = 0;
    for seed in 0..100u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let profile = random_profile(&mut rng, &styles);
        let reference = profile.max_rate().max(1e-3);
        let spec = GlyphSpec {
            profile: profile.clone(),
            reference_rate: reference,
            canvas_px: CANVAS,
            caption: format!("profile {seed}"),
        };
        let svg = render_flower_svg(&spec, &styles).map_err(|e| format!("seed {seed}: {e}"))?;
        let again = render_flower_svg(&spec, &styles).map_err(|e| e.to_string())?;
        ensure(svg == again, || format!("seed {seed}: repeated render differs"))?;
        let shapes = glyph_shapes(&svg, f64::from(CANVAS))?;
        let filled: Vec<&CategoryRate> = profile.categories.iter().filter(|c| c.total_rate > 0.0).collect();
        let Some(top) = filled.iter().max_by(|a, b| a.total_rate.total_cmp(&b.total_rate)) else { continue };
        let top_area = shapes[&top.category_id].area;
        for c in &filled {
            let shape = shapes.get(&c.category_id).ok_or(format!("seed {seed}: {} not drawn", c.category_id))?;
            if matches!(styles.get(&c.category_id).map(|s| s.slot), Some(Slot::Center)) {
                n_centers += 1;
            }
            let expected = c.total_rate / top.total_rate;
            let err = (shape.area / top_area / expected - 1.0).abs();
            worst_area = worst_area.max(err);
            ensure(err <= 0.01, || format!("seed {seed} {}: area ratio off by {err:.4}", c.category_id))?;
            match (c.serious_rate > 0.0, shape.serious_reach) {
                (true, Some(inner)) => {
                    let expected = (c.serious_rate / c.total_rate).sqrt();
                    let err = (inner / shape.reach - expected).abs();
                    worst_scale = worst_scale.max(err);
                    ensure(err <= 1e-3, || format!("seed {seed} {}: serious scale off by {err:.2e}", c.category_id))?;
                }
                (false, None) => {}
                (s, _) => {
                    return Err(format!("seed {seed} {}: serious rate > 0 is {s} but drawn differently", c.category_id))
                }
            }
        }
    }
    ensure(n_centers > 0, || "no center category exercised".into())?;
    Ok(format!(
        "100 profiles: worst area ratio error {:.3}%, worst serious scale error {worst_scale:.1e}, byte-identical",
        worst_area * 100.0
    ))
}

fn ingestion() -> Outcome {
    let (ds, _) = ingest_files(&corpus::ingest_paths()).map_err(|e| e.to_string())?;
    let mut failures = Manifest::load().mismatches(&ds.summary());
    ensure(REGIMEN_CASES.len() == 30, || format!("{} regimen cases", REGIMEN_CASES.len()))?;
    failures.extend(corpus::regimen_mismatches(ds.taxonomy()));
    ensure(failures.is_empty(), || failures.join("; "))?;
    let s = ds.summary();
    Ok(format!("{} trials, {} groups, {} observations; 30/30 regimen cases", s.trials, s.groups, s.observations))
}

fn url_scheme() -> Outcome {
    let failures = corpus::deep_link_mismatches(&corpus::taxonomy());
    ensure(failures.is_empty(), || failures.join("; "))?;
    Ok(format!("{} deep links, opioid exclusions included", corpus::DEEP_LINKS.len()))
}

async fn call(app: &Router, uri: &str) -> Result<(StatusCode, String), String> {
    let response = app
        .clone()
        .oneshot(Request::get(uri).body(Body::empty()).map_err(|e| e.to_string())?)
        .await
        .map_err(|e| e.to_string())?;
    let status = response.status();
    let body = response.into_body().collect().await.map_err(|e| e.to_string())?.to_bytes();
    Ok((status, String::from_utf8_lossy(&body).into_owned()))
}

async fn call_json(app: &Router, uri: &str, expect: StatusCode) -> Result<Value, String> {
    let (status, body) = call(app, uri).await?;
    ensure(status == expect, || format!("{uri}: status {status}, expected {expect}"))?;
    serde_json::from_str(&body).map_err(|e| format!("{uri}: {e}"))
}

async fn service_contract() -> Outcome {
    let ds = read_dataset(&corpus::pain_dir().join("dataset")).map_err(|e| e.to_string())?;
    let app = router(Arc::new(AppState::new(ds, Styles::builtin())), None);

    let (status, body) = call(&app, "/healthz").await?;
    ensure(status == StatusCode::OK && body == "ok", || format!("healthz {status} {body:?}"))?;

    let comparison = "/api/search?group_1_indication=acute%20pain&group_1_ap=tapentadol&group_1_route=oral\
&group_2_indication=acute%20pain&group_2_ap=opioid&group_2_route=oral";
    let body = call_json(&app, comparison, StatusCode::OK).await?;
    ensure(body["groups"].as_array().map(Vec::len) == Some(2), || "comparison without 2 groups".into())?;
    ensure(body["tabs"].get("comparable_treatments").is_some(), || "comparison lacks comparable treatments".into())?;
    ensure(body["tabs"].get("treatment_summary").is_none(), || "comparison has a treatment summary".into())?;

    let body =
        call_json(&app, "/api/search?group_1_indication=peripheral%20neuropathic%20pain", StatusCode::OK).await?;
    ensure(body["tabs"].get("treatment_summary").is_some(), || "indication search lacks treatment summary".into())?;
    ensure(body["tabs"].get("comparable_treatments").is_none(), || {
        "indication search has comparable treatments".into()
    })?;

    let body = call_json(&app, "/api/autocomplete?kind=active_principle&q=opi", StatusCode::OK).await?;
    ensure(body[0]["id"] == "opioid", || format!("autocomplete gave {body}"))?;

    let body = call_json(&app, "/api/trials/NCT00000001", StatusCode::OK).await?;
    ensure(body["n_groups"] == 2 && body["n_events"] == 8, || {
        format!("trial detail {} groups {} events", body["n_groups"], body["n_events"])
    })?;

    call_json(&app, "/api/trials/NCT99999999", StatusCode::NOT_FOUND).await?;
    let body = call_json(&app, "/api/search", StatusCode::BAD_REQUEST).await?;
    ensure(body["param"] == "group_1", || format!("no-group error {body}"))?;
    let body = call_json(&app, "/api/search?group_1_ap=notadrug", StatusCode::BAD_REQUEST).await?;
    ensure(body["param"] == "group_1_ap", || format!("unknown principle error {body}"))?;
    Ok("search, tabs, autocomplete, trial detail, 400 and 404 paths".into())
}

fn main() -> ExitCode {
    let runtime = tokio::runtime::Runtime::new().expect("tokio runtime");
    let results = [
        report("weights golden", weights_golden()),
        report("placebo golden", placebo_golden()),
        report("mixing golden", mixing_golden()),
        report("invariant suite", invariant_suite()),
        report("aggregation oracle", aggregation_oracle()),
        report("glyph geometry", glyph_geometry()),
        report("ingestion", ingestion()),
        report("url scheme", url_scheme()),
        report("service contract", runtime.block_on(service_contract())),
    ];
    if results.iter().all(|ok| *ok) {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
