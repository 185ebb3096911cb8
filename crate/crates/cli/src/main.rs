use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use tracing::{info, warn};
use tracing_subscriber::EnvFilter;

use ade_client::Client;
use ade_core::glyph::{render_flower_svg, shared_reference_rate, GlyphSpec, Styles};
use ade_core::ingestion::{self, IngestPaths};
use ade_core::normalization::AdeProfile;
use ade_core::search::{self, SearchResponse};
use ade_core::taxonomy::load_taxonomy;
use ade_server::AppState;

#[derive(Parser)]
#[command(name = "ade-miner", version, about = "Mine adverse drug events from clinical-trial registries")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build a dataset from registry XML, a curation CSV and vocabularies.
    Ingest {
        #[arg(long)]
        xml_dir: PathBuf,
        #[arg(long)]
        curation: PathBuf,
        #[arg(long)]
        taxonomy: PathBuf,
        #[arg(long)]
        terms: PathBuf,
        /// SOC-to-category table (defaults to the bundled one).
        #[arg(long)]
        soc_map: Option<PathBuf>,
        /// Output dataset directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Pre-fill a curation CSV from registry XML by regimen extraction.
    DraftCuration {
        #[arg(long)]
        xml_dir: PathBuf,
        #[arg(long)]
        taxonomy: PathBuf,
        /// Output file; standard output when absent.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Score the draft against a curated CSV and print the accuracy.
        #[arg(long)]
        score_against: Option<PathBuf>,
    },
    /// Render an ADE profile (JSON) as a flower glyph.
    Render {
        #[arg(long)]
        profile: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Rate mapped to the full glyph radius; the profile's largest rate by default.
        #[arg(long)]
        reference: Option<f64>,
        #[arg(long)]
        styles: Option<PathBuf>,
        #[arg(long, default_value_t = 520)]
        canvas: u32,
        #[arg(long, default_value = "")]
        caption: String,
    },
    /// Serve the HTTP API (and optional static assets).
    Serve {
        #[arg(long, env = "ADE_DATASET")]
        dataset: PathBuf,
        #[arg(long, env = "ADE_BIND", default_value = "127.0.0.1:8080")]
        bind: SocketAddr,
        #[arg(long)]
        assets: Option<PathBuf>,
        #[arg(long)]
        styles: Option<PathBuf>,
    },
    /// Run a search given as a URL query string.
    Query {
        /// e.g. `group_1_ap=tapentadol&group_2_ap=opioid`
        query: String,
        /// Service to query.
        #[arg(long, env = "ADE_SERVER", conflicts_with = "dataset")]
        server: Option<String>,
        /// Compute locally from a dataset directory instead.
        #[arg(long)]
        dataset: Option<PathBuf>,
        /// Result set: direct, mixed or absolute.
        #[arg(long)]
        set: Option<String>,
        #[arg(long)]
        include_titration: bool,
        /// Print every weight and corrected count as CSV.
        #[arg(long)]
        explain: bool,
        /// Print the full JSON response.
        #[arg(long)]
        json: bool,
    },
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn load_styles(path: Option<&Path>) -> Result<Styles> {
    match path {
        Some(p) => Styles::parse(&read(p)?).with_context(|| format!("parsing {}", p.display())),
        None => Ok(Styles::builtin()),
    }
}

fn write_output(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => std::fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn ingest(paths: IngestPaths, out: &Path) -> Result<()> {
    let (ds, warnings) = ingestion::ingest_files(&paths)?;
    for w in &warnings {
        warn!("{w}");
    }
    ingestion::write_dataset(&ds, out)?;
    println!("{}", serde_json::to_string_pretty(&ds.summary())?);
    Ok(())
}

fn draft_curation(xml_dir: &Path, taxonomy: &Path, out: Option<&Path>, score_against: Option<&Path>) -> Result<()> {
    let taxonomy = load_taxonomy(&read(taxonomy)?)?;
    let mut files: Vec<PathBuf> = std::fs::read_dir(xml_dir)
        .with_context(|| format!("listing {}", xml_dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("xml")))
        .collect();
    files.sort();
    let records = files
        .iter()
        .map(|f| ingestion::parse_registry_xml(&read(f)?).with_context(|| format!("parsing {}", f.display())))
        .collect::<Result<Vec<_>>>()?;
    let draft = ingestion::draft_curation(&records, &taxonomy);
    write_output(out, &ingestion::rows_to_csv(&draft))?;
    if let Some(curated) = score_against {
        let curated: Vec<_> =
            ingestion::parse_curation_rows(&read(curated)?)?.into_iter().map(|(_, row)| row).collect();
        let score = ingestion::score_extraction(&draft, &curated);
        eprintln!("{}", serde_json::to_string_pretty(&score)?);
    }
    Ok(())
}

fn render(
    profile: &Path,
    out: &Path,
    reference: Option<f64>,
    styles: Option<&Path>,
    canvas: u32,
    caption: String,
) -> Result<()> {
    let profile: AdeProfile = serde_json::from_str(&read(profile)?).context("parsing profile JSON")?;
    let styles = load_styles(styles)?;
    let reference_rate = reference.unwrap_or_else(|| shared_reference_rate([&profile]));
    let spec = GlyphSpec { profile, reference_rate, canvas_px: canvas, caption };
    write_output(Some(out), &render_flower_svg(&spec, &styles)?)
}

async fn serve(dataset: &Path, bind: SocketAddr, assets: Option<PathBuf>, styles: Option<&Path>) -> Result<()> {
    let ds = ingestion::read_dataset(dataset)?;
    let summary = ds.summary();
    info!(trials = summary.trials, groups = summary.groups, "dataset loaded");
    let state = Arc::new(AppState::new(ds, load_styles(styles)?));
    ade_server::serve(bind, ade_server::router(state, assets)).await?;
    Ok(())
}

fn print_response(r: &SearchResponse) {
    println!("result set: {}", r.result_set_kind);
    for s in &r.sets {
        println!("  {:<9} {:>4} trials {:>7} patients", s.kind.param(), s.trials, s.patients);
    }
    if r.empty {
        println!("no matching group");
    }
    for g in &r.groups {
        println!();
        println!("group {}: {}", g.index + 1, g.caption);
        println!("  {} patients, {:.2} effective", g.n_patients, g.profile.effective_patients);
        println!(
            "  overall {:.1}% (serious {:.1}%)",
            100.0 * g.profile.overall_rate,
            100.0 * g.profile.overall_serious_rate
        );
        println!("  {}", g.correction_summary);
        for c in g.profile.categories.iter().filter(|c| c.total_rate > 0.0) {
            println!("    {:<34} {:>7.2}% {:>7.2}%", c.category_id, 100.0 * c.total_rate, 100.0 * c.serious_rate);
        }
    }
}

async fn run_query(
    mut query: String,
    server: Option<String>,
    dataset: Option<PathBuf>,
    set: Option<String>,
    include_titration: bool,
    explain: bool,
    json: bool,
) -> Result<()> {
    if let Some(set) = set {
        query.push_str(&format!("&set={set}"));
    }
    if include_titration {
        query.push_str("&titration=1");
    }
    let (response, csv) = match dataset {
        Some(dir) => {
            let ds = ingestion::read_dataset(&dir)?;
            let params = search::parse_search_params(&query, ds.taxonomy())?;
            let csv = if explain { Some(search::explain_csv(&ds, &params)?) } else { None };
            (search::search(&ds, &params, &Styles::builtin())?, csv)
        }
        None => {
            let Some(base) = server else {
                bail!("give --server URL (or ADE_SERVER) or --dataset DIR");
            };
            let client = Client::new(&base)?;
            let csv = if explain { Some(client.explain(&query).await?) } else { None };
            (client.search(&query).await?, csv)
        }
    };
    if let Some(csv) = csv {
        print!("{csv}");
    } else if json {
        println!("{}", serde_json::to_string_pretty(&response)?);
    } else {
        print_response(&response);
    }
    Ok(())
}

#[tokio::main]
async fn main() -> Result<()> {
    tracing_subscriber::fmt()
        .with_env_filter(EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new("info")))
        .with_writer(std::io::stderr)
        .init();
    match Cli::parse().command {
        Command::Ingest { xml_dir, curation, taxonomy, terms, soc_map, out } => {
            ingest(IngestPaths { xml_dir, curation, taxonomy, terms, soc_map }, &out)
        }
        Command::DraftCuration { xml_dir, taxonomy, out, score_against } => {
            draft_curation(&xml_dir, &taxonomy, out.as_deref(), score_against.as_deref())
        }
        Command::Render { profile, out, reference, styles, canvas, caption } => {
            render(&profile, &out, reference, styles.as_deref(), canvas, caption)
        }
        Command::Serve { dataset, bind, assets, styles } => serve(&dataset, bind, assets, styles.as_deref()).await,
        Command::Query { query, server, dataset, set, include_titration, explain, json } => {
            run_query(query, server, dataset, set, include_titration, explain, json).await
        }
    }
}
