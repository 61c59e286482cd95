//! `nav`: run simulated walks, summarize them, serve live sessions, regenerate fixtures.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use nav_core::engine::{Condition, InstructionBackend};
use nav_core::instructor::{load_landmarks_file, HttpModelClient, Landmark};
use nav_core::metrics::{aggregate, rows_to_csv, rows_to_json, write_log, RunRecord};
use nav_core::route::{load_route_file, route_metrics, Route};
use nav_core::simkit::{run_sim, AgentConfig, ExperimentConfig};
use nav_service::{bind_from_env, load_routes_dir, serve, AppState, SessionConfig};

#[derive(Parser)]
#[command(name = "nav", version, about = "Audio-only pedestrian guidance: simulate, measure, serve")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Simulate walks and write their event logs and run records.
    Run(RunArgs),
    /// Route complexity or run summaries.
    #[command(subcommand)]
    Metrics(MetricsCmd),
    /// Serve the web-socket session API.
    Serve(ServeArgs),
    /// Regenerate the bundled replica routes and landmark database.
    Fixtures {
        #[arg(long, default_value = "fixtures")]
        out: PathBuf,
    },
}

#[derive(Args)]
struct RunArgs {
    /// Batch description (routes, conditions, seeds, agent, out); replaces the other flags.
    #[arg(long, conflicts_with_all = ["route", "condition", "seed", "seeds", "out", "landmarks", "agent"])]
    config: Option<PathBuf>,
    #[arg(long, required_unless_present = "config")]
    route: Option<PathBuf>,
    #[arg(long, required_unless_present = "config")]
    condition: Option<Condition>,
    #[arg(long, conflicts_with = "seeds")]
    seed: Option<u64>,
    /// Inclusive range, `A..B` or `A..=B`.
    #[arg(long, value_parser = parse_seed_range)]
    seeds: Option<SeedRange>,
    #[arg(long, required_unless_present = "config")]
    out: Option<PathBuf>,
    /// Defaults to `landmarks.json` beside the route file, if there is one.
    #[arg(long)]
    landmarks: Option<PathBuf>,
    /// Agent parameters as JSON; missing fields take their defaults.
    #[arg(long)]
    agent: Option<PathBuf>,
    #[arg(long, default_value_t = 10.0)]
    tick_hz: f64,
}

#[derive(Subcommand)]
enum MetricsCmd {
    /// Distance, intersections, alternative paths, turn angles and turns of a route.
    Route {
        #[arg(long)]
        route: PathBuf,
        #[arg(long)]
        json: bool,
    },
    /// Aggregate every `*.record.json` in a directory.
    Runs {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        csv: Option<PathBuf>,
        #[arg(long)]
        json: Option<PathBuf>,
    },
}

#[derive(Args)]
struct ServeArgs {
    /// Directory of route files.
    #[arg(long)]
    routes: PathBuf,
    /// Defaults to `landmarks.json` inside the routes directory, if there is one.
    #[arg(long)]
    landmarks: Option<PathBuf>,
    /// Listen address; defaults to $NAV_BIND or 127.0.0.1:8787.
    #[arg(long)]
    bind: Option<String>,
    /// Where finished sessions write their logs and records.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value_t = 10.0)]
    tick_hz: f64,
}

enum Failure {
    Config(String),
    Runtime(String),
}

type Outcome = Result<(), Failure>;

fn config<E: std::fmt::Display>(ctx: impl std::fmt::Display) -> impl FnOnce(E) -> Failure {
    move |e| Failure::Config(format!("{ctx}: {e}"))
}

fn runtime<E: std::fmt::Display>(ctx: impl std::fmt::Display) -> impl FnOnce(E) -> Failure {
    move |e| Failure::Runtime(format!("{ctx}: {e}"))
}

#[derive(Clone, Debug)]
struct SeedRange(Vec<u64>);

fn parse_seed_range(s: &str) -> Result<SeedRange, String> {
    let (a, b) =
        s.split_once("..=").or_else(|| s.split_once("..")).ok_or_else(|| format!("expected A..B, got {s:?}"))?;
    let a: u64 = a.trim().parse().map_err(|e| format!("{a:?}: {e}"))?;
    let b: u64 = b.trim().parse().map_err(|e| format!("{b:?}: {e}"))?;
    if a > b {
        return Err(format!("empty seed range {s:?}"));
    }
    Ok(SeedRange((a..=b).collect()))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let default_level = if matches!(cli.cmd, Cmd::Serve(_)) { "info" } else { "warn" };
    tracing_subscriber::fmt()
        .with_writer(std::io::stderr)
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env()
                .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new(default_level)),
        )
        .init();

    let outcome = match cli.cmd {
        Cmd::Run(a) => cmd_run(a),
        Cmd::Metrics(MetricsCmd::Route { route, json }) => cmd_metrics_route(&route, json),
        Cmd::Metrics(MetricsCmd::Runs { input, csv, json }) => {
            cmd_metrics_runs(&input, csv.as_deref(), json.as_deref())
        }
        Cmd::Serve(a) => cmd_serve(a),
        Cmd::Fixtures { out } => nav_core::fixtures::write_fixtures(&out)
            .map(|paths| paths.iter().for_each(|p| println!("{}", p.display())))
            .map_err(runtime(out.display())),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
    }
}

fn load_route(path: &Path) -> Result<Route, Failure> {
    load_route_file(path).map_err(config(path.display()))
}

/// Explicit file, else `landmarks.json` in `dir`, else none.
fn load_landmarks(explicit: Option<&Path>, dir: Option<&Path>) -> Result<Vec<Landmark>, Failure> {
    if let Some(p) = explicit {
        return load_landmarks_file(p).map_err(config(p.display()));
    }
    match dir.map(|d| d.join("landmarks.json")).filter(|p| p.is_file()) {
        Some(p) => load_landmarks_file(&p).map_err(config(p.display())),
        None => {
            tracing::warn!("no landmark database; instructions will not name landmarks");
            Ok(Vec::new())
        }
    }
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, Failure> {
    let text = std::fs::read_to_string(path).map_err(config(path.display()))?;
    serde_json::from_str(&text).map_err(config(path.display()))
}

fn cmd_run(a: RunArgs) -> Outcome {
    if !(a.tick_hz.is_finite() && a.tick_hz > 0.0) {
        return Err(Failure::Config(format!("--tick-hz must be positive, got {}", a.tick_hz)));
    }
    let exp: ExperimentConfig = match &a.config {
        Some(p) => read_json(p)?,
        None => {
            let route = a.route.clone().expect("clap requires --route");
            let seeds = match (a.seed, a.seeds) {
                (Some(s), _) => vec![s],
                (None, Some(r)) => r.0,
                (None, None) => vec![0],
            };
            ExperimentConfig {
                landmarks: a.landmarks.clone(),
                routes: vec![route],
                conditions: vec![a.condition.expect("clap requires --condition")],
                seeds,
                agent: match &a.agent {
                    Some(p) => read_json(p)?,
                    None => AgentConfig::default(),
                },
                out: a.out.clone().expect("clap requires --out"),
            }
        }
    };
    if exp.routes.is_empty() || exp.conditions.is_empty() || exp.seeds.is_empty() {
        return Err(Failure::Config("nothing to run: routes, conditions and seeds must be non-empty".into()));
    }
    exp.agent.validate().map_err(config("agent"))?;
    std::fs::create_dir_all(&exp.out).map_err(runtime(exp.out.display()))?;

    for route_path in &exp.routes {
        let route = load_route(route_path)?;
        let landmarks = load_landmarks(exp.landmarks.as_deref(), route_path.parent())?;
        for &condition in &exp.conditions {
            for &seed in &exp.seeds {
                let agent = AgentConfig { seed, ..exp.agent.clone() };
                let out = run_sim(&route, &landmarks, condition, &agent, a.tick_hz)
                    .map_err(runtime(format!("{} {condition} seed {seed}", route.id)))?;
                let stem = format!("{}-{condition}-seed{seed}", route.id);
                write_run(&exp.out, &stem, &out.log, &out.record)?;
                println!(
                    "{stem}: {:.1} m, {} deviations, {}",
                    out.record.distance_walked_m,
                    out.record.deviation_count,
                    if out.record.completed { "completed" } else { "incomplete" }
                );
            }
        }
    }
    Ok(())
}

fn write_run(dir: &Path, stem: &str, log: &[nav_core::metrics::LogRecord], record: &RunRecord) -> Outcome {
    let log_path = dir.join(format!("{stem}.jsonl"));
    let file = std::fs::File::create(&log_path).map_err(runtime(log_path.display()))?;
    let mut w = std::io::BufWriter::new(file);
    write_log(&mut w, log).map_err(runtime(log_path.display()))?;
    let rec_path = dir.join(format!("{stem}.record.json"));
    std::fs::write(&rec_path, record.to_json() + "\n").map_err(runtime(rec_path.display()))
}

fn cmd_metrics_route(path: &Path, json: bool) -> Outcome {
    let route = load_route(path)?;
    let m = route_metrics(&route, &route.graph).map_err(config(path.display()))?;
    if json {
        println!("{}", serde_json::to_string_pretty(&m).expect("metrics serialize"));
    } else {
        println!("route               {}", route.id);
        println!("{m}");
    }
    Ok(())
}

fn cmd_metrics_runs(dir: &Path, csv: Option<&Path>, json: Option<&Path>) -> Outcome {
    let entries = std::fs::read_dir(dir).map_err(config(dir.display()))?;
    let mut paths: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.file_name().and_then(|n| n.to_str()).is_some_and(|n| n.ends_with(".record.json")))
        .collect();
    paths.sort();
    let records = paths.iter().map(|p| read_json::<RunRecord>(p)).collect::<Result<Vec<_>, _>>()?;
    let rows = aggregate(&records).map_err(config(format!("{}: no *.record.json files", dir.display())))?;
    let table = rows_to_csv(&rows);
    match csv {
        Some(p) => std::fs::write(p, &table).map_err(runtime(p.display()))?,
        None => print!("{table}"),
    }
    if let Some(p) = json {
        std::fs::write(p, rows_to_json(&rows) + "\n").map_err(runtime(p.display()))?;
    }
    eprintln!("{} runs, {} summary rows", records.len(), rows.len());
    Ok(())
}

fn cmd_serve(a: ServeArgs) -> Outcome {
    if !(a.tick_hz.is_finite() && a.tick_hz > 0.0) {
        return Err(Failure::Config(format!("--tick-hz must be positive, got {}", a.tick_hz)));
    }
    let routes: BTreeMap<String, Arc<Route>> = load_routes_dir(&a.routes).map_err(Failure::Config)?;
    let landmarks = load_landmarks(a.landmarks.as_deref(), Some(&a.routes))?;
    let backend = match HttpModelClient::from_env() {
        Some(c) => {
            tracing::info!(url = %c.url, "using remote instruction model");
            InstructionBackend::Remote(Arc::new(c))
        }
        None => InstructionBackend::Mock,
    };
    let session = SessionConfig { tick_hz: a.tick_hz, backend, ..SessionConfig::default() };
    let bind = a.bind.unwrap_or_else(bind_from_env);
    let state = Arc::new(AppState::new(routes, landmarks, session, a.out));

    let rt = tokio::runtime::Builder::new_multi_thread().enable_all().build().map_err(runtime("tokio runtime"))?;
    rt.block_on(async move {
        let listener = tokio::net::TcpListener::bind(&bind).await.map_err(config(format!("bind {bind}")))?;
        let addr = listener.local_addr().map_err(runtime("listener"))?;
        tracing::info!(%addr, routes = ?state.routes.keys().collect::<Vec<_>>(), "listening");
        println!("listening on {addr}");
        let shutdown = async {
            let _ = tokio::signal::ctrl_c().await;
            tracing::info!("shutting down");
        };
        serve(listener, state, shutdown).await.map_err(runtime("server"))
    })
}
