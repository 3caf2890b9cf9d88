use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::{info, warn};
use serde::Deserialize;

use pulltrack::experiment::{
    csv_string, run_experiment, run_figure, save_policy, ArtifactStore, ExperimentSpec, Figure,
    FigureOptions, PointRow, Sweep, SweepVariable,
};
use pulltrack::solver::PolicyFile;
use pulltrack::{
    DistortionKind, PolicyKind, RootBelief, SimConfig, SolverConfig, SourceParams,
    DEFAULT_UPDATE_LAG,
};

#[derive(Parser)]
#[command(name = "pulltrack", version, about = "Belief-MDP scheduling of correlated binary sources")]
struct Cli {
    /// JSON config file; command-line flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one policy at one point, or along a sweep.
    Run(Params),
    /// Run the full grid of a figure for both policies.
    Figure(Params),
    /// Build the belief graph, solve it, and report the optimal average cost.
    Solve(Params),
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Args, Default)]
struct Params {
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    p: Option<f64>,
    #[arg(long)]
    theta: Option<f64>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    ps: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    /// Truncation depth of the belief graph.
    #[arg(long)]
    n: Option<usize>,
    /// pomdp, maf, idle, roundrobin or random.
    #[arg(long)]
    policy: Option<String>,
    /// indicator, absolute or squared.
    #[arg(long)]
    distortion: Option<String>,
    #[arg(long)]
    horizon: Option<u64>,
    /// A replication count `n` (seeds 1..=n) or a comma-separated seed list.
    #[arg(long)]
    seeds: Option<String>,
    #[arg(long)]
    warmup: Option<u64>,
    #[arg(long)]
    update_lag: Option<usize>,
    /// Output file; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// fig2, fig3, fig4 or fig5.
    #[arg(long)]
    figure: Option<String>,
    #[arg(long)]
    cache_dir: Option<PathBuf>,
    /// Sweep variable: lambda, gamma, p_s or p.
    #[arg(long, requires = "values")]
    sweep: Option<String>,
    /// Comma-separated sweep values.
    #[arg(long, value_delimiter = ',')]
    values: Option<Vec<f64>>,
    /// Span threshold for relative value iteration.
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    max_iterations: Option<usize>,
    /// Aperiodicity weight in (0, 1]; 1 leaves the transitions unchanged.
    #[arg(long)]
    aperiodicity: Option<f64>,
    #[arg(long, value_enum)]
    format: Option<Format>,
}

/// Config-file mirror of [`Params`]; every field optional.
#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    k: Option<usize>,
    p: Option<f64>,
    theta: Option<f64>,
    lambda: Option<f64>,
    #[serde(alias = "p_s")]
    ps: Option<f64>,
    gamma: Option<f64>,
    n: Option<usize>,
    policy: Option<String>,
    distortion: Option<String>,
    horizon: Option<u64>,
    seeds: Option<SeedSpec>,
    warmup: Option<u64>,
    update_lag: Option<usize>,
    out: Option<PathBuf>,
    figure: Option<String>,
    cache_dir: Option<PathBuf>,
    sweep: Option<Sweep>,
    epsilon: Option<f64>,
    max_iterations: Option<usize>,
    aperiodicity: Option<f64>,
    root: Option<RootBelief>,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum SeedSpec {
    Count(u64),
    List(Vec<u64>),
}

impl SeedSpec {
    fn parse(s: &str) -> Result<Self, String> {
        if s.contains(',') {
            s.split(',')
                .map(|v| v.trim().parse::<u64>().map_err(|e| format!("bad seed {v:?}: {e}")))
                .collect::<Result<_, _>>()
                .map(SeedSpec::List)
        } else {
            s.trim()
                .parse()
                .map(SeedSpec::Count)
                .map_err(|e| format!("bad seed count {s:?}: {e}"))
        }
    }

    fn seeds(self) -> Result<Vec<u64>, String> {
        let seeds = match self {
            SeedSpec::Count(n) => (1..=n).collect(),
            SeedSpec::List(list) => list,
        };
        if seeds.is_empty() {
            return Err("at least one seed is required".into());
        }
        Ok(seeds)
    }
}

/// Flags merged over the config file.
struct Resolved {
    sim: SimConfig,
    depth: usize,
    policy: PolicyKind,
    seeds: Vec<u64>,
    solver: SolverConfig,
    out: Option<PathBuf>,
    figure: Option<Figure>,
    cache_dir: Option<PathBuf>,
    sweep: Option<Sweep>,
    format: Format,
}

fn resolve(flags: Params, file: FileConfig) -> Result<Resolved, String> {
    let defaults = SourceParams::default();
    let source = SourceParams::new(
        flags.k.or(file.k).unwrap_or(defaults.k),
        flags.p.or(file.p).unwrap_or(defaults.p),
        flags.theta.or(file.theta).unwrap_or(defaults.theta),
        flags.lambda.or(file.lambda).unwrap_or(defaults.lambda),
    );
    let mut sim = SimConfig::new(
        source,
        flags.ps.or(file.ps).unwrap_or(0.8),
        flags.gamma.or(file.gamma).unwrap_or(0.05),
    );
    if let Some(d) = flags.distortion.or(file.distortion) {
        sim.kind = d.parse::<DistortionKind>().map_err(|e| e.to_string())?;
    }
    if let Some(h) = flags.horizon.or(file.horizon) {
        sim.horizon = h;
    }
    sim.warmup = flags.warmup.or(file.warmup).unwrap_or(0);
    sim.update_lag = flags.update_lag.or(file.update_lag).unwrap_or(DEFAULT_UPDATE_LAG);
    if let Some(root) = file.root {
        sim.root = root;
    }

    let seeds = match flags.seeds {
        Some(s) => SeedSpec::parse(&s)?,
        None => file.seeds.unwrap_or(SeedSpec::Count(10)),
    }
    .seeds()?;

    let mut solver = SolverConfig::default();
    if let Some(e) = flags.epsilon.or(file.epsilon) {
        solver.epsilon = e;
    }
    if let Some(m) = flags.max_iterations.or(file.max_iterations) {
        solver.max_iterations = m;
    }
    if let Some(a) = flags.aperiodicity.or(file.aperiodicity) {
        solver.aperiodicity = a;
    }

    let sweep = match (flags.sweep, flags.values) {
        (Some(var), Some(values)) => Some(Sweep {
            variable: var.parse::<SweepVariable>().map_err(|e| e.to_string())?,
            values,
        }),
        _ => file.sweep,
    };

    Ok(Resolved {
        sim,
        depth: flags.n.or(file.n).unwrap_or(6),
        policy: flags
            .policy
            .or(file.policy)
            .unwrap_or_else(|| "pomdp".into())
            .parse()
            .map_err(|e: pulltrack::Error| e.to_string())?,
        seeds,
        solver,
        out: flags.out.or(file.out),
        figure: flags
            .figure
            .or(file.figure)
            .map(|f| f.parse::<Figure>())
            .transpose()
            .map_err(|e| e.to_string())?,
        cache_dir: flags.cache_dir.or(file.cache_dir),
        sweep,
        format: flags.format.unwrap_or(Format::Csv),
    })
}

fn load_config(path: Option<&Path>) -> Result<FileConfig, String> {
    match path {
        None => Ok(FileConfig::default()),
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| format!("{}: {e}", p.display()))?;
            serde_json::from_str(&text).map_err(|e| format!("{}: {e}", p.display()))
        }
    }
}

fn emit(rows: &[PointRow], format: Format, out: Option<&Path>) -> Result<(), String> {
    let text = match format {
        Format::Csv => csv_string(rows).map_err(|e| e.to_string())?,
        Format::Json => serde_json::to_string_pretty(rows).map_err(|e| e.to_string())? + "\n",
    };
    write_output(&text, out)
}

fn write_output(text: &str, out: Option<&Path>) -> Result<(), String> {
    match out {
        Some(path) => {
            if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir).map_err(|e| e.to_string())?;
            }
            std::fs::write(path, text).map_err(|e| format!("{}: {e}", path.display()))?;
            info!("wrote {}", path.display());
            Ok(())
        }
        None => std::io::stdout()
            .write_all(text.as_bytes())
            .map_err(|e| e.to_string()),
    }
}

fn report_failures(rows: &[PointRow]) {
    for row in rows {
        if let Some(err) = &row.error {
            warn!("{} K={} lambda={} gamma={}: {err}", row.policy, row.k, row.lambda, row.gamma);
        }
        if row.converged == Some(false) {
            warn!(
                "{} K={} lambda={} gamma={}: solver did not converge",
                row.policy, row.k, row.lambda, row.gamma
            );
        }
    }
}

fn run(cli: Cli) -> Result<(), String> {
    let file = load_config(cli.config.as_deref())?;
    match cli.command {
        Command::Run(flags) => {
            let r = resolve(flags, file)?;
            let spec = ExperimentSpec {
                base: r.sim,
                depth: r.depth,
                policy: r.policy,
                sweep: r.sweep,
                seeds: r.seeds,
                solver: r.solver,
                out: r.out.clone(),
                cache_dir: r.cache_dir,
            };
            let rows = run_experiment(&spec).map_err(|e| e.to_string())?;
            report_failures(&rows);
            emit(&rows, r.format, r.out.as_deref())
        }
        Command::Figure(flags) => {
            let r = resolve(flags, file)?;
            let figure = r.figure.ok_or("figure needs --figure fig2|fig3|fig4|fig5")?;
            let opts = FigureOptions {
                theta: r.sim.source.theta,
                horizon: r.sim.horizon,
                seeds: r.seeds,
                depth: r.depth,
                update_lag: r.sim.update_lag,
                solver: r.solver,
                cache_dir: r.cache_dir,
                ..FigureOptions::default()
            };
            let rows = run_figure(figure, &opts);
            report_failures(&rows);
            emit(&rows, r.format, r.out.as_deref())
        }
        Command::Solve(flags) => {
            let r = resolve(flags, file)?;
            let spec = ExperimentSpec {
                base: r.sim,
                depth: r.depth,
                policy: PolicyKind::Pomdp,
                sweep: None,
                seeds: r.seeds,
                solver: r.solver,
                out: None,
                cache_dir: r.cache_dir.clone(),
            };
            spec.validate().map_err(|e| e.to_string())?;
            let gspec = spec.graph_spec(&r.sim);
            let cost = pulltrack::CostModel::new(r.sim.gamma, r.sim.kind, r.sim.update_lag);
            let store = ArtifactStore::new(r.cache_dir);
            let (graph, table) = store.policy(&gspec, &cost, &r.solver).map_err(|e| e.to_string())?;
            if !table.converged {
                warn!("solver stopped after {} iterations, span {:e}", table.iterations, table.span);
            }
            let file = PolicyFile {
                graph_hash: gspec.key(),
                graph: gspec,
                cost,
                solver: r.solver,
                table: (*table).clone(),
            };
            if let Some(path) = &r.out {
                save_policy(path, &file).map_err(|e| e.to_string())?;
            }
            let summary = serde_json::json!({
                "nodes": graph.len(),
                "rho": table.rho,
                "rho_lower": table.rho_lower,
                "rho_upper": table.rho_upper,
                "iterations": table.iterations,
                "converged": table.converged,
                "root_action": table.action(graph.root()),
            });
            write_output(&format!("{summary:#}\n"), None)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
