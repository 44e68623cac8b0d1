//! `sweeprl` command-line entry point.

use std::error::Error;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use sweeprl::bench::plot::{self, Series};
use sweeprl::bench::{
    compare_baselines, par_map, run_ablation, run_episode, tail_mean, to_csv, train_learner, Algo,
    BenchError, GreedyNetwork, MetricsRecord, RandomPolicy, ZigzagPolicy, CSV_HEADER,
};
use sweeprl::config::{Command, RunConfig};
use sweeprl::mapfile::parse_map;
use sweeprl::percept::ObservationMode;
use sweeprl::policy_file::{load_policy, save_policy, PolicyFile, PolicyMeta};
use sweeprl::train::Variant;
use sweeprl::GridMap;

type Result<T> = std::result::Result<T, Box<dyn Error>>;

#[derive(Parser)]
#[command(name = "sweeprl", version, about = "Coverage path planning with reinforcement learning")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Train a learner and write policy, metrics and config.
    Train(RunArgs),
    /// Roll out one greedy episode of a policy or a scripted baseline.
    Eval(RunArgs),
    /// Random, Zigzag and (optionally) a trained policy on one map.
    Compare(RunArgs),
    /// Train every ablation variant on every seed.
    Ablate(RunArgs),
    /// Render metrics CSV files as an SVG line chart.
    Plot(PlotArgs),
    /// Parse a map file and report reachability.
    MapValidate {
        map: PathBuf,
    },
}

#[derive(Args)]
struct RunArgs {
    /// Start from a saved config.json; flags below override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    algo: Option<Algo>,
    #[arg(long)]
    map: Option<String>,
    #[arg(long)]
    episodes: Option<usize>,
    #[arg(long, conflicts_with = "seeds")]
    seed: Option<u64>,
    /// Comma-separated seed list.
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    #[arg(long)]
    out: Option<String>,
    #[arg(long)]
    policy: Option<String>,
    #[arg(long)]
    obs: Option<ObservationMode>,
    #[arg(long)]
    no_dnut: bool,
    #[arg(long)]
    no_rs: bool,
    #[arg(long)]
    no_es: bool,
    #[arg(long)]
    step_cap: Option<usize>,
    #[arg(long)]
    random_cap: Option<usize>,
    /// Dotted-path override such as `ppo.lr=1e-3`; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Args)]
struct PlotArgs {
    /// Input CSV files.
    #[arg(required = true)]
    inputs: Vec<PathBuf>,
    /// Column to plot from each input; otherwise every column of one table.
    #[arg(long)]
    column: Option<String>,
    #[arg(long, default_value_t = 1)]
    smooth: usize,
    #[arg(long, default_value = "")]
    title: String,
    #[arg(long)]
    out: PathBuf,
}

fn resolve(command: Command, args: RunArgs) -> Result<RunConfig> {
    let mut cfg = match &args.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    cfg.command = command;
    if let Some(a) = args.algo {
        cfg.algo = a;
    }
    if args.map.is_some() {
        cfg.map = args.map;
    }
    if let Some(e) = args.episodes {
        cfg.episodes = e;
    }
    if let Some(s) = args.seed {
        cfg.seeds = vec![s];
    }
    if let Some(s) = args.seeds {
        cfg.seeds = s;
    }
    if args.out.is_some() {
        cfg.out = args.out;
    }
    if args.policy.is_some() {
        cfg.policy = args.policy;
    }
    if let Some(o) = args.obs {
        cfg.observation = o;
    }
    cfg.disable_dnut |= args.no_dnut;
    cfg.disable_rs |= args.no_rs;
    cfg.disable_es |= args.no_es;
    if let Some(c) = args.step_cap {
        cfg.step_cap = c;
    }
    if let Some(c) = args.random_cap {
        cfg.random_cap = c;
    }
    let cfg = cfg.with_overrides(&args.overrides)?;
    cfg.validate()?;
    Ok(cfg)
}

fn load_map(cfg: &RunConfig) -> Result<GridMap> {
    let path = cfg.map.as_deref().ok_or("--map is required")?;
    let text = fs::read_to_string(path).map_err(|e| format!("{path}: {e}"))?;
    Ok(parse_map(&text).map_err(|e| format!("{path}: {e}"))?)
}

fn out_dir(cfg: &RunConfig) -> Result<PathBuf> {
    Ok(PathBuf::from(cfg.out.as_deref().ok_or("--out is required")?))
}

fn train(cfg: &RunConfig) -> Result<()> {
    if !cfg.algo.is_learner() {
        return Err(BenchError::NotTrainable(cfg.algo).into());
    }
    let map = load_map(cfg)?;
    let out = out_dir(cfg)?;
    let hash = cfg.hash();
    let runs = par_map(cfg.seeds.clone(), |seed| {
        train_learner(cfg.algo, &map, &cfg.train_options(seed), &cfg.ppo, &cfg.dqn)
    });
    for run in runs {
        let run = run?;
        let seed = run.options.seed;
        let dir = if cfg.seeds.len() == 1 {
            out.clone()
        } else {
            out.join(format!("seed{seed}"))
        };
        fs::create_dir_all(&dir)?;
        let meta = PolicyMeta {
            algo: cfg.algo.to_string(),
            episodes: cfg.episodes,
            seed,
            config_hash: hash.clone(),
        };
        save_policy(&PolicyFile::new(&run.net, run.options.obs, meta), &dir.join("policy.sweeprl"))?;
        fs::write(dir.join("metrics.csv"), to_csv(&run.records))?;
        println!(
            "seed {seed}: final mean steps {:.2}, coverage {:.3}",
            tail_mean(&run.records, cfg.window, |r| r.steps as f64),
            tail_mean(&run.records, cfg.window, |r| r.coverage),
        );
    }
    cfg.write(&out)?;
    Ok(())
}

fn eval(cfg: &RunConfig) -> Result<()> {
    let map = load_map(cfg)?;
    let out = out_dir(cfg)?;
    let mut records = Vec::new();
    let mut trajectories = Vec::new();
    match cfg.policy.as_deref() {
        Some(path) => {
            let file = load_policy(Path::new(path))?;
            file.check_map(map.width(), map.height())?;
            let net = file.network()?;
            let mut policy = GreedyNetwork::new(&net, file.obs);
            let (rec, traj) = run_episode(&mut policy, &map, cfg.seeds[0], None, cfg.step_cap)?;
            records.push(rec);
            trajectories.push(traj);
        }
        None => {
            for &seed in &cfg.seeds {
                let (rec, traj) = match cfg.algo {
                    Algo::Random => {
                        run_episode(&mut RandomPolicy::new(seed), &map, seed, None, cfg.step_cap)?
                    }
                    Algo::Zigzag => {
                        run_episode(&mut ZigzagPolicy::default(), &map, seed, None, cfg.step_cap)?
                    }
                    _ => return Err("--policy is required to evaluate a learner".into()),
                };
                records.push(rec);
                trajectories.push(traj);
            }
        }
    }
    let records: Vec<MetricsRecord> = records
        .into_iter()
        .enumerate()
        .map(|(i, r)| MetricsRecord { episode: i, ..r })
        .collect();
    fs::create_dir_all(&out)?;
    fs::write(out.join("eval.csv"), to_csv(&records))?;
    let mut traj_csv = String::from("run,t,row,col\n");
    for (i, traj) in trajectories.iter().enumerate() {
        for (t, (r, c)) in traj.iter().enumerate() {
            traj_csv.push_str(&format!("{i},{t},{r},{c}\n"));
        }
    }
    fs::write(out.join("trajectory.csv"), traj_csv)?;
    cfg.write(&out)?;
    print!("{CSV_HEADER}\n{}", records.iter().map(|r| r.csv_row() + "\n").collect::<String>());
    Ok(())
}

fn compare(cfg: &RunConfig) -> Result<()> {
    let map = load_map(cfg)?;
    let out = out_dir(cfg)?;
    let learned = match cfg.policy.as_deref() {
        Some(path) => {
            let file = load_policy(Path::new(path))?;
            Some((file.network()?, file.obs))
        }
        None => None,
    };
    let report = compare_baselines(
        &map,
        &cfg.seeds,
        learned.as_ref().map(|(n, o)| (n, o)),
        cfg.random_cap,
        cfg.step_cap,
    )?;
    fs::create_dir_all(&out)?;
    fs::write(out.join("comparison.csv"), report.to_csv())?;
    fs::write(out.join("comparison.svg"), report.to_svg())?;
    cfg.write(&out)?;
    print!("{}", report.to_csv());
    Ok(())
}

fn mean_curve(label: &str, runs: &[&[MetricsRecord]], f: fn(&MetricsRecord) -> f64) -> Series {
    let len = runs.iter().map(|r| r.len()).min().unwrap_or(0);
    Series {
        label: label.to_string(),
        points: (0..len)
            .map(|i| {
                let y = runs.iter().map(|r| f(&r[i])).sum::<f64>() / runs.len() as f64;
                (i as f64, y)
            })
            .collect(),
    }
}

fn ablate(cfg: &RunConfig) -> Result<()> {
    let map = load_map(cfg)?;
    let out = out_dir(cfg)?;
    let report = run_ablation(&map, &Variant::ABLATION, cfg.episodes, &cfg.seeds, &cfg.ppo, cfg.window)?;
    report.write(&out)?;
    let smooth_window = (cfg.episodes / 100).max(1);
    for (name, y_label, f) in [
        ("ablation_steps.svg", "steps", (|r: &MetricsRecord| r.steps as f64) as fn(&MetricsRecord) -> f64),
        ("ablation_score.svg", "shaped reward", |r: &MetricsRecord| r.shaped_reward),
    ] {
        let series: Vec<Series> = Variant::ABLATION
            .iter()
            .map(|v| {
                let runs: Vec<&[MetricsRecord]> = report
                    .runs
                    .iter()
                    .filter(|r| r.variant == *v)
                    .map(|r| r.records.as_slice())
                    .collect();
                plot::smooth(&mean_curve(v.label(), &runs, f), smooth_window)
            })
            .collect();
        fs::write(out.join(name), plot::line_chart("Ablation", "episode", y_label, &series))?;
    }
    cfg.write(&out)?;
    print!("{}", report.summary_csv());
    Ok(())
}

fn plot_cmd(args: PlotArgs) -> Result<()> {
    let mut inputs = Vec::new();
    for path in &args.inputs {
        let text = fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        let label = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        inputs.push((label, text));
    }
    let svg = plot::emit_plot(&inputs, args.column.as_deref(), args.smooth, &args.title)?;
    if let Some(dir) = args.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    fs::write(&args.out, svg)?;
    Ok(())
}

fn map_validate(path: &Path) -> Result<()> {
    let text = fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    let map = parse_map(&text).map_err(|e| format!("{}: {e}", path.display()))?;
    let unreachable = map.unreachable_cells();
    if let Some((r, c)) = unreachable.first() {
        return Err(format!(
            "{}: {} free cells unreachable from the start, first at ({r}, {c})",
            path.display(),
            unreachable.len()
        )
        .into());
    }
    let (sr, sc) = map.start_pos().expect("validated map has a free cell");
    println!(
        "ok {}x{} free={} start=({sr}, {sc})",
        map.width(),
        map.height(),
        map.free_count()
    );
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Cmd::Train(a) => train(&resolve(Command::Train, a)?),
        Cmd::Eval(a) => eval(&resolve(Command::Eval, a)?),
        Cmd::Compare(a) => compare(&resolve(Command::Compare, a)?),
        Cmd::Ablate(a) => ablate(&resolve(Command::Ablate, a)?),
        Cmd::Plot(a) => plot_cmd(a),
        Cmd::MapValidate { map } => map_validate(&map),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.to_string().replace('\n', " "));
            ExitCode::FAILURE
        }
    }
}
