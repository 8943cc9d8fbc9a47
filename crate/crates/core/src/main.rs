use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use cbrap::environment::{make_env, ContextSpec, NoiseSpec};
use cbrap::harness::{
    coverage_experiment_scaled, exit_code, kaban_experiment, kaban_rows_to_csv, run_experiment,
    Algo, ExperimentConfig, EXIT_BOUND_VIOLATION,
};
use cbrap::{Error, Result};

#[derive(Parser, Debug)]
#[command(name = "cbrap", version, about = "Contextual bandits on randomly projected contexts")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run policies over seeds and write per-round CSVs plus summary.json.
    Run(ConfigArgs),
    /// Measure how often the projected parameter stays inside the confidence sets.
    Coverage(CoverageArgs),
    /// Empirical tail of the inner-product distortion against its bound.
    Kaban(KabanArgs),
    /// Write synthetic contexts to a replay CSV.
    GenContexts(ConfigArgs),
}

#[derive(Args, Debug, Default)]
struct ConfigArgs {
    /// TOML config file; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Comma-separated: cbrap-sg, cbrap-rs, cbrap-rs-sparse, linucb, uniform.
    #[arg(long, value_delimiter = ',')]
    algo: Vec<String>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    m: Option<usize>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    t: Option<usize>,
    #[arg(long)]
    beta: Option<f64>,
    /// Use the theory width with oracle constants.
    #[arg(long)]
    adaptive_beta: bool,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    delta: Option<f64>,
    /// Gaussian reward noise scale (0 disables noise).
    #[arg(long)]
    noise_r: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// `1,2,5` or a half-open range `0..100`.
    #[arg(long)]
    seeds: Option<String>,
    /// gaussian | sparse:<nnz> | prototypes:<jitter>
    #[arg(long)]
    env: Option<String>,
    /// Replay contexts from a CSV file.
    #[arg(long)]
    replay: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Accepted and ignored.
    #[arg(long)]
    alpha: Option<f64>,
    /// Write measured per-round time into CSVs instead of 0.
    #[arg(long)]
    timing: bool,
}

#[derive(Args, Debug)]
struct CoverageArgs {
    #[command(flatten)]
    config: ConfigArgs,
    #[arg(long, default_value_t = 100)]
    num_seeds: usize,
    /// Multiplier on the confidence radius.
    #[arg(long, default_value_t = 1.0)]
    width_scale: f64,
    /// Exit with status 3 when coverage falls below 1 − δ beyond binomial noise.
    #[arg(long)]
    strict: bool,
}

#[derive(Args, Debug)]
struct KabanArgs {
    #[arg(long, value_delimiter = ',', default_value = "8,32,128")]
    m_list: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_value = "0.25,0.5,0.75,1")]
    eps1_list: Vec<f64>,
    #[arg(long, default_value_t = 100_000)]
    trials: usize,
    #[arg(long, default_value_t = 128)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// CSV output file.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Exit with status 3 when any cell exceeds its allowed rate.
    #[arg(long)]
    strict: bool,
}

fn parse_seeds(text: &str) -> Result<Vec<u64>> {
    let bad = |msg: String| Error::Config {
        field: "seeds".into(),
        message: msg,
    };
    if let Some((a, b)) = text.split_once("..") {
        let a: u64 = a.trim().parse().map_err(|_| bad(format!("bad range start `{a}`")))?;
        let b: u64 = b.trim().parse().map_err(|_| bad(format!("bad range end `{b}`")))?;
        if a >= b {
            return Err(bad(format!("empty range {a}..{b}")));
        }
        return Ok((a..b).collect());
    }
    text.split(',')
        .map(|s| s.trim().parse().map_err(|_| bad(format!("bad seed `{s}`"))))
        .collect()
}

fn parse_env(text: &str) -> Result<ContextSpec> {
    let bad = |msg: String| Error::Config {
        field: "env".into(),
        message: msg,
    };
    let (kind, arg) = match text.split_once(':') {
        Some((k, a)) => (k, Some(a)),
        None => (text, None),
    };
    match (kind, arg) {
        ("gaussian", None) => Ok(ContextSpec::GaussianUnit),
        ("sparse", Some(a)) => Ok(ContextSpec::SparseUniform {
            nnz: a.parse().map_err(|_| bad(format!("bad nnz `{a}`")))?,
        }),
        ("prototypes", Some(a)) => Ok(ContextSpec::Prototypes {
            jitter: a.parse().map_err(|_| bad(format!("bad jitter `{a}`")))?,
        }),
        _ => Err(bad(format!(
            "unknown env `{text}` (expected gaussian, sparse:<nnz> or prototypes:<jitter>)"
        ))),
    }
}

fn build_config(args: &ConfigArgs) -> Result<ExperimentConfig> {
    let mut cfg = match &args.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if !args.algo.is_empty() {
        cfg.algos = args.algo.iter().map(|a| a.parse()).collect::<Result<Vec<Algo>>>()?;
    }
    if let Some(n) = args.n {
        cfg.env.n = n;
    }
    if let Some(m) = args.m {
        cfg.m = m;
    }
    if let Some(k) = args.k {
        cfg.env.k = k;
    }
    if let Some(t) = args.t {
        cfg.horizon = t;
    }
    if let Some(beta) = args.beta {
        cfg.beta = beta;
    }
    if args.adaptive_beta {
        cfg.adaptive_beta = true;
    }
    if let Some(lambda) = args.lambda {
        cfg.lambda = lambda;
    }
    if let Some(delta) = args.delta {
        cfg.delta = delta;
    }
    if let Some(r) = args.noise_r {
        cfg.env.noise = if r == 0.0 {
            NoiseSpec::None
        } else {
            NoiseSpec::Gaussian { r }
        };
    }
    if let Some(seed) = args.seed {
        cfg.seeds = vec![seed];
    }
    if let Some(seeds) = &args.seeds {
        cfg.seeds = parse_seeds(seeds)?;
    }
    if let Some(env) = &args.env {
        cfg.env.context = parse_env(env)?;
    }
    if let Some(path) = &args.replay {
        cfg.env.context = ContextSpec::Replay { path: path.clone() };
    }
    if let Some(out) = &args.out {
        cfg.out = Some(out.clone());
    }
    if args.alpha.is_some() {
        cfg.alpha = args.alpha;
    }
    if args.timing {
        cfg.record_timing = true;
    }
    Ok(cfg)
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::Io {
            path: dir.to_path_buf(),
            source: e,
        })?;
    }
    std::fs::write(path, text).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn cmd_run(args: &ConfigArgs) -> Result<i32> {
    let cfg = build_config(args)?;
    let summary = run_experiment(&cfg)?;
    println!("algo\tfinal_regret_mean\tfinal_regret_std\tmean_latency_ns");
    for a in &summary.algos {
        println!(
            "{}\t{:.4}\t{:.4}\t{:.0}",
            a.algo, a.final_regret_mean, a.final_regret_std, a.mean_latency_ns
        );
    }
    if let Some(rate) = summary.coverage_rate {
        println!("coverage_rate\t{rate:.4}");
    }
    Ok(0)
}

fn cmd_coverage(args: &CoverageArgs) -> Result<i32> {
    let cfg = build_config(&args.config)?;
    let report = coverage_experiment_scaled(&cfg, args.num_seeds, args.width_scale)?;
    let n = report.seeds.len() as f64;
    let target = 1.0 - cfg.delta;
    let floor = target - 3.0 * (target * (1.0 - target) / n).sqrt();
    println!("coverage_rate\t{:.4}", report.rate);
    println!("target\t{target:.4}\tfloor\t{floor:.4}");
    println!("bound_hold_rate\t{:.4}", report.bound_hold_rate());
    println!("mean_success_probability\t{:.4}", report.mean_success_probability());
    for (t, count) in &report.first_violation_histogram {
        log::info!("first violation after {t} updates: {count} seeds");
    }
    if let Some(dir) = &cfg.out {
        let json = serde_json::to_string_pretty(&report).expect("report serializes");
        write_text(&dir.join("coverage.json"), &(json + "\n"))?;
    }
    if args.strict && report.rate < floor {
        eprintln!("coverage {:.4} below floor {floor:.4}", report.rate);
        return Ok(EXIT_BOUND_VIOLATION);
    }
    Ok(0)
}

fn cmd_kaban(args: &KabanArgs) -> Result<i32> {
    let rows = kaban_experiment(&args.m_list, &args.eps1_list, args.trials, args.n, args.seed)?;
    let csv = kaban_rows_to_csv(&rows);
    print!("{csv}");
    if let Some(path) = &args.out {
        write_text(path, &csv)?;
    }
    let violated = rows.iter().filter(|r| r.violated).count();
    if violated > 0 {
        eprintln!("{violated} cell(s) exceed their allowed rate");
        if args.strict {
            return Ok(EXIT_BOUND_VIOLATION);
        }
    }
    Ok(0)
}

fn cmd_gen_contexts(args: &ConfigArgs) -> Result<i32> {
    let mut cfg = build_config(args)?;
    cfg.m = cfg.m.min(cfg.env.n);
    cfg.validate()?;
    let Some(out) = &cfg.out else {
        return Err(Error::Config {
            field: "out".into(),
            message: "gen-contexts needs an output file".into(),
        });
    };
    let mut spec = cfg.env.clone();
    spec.seed = cfg.seeds[0];
    let env = make_env(&spec)?;
    let dataset = env.to_dataset(cfg.horizon)?;
    dataset.write(out)?;
    println!("wrote {} rounds x {} arms to {}", dataset.rounds(), dataset.arms, out.display());
    Ok(0)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let result = match &cli.command {
        Command::Run(a) => cmd_run(a),
        Command::Coverage(a) => cmd_coverage(a),
        Command::Kaban(a) => cmd_kaban(a),
        Command::GenContexts(a) => cmd_gen_contexts(a),
    };
    match result {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
