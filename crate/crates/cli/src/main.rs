use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

use privpad_core::corpus::{generate_split, save_corpus, GenerationProfile};
use privpad_core::pii::DetectorRuleSet;
use privpad_core::policy::Agent;
use privpad_core::training::{
    evaluate, ppo_finetune, sft_warmup, sweep_lambda, write_reward_curve, write_sweep_csv, Dataset, ExperimentConfig,
    Method,
};
use privpad_gateway::{serve, Gateway, GatewayConfig, HttpTransport};

#[derive(Parser)]
#[command(name = "privpad", version, about = "Privacy-aware chunk routing between a local and a remote model")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, ValueEnum)]
enum Profile {
    Medical,
    DependencyHeavy,
    HighRisk,
}

impl Profile {
    fn profile(self) -> GenerationProfile {
        match self {
            Profile::Medical => GenerationProfile::medical(),
            Profile::DependencyHeavy => GenerationProfile::dependency_heavy(),
            Profile::HighRisk => GenerationProfile::high_risk(),
        }
    }
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a synthetic annotated corpus as JSONL.
    GenCorpus {
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 0.2)]
        test_ratio: f64,
        #[arg(long, value_enum, default_value = "medical")]
        profile: Profile,
        #[arg(long)]
        out: PathBuf,
    },
    /// Supervised warm-up on the heuristic labels.
    TrainSft {
        /// Experiment config (JSON); built-in defaults when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Checkpoint path [default: <output_dir>/sft.json].
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// PPO fine-tuning from a warm-started checkpoint.
    TrainPpo {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Starting checkpoint [default: <output_dir>/sft.json].
        #[arg(long)]
        init: Option<PathBuf>,
        /// Checkpoint path [default: <output_dir>/ppo.json].
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evaluate a method on the test split.
    Eval {
        #[arg(long)]
        config: Option<PathBuf>,
        /// always_local, always_remote, heuristic_sft, privacypad, stateless, linear_penalty or oracle.
        #[arg(long)]
        method: String,
        /// Checkpoint for learned methods.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Train and evaluate one agent per penalty weight.
    SweepLambda {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_delimiter = ',', required = true)]
        lambdas: Vec<f64>,
        /// Shared starting checkpoint; a fresh warm-up is run when omitted.
        #[arg(long)]
        init: Option<PathBuf>,
        /// CSV path [default: <output_dir>/lambda_sweep.csv].
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Route one text. Without --gateway-config this is a dry run.
    Route {
        #[arg(long)]
        text: String,
        #[arg(long, required_unless_present = "gateway_config")]
        checkpoint: Option<PathBuf>,
        /// Detector rules (JSON); built-in rules when omitted.
        #[arg(long)]
        rules: Option<PathBuf>,
        /// Gateway config with endpoints; enables live calls.
        #[arg(long)]
        gateway_config: Option<PathBuf>,
        #[arg(long)]
        dry_run: bool,
    },
    /// Run the HTTP gateway.
    Serve {
        #[arg(long)]
        config: PathBuf,
    },
}

fn load_config(path: &Option<PathBuf>) -> Result<ExperimentConfig> {
    match path {
        Some(p) => ExperimentConfig::load(p).with_context(|| format!("loading config {}", p.display())),
        None => Ok(ExperimentConfig::default()),
    }
}

fn load_agent(path: &Path) -> Result<Agent> {
    Agent::load(path).with_context(|| format!("loading checkpoint {}", path.display()))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, serde_json::to_string_pretty(value)? + "\n").with_context(|| format!("writing {}", path.display()))
}

struct Prepared {
    cfg: ExperimentConfig,
    train: Dataset,
    test: Dataset,
}

fn prepare(cfg: ExperimentConfig, agent: &Agent) -> Result<Prepared> {
    let split = cfg.corpus.load()?;
    let train = Dataset::new(&split.train, agent)?;
    let test = Dataset::new(&split.test, agent)?;
    fs::create_dir_all(&cfg.output_dir)?;
    Ok(Prepared { cfg, train, test })
}

#[derive(Serialize)]
struct Summary<'a> {
    method: &'a str,
    quality_pct: f64,
    leakage_pct: f64,
    catastrophic_pct: f64,
    mean_reward: f64,
    lambda: f64,
    queries: usize,
}

fn run(cli: Cli) -> Result<()> {
    match cli.cmd {
        Cmd::GenCorpus { seed, n, test_ratio, profile, out } => {
            let split = generate_split(seed, n, test_ratio, &profile.profile())?;
            save_corpus(&split, &out).with_context(|| format!("writing {}", out.display()))?;
            eprintln!("wrote {} train + {} test queries to {}", split.train.len(), split.test.len(), out.display());
        }
        Cmd::TrainSft { config, out } => {
            let cfg = load_config(&config)?;
            let mut agent = cfg.new_agent()?;
            let p = prepare(cfg, &agent)?;
            let report = sft_warmup(&mut agent, &p.train, &p.cfg.train.sft, p.cfg.train.seed)?;
            let out = out.unwrap_or_else(|| p.cfg.output_dir.join("sft.json"));
            agent.save(&out)?;
            write_json(&p.cfg.output_dir.join("sft_report.json"), &report)?;
            println!("{}", serde_json::json!({ "checkpoint": out, "train_accuracy": report.train_accuracy }));
        }
        Cmd::TrainPpo { config, init, out } => {
            let cfg = load_config(&config)?;
            let init = init.unwrap_or_else(|| cfg.output_dir.join("sft.json"));
            let mut agent = load_agent(&init)?;
            let p = prepare(cfg, &agent)?;
            let report = ppo_finetune(&mut agent, &p.train, &p.cfg.world, &p.cfg.train.ppo, p.cfg.train.seed)?;
            let out = out.unwrap_or_else(|| p.cfg.output_dir.join("ppo.json"));
            agent.save(&out)?;
            let curve = p.cfg.output_dir.join("reward_curve.csv");
            write_reward_curve(&report.curve, &curve)?;
            println!(
                "{}",
                serde_json::json!({
                    "checkpoint": out,
                    "reward_curve": curve,
                    "rollout_iterations": report.rollout_iterations,
                    "final_mean_reward": report.curve.last().map(|c| c.mean_reward),
                })
            );
        }
        Cmd::Eval { config, method, checkpoint } => {
            let Some(m) = Method::from_key(&method) else {
                bail!("unknown method `{method}`");
            };
            let cfg = load_config(&config)?;
            let agent = match &checkpoint {
                Some(c) => Some(load_agent(c)?),
                None if m.is_learned() => bail!("method `{method}` needs --checkpoint"),
                None => None,
            };
            let shape = match &agent {
                Some(a) => a.clone(),
                None => cfg.new_agent()?,
            };
            let p = prepare(cfg, &shape)?;
            let r = evaluate(m, &p.test, &p.cfg.world, agent.as_ref())?;
            write_json(&p.cfg.output_dir.join(format!("eval_{}.json", m.key())), &r)?;
            let s = Summary {
                method: m.key(),
                quality_pct: r.quality_pct,
                leakage_pct: r.leakage_pct,
                catastrophic_pct: r.catastrophic_pct,
                mean_reward: r.mean_reward,
                lambda: r.lambda,
                queries: r.queries.len(),
            };
            println!("{}", serde_json::to_string(&s)?);
        }
        Cmd::SweepLambda { config, lambdas, init, out } => {
            let cfg = load_config(&config)?;
            let mut warm = match &init {
                Some(c) => load_agent(c)?,
                None => cfg.new_agent()?,
            };
            let p = prepare(cfg, &warm)?;
            if init.is_none() {
                sft_warmup(&mut warm, &p.train, &p.cfg.train.sft, p.cfg.train.seed)?;
            }
            let rows = sweep_lambda(&lambdas, &warm, &p.train, &p.test, &p.cfg.world, &p.cfg.train)?;
            let out = out.unwrap_or_else(|| p.cfg.output_dir.join("lambda_sweep.csv"));
            write_sweep_csv(&rows, &out)?;
            println!("{}", serde_json::to_string(&rows)?);
        }
        Cmd::Route { text, checkpoint, rules, gateway_config, dry_run } => {
            let rt = tokio::runtime::Runtime::new()?;
            let result = match gateway_config {
                Some(path) => {
                    let mut gcfg = GatewayConfig::load(&path)?;
                    if let Some(c) = checkpoint {
                        gcfg.checkpoint = c;
                    }
                    if rules.is_some() {
                        gcfg.detector_rules = rules;
                    }
                    let gw = Gateway::from_config(gcfg, HttpTransport::new())?;
                    rt.block_on(gw.route(&text, dry_run))?
                }
                None => {
                    let agent = load_agent(checkpoint.as_deref().expect("clap requires it"))?;
                    let detector = match rules {
                        Some(p) => DetectorRuleSet::load(&p)?,
                        None => DetectorRuleSet::default_rules(),
                    };
                    let gcfg = offline_config();
                    let gw = Gateway::new(agent, detector, gcfg, HttpTransport::new());
                    rt.block_on(gw.route(&text, true))?
                }
            };
            println!("{}", serde_json::to_string_pretty(&result)?);
        }
        Cmd::Serve { config } => {
            let gcfg = GatewayConfig::load(&config)?;
            let listen = gcfg.listen.clone();
            let gw = Gateway::from_config(gcfg, HttpTransport::new())?;
            eprintln!("listening on {listen}");
            tokio::runtime::Runtime::new()?.block_on(serve(gw))?;
        }
    }
    Ok(())
}

/// Placeholder endpoints for dry runs, which never call them.
fn offline_config() -> GatewayConfig {
    let ep = |role| privpad_gateway::EndpointConfig {
        role,
        base_url: "http://unused.invalid".into(),
        model: "none".into(),
        auth_token_env: None,
        timeout_ms: 1,
        max_retries: 0,
    };
    GatewayConfig {
        checkpoint: PathBuf::new(),
        detector_rules: None,
        local: ep(privpad_gateway::Role::Local),
        remote: ep(privpad_gateway::Role::Remote),
        listen: String::new(),
        chunk_system_prompt: String::new(),
        composition_template: String::new(),
    }
}

fn main() {
    if let Err(e) = run(Cli::parse()) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
