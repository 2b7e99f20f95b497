use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use econgrasp::compiler::Graspability;
use econgrasp::config::{parse_kind, PipelineConfig};
use econgrasp::eval::TopKRule;
use econgrasp::geometry::ViewSphere;
use econgrasp::matching::SampleStrategy;
use econgrasp::micro::{run_micro, MicroConfig};
use econgrasp::pipeline::{
    analyze_dataset, compile_dataset, eval_dataset, gradcheck_config, gradcheck_report,
    gradient_checks, load_labeled, match_dataset, match_report, run_pipeline, synth_dataset,
    Sampling,
};
use econgrasp::synth::SceneKind;

#[derive(Parser)]
#[command(name = "econgrasp", version, about = "Economic grasp label pipeline")]
struct Cli {
    /// key=value config file; unset keys keep their defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; results do not depend on it.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate scenes and write dense labels.
    Synth {
        #[arg(long)]
        output: PathBuf,
        #[arg(long)]
        scenes: Option<usize>,
        #[arg(long)]
        views: Option<usize>,
        #[arg(long, value_parser = parse_kind)]
        kind: Option<SceneKind>,
    },
    /// Compile dense labels into economic labels.
    Compile {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        #[arg(long)]
        threshold_mu: Option<f64>,
        #[arg(long)]
        views: Option<usize>,
    },
    /// Label ambiguity statistics of a dense dataset.
    Analyze {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        threshold_mu: Option<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Match sampled points to economic labels and report the mask.
    Match {
        /// Dense dataset holding the scenes.
        #[arg(long)]
        input: PathBuf,
        /// Economic label directory.
        #[arg(long)]
        labels: PathBuf,
        #[arg(long)]
        radius: Option<f64>,
        #[arg(long)]
        samples: Option<usize>,
        #[arg(long)]
        strategy: Option<SampleStrategy>,
    },
    /// Gradient checks and the plate micro-training run.
    HeadCheck {
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long)]
        rate: Option<f64>,
    },
    /// AP of a predictions file over a dense dataset's scenes.
    Eval {
        #[arg(long)]
        scenes: PathBuf,
        /// Lines of `scene_id x y z v a d w s`.
        #[arg(long)]
        predictions: PathBuf,
        #[arg(long)]
        topk_rule: Option<TopKRule>,
        #[arg(long)]
        views: Option<usize>,
    },
    /// The whole pipeline into the configured output directory.
    Run {
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

fn load_config(cli: &Cli) -> Result<PipelineConfig> {
    let mut cfg = match &cli.config {
        Some(path) => {
            let text =
                fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            PipelineConfig::parse(&text).with_context(|| format!("in {}", path.display()))?
        }
        None => PipelineConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn distinct(input: &Path, output: &Path) -> Result<()> {
    let canon = |p: &Path| fs::canonicalize(p).unwrap_or_else(|_| p.to_path_buf());
    if canon(input) == canon(output) {
        bail!("input and output are the same path: {}", input.display());
    }
    Ok(())
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            bail!("--jobs must be positive");
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .context("starting the worker pool")?;
    }
    let mut cfg = load_config(&cli)?;
    match cli.command {
        Command::Synth {
            output,
            scenes,
            views,
            kind,
        } => {
            cfg.scenes = scenes.unwrap_or(cfg.scenes);
            cfg.n_views = views.unwrap_or(cfg.n_views);
            cfg.scene_kind = kind.unwrap_or(cfg.scene_kind);
            cfg.validate()?;
            let sphere = ViewSphere::generate(cfg.n_views)?;
            let start = Instant::now();
            let stats = synth_dataset(
                &cfg.scene_config(),
                cfg.scenes,
                cfg.seed,
                &sphere,
                &cfg.gripper(),
                &output,
            )?;
            print!("{}", stats.to_key_values());
            eprintln!("synth took {:.1?}", start.elapsed());
        }
        Command::Compile {
            input,
            output,
            threshold_mu,
            views,
        } => {
            cfg.threshold_mu = threshold_mu.unwrap_or(cfg.threshold_mu);
            cfg.n_views = views.unwrap_or(cfg.n_views);
            cfg.validate()?;
            distinct(&input, &output)?;
            let sphere = ViewSphere::generate(cfg.n_views)?;
            let start = Instant::now();
            let stats = compile_dataset(
                &input,
                &output,
                &sphere,
                &cfg.gripper(),
                &Graspability::new(cfg.threshold_mu),
            )?;
            let echo = cfg.echo();
            let txt = output.join("compile_stats.txt");
            let kv = output.join("compile_stats.kv");
            fs::write(&txt, format!("{echo}{}", stats.to_table()))
                .with_context(|| format!("writing {}", txt.display()))?;
            fs::write(&kv, format!("{echo}{}", stats.to_key_values()))
                .with_context(|| format!("writing {}", kv.display()))?;
            print!("{}", stats.to_table());
            eprintln!("compile took {:.1?}", start.elapsed());
            if !stats.errors.is_empty() {
                bail!("{} scenes failed to compile", stats.errors.len());
            }
        }
        Command::Analyze {
            input,
            threshold_mu,
            out,
        } => {
            cfg.threshold_mu = threshold_mu.unwrap_or(cfg.threshold_mu);
            cfg.validate()?;
            distinct(&input, &out)?;
            let report =
                analyze_dataset(&input, &cfg.gripper(), &Graspability::new(cfg.threshold_mu))?;
            fs::write(
                &out,
                format!(
                    "{}{}{}",
                    cfg.echo(),
                    report.to_table(),
                    report.to_key_values()
                ),
            )
            .with_context(|| format!("writing {}", out.display()))?;
            print!("{}", report.to_table());
        }
        Command::Match {
            input,
            labels,
            radius,
            samples,
            strategy,
        } => {
            cfg.match_radius = radius.unwrap_or(cfg.match_radius);
            cfg.samples = samples.unwrap_or(cfg.samples);
            cfg.sample_strategy = strategy.unwrap_or(cfg.sample_strategy);
            cfg.validate()?;
            let scenes = load_labeled(&input, &labels)?;
            let sampling = Sampling {
                count: cfg.samples,
                strategy: cfg.sample_strategy,
                seed: cfg.seed,
            };
            let summaries = match_dataset(&scenes, &sampling, cfg.match_radius, 10)?;
            let names: Vec<String> = scenes.into_iter().map(|s| s.name).collect();
            print!("{}", match_report(&names, &summaries));
        }
        Command::HeadCheck { steps, rate } => {
            let micro = MicroConfig {
                steps: steps.unwrap_or(MicroConfig::default().steps),
                rate: rate.unwrap_or(MicroConfig::default().rate),
                seed: cfg.seed,
                ..MicroConfig::default()
            };
            cfg.validate()?;
            if !(micro.rate > 0.0 && micro.rate.is_finite()) {
                bail!("--rate must be positive");
            }
            let checks = gradient_checks(
                &gradcheck_config(cfg.n_angles, cfg.n_depths),
                cfg.seed,
                cfg.gradcheck_seeds,
            )?;
            print!("{}", gradcheck_report(&checks));
            let start = Instant::now();
            let (report, _) = run_micro(&micro, &cfg.gripper())?;
            let verdict = |ok: bool| if ok { "PASS" } else { "FAIL" };
            println!(
                "micro loss_reduction={:.4} (>= 0.5) {}",
                report.loss_reduction,
                verdict(report.loss_reduction >= 0.5)
            );
            println!(
                "micro top1_success={:.4} over {} held-out scenes (>= 0.8) {}",
                report.success_rate(),
                report.held_out.len(),
                verdict(report.success_rate() >= 0.8)
            );
            eprintln!("micro training took {:.1?}", start.elapsed());
        }
        Command::Eval {
            scenes,
            predictions,
            topk_rule,
            views,
        } => {
            cfg.topk_rule = topk_rule.unwrap_or(cfg.topk_rule);
            cfg.n_views = views.unwrap_or(cfg.n_views);
            cfg.validate()?;
            let text = fs::read_to_string(&predictions)
                .with_context(|| format!("reading {}", predictions.display()))?;
            let result = eval_dataset(
                &scenes,
                &text,
                &ViewSphere::generate(cfg.n_views)?,
                &cfg.gripper(),
                cfg.topk_rule,
            )?;
            print!("{}", result.to_table());
        }
        Command::Run { output } => {
            if let Some(out) = output {
                cfg.output = out;
            }
            let start = Instant::now();
            let summary = run_pipeline(&cfg)?;
            print!("{}", summary.to_text());
            eprintln!(
                "pipeline took {:.1?}; artifacts in {}",
                start.elapsed(),
                cfg.output.display()
            );
        }
    }
    Ok(())
}
