use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{Context, Result};
use serde_json::json;

use probchain::chain;
use probchain::cpoisson;
use probchain::hmm::{self, DiscreteHmm, SequenceDataset};
use probchain::lexicon::{self, Lexicon};
use probchain::rng::NoiseFamily;
use probchain::tree;

use crate::cli::{
    Cli, Command, CpoissArgs, DemoSet, ErrpropArgs, HmmflatArgs, LexnnArgs, NoiseArg, Scale,
    SeedArg, TreeclassArgs,
};
use crate::config::ConfigFile;
use crate::manifest::Manifest;

pub const DEFAULT_SEED: u32 = 42;

/// Globals shared by every subcommand, resolved from flags, config file
/// and defaults.
struct Resolved {
    seed_requested: String,
    seed: u32,
    scale: Scale,
    jobs: Option<usize>,
    outdir: PathBuf,
    config: ConfigFile,
}

fn resolve_globals(cli: &Cli, allowed: &[&str]) -> Result<Resolved> {
    let config = match &cli.config {
        Some(path) => ConfigFile::load(path, allowed)?,
        None => ConfigFile::default(),
    };
    let seed_arg = match cli.seed {
        Some(arg) => arg,
        None => match config.raw("seed") {
            Some(raw) => crate::cli::parse_seed(raw)
                .map_err(crate::config::UsageError)
                .map_err(anyhow::Error::from)?,
            None => SeedArg::Fixed(DEFAULT_SEED),
        },
    };
    let (seed_requested, seed) = match seed_arg {
        SeedArg::Fixed(s) => (s.to_string(), s),
        SeedArg::TimeMicroseconds => {
            let micros = SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .unwrap_or_default()
                .subsec_micros();
            ("time-microseconds".to_string(), micros)
        }
    };
    let scale = match cli.scale {
        Some(s) => s,
        None => match config.raw("scale") {
            Some("paper") => Scale::Paper,
            Some("desk") => Scale::Desk,
            Some(other) => {
                return Err(crate::config::UsageError(format!(
                    "config key scale: expected paper or desk, got {other:?}"
                ))
                .into())
            }
            None => Scale::Desk,
        },
    };
    let jobs = config.get("jobs", cli.jobs)?;
    let outdir = match &cli.outdir {
        Some(d) => d.clone(),
        None => match config.raw("outdir") {
            Some(d) => PathBuf::from(d),
            None => std::env::var_os("PROBCHAIN_OUTDIR")
                .map(PathBuf::from)
                .unwrap_or_else(|| PathBuf::from(".")),
        },
    };
    Ok(Resolved {
        seed_requested,
        seed,
        scale,
        jobs,
        outdir,
        config,
    })
}

fn scale_label(scale: Scale) -> &'static str {
    match scale {
        Scale::Paper => "paper",
        Scale::Desk => "desk",
    }
}

fn install_pool(jobs: Option<usize>) -> Result<()> {
    if let Some(n) = jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring worker pool")?;
    }
    Ok(())
}

fn output_base(command: &str, seed: u32) -> (String, u128) {
    let ms = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .unwrap_or_default()
        .as_millis();
    (format!("{command}-{seed}-{ms}"), ms)
}

fn write_artifact(dir: &Path, name: &str, body: &str) -> Result<PathBuf> {
    std::fs::create_dir_all(dir)
        .with_context(|| format!("creating output directory {}", dir.display()))?;
    let path = dir.join(name);
    std::fs::write(&path, body).with_context(|| format!("writing {}", path.display()))?;
    println!("wrote {}", path.display());
    Ok(path)
}

pub fn run(cli: Cli) -> Result<()> {
    match &cli.command {
        Command::Errprop(args) => run_errprop(&cli, args),
        Command::Cpoiss(args) => run_cpoiss(&cli, args),
        Command::Treeclass(args) => run_treeclass(&cli, args),
        Command::Lexnn(args) => run_lexnn(&cli, args),
        Command::Hmmflat(args) => run_hmmflat(&cli, args),
    }
}

fn finish_manifest(
    globals: &Resolved,
    command: &str,
    base: &str,
    ms: u128,
    parameters: serde_json::Value,
    outputs: &[PathBuf],
) -> Result<()> {
    let manifest = Manifest {
        command: command.to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        seed_requested: globals.seed_requested.clone(),
        seed: globals.seed,
        scale: scale_label(globals.scale).to_string(),
        jobs: globals.jobs,
        parameters,
        outputs: outputs
            .iter()
            .map(|p| p.file_name().unwrap().to_string_lossy().into_owned())
            .collect(),
        unix_time_ms: ms,
    };
    let path = manifest.write(&globals.outdir, base)?;
    println!("wrote {}", path.display());
    Ok(())
}

fn run_errprop(cli: &Cli, args: &ErrpropArgs) -> Result<()> {
    let allowed = [
        "noise",
        "truncated",
        "samples",
        "repetitions",
        "chain-lengths",
        "amplitude-step",
        "amplitude-count",
    ];
    let globals = resolve_globals(cli, &allowed)?;
    install_pool(globals.jobs)?;

    let family = match globals.config.get(
        "noise",
        args.noise.map(|n| match n {
            NoiseArg::Uniform => "uniform".to_string(),
            NoiseArg::Gaussian => "gaussian".to_string(),
        }),
    )? {
        Some(ref s) if s == "uniform" => NoiseFamily::Uniform,
        Some(ref s) if s == "gaussian" => NoiseFamily::Gaussian,
        Some(other) => {
            return Err(crate::config::UsageError(format!(
                "noise: expected uniform or gaussian, got {other:?}"
            ))
            .into())
        }
        None => NoiseFamily::Uniform,
    };
    let truncated = if args.truncated {
        true
    } else {
        globals
            .config
            .get::<bool>("truncated", None)?
            .unwrap_or(false)
    };
    let (default_samples, default_reps) = match globals.scale {
        Scale::Paper => (100_000, 20),
        Scale::Desk => (10_000, 5),
    };
    let samples = globals
        .config
        .get("samples", args.samples)?
        .unwrap_or(default_samples);
    let repetitions = globals
        .config
        .get("repetitions", args.repetitions)?
        .unwrap_or(default_reps);
    let chain_lengths = globals
        .config
        .get_list("chain-lengths", args.chain_lengths.clone())?;
    let amplitude_step = globals
        .config
        .get("amplitude-step", args.amplitude_step)?
        .unwrap_or(0.01);
    let amplitude_count = globals
        .config
        .get("amplitude-count", args.amplitude_count)?
        .unwrap_or(100);

    let (base, ms) = output_base("errprop", globals.seed);
    let mut outputs = Vec::new();

    match &chain_lengths {
        None => {
            // standard table grid
            let table =
                chain::error_table(family, truncated, samples, repetitions, globals.seed);
            outputs.push(write_artifact(
                &globals.outdir,
                &format!("{base}.csv"),
                &table.to_csv(),
            )?);
            outputs.push(write_artifact(
                &globals.outdir,
                &format!("{base}.txt"),
                &table.to_text(),
            )?);
            for (j, &n) in table.chain_lengths.iter().enumerate() {
                outputs.push(write_artifact(
                    &globals.outdir,
                    &format!("{base}-n{n}.dat"),
                    &table.plot_column(j),
                )?);
            }
        }
        Some(lengths) => {
            // amplitude curves at explicit chain lengths
            let noise = probchain::rng::NoiseSpec::new(family, truncated, 0.0)
                .expect("zero amplitude is valid");
            let mut csv = String::from("family,truncated,e,n,mean_rel_error,stderr\n");
            for &n in lengths {
                let spec = chain::ChainSpec {
                    n,
                    noise,
                    samples,
                    repetitions,
                    amplitude_step,
                    amplitude_count,
                };
                let curve = chain::relative_error_mc(&spec, globals.seed);
                let mut plot = String::new();
                for p in &curve.points {
                    csv.push_str(&format!(
                        "{},{},{},{},{},{}\n",
                        family.label(),
                        truncated,
                        p.amplitude,
                        n,
                        p.mean,
                        p.stderr
                    ));
                    plot.push_str(&format!("{} {}\n", p.amplitude, p.mean));
                }
                outputs.push(write_artifact(
                    &globals.outdir,
                    &format!("{base}-n{n}.dat"),
                    &plot,
                )?);
            }
            outputs.push(write_artifact(&globals.outdir, &format!("{base}.csv"), &csv)?);
        }
    }

    let parameters = json!({
        "noise": family.label(),
        "truncated": truncated,
        "samples": samples,
        "repetitions": repetitions,
        "chain_lengths": chain_lengths,
        "amplitude_step": amplitude_step,
        "amplitude_count": amplitude_count,
    });
    finish_manifest(&globals, "errprop", &base, ms, parameters, &outputs)
}

fn run_cpoiss(cli: &Cli, args: &CpoissArgs) -> Result<()> {
    let allowed = ["lambdas", "pmin", "pmax", "samples"];
    let globals = resolve_globals(cli, &allowed)?;
    install_pool(globals.jobs)?;

    let lambdas = globals
        .config
        .get_list("lambdas", args.lambdas.clone())?
        .unwrap_or_else(|| vec![11, 21, 31, 41]);
    let pmin = globals.config.get("pmin", args.pmin)?.unwrap_or(0.0);
    let pmax = globals.config.get("pmax", args.pmax)?.unwrap_or(0.84);
    let default_samples = match globals.scale {
        Scale::Paper => 1_000_000,
        Scale::Desk => 100_000,
    };
    let samples = globals
        .config
        .get("samples", args.samples)?
        .unwrap_or(default_samples);

    let (base, ms) = output_base("cpoiss", globals.seed);
    let mut outputs = Vec::new();

    let mut sumlogs = Vec::new();
    for (i, &n) in lambdas.iter().enumerate() {
        let mut rng = probchain::rng::Rand48::derive(globals.seed, (2 << 56) | i as u64);
        sumlogs.push(cpoisson::sample_sum_log(n, pmin, pmax, samples, &mut rng)?);
    }
    let lambda_values: Vec<f64> = lambdas.iter().map(|&n| n as f64).collect();
    let (shared_scale, fits) = cpoisson::fit_shared_scale(&sumlogs, &lambda_values)?;

    let mut summary = String::from("lambda,x_scale,x_shift,norm,chi2_red,bins_used\n");
    for ((sample, fit), &n) in sumlogs.iter().zip(&fits).zip(&lambdas) {
        summary.push_str(&format!(
            "{},{},{},{},{},{}\n",
            n, fit.model.x_scale, fit.model.x_shift, fit.model.norm, fit.chi2_red, fit.bins_used
        ));
        outputs.push(write_artifact(
            &globals.outdir,
            &format!("{base}-lambda{n}.csv"),
            &cpoisson::overlay_csv(sample, fit),
        )?);
    }
    outputs.push(write_artifact(
        &globals.outdir,
        &format!("{base}-fit.csv"),
        &summary,
    )?);

    let parameters = json!({
        "lambdas": lambdas,
        "pmin": pmin,
        "pmax": pmax,
        "samples": samples,
        "shared_x_scale": shared_scale,
    });
    finish_manifest(&globals, "cpoiss", &base, ms, parameters, &outputs)
}

fn run_treeclass(cli: &Cli, args: &TreeclassArgs) -> Result<()> {
    let allowed = ["depths", "breadths", "eps", "models", "trials", "budget"];
    let globals = resolve_globals(cli, &allowed)?;
    install_pool(globals.jobs)?;

    let depths = globals
        .config
        .get_list("depths", args.depths.clone())?
        .unwrap_or_else(|| vec![3, 5, 7, 9]);
    let breadths = globals
        .config
        .get_list("breadths", args.breadths.clone())?
        .unwrap_or_else(|| vec![2, 3, 4, 5, 6]);
    let eps = globals
        .config
        .get_list("eps", args.eps.clone())?
        .unwrap_or_else(|| vec![0.01, 0.02, 0.04, 0.08, 0.16, 0.32]);
    let (default_models, default_trials) = match globals.scale {
        Scale::Paper => (100, 400),
        Scale::Desk => (25, 100),
    };
    let models = globals
        .config
        .get("models", args.models)?
        .unwrap_or(default_models);
    let trials = globals
        .config
        .get("trials", args.trials)?
        .unwrap_or(default_trials);
    let budget = globals
        .config
        .get("budget", args.budget)?
        .unwrap_or(tree::DEFAULT_PATH_BUDGET);

    let sweep = tree::sweep(&depths, &breadths, &eps, models, trials, budget, globals.seed);

    let (base, ms) = output_base("treeclass", globals.seed);
    let mut outputs = Vec::new();
    outputs.push(write_artifact(
        &globals.outdir,
        &format!("{base}.csv"),
        &sweep.to_csv(),
    )?);
    outputs.push(write_artifact(
        &globals.outdir,
        &format!("{base}.txt"),
        &sweep.to_text(),
    )?);

    let parameters = json!({
        "depths": depths,
        "breadths": breadths,
        "eps": eps,
        "models": models,
        "trials": trials,
        "budget": budget,
        "skipped": sweep.skipped,
    });
    finish_manifest(&globals, "treeclass", &base, ms, parameters, &outputs)
}

fn run_lexnn(cli: &Cli, args: &LexnnArgs) -> Result<()> {
    let allowed = ["lexicon", "sample", "repeats", "noise"];
    let globals = resolve_globals(cli, &allowed)?;
    install_pool(globals.jobs)?;

    let (default_sample, default_repeats) = match globals.scale {
        Scale::Paper => (20_000, 6),
        Scale::Desk => (2_000, 3),
    };
    let sample = globals
        .config
        .get("sample", args.sample)?
        .unwrap_or(default_sample);
    let repeats = globals
        .config
        .get("repeats", args.repeats)?
        .unwrap_or(default_repeats);
    let noise = globals.config.get("noise", args.noise)?.unwrap_or(0.0001);

    let text = std::fs::read_to_string(&args.lexicon)
        .with_context(|| format!("reading lexicon {}", args.lexicon.display()))?;
    let name = args
        .lexicon
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "lexicon".to_string());
    let lexicon = Lexicon::parse(&name, &text)?;

    let result = lexicon::run_experiment(&lexicon, repeats, sample, noise, globals.seed)?;

    let (base, ms) = output_base("lexnn", globals.seed);
    let outputs = vec![write_artifact(
        &globals.outdir,
        &format!("{base}.csv"),
        &result.to_csv(),
    )?];
    println!(
        "{}: {} words, accuracy {:.2}% (sd {:.2}), oracle {:.2}%",
        result.lexicon_name,
        result.lexicon_size,
        result.mean_accuracy_pct,
        result.sd_pct,
        result.oracle_pct
    );

    let parameters = json!({
        "lexicon": args.lexicon.display().to_string(),
        "lexicon_size": lexicon.len(),
        "sample": sample,
        "repeats": repeats,
        "noise": noise,
    });
    finish_manifest(&globals, "lexnn", &base, ms, parameters, &outputs)
}

/// Two deterministic three-symbol cycles, 0->1->2 and 0->2->1. Symbol
/// frequencies are identical, only the order differs, so flattening the
/// transitions removes every distinguishing bit.
fn demo_cycles() -> Vec<DiscreteHmm> {
    let eye = vec![
        vec![1.0, 0.0, 0.0],
        vec![0.0, 1.0, 0.0],
        vec![0.0, 0.0, 1.0],
    ];
    let third = 1.0 / 3.0;
    let forward = vec![
        vec![0.0, 1.0, 0.0],
        vec![0.0, 0.0, 1.0],
        vec![1.0, 0.0, 0.0],
    ];
    let backward = vec![
        vec![0.0, 0.0, 1.0],
        vec![1.0, 0.0, 0.0],
        vec![0.0, 1.0, 0.0],
    ];
    vec![
        DiscreteHmm::new(forward, eye.clone(), vec![third; 3]).unwrap(),
        DiscreteHmm::new(backward, eye, vec![third; 3]).unwrap(),
    ]
}

/// Uniform transitions with class information only in the emissions;
/// flattening is a no-op.
fn demo_emissions() -> Vec<DiscreteHmm> {
    let third = 1.0 / 3.0;
    let uniform = vec![vec![third; 3]; 3];
    let b0 = vec![
        vec![0.7, 0.2, 0.1],
        vec![0.6, 0.3, 0.1],
        vec![0.5, 0.4, 0.1],
    ];
    let b1 = vec![
        vec![0.1, 0.2, 0.7],
        vec![0.1, 0.3, 0.6],
        vec![0.1, 0.4, 0.5],
    ];
    vec![
        DiscreteHmm::new(uniform.clone(), b0, vec![third; 3]).unwrap(),
        DiscreteHmm::new(uniform, b1, vec![third; 3]).unwrap(),
    ]
}

fn run_hmmflat(cli: &Cli, args: &HmmflatArgs) -> Result<()> {
    let allowed = ["models", "demo", "sequences", "length"];
    let globals = resolve_globals(cli, &allowed)?;
    install_pool(globals.jobs)?;

    let default_sequences = match globals.scale {
        Scale::Paper => 10_000,
        Scale::Desk => 1_000,
    };
    let sequences = globals
        .config
        .get("sequences", args.sequences)?
        .unwrap_or(default_sequences);
    let length = globals.config.get("length", args.length)?.unwrap_or(20);

    let (models, set_name) = match &args.models {
        Some(paths) => {
            let mut models = Vec::new();
            for path in paths {
                let text = std::fs::read_to_string(path)
                    .with_context(|| format!("reading model {}", path.display()))?;
                models.push(DiscreteHmm::parse(&text)?);
            }
            (models, "files".to_string())
        }
        None => {
            let demo = match globals.config.get(
                "demo",
                args.demo.map(|d| {
                    match d {
                        DemoSet::Cycles => "cycles",
                        DemoSet::Emissions => "emissions",
                    }
                    .to_string()
                }),
            )? {
                Some(ref s) if s == "cycles" => DemoSet::Cycles,
                Some(ref s) if s == "emissions" => DemoSet::Emissions,
                Some(other) => {
                    return Err(crate::config::UsageError(format!(
                        "demo: expected cycles or emissions, got {other:?}"
                    ))
                    .into())
                }
                None => DemoSet::Cycles,
            };
            match demo {
                DemoSet::Cycles => (demo_cycles(), "cycles".to_string()),
                DemoSet::Emissions => (demo_emissions(), "emissions".to_string()),
            }
        }
    };

    let data = SequenceDataset::from_models(&models, length, sequences, globals.seed);
    let report = hmm::markov_necessity_test(&models, &data)?;

    let (base, ms) = output_base("hmmflat", globals.seed);
    let outputs = vec![write_artifact(
        &globals.outdir,
        &format!("{base}.csv"),
        &report.to_csv(&set_name),
    )?];
    println!(
        "{set_name}: accuracy {:.4} -> {:.4} after flattening (drop {:.4})",
        report.accuracy_true,
        report.accuracy_flat,
        report.drop()
    );

    let parameters = json!({
        "models": args.models.as_ref().map(|p| p.iter().map(|x| x.display().to_string()).collect::<Vec<_>>()),
        "demo": set_name,
        "sequences": sequences,
        "length": length,
    });
    finish_manifest(&globals, "hmmflat", &base, ms, parameters, &outputs)
}
