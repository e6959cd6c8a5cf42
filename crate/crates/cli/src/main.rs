use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use gbx_core::checkpoint;
use gbx_core::interp::Location;
use gbx_core::metrics::{evaluate, EvalOptions};
use gbx_core::net::{
    accuracy, record, train_with, ArchitectureSpec, EpochLog, Network, Sample, TemplateConfig, TrainConfig,
};
use gbx_core::ops::{Label, TaskLossKind};
use gbx_core::pnm::encode_pgm;
use gbx_core::synth::{default_archetypes, generate_range, read_archive, write_archive, GeneratorConfig, SyntheticScene};
use gbx_core::verify::{self, VerifyOptions};
use gbx_core::{viz, Error};

mod config;

const CONFIG_ECHO: &str = "config.json";

#[derive(Parser)]
#[command(name = "gbx", version, about = "Interpretable convnets on synthetic part scenes")]
struct Cli {
    /// TOML file with [gen], [train] and [eval] sections; flags win.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Print per-epoch progress to stderr.
    #[arg(short, long, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Render a scene archive.
    Gen(GenArgs),
    /// Train a network on an archive.
    Train(TrainArgs),
    /// Compute interpretability metrics for a checkpoint.
    Eval(EvalArgs),
    /// Run the numerical self-checks.
    Verify(VerifyArgs),
    /// Export map, template and mask renderings.
    Viz(VizArgs),
}

#[derive(Args)]
struct GenArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    count: Option<usize>,
    /// Index of the first scene in the seeded stream.
    #[arg(long)]
    start: Option<usize>,
    #[arg(long)]
    categories: Option<usize>,
    #[arg(long)]
    jitter: Option<i32>,
    #[arg(long)]
    clutter: Option<usize>,
    /// Interleave negative scenes (every (C+1)-th scene).
    #[arg(long)]
    negatives: bool,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    momentum: Option<f64>,
    #[arg(long)]
    lambda_k: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// logistic or softmax
    #[arg(long)]
    loss: Option<TaskLossKind>,
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    /// Keep the mask layer but never apply the filter loss.
    #[arg(long)]
    no_filter_loss: bool,
    /// Replace every mask layer with the identity.
    #[arg(long)]
    no_mask: bool,
    /// Number of interpretable layers (1 or 2).
    #[arg(long)]
    interp_layers: Option<usize>,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    layer: Option<usize>,
    #[arg(long)]
    top_m: Option<usize>,
    #[arg(long)]
    rf_radius: Option<f64>,
}

#[derive(Args)]
struct VerifyArgs {
    /// Negate the analytic filter-loss gradient (the suite must then fail).
    #[arg(long, hide = true)]
    flip_gradient_sign: bool,
}

#[derive(Args)]
struct VizArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Comma-separated filter ids.
    #[arg(long, value_delimiter = ',', required = true)]
    filters: Vec<usize>,
    /// Number of scenes rendered per filter.
    #[arg(long, default_value_t = 4)]
    images: usize,
    #[arg(long, default_value_t = 0)]
    layer: usize,
}

/// A failure and the exit code it maps to.
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn usage(message: impl Into<String>) -> Self {
        Self {
            code: 2,
            message: message.into(),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = if matches!(e, Error::Diverged(_)) { 3 } else { 2 };
        Self {
            code,
            message: e.to_string(),
        }
    }
}

type Outcome = Result<(), Failure>;

fn threads() -> Result<usize, Failure> {
    match std::env::var("GBX_THREADS") {
        Err(_) => Ok(1),
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n >= 1 => Ok(n),
            _ => Err(Failure::usage(format!("GBX_THREADS must be a positive integer, got {v:?}"))),
        },
    }
}

fn create_dir(dir: &Path) -> Outcome {
    std::fs::create_dir_all(dir).map_err(|e| Failure::usage(format!("cannot create {}: {e}", dir.display())))
}

fn write(path: &Path, bytes: impl AsRef<[u8]>) -> Outcome {
    std::fs::write(path, bytes).map_err(|e| Failure::usage(format!("cannot write {}: {e}", path.display())))
}

fn echo_config(dir: &Path, value: serde_json::Value) -> Outcome {
    write(&dir.join(CONFIG_ECHO), serde_json::to_string_pretty(&value).expect("json") + "\n")
}

fn load_archive(dir: &Path) -> Result<Vec<SyntheticScene>, Failure> {
    if !dir.is_dir() {
        return Err(Failure::usage(format!("archive {} does not exist", dir.display())));
    }
    let scenes = read_archive(dir)?;
    if scenes.is_empty() {
        return Err(Failure::usage(format!("archive {} is empty", dir.display())));
    }
    Ok(scenes)
}

fn load_checkpoint(path: &Path) -> Result<Network, Failure> {
    if !path.is_file() {
        return Err(Failure::usage(format!("checkpoint {} does not exist", path.display())));
    }
    Ok(checkpoint::load(path)?.0)
}

fn check_compatible(net: &Network, scenes: &[SyntheticScene]) -> Outcome {
    let [_, h, w] = net.spec().input;
    if let Some(s) = scenes.iter().find(|s| s.size != h || s.size != w) {
        return Err(Failure::usage(format!(
            "archive scenes are {0}x{0} but the network expects {h}x{w}",
            s.size
        )));
    }
    if let Some(c) = scenes.iter().filter_map(|s| s.category).max() {
        if c >= net.spec().num_categories {
            return Err(Failure::usage(format!(
                "archive has category {c} but the network has {} outputs",
                net.spec().num_categories
            )));
        }
    }
    Ok(())
}

fn cmd_gen(args: GenArgs, file: &config::GenSection) -> Outcome {
    let count = args.count.or(file.count).unwrap_or(1200);
    if count == 0 {
        return Err(Failure::usage("--count must be at least 1"));
    }
    let categories = args.categories.or(file.categories).unwrap_or(6);
    let all = default_archetypes();
    if categories == 0 || categories > all.len() {
        return Err(Failure::usage(format!("--categories must lie in 1..={}", all.len())));
    }
    let defaults = GeneratorConfig::default();
    let config = GeneratorConfig {
        seed: args.seed.or(file.seed).unwrap_or(0),
        categories: all[..categories].to_vec(),
        jitter: args.jitter.or(file.jitter).unwrap_or(defaults.jitter),
        clutter: args.clutter.or(file.clutter).unwrap_or(defaults.clutter),
        negatives: args.negatives || file.negatives.unwrap_or(false),
        ..defaults
    };
    let start = args.start.or(file.start).unwrap_or(0);
    config.validate().map_err(|e| Failure::usage(e.to_string()))?;
    let scenes = generate_range(&config, start, count)?;
    let summary = write_archive(&args.out, &scenes)?;
    echo_config(
        &args.out,
        json!({
            "command": "gen",
            "seed": config.seed,
            "count": count,
            "start": start,
            "categories": categories,
            "jitter": config.jitter,
            "clutter": config.clutter,
            "negatives": config.negatives,
            "size": config.size,
        }),
    )?;
    let per: Vec<String> = summary.per_category.iter().map(|(c, n)| format!("{c}:{n}")).collect();
    println!(
        "wrote {} scenes to {} ({} negative; per category {})",
        summary.count,
        args.out.display(),
        summary.negatives,
        per.join(" ")
    );
    Ok(())
}

fn samples(scenes: &[SyntheticScene]) -> Vec<Sample> {
    scenes
        .iter()
        .map(|s| Sample {
            image: s.image(),
            label: s.category.map_or(Label::Negative, Label::Category),
        })
        .collect()
}

fn cmd_train(args: TrainArgs, file: &config::TrainSection, verbose: bool) -> Outcome {
    let threads = threads()?;
    let scenes = load_archive(&args.data)?;
    let loss = match (args.loss, &file.loss) {
        (Some(k), _) => k,
        (None, Some(s)) => s.parse::<TaskLossKind>().map_err(|e| Failure::usage(e.to_string()))?,
        (None, None) => TaskLossKind::SoftmaxMulticlass,
    };
    let num_categories = scenes.iter().filter_map(|s| s.category).max().map_or(1, |c| c + 1);
    if loss == TaskLossKind::SoftmaxMulticlass && scenes.iter().any(|s| s.category.is_none()) {
        return Err(Failure::usage("softmax loss cannot train on negative scenes; use --loss logistic"));
    }
    let layers = args.interp_layers.or(file.interp_layers).unwrap_or(1);
    let mut spec = match layers {
        1 => ArchitectureSpec::desk_default(num_categories, loss),
        2 => ArchitectureSpec::desk_two_layer(num_categories, loss),
        _ => return Err(Failure::usage("--interp-layers must be 1 or 2")),
    };
    spec.input = [1, scenes[0].size, scenes[0].size];
    spec.masks = !(args.no_mask || file.mask == Some(false));
    spec.templates = TemplateConfig {
        tau: args.tau.or(file.tau),
        alpha: args.alpha.or(file.alpha),
        beta: args.beta.or(file.beta).unwrap_or(TemplateConfig::default().beta),
    };
    let defaults = TrainConfig::default();
    let config = TrainConfig {
        epochs: args.epochs.or(file.epochs).unwrap_or(defaults.epochs),
        batch_size: args.batch_size.or(file.batch_size).unwrap_or(defaults.batch_size),
        lr: args.lr.or(file.lr).unwrap_or(defaults.lr),
        momentum: args.momentum.or(file.momentum).unwrap_or(defaults.momentum),
        lambda_k: args.lambda_k.or(file.lambda_k).unwrap_or(defaults.lambda_k),
        filter_loss: !(args.no_filter_loss || file.filter_loss == Some(false)),
        seed: args.seed.or(file.seed).unwrap_or(defaults.seed),
        threads,
    };
    config.validate().map_err(|e| Failure::usage(e.to_string()))?;
    spec.shapes().map_err(|e| Failure::usage(e.to_string()))?;
    create_dir(&args.out)?;
    let mut run_config = serde_json::to_value(config).expect("json");
    run_config.as_object_mut().expect("object").remove("threads");
    echo_config(
        &args.out,
        json!({
            "command": "train",
            "data": args.data.display().to_string(),
            "architecture": spec,
            "train": run_config,
        }),
    )?;
    let data = samples(&scenes);
    let mut net = Network::new(spec, config.seed)?;
    let mut log = String::new();
    let result = train_with(&mut net, &data, config, |l: &EpochLog| {
        let line = serde_json::to_string(l).expect("json");
        if verbose {
            eprintln!("{line}");
        }
        log.push_str(&line);
        log.push('\n');
        Ok(())
    });
    write(&args.out.join("log.ndjson"), &log)?;
    let logs = result?;
    let epochs = logs.len();
    checkpoint::save(&args.out.join("checkpoint.gbx"), &net, epochs, json!({ "train": run_config }))?;
    let acc = accuracy(&net, &data, threads)?;
    let last = logs.last().expect("at least one epoch");
    println!(
        "trained {epochs} epochs: task loss {:.6}, filter loss {:.6e}, train accuracy {:.4}",
        last.task_loss, last.filter_loss, acc
    );
    Ok(())
}

fn cmd_eval(args: EvalArgs, file: &config::EvalSection) -> Outcome {
    let threads = threads()?;
    let net = load_checkpoint(&args.checkpoint)?;
    let scenes = load_archive(&args.data)?;
    check_compatible(&net, &scenes)?;
    let options = EvalOptions {
        layer: args.layer.or(file.layer).unwrap_or(0),
        top_m: args.top_m.or(file.top_m).unwrap_or(100),
        rf_radius: args.rf_radius.or(file.rf_radius),
        threads,
    };
    if options.layer >= net.interp.len() {
        return Err(Failure::usage(format!(
            "--layer {} but the network has {} interpretable layers",
            options.layer,
            net.interp.len()
        )));
    }
    let report = evaluate(&net, &scenes, options)?;
    create_dir(&args.out)?;
    write(&args.out.join("report.tsv"), report.to_tsv())?;
    write(&args.out.join("report.json"), report.to_json())?;
    let mut echoed = serde_json::to_value(options).expect("json");
    echoed.as_object_mut().expect("object").remove("threads");
    echo_config(
        &args.out,
        json!({
            "command": "eval",
            "checkpoint": args.checkpoint.display().to_string(),
            "data": args.data.display().to_string(),
            "eval": echoed,
        }),
    )?;
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    let s = &report.summary;
    let fmt = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |v| format!("{v:.4}"));
    println!(
        "P_f {:.4}  instability {}  purity {:.4}  target act {}  other act {}  accuracy {}",
        s.part_interpretability,
        fmt(s.instability),
        s.purity,
        fmt(s.mean_target_act),
        fmt(s.mean_other_act),
        fmt(s.accuracy)
    );
    Ok(())
}

fn cmd_verify(args: VerifyArgs) -> Outcome {
    let report = verify::run(VerifyOptions {
        flip_gradient_sign: args.flip_gradient_sign,
    });
    print!("{}", report.render());
    if report.passed() {
        Ok(())
    } else {
        let names: Vec<&str> = report.failures().iter().map(|c| c.name).collect();
        Err(Failure {
            code: 1,
            message: format!("verification failed: {}", names.join(", ")),
        })
    }
}

fn cmd_viz(args: VizArgs) -> Outcome {
    let threads = threads()?;
    let net = load_checkpoint(&args.checkpoint)?;
    let scenes = load_archive(&args.data)?;
    check_compatible(&net, &scenes)?;
    let Some(layer) = net.interp.get(args.layer) else {
        return Err(Failure::usage(format!("no interpretable layer {}", args.layer)));
    };
    let m = layer.states.len();
    if let Some(bad) = args.filters.iter().find(|&&f| f >= m) {
        return Err(Failure::usage(format!("filter {bad} out of range; layer has {m} filters")));
    }
    create_dir(&args.out)?;
    let images: Vec<_> = scenes.iter().map(SyntheticScene::image).collect();
    let traces = record(&net, &images, threads)?;
    let (h, w) = (scenes[0].size, scenes[0].size);
    let n = layer.bank.n();
    let tau = layer.bank.tau();
    let mut written = 0;
    for &f in &args.filters {
        for (i, t) in traces.iter().enumerate().take(args.images) {
            let raw = &t.maps[args.layer][f];
            let sel = &t.selections[args.layer][f];
            let scale = raw.peak();
            let stem = format!("f{f:02}_s{i:05}");
            let note = format!("filter {f} scene {i}; white = per-image max {scale:.6}");
            write(
                &args.out.join(format!("{stem}_raw.pgm")),
                encode_pgm(&viz::render_map(raw, h, w, scale), Some(&note)),
            )?;
            let masked = sel.masked.scaled(1.0 / tau)?;
            write(
                &args.out.join(format!("{stem}_masked.pgm")),
                encode_pgm(
                    &viz::render_map(&masked, h, w, scale),
                    Some(&format!("{note}; masked map divided by tau, on the raw map's scale")),
                ),
            )?;
            let Location { row, col } = sel.mu_hat;
            write(
                &args.out.join(format!("{stem}_template.pgm")),
                encode_pgm(
                    &viz::render_template(&layer.bank, sel.mu_hat, h, w),
                    Some(&format!("filter {f} scene {i}; template at [{row},{col}]; black = -tau, white = tau")),
                ),
            )?;
            written += 3;
        }
        let picks: Vec<Location> = traces.iter().map(|t| t.selections[args.layer][f].mu_hat).collect();
        let counts = viz::peak_histogram(&picks, n);
        let max = counts.iter().copied().max().unwrap_or(0);
        write(
            &args.out.join(format!("f{f:02}_heatmap.pgm")),
            encode_pgm(
                &viz::render_heatmap(&counts, n, h, w),
                Some(&format!("filter {f}; peak-location counts over {} scenes; white = {max}", traces.len())),
            ),
        )?;
        let mut tsv = String::new();
        for r in 0..n {
            let row: Vec<String> = counts[r * n..(r + 1) * n].iter().map(u64::to_string).collect();
            tsv.push_str(&row.join("\t"));
            tsv.push('\n');
        }
        write(&args.out.join(format!("f{f:02}_heatmap.tsv")), tsv)?;
        written += 2;
    }
    echo_config(
        &args.out,
        json!({
            "command": "viz",
            "checkpoint": args.checkpoint.display().to_string(),
            "data": args.data.display().to_string(),
            "filters": args.filters,
            "images": args.images,
            "layer": args.layer,
        }),
    )?;
    println!("wrote {written} files to {}", args.out.display());
    Ok(())
}

fn run(cli: Cli) -> Outcome {
    let file = config::load(cli.config.as_deref()).map_err(Failure::usage)?;
    match cli.command {
        Command::Gen(a) => cmd_gen(a, &file.gen),
        Command::Train(a) => cmd_train(a, &file.train, cli.verbose),
        Command::Eval(a) => cmd_eval(a, &file.eval),
        Command::Verify(a) => cmd_verify(a),
        Command::Viz(a) => cmd_viz(a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("gbx: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
