//! Command-line interface for the pseudo-supervision pipeline.
//!
//! Progress goes to stderr; machine-readable results go only to the
//! declared output files. Every subcommand is deterministic given its
//! inputs and seed, and never writes to its input files. Exit codes:
//! 0 success, 1 invalid input, 2 internal failure (training divergence,
//! corrupt artifact, write failure).

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use egointent::dataset::DatasetFile;
use egointent::error::{Error, Result};
use egointent::eval::{evaluate_pseudo_gt, run_ablations};
use egointent::exec;
use egointent::grid::GridDims;
use egointent::io::dataset::{load_dataset, save_dataset};
use egointent::io::params::{load_params, save_params};
use egointent::io::pgm::save_pgm;
use egointent::io::prior::{load_prior, save_prior};
use egointent::io::report::{save_records, save_table};
use egointent::learner::{run_grad_check, train, GradCheckConfig, TrainConfig};
use egointent::pipeline::{
    build_training_set, evaluate_learner, load_frame_images, pseudo_gt_maps,
};
use egointent::priors::{build_location_prior, LocationPriorArtifact, PriorConfig};
use egointent::synth::{generate_synthetic, SynthConfig};

#[derive(Parser)]
#[command(
    name = "egointent",
    version,
    about = "Cooperator-intent heatmaps from pose detections: pseudo-label \
             synthesis, scorer training, and evaluation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Size-prior decay; mirrors the prior configuration default.
#[derive(Args)]
struct SigmaArg {
    /// Size prior decay constant in exp(-sigma/height).
    #[arg(long, default_value_t = PriorConfig::default().sigma)]
    sigma: f64,
}

#[derive(Args)]
struct AblationArgs {
    /// Disable the location prior.
    #[arg(long)]
    no_loc: bool,
    /// Disable the size prior.
    #[arg(long)]
    no_size: bool,
    /// Disable the pose prior.
    #[arg(long)]
    no_pose: bool,
}

fn prior_config(sigma: &SigmaArg, ablation: &AblationArgs) -> PriorConfig {
    PriorConfig {
        sigma: sigma.sigma,
        use_loc: !ablation.no_loc,
        use_size: !ablation.no_size,
        use_pose: !ablation.no_pose,
        ..Default::default()
    }
}

#[derive(Args)]
struct TrainArgs {
    /// Learning rate.
    #[arg(long, default_value_t = TrainConfig::default().learning_rate)]
    lr: f64,
    /// Number of gradient updates.
    #[arg(long, default_value_t = TrainConfig::default().iterations)]
    iters: usize,
    /// Mini-batch size.
    #[arg(long, default_value_t = TrainConfig::default().batch_size)]
    batch: usize,
    /// Seed for parameter initialization and batch shuffling.
    #[arg(long, default_value_t = TrainConfig::default().seed)]
    seed: u64,
}

impl TrainArgs {
    fn to_config(&self) -> TrainConfig {
        TrainConfig {
            learning_rate: self.lr,
            iterations: self.iters,
            batch_size: self.batch,
            seed: self.seed,
            ..Default::default()
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate a labeled synthetic dataset with rendered frame images.
    Synth {
        /// Output directory for dataset.egods, images/, and summary.txt.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = SynthConfig::default().seed)]
        seed: u64,
        /// Number of frames.
        #[arg(long, default_value_t = SynthConfig::default().frame_count)]
        frames: usize,
        /// Detections per frame.
        #[arg(long, default_value_t = SynthConfig::default().players_per_frame)]
        players: usize,
        #[arg(long, default_value_t = SynthConfig::default().dims.width())]
        width: usize,
        #[arg(long, default_value_t = SynthConfig::default().dims.height())]
        height: usize,
        /// Probability that the cooperator draws the tall box.
        #[arg(long, default_value_t = SynthConfig::default().cue_size)]
        cue_size: f64,
        /// Probability that the cooperator faces the wearer.
        #[arg(long, default_value_t = SynthConfig::default().cue_pose)]
        cue_pose: f64,
        /// Probability that the cooperator stands in the hot-spot band.
        #[arg(long, default_value_t = SynthConfig::default().cue_loc)]
        cue_loc: f64,
        /// Probability that the bright facial blob marks the cooperator.
        #[arg(long, default_value_t = SynthConfig::default().appearance_cue)]
        appearance_cue: f64,
    },
    /// Estimate the dataset-level location prior from a dataset.
    BuildPrior {
        /// Input dataset (.egods).
        #[arg(long)]
        data: PathBuf,
        /// Output artifact path (.egoprior).
        #[arg(long)]
        out: PathBuf,
    },
    /// Export per-frame pseudo ground truth as 8-bit graymaps.
    PseudoGt {
        #[arg(long)]
        data: PathBuf,
        /// Location prior artifact; required unless --no-loc.
        #[arg(long)]
        prior: Option<PathBuf>,
        #[command(flatten)]
        sigma: SigmaArg,
        #[command(flatten)]
        ablation: AblationArgs,
        /// Output directory for <image_id>.pgm files and summary.txt.
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the conv scorer on pseudo ground truth.
    Train {
        #[arg(long)]
        data: PathBuf,
        /// Location prior artifact; required unless --no-loc.
        #[arg(long)]
        prior: Option<PathBuf>,
        #[command(flatten)]
        sigma: SigmaArg,
        #[command(flatten)]
        ablation: AblationArgs,
        #[command(flatten)]
        train: TrainArgs,
        /// Output path for trained parameters (.egoparams).
        #[arg(long)]
        params_out: PathBuf,
        /// Output path for the loss log (one `index, loss` line per iteration).
        #[arg(long)]
        loss_out: PathBuf,
    },
    /// Evaluate pseudo ground truth or a trained scorer on a dataset.
    Eval {
        #[arg(long)]
        data: PathBuf,
        /// Location prior artifact for pseudo-GT evaluation.
        #[arg(long, conflicts_with = "params")]
        prior: Option<PathBuf>,
        /// Trained scorer parameters; switches to scorer evaluation.
        #[arg(long)]
        params: Option<PathBuf>,
        #[command(flatten)]
        sigma: SigmaArg,
        #[command(flatten)]
        ablation: AblationArgs,
        /// Output path for the accuracy table.
        #[arg(long)]
        table: PathBuf,
        /// Output path for per-image records.
        #[arg(long)]
        records: PathBuf,
    },
    /// Evaluate the full prior configuration and each single-prior ablation.
    Ablate {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        prior: PathBuf,
        #[command(flatten)]
        sigma: SigmaArg,
        /// Output path for the 4-row accuracy table.
        #[arg(long)]
        out: PathBuf,
    },
    /// Check analytic gradients against finite differences.
    Gradcheck {
        #[arg(long, default_value_t = GradCheckConfig::default().seed)]
        seed: u64,
        /// Number of random parameter/input/target triples.
        #[arg(long, default_value_t = GradCheckConfig::default().triples)]
        triples: usize,
        /// Output path for the report.
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            e.print().expect("write argument diagnostics");
            std::process::exit(code);
        }
    };
    if let Err(e) = run(cli.command) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Synth {
            out,
            seed,
            frames,
            players,
            width,
            height,
            cue_size,
            cue_pose,
            cue_loc,
            appearance_cue,
        } => run_synth(
            out,
            SynthConfig {
                seed,
                frame_count: frames,
                players_per_frame: players,
                dims: GridDims::new(width, height)?,
                cue_size,
                cue_pose,
                cue_loc,
                appearance_cue,
            },
        ),
        Command::BuildPrior { data, out } => run_build_prior(&data, &out),
        Command::PseudoGt {
            data,
            prior,
            sigma,
            ablation,
            out,
        } => run_pseudo_gt(&data, prior.as_deref(), &prior_config(&sigma, &ablation), &out),
        Command::Train {
            data,
            prior,
            sigma,
            ablation,
            train,
            params_out,
            loss_out,
        } => run_train(
            &data,
            prior.as_deref(),
            &prior_config(&sigma, &ablation),
            &train.to_config(),
            &params_out,
            &loss_out,
        ),
        Command::Eval {
            data,
            prior,
            params,
            sigma,
            ablation,
            table,
            records,
        } => run_eval(
            &data,
            prior.as_deref(),
            params.as_deref(),
            &prior_config(&sigma, &ablation),
            &table,
            &records,
        ),
        Command::Ablate {
            data,
            prior,
            sigma,
            out,
        } => run_ablate(&data, &prior, &prior_config(&sigma, &AblationArgs {
            no_loc: false,
            no_size: false,
            no_pose: false,
        }), &out),
        Command::Gradcheck { seed, triples, out } => run_gradcheck(seed, triples, &out),
    }
}

/// Reading an input file that is missing or unreadable is the caller's
/// mistake, not an internal failure.
fn input_context<T>(r: Result<T>, what: &str, path: &Path) -> Result<T> {
    r.map_err(|e| match e {
        Error::Io(io) => Error::InvalidInput(format!(
            "cannot read {what} {}: {io}",
            path.display()
        )),
        other => other,
    })
}

fn load_dataset_input(path: &Path) -> Result<DatasetFile> {
    let ds = input_context(load_dataset(path), "dataset", path)?;
    eprintln!(
        "loaded {} frames, {} annotations from {}",
        ds.frames.len(),
        ds.annotations.len(),
        path.display()
    );
    Ok(ds)
}

fn load_prior_input(
    path: Option<&Path>,
    cfg: &PriorConfig,
) -> Result<Option<LocationPriorArtifact>> {
    match path {
        Some(p) => {
            let prior = input_context(load_prior(p), "location prior", p)?;
            Ok(Some(prior))
        }
        None if cfg.use_loc => Err(Error::InvalidInput(
            "--prior is required unless --no-loc is set".into(),
        )),
        None => Ok(None),
    }
}

fn prepare_output_file(path: &Path) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    Ok(())
}

fn checked_file_id(image_id: &str) -> Result<&str> {
    if image_id.contains(['/', '\\']) || image_id == ".." {
        return Err(Error::InvalidInput(format!(
            "image id {image_id:?} cannot be used as a file name"
        )));
    }
    Ok(image_id)
}

fn run_synth(out: PathBuf, cfg: SynthConfig) -> Result<()> {
    let mut world = generate_synthetic(&cfg)?;
    eprintln!(
        "generated {} frames ({} players each, {} mode)",
        cfg.frame_count,
        cfg.players_per_frame,
        exec::mode()
    );
    let images_dir = out.join("images");
    std::fs::create_dir_all(&images_dir)?;
    for (frame, image) in world.dataset.frames.iter_mut().zip(&world.images) {
        let id = checked_file_id(&frame.image_id)?;
        let rel = format!("images/{id}.pgm");
        save_pgm(image, out.join(&rel))?;
        frame.image_ref = Some(rel);
    }
    save_dataset(&world.dataset, out.join("dataset.egods"))?;

    let prior = build_location_prior(&world.dataset.frames, world.dataset.dims)?;
    let report = evaluate_pseudo_gt(&world.dataset, Some(&prior), &PriorConfig::default())?;

    let mut summary = String::new();
    writeln!(summary, "seed {}", cfg.seed).expect("string write");
    writeln!(summary, "frames {}", cfg.frame_count).expect("string write");
    writeln!(summary, "players {}", cfg.players_per_frame).expect("string write");
    writeln!(summary, "dims {} {}", cfg.dims.width(), cfg.dims.height()).expect("string write");
    writeln!(summary, "cue_size {}", cfg.cue_size).expect("string write");
    writeln!(summary, "cue_pose {}", cfg.cue_pose).expect("string write");
    writeln!(summary, "cue_loc {}", cfg.cue_loc).expect("string write");
    writeln!(summary, "appearance_cue {}", cfg.appearance_cue).expect("string write");
    writeln!(summary, "pseudo_gt_accuracy {}", report.accuracy).expect("string write");
    std::fs::write(out.join("summary.txt"), summary)?;

    eprintln!(
        "wrote dataset, images, and summary to {} (self-check pseudo-GT accuracy {:.4})",
        out.display(),
        report.accuracy
    );
    Ok(())
}

fn run_build_prior(data: &Path, out: &Path) -> Result<()> {
    let ds = load_dataset_input(data)?;
    let prior = build_location_prior(&ds.frames, ds.dims)?;
    prepare_output_file(out)?;
    save_prior(&prior, out)?;
    eprintln!(
        "built location prior over {} images -> {}",
        prior.image_count,
        out.display()
    );
    Ok(())
}

fn run_pseudo_gt(
    data: &Path,
    prior_path: Option<&Path>,
    cfg: &PriorConfig,
    out: &Path,
) -> Result<()> {
    let ds = load_dataset_input(data)?;
    let prior = load_prior_input(prior_path, cfg)?;
    let maps = pseudo_gt_maps(&ds, prior.as_ref(), cfg)?;
    std::fs::create_dir_all(out)?;
    let mut summary = String::new();
    writeln!(summary, "config {}", cfg.ablation_label()).expect("string write");
    writeln!(summary, "frames {}", maps.len()).expect("string write");
    for (id, map) in &maps {
        let id = checked_file_id(id)?;
        save_pgm(map, out.join(format!("{id}.pgm")))?;
        writeln!(
            summary,
            "map {id} max {} support {}",
            map.max_value(),
            map.support_size()
        )
        .expect("string write");
    }
    std::fs::write(out.join("summary.txt"), summary)?;
    eprintln!(
        "wrote {} pseudo-GT maps ({}) to {}",
        maps.len(),
        cfg.ablation_label(),
        out.display()
    );
    Ok(())
}

fn run_train(
    data: &Path,
    prior_path: Option<&Path>,
    cfg: &PriorConfig,
    train_cfg: &TrainConfig,
    params_out: &Path,
    loss_out: &Path,
) -> Result<()> {
    let ds = load_dataset_input(data)?;
    let prior = load_prior_input(prior_path, cfg)?;
    let base = data.parent().unwrap_or_else(|| Path::new("."));
    let images = load_frame_images(&ds, base)?;
    let with_images = images.iter().filter(|i| i.is_some()).count();
    eprintln!(
        "assembling training pairs for {} frames ({} with images, {} mode)",
        ds.frames.len(),
        with_images,
        exec::mode()
    );
    let pairs = build_training_set(&ds, &images, prior.as_ref(), cfg)?;
    eprintln!(
        "training: {} iterations, batch {}, lr {}",
        train_cfg.iterations, train_cfg.batch_size, train_cfg.learning_rate
    );
    let outcome = train(&pairs, train_cfg)?;
    let report_every = (train_cfg.iterations / 10).max(1);
    for (i, loss) in outcome.losses.iter().enumerate() {
        if i % report_every == 0 || i + 1 == outcome.losses.len() {
            eprintln!("iteration {i}: mean batch loss {loss:.4}");
        }
    }

    prepare_output_file(params_out)?;
    save_params(&outcome.params, params_out)?;
    prepare_output_file(loss_out)?;
    let mut log = String::new();
    for (i, loss) in outcome.losses.iter().enumerate() {
        writeln!(log, "{i}, {loss}").expect("string write");
    }
    std::fs::write(loss_out, log)?;
    eprintln!(
        "wrote parameters to {} and loss log to {}",
        params_out.display(),
        loss_out.display()
    );
    Ok(())
}

fn run_eval(
    data: &Path,
    prior_path: Option<&Path>,
    params_path: Option<&Path>,
    cfg: &PriorConfig,
    table: &Path,
    records: &Path,
) -> Result<()> {
    let ds = load_dataset_input(data)?;
    let report = match params_path {
        Some(p) => {
            let params = input_context(load_params(p), "scorer parameters", p)?;
            let base = data.parent().unwrap_or_else(|| Path::new("."));
            let images = load_frame_images(&ds, base)?;
            evaluate_learner(&params, &ds, &images, cfg, "scorer")?
        }
        None => {
            let prior = load_prior_input(prior_path, cfg)?;
            evaluate_pseudo_gt(&ds, prior.as_ref(), cfg)?
        }
    };
    prepare_output_file(table)?;
    save_table(std::slice::from_ref(&report), table)?;
    prepare_output_file(records)?;
    save_records(&report, records)?;
    eprintln!(
        "evaluated {} images: accuracy {:.4} ({}) -> {}, {}",
        report.per_image.len(),
        report.accuracy,
        report.config_label,
        table.display(),
        records.display()
    );
    Ok(())
}

fn run_ablate(data: &Path, prior_path: &Path, base_cfg: &PriorConfig, out: &Path) -> Result<()> {
    let ds = load_dataset_input(data)?;
    let prior = input_context(load_prior(prior_path), "location prior", prior_path)?;
    let reports = run_ablations(&ds, &prior, base_cfg)?;
    prepare_output_file(out)?;
    save_table(&reports, out)?;
    for r in &reports {
        eprintln!("{:<8} accuracy {:.4}", r.config_label, r.accuracy);
    }
    eprintln!("wrote ablation table to {}", out.display());
    Ok(())
}

fn run_gradcheck(seed: u64, triples: usize, out: &Path) -> Result<()> {
    let cfg = GradCheckConfig {
        seed,
        triples,
        ..Default::default()
    };
    eprintln!(
        "checking {} triples at {}x{} ({} mode)",
        cfg.triples,
        cfg.dims.width(),
        cfg.dims.height(),
        exec::mode()
    );
    let report = run_grad_check(&cfg)?;
    prepare_output_file(out)?;
    let mut text = String::new();
    writeln!(text, "triples {}", report.triples).expect("string write");
    writeln!(text, "coords_per_triple {}", report.coords_per_triple).expect("string write");
    writeln!(text, "max_rel_err {}", report.max_rel_err).expect("string write");
    std::fs::write(out, text)?;
    eprintln!(
        "max relative error {} -> {}",
        report.max_rel_err,
        out.display()
    );
    Ok(())
}
