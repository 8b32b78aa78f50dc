//! `spect-interp`: simulate, train, interpolate, reconstruct and score.
//!
//! Exit codes: 0 success, 1 usage, 2 invalid data or configuration,
//! 3 internal failure. Errors are printed to stderr as one line.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use spect_interp::experiment::{format_case_tables, shepp_logan_case, CaseScores};
use spect_interp::image::Grid;
use spect_interp::io::{self, RawDtype, TomoData};
use spect_interp::metrics::{denoise_table, MetricsReport};
use spect_interp::recon::{osem, ReconConfig};
use spect_interp::sim::{
    generate_phantom, make_dataset, shepp_logan, apply_poisson, NoiseLevel, NoiseSpec, PhantomRecipe, Projector,
    ViewCounts,
};
use spect_interp::train::{self, evaluate, format_tables, EvalOptions, Interpolator, Progress, TrainConfig};
use spect_interp::unet::UNet;
use spect_interp::Error;

const DATA_ENV: &str = "SPECT_INTERP_DATA";

#[derive(Parser, Debug)]
#[command(name = "spect-interp", version, about = "Sparse-view SPECT sinogram interpolation pipeline")]
struct Cli {
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Run single-threaded.
    #[arg(long, global = true)]
    deterministic: bool,
    /// Default directory for datasets, models and reports.
    #[arg(long, global = true, env = DATA_ENV, default_value = "spect-data")]
    data_dir: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum PhantomKind {
    Random,
    SheppLogan,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a phantom image.
    Phantom {
        kind: PhantomKind,
        #[arg(long, default_value_t = 128)]
        size: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Item index within the seed's phantom sequence.
        #[arg(long, default_value_t = 0)]
        index: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Forward-project an image over a full circle.
    Project {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, default_value_t = 128)]
        angles: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Apply Poisson count noise to a sinogram.
    Noise {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        level: NoiseLevel,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Simulate training pairs and write a manifest.
    Dataset {
        #[arg(long)]
        count: u64,
        /// low, medium, high or mixed.
        #[arg(long, default_value = "mixed")]
        noise: NoiseSpec,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 128)]
        size: usize,
        #[arg(long, default_value_t = 32)]
        sparse_views: usize,
        #[arg(long, default_value_t = 128)]
        dense_views: usize,
        /// Defaults to `<data-dir>/dataset`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train a model from a key=value config file.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Overrides `max_steps` from the config.
        #[arg(long)]
        max_steps: Option<usize>,
        /// Print a progress line every N steps.
        #[arg(long, default_value_t = 25)]
        log_every: usize,
    },
    /// Quadruple the views of a sparse sinogram with a trained model.
    Infer {
        #[arg(long)]
        model: PathBuf,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// OSEM reconstruction of a sinogram.
    Recon {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, default_value_t = 4)]
        subsets: usize,
        #[arg(long, default_value_t = 20)]
        iters: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compare an estimate with a reference image or sinogram.
    Eval {
        #[arg(long = "ref")]
        reference: PathBuf,
        #[arg(long = "est")]
        estimate: PathBuf,
        /// Print a table row instead of JSON.
        #[arg(long)]
        table: bool,
    },
    /// Score a checkpoint on a dataset manifest, per noise level.
    EvalModel {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        noise: Option<NoiseLevel>,
        /// Skip the OSEM comparison.
        #[arg(long)]
        no_recon: bool,
        /// Pairs per noise level.
        #[arg(long)]
        limit: Option<usize>,
        #[arg(long, default_value_t = 4)]
        subsets: usize,
        #[arg(long, default_value_t = 20)]
        iters: usize,
        /// Also write the rows as JSON.
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Shepp-Logan end to end: noisy sparse views, interpolation, OSEM of
    /// both arms, tables and PGM figures.
    Reproduce {
        /// One level, or all three when omitted.
        #[arg(long)]
        noise: Option<NoiseLevel>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Defaults to `<data-dir>/model.ckpt`.
        #[arg(long)]
        model: Option<PathBuf>,
        /// Defaults to `<data-dir>/reproduce`.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 4)]
        subsets: usize,
        #[arg(long, default_value_t = 20)]
        iters: usize,
    },
    /// Convert a headerless little-endian array into a sinogram file.
    ImportRaw {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        angles: usize,
        #[arg(long)]
        bins: usize,
        /// f32 or u16.
        #[arg(long, default_value = "f32")]
        dtype: RawDtype,
        #[arg(long, default_value_t = 0.0)]
        start_angle: f64,
        #[arg(long, default_value_t = 360.0)]
        angular_range: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write a 16-bit PGM of an image or sinogram file.
    ExportPgm {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    std::panic::set_hook(Box::new(|info| {
        let msg = info.to_string().replace('\n', " ");
        eprintln!("error[internal]: {msg}");
    }));
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return ExitCode::SUCCESS;
            }
            let text = e.to_string();
            let first = text.lines().next().unwrap_or("invalid arguments");
            eprintln!("{}", first.replacen("error:", "error[usage]:", 1));
            return ExitCode::from(1);
        }
    };
    let jobs = if cli.deterministic { Some(1) } else { cli.jobs };
    if let Some(n) = jobs {
        // only fails if a pool already exists, which cannot happen here
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global();
    }
    match std::panic::catch_unwind(|| run(&cli)) {
        Ok(Ok(())) => ExitCode::SUCCESS,
        Ok(Err(e)) => {
            let class = if e.is_data_error() { "data" } else { "internal" };
            eprintln!("error[{class}]: {}", e.to_string().replace('\n', " "));
            ExitCode::from(if e.is_data_error() { 2 } else { 3 })
        }
        Err(_) => ExitCode::from(3),
    }
}

fn ensure_parent(path: &Path) -> Result<(), Error> {
    match path.parent() {
        Some(dir) if !dir.as_os_str().is_empty() => {
            fs::create_dir_all(dir).map_err(|e| Error::Io {
                path: dir.to_path_buf(),
                source: e,
            })
        }
        _ => Ok(()),
    }
}

fn write_text(path: &Path, text: &str) -> Result<(), Error> {
    ensure_parent(path)?;
    fs::write(path, text).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn write_tomo(path: &Path, data: &TomoData) -> Result<(), Error> {
    ensure_parent(path)?;
    match data {
        TomoData::Image(i) => io::write_image(path, i),
        TomoData::Sinogram(s) => io::write_sinogram(path, s),
    }
}

fn grid(data: &TomoData) -> &dyn Grid {
    match data {
        TomoData::Image(i) => i,
        TomoData::Sinogram(s) => s,
    }
}

fn run(cli: &Cli) -> Result<(), Error> {
    match &cli.command {
        Command::Phantom {
            kind,
            size,
            seed,
            index,
            out,
        } => {
            let image = match kind {
                PhantomKind::SheppLogan => {
                    if *size < 16 {
                        return Err(Error::Config(format!("phantom size must be at least 16, got {size}")));
                    }
                    shepp_logan(*size)
                }
                PhantomKind::Random => {
                    let recipe = PhantomRecipe {
                        size: *size,
                        ..PhantomRecipe::new(*seed)
                    };
                    generate_phantom(&recipe, *index)
                }
            };
            write_tomo(out, &TomoData::Image(image))?;
            println!("wrote {size}x{size} phantom to {}", out.display());
        }
        Command::Project { input, angles, out } => {
            let image = io::read_image(input)?;
            let sino = Projector::for_image(&image, *angles)?.project(&image)?;
            write_tomo(out, &TomoData::Sinogram(sino))?;
            println!("wrote {angles}x{} sinogram to {}", image.width(), out.display());
        }
        Command::Noise {
            input,
            level,
            seed,
            out,
        } => {
            let sino = io::read_sinogram(input)?;
            let noisy = apply_poisson(&sino, *level, *seed)?;
            write_tomo(out, &TomoData::Sinogram(noisy))?;
            println!("wrote {level}-noise sinogram to {}", out.display());
        }
        Command::Dataset {
            count,
            noise,
            seed,
            size,
            sparse_views,
            dense_views,
            out,
        } => {
            let out = out.clone().unwrap_or_else(|| cli.data_dir.join("dataset"));
            let recipe = PhantomRecipe {
                size: *size,
                ..PhantomRecipe::new(*seed)
            };
            let views = ViewCounts {
                sparse: *sparse_views,
                dense: *dense_views,
            };
            let manifest = make_dataset(&recipe, *count, *noise, views, &out)?;
            println!(
                "wrote {} pairs to {}",
                manifest.entries.len(),
                out.join(spect_interp::sim::dataset::MANIFEST_FILE).display()
            );
        }
        Command::Train {
            config,
            max_steps,
            log_every,
        } => {
            let mut cfg = TrainConfig::from_file(config)?;
            if max_steps.is_some() {
                cfg.max_steps = *max_steps;
            }
            if cfg.output_dir.is_none() {
                cfg.output_dir = Some(cli.data_dir.clone());
            }
            let log_every = (*log_every).max(1);
            let mut report = |p: Progress| match p {
                Progress::Step { epoch, step, loss } if step % log_every == 0 => {
                    println!("epoch {epoch} step {step} loss {loss:.6e}");
                }
                Progress::Step { .. } => {}
                Progress::Epoch(r) => {
                    let val = r.val_loss.map_or("n/a".to_owned(), |v| format!("{v:.6e}"));
                    let metrics = r.val_metrics.as_ref().map_or(String::new(), |m| {
                        format!(" val_mape {:.2}% val_ssim {:.4} val_psnr {:.2}", m.mape, m.ssim, m.psnr)
                    });
                    println!(
                        "epoch {} done: train_loss {:.6e} val_loss {val}{metrics} ({:.1}s)",
                        r.epoch, r.train_loss, r.seconds
                    );
                }
            };
            let outcome = train::train(&cfg, &mut report)?;
            let dir = cfg.output_dir.as_deref().unwrap_or(Path::new("."));
            println!(
                "best epoch {} loss {:.6e}; checkpoint {}",
                outcome.history.best_epoch,
                outcome.history.best_loss,
                dir.join(train::CHECKPOINT_FILE).display()
            );
        }
        Command::Infer { model, input, out } => {
            let model = UNet::load(model)?;
            let sino = io::read_sinogram(input)?;
            let dense = model.interpolate(&sino)?;
            write_tomo(out, &TomoData::Sinogram(dense))?;
            println!("wrote interpolated sinogram to {}", out.display());
        }
        Command::Recon {
            input,
            subsets,
            iters,
            out,
        } => {
            let sino = io::read_sinogram(input)?;
            let image = osem(&sino, &ReconConfig::new(*subsets, *iters))?;
            write_tomo(out, &TomoData::Image(image))?;
            println!("wrote reconstruction to {}", out.display());
        }
        Command::Eval {
            reference,
            estimate,
            table,
        } => {
            let r = io::read_tomo(reference)?;
            let e = io::read_tomo(estimate)?;
            if matches!((&r, &e), (TomoData::Image(_), TomoData::Sinogram(_)) | (TomoData::Sinogram(_), TomoData::Image(_))) {
                return Err(Error::Config("reference and estimate must both be images or both sinograms".to_owned()));
            }
            let report = MetricsReport::compute(grid(&r), grid(&e))?;
            if *table {
                print!("{}", denoise_table(&[(estimate.display().to_string(), report)]));
            } else {
                println!("{}", serde_json::to_string(&report).expect("report serialises"));
            }
        }
        Command::EvalModel {
            model,
            manifest,
            noise,
            no_recon,
            limit,
            subsets,
            iters,
            json,
        } => {
            let model = UNet::load(model)?;
            let manifest = io::Manifest::read(manifest)?;
            let opts = EvalOptions {
                noise: *noise,
                recon: (!no_recon).then(|| ReconConfig::new(*subsets, *iters)),
                limit: *limit,
            };
            let rows = evaluate(&model, &manifest, &opts)?;
            print!("{}", format_tables(&rows));
            if let Some(path) = json {
                write_text(path, &serde_json::to_string_pretty(&rows).expect("rows serialise"))?;
            }
        }
        Command::Reproduce {
            noise,
            seed,
            model,
            out,
            subsets,
            iters,
        } => {
            let model_path = model.clone().unwrap_or_else(|| cli.data_dir.join(train::CHECKPOINT_FILE));
            let out = out.clone().unwrap_or_else(|| cli.data_dir.join("reproduce"));
            let model = UNet::load(&model_path)?;
            let cfg = model.config();
            let views = ViewCounts {
                sparse: cfg.in_angles,
                dense: cfg.out_angles,
            };
            let levels = noise.map_or(NoiseLevel::ALL.to_vec(), |l| vec![l]);
            let recon = ReconConfig::new(*subsets, *iters);
            let mut scores: Vec<CaseScores> = Vec::new();
            for level in levels {
                let case = shepp_logan_case(&model, cfg.detector_bins, views, level, *seed, &recon)?;
                let l = level.label();
                let figures: [(String, &dyn Grid); 6] = [
                    ("phantom.pgm".to_owned(), &case.phantom),
                    ("sinogram_clean.pgm".to_owned(), &case.clean),
                    (format!("sinogram_noisy_{l}.pgm"), &case.noisy),
                    (format!("sinogram_interpolated_{l}.pgm"), &case.interpolated),
                    (format!("recon_standard_{l}.pgm"), &case.standard_recon),
                    (format!("recon_proposed_{l}.pgm"), &case.proposed_recon),
                ];
                for (name, g) in figures {
                    let path = out.join(name);
                    ensure_parent(&path)?;
                    io::export_pgm(g, &path)?;
                }
                scores.push(case.scores);
            }
            let tables = format_case_tables(&scores);
            print!("{tables}");
            write_text(&out.join("tables.txt"), &tables)?;
            write_text(
                &out.join("report.json"),
                &serde_json::to_string_pretty(&scores).expect("scores serialise"),
            )?;
        }
        Command::ImportRaw {
            input,
            angles,
            bins,
            dtype,
            start_angle,
            angular_range,
            out,
        } => {
            let sino = io::import_raw(input, *angles, *bins, *dtype, *start_angle, *angular_range)?;
            write_tomo(out, &TomoData::Sinogram(sino))?;
            println!("wrote {angles}x{bins} sinogram to {}", out.display());
        }
        Command::ExportPgm { input, out } => {
            let data = io::read_tomo(input)?;
            ensure_parent(out)?;
            io::export_pgm(grid(&data), out)?;
            println!("wrote {}", out.display());
        }
    }
    Ok(())
}
