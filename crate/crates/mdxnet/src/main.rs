use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use mdxnet::checkpoint::{load_mixer, load_separator, read_checkpoint, save_mixer, save_separator};
use mdxnet::config::RunConfig;
use mdxnet::dataset::{gen_synth_dataset, load_dataset};
use mdxnet::parallel::{default_workers, demix_parallel, evaluate_parallel};
use mdxnet::report::{render_csv, render_matrix_csv, render_table};
use mdxnet::wav::{read_wav, write_wav};
use mdxnet::{MdxError, Result};
use mdxnet_core::eval::{tdf_composed, SynthSpec};
use mdxnet_core::model::{Mixer, Module, UNetV2};
use mdxnet_core::pipeline::{blend, BlendWeights, PassthroughStub, SeparatorBundle, SourceName, SourceSet};
use mdxnet_core::train::{train_mixer, train_separator, TrainLog, TrainTarget};
use mdxnet_core::Error as CoreError;

#[derive(Parser)]
#[command(name = "mdxnet", version, about = "Music source separation at desk scale")]
struct Cli {
    /// Flat `key = value` run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Write a synthetic four-stem dataset and its index.
    GenData {
        #[arg(long, default_value_t = 2)]
        songs: usize,
        #[arg(long, default_value_t = 30.0)]
        duration: f64,
        #[arg(long, default_value_t = 44_100)]
        rate: u32,
        #[arg(long, default_value_t = 2)]
        channels: usize,
    },
    /// Train one separator.
    Train {
        #[arg(long)]
        data: PathBuf,
        /// vocals, drums, bass or other; overrides the configured target.
        #[arg(long)]
        target: Option<String>,
    },
    /// Train the Mixer over four frozen separators.
    TrainMixer {
        #[arg(long)]
        data: PathBuf,
        #[command(flatten)]
        seps: SeparatorDir,
    },
    /// Separate one WAV file into four stems.
    Separate {
        #[arg(long)]
        input: PathBuf,
        #[command(flatten)]
        seps: SeparatorDir,
        #[command(flatten)]
        pipe: PipelineOpts,
        /// Duplicate a mono input to stereo.
        #[arg(long)]
        to_stereo: bool,
    },
    /// Median framewise SDR over a dataset.
    Eval {
        #[arg(long)]
        data: PathBuf,
        #[command(flatten)]
        seps: SeparatorDir,
        #[command(flatten)]
        pipe: PipelineOpts,
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Blend two sets of stem files `<dir>/<name>_<source>.wav`.
    Blend {
        #[arg(long)]
        first: PathBuf,
        #[arg(long)]
        second: PathBuf,
        #[arg(long)]
        name: String,
        #[arg(long, value_parser = parse_weights, default_value = "1")]
        weights: BlendWeights,
    },
    /// Write the composed TDF map of one block as CSV.
    DumpTdf {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Block name (e.g. `enc0.tdf`) or position in network order.
        #[arg(long)]
        block: String,
    },
    /// Parameter count of a checkpoint or of the configured network.
    ParamCount {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
}

#[derive(Args)]
struct SeparatorDir {
    /// Directory holding `<source>.ckpt` for all four sources.
    #[arg(long)]
    separators: PathBuf,
}

#[derive(Args)]
struct PipelineOpts {
    #[arg(long)]
    mixer: Option<PathBuf>,
    /// Weight of the spectrogram stream against the passthrough second
    /// stream: one value, or four for vocals,drums,bass,other.
    #[arg(long, value_parser = parse_weights, default_value = "1")]
    blend: BlendWeights,
}

fn parse_weights(s: &str) -> std::result::Result<BlendWeights, String> {
    let v: Vec<f64> = s
        .split(',')
        .map(|x| x.trim().parse::<f64>().map_err(|e| format!("{x:?}: {e}")))
        .collect::<std::result::Result<_, _>>()?;
    let w = match v.as_slice() {
        [a] => BlendWeights::uniform(*a),
        [a, b, c, d] => BlendWeights::new([*a, *b, *c, *d]),
        _ => return Err("expected one weight or four comma-separated weights".into()),
    };
    w.map_err(|e| e.to_string())
}

fn run_config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.train.seed = s;
    }
    Ok(cfg)
}

fn create_out(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| MdxError::io(dir, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| MdxError::io(path, e))
}

fn loss_csv(entries: &[(usize, f64)]) -> String {
    let mut s = String::from("step,loss\n");
    for (step, l) in entries {
        s.push_str(&format!("{step},{l}\n"));
    }
    s
}

fn write_logs(out: &Path, stem: &str, log: &TrainLog) -> Result<()> {
    write_text(&out.join(format!("{stem}_loss.csv")), &loss_csv(&log.train))?;
    if !log.validation.is_empty() {
        write_text(&out.join(format!("{stem}_val_loss.csv")), &loss_csv(&log.validation))?;
    }
    Ok(())
}

fn load_bundle(dir: &Path) -> Result<SeparatorBundle> {
    let seps = SourceName::ALL.map(|s| load_separator(dir.join(format!("{s}.ckpt"))));
    let [a, b, c, d] = seps;
    Ok(SeparatorBundle::new([a?, b?, c?, d?])?)
}

fn load_stems(dir: &Path, name: &str) -> Result<SourceSet> {
    let [a, b, c, d] = SourceName::ALL.map(|s| read_wav(dir.join(format!("{name}_{s}.wav"))));
    Ok(SourceSet::new([a?, b?, c?, d?])?)
}

fn write_stems(dir: &Path, name: &str, set: &SourceSet) -> Result<()> {
    for (s, w) in set.iter() {
        let p = dir.join(format!("{name}_{s}.wav"));
        write_wav(&p, w)?;
        println!("{}", p.display());
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let out = cli.out.clone();
    match &cli.cmd {
        Cmd::GenData {
            songs,
            duration,
            rate,
            channels,
        } => {
            let spec = SynthSpec {
                num_songs: *songs,
                duration_seconds: *duration,
                sample_rate: *rate,
                channels: *channels,
                seed: cli.seed.unwrap_or(0),
            };
            create_out(&out)?;
            let idx = gen_synth_dataset(&spec, &out)?;
            println!("{}", idx.display());
        }
        Cmd::Train { data, target } => {
            let mut cfg = run_config(&cli)?;
            if let Some(t) = target {
                cfg.train.target = TrainTarget::parse(t)
                    .filter(|t| *t != TrainTarget::Mixer)
                    .ok_or_else(|| CoreError::Config(format!("unknown separator target {t:?}")))?;
            }
            if cfg.train.target == TrainTarget::Mixer {
                return Err(CoreError::Config("use train-mixer for the mixer target".into()).into());
            }
            let ds = load_dataset(data)?;
            let (sep, log) = train_separator(&ds, &cfg.train, cfg.net, cfg.stft)?;
            create_out(&out)?;
            let name = cfg.train.target.as_str();
            let path = out.join(format!("{name}.ckpt"));
            save_separator(&path, &sep)?;
            write_logs(&out, name, &log)?;
            println!("{} final loss {}", path.display(), log.last_train().unwrap_or(f64::NAN));
        }
        Cmd::TrainMixer { data, seps } => {
            let mut cfg = run_config(&cli)?;
            cfg.train.target = TrainTarget::Mixer;
            let bundle = load_bundle(&seps.separators)?;
            let ds = load_dataset(data)?;
            let (mixer, log) = train_mixer(&ds, &cfg.train, &bundle)?;
            create_out(&out)?;
            let path = out.join("mixer.ckpt");
            save_mixer(&path, &mixer)?;
            write_logs(&out, "mixer", &log)?;
            println!("{} final loss {}", path.display(), log.last_train().unwrap_or(f64::NAN));
        }
        Cmd::Separate {
            input,
            seps,
            pipe,
            to_stereo,
        } => {
            let bundle = load_bundle(&seps.separators)?;
            let mixer = pipe.mixer.as_ref().map(load_mixer).transpose()?;
            let mut mix = read_wav(input)?;
            if *to_stereo && mix.channels() == 1 {
                mix = mix.to_stereo();
            }
            let est = demix_parallel(&mix, &bundle, mixer.as_ref(), &PassthroughStub, &pipe.blend)?;
            create_out(&out)?;
            let name = input.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "input".into());
            write_stems(&out, &name, &est)?;
        }
        Cmd::Eval {
            data,
            seps,
            pipe,
            workers,
        } => {
            let cfg = run_config(&cli)?;
            let bundle = load_bundle(&seps.separators)?;
            let mixer = pipe.mixer.as_ref().map(load_mixer).transpose()?;
            let ds = load_dataset(data)?;
            let report = evaluate_parallel(
                ds.songs(),
                &bundle,
                mixer.as_ref(),
                &PassthroughStub,
                &pipe.blend,
                cfg.frame_seconds,
                workers.unwrap_or_else(default_workers),
            )?;
            create_out(&out)?;
            write_text(&out.join("sdr_report.csv"), &render_csv(&report))?;
            print!("{}", render_table(&report));
        }
        Cmd::Blend {
            first,
            second,
            name,
            weights,
        } => {
            let a = load_stems(first, name)?;
            let b = load_stems(second, name)?;
            let set = blend(&a, &b, weights)?;
            create_out(&out)?;
            write_stems(&out, name, &set)?;
        }
        Cmd::DumpTdf { checkpoint, block } => {
            let sep = load_separator(checkpoint)?;
            let names: Vec<String> = sep.net().tdf_blocks().iter().map(|b| b.name().to_string()).collect();
            let name = match block.parse::<usize>() {
                Ok(i) => names.get(i).cloned().ok_or_else(|| {
                    CoreError::Contract(format!("block index {i} out of range; available: {}", names.join(", ")))
                })?,
                Err(_) => block.clone(),
            };
            let (n, m) = tdf_composed(sep.net(), &name)?;
            create_out(&out)?;
            let path = out.join(format!("{name}.csv"));
            write_text(&path, &render_matrix_csv(n, &m))?;
            println!("{} ({n} x {n})", path.display());
        }
        Cmd::ParamCount { checkpoint } => match checkpoint {
            Some(p) => {
                let ck = read_checkpoint(p)?;
                println!("{}", ck.param_count());
            }
            None => {
                let cfg = run_config(&cli)?;
                let net = UNetV2::build(cfg.net, cfg.train.seed)?;
                println!(
                    "separator {} (closed form {})\nmixer {}",
                    net.param_count(),
                    cfg.net.closed_form_param_count(),
                    Mixer::identity(4, cfg.net.in_channels / 2).param_count()
                );
            }
        },
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
