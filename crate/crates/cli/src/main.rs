//! Single binary exposing the detection pipeline as subcommands. Every
//! subcommand is deterministic given its flags: rerunning with identical
//! inputs produces byte-identical artifacts.
//!
//! Exit codes: 0 success, 2 usage, 3 I/O, 4 format, 5 empty discriminator.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Parser, Subcommand, ValueEnum};
use rayon::prelude::*;

use relubits::attacks::{fgsm, iterated_attack, random_sign_noise, AttackConfig};
use relubits::bits::{extract_bits, BitVector, LayerLayout};
use relubits::data::{load_dataset, save_dataset, DatasetMeta, LabeledDataset};
use relubits::detector::{build_detector, sweep, uniform_grid, DetectorModel, Thresholds};
use relubits::error::Error;
use relubits::geometry::{grid_census, segment_walk};
use relubits::net::{NetworkSpec, TrainConfig};
use relubits::stats::{
    activation_frequency, common_bit_fraction, common_bit_fraction_intersect,
    common_bit_fraction_pooled, frequency_histogram, ActivationDataset, RowFilter, Tag,
};

#[derive(Parser)]
#[command(name = "rbp", version, about = "ReLU bit-pattern pipeline")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Train a fully-connected ReLU classifier and save it
    Train(TrainArgs),
    /// Generate adversarial (or noise) counterparts of a dataset
    Attack(AttackArgs),
    /// Run a dataset through a model and record activation bit vectors
    Bits(BitsArgs),
    /// Emit frequency / common-bit / histogram CSV tables
    Stats(StatsArgs),
    /// Fit a detector at one threshold
    Fit(FitArgs),
    /// Sweep a threshold grid, select on validation accuracy
    Sweep(SweepArgs),
    /// Evaluate a saved detector on original + adversarial bit matrices
    Eval(EvalArgs),
    /// Walk the segment between two inputs, recording region transitions
    Walk(WalkArgs),
    /// Census of activation regions over a 2D grid
    Census(CensusArgs),
}

#[derive(clap::Args)]
struct TrainArgs {
    /// Training dataset (RBD1 container)
    #[arg(long)]
    data: PathBuf,
    /// Comma-separated layer dimensions, e.g. 784,64,32,10
    #[arg(long)]
    layers: String,
    #[arg(long, default_value_t = 0)]
    net_seed: u64,
    #[arg(long, default_value_t = 1.0)]
    init_scale: f64,
    #[arg(long, default_value_t = 10)]
    epochs: usize,
    #[arg(long, default_value_t = 0.05)]
    lr: f64,
    #[arg(long, default_value_t = 32)]
    batch_size: usize,
    /// Shuffle seed for mini-batch SGD
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output model file (RBP1 container)
    #[arg(long)]
    out: PathBuf,
    /// Optional metrics JSON path; defaults to stdout
    #[arg(long)]
    metrics_out: Option<PathBuf>,
}

#[derive(Copy, Clone, ValueEnum)]
enum AttackKind {
    Fgsm,
    Iter,
    Noise,
}

#[derive(clap::Args)]
struct AttackArgs {
    #[arg(long)]
    model: PathBuf,
    /// Clean dataset (RBD1)
    #[arg(long)]
    data: PathBuf,
    /// Attacked dataset output (RBD1, source header marked adversarial)
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value_t = AttackKind::Fgsm)]
    kind: AttackKind,
    #[arg(long)]
    eps: f64,
    #[arg(long, default_value_t = 10)]
    steps: usize,
    /// Per-iteration step size for the iterated attack
    #[arg(long)]
    step_size: Option<f64>,
    /// Optional output clamp, as "lo,hi"
    #[arg(long)]
    clamp: Option<String>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Copy, Clone, ValueEnum)]
enum TagArg {
    Original,
    Adversarial,
}

#[derive(clap::Args)]
struct BitsArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
    /// Row tag recorded in the bit matrix
    #[arg(long, value_enum)]
    tag: TagArg,
    /// Output bit matrix (RBM1 container)
    #[arg(long)]
    out: PathBuf,
}

#[derive(clap::Args)]
struct StatsArgs {
    /// Bit matrix of original images (RBM1)
    #[arg(long)]
    orig: PathBuf,
    /// Bit matrix of adversarial images (RBM1)
    #[arg(long)]
    adv: PathBuf,
    /// Histogram bin count
    #[arg(long, default_value_t = 10)]
    bins: usize,
    /// Output prefix; writes <prefix>frequency.csv, <prefix>common.csv,
    /// <prefix>histogram.csv
    #[arg(long)]
    out_prefix: String,
}

#[derive(clap::Args)]
struct FitArgs {
    #[arg(long)]
    orig: PathBuf,
    #[arg(long)]
    adv: PathBuf,
    /// Uniform threshold applied to all four tests
    #[arg(long)]
    lambda: f64,
    #[arg(long, default_value_t = 0.5)]
    vote_threshold: f64,
    /// Output detector file (RBC1 container)
    #[arg(long)]
    out: PathBuf,
}

#[derive(clap::Args)]
struct SweepArgs {
    #[arg(long)]
    train_orig: PathBuf,
    #[arg(long)]
    train_adv: PathBuf,
    #[arg(long)]
    val_orig: PathBuf,
    #[arg(long)]
    val_adv: PathBuf,
    #[arg(long)]
    lambda_min: f64,
    #[arg(long)]
    lambda_max: f64,
    #[arg(long)]
    lambda_steps: usize,
    #[arg(long)]
    out_csv: PathBuf,
    #[arg(long)]
    out_model: PathBuf,
}

#[derive(clap::Args)]
struct EvalArgs {
    #[arg(long)]
    detector: PathBuf,
    #[arg(long)]
    orig: PathBuf,
    #[arg(long)]
    adv: PathBuf,
    /// Optional report path; defaults to stdout
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(clap::Args)]
struct WalkArgs {
    #[arg(long)]
    model: PathBuf,
    /// Start point, comma-separated coordinates
    #[arg(long, allow_hyphen_values = true)]
    from: String,
    /// End point, comma-separated coordinates
    #[arg(long, allow_hyphen_values = true)]
    to: String,
    /// Parameter-space resolution of the bisection
    #[arg(long, default_value_t = 1e-6)]
    delta: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(clap::Args)]
struct CensusArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long, default_value_t = -1.0, allow_hyphen_values = true)]
    lo: f64,
    #[arg(long, default_value_t = 1.0, allow_hyphen_values = true)]
    hi: f64,
    /// Grid has (2^depth + 1)^2 points
    #[arg(long, default_value_t = 8)]
    depth: u32,
    #[arg(long)]
    out: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Ok(v) = std::env::var("RBP_THREADS") {
        match v.parse::<usize>() {
            Ok(n) if n >= 1 => {
                // ignore failure: the pool can only be configured once
                let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
            }
            _ => {
                eprintln!("error[2]: usage: RBP_THREADS must be a positive integer, got {v:?}");
                return ExitCode::from(2);
            }
        }
    }
    match run(cli.cmd) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let code = match &e {
                Error::Io(_) => 3u8,
                Error::Parse { .. } => 4,
                Error::EmptyDiscriminator => 5,
                _ => 2,
            };
            eprintln!("error[{code}]: {e}");
            ExitCode::from(code)
        }
    }
}

fn run(cmd: Cmd) -> Result<(), Error> {
    match cmd {
        Cmd::Train(a) => cmd_train(a),
        Cmd::Attack(a) => cmd_attack(a),
        Cmd::Bits(a) => cmd_bits(a),
        Cmd::Stats(a) => cmd_stats(a),
        Cmd::Fit(a) => cmd_fit(a),
        Cmd::Sweep(a) => cmd_sweep(a),
        Cmd::Eval(a) => cmd_eval(a),
        Cmd::Walk(a) => cmd_walk(a),
        Cmd::Census(a) => cmd_census(a),
    }
}

fn parse_number_list(s: &str, what: &str) -> Result<Vec<f64>, Error> {
    s.split(',')
        .map(|t| {
            t.trim()
                .parse::<f64>()
                .map_err(|_| Error::Domain(format!("bad {what} entry {t:?}")))
        })
        .collect()
}

fn open_in(path: &Path) -> Result<File, Error> {
    File::open(path).map_err(Error::Io)
}

fn create_out(path: &Path) -> Result<BufWriter<File>, Error> {
    Ok(BufWriter::new(File::create(path).map_err(Error::Io)?))
}

fn load_bits(path: &Path) -> Result<ActivationDataset, Error> {
    ActivationDataset::load(open_in(path)?)
}

fn write_json(value: &serde_json::Value, out: Option<&Path>) -> Result<(), Error> {
    let text = format!("{value:#}\n");
    match out {
        Some(p) => create_out(p)?.write_all(text.as_bytes()).map_err(Error::Io),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn cmd_train(a: TrainArgs) -> Result<(), Error> {
    let layers: Vec<usize> = a
        .layers
        .split(',')
        .map(|t| {
            t.trim()
                .parse::<usize>()
                .map_err(|_| Error::Domain(format!("bad layer dimension {t:?}")))
        })
        .collect::<Result<_, _>>()?;
    let ds = load_dataset(open_in(&a.data)?)?;
    let net = NetworkSpec::random(layers, a.net_seed, a.init_scale)?;
    let cfg = TrainConfig {
        epochs: a.epochs,
        learning_rate: a.lr,
        batch_size: a.batch_size,
        seed: a.seed,
        weight_init_scale: a.init_scale,
    };
    let outcome = net.train(&ds.features, &ds.labels, &cfg)?;
    outcome.net.save(create_out(&a.out)?)?;
    let metrics = serde_json::json!({
        "final_train_accuracy": outcome.final_train_accuracy,
        "final_train_loss": outcome.final_train_loss,
        "model": a.out,
    });
    write_json(&metrics, a.metrics_out.as_deref())
}

fn cmd_attack(a: AttackArgs) -> Result<(), Error> {
    let net = NetworkSpec::load(open_in(&a.model)?)?;
    let ds = load_dataset(open_in(&a.data)?)?;
    let clamp = match &a.clamp {
        Some(s) => {
            let v = parse_number_list(s, "clamp")?;
            if v.len() != 2 {
                return Err(Error::Domain("clamp expects exactly \"lo,hi\"".into()));
            }
            Some((v[0], v[1]))
        }
        None => None,
    };
    let cfg = AttackConfig {
        epsilon: a.eps,
        steps: a.steps,
        step_size: a.step_size.unwrap_or(a.eps / a.steps.max(1) as f64),
        clamp,
        seed: a.seed,
    };
    let kind_name = match a.kind {
        AttackKind::Fgsm => "fgsm",
        AttackKind::Iter => "iter",
        AttackKind::Noise => "noise",
    };
    let attacked: Vec<Vec<f64>> = ds
        .features
        .par_iter()
        .zip(ds.labels.par_iter())
        .map(|(x, &y)| match a.kind {
            AttackKind::Fgsm => fgsm(&net, x, y, &cfg),
            AttackKind::Iter => iterated_attack(&net, x, y, &cfg),
            AttackKind::Noise => random_sign_noise(x, &cfg),
        })
        .collect::<Result<_, _>>()?;
    let meta = DatasetMeta {
        source: format!("adversarial:{kind_name}:{}", ds.meta.source),
        normalization: ds.meta.normalization.clone(),
        seed: a.seed,
    };
    let out = LabeledDataset::new(attacked, ds.labels.clone(), meta)?;
    save_dataset(&out, create_out(&a.out)?)
}

fn cmd_bits(a: BitsArgs) -> Result<(), Error> {
    let net = NetworkSpec::load(open_in(&a.model)?)?;
    let ds = load_dataset(open_in(&a.data)?)?;
    let layout = Arc::new(LayerLayout::new(net.hidden_widths())?);
    let rows: Vec<BitVector> = ds
        .features
        .par_iter()
        .map(|x| extract_bits(&net.forward(x)?, &layout))
        .collect::<Result<_, _>>()?;
    let tag = match a.tag {
        TagArg::Original => Tag::Original,
        TagArg::Adversarial => Tag::Adversarial,
    };
    let bits = ActivationDataset::new(rows, vec![tag; ds.len()], ds.labels.clone(), layout)?;
    bits.save(create_out(&a.out)?)
}

fn cmd_stats(a: StatsArgs) -> Result<(), Error> {
    let orig = load_bits(&a.orig)?;
    let adv = load_bits(&a.adv)?;
    if orig.layout() != adv.layout() {
        return Err(Error::Shape("bit matrices have different layouts".into()));
    }
    let layout = Arc::clone(orig.layout());
    let p = activation_frequency(&orig, RowFilter::All)?;
    let q = activation_frequency(&adv, RowFilter::All)?;

    let mut w = create_out(Path::new(&format!("{}frequency.csv", a.out_prefix)))?;
    writeln!(w, "node_index,layer,local_index,p_orig,p_adv,diff")?;
    for (layer, &width) in layout.widths().iter().enumerate() {
        let start = layout.offsets()[layer];
        for local in 0..width {
            let k = start + local;
            let (po, pa) = (p.values()[k], q.values()[k]);
            writeln!(w, "{k},{layer},{local},{po},{pa},{}", po - pa)?;
        }
    }
    w.flush()?;

    let mut w = create_out(Path::new(&format!("{}common.csv", a.out_prefix)))?;
    writeln!(
        w,
        "layer,frac_common1_orig,frac_common1_adv,frac_common1_both,frac_common1_intersect,\
         frac_common0_orig,frac_common0_adv,frac_common0_both,frac_common0_intersect"
    )?;
    let table = |value: bool| -> Result<[Vec<f64>; 4], Error> {
        Ok([
            common_bit_fraction(&orig, value, RowFilter::All)?,
            common_bit_fraction(&adv, value, RowFilter::All)?,
            common_bit_fraction_pooled(&orig, &adv, value)?,
            common_bit_fraction_intersect(&orig, &adv, value)?,
        ])
    };
    let ones = table(true)?;
    let zeros = table(false)?;
    for layer in 0..layout.num_layers() {
        write!(w, "{layer}")?;
        for col in ones.iter().chain(zeros.iter()) {
            write!(w, ",{}", col[layer])?;
        }
        writeln!(w)?;
    }
    w.flush()?;

    let mut w = create_out(Path::new(&format!("{}histogram.csv", a.out_prefix)))?;
    writeln!(w, "profile,layer,bin_index,bin_lo,bin_hi,count")?;
    for (name, profile) in [("orig", &p), ("adv", &q)] {
        let per_layer = frequency_histogram(profile, a.bins, true)?;
        for (layer, counts) in per_layer.iter().enumerate() {
            for (b, &count) in counts.iter().enumerate() {
                let lo = b as f64 / a.bins as f64;
                let hi = (b + 1) as f64 / a.bins as f64;
                writeln!(w, "{name},{layer},{b},{lo},{hi},{count}")?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

fn cmd_fit(a: FitArgs) -> Result<(), Error> {
    let orig = load_bits(&a.orig)?;
    let adv = load_bits(&a.adv)?;
    let mut model = build_detector(&orig, &adv, &Thresholds::uniform(a.lambda))?;
    model.set_vote_threshold(a.vote_threshold)?;
    model.save(create_out(&a.out)?)?;
    let summary = serde_json::json!({
        "lambda": a.lambda,
        "n_bits": model.n_bits(),
        "bits_per_layer": model.bits_per_layer(),
        "overlap_removed": model.overlap_removed(),
        "model": a.out,
    });
    write_json(&summary, None)
}

fn cmd_sweep(a: SweepArgs) -> Result<(), Error> {
    let train_orig = load_bits(&a.train_orig)?;
    let train_adv = load_bits(&a.train_adv)?;
    let val_orig = load_bits(&a.val_orig)?;
    let val_adv = load_bits(&a.val_adv)?;
    let grid = uniform_grid(a.lambda_min, a.lambda_max, a.lambda_steps);
    let result = sweep(&train_orig, &train_adv, &val_orig, &val_adv, &grid)?;

    let mut w = create_out(&a.out_csv)?;
    writeln!(w, "lambda,n_bits,val_accuracy,tp,tn,valid")?;
    for r in &result.rows {
        writeln!(
            w,
            "{},{},{},{},{},{}",
            r.lambda, r.n_bits, r.val_accuracy, r.tp_rate, r.tn_rate, r.valid
        )?;
    }
    w.flush()?;
    result.selected_model.save(create_out(&a.out_model)?)?;
    let summary = serde_json::json!({
        "selected_lambda": result.selected_lambda,
        "n_bits": result.selected_model.n_bits(),
        "grid_points": result.rows.len(),
        "model": a.out_model,
    });
    write_json(&summary, None)
}

fn cmd_eval(a: EvalArgs) -> Result<(), Error> {
    let model = DetectorModel::load(open_in(&a.detector)?)?;
    let orig = load_bits(&a.orig)?;
    let adv = load_bits(&a.adv)?;
    let report = model.evaluate(&orig, &adv)?;
    let t = report.thresholds;
    let json = serde_json::json!({
        "accuracy": report.accuracy,
        "tp_rate": report.tp_rate,
        "tn_rate": report.tn_rate,
        "true_positives": report.true_positives,
        "false_negatives": report.false_negatives,
        "true_negatives": report.true_negatives,
        "false_positives": report.false_positives,
        "n_bits": report.n_bits,
        "lambda": [t.lambda1, t.lambda2, t.lambda3, t.lambda4],
        "vote_threshold": model.vote_threshold(),
    });
    write_json(&json, a.out.as_deref())
}

fn cmd_walk(a: WalkArgs) -> Result<(), Error> {
    let net = NetworkSpec::load(open_in(&a.model)?)?;
    let from = parse_number_list(&a.from, "--from")?;
    let to = parse_number_list(&a.to, "--to")?;
    let walk = segment_walk(&net, &from, &to, a.delta)?;
    let mut w = create_out(&a.out)?;
    writeln!(w, "t_lo,t_hi,flipped_indices")?;
    for tr in &walk.transitions {
        let flips: Vec<String> = tr.flipped.iter().map(|k| k.to_string()).collect();
        writeln!(w, "{},{},{}", tr.t_lo, tr.t_hi, flips.join(" "))?;
    }
    w.flush()?;
    let summary = serde_json::json!({
        "transitions": walk.transitions.len(),
        "regions": walk.regions.len(),
        "total_flips": walk.total_flips(),
    });
    write_json(&summary, None)
}

fn cmd_census(a: CensusArgs) -> Result<(), Error> {
    let net = NetworkSpec::load(open_in(&a.model)?)?;
    let census = grid_census(&net, a.lo, a.hi, a.depth)?;
    let mut w = create_out(&a.out)?;
    writeln!(w, "bitvector_hex,count,witness_x,witness_y")?;
    for entry in &census {
        writeln!(
            w,
            "{},{},{},{}",
            entry.bits.to_hex(),
            entry.count,
            entry.witness[0],
            entry.witness[1]
        )?;
    }
    w.flush()?;
    let summary = serde_json::json!({ "regions": census.len() });
    write_json(&summary, None)
}
