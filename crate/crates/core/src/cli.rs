//! Command-line surface. Every artifact goes under `--out`.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::autolabel::{annotate_sequence, runs, ContactMode, FrameRange, LabelConfig, WeightlessAnnotation};
use crate::contact_geometry::TerrainScene;
use crate::control::{sample_domain_rand, DomainRandRanges};
use crate::error::{check_len, Error, Result};
use crate::io::{
    load_annotation, load_motion, load_motion_for, read_json, save_annotation, save_motion, write_json,
    write_reward_csv, write_trajectory_csv, write_w_trace, ProjectManifest, MANIFEST_FORMAT_VERSION,
};
use crate::motion::{differentiate, MotionSequence};
use crate::motion_model::{forward_kinematics, KinematicTree, Vec3};
use crate::rewards::{total_reward, FrameState, ReferenceFrame, RewardBreakdown, RewardWeights};
use crate::seed::{derive_seed, stage_rng};
use crate::sim::{compute_metrics, run_weightless_demo, sit_scenario, synthetic_sit_corpus, DemoConfig, Relaxation};
use crate::smoothing::{smooth_pipeline, SmoothingConfig};
use crate::wm::{
    evaluate, load_checkpoint, predict_sequence, save_checkpoint, train_with_progress, Checkpoint, OnlineWm,
    TrainConfig,
};

#[derive(Parser, Debug)]
#[command(name = "wmkit", version, about = "Weightless-state labeling, training and simulation toolkit")]
pub struct Cli {
    /// Global seed; every stochastic stage derives its own seed from it.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Kinematic tree JSON (defaults to the bundled 23-DoF humanoid).
    #[arg(long, global = true)]
    pub tree: Option<PathBuf>,
    /// Terrain scene JSON (defaults to flat ground at z = 0).
    #[arg(long, global = true)]
    pub scene: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Downsample, moving-average, median-filter and re-interpolate a motion.
    Smooth(SmoothArgs),
    /// Annotate weightless intervals and joints of a motion.
    Label(LabelArgs),
    /// Train the relaxation-level network.
    TrainWm(TrainArgs),
    /// Score a checkpoint and write per-frame w traces.
    EvalWm(EvalArgs),
    /// Per-frame reward breakdown of a motion against a reference.
    Reward(PairArgs),
    /// Draw domain-randomization samples.
    Randomize(RandomizeArgs),
    /// Run the planar sit-down demo.
    Simulate(SimulateArgs),
    /// Tracking errors of a motion against a reference.
    Metrics(PairArgs),
    /// Write a synthetic labeled sit-down corpus for the planar sitter.
    Synth(SynthArgs),
}

#[derive(Args, Debug)]
pub struct SmoothArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, default_value_t = 2)]
    pub downsample: usize,
    #[arg(long, default_value_t = 5)]
    pub ma_window: usize,
    #[arg(long, default_value_t = 5)]
    pub median_window: usize,
}

#[derive(Args, Debug)]
pub struct LabelArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, default_value_t = crate::contact_geometry::DEFAULT_CONTACT_EPS)]
    pub eps: f64,
    #[arg(long, default_value_t = 20)]
    pub delta_t: usize,
    /// Let foot contacts count as support contacts.
    #[arg(long)]
    pub include_feet: bool,
    #[arg(long, default_value = "annotation.json")]
    pub name: String,
}

#[derive(Args, Debug)]
pub struct DataArgs {
    /// Project manifest listing motions and annotations (alternative to the lists below).
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    #[arg(long, num_args = 1..)]
    pub motions: Vec<PathBuf>,
    #[arg(long, num_args = 1..)]
    pub annotations: Vec<PathBuf>,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// JSON training configuration; flags below override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub lambda_smooth: Option<f64>,
    #[arg(long)]
    pub window: Option<usize>,
    /// Comma-separated LSTM widths, e.g. `256,256,64`.
    #[arg(long, value_delimiter = ',')]
    pub hidden: Option<Vec<usize>>,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long, default_value_t = 0.5)]
    pub threshold: f64,
}

#[derive(Args, Debug)]
pub struct PairArgs {
    #[arg(long)]
    pub motion: PathBuf,
    #[arg(long)]
    pub reference: PathBuf,
}

#[derive(Args, Debug)]
pub struct RandomizeArgs {
    #[arg(long, default_value_t = 1)]
    pub count: usize,
    /// JSON ranges overriding the defaults.
    #[arg(long)]
    pub ranges: Option<PathBuf>,
    /// Print the default ranges and exit.
    #[arg(long)]
    pub show_defaults: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum SimMode {
    /// w = 1 throughout.
    Hover,
    /// w from the labels of the hover reference.
    Labeled,
    /// w from a trained checkpoint.
    Network,
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    #[arg(long, value_enum, default_value_t = SimMode::Labeled)]
    pub mode: SimMode,
    #[arg(long, default_value_t = 5.0)]
    pub duration: f64,
    #[arg(long, required_if_eq("mode", "network"))]
    pub checkpoint: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 20)]
    pub count: usize,
    #[arg(long, default_value_t = 150)]
    pub frames: usize,
}

/// Parses `argv` and runs the command; returns the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

pub fn execute(cli: &Cli) -> Result<()> {
    fs::create_dir_all(&cli.out).map_err(|e| Error::io(&cli.out, e))?;
    match &cli.command {
        Command::Smooth(a) => smooth(cli, a),
        Command::Label(a) => label(cli, a),
        Command::TrainWm(a) => train_wm(cli, a),
        Command::EvalWm(a) => eval_wm(cli, a),
        Command::Reward(a) => reward(cli, a),
        Command::Randomize(a) => randomize(cli, a),
        Command::Simulate(a) => simulate(cli, a),
        Command::Metrics(a) => metrics(cli, a),
        Command::Synth(a) => synth(cli, a),
    }
}

fn load_tree(cli: &Cli) -> Result<KinematicTree> {
    match &cli.tree {
        Some(p) => KinematicTree::load(p),
        None => Ok(KinematicTree::example_g1()),
    }
}

fn load_scene(cli: &Cli) -> Result<TerrainScene> {
    match &cli.scene {
        Some(p) => TerrainScene::load(p),
        None => Ok(TerrainScene::flat(0.0)),
    }
}

fn out_file(cli: &Cli, name: &str) -> Result<PathBuf> {
    let p = Path::new(name);
    if p.is_absolute() || p.components().any(|c| !matches!(c, std::path::Component::Normal(_))) {
        return Err(Error::InvalidArgument(format!("output name `{name}` must be a plain relative path")));
    }
    Ok(cli.out.join(p))
}

fn smooth(cli: &Cli, a: &SmoothArgs) -> Result<()> {
    let seq = load_motion(&a.input)?;
    let cfg = SmoothingConfig { downsample_factor: a.downsample, ma_window: a.ma_window, median_window: a.median_window };
    let out = smooth_pipeline(&seq, &cfg)?;
    save_motion(&out_file(cli, "smoothed.json")?, &out)?;
    println!("smoothed {} frames at {} fps", out.len(), out.fps);
    Ok(())
}

fn label(cli: &Cli, a: &LabelArgs) -> Result<()> {
    let tree = load_tree(cli)?;
    let scene = load_scene(cli)?;
    let seq = load_motion_for(&a.input, &tree)?;
    let contact_mode = if a.include_feet { ContactMode::IncludeFeet } else { ContactMode::ExcludeFeet };
    let cfg = LabelConfig { eps: a.eps, delta_t: a.delta_t, contact_mode };
    let ann = annotate_sequence(&seq, &tree, &scene, &cfg, derive_seed(cli.seed, "label"))?;
    save_annotation(&out_file(cli, &a.name)?, &ann)?;
    println!("{} frames, intervals {}", seq.len(), fmt_ranges(&ann.intervals));
    Ok(())
}

fn fmt_ranges(r: &[FrameRange]) -> String {
    let parts: Vec<String> = r.iter().map(|r| format!("[{},{})", r.start, r.end)).collect();
    if parts.is_empty() {
        "none".into()
    } else {
        parts.join(" ")
    }
}

fn load_dataset(d: &DataArgs) -> Result<Vec<(MotionSequence, WeightlessAnnotation)>> {
    let (motions, annotations) = match &d.manifest {
        Some(m) => {
            let m = ProjectManifest::load(m)?;
            (m.motions, m.annotations)
        }
        None => (d.motions.clone(), d.annotations.clone()),
    };
    check_len("annotation files per motion", motions.len(), annotations.len())?;
    if motions.is_empty() {
        return Err(Error::InvalidArgument("no motions given".into()));
    }
    motions.iter().zip(&annotations).map(|(m, a)| Ok((load_motion(m)?, load_annotation(a)?))).collect()
}

fn train_wm(cli: &Cli, a: &TrainArgs) -> Result<()> {
    let data = load_dataset(&a.data)?;
    let mut cfg: TrainConfig = match &a.config {
        Some(p) => read_json(p)?,
        None => TrainConfig::default(),
    };
    cfg.seed = derive_seed(cli.seed, "train-wm");
    if let Some(v) = a.epochs {
        cfg.epochs = v;
    }
    if let Some(v) = a.lr {
        cfg.lr = v;
    }
    if let Some(v) = a.batch_size {
        cfg.batch_size = v;
    }
    if let Some(v) = a.lambda_smooth {
        cfg.lambda_smooth = v;
    }
    if let Some(v) = a.window {
        cfg.window = v;
    }
    if let Some(v) = &a.hidden {
        cfg.hidden_sizes = v.clone();
    }
    let (network, report) = train_with_progress(&data, &cfg, |epoch, loss| {
        if epoch % 10 == 0 {
            eprintln!("epoch {epoch:>4}  loss {loss:.6}");
        }
    })?;
    let ck = Checkpoint { network, train_config: Some(cfg), loss_history: report.loss_history.clone() };
    save_checkpoint(&out_file(cli, "wm.ckpt")?, &ck)?;
    let mut wr = csv::Writer::from_path(out_file(cli, "loss_history.csv")?)?;
    wr.write_record(["epoch", "loss"])?;
    for (i, l) in report.loss_history.iter().enumerate() {
        wr.write_record([i.to_string(), format!("{l:?}")])?;
    }
    wr.flush().map_err(|e| Error::io(&cli.out, e))?;
    println!("trained {} steps, final loss {:.6}", report.steps, report.loss_history.last().copied().unwrap_or(f64::NAN));
    Ok(())
}

#[derive(Serialize)]
struct EvalSummary {
    threshold: f64,
    frame_accuracy: f64,
    joint_accuracy: f64,
    bce: f64,
    mean_total_variation: f64,
    frames: usize,
    sequences: Vec<SequenceEval>,
}

#[derive(Serialize)]
struct SequenceEval {
    trace: String,
    /// Runs of frames where some joint is predicted below the threshold.
    low_w_intervals: Vec<FrameRange>,
    labeled_intervals: Vec<FrameRange>,
}

/// Frames where any joint's w falls below `threshold`, as maximal runs.
pub fn low_w_intervals(pred: &[Vec<f64>], threshold: f64) -> Vec<FrameRange> {
    let flags: Vec<bool> = pred.iter().map(|w| w.iter().any(|&v| v < threshold)).collect();
    runs(&flags)
}

fn eval_wm(cli: &Cli, a: &EvalArgs) -> Result<()> {
    let data = load_dataset(&a.data)?;
    let ck = load_checkpoint(&a.checkpoint)?;
    let report = evaluate(&ck.network, &data, a.threshold)?;
    let mut sequences = Vec::with_capacity(data.len());
    for (i, (seq, ann)) in data.iter().enumerate() {
        let pred = predict_sequence(&ck.network, seq)?;
        let name = format!("w_trace_{i:03}.csv");
        write_w_trace(&out_file(cli, &name)?, seq.fps, &pred, Some(&ann.activation_targets()))?;
        sequences.push(SequenceEval {
            trace: name,
            low_w_intervals: low_w_intervals(&pred, a.threshold),
            labeled_intervals: ann.intervals.clone(),
        });
    }
    let summary = EvalSummary {
        threshold: a.threshold,
        frame_accuracy: report.frame_accuracy,
        joint_accuracy: report.joint_accuracy,
        bce: report.bce,
        mean_total_variation: report.mean_total_variation,
        frames: report.frames,
        sequences,
    };
    write_json(&out_file(cli, "eval.json")?, &summary)?;
    println!(
        "frame accuracy {:.4}, joint accuracy {:.4}, bce {:.5}",
        report.frame_accuracy, report.joint_accuracy, report.bce
    );
    Ok(())
}

/// Kinematic reward inputs for every frame. Actions, torques and
/// accelerations are not part of a motion file and are left at zero.
pub fn frame_states(tree: &KinematicTree, seq: &MotionSequence) -> Result<Vec<FrameState>> {
    let qd = seq.joint_velocities();
    let roots: Vec<[f64; 3]> = seq.frames.iter().map(|f| f.root_position.into()).collect();
    let root_refs: Vec<&[f64]> = roots.iter().map(|r| r.as_slice()).collect();
    let root_v = differentiate(&root_refs, seq.fps);
    let k = seq.dof();
    seq.frames
        .iter()
        .enumerate()
        .map(|(t, f)| {
            let fk = forward_kinematics(tree, f)?;
            let mut s = FrameState::zero(k, fk.world_positions.len(), tree.feet().len());
            s.q = f.q.clone();
            s.qd = qd[t].clone();
            s.root_position = f.root_position;
            s.root_orientation = f.root_orientation;
            s.root_velocity = Vec3::from_column_slice(&root_v[t]);
            s.feet_orientations = tree.feet().iter().map(|&j| fk.world_orientations[j]).collect();
            s.keypoints = fk.world_positions;
            Ok(s)
        })
        .collect()
}

pub fn reward_breakdowns(tree: &KinematicTree, motion: &MotionSequence, reference: &MotionSequence) -> Result<Vec<RewardBreakdown>> {
    check_len("reference frames", motion.len(), reference.len())?;
    let states = frame_states(tree, motion)?;
    let refs = frame_states(tree, reference)?;
    let weights = RewardWeights::default();
    let excluded = tree.feet_dofs();
    states
        .iter()
        .zip(&refs)
        .map(|(s, r)| total_reward(s, &ReferenceFrame::matching(r), &weights, &excluded))
        .collect()
}

fn reward(cli: &Cli, a: &PairArgs) -> Result<()> {
    let tree = load_tree(cli)?;
    let motion = load_motion_for(&a.motion, &tree)?;
    let reference = load_motion_for(&a.reference, &tree)?;
    let rows = reward_breakdowns(&tree, &motion, &reference)?;
    write_reward_csv(&out_file(cli, "reward.csv")?, &rows)?;
    let mean = rows.iter().map(|r| r.total).sum::<f64>() / rows.len().max(1) as f64;
    println!("mean total reward {mean}");
    Ok(())
}

fn randomize(cli: &Cli, a: &RandomizeArgs) -> Result<()> {
    let ranges = match &a.ranges {
        Some(p) => read_json(p)?,
        None => DomainRandRanges::default(),
    };
    ranges.validate()?;
    if a.show_defaults {
        print!("{}", crate::io::to_json_string(&DomainRandRanges::default())?);
        return Ok(());
    }
    let tree = load_tree(cli)?;
    let mut rng = stage_rng(cli.seed, "randomize");
    let samples = (0..a.count)
        .map(|_| sample_domain_rand(&ranges, tree.len(), tree.dof(), &mut rng))
        .collect::<Result<Vec<_>>>()?;
    write_json(&out_file(cli, "randomization.json")?, &samples)?;
    println!("{} samples", samples.len());
    Ok(())
}

fn simulate(cli: &Cli, a: &SimulateArgs) -> Result<()> {
    let sc = sit_scenario(a.duration)?;
    let relaxation = match a.mode {
        SimMode::Hover => Relaxation::Constant(1.0),
        SimMode::Labeled => Relaxation::PerTick(sc.relaxation.clone()),
        SimMode::Network => {
            let path = a.checkpoint.as_ref().expect("clap requires --checkpoint in network mode");
            Relaxation::Network(Box::new(OnlineWm::new(load_checkpoint(path)?.network)))
        }
    };
    let cfg = DemoConfig { duration: a.duration, ..DemoConfig::default() };
    let result = run_weightless_demo(&sc.chain, &sc.scene, &sc.reference, relaxation, &cfg)?;
    write_trajectory_csv(&out_file(cli, "trajectory.csv")?, &result.trajectory)?;
    write_json(&out_file(cli, "demo_report.json")?, &result.report)?;
    let r = &result.report;
    println!(
        "persistent contact {:?}, settled {:?}, fell {}",
        r.persistent_contact_time, r.settle_time, r.fell
    );
    Ok(())
}

fn metrics(cli: &Cli, a: &PairArgs) -> Result<()> {
    let tree = load_tree(cli)?;
    let motion = load_motion_for(&a.motion, &tree)?;
    let reference = load_motion_for(&a.reference, &tree)?;
    let m = compute_metrics(&tree, &motion, &reference)?;
    write_json(&out_file(cli, "metrics.json")?, &m)?;
    println!(
        "E_mpjpe {:.6} E_mpjae {:.6} E_mpjve {:.6} E_root_p {:.6} E_root_r {:.6} E_root_v {:.6}",
        m.e_mpjpe, m.e_mpjae, m.e_mpjve, m.e_root_p, m.e_root_r, m.e_root_v
    );
    Ok(())
}

fn synth(cli: &Cli, a: &SynthArgs) -> Result<()> {
    let corpus = synthetic_sit_corpus(a.count, a.frames, derive_seed(cli.seed, "synth"))?;
    let tree = crate::sim::sitter_chain().to_kinematic_tree()?;
    write_json(&out_file(cli, "tree.json")?, &tree.to_file())?;
    let mut manifest = ProjectManifest {
        format_version: MANIFEST_FORMAT_VERSION,
        tree: Some("tree.json".into()),
        scenes: vec![],
        motions: vec![],
        annotations: vec![],
        checkpoints: vec![],
        seed: cli.seed,
    };
    for (i, s) in corpus.iter().enumerate() {
        let (m, an, sc) = (format!("motion_{i:03}.json"), format!("annotation_{i:03}.json"), format!("scene_{i:03}.json"));
        save_motion(&out_file(cli, &m)?, &s.sequence)?;
        save_annotation(&out_file(cli, &an)?, &s.annotation)?;
        write_json(&out_file(cli, &sc)?, &s.scene)?;
        manifest.motions.push(m.into());
        manifest.annotations.push(an.into());
        manifest.scenes.push(sc.into());
    }
    write_json(&out_file(cli, "manifest.json")?, &manifest)?;
    println!("wrote {} labeled sequences", corpus.len());
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_subcommand_is_usage_error() {
        assert_eq!(run(["wmkit", "frobnicate"]), 2);
        assert_eq!(run(["wmkit"]), 2);
    }

    #[test]
    fn help_exits_zero() {
        assert_eq!(run(["wmkit", "--help"]), 0);
    }

    #[test]
    fn missing_input_is_data_error() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("o");
        let code = run([
            "wmkit".as_ref(),
            "smooth".as_ref(),
            "--input".as_ref(),
            dir.path().join("nope.json").as_os_str(),
            "--out".as_ref(),
            out.as_os_str(),
        ]);
        assert_eq!(code, 1);
    }

    #[test]
    fn output_names_stay_inside_out() {
        let cli = Cli::try_parse_from(["wmkit", "randomize"]).unwrap();
        assert!(out_file(&cli, "../x.json").is_err());
        assert!(out_file(&cli, "/tmp/x.json").is_err());
        assert!(out_file(&cli, "a.json").is_ok());
    }

    #[test]
    fn low_w_runs() {
        let pred = vec![vec![1.0, 1.0], vec![1.0, 0.2], vec![0.1, 0.3], vec![0.9, 0.9]];
        assert_eq!(low_w_intervals(&pred, 0.5), vec![FrameRange::new(1, 3)]);
    }
}
