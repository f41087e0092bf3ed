use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use kpbench::commands::{
    calibrate, generate_recording, roundtrip_check, simulate, CalibrateArgs, Resolution, StreamArgs,
};
use kpbench::report::Report;
use kpbench::trajectory::TrajectorySpec;
use kpbench::BenchError;
use kpcodec::codec::AdaptivePolicy;

#[derive(Parser)]
#[command(name = "kpbench", version, about = "Calibrate, simulate and verify the keypoint motion stream")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build a KPFT frequency-table file from trajectories and/or recordings.
    Calibrate {
        #[command(flatten)]
        motion: MotionArgs,
        /// Trajectory seeds; repeat for several calibration trajectories.
        #[arg(long = "seed", default_values_t = [0u64])]
        seeds: Vec<u64>,
        /// Recorded frame files to include.
        #[arg(long = "input")]
        inputs: Vec<PathBuf>,
        /// Calibrate only from --input files.
        #[arg(long)]
        no_trajectory: bool,
        #[command(flatten)]
        policy: PolicyArgs,
        #[arg(long)]
        output: PathBuf,
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Write a quantized trajectory as a recorded frame file.
    Generate {
        #[command(flatten)]
        motion: MotionArgs,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        policy: PolicyArgs,
        #[arg(long)]
        output: PathBuf,
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Stream a trajectory through sender, loopback and receiver.
    Simulate(StreamCli),
    /// Like simulate, but assert the half-precision error bound on every frame.
    RoundtripCheck {
        #[command(flatten)]
        stream: StreamCli,
        /// Flip the raw-mode bit of one motion packet in transit.
        #[arg(long)]
        fault_inject: bool,
        /// Frame to corrupt; defaults to the middle of the run.
        #[arg(long)]
        fault_frame: Option<usize>,
    },
}

#[derive(Args, Clone)]
struct MotionArgs {
    #[arg(long, default_value_t = 20)]
    keypoints: usize,
    #[arg(long, default_value_t = 300)]
    frames: usize,
    /// Pose amplitude (radians and normalized units).
    #[arg(long, default_value_t = 0.2)]
    pose_amplitude: f64,
    #[arg(long, default_value_t = 0.05)]
    deformation_amplitude: f64,
    /// Low-pass coefficient in [0, 1).
    #[arg(long, default_value_t = 0.9)]
    smoothness: f64,
}

impl MotionArgs {
    fn spec(&self, seed: u64) -> TrajectorySpec {
        TrajectorySpec {
            frames: self.frames,
            keypoints: self.keypoints,
            seed,
            pose_amplitude: self.pose_amplitude,
            deformation_amplitude: self.deformation_amplitude,
            smoothness: self.smoothness,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum PolicyKind {
    Fixed,
    Budget,
    Magnitude,
}

#[derive(Args, Clone)]
struct PolicyArgs {
    #[arg(long, value_enum, default_value = "fixed")]
    policy: PolicyKind,
    /// Raw frame budget in octets for --policy budget.
    #[arg(long)]
    budget_bytes: Option<usize>,
}

impl PolicyArgs {
    fn policy(&self) -> Result<AdaptivePolicy, BenchError> {
        match (self.policy, self.budget_bytes) {
            (PolicyKind::Fixed, None) => Ok(AdaptivePolicy::Fixed),
            (PolicyKind::Magnitude, None) => Ok(AdaptivePolicy::Magnitude),
            (PolicyKind::Budget, Some(b)) => Ok(AdaptivePolicy::Budget(b)),
            (PolicyKind::Budget, None) => Err(BenchError::Invalid("--policy budget requires --budget-bytes".into())),
            (_, Some(_)) => Err(BenchError::Invalid("--budget-bytes only applies to --policy budget".into())),
        }
    }
}

#[derive(Args, Clone)]
struct StreamCli {
    #[command(flatten)]
    motion: MotionArgs,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    policy: PolicyArgs,
    /// KPFT table file; calibrates on the trajectory itself when omitted.
    #[arg(long)]
    tables: Option<PathBuf>,
    /// `N` or `WxH`.
    #[arg(long, default_value = "512")]
    resolution: Resolution,
    #[arg(long)]
    report: Option<PathBuf>,
}

impl StreamCli {
    fn args(&self) -> Result<StreamArgs, BenchError> {
        Ok(StreamArgs {
            spec: self.motion.spec(self.seed),
            tables: self.tables.clone(),
            policy: self.policy.policy()?,
            resolution: self.resolution,
        })
    }
}

fn emit(report: &Report, path: Option<&PathBuf>) -> Result<(), BenchError> {
    let text = report.to_string();
    print!("{text}");
    if let Some(p) = path {
        fs::write(p, text)?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<bool, BenchError> {
    match cli.command {
        Command::Calibrate { motion, seeds, inputs, no_trajectory, policy, output, report } => {
            let specs = if no_trajectory { Vec::new() } else { seeds.iter().map(|&s| motion.spec(s)).collect() };
            let args = CalibrateArgs { specs, inputs, policy: policy.policy()?, output };
            emit(&calibrate(&args)?, report.as_ref())?;
            Ok(true)
        }
        Command::Generate { motion, seed, policy, output, report } => {
            emit(&generate_recording(&motion.spec(seed), policy.policy()?, &output)?, report.as_ref())?;
            Ok(true)
        }
        Command::Simulate(stream) => {
            emit(&simulate(&stream.args()?)?, stream.report.as_ref())?;
            Ok(true)
        }
        Command::RoundtripCheck { stream, fault_inject, fault_frame } => {
            let args = stream.args()?;
            let fault = fault_inject.then(|| fault_frame.unwrap_or(args.spec.frames / 2));
            let outcome = roundtrip_check(&args, fault)?;
            emit(&outcome.report, stream.report.as_ref())?;
            Ok(outcome.passed)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
