//! Command-line harness around [`run_pipeline`].

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use clap::Parser;

use crate::error::{Error, Result};
use crate::metrics::GospaParams;
use crate::pipeline::{run_pipeline, PipelineOptions, RunOutput};
use crate::scenario::{build_unprotected_left_scenario, load_scenario, ScenarioConfig};
use crate::v2v::SpoofStream;

pub const BUILTIN_UNPROTECTED_LEFT: &str = "unprotected-left";
pub const SPOOF_GHOST_VEHICLE: &str = "ghost-vehicle";

/// Temporary id carried by the ghost-vehicle preset.
pub const GHOST_TEMP_ID: u32 = 0x0BAD_0001;

#[derive(Clone, Debug, Parser)]
#[command(
    name = "v2v-fusion",
    about = "Run the cooperative tracking pipeline on a scenario"
)]
pub struct RunOptions {
    /// Scenario document (JSON).
    #[arg(long, conflicts_with = "builtin", required_unless_present = "builtin")]
    pub scenario: Option<PathBuf>,
    /// Built-in scenario name (`unprotected-left`).
    #[arg(long)]
    pub builtin: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    /// Per-message drop probability.
    #[arg(long)]
    pub channel_drop: Option<f64>,
    /// Delivery latency in ticks.
    #[arg(long)]
    pub channel_latency: Option<u32>,
    /// Spoof preset (`ghost-vehicle`).
    #[arg(long)]
    pub spoof: Option<String>,
    #[arg(long, default_value_t = 30.0)]
    pub gospa_c: f64,
    #[arg(long, default_value_t = 2)]
    pub gospa_p: u32,
    #[arg(long)]
    pub disable_v2v: bool,
    #[arg(long)]
    pub disable_local: bool,
    /// Also write delivered messages to `bsm.capture`.
    #[arg(long)]
    pub capture_bsm: bool,
}

impl RunOptions {
    /// Defaults for the built-in benchmark, writing to `out`.
    pub fn builtin(out: impl Into<PathBuf>) -> Self {
        Self {
            scenario: None,
            builtin: Some(BUILTIN_UNPROTECTED_LEFT.into()),
            seed: None,
            out: out.into(),
            channel_drop: None,
            channel_latency: None,
            spoof: None,
            gospa_c: 30.0,
            gospa_p: 2,
            disable_v2v: false,
            disable_local: false,
            capture_bsm: false,
        }
    }
}

/// The ghost-vehicle preset: a stationary forged vehicle in ego's exit
/// lane, broadcasting for the whole run.
pub fn ghost_vehicle(cfg: &ScenarioConfig) -> SpoofStream {
    SpoofStream {
        temp_id: GHOST_TEMP_ID,
        start_s: 0.0,
        end_s: cfg.duration_s,
        x_m: -40.0,
        y_m: 1.75,
        vx_mps: 0.0,
        vy_mps: 0.0,
    }
}

/// Resolves the scenario and applies command-line overrides.
pub fn resolve_scenario(opts: &RunOptions) -> Result<ScenarioConfig> {
    let mut cfg = match (&opts.scenario, &opts.builtin) {
        (Some(path), None) => {
            let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
            load_scenario(&text)?
        }
        (None, Some(name)) if name == BUILTIN_UNPROTECTED_LEFT => build_unprotected_left_scenario(),
        (None, Some(name)) => return Err(Error::Options(format!("unknown builtin scenario '{name}'"))),
        _ => {
            return Err(Error::Options(
                "give exactly one of --scenario or --builtin".into(),
            ))
        }
    };
    if let Some(d) = opts.channel_drop {
        cfg.channel.drop_prob = d;
    }
    if let Some(l) = opts.channel_latency {
        cfg.channel.latency_ticks = l;
    }
    match opts.spoof.as_deref() {
        None => {}
        Some(SPOOF_GHOST_VEHICLE) => {
            let ghost = ghost_vehicle(&cfg);
            cfg.channel.spoof_injections.push(ghost);
        }
        Some(other) => return Err(Error::Options(format!("unknown spoof preset '{other}'"))),
    }
    cfg.validate()?;
    Ok(cfg)
}

fn io_err(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Runs the pipeline and writes `metrics.csv`, `summary.txt`,
/// `tracks.jsonl` and, if requested, `bsm.capture` into `opts.out`.
pub fn run(opts: &RunOptions) -> Result<RunOutput> {
    let cfg = resolve_scenario(opts)?;
    let popts = PipelineOptions {
        seed: opts.seed,
        disable_v2v: opts.disable_v2v,
        disable_local: opts.disable_local,
        gospa: GospaParams::new(opts.gospa_p as f64, opts.gospa_c)?,
        switch_penalty: None,
    };
    fs::create_dir_all(&opts.out).map_err(|e| io_err(&opts.out, e))?;

    let output = if opts.capture_bsm {
        let path = opts.out.join("bsm.capture");
        let file = File::create(&path).map_err(|e| io_err(&path, e))?;
        let mut w = BufWriter::new(file);
        let output = run_pipeline(&cfg, &popts, Some(&mut w))?;
        std::io::Write::flush(&mut w).map_err(|e| io_err(&path, e))?;
        output
    } else {
        run_pipeline(&cfg, &popts, None)?
    };

    let write = |name: &str, text: &str| {
        let path = opts.out.join(name);
        fs::write(&path, text).map_err(|e| io_err(&path, e))
    };
    write("metrics.csv", &output.report.to_csv())?;
    write(
        "summary.txt",
        &format!("scenario: {}\n{}", cfg.name, output.summary()),
    )?;
    write("tracks.jsonl", &output.tracks_jsonl())?;
    Ok(output)
}
