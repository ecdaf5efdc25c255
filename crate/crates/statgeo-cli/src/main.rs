//! Command line for the statgeo engine: loads a scene file (or a built-in
//! gallery scene), runs one verification command against a named object, and
//! writes a deterministic report.
//!
//! Exit codes: 0 success, 1 usage, 2 parse/validation, 3 precondition,
//! 4 tolerance failure, 5 numerical failure.

mod commands;
mod gallery;
mod report;
mod scene;

use clap::{Parser, Subcommand};
use commands::{CmdError, RunOptions};
use report::Report;
use scene::Scene;
use statgeo::fd::{FdConfig, Scheme};
use statgeo::qcs::StructurePolicy;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "statgeo",
    version,
    about = "Numerical checks for statistical-manifold geometry with degenerate metrics"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args, Clone)]
struct Common {
    /// Scene file path, or `gallery:<name>` for a built-in scene.
    #[arg(long)]
    scene: String,
    /// Named object the command operates on.
    #[arg(long)]
    object: String,
    /// Finite-difference step for derived fields (overrides the scene's
    /// fd fragment; default 1e-3).
    #[arg(long)]
    fd_step: Option<f64>,
    /// Multiplier applied to every check tolerance.
    #[arg(long, default_value_t = 1.0)]
    tol: f64,
    /// Validation grid points per axis.
    #[arg(long, default_value_t = 4)]
    grid: usize,
    /// Output directory for report.json and data dumps.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads (default: all cores). Results are identical for any
    /// value.
    #[arg(long)]
    jobs: Option<usize>,
    /// Output format on stdout.
    #[arg(long, default_value = "text")]
    format: String,
}

#[derive(Subcommand)]
enum Command {
    /// Fisher metric, cubic tensor and rank diagnostics of a model.
    Fisher(Common),
    /// Duality of the ±α connection pair over a parameter grid.
    AlphaCheck {
        #[command(flatten)]
        common: Common,
        /// Alpha values, comma separated.
        #[arg(long, default_value = "-1,0,0.7,1")]
        alpha: String,
    },
    /// Classical condition ledger for a model's (g, ∇^(1), ∇^(-1)).
    CodazziCheck(Common),
    /// Extract (h, C, ∇, ∇*) from a contrast function.
    ContrastExtract(Common),
    /// Verify a constructed weak contrast function against its sources.
    ContrastBuild(Common),
    /// Forced blow-up of dual connection forms across a degeneracy.
    BlowupProbe(Common),
    /// Condition ledger of a quasi-Codazzi structure.
    QuasiCodazziCheck(Common),
    /// Verify a bundle isomorphism and its invariants.
    IsoCheck(Common),
    /// Reconstruct the Legendre atlas of a dually flat structure.
    Reconstruct(Common),
    /// Build a wavefront structure and check its invariants.
    Front(Common),
    /// List built-in scenes or dump one to stdout.
    Gallery {
        #[arg(long)]
        dump: Option<String>,
    },
    /// Run every gallery scene's designated command suite.
    Suite {
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        jobs: Option<usize>,
        #[arg(long, default_value = "text")]
        format: String,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            // clap's own exit code conventions differ from ours
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err((code, msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(code)
        }
    }
}

type Failure = (u8, String);

fn install_pool(jobs: Option<usize>) -> Result<rayon::ThreadPool, Failure> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(j) = jobs {
        builder = builder.num_threads(j.max(1));
    }
    builder
        .build()
        .map_err(|e| (5u8, format!("thread pool: {e}")))
}

fn run(cli: Cli) -> Result<ExitCode, Failure> {
    match cli.command {
        Command::Gallery { dump } => {
            match dump {
                None => {
                    for (name, _) in gallery::SCENES {
                        println!("{name}");
                    }
                }
                Some(name) => match gallery::scene_text(&name) {
                    Some(text) => print!("{text}"),
                    None => return Err((1, format!("unknown gallery scene `{name}`"))),
                },
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Suite { out, jobs, format } => {
            let pool = install_pool(jobs)?;
            let report = pool.install(run_suite)?;
            finish(&report, out.as_deref(), &format)
        }
        Command::Fisher(c) => dispatch(c, |scene, object, opt, out| {
            commands::fisher(scene, object, opt, out)
        }),
        Command::AlphaCheck { common, alpha } => {
            let alphas: Vec<f64> = alpha
                .split(',')
                .map(|s| s.trim().parse::<f64>())
                .collect::<Result<_, _>>()
                .map_err(|e| (1u8, format!("bad --alpha list: {e}")))?;
            dispatch(common, move |scene, object, opt, _out| {
                commands::alpha_check(scene, object, &alphas, opt)
            })
        }
        Command::CodazziCheck(c) => dispatch(c, |scene, object, opt, _out| {
            commands::codazzi_check(scene, object, opt)
        }),
        Command::ContrastExtract(c) => dispatch(c, |scene, object, opt, _out| {
            commands::contrast_extract(scene, object, opt)
        }),
        Command::ContrastBuild(c) => dispatch(c, |scene, object, opt, _out| {
            commands::contrast_build(scene, object, opt)
        }),
        Command::BlowupProbe(c) => dispatch(c, |scene, object, opt, _out| {
            commands::blowup_probe_cmd(scene, object, opt)
        }),
        Command::QuasiCodazziCheck(c) => dispatch(c, |scene, object, opt, _out| {
            commands::quasi_codazzi_check(scene, object, opt)
        }),
        Command::IsoCheck(c) => dispatch(c, |scene, object, opt, _out| {
            commands::iso_check(scene, object, opt)
        }),
        Command::Reconstruct(c) => dispatch(c, |scene, object, opt, out| {
            commands::reconstruct(scene, object, opt, out)
        }),
        Command::Front(c) => dispatch(c, |scene, object, opt, _out| {
            commands::front_cmd(scene, object, opt)
        }),
    }
}

fn load(scene_arg: &str, fd_step: Option<f64>) -> Result<Scene, Failure> {
    let policy = StructurePolicy {
        grid_m: 4,
        lagrange_tol: 1e-9,
        fd: FdConfig::new(1e-3, Scheme::Central4, true),
    };
    let (text, name) = if let Some(g) = scene_arg.strip_prefix("gallery:") {
        let text = gallery::scene_text(g).ok_or((1u8, format!("unknown gallery scene `{g}`")))?;
        (text.to_string(), scene_arg.to_string())
    } else {
        let text = std::fs::read_to_string(scene_arg)
            .map_err(|e| (2u8, format!("cannot read scene `{scene_arg}`: {e}")))?;
        (text, scene_arg.to_string())
    };
    Scene::load(&text, &name, policy, fd_step)
        .map_err(|errs| (2u8, scene::parse_errors_to_string(&errs)))
}

fn dispatch<F>(common: Common, f: F) -> Result<ExitCode, Failure>
where
    F: FnOnce(&Scene, &str, RunOptions, Option<&std::path::Path>) -> Result<Report, CmdError>
        + Send,
{
    let pool = install_pool(common.jobs)?;
    let scene = load(&common.scene, common.fd_step)?;
    let opt = RunOptions {
        grid: common.grid.max(2),
        tol_scale: common.tol,
        fd: scene.policy.fd,
    };
    let report = pool
        .install(|| f(&scene, &common.object, opt, common.out.as_deref()))
        .map_err(cmd_failure)?;
    finish(&report, common.out.as_deref(), &common.format)
}

fn cmd_failure(e: CmdError) -> Failure {
    match e {
        CmdError::Validate(m) => (2, m),
        CmdError::Precondition(m) => (3, m),
        CmdError::Numeric(m) => (5, m),
    }
}

fn finish(
    report: &Report,
    out: Option<&std::path::Path>,
    format: &str,
) -> Result<ExitCode, Failure> {
    if let Some(dir) = out {
        std::fs::create_dir_all(dir).map_err(|e| (5u8, format!("cannot create out dir: {e}")))?;
        let path = dir.join("report.json");
        std::fs::write(&path, report.to_json())
            .map_err(|e| (5u8, format!("cannot write report: {e}")))?;
    }
    match format {
        "json" => print!("{}", report.to_json()),
        _ => print!("{}", report.render_text()),
    }
    if report.all_pass() {
        Ok(ExitCode::SUCCESS)
    } else {
        Ok(ExitCode::from(4))
    }
}

fn run_suite() -> Result<Report, Failure> {
    let mut merged = Report::new("suite", "gallery", "all");
    for (scene_name, _) in gallery::SCENES {
        let scene = load(&format!("gallery:{scene_name}"), None)?;
        for entry in gallery::suite_for(scene_name) {
            let opt = RunOptions::default();
            let rep = match entry.command {
                "fisher" => commands::fisher(&scene, entry.object, opt, None),
                "alpha-check" => {
                    commands::alpha_check(&scene, entry.object, &[-1.0, 0.0, 0.7, 1.0], opt)
                }
                "codazzi-check" => commands::codazzi_check(&scene, entry.object, opt),
                "contrast-extract" => commands::contrast_extract(&scene, entry.object, opt),
                "contrast-build" => commands::contrast_build(&scene, entry.object, opt),
                "blowup-probe" => commands::blowup_probe_cmd(&scene, entry.object, opt),
                "quasi-codazzi-check" => commands::quasi_codazzi_check(&scene, entry.object, opt),
                "reconstruct" => commands::reconstruct(&scene, entry.object, opt, None),
                "iso-check" => commands::iso_check(&scene, entry.object, opt),
                "front" => commands::front_cmd(&scene, entry.object, opt),
                other => return Err((1, format!("unknown suite command `{other}`"))),
            }
            .map_err(cmd_failure)?;
            merged.merge_prefixed(&format!("{scene_name}:{}:{}", entry.command, entry.object), rep);
        }
    }
    Ok(merged)
}
