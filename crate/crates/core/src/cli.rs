//! Command-line front end. Exit codes: 0 success, 1 episode failure,
//! 2 usage or configuration error.

use std::ffi::OsString;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::config::{ScenarioConfig, SweepKind};
use crate::error::{Error, Result};
use crate::planner::PlannerMode;
use crate::sim::{
    push_sweep, run_episode, success_rate_sweep, write_success_csv, write_sweep_csv, EpisodeResult,
};
use crate::terrain::{region_plane, TerrainPlane};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;

/// Half-width of the region used as ground truth in terrain logs (m).
const TRUTH_REGION: f64 = 0.25;

#[derive(Debug, Parser)]
#[command(name = "footstep", version, about = "Footstep location and timing planner on the LIP")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// Key-value config file.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Override a config key, e.g. `--set ref_vx=0.2`. Repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, value_name = "DIR", default_value = "out")]
    pub out: PathBuf,
    #[arg(long, global = true)]
    pub mode: Option<PlannerMode>,
    /// Run the reference loop in the deterministic interleaved mode.
    #[arg(long, global = true)]
    pub single_thread: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Walk without disturbances.
    Walk,
    /// One push, compared across planner modes.
    Push {
        /// Push force (N).
        #[arg(long)]
        force: Option<f64>,
        /// Push direction in degrees (0 = forward, 90 = left).
        #[arg(long, allow_negative_numbers = true)]
        direction: Option<f64>,
    },
    /// Maximum recoverable push per direction, or success rate over terrain.
    Sweep,
    /// Terrain-aware walk with plane estimates logged.
    Terrain,
}

struct Context {
    cfg: ScenarioConfig,
    out: PathBuf,
    threaded: bool,
}

fn config_error(e: impl std::fmt::Display) -> Error {
    Error::Config(e.to_string())
}

fn load_config(common: &CommonArgs, extra: &[String]) -> Result<ScenarioConfig> {
    let mut overrides = common.overrides.clone();
    overrides.extend_from_slice(extra);
    if let Some(m) = common.mode {
        overrides.push(format!("mode=\"{m}\""));
    }
    if let Some(s) = common.seed {
        overrides.push(format!("seed={s}"));
    }
    match &common.config {
        Some(p) => ScenarioConfig::load(p, &overrides),
        None => ScenarioConfig::parse_with_overrides("", &overrides),
    }
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>> {
    let path = dir.join(name);
    File::create(&path)
        .map(BufWriter::new)
        .map_err(|e| config_error(format!("cannot write {}: {e}", path.display())))
}

fn write_episode(ctx: &Context, prefix: &str, mode: PlannerMode, res: &EpisodeResult) -> Result<()> {
    let mut f = create(&ctx.out, &format!("{prefix}_log.csv"))?;
    res.write_log_csv(&mut f)?;
    f.flush()?;
    let mut f = create(&ctx.out, &format!("{prefix}_steps.csv"))?;
    res.write_steps_csv(&mut f)?;
    f.flush()?;
    let mut f = create(&ctx.out, &format!("{prefix}_summary.json"))?;
    writeln!(f, "{}", res.summary_json(mode))?;
    f.flush()?;
    Ok(())
}

fn report(prefix: &str, mode: PlannerMode, res: &EpisodeResult) {
    match (&res.failure, res.steps_to_recover) {
        (Some(why), _) => println!("{prefix} [{mode}]: failed at {:.3} s: {why}", res.sim_time),
        (None, Some(n)) if res.success => println!("{prefix} [{mode}]: ok, stable after {n} steps"),
        _ => println!("{prefix} [{mode}]: no stable walk within {:.3} s", res.sim_time),
    }
}

pub fn cmd_walk(cfg: &ScenarioConfig, out: &Path, threaded: bool) -> Result<i32> {
    let ctx = prepare(cfg, out, threaded)?;
    let spec = ctx.cfg.problem_spec()?;
    let scenario = ctx.cfg.scenario(ctx.threaded)?;
    let res = run_episode(&spec, &scenario, ctx.cfg.seed)?;
    write_episode(&ctx, "walk", ctx.cfg.mode, &res)?;
    report("walk", ctx.cfg.mode, &res);
    Ok(if res.success { EXIT_OK } else { EXIT_FAILURE })
}

/// Runs the configured mode followed by `compare_modes`; the exit code
/// follows the configured mode. A zero force runs the plain walk.
pub fn cmd_push(cfg: &ScenarioConfig, out: &Path, threaded: bool) -> Result<i32> {
    let ctx = prepare(cfg, out, threaded)?;
    let mut modes = vec![ctx.cfg.mode];
    for m in &ctx.cfg.compare_modes {
        if !modes.contains(m) {
            modes.push(*m);
        }
    }
    let mut table = create(&ctx.out, "push_compare.csv")?;
    writeln!(table, "# push {} N at {} deg", ctx.cfg.push_force, ctx.cfg.push_direction)?;
    writeln!(table, "mode,success,steps_to_recover,failure")?;
    let mut code = EXIT_OK;
    for (i, &mode) in modes.iter().enumerate() {
        let mut c = ctx.cfg.clone();
        c.mode = mode;
        let spec = c.problem_spec()?;
        let mut scenario = c.scenario(ctx.threaded)?;
        if c.push_force > 0.0 {
            scenario.push = Some(c.push_event());
        }
        let res = run_episode(&spec, &scenario, c.seed)?;
        write_episode(&ctx, &format!("push_{mode}"), mode, &res)?;
        report("push", mode, &res);
        writeln!(
            table,
            "{},{},{},{}",
            mode,
            res.success,
            res.steps_to_recover.map_or(String::new(), |n| n.to_string()),
            res.failure.as_deref().unwrap_or("").replace(',', ";")
        )?;
        if i == 0 && !res.success {
            code = EXIT_FAILURE;
        }
    }
    table.flush()?;
    Ok(code)
}

pub fn cmd_sweep(cfg: &ScenarioConfig, out: &Path, threaded: bool) -> Result<i32> {
    let ctx = prepare(cfg, out, threaded)?;
    let spec = ctx.cfg.problem_spec()?;
    // Sweep episodes run in parallel with the interleaved planner.
    let mut base = ctx.cfg.scenario(false)?;
    base.push = Some(ctx.cfg.push_event());
    match ctx.cfg.sweep {
        SweepKind::Push => {
            let rows = push_sweep(&spec, &base, &ctx.cfg.sweep_config());
            let mut f = create(&ctx.out, "sweep.csv")?;
            write_sweep_csv(&rows, &mut f)?;
            f.flush()?;
            for r in &rows {
                println!("{:>12} {:>6.1} deg  {:>7.1} N", r.mode.name(), r.direction_deg, r.max_force);
            }
        }
        SweepKind::Success => {
            let rows = success_rate_sweep(
                &spec,
                &base,
                &ctx.cfg.conditions(),
                ctx.cfg.terrain_family,
                &ctx.cfg.terrain_params,
                ctx.cfg.trials,
                ctx.cfg.seed,
            )?;
            let mut f = create(&ctx.out, "success_rate.csv")?;
            write_success_csv(&rows, ctx.cfg.terrain_family, &mut f)?;
            f.flush()?;
            for r in &rows {
                println!("{:>8} {:>24} {:>5.2}", r.parameter, r.condition, r.rate);
            }
        }
    }
    Ok(EXIT_OK)
}

/// Terrain-aware walk; logs each plane estimate against a dense fit of the
/// map around the support foot.
pub fn cmd_terrain(cfg: &ScenarioConfig, out: &Path, threaded: bool) -> Result<i32> {
    let ctx = prepare(cfg, out, threaded)?;
    let spec = ctx.cfg.problem_spec()?;
    let mut scenario = ctx.cfg.scenario(ctx.threaded)?;
    let Some(map) = scenario.terrain.clone() else {
        return Err(config_error("terrain needs `terrain_file` or `ramp_deg`"));
    };
    scenario.terrain_aware = true;
    let res = run_episode(&spec, &scenario, ctx.cfg.seed)?;
    write_episode(&ctx, "terrain", ctx.cfg.mode, &res)?;

    let mut f = create(&ctx.out, "terrain_planes.csv")?;
    writeln!(f, "# plane z = alpha x + beta y + offset; slopes deg, heights m")?;
    writeln!(
        f,
        "time,support_x,support_y,est_alpha,est_beta,est_offset,est_slope,true_alpha,true_beta,true_offset,true_slope,slope_error,height_error"
    )?;
    let mut last: Option<TerrainPlane> = None;
    let (mut n, mut slope_err, mut height_err) = (0usize, 0.0, 0.0);
    for r in &res.log {
        if last == Some(r.plane) {
            continue;
        }
        last = Some(r.plane);
        let Ok(truth) = region_plane(&map, &r.support.xy, TRUTH_REGION) else {
            continue;
        };
        let ds = (r.plane.slope_deg() - truth.slope_deg()).abs();
        let dh = (r.plane.height_at(&r.support.xy) - truth.height_at(&r.support.xy)).abs();
        n += 1;
        slope_err += ds;
        height_err += dh;
        writeln!(
            f,
            "{:.3},{:.6},{:.6},{:.6},{:.6},{:.6},{:.4},{:.6},{:.6},{:.6},{:.4},{:.4},{:.6}",
            r.time,
            r.support.xy.x,
            r.support.xy.y,
            r.plane.alpha,
            r.plane.beta,
            r.plane.offset,
            r.plane.slope_deg(),
            truth.alpha,
            truth.beta,
            truth.offset,
            truth.slope_deg(),
            ds,
            dh
        )?;
    }
    f.flush()?;
    report("terrain", ctx.cfg.mode, &res);
    if n > 0 {
        println!(
            "terrain: {n} plane updates, mean slope error {:.3} deg, mean height error {:.4} m",
            slope_err / n as f64,
            height_err / n as f64
        );
    }
    Ok(if res.success { EXIT_OK } else { EXIT_FAILURE })
}

fn prepare(cfg: &ScenarioConfig, out: &Path, threaded: bool) -> Result<Context> {
    std::fs::create_dir_all(out).map_err(|e| config_error(format!("cannot create {}: {e}", out.display())))?;
    let ctx = Context {
        cfg: cfg.clone(),
        out: out.to_path_buf(),
        threaded,
    };
    let mut f = create(out, "config.toml")?;
    f.write_all(cfg.to_kv_string().as_bytes())?;
    f.flush()?;
    Ok(ctx)
}

/// Parses arguments, runs the command and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    let extra = match &cli.command {
        Command::Push { force, direction } => {
            let mut v = Vec::new();
            if let Some(f) = force {
                v.push(format!("push_force={f:?}"));
            }
            if let Some(d) = direction {
                v.push(format!("push_direction={d:?}"));
            }
            v
        }
        _ => Vec::new(),
    };
    let cfg = match load_config(&cli.common, &extra) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_CONFIG;
        }
    };
    let (out, threaded) = (&cli.common.out, !cli.common.single_thread);
    let result = match cli.command {
        Command::Walk => cmd_walk(&cfg, out, threaded),
        Command::Push { .. } => cmd_push(&cfg, out, threaded),
        Command::Sweep => cmd_sweep(&cfg, out, threaded),
        Command::Terrain => cmd_terrain(&cfg, out, threaded),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_CONFIG
        }
    }
}
