// `!(x > 0.0)` also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

/// `println!` that ignores a closed stdout.
macro_rules! say {
    ($($arg:tt)*) => {{
        use std::io::Write as _;
        let _ = writeln!(std::io::stdout(), $($arg)*);
    }};
}

mod config;
mod svg;
mod verify;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use lambda_profile::classify::{classify, CurveClass};
use lambda_profile::integrator::DEFAULT_LAUNCH_RADIUS;
use lambda_profile::linearize::{count_positive_zeros, LinearizeOptions};
use lambda_profile::shoot::{
    delta_start, find_delta_s, geometric_grid, scan_b, scan_delta, write_scan_csv, ScanOptions, ScanRow, ShootOptions,
};
use lambda_profile::surface::{mirror_extend_uniform, revolve, ClosedProfile};
use lambda_profile::{integrate, singular_start, Branch, Error, IntegrationControls, Trajectory};
use serde::Serialize;

use config::{Common, FileConfig, RunConfig};
use svg::{Curve, Plot, PALETTE};

const AFTER_HELP: &str = "\
Settings are resolved per key: command-line flag, then the TOML file given
with --config, then the built-in default. Common keys go under [run] in the
file; shoot and mesh options under [shoot] and [mesh]; `jobs` at top level.

Exit codes: 0 success, 1 verification failure or I/O error, 2 invalid
input, 3 no curve of the target class found, 4 bisection did not converge.";

#[derive(Parser)]
#[command(name = "lprofile", version, about = "Profile curves of rotationally symmetric λ-hypersurfaces", after_help = AFTER_HELP)]
struct Cli {
    /// TOML config file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads for scans [default: number of cores].
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate one curve; writes trace.csv, trace.json and trace.svg.
    Trace(TraceArgs),
    /// Classify one curve; writes classify.json.
    Classify(TraceArgs),
    /// Classify a grid of starting heights or axis points; writes scan.csv and scan.json.
    Scan(ScanArgs),
    /// Locate the closing height δ_s; writes shoot.json, closing.csv, shoot.svg and surface.obj.
    Shoot(ShootArgs),
    /// Count positive zeros of the linearization about the cylinder; writes linearize.json.
    Linearize(LinearizeArgs),
    /// Mirror and revolve a closing curve; writes mesh.obj and profile.csv.
    Mesh(MeshArgs),
    /// Run a built-in check suite.
    Verify(VerifyArgs),
}

#[derive(Args)]
struct StartArgs {
    /// Start perpendicular to the r-axis at (0, δ).
    #[arg(long, conflicts_with = "b")]
    delta: Option<f64>,
    /// Start on the x-axis at (b, 0).
    #[arg(long, allow_negative_numbers = true)]
    b: Option<f64>,
    /// Launch from the x-axis downward in x instead of upward.
    #[arg(long, requires = "b")]
    descending: bool,
    /// Launch radius for starts on the x-axis.
    #[arg(long, default_value_t = DEFAULT_LAUNCH_RADIUS)]
    launch_radius: f64,
    /// Stop after this many turns.
    #[arg(long)]
    turns: Option<u32>,
}

#[derive(Args)]
struct TraceArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    start: StartArgs,
}

#[derive(Args)]
struct ScanArgs {
    #[command(flatten)]
    common: Common,
    /// Comma-separated δ values.
    #[arg(long, value_delimiter = ',', conflicts_with_all = ["delta_range", "bs"])]
    deltas: Vec<f64>,
    /// Geometric δ grid as LO,HI,COUNT.
    #[arg(long, value_delimiter = ',', num_args = 3, conflicts_with = "bs")]
    delta_range: Vec<f64>,
    /// Comma-separated b values.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    bs: Vec<f64>,
    /// Pieces classified per curve.
    #[arg(long, default_value_t = 2)]
    turns: u32,
}

#[derive(Args)]
struct ShootArgs {
    #[command(flatten)]
    common: Common,
    /// Bracket width at which bisection may stop [default: 1e-6].
    #[arg(long)]
    tol_delta: Option<f64>,
    /// Grid points of the initial scan [default: 64].
    #[arg(long)]
    grid_points: Option<usize>,
    /// Axis cutoff for the closing curve [default: 5e-4].
    #[arg(long)]
    r_close: Option<f64>,
    /// Meridians of the surface mesh [default: 64].
    #[arg(long)]
    meridians: Option<usize>,
    /// Forward samples of the mirrored profile [default: 2000].
    #[arg(long)]
    profile_points: Option<usize>,
    /// Forward profile samples used for the mesh [default: 200].
    #[arg(long)]
    mesh_points: Option<usize>,
}

#[derive(Args)]
struct LinearizeArgs {
    #[command(flatten)]
    common: Common,
    /// Right end of the zero search [default: 3√c + 5].
    #[arg(long)]
    x_max: Option<f64>,
}

#[derive(Args)]
struct MeshArgs {
    #[command(flatten)]
    common: Common,
    /// Starting height of a curve that closes on the axis.
    #[arg(long, conflicts_with = "input")]
    delta: Option<f64>,
    /// Take the closing curve from a shoot.json report.
    #[arg(long)]
    input: Option<PathBuf>,
    /// Meridians [default: 64].
    #[arg(long)]
    meridians: Option<usize>,
    /// Forward samples of the mirrored profile [default: 200].
    #[arg(long)]
    profile_points: Option<usize>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Suite {
    ExactSolutions,
    Hermite,
    Shoot,
    All,
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long, value_enum, default_value_t = Suite::All)]
    suite: Suite,
}

/// Files are collected and written together once the command has finished.
struct Outputs {
    dir: PathBuf,
    files: Vec<(String, Vec<u8>)>,
}

impl Outputs {
    fn new(dir: &Path) -> Self {
        Self { dir: dir.to_path_buf(), files: Vec::new() }
    }

    fn add(&mut self, name: &str, bytes: Vec<u8>) {
        self.files.push((name.to_string(), bytes));
    }

    fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.add(name, text.into_bytes());
        Ok(())
    }

    fn write(self) -> Result<()> {
        fs::create_dir_all(&self.dir).with_context(|| format!("creating {}", self.dir.display()))?;
        let mut written = Vec::with_capacity(self.files.len());
        for (name, bytes) in self.files {
            let path = self.dir.join(&name);
            fs::write(&path, bytes).with_context(|| format!("writing {}", path.display()))?;
            written.push(path);
        }
        // A closed stdout must not abort the run.
        for path in written {
            say!("wrote {}", path.display());
        }
        Ok(())
    }
}

fn start_trajectory(cfg: &RunConfig, start: &StartArgs) -> Result<Trajectory> {
    let mut controls = cfg.controls;
    controls.max_turns = start.turns;
    let initial = match (start.delta, start.b) {
        (Some(d), None) => {
            if !(d > 0.0) {
                return Err(Error::InvalidParameter(format!("--delta must be positive, got {d}")).into());
            }
            delta_start(d)
        }
        (None, Some(b)) => {
            let branch = if start.descending { Branch::Descending } else { Branch::Ascending };
            singular_start(b, branch, &cfg.params, start.launch_radius)?
        }
        _ => return Err(Error::InvalidParameter("give exactly one of --delta or --b".into()).into()),
    };
    Ok(integrate(initial, &cfg.params, &controls)?)
}

fn polyline(traj: &Trajectory) -> Vec<[f64; 2]> {
    traj.samples.iter().map(|p| [p.x, p.r]).collect()
}

fn cmd_trace(file: &FileConfig, args: TraceArgs) -> Result<()> {
    let cfg = RunConfig::resolve(&args.common.or(&file.run), IntegrationControls::default())?;
    let traj = start_trajectory(&cfg, &args.start)?;
    let class = classify(&traj, &cfg.classifier)?.class;
    say!(
        "{} samples, {} events, terminal {:?}, class {}",
        traj.samples.len(),
        traj.events.len(),
        traj.terminal,
        class
    );
    let mut out = Outputs::new(&cfg.out);
    let mut csv = Vec::new();
    traj.write_csv(&mut csv)?;
    out.add("trace.csv", csv);
    out.json("trace.json", &traj)?;
    let plot = Plot {
        title: format!("n = {}, λ = {}, {}", cfg.params.n, cfg.params.lambda, class),
        curves: vec![Curve { points: polyline(&traj), color: PALETTE[0], label: class.label() }],
        reference_radius: Some(cfg.params.r_lambda),
    };
    out.add("trace.svg", plot.render().into_bytes());
    out.write()
}

#[derive(Serialize)]
struct ClassifyReport {
    label: String,
    class: CurveClass,
    segments: Vec<lambda_profile::classify::Segment>,
}

fn cmd_classify(file: &FileConfig, args: TraceArgs) -> Result<()> {
    let cfg = RunConfig::resolve(&args.common.or(&file.run), IntegrationControls::default())?;
    let traj = start_trajectory(&cfg, &args.start)?;
    let c = classify(&traj, &cfg.classifier)?;
    say!("{}", c.class);
    let mut out = Outputs::new(&cfg.out);
    out.json("classify.json", &ClassifyReport { label: c.class.label(), class: c.class, segments: c.segments })?;
    out.write()
}

#[derive(Serialize)]
struct ScanReport {
    n: u32,
    lambda: f64,
    kind: &'static str,
    rows: Vec<ScanRow>,
}

fn cmd_scan(file: &FileConfig, args: ScanArgs) -> Result<()> {
    let cfg = RunConfig::resolve(&args.common.or(&file.run), IntegrationControls::default())?;
    let opts = ScanOptions { controls: cfg.controls, classifier: cfg.classifier, turns: args.turns };
    let (kind, rows) = if !args.bs.is_empty() {
        ("b", scan_b(&cfg.params, &args.bs, &opts)?)
    } else {
        let grid = if args.delta_range.len() == 3 {
            let count = args.delta_range[2];
            if !(count >= 1.0 && count.fract() == 0.0) {
                return Err(Error::InvalidParameter(format!("grid count must be a positive integer, got {count}")).into());
            }
            if !(args.delta_range[0] > 0.0) {
                return Err(Error::InvalidParameter("grid must start above 0".into()).into());
            }
            geometric_grid(args.delta_range[0], args.delta_range[1], count as usize)
        } else {
            args.deltas.clone()
        };
        if grid.is_empty() {
            return Err(Error::InvalidParameter("give --deltas, --delta-range or --bs".into()).into());
        }
        ("delta", scan_delta(&cfg.params, &grid, &opts)?)
    };
    for row in &rows {
        say!("{:.10} {}", row.parameter, row.label);
    }
    let mut out = Outputs::new(&cfg.out);
    let mut csv = Vec::new();
    write_scan_csv(&rows, &mut csv)?;
    out.add("scan.csv", csv);
    out.json("scan.json", &ScanReport { n: cfg.params.n, lambda: cfg.params.lambda, kind, rows })?;
    out.write()
}

fn profile_plot(title: String, profile: &ClosedProfile, reference: f64) -> Plot {
    Plot {
        title,
        curves: vec![Curve { points: profile.polyline(), color: PALETTE[0], label: "closing profile".into() }],
        reference_radius: Some(reference),
    }
}

fn cmd_shoot(file: &FileConfig, args: ShootArgs) -> Result<()> {
    let defaults = ShootOptions::default();
    let cfg = RunConfig::resolve(&args.common.or(&file.run), defaults.controls)?;
    let tol_delta = args.tol_delta.or(file.shoot.tol_delta).unwrap_or(1e-6);
    let meridians = args.meridians.or(file.shoot.meridians).unwrap_or(64);
    let opts = ShootOptions {
        controls: cfg.controls,
        classifier: cfg.classifier,
        grid_points: args.grid_points.or(file.shoot.grid_points).unwrap_or(defaults.grid_points),
        r_close: args.r_close.or(file.shoot.r_close).unwrap_or(defaults.r_close),
        profile_points: args.profile_points.or(file.shoot.profile_points).unwrap_or(defaults.profile_points),
        ..defaults
    };
    if opts.grid_points < 2 {
        return Err(Error::InvalidParameter("grid-points must be at least 2".into()).into());
    }
    if !(opts.r_close > 0.0) {
        return Err(Error::InvalidParameter("r-close must be positive".into()).into());
    }
    let res = find_delta_s(&cfg.params, tol_delta, &opts)?;
    say!("delta_s = {:.12}", res.delta_s);
    say!("bracket = [{:.12}, {:.12}] after {} steps", res.bracket.0, res.bracket.1, res.iterations);
    say!("classes at bracket ends: {} | {}", res.class_at.0, res.class_at.1);
    say!("closing curve: {}, r_end = {:.3e}, |cos θ_end| = {:.3e}", res.closing_class, res.closure.r_end, res.closure.cos_end);
    say!(
        "after the normal flip: min H = {:.6}, min κ_profile = {:.6}, κ_profile sign changes = {}, embedded = {}",
        res.convexity.min_h, res.convexity.min_kappa_profile, res.convexity.kappa_profile_sign_changes, res.embedded
    );
    if !res.hypothesis_holds {
        say!("note: λ is above −4√((n−1)/5)");
    }

    let profile = mirror_extend_uniform(&res.closing_trajectory, opts.profile_points)?;
    let mut out = Outputs::new(&cfg.out);
    let mut text = res.to_json()?;
    text.push('\n');
    out.add("shoot.json", text.into_bytes());
    let mut csv = Vec::new();
    profile.write_csv(&mut csv)?;
    out.add("closing.csv", csv);
    let title = format!("n = {}, λ = {}, δ_s = {:.10}", cfg.params.n, cfg.params.lambda, res.delta_s);
    out.add("shoot.svg", profile_plot(title, &profile, cfg.params.r_lambda).render().into_bytes());
    if cfg.params.n == 2 {
        let points = args.mesh_points.or(file.shoot.mesh_points).unwrap_or(200);
        let coarse = mirror_extend_uniform(&res.closing_trajectory, points)?;
        let mesh = revolve(&coarse, meridians, &cfg.params)?;
        let mut obj = Vec::new();
        mesh.write_obj(&mut obj)?;
        out.add("surface.obj", obj);
    }
    out.write()
}

fn cmd_linearize(file: &FileConfig, args: LinearizeArgs) -> Result<()> {
    let cfg = RunConfig::resolve(&args.common.or(&file.run), IntegrationControls::default())?;
    let opts = LinearizeOptions { x_max: args.x_max, ..Default::default() };
    let sol = count_positive_zeros(&cfg.params, &opts)?;
    say!(
        "c = {:.10}, positive zeros = {} (ceil(c/2) = {}{})",
        sol.coefficient,
        sol.count,
        sol.expected,
        if sol.matches_expected() { "" } else { ", mismatch" }
    );
    for z in &sol.zeros {
        say!("  {z:.12}");
    }
    if sol.flagged {
        say!("warning: a zero sits at x_max = {}", sol.x_max);
    }
    let mut out = Outputs::new(&cfg.out);
    out.json("linearize.json", &sol)?;
    out.write()
}

fn cmd_mesh(file: &FileConfig, args: MeshArgs) -> Result<()> {
    let meridians = args.meridians.or(file.mesh.meridians).unwrap_or(64);
    let points = args.profile_points.or(file.mesh.profile_points).unwrap_or(200);
    let (traj, params, out_dir) = if let Some(input) = &args.input {
        let text = fs::read_to_string(input).with_context(|| format!("reading {}", input.display()))?;
        let res = lambda_profile::shoot::ShootResult::from_json(&text)?;
        let out_dir = args.common.out.clone().or_else(|| file.run.out.clone()).unwrap_or_else(|| PathBuf::from("."));
        (res.closing_trajectory, res.params, out_dir)
    } else {
        let cfg = RunConfig::resolve(&args.common.or(&file.run), IntegrationControls::default())?;
        let delta = args.delta.ok_or_else(|| Error::InvalidParameter("give --delta or --input".into()))?;
        if !(delta > 0.0) {
            return Err(Error::InvalidParameter(format!("--delta must be positive, got {delta}")).into());
        }
        (integrate(delta_start(delta), &cfg.params, &cfg.controls)?, cfg.params, cfg.out)
    };
    let profile = mirror_extend_uniform(&traj, points)?;
    let mesh = revolve(&profile, meridians, &params)?;
    say!(
        "{} vertices, {} faces, Euler characteristic {}, watertight {}",
        mesh.vertices.len(),
        mesh.faces.len(),
        mesh.euler_characteristic(),
        mesh.is_watertight()
    );
    let mut out = Outputs::new(&out_dir);
    let mut obj = Vec::new();
    mesh.write_obj(&mut obj)?;
    out.add("mesh.obj", obj);
    let mut csv = Vec::new();
    profile.write_csv(&mut csv)?;
    out.add("profile.csv", csv);
    out.write()
}

fn run(cli: Cli) -> Result<bool> {
    let file = config::load(cli.config.as_deref())?;
    let jobs = cli.jobs.or(file.jobs);
    if let Some(j) = jobs {
        if j == 0 {
            return Err(Error::InvalidParameter("--jobs must be at least 1".into()).into());
        }
        rayon::ThreadPoolBuilder::new().num_threads(j).build_global().context("configuring the worker pool")?;
    }
    match cli.command {
        Command::Trace(a) => cmd_trace(&file, a)?,
        Command::Classify(a) => cmd_classify(&file, a)?,
        Command::Scan(a) => cmd_scan(&file, a)?,
        Command::Shoot(a) => cmd_shoot(&file, a)?,
        Command::Linearize(a) => cmd_linearize(&file, a)?,
        Command::Mesh(a) => cmd_mesh(&file, a)?,
        Command::Verify(a) => return verify::run(a.suite),
    }
    Ok(true)
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<Error>() {
        Some(Error::InvalidParameter(_) | Error::Domain { .. } | Error::Singularity { .. } | Error::Rejected(_)) => 2,
        Some(Error::NotFound(_)) => 3,
        Some(Error::NonConvergence(_)) => 4,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
