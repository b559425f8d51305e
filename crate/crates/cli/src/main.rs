//! `platoon`: run, certify and compare event-triggered platoon scenarios.
//!
//! ```bash
//! platoon run --scenario example1_static --out out/ex1
//! platoon certify --scenario scenarios/my.scn --format kv
//! platoon compare --scenario example1_static --scenario example1_dynamic
//! platoon sweep --scenario example1_static --param g_tilde_v --grid 0,0.2,0.58
//! ```
//!
//! `--scenario` takes a file path or the name of a bundled scenario.
//! Outputs land in `--out`, or under `$PLATOON_OUT_ROOT` (default `platoon-out`).

mod output;
mod report;

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;

use platoon_core::scenario::{bundled, AttackSource, SchemeConfig, BUNDLED};
use platoon_core::sim::{self, write_csv, Metrics};
use platoon_core::trigger::TriggerScheme;
use platoon_core::{PlatoonError, ScenarioConfig};

const OUT_ROOT_ENV: &str = "PLATOON_OUT_ROOT";
const DEFAULT_OUT_ROOT: &str = "platoon-out";

#[derive(Parser, Debug)]
#[command(name = "platoon", version, about = "Event-triggered platoon simulator and certificate checker")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate a scenario and write the trace, metrics and manifest
    Run(Common),
    /// Print the synthesized gain, Riccati solution and stability windows
    Synthesize(Common),
    /// Evaluate the secure-consensus certificates and mitigation choice
    Certify(Common),
    /// Trigger counts of a static and a dynamic scenario side by side
    Compare(CompareArgs),
    /// Certificate margin, consensus time and triggering rate over a parameter grid
    Sweep(SweepArgs),
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// Scenario file or bundled scenario name
    #[arg(long)]
    scenario: String,
    #[command(flatten)]
    opts: Options,
}

#[derive(Args, Debug, Clone)]
struct Options {
    /// Output directory
    #[arg(long)]
    out: Option<PathBuf>,
    /// Seed for a random attack schedule
    #[arg(long)]
    seed: Option<u64>,
    /// Number of simulation steps, replacing the scenario's horizon
    #[arg(long)]
    horizon_override: Option<usize>,
    /// Machine-readable output instead of labeled text
    #[arg(long, value_enum)]
    format: Option<Format>,
}

#[derive(Args, Debug)]
struct CompareArgs {
    /// The two scenarios, one per trigger scheme
    #[arg(long, num_args = 1, required = true)]
    scenario: Vec<String>,
    #[command(flatten)]
    opts: Options,
}

#[derive(Args, Debug)]
struct SweepArgs {
    #[command(flatten)]
    common: Common,
    /// Parameter to vary
    #[arg(long)]
    param: String,
    /// Comma-separated values; may be empty
    #[arg(long, allow_hyphen_values = true)]
    grid: String,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
enum Format {
    Csv,
    Kv,
}

enum CliError {
    Config(String),
    Io(String),
}

impl From<PlatoonError> for CliError {
    fn from(e: PlatoonError) -> Self {
        Self::Config(e.to_string())
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

/// Writes to stdout; a closed pipe (`platoon ... | head`) is not an error.
fn emit(text: &str) -> CliResult<()> {
    use std::io::Write;
    match std::io::stdout().lock().write_all(text.as_bytes()) {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(CliError::Io(format!("stdout: {e}"))),
        _ => Ok(()),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(a) => cmd_run(&a),
        Command::Synthesize(a) => cmd_synthesize(&a),
        Command::Certify(a) => cmd_certify(&a),
        Command::Compare(a) => cmd_compare(&a),
        Command::Sweep(a) => cmd_sweep(&a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Config(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(CliError::Io(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(3)
        }
    }
}

/// Reads a scenario from disk, falling back to the bundled set.
fn load(spec: &str, opts: &Options) -> CliResult<(ScenarioConfig, String)> {
    let path = Path::new(spec);
    let (text, stem) = if path.exists() {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("cannot read {spec}: {e}")))?;
        let stem = path.file_stem().map_or("scenario".into(), |s| s.to_string_lossy().into_owned());
        (text, stem)
    } else if let Some(text) = bundled(spec) {
        (text.to_string(), spec.to_string())
    } else {
        let names: Vec<&str> = BUNDLED.iter().map(|(n, _)| *n).collect();
        return Err(CliError::Io(format!("no scenario file `{spec}` (bundled: {})", names.join(", "))));
    };
    let config = ScenarioConfig::parse(&text).map_err(|e| CliError::Config(format!("{spec}: {e}")))?;
    Ok((config.with_overrides(opts.seed, opts.horizon_override), stem))
}

fn out_dir(opts: &Options, name: &str) -> PathBuf {
    opts.out.clone().unwrap_or_else(|| {
        let root = std::env::var_os(OUT_ROOT_ENV).map_or_else(|| PathBuf::from(DEFAULT_OUT_ROOT), PathBuf::from);
        root.join(name)
    })
}

fn manifest(command: &str, config: &ScenarioConfig, outputs: &[&str]) -> Vec<u8> {
    let seed = match config.attacks {
        AttackSource::Random { seed } => seed.to_string(),
        _ => "none".into(),
    };
    let mut m = format!(
        "# platoon {}\n# command: {command}\n# seed: {seed}\n# outputs: {}\n\n",
        env!("CARGO_PKG_VERSION"),
        outputs.join(", ")
    );
    m.push_str(&config.serialize());
    m.into_bytes()
}

fn write_outputs(dir: &Path, files: Vec<(String, Vec<u8>)>) -> CliResult<()> {
    output::write_all(dir, &files).map_err(|e| CliError::Io(format!("cannot write to {}: {e}", dir.display())))
}

/// Renders `(key, value)` pairs as labeled text, `key=value` lines or a CSV row.
fn render(fields: &[(String, String)], format: Option<Format>) -> String {
    let mut s = String::new();
    match format {
        None => {
            let width = fields.iter().map(|(k, _)| k.len()).max().unwrap_or(0);
            for (k, v) in fields {
                let _ = writeln!(s, "{k:<width$}  {v}");
            }
        }
        Some(Format::Kv) => {
            for (k, v) in fields {
                let _ = writeln!(s, "{k}={v}");
            }
        }
        Some(Format::Csv) => {
            let keys: Vec<&str> = fields.iter().map(|(k, _)| k.as_str()).collect();
            let vals: Vec<&str> = fields.iter().map(|(_, v)| v.as_str()).collect();
            let _ = writeln!(s, "{}\n{}", keys.join(","), vals.join(","));
        }
    }
    s
}

fn owned(fields: Vec<(&'static str, String)>) -> Vec<(String, String)> {
    fields.into_iter().map(|(k, v)| (k.to_string(), v)).collect()
}

fn cmd_run(a: &Common) -> CliResult<()> {
    let (config, stem) = load(&a.scenario, &a.opts)?;
    let resolved = config.resolve()?;
    let trace = sim::run(&resolved.scenario)?;
    let metrics = sim::metrics(&trace, &resolved.scenario);
    if trace.diverged() {
        eprintln!("warning: run diverged at step {}", trace.diverged_at.unwrap_or_default());
    }

    let mut csv = Vec::new();
    write_csv(&trace, &mut csv).map_err(|e| CliError::Io(e.to_string()))?;
    let fields = report::metrics_fields(&metrics);
    let metrics_name = if a.opts.format == Some(Format::Csv) { "metrics.csv" } else { "metrics.kv" };
    let rendered = render(&fields, Some(a.opts.format.unwrap_or(Format::Kv)));
    let dir = out_dir(&a.opts, &stem);
    let files = vec![
        ("trace.csv".to_string(), csv),
        (metrics_name.to_string(), rendered.into_bytes()),
        ("manifest.scn".to_string(), manifest("run", &config, &["trace.csv", metrics_name])),
    ];
    write_outputs(&dir, files)?;
    let prefix = if a.opts.format.is_none() { "" } else { "# " };
    emit(&format!("{}{prefix}output  {}\n", render(&fields, a.opts.format), dir.display()))?;
    Ok(())
}

fn cmd_synthesize(a: &Common) -> CliResult<()> {
    use platoon_core::gain::{closed_loop_spectral_radius, lambda_window, schur_window, xi_window};
    let (config, _) = load(&a.scenario, &a.opts)?;
    let r = config.resolve()?;
    let sc = &r.scenario;
    let d = &r.design;
    let spectrum = sc.topology.h_spectrum::<f64>()?;
    let (lo, hi) = lambda_window(d.xi, d.lambda_bar_2, d.lambda_bar_np1);
    let window = schur_window(sc.plant.sample_time(), sc.gain.kp, spectrum.max());
    let (xi_inv_lo, xi_inv_hi) = xi_window(&sc.plant.a(), d.lambda_bar_2, d.lambda_bar_np1)?;
    let mat = |m: &platoon_core::Matrix64| format!("{},{};{},{}", m[(0, 0)], m[(0, 1)], m[(1, 0)], m[(1, 1)]);
    let eig: Vec<String> = spectrum.eigenvalues.iter().map(f64::to_string).collect();
    let fields = owned(vec![
        ("xi", d.xi.to_string()),
        ("xi_inv_window_lower", xi_inv_lo.to_string()),
        ("xi_inv_window_upper", xi_inv_hi.to_string()),
        ("xi_inv_in_window", (1.0 / d.xi > xi_inv_lo && 1.0 / d.xi < xi_inv_hi).to_string()),
        ("riccati_iterations", d.iterations.to_string()),
        ("P", mat(&d.p)),
        ("W", mat(&d.w)),
        ("kp", sc.gain.kp.to_string()),
        ("kv", sc.gain.kv.to_string()),
        ("lambda_bar_2", d.lambda_bar_2.to_string()),
        ("lambda_bar_max", d.lambda_bar_np1.to_string()),
        ("h_eigenvalues", eig.join(" ")),
        ("lambda_window_lower", lo.to_string()),
        ("lambda_window_upper", hi.to_string()),
        ("lambda_window_ok", (spectrum.min() > lo && spectrum.max() < hi).to_string()),
        ("kv_window_lower", window.lower.to_string()),
        ("kv_window_upper", window.upper.to_string()),
        ("kv_in_window", window.contains(sc.gain.kv).to_string()),
        ("spectral_radius", closed_loop_spectral_radius(sc.plant.sample_time(), sc.gain, &spectrum).to_string()),
        ("s1", sc.static_params.s1.to_string()),
        ("s2", sc.static_params.s2.to_string()),
        ("s3", sc.static_params.s3.to_string()),
        ("beta", sc.static_params.beta.to_string()),
        ("sigma", sc.static_params.sigma.to_string()),
    ]);
    emit(&render(&fields, a.opts.format))?;
    Ok(())
}

fn cmd_certify(a: &Common) -> CliResult<()> {
    let (config, _) = load(&a.scenario, &a.opts)?;
    let r = config.resolve()?;
    let (rep, _, _) = report::certify(&r)?;
    emit(&render(&owned(rep.fields()), a.opts.format))?;
    Ok(())
}

fn cmd_compare(a: &CompareArgs) -> CliResult<()> {
    let [first, second] = a.scenario.as_slice() else {
        return Err(CliError::Config(format!("compare takes exactly two --scenario values, got {}", a.scenario.len())));
    };
    let (c1, _) = load(first, &a.opts)?;
    let (c2, _) = load(second, &a.opts)?;
    let (stat, dynm) = match (c1.scheme, c2.scheme) {
        (SchemeConfig::Static, SchemeConfig::Dynamic { .. }) => (c1, c2),
        (SchemeConfig::Dynamic { .. }, SchemeConfig::Static) => (c2, c1),
        _ => return Err(CliError::Config("compare needs one static and one dynamic scenario".into())),
    };
    let mut aligned = dynm.clone();
    aligned.scheme = stat.scheme;
    if aligned != stat {
        return Err(CliError::Config("scenarios differ in more than the trigger scheme".into()));
    }

    let header = "row,static,dynamic\n";
    let mut table = String::from(header);
    if stat.horizon == 0 {
        eprintln!("warning: zero horizon, nothing to compare");
    } else {
        let run = |c: &ScenarioConfig| -> CliResult<Metrics> {
            let r = c.resolve()?;
            let tr = sim::run(&r.scenario)?;
            Ok(sim::metrics(&tr, &r.scenario))
        };
        let (ms, md) = (run(&stat)?, run(&dynm)?);
        let opt = |v: Option<f64>| v.map_or("not-reached".to_string(), |x| x.to_string());
        for (i, (qs, qd)) in ms.trigger_counts.iter().zip(&md.trigger_counts).enumerate() {
            let _ = writeln!(table, "vehicle{},{qs},{qd}", i + 1);
        }
        let _ = writeln!(table, "total,{},{}", ms.total_triggers, md.total_triggers);
        let _ = writeln!(table, "horizon_total,{},{}", ms.horizon_triggers, md.horizon_triggers);
        let _ = writeln!(table, "consensus_time,{},{}", opt(ms.consensus_time), opt(md.consensus_time));
        let _ = writeln!(table, "J,{},{}", opt(ms.triggering_rate), opt(md.triggering_rate));
    }
    let dir = out_dir(&a.opts, "compare");
    write_outputs(
        &dir,
        vec![
            ("compare.csv".to_string(), table.clone().into_bytes()),
            ("manifest_static.scn".to_string(), manifest("compare", &stat, &["compare.csv"])),
            ("manifest_dynamic.scn".to_string(), manifest("compare", &dynm, &["compare.csv"])),
        ],
    )?;
    emit(&table)?;
    Ok(())
}

const SWEEP_PARAMS: [&str; 11] =
    ["g_tilde_v", "attacked_kv", "tau0", "zeta0", "F0", "f0", "partial", "beta", "w1_fraction", "xi", "threshold"];

fn set_param(c: &mut ScenarioConfig, name: &str, v: f64) -> Result<(), String> {
    if let Some(b) = c.budget.as_mut().filter(|_| matches!(name, "tau0" | "zeta0" | "F0" | "f0")) {
        match name {
            "tau0" => b.tau0 = v,
            "zeta0" => b.zeta0 = v,
            "F0" => b.big_f0 = v,
            _ => b.f0 = v,
        }
        return Ok(());
    }
    match name {
        "g_tilde_v" => {
            c.g_tilde_v = v;
            c.attacked_kv = None;
        }
        "attacked_kv" => c.attacked_kv = Some(v),
        "tau0" | "zeta0" | "F0" | "f0" => return Err("scenario has no attack budget".into()),
        "partial" => c.partial = v,
        "beta" => c.beta = Some(v),
        "w1_fraction" => c.w1_fraction = v,
        "xi" => c.xi = v,
        "threshold" => c.threshold = v,
        _ => return Err(format!("unknown sweep parameter `{name}` (one of {})", SWEEP_PARAMS.join(", "))),
    }
    Ok(())
}

fn sweep_row(base: &ScenarioConfig, param: &str, v: f64) -> String {
    let eval = || -> Result<(String, Metrics), String> {
        let mut c = base.clone();
        set_param(&mut c, param, v)?;
        let r = c.resolve().map_err(|e| e.to_string())?;
        let (rep, _, m) = report::certify(&r).map_err(|e| e.to_string())?;
        let margin = rep.margin_text();
        Ok((margin, m))
    };
    match eval() {
        Ok((margin, m)) => {
            let opt = |x: Option<f64>| x.map_or("not-reached".to_string(), |y| y.to_string());
            format!("{v},{margin},{},{}", opt(m.consensus_time), opt(m.triggering_rate))
        }
        Err(e) => format!("{v},invalid: {},,", e.replace(',', ";")),
    }
}

fn cmd_sweep(a: &SweepArgs) -> CliResult<()> {
    let (config, stem) = load(&a.common.scenario, &a.common.opts)?;
    let grid: Vec<f64> = a
        .grid
        .split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(|t| t.parse().map_err(|_| CliError::Config(format!("bad grid value `{t}`"))))
        .collect::<CliResult<_>>()?;
    let mut probe = config.clone();
    set_param(&mut probe, &a.param, grid.first().copied().unwrap_or(0.0)).map_err(CliError::Config)?;

    let rows: Vec<String> = grid.par_iter().map(|&v| sweep_row(&config, &a.param, v)).collect();
    let mut csv = String::from("value,margin,consensus_time,J\n");
    for r in rows {
        csv.push_str(&r);
        csv.push('\n');
    }
    let scheme = match config.scheme {
        SchemeConfig::Static => TriggerScheme::<f64>::Static.name(),
        SchemeConfig::Dynamic { .. } => "dynamic",
    };
    let dir = out_dir(&a.common.opts, &format!("{stem}-sweep-{}", a.param));
    write_outputs(
        &dir,
        vec![
            ("sweep.csv".to_string(), csv.clone().into_bytes()),
            ("manifest.scn".to_string(), manifest(&format!("sweep {} ({scheme})", a.param), &config, &["sweep.csv"])),
        ],
    )?;
    emit(&csv)?;
    Ok(())
}
