use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand, ValueEnum};
use spinsync::atom::{build_atom_system, AtomSystem};
use spinsync::config::RunConfig;
use spinsync::field::{DriveConfig, DriveMode};
use spinsync::observables::{
    convolution_c1, convolution_c2, export_trajectory, harmonic_audit, mirror_audit, write_atomic,
};
use spinsync::pauli::scan_set_a;
use spinsync::spectrum::{
    find_peaks, hwhm_vs_gamma, refine_peaks, sweep, HwhmTable, Observable, PeakOptions, WidthMode, EPR_SIGNAL,
};

#[derive(Parser)]
#[command(name = "spinsync", version, about = "Optically pumped Rb-87 D1 spin dynamics under a dual-harmonic drive")]
struct Cli {
    /// TOML run configuration; defaults are used when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads for sweeps (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Output directory (overrides output.dir).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// C₁/C₂ spectrum over a range of Ω; writes spectrum.csv and peaks.json.
    Sweep {
        #[arg(long, value_parser = parse_freq)]
        omega_lo: Option<f64>,
        #[arg(long, value_parser = parse_freq)]
        omega_hi: Option<f64>,
        #[arg(long)]
        points: Option<usize>,
        /// Peak-window re-sweep density; 0 disables.
        #[arg(long)]
        refine: Option<usize>,
    },
    /// Steady-state last-period trajectory at one Ω; writes trajectory.csv.
    Trajectory {
        #[arg(long, value_parser = parse_freq)]
        omega: Option<f64>,
    },
    /// Scans the free spin-1/2 for periodic drive ratios; writes set_a.json and deviation.csv.
    Pauli {
        #[arg(long)]
        r_lo: Option<f64>,
        #[arg(long)]
        r_hi: Option<f64>,
        /// Drive phase Ωt₀ at spin creation, rad.
        #[arg(long)]
        phase: Option<f64>,
    },
    /// Peak HWHM against Γ; writes hwhm_<mode>.csv.
    Hwhm {
        /// Comma-separated Γ values in s⁻¹.
        #[arg(long, value_delimiter = ',', default_values_t = [500.0, 1000.0, 2000.0])]
        gammas: Vec<f64>,
        #[arg(long, value_enum, default_value_t = ModeArg::Both)]
        mode: ModeArg,
        /// Half width of the swept window around the expected center.
        #[arg(long, value_parser = parse_freq)]
        window: Option<f64>,
        #[arg(long)]
        points: Option<usize>,
    },
    /// Writes every operator of the atom model to operators.json.
    DumpOperators,
    /// Prints the effective configuration as TOML.
    Config,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ModeArg {
    SpinEffect,
    Epr,
    Both,
}

/// Frequency in Hz with an optional Hz/kHz/MHz suffix.
fn parse_freq(s: &str) -> Result<f64, String> {
    let t = s.trim();
    let lower = t.to_ascii_lowercase();
    let (num, scale) = if let Some(n) = lower.strip_suffix("mhz") {
        (n, 1e6)
    } else if let Some(n) = lower.strip_suffix("khz") {
        (n, 1e3)
    } else if let Some(n) = lower.strip_suffix("hz") {
        (n, 1.0)
    } else {
        (lower.as_str(), 1.0)
    };
    let v: f64 = num.trim().parse().map_err(|_| format!("not a frequency: {s}"))?;
    if !(v.is_finite() && v > 0.0) {
        return Err(format!("frequency must be positive: {s}"));
    }
    Ok(v * scale)
}

enum Outcome {
    Done,
    Partial,
}

struct Ctx {
    cfg: RunConfig,
    sys: AtomSystem,
    out: PathBuf,
}

impl Ctx {
    fn header(&self) -> String {
        format!("# config = {}\n", self.cfg.snapshot())
    }

    fn write(&self, name: &str, text: &str) -> anyhow::Result<PathBuf> {
        std::fs::create_dir_all(&self.out).with_context(|| format!("creating {}", self.out.display()))?;
        let path = self.out.join(name);
        write_atomic(&path, text.as_bytes()).with_context(|| format!("writing {}", path.display()))?;
        Ok(path)
    }

    fn gamma_b0(&self) -> f64 {
        self.cfg.gamma_eff() * self.cfg.field.b0_tesla
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let cfg = match load_config(cli.config.as_deref()) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    };
    if let Some(j) = cli.jobs {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(j.max(1)).build_global() {
            eprintln!("warning: could not size thread pool: {e}");
        }
    }
    let sys = match build_atom_system(&cfg.atom) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    };
    let out = cli.out.clone().unwrap_or_else(|| cfg.output.dir.clone());
    let ctx = Ctx { cfg, sys, out };
    match run(&ctx, cli.cmd) {
        Ok(Outcome::Done) => ExitCode::SUCCESS,
        Ok(Outcome::Partial) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn load_config(path: Option<&Path>) -> spinsync::Result<RunConfig> {
    match path {
        Some(p) => RunConfig::load(p),
        None => Ok(RunConfig::default()),
    }
}

fn run(ctx: &Ctx, cmd: Cmd) -> anyhow::Result<Outcome> {
    match cmd {
        Cmd::Sweep { omega_lo, omega_hi, points, refine } => cmd_sweep(ctx, omega_lo, omega_hi, points, refine),
        Cmd::Trajectory { omega } => cmd_trajectory(ctx, omega),
        Cmd::Pauli { r_lo, r_hi, phase } => cmd_pauli(ctx, r_lo, r_hi, phase),
        Cmd::Hwhm { gammas, mode, window, points } => cmd_hwhm(ctx, &gammas, mode, window, points),
        Cmd::DumpOperators => {
            let mut v = ctx.sys.to_json();
            v["config"] = ctx.cfg.snapshot();
            let path = ctx.write("operators.json", &serde_json::to_string_pretty(&v)?)?;
            println!("{}", path.display());
            Ok(Outcome::Done)
        }
        Cmd::Config => {
            print!("{}", ctx.cfg.to_toml());
            Ok(Outcome::Done)
        }
    }
}

fn cmd_sweep(
    ctx: &Ctx,
    lo: Option<f64>,
    hi: Option<f64>,
    points: Option<usize>,
    refine: Option<usize>,
) -> anyhow::Result<Outcome> {
    let s = &ctx.cfg.sweep;
    let lo = lo.unwrap_or(s.omega_lo_hz);
    let hi = hi.unwrap_or(s.omega_hi_hz);
    let n = points.unwrap_or(s.points);
    let refine = refine.unwrap_or(s.refine);
    if hi <= lo || n < 2 {
        bail!("sweep range must satisfy omega_lo < omega_hi with at least 2 points");
    }
    let exp = ctx.cfg.experiment(&ctx.sys)?;
    let which = match ctx.cfg.field.mode {
        DriveMode::DualHarmonic => Observable::C2,
        DriveMode::Epr => EPR_SIGNAL,
    };
    let mut spec = sweep(&exp, 2.0 * PI * lo, 2.0 * PI * hi, n, ctx.cfg.snapshot())?;
    let opts = PeakOptions::default();
    if refine > 1 {
        refine_peaks(&exp, &mut spec, which, &opts, refine)?;
    }
    let peaks = find_peaks(&spec, which, &opts);
    let gb0 = ctx.gamma_b0();
    let peaks_json: Vec<_> = peaks
        .iter()
        .map(|p| {
            let mut v = p.to_json();
            if ctx.cfg.field.mode == DriveMode::DualHarmonic {
                v["r"] = (p.center / gb0).into();
            }
            v
        })
        .collect();
    let doc = serde_json::json!({
        "config": ctx.cfg.snapshot(),
        "observable": format!("{which:?}"),
        "all_converged": spec.all_converged(),
        "peaks": peaks_json,
    });
    ctx.write("spectrum.csv", &spec.to_csv())?;
    ctx.write("peaks.json", &serde_json::to_string_pretty(&doc)?)?;
    for p in &peaks {
        println!("peak {:.2} Hz  height {:.4e}  hwhm {:.2} Hz", p.center_hz(), p.height, p.hwhm_hz());
    }
    let unconverged = spec.points.iter().filter(|p| !p.converged).count();
    if unconverged > 0 {
        eprintln!("warning: {unconverged} of {} points did not converge", spec.points.len());
        return Ok(Outcome::Partial);
    }
    Ok(Outcome::Done)
}

fn cmd_trajectory(ctx: &Ctx, omega: Option<f64>) -> anyhow::Result<Outcome> {
    let f = omega.unwrap_or(ctx.cfg.field.omega_hz);
    let exp = ctx.cfg.experiment(&ctx.sys)?;
    let rec = exp.record(2.0 * PI * f)?;
    let c1 = convolution_c1(&rec)?;
    let c2 = convolution_c2(&rec)?;
    let mirror = mirror_audit(&rec, 0.1)?;
    let harmonics = harmonic_audit(&rec, 0.05)?;
    let mut meta = BTreeMap::new();
    meta.insert("config".to_string(), ctx.cfg.snapshot().to_string());
    meta.insert("Omega_hz".to_string(), f.to_string());
    meta.insert("C1".to_string(), c1.to_string());
    meta.insert("C2".to_string(), c2.to_string());
    meta.insert("mirror_audit".to_string(), serde_json::to_string(&mirror)?);
    meta.insert("harmonic_audit".to_string(), serde_json::to_string(&harmonics)?);
    std::fs::create_dir_all(&ctx.out)?;
    let path = ctx.out.join("trajectory.csv");
    export_trajectory(&rec, &path, &meta)?;
    println!("Omega {f} Hz  C1 {c1:.6e}  C2 {c2:.6e}  converged {}  periods {}", rec.converged, rec.periods);
    println!(
        "mirror y-flip {:.3} of C1 ({})  harmonics above 2Omega {:.3} of fundamental ({})",
        mirror.y_relative,
        if mirror.passed { "pass" } else { "fail" },
        harmonics.ratio,
        if harmonics.passed { "pass" } else { "fail" }
    );
    if !rec.converged {
        eprintln!("warning: not converged after {} periods", rec.periods);
        return Ok(Outcome::Partial);
    }
    Ok(Outcome::Done)
}

fn cmd_pauli(ctx: &Ctx, r_lo: Option<f64>, r_hi: Option<f64>, phase: Option<f64>) -> anyhow::Result<Outcome> {
    let lo = r_lo.unwrap_or(ctx.cfg.pauli.r_lo);
    let hi = r_hi.unwrap_or(ctx.cfg.pauli.r_hi);
    let mut opts = ctx.cfg.scan_options();
    if let Some(p) = phase {
        opts.phase = p;
    }
    let report = scan_set_a(lo, hi, &opts)?;
    let mut doc = serde_json::to_value(&report)?;
    doc["config"] = ctx.cfg.snapshot();
    ctx.write("set_a.json", &serde_json::to_string_pretty(&doc)?)?;
    ctx.write("deviation.csv", &format!("{}{}", ctx.header(), report.deviation_csv()))?;
    println!("{} members in [{lo}, {hi}] at phase {}", report.members.len(), report.phase);
    let gb0 = ctx.gamma_b0();
    for m in report.members.iter().take(4) {
        println!(
            "r = {:.6}  Omega = {:.1} Hz  {:?}  d = {:.1e}",
            m.r,
            m.r * gb0 / (2.0 * PI),
            m.classification,
            m.deviation
        );
        for (name, v) in [("x", m.averaged.x), ("y", m.averaged.y), ("z", m.averaged.z)] {
            println!("  from {name}: <sx> {:+.4}  <sy> {:+.4}  <sz> {:+.4}", v[0], v[1], v[2]);
        }
    }
    Ok(Outcome::Done)
}

fn cmd_hwhm(
    ctx: &Ctx,
    gammas: &[f64],
    mode: ModeArg,
    window: Option<f64>,
    points: Option<usize>,
) -> anyhow::Result<Outcome> {
    if gammas.len() < 2 {
        bail!("cannot fit: need at least two Γ values, got {}", gammas.len());
    }
    let modes: &[WidthMode] = match mode {
        ModeArg::SpinEffect => &[WidthMode::SpinEffect],
        ModeArg::Epr => &[WidthMode::Epr],
        ModeArg::Both => &[WidthMode::SpinEffect, WidthMode::Epr],
    };
    let base = ctx.cfg.experiment(&ctx.sys)?;
    let mut tables: Vec<(WidthMode, HwhmTable)> = Vec::new();
    for &m in modes {
        let (exp, center, default_window, default_points) = match m {
            WidthMode::SpinEffect => {
                let d = DriveConfig {
                    phase_origin: ctx.cfg.field.phase_origin_s,
                    ..DriveConfig::dual_harmonic(ctx.cfg.field.b0_tesla, 2.0 * PI * ctx.cfg.field.omega_hz)
                };
                let e = base.with_drive(d);
                (e, ctx.cfg.field.omega_hz, 650.0, 27)
            }
            WidthMode::Epr => (base.with_drive(ctx.cfg.epr_drive()), ctx.cfg.field.epr_center_hz, 2000.0, 41),
        };
        let w = window.unwrap_or(default_window);
        let n = points.unwrap_or(default_points);
        let range = (2.0 * PI * (center - w), 2.0 * PI * (center + w), n);
        let table = hwhm_vs_gamma(&exp, gammas, m, range, EPR_SIGNAL)?;
        ctx.write(&format!("hwhm_{}.csv", m.name()), &format!("{}{}", ctx.header(), table.to_csv()))?;
        println!("{}: slope {:.5} (HWHM Hz per s⁻¹)  residual {:.3}", m.name(), table.slope, table.residual);
        for r in &table.rows {
            println!(
                "  Γ {:>8.1}  center {:.2} Hz  hwhm {:.2} Hz{}",
                r.gamma_hz,
                r.center_hz,
                r.hwhm_hz,
                if r.flagged { "  (flagged)" } else { "" }
            );
        }
        tables.push((m, table));
    }
    if let [(_, se), (_, epr)] = tables.as_slice() {
        println!("slope ratio epr/spin_effect = {:.3}", epr.slope / se.slope);
    }
    if tables.iter().any(|(_, t)| t.rows.iter().any(|r| r.flagged)) {
        return Ok(Outcome::Partial);
    }
    Ok(Outcome::Done)
}
