//! Subcommand parsing and dispatch.

use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};
use elastoray_core::eikonal::{eikonal_grid, EikonalOptions, Source};
use elastoray_core::field::SymTensor4Field;
use elastoray_core::medium::{admissibility_report, flags, Mode};
use elastoray_core::raytrace::{amplitude_transport, integrate_bicharacteristic, FanKind, FanSpec, Sign, TraceParams};
use elastoray_core::reconstruct::{certify_uniqueness, Certificate, CertifyOptions};
use elastoray_core::tensorfield::{build_difference_tensor, contraction, contraction_fourth_order_part, saint_venant, t4_functional};
use elastoray_core::xray::{forward_transform, generate_fan, invert_transform, InversionOptions, TransformOperator};
use elastoray_core::{Grid3, ScalarField, SymTensor2Field, Vec3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{self, Loaded};
use crate::error::CliError;
use crate::fanfile::{self, FanFile};
use crate::manifest::RunManifest;
use crate::plot::{self, PlotInputs};
use crate::sgf;
use crate::tables::{self, num, SampleRow};

#[derive(Debug, Parser)]
#[command(name = "elastoray", version, about = "Ray tracing, tensor ray transforms and density certificates for isotropic elastic media")]
#[command(arg_required_else_help = true)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    P,
    S,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SignArg {
    Plus,
    Minus,
}

fn parse_vec3(s: &str) -> Result<[f64; 3], String> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    if parts.len() != 3 {
        return Err(format!("expected three comma-separated numbers, got {s:?}"));
    }
    let mut out = [0.0; 3];
    for (o, p) in out.iter_mut().zip(&parts) {
        *o = p.parse::<f64>().map_err(|_| format!("bad number {p:?}"))?;
        if !o.is_finite() {
            return Err(format!("non-finite component {p:?}"));
        }
    }
    Ok(out)
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check the medium's admissibility conditions on the configured grid.
    Admissible {
        #[arg(long)]
        config: PathBuf,
        /// Report path; printed to stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Trace one bicharacteristic with its leading amplitude.
    Trace {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_parser = parse_vec3, allow_hyphen_values = true)]
        x0: [f64; 3],
        #[arg(long, value_parser = parse_vec3, allow_hyphen_values = true)]
        xi0: [f64; 3],
        #[arg(long, value_enum, default_value = "p")]
        mode: ModeArg,
        #[arg(long, value_enum, default_value = "plus")]
        sign: SignArg,
        #[arg(long, default_value_t = 1e-3)]
        step: f64,
        #[arg(long, default_value_t = 10.0)]
        max_length: f64,
        /// Transverse offset of the neighbour rays used for the spreading term.
        #[arg(long, default_value_t = 1e-4)]
        fan_offset: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// First-arrival p travel times on the grid from a point source.
    Eikonal {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_parser = parse_vec3, allow_hyphen_values = true)]
        source: [f64; 3],
        #[arg(long)]
        out: PathBuf,
    },
    /// Plan and trace a ray fan from the configuration's `fan` section.
    Fan {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 32)]
        seeds: usize,
        #[arg(long, default_value_t = 64)]
        dirs: usize,
        /// Seed for the azimuth jitter.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Difference tensor B of two media with equal wave speeds.
    BuildB {
        #[arg(long)]
        config1: PathBuf,
        #[arg(long)]
        config2: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Saint-Venant operator of a 2-tensor field.
    Sv {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Contraction of W(B), or the direct density formula with --direct.
    T4 {
        #[arg(long)]
        config1: PathBuf,
        #[arg(long)]
        config2: PathBuf,
        /// Evaluate the two-term density formula instead of contracting W(B).
        #[arg(long)]
        direct: bool,
        /// Contract the whole of W(B), first-derivative terms included.
        #[arg(long, conflicts_with = "direct")]
        full: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Ray transform of a gridded 2-tensor along every fan ray.
    Transform {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        fan: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Regularized least-squares inversion of ray-transform samples.
    Invert {
        #[arg(long)]
        fan: PathBuf,
        #[arg(long)]
        samples: PathBuf,
        /// Tikhonov weight; scaled to the operator when omitted.
        #[arg(long)]
        reg: Option<f64>,
        #[arg(long, default_value_t = 1e-6)]
        tol: f64,
        #[arg(long, default_value_t = 4000)]
        max_iter: usize,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        diag: Option<PathBuf>,
    },
    /// Density uniqueness certificate from ray-transform samples.
    Certify {
        #[arg(long)]
        config: PathBuf,
        /// Reference density on the fan grid; the config's rho when omitted.
        #[arg(long)]
        rho2: Option<PathBuf>,
        #[arg(long)]
        fan: PathBuf,
        #[arg(long)]
        samples: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// CSV bundles for external plotting, with a README of the columns.
    PlotData {
        #[arg(long)]
        ray: Option<PathBuf>,
        #[arg(long)]
        diag: Option<PathBuf>,
        #[arg(long)]
        samples: Option<PathBuf>,
        #[arg(long)]
        cert: Option<PathBuf>,
        #[arg(long)]
        beta: Option<PathBuf>,
        #[arg(long)]
        out_dir: PathBuf,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Admissible { .. } => "admissible",
            Command::Trace { .. } => "trace",
            Command::Eikonal { .. } => "eikonal",
            Command::Fan { .. } => "fan",
            Command::BuildB { .. } => "build-b",
            Command::Sv { .. } => "sv",
            Command::T4 { .. } => "t4",
            Command::Transform { .. } => "transform",
            Command::Invert { .. } => "invert",
            Command::Certify { .. } => "certify",
            Command::PlotData { .. } => "plot-data",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdmissibleReport {
    pub model: String,
    pub config_sha256: String,
    pub pass: bool,
    pub nodes: usize,
    pub nodes_in_region: usize,
    pub failing_nodes: usize,
    pub degenerate_nodes: usize,
    pub eps_deg: f64,
    pub max_cs: f64,
    pub consistency_error: f64,
    pub rho_nonpositive: usize,
    pub mu_nonpositive: usize,
    pub lambda_mu_nonpositive: usize,
    pub not_strongly_convex: usize,
    pub non_finite: usize,
}

/// Every field of a certificate except `β⁻`, which goes to its own SGF file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertRecord {
    pub pass: bool,
    pub l2_norm: f64,
    pub linf_norm: f64,
    pub eta_zero: f64,
    pub pde_residual: f64,
    pub degenerate_fraction: f64,
    pub degenerate_nodes: usize,
    pub eps_deg: f64,
    pub inversion_iterations: usize,
    pub inversion_converged: bool,
    pub reg: f64,
    pub projection_iterations: usize,
    pub solve_iterations: usize,
    pub solve_converged: bool,
    pub linearization_remainder: f64,
    pub beta_minus_nodes: usize,
    pub beta_minus_file: String,
}

impl CertRecord {
    pub fn new(c: &Certificate, beta_file: &Path) -> Self {
        CertRecord {
            pass: c.pass,
            l2_norm: c.l2_norm,
            linf_norm: c.linf_norm,
            eta_zero: c.eta_zero,
            pde_residual: c.pde_residual,
            degenerate_fraction: c.degenerate_fraction,
            degenerate_nodes: c.degenerate_nodes,
            eps_deg: c.eps_deg,
            inversion_iterations: c.inversion_iterations,
            inversion_converged: c.inversion_converged,
            reg: c.reg,
            projection_iterations: c.projection_iterations,
            solve_iterations: c.solve_iterations,
            solve_converged: c.solve_converged,
            linearization_remainder: c.linearization_remainder,
            beta_minus_nodes: c.beta_minus.valid_count(),
            beta_minus_file: beta_file.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default(),
        }
    }
}

/// Sibling path of `out` with its extension replaced by `suffix`.
pub fn sibling(out: &Path, suffix: &str) -> PathBuf {
    let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    out.with_file_name(format!("{stem}{suffix}"))
}

fn json_bytes<T: Serialize>(v: &T) -> Result<Vec<u8>, CliError> {
    let mut s = serde_json::to_string_pretty(v).map_err(|e| CliError::Format(e.to_string()))?;
    s.push('\n');
    Ok(s.into_bytes())
}

fn load_config(m: &mut RunManifest, flag: &str, path: &Path) -> Result<Loaded, CliError> {
    let l = config::load(path)?;
    m.config(flag, &l.sha256);
    m.input(path)?;
    Ok(l)
}

fn same_grid(a: &Grid3, b: &Grid3, what: &str) -> Result<(), CliError> {
    if a != b {
        return Err(CliError::Config(format!("{what}: grids differ ({a:?} vs {b:?})")));
    }
    Ok(())
}

/// Samples ordered like the fan's rays, with matching ray ids.
fn fan_data(fan: &fanfile::LoadedFan, samples: &[SampleRow], path: &Path) -> Result<Vec<f64>, CliError> {
    if samples.len() != fan.fan.rays.len() {
        return Err(CliError::Format(format!(
            "{}: {} samples for {} fan rays",
            path.display(),
            samples.len(),
            fan.fan.rays.len()
        )));
    }
    for (k, (s, r)) in samples.iter().zip(&fan.fan.rays).enumerate() {
        if s.ray_id != r.launch.id {
            return Err(CliError::Format(format!(
                "{}: row {} has ray_id {}, fan ray {k} has id {}",
                path.display(),
                k + 2,
                s.ray_id,
                r.launch.id
            )));
        }
    }
    Ok(samples.iter().map(|s| s.value).collect())
}

fn admissible(m: &mut RunManifest, config: &Path, out: Option<&Path>) -> Result<(), CliError> {
    let l = load_config(m, "config", config)?;
    let r = admissibility_report(&l.model, &l.region, &l.grid);
    let in_region = |bit: u8| r.flags.iter().filter(|f| *f & flags::IN_REGION != 0 && *f & bit == 0).count();
    let report = AdmissibleReport {
        model: l.model.name.clone(),
        config_sha256: l.sha256.clone(),
        pass: r.pass,
        nodes: l.grid.len(),
        nodes_in_region: r.nodes_in_region,
        failing_nodes: r.failing_nodes,
        degenerate_nodes: r.degenerate_nodes,
        eps_deg: r.eps_deg,
        max_cs: r.max_cs,
        consistency_error: r.consistency_error,
        rho_nonpositive: in_region(flags::RHO_POSITIVE),
        mu_nonpositive: in_region(flags::MU_POSITIVE),
        lambda_mu_nonpositive: in_region(flags::LAMBDA_MU_POSITIVE),
        not_strongly_convex: in_region(flags::STRONG_CONVEX),
        non_finite: in_region(flags::FINITE),
    };
    let bytes = json_bytes(&report)?;
    match out {
        Some(p) => {
            crate::error::write(p, &bytes)?;
            m.output(p)?;
            println!("admissible: pass={} ({} failing of {} region nodes)", report.pass, report.failing_nodes, report.nodes_in_region);
        }
        None => print!("{}", String::from_utf8_lossy(&bytes)),
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn trace(
    m: &mut RunManifest,
    config: &Path,
    x0: [f64; 3],
    xi0: [f64; 3],
    mode: ModeArg,
    sign: SignArg,
    step: f64,
    max_length: f64,
    fan_offset: f64,
    out: &Path,
) -> Result<(), CliError> {
    let l = load_config(m, "config", config)?;
    let params = TraceParams {
        mode: match mode {
            ModeArg::P => Mode::P,
            ModeArg::S => Mode::S,
        },
        sign: match sign {
            SignArg::Plus => Sign::Plus,
            SignArg::Minus => Sign::Minus,
        },
        h_ray: step,
        max_length,
    };
    let ray = integrate_bicharacteristic(&l.model, &l.region, Vec3(x0), Vec3(xi0), &params)
        .map_err(|e| CliError::stage("trace", e))?;
    let spec = FanSpec { kind: FanKind::Parallel, offset: fan_offset, reference_index: Some(0) };
    let amp = amplitude_transport(&l.model, &ray, &spec, 1.0).map_err(|e| CliError::stage("amplitude", e))?;
    let pick = |v: &[f64], k: usize| v.get(k).copied().unwrap_or(f64::NAN);
    let rows: Vec<Vec<String>> = ray
        .samples
        .iter()
        .enumerate()
        .map(|(k, p)| {
            vec![
                num(p.s),
                num(p.t),
                num(p.x[0]),
                num(p.x[1]),
                num(p.x[2]),
                num(p.tau),
                num(p.xi[0]),
                num(p.xi[1]),
                num(p.xi[2]),
                num(pick(&amp.div_n, k)),
                num(pick(&amp.b0, k)),
            ]
        })
        .collect();
    tables::write(out, &["s", "t", "x", "y", "z", "tau", "xi1", "xi2", "xi3", "divN", "b0"], &rows)?;
    m.output(out)?;
    println!(
        "trace: {} samples, length {}, exit {}{}",
        ray.samples.len(),
        num(ray.length()),
        ray.exit.label(),
        if amp.truncated { ", amplitude truncated" } else { "" }
    );
    Ok(())
}

fn eikonal(m: &mut RunManifest, config: &Path, source: [f64; 3], out: &Path) -> Result<(), CliError> {
    let l = load_config(m, "config", config)?;
    let t = eikonal_grid(&l.model, &Source::Point(Vec3(source)), &l.grid, Some(&l.region), &EikonalOptions::default())
        .map_err(|e| CliError::stage("eikonal", e))?;
    let mask: Vec<bool> = t.t.iter().map(|v| v.is_finite()).collect();
    let reached = mask.iter().filter(|m| **m).count();
    let data = t.t.iter().map(|&v| if v.is_finite() { v } else { 0.0 }).collect();
    sgf::write_field(&ScalarField { grid: t.grid, data, mask }, out)?;
    m.output(out)?;
    println!("eikonal: {reached} of {} nodes reached", l.grid.len());
    Ok(())
}

fn fan(m: &mut RunManifest, config: &Path, seeds: usize, dirs: usize, seed: u64, out: &Path) -> Result<(), CliError> {
    let l = load_config(m, "config", config)?;
    let fc = l.config.fan.ok_or_else(|| CliError::Config(format!("{}: no `fan` section", config.display())))?;
    if seeds == 0 || dirs == 0 {
        return Err(CliError::Config("--seeds and --dirs must be positive".into()));
    }
    let design = fc.design(seeds, dirs, seed);
    let fan = generate_fan(&l.model, &l.region, &design).map_err(|e| CliError::stage("fan", e))?;
    FanFile::new(&l, seeds, dirs, seed, &fan).save(out)?;
    m.output(out)?;
    let c = fan.counts;
    println!(
        "fan: kept {} of {} rays from {} seeds (cap {}, trapped {}, failed {})",
        c.kept, c.candidates, c.seeds, c.cap_exit, c.trapped, c.failed
    );
    Ok(())
}

fn difference_tensor(
    m: &mut RunManifest,
    config1: &Path,
    config2: &Path,
) -> Result<(Loaded, Loaded, SymTensor2Field, elastoray_core::tensorfield::BCoefficients), CliError> {
    let l1 = load_config(m, "config1", config1)?;
    let l2 = load_config(m, "config2", config2)?;
    same_grid(&l1.grid, &l2.grid, "config1/config2")?;
    let (b, c) = build_difference_tensor(&l1.model, &l2.model, &l1.grid).map_err(|e| CliError::stage("build-b", e))?;
    Ok((l1, l2, b, c))
}

fn build_b(m: &mut RunManifest, config1: &Path, config2: &Path, out: &Path) -> Result<(), CliError> {
    let (_, _, b, _) = difference_tensor(m, config1, config2)?;
    sgf::write_field(&b, out)?;
    m.output(out)?;
    println!("build-b: max |B| = {}", num(b.max_abs()));
    Ok(())
}

fn sv(m: &mut RunManifest, input: &Path, out: &Path) -> Result<(), CliError> {
    let b: SymTensor2Field = sgf::read_field(input)?;
    m.input(input)?;
    let w: SymTensor4Field = saint_venant(&b).map_err(|e| CliError::stage("saint-venant", e))?;
    sgf::write_field(&w, out)?;
    m.output(out)?;
    println!("sv: max |WB| = {} over {} valid nodes", num(w.max_abs()), w.valid_count());
    Ok(())
}

fn density(l: &Loaded) -> ScalarField {
    let grid = l.grid;
    let data = (0..grid.len()).into_par_iter().map(|i| l.model.lame(grid.point_at(i)).2).collect();
    ScalarField { grid, data, mask: vec![true; grid.len()] }
}

fn t4(m: &mut RunManifest, config1: &Path, config2: &Path, direct: bool, full: bool, out: &Path) -> Result<(), CliError> {
    let field = if direct {
        let l1 = load_config(m, "config1", config1)?;
        let l2 = load_config(m, "config2", config2)?;
        same_grid(&l1.grid, &l2.grid, "config1/config2")?;
        t4_functional(&l1.model, &density(&l1), &density(&l2)).map_err(|e| CliError::stage("t4", e))?
    } else {
        let (_, _, b, c) = difference_tensor(m, config1, config2)?;
        if full {
            contraction(&saint_venant(&b).map_err(|e| CliError::stage("saint-venant", e))?)
        } else {
            contraction_fourth_order_part(&b, &c).map_err(|e| CliError::stage("t4", e))?
        }
    };
    sgf::write_field(&field, out)?;
    m.output(out)?;
    println!("t4: max |T4| = {} over {} valid nodes", num(field.max_abs()), field.valid_count());
    Ok(())
}

fn transform(m: &mut RunManifest, input: &Path, fan_path: &Path, out: &Path) -> Result<(), CliError> {
    let b: SymTensor2Field = sgf::read_field(input)?;
    m.input(input)?;
    let fan = fanfile::load(fan_path)?;
    m.input(fan_path)?;
    let rows: Vec<SampleRow> = fan
        .fan
        .rays
        .par_iter()
        .map(|r| forward_transform(&b, &r.ray, r.launch.id))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| CliError::stage("transform", e))?
        .into_iter()
        .map(|s| SampleRow { ray_id: s.ray_id, value: s.value, length: s.length })
        .collect();
    tables::write_samples(out, &rows)?;
    m.output(out)?;
    println!("transform: {} samples", rows.len());
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn invert(
    m: &mut RunManifest,
    fan_path: &Path,
    samples: &Path,
    reg: Option<f64>,
    tol: f64,
    max_iter: usize,
    out: &Path,
    diag: Option<&Path>,
) -> Result<(), CliError> {
    let fan = fanfile::load(fan_path)?;
    m.input(fan_path)?;
    let rows = tables::read_samples(samples)?;
    m.input(samples)?;
    let data = fan_data(&fan, &rows, samples)?;
    let op = TransformOperator::from_fan(&fan.loaded.grid, &fan.fan).map_err(|e| CliError::stage("operator", e))?;
    let inv = invert_transform(&op, &data, &InversionOptions { reg, rel_tol: tol, max_iter })
        .map_err(|e| CliError::stage("invert", e))?;
    sgf::write_field(&inv.estimate, out)?;
    m.output(out)?;
    if let Some(d) = diag {
        let rows: Vec<Vec<String>> = inv
            .solve
            .history
            .iter()
            .map(|h| vec![h.iter.to_string(), num(h.objective), num(h.data_residual), num(h.normal_residual)])
            .collect();
        tables::write(d, &["iter", "objective", "data_residual", "normal_residual"], &rows)?;
        m.output(d)?;
    }
    println!(
        "invert: reg {} , {} iterations, converged {}",
        num(inv.reg),
        inv.solve.iterations(),
        inv.solve.converged
    );
    Ok(())
}

fn certify(
    m: &mut RunManifest,
    config: &Path,
    rho2: Option<&Path>,
    fan_path: &Path,
    samples: &Path,
    out: &Path,
) -> Result<(), CliError> {
    let l = load_config(m, "config", config)?;
    let fan = fanfile::load(fan_path)?;
    m.input(fan_path)?;
    let rows = tables::read_samples(samples)?;
    m.input(samples)?;
    let data = fan_data(&fan, &rows, samples)?;
    let op = TransformOperator::from_fan(&fan.loaded.grid, &fan.fan).map_err(|e| CliError::stage("operator", e))?;
    let rho2 = match rho2 {
        Some(p) => {
            let f: ScalarField = sgf::read_field(p)?;
            m.input(p)?;
            f
        }
        None => {
            same_grid(&l.grid, &op.grid, "config/fan")?;
            density(&l)
        }
    };
    let cert = certify_uniqueness(&l.model, &l.region, &rho2, &op, &data, &CertifyOptions::default())
        .map_err(|e| CliError::stage("certify", e))?;
    let beta_path = sibling(out, ".beta_minus.sgf");
    crate::error::write(out, &json_bytes(&CertRecord::new(&cert, &beta_path))?)?;
    sgf::write_field(&cert.beta_minus, &beta_path)?;
    m.output(out)?;
    m.output(&beta_path)?;
    println!(
        "certify: pass={} |beta-|_L2={} degenerate nodes {} ({}%)",
        cert.pass,
        num(cert.l2_norm),
        cert.degenerate_nodes,
        num(100.0 * cert.degenerate_fraction)
    );
    Ok(())
}

fn plot_data(m: &mut RunManifest, inputs: PlotInputs, dir: &Path) -> Result<(), CliError> {
    for p in [&inputs.ray, &inputs.diag, &inputs.samples, &inputs.cert, &inputs.beta].into_iter().flatten() {
        m.input(p)?;
    }
    let files = plot::plot_data(&inputs, dir)?;
    for f in &files {
        m.output(&f.path)?;
        for n in &f.notes {
            println!("plot-data: {}: {n}", f.path.display());
        }
    }
    m.output(&dir.join("README.md"))?;
    Ok(())
}

fn execute(cmd: Command, m: &mut RunManifest) -> Result<(), CliError> {
    match cmd {
        Command::Admissible { config, out } => admissible(m, &config, out.as_deref()),
        Command::Trace { config, x0, xi0, mode, sign, step, max_length, fan_offset, out } => {
            trace(m, &config, x0, xi0, mode, sign, step, max_length, fan_offset, &out)
        }
        Command::Eikonal { config, source, out } => eikonal(m, &config, source, &out),
        Command::Fan { config, seeds, dirs, seed, out } => fan(m, &config, seeds, dirs, seed, &out),
        Command::BuildB { config1, config2, out } => build_b(m, &config1, &config2, &out),
        Command::Sv { input, out } => sv(m, &input, &out),
        Command::T4 { config1, config2, direct, full, out } => t4(m, &config1, &config2, direct, full, &out),
        Command::Transform { input, fan, out } => transform(m, &input, &fan, &out),
        Command::Invert { fan, samples, reg, tol, max_iter, out, diag } => {
            invert(m, &fan, &samples, reg, tol, max_iter, &out, diag.as_deref())
        }
        Command::Certify { config, rho2, fan, samples, out } => certify(m, &config, rho2.as_deref(), &fan, &samples, &out),
        Command::PlotData { ray, diag, samples, cert, beta, out_dir } => {
            plot_data(m, PlotInputs { ray, diag, samples, cert, beta }, &out_dir)
        }
    }
}

fn report(e: &CliError) {
    let msg = match e {
        CliError::Stage { message, .. } => message.clone(),
        other => other.to_string(),
    };
    eprintln!("elastoray: error [{}]: {msg}", e.label());
}

/// Worker count from `ELASTORAY_THREADS`, when set.
pub fn thread_count(var: Option<&str>) -> Result<Option<usize>, String> {
    match var.map(str::trim) {
        None | Some("") => Ok(None),
        Some(v) => match v.parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => Err(format!("ELASTORAY_THREADS must be a positive integer, got {v:?}")),
        },
    }
}

/// Parse `argv`, run the subcommand and return the process exit code:
/// 0 on success, 1 on usage errors, 2 on failures.
pub fn dispatch<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let argv: Vec<std::ffi::OsString> = argv.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
        }
    };
    let start = Instant::now();
    let name = cli.command.name();
    let args = argv.iter().skip(1).map(|a| a.to_string_lossy().into_owned()).collect();
    let mut manifest = RunManifest::new(name, args);
    let result = execute(cli.command, &mut manifest).and_then(|()| {
        if manifest.outputs.is_empty() {
            Ok(())
        } else {
            manifest.finish(start.elapsed()).map(|_| ())
        }
    });
    match result {
        Ok(()) => 0,
        Err(e) => {
            report(&e);
            2
        }
    }
}
