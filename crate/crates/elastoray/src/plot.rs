//! `plot-data`: turn run outputs into small CSV bundles for external plotting.

use std::path::{Path, PathBuf};

use elastoray_core::ScalarField;

use crate::error::CliError;
use crate::tables::{self, num};

#[derive(Debug, Clone, Default)]
pub struct PlotInputs {
    pub ray: Option<PathBuf>,
    pub diag: Option<PathBuf>,
    pub samples: Option<PathBuf>,
    pub cert: Option<PathBuf>,
    pub beta: Option<PathBuf>,
}

/// One emitted file with its column documentation.
#[derive(Debug, Clone, PartialEq)]
pub struct Emitted {
    pub path: PathBuf,
    pub columns: Vec<(String, String)>,
    pub notes: Vec<String>,
}

fn cols(spec: &[(&str, &str)]) -> Vec<(String, String)> {
    spec.iter().map(|(a, b)| ((*a).to_owned(), (*b).to_owned())).collect()
}

fn emit(
    dir: &Path,
    name: &str,
    spec: &[(&str, &str)],
    rows: &[Vec<String>],
    notes: Vec<String>,
) -> Result<Emitted, CliError> {
    let path = dir.join(name);
    let header: Vec<&str> = spec.iter().map(|c| c.0).collect();
    tables::write(&path, &header, rows)?;
    Ok(Emitted { path, columns: cols(spec), notes })
}

pub fn ray_files(dir: &Path, ray: &Path) -> Result<Vec<Emitted>, CliError> {
    let t = tables::read(ray, &["s", "x", "z", "b0"])?;
    let s = t.floats("s", ray)?;
    let x = t.floats("x", ray)?;
    let z = t.floats("z", ray)?;
    let b0 = t.floats("b0", ray)?;
    let xz: Vec<Vec<String>> = (0..s.len()).map(|k| vec![num(s[k]), num(x[k]), num(z[k])]).collect();
    let first = b0.first().copied().unwrap_or(f64::NAN);
    let decay: Vec<Vec<String>> = (0..s.len()).map(|k| vec![num(s[k]), num(b0[k]), num(b0[k] / first)]).collect();
    Ok(vec![
        emit(
            dir,
            "ray_xz.csv",
            &[("s", "arc length"), ("x", "x coordinate"), ("z", "z coordinate")],
            &xz,
            vec![format!("{} samples, one per input ray sample", s.len())],
        )?,
        emit(
            dir,
            "b0_decay.csv",
            &[("s", "arc length"), ("b0", "leading amplitude"), ("b0_rel", "b0 divided by its value at the first sample")],
            &decay,
            vec![],
        )?,
    ])
}

/// Rows of `residual.csv` and the number of steps where the objective grew.
pub fn residual_rows(iter: &[f64], objective: &[f64], normal: &[f64]) -> (Vec<Vec<String>>, usize) {
    let o0 = objective.first().copied().unwrap_or(1.0);
    let mut violations = 0;
    let rows = (0..iter.len())
        .map(|k| {
            let mono = k == 0 || objective[k] <= objective[k - 1] * (1.0 + 1e-12);
            if !mono {
                violations += 1;
            }
            vec![num(iter[k]), num(objective[k]), num(objective[k] / o0), num(normal[k]), u8::from(mono).to_string()]
        })
        .collect();
    (rows, violations)
}

pub fn residual_file(dir: &Path, diag: &Path) -> Result<Emitted, CliError> {
    let t = tables::read(diag, &["iter", "objective", "normal_residual"])?;
    let (rows, violations) = residual_rows(&t.floats("iter", diag)?, &t.floats("objective", diag)?, &t.floats("normal_residual", diag)?);
    let verdict = if violations == 0 {
        "objective column verified nonincreasing".to_owned()
    } else {
        format!("objective increased at {violations} iterations")
    };
    emit(
        dir,
        "residual.csv",
        &[
            ("iter", "CGLS iteration"),
            ("objective", "sqrt(|Ax-b|^2 + reg |x|^2)"),
            ("objective_rel", "objective over its initial value"),
            ("normal_residual", "|A^T r - reg x|"),
            ("monotone", "1 when the objective did not grow at this step"),
        ],
        &rows,
        vec![verdict],
    )
}

/// `bins` equal-width bins over the finite values; returns (lo, hi, count).
pub fn histogram(values: &[f64], bins: usize) -> Vec<(f64, f64, usize)> {
    let finite: Vec<f64> = values.iter().copied().filter(|v| v.is_finite()).collect();
    if finite.is_empty() || bins == 0 {
        return Vec::new();
    }
    let lo = finite.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = finite.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if hi == lo {
        return vec![(lo, hi, finite.len())];
    }
    let w = (hi - lo) / bins as f64;
    let mut counts = vec![0usize; bins];
    for v in finite {
        let b = (((v - lo) / w) as usize).min(bins - 1);
        counts[b] += 1;
    }
    (0..bins).map(|b| (lo + b as f64 * w, if b + 1 == bins { hi } else { lo + (b + 1) as f64 * w }, counts[b])).collect()
}

pub fn samples_file(dir: &Path, samples: &Path) -> Result<Emitted, CliError> {
    let s = tables::read_samples(samples)?;
    let values: Vec<f64> = s.iter().map(|r| r.value).collect();
    let bins = ((values.len() as f64).sqrt().ceil() as usize).clamp(1, 64);
    let rows: Vec<Vec<String>> =
        histogram(&values, bins).into_iter().map(|(lo, hi, c)| vec![num(lo), num(hi), c.to_string()]).collect();
    let skipped = values.iter().filter(|v| !v.is_finite()).count();
    emit(
        dir,
        "samples_hist.csv",
        &[("lo", "bin lower edge"), ("hi", "bin upper edge"), ("count", "samples in [lo, hi), last bin closed")],
        &rows,
        vec![format!("{} samples, {skipped} non-finite skipped", values.len())],
    )
}

pub fn cert_file(dir: &Path, cert: &Path) -> Result<Emitted, CliError> {
    let bytes = crate::error::read(cert)?;
    let v: serde_json::Value =
        serde_json::from_slice(&bytes).map_err(|e| CliError::Format(format!("{}: {e}", cert.display())))?;
    let obj = v.as_object().ok_or_else(|| CliError::Format(format!("{}: expected a JSON object", cert.display())))?;
    let mut keys: Vec<&String> = obj.keys().collect();
    keys.sort();
    let row: Vec<String> = keys
        .iter()
        .map(|k| match &obj[k.as_str()] {
            serde_json::Value::Number(n) => n.as_f64().map_or_else(|| n.to_string(), num),
            serde_json::Value::Bool(b) => b.to_string(),
            serde_json::Value::String(s) => s.clone(),
            serde_json::Value::Null => String::new(),
            other => other.to_string(),
        })
        .collect();
    let spec: Vec<(&str, &str)> = keys.iter().map(|k| (k.as_str(), "certificate field of the same name")).collect();
    emit(dir, "cert_summary.csv", &spec, &[row], vec![])
}

/// Mid-plane slices of a scalar field, valid nodes only.
pub fn slice_rows(f: &ScalarField) -> Vec<Vec<String>> {
    let g = f.grid;
    let mid = [g.dims[0] / 2, g.dims[1] / 2, g.dims[2] / 2];
    let mut rows = Vec::new();
    // (plane label, fixed axis, first free axis, second free axis)
    for (label, fixed, a, b) in [("xy", 2, 0, 1), ("xz", 1, 0, 2), ("yz", 0, 1, 2)] {
        for j in 0..g.dims[b] {
            for i in 0..g.dims[a] {
                let mut ijk = [0; 3];
                ijk[fixed] = mid[fixed];
                ijk[a] = i;
                ijk[b] = j;
                let n = g.index(ijk[0], ijk[1], ijk[2]);
                if !f.mask[n] {
                    continue;
                }
                let p = g.point_at(n);
                rows.push(vec![label.to_owned(), i.to_string(), j.to_string(), num(p[a]), num(p[b]), num(f.data[n])]);
            }
        }
    }
    rows
}

pub fn beta_file(dir: &Path, beta: &Path) -> Result<Emitted, CliError> {
    let f: ScalarField = crate::sgf::read_field(beta)?;
    emit(
        dir,
        "beta_slices.csv",
        &[
            ("plane", "xy, xz or yz mid-plane"),
            ("i", "index along the first in-plane axis"),
            ("j", "index along the second in-plane axis"),
            ("u", "coordinate along the first in-plane axis"),
            ("v", "coordinate along the second in-plane axis"),
            ("value", "field value at valid nodes"),
        ],
        &slice_rows(&f),
        vec![],
    )
}

pub fn readme(files: &[Emitted]) -> String {
    let mut s = String::from("# plot-data bundle\n\nCSV files with a header row, '.' decimal point and '\\n' line ends.\n");
    for f in files {
        let name = f.path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
        s.push_str(&format!("\n## {name}\n\n"));
        for n in &f.notes {
            s.push_str(&format!("{n}\n\n"));
        }
        s.push_str("| column | meaning |\n|---|---|\n");
        for (c, m) in &f.columns {
            s.push_str(&format!("| {c} | {m} |\n"));
        }
    }
    s
}

pub fn plot_data(inputs: &PlotInputs, dir: &Path) -> Result<Vec<Emitted>, CliError> {
    let mut files = Vec::new();
    if let Some(p) = &inputs.ray {
        files.extend(ray_files(dir, p)?);
    }
    if let Some(p) = &inputs.diag {
        files.push(residual_file(dir, p)?);
    }
    if let Some(p) = &inputs.samples {
        files.push(samples_file(dir, p)?);
    }
    if let Some(p) = &inputs.cert {
        files.push(cert_file(dir, p)?);
    }
    if let Some(p) = &inputs.beta {
        files.push(beta_file(dir, p)?);
    }
    if files.is_empty() {
        return Err(CliError::Config("plot-data needs at least one of --ray, --diag, --samples, --cert, --beta".into()));
    }
    crate::error::write(&dir.join("README.md"), readme(&files).as_bytes())?;
    Ok(files)
}
