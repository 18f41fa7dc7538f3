//! The subcommands. Each writes its artifacts under an output directory and
//! returns the paths written.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::analysis::BetaMode;
use crate::echo_model::SensitivityParams;
use crate::error::{Error, Result};
use crate::montecarlo::{run_decay_experiment, RunConfig};

use super::config::dump_config;
use super::io::{
    read_curve_csv, read_decay_csv, read_shots_csv, write_dat, write_decay_csv, write_histogram_csv, write_json,
    write_sensitivity_csv, write_shots_csv, FitJson,
};
use super::pipeline::{
    analyze_shots, fit_curve, fit_decay_rows, lifetime_fit, mean_variance_decay, normalized_histograms,
    reference_fringe, reference_variance_decay, sensitivity, shot_table, FitModel, FloorChoice,
};
use super::presets::{decay_config, reference_sensitivity, Preset};

#[derive(Debug, Serialize)]
struct Manifest<'a> {
    artifact: &'a str,
    version: &'a str,
    seed: u64,
    preset: Option<String>,
    config: String,
}

fn prepare(out: &Path) -> Result<()> {
    fs::create_dir_all(out).map_err(|e| Error::Io(format!("{}: {e}", out.display())))
}

/// Runs the decay experiment and writes `shots.csv` and `manifest.json`.
pub fn cmd_simulate(cfg: &RunConfig, out: &Path, preset: Option<Preset>) -> Result<Vec<PathBuf>> {
    prepare(out)?;
    let ds = run_decay_experiment(cfg)?;
    let shots = out.join("shots.csv");
    write_shots_csv(&shots, &shot_table(&ds))?;
    let manifest = out.join("manifest.json");
    write_json(
        &manifest,
        &Manifest {
            artifact: "shots.csv",
            version: env!("CARGO_PKG_VERSION"),
            seed: cfg.seed,
            preset: preset.map(|p| p.to_string()),
            config: dump_config(cfg),
        },
    )?;
    Ok(vec![shots, manifest])
}

/// Outlier rejection and moments per delay: `decay.csv` plus one histogram per delay.
pub fn cmd_analyze(input: &Path, out: &Path, threshold: f64, n_bins: usize) -> Result<Vec<PathBuf>> {
    let table = read_shots_csv(input)?;
    let a = analyze_shots(&table, threshold, n_bins)?;
    prepare(out)?;
    let decay = out.join("decay.csv");
    write_decay_csv(&decay, &a.rows)?;
    let mut written = vec![decay];
    for (row, h) in a.rows.iter().zip(&a.histograms) {
        let p = out.join(format!("hist_{:.3}us.csv", row.delay_us));
        write_histogram_csv(&p, h)?;
        written.push(p);
    }
    for row in &a.rows {
        log::info!(
            "2tau = {:.3} us: kept {}, discarded {}",
            row.delay_us,
            row.n_kept,
            row.n_discarded
        );
    }
    Ok(written)
}

fn first_line(path: &Path) -> Result<String> {
    let text = fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    Ok(text.lines().next().unwrap_or("").to_string())
}

/// Fits a `decay.csv` (delays in µs) or an `x,y[,sigma]` curve (x in seconds
/// or radians) and writes `fit.json`.
pub fn cmd_fit(
    input: &Path,
    out: &Path,
    model: FitModel,
    beta: BetaMode,
    floor: FloorChoice,
) -> Result<(FitJson, PathBuf)> {
    let fit = if first_line(input)?.starts_with("delay_us,") {
        fit_decay_rows(&read_decay_csv(input)?, model, beta, floor)?
    } else {
        fit_curve(&read_curve_csv(input)?, model, beta, floor)?
    };
    if !fit.converged {
        log::warn!("fit did not converge after {} iterations", fit.iterations);
    }
    prepare(out)?;
    let json = FitJson::from(&fit);
    let p = out.join("fit.json");
    write_json(&p, &json)?;
    Ok((json, p))
}

/// Sensitivity inputs: the reference values, with k, A_sp and the kept shot
/// count taken from a config when one is given.
pub fn sensitivity_params(cfg: Option<&RunConfig>) -> SensitivityParams {
    let mut p = reference_sensitivity();
    if let Some(c) = cfg {
        p.k = c.ensemble.k;
        p.a_sp = c.ensemble.a_sp;
        p.n_shots = (c.n_shots as f64 * (1.0 - c.detector.outlier_prob)).round() as u64;
    }
    p
}

#[derive(Debug, Serialize)]
struct SensitivitySummary {
    k: f64,
    n_shots: u64,
    tau_echo: f64,
    a_sp: f64,
    min_emitters: u64,
    crossover_n: f64,
}

pub fn cmd_sensitivity(params: &SensitivityParams, out: &Path) -> Result<Vec<PathBuf>> {
    write_sensitivity(params, out, "sensitivity")
}

fn write_sensitivity(params: &SensitivityParams, out: &Path, stem: &str) -> Result<Vec<PathBuf>> {
    let s = sensitivity(params)?;
    prepare(out)?;
    let csv = out.join(format!("{stem}.csv"));
    write_sensitivity_csv(&csv, &s.table.rows)?;
    let summary = out.join(format!("{stem}_summary.json"));
    write_json(
        &summary,
        &SensitivitySummary {
            k: params.k,
            n_shots: params.n_shots,
            tau_echo: params.tau_echo,
            a_sp: params.a_sp,
            min_emitters: s.min_emitters,
            crossover_n: s.table.crossover_n,
        },
    )?;
    Ok(vec![csv, summary])
}

#[derive(Debug, Serialize)]
struct HistogramStats {
    two_tau: Vec<f64>,
    mean: Vec<f64>,
    std: Vec<f64>,
}

#[derive(Debug, Serialize)]
struct PairedFit {
    mean: FitJson,
    variance: FitJson,
}

/// Regenerates one figure's data: `<name>.dat` plus a fit or summary JSON.
pub fn cmd_reproduce(preset: Preset, seed: u64, out: &Path) -> Result<Vec<PathBuf>> {
    prepare(out)?;
    let name = preset.name();
    let dat = out.join(format!("{name}.dat"));
    let fit_path = out.join(format!("{name}_fit.json"));
    let us = |v: &[f64]| v.iter().map(|t| t * 1e6).collect::<Vec<f64>>();
    match preset {
        Preset::Fig1b | Preset::Fig1d => {
            let h = normalized_histograms(&decay_config(preset, seed)?)?;
            let header: Vec<String> = std::iter::once("intensity_over_n".to_string())
                .chain(h.two_tau.iter().map(|t| format!("count_{:.1}us", t * 1e6)))
                .collect();
            let counts: Vec<Vec<f64>> = h.counts.iter().map(|c| c.iter().map(|&n| n as f64).collect()).collect();
            let mut cols: Vec<&[f64]> = vec![&h.bin_centers];
            cols.extend(counts.iter().map(Vec::as_slice));
            let header: Vec<&str> = header.iter().map(String::as_str).collect();
            write_dat(&dat, &header, &cols)?;
            let stats = out.join(format!("{name}_stats.json"));
            write_json(
                &stats,
                &HistogramStats {
                    two_tau: h.two_tau,
                    mean: h.mean,
                    std: h.std,
                },
            )?;
            Ok(vec![dat, stats])
        }
        Preset::Fig1ef => {
            let r = mean_variance_decay(seed)?;
            write_dat(
                &dat,
                &["two_tau_us", "mean_over_n", "variance_over_n2", "variance_sigma"],
                &[&us(&r.two_tau), &r.mean_over_n, &r.variance_over_n2, &r.variance_sigma],
            )?;
            write_json(
                &fit_path,
                &PairedFit {
                    mean: FitJson::from(&r.mean_fit),
                    variance: FitJson::from(&r.variance_fit),
                },
            )?;
            Ok(vec![dat, fit_path])
        }
        Preset::Fig2a => {
            let r = lifetime_fit(seed)?;
            let t_ms: Vec<f64> = r.t.iter().map(|t| t * 1e3).collect();
            write_dat(&dat, &["t_ms", "counts"], &[&t_ms, &r.counts])?;
            write_json(&fit_path, &FitJson::from(&r.fit))?;
            Ok(vec![dat, fit_path])
        }
        Preset::Fig3a => {
            let r = reference_fringe(seed)?;
            write_dat(
                &dat,
                &["phi_rad", "mean", "std_error"],
                &[&r.phi, &r.mean, &r.std_error],
            )?;
            write_json(&fit_path, &FitJson::from(&r.fit))?;
            Ok(vec![dat, fit_path])
        }
        Preset::Fig3b => {
            let r = reference_variance_decay(seed)?;
            let rows = &r.analysis.rows;
            let col = |f: fn(&super::io::DecayRow) -> f64| rows.iter().map(f).collect::<Vec<f64>>();
            write_dat(
                &dat,
                &["two_tau_us", "mean", "variance", "n_kept", "n_discarded"],
                &[
                    &col(|r| r.delay_us),
                    &col(|r| r.mean),
                    &col(|r| r.variance),
                    &col(|r| r.n_kept as f64),
                    &col(|r| r.n_discarded as f64),
                ],
            )?;
            write_json(&fit_path, &FitJson::from(&r.fit))?;
            Ok(vec![dat, fit_path])
        }
        Preset::Fig3c => {
            let s = sensitivity(&reference_sensitivity())?;
            let rows = &s.table.rows;
            write_dat(
                &dat,
                &["N", "I_fluo", "I_echo", "R"],
                &[
                    &rows.iter().map(|r| r.n_emitters).collect::<Vec<_>>(),
                    &rows.iter().map(|r| r.i_fluo).collect::<Vec<_>>(),
                    &rows.iter().map(|r| r.i_echo).collect::<Vec<_>>(),
                    &rows.iter().map(|r| r.snr).collect::<Vec<_>>(),
                ],
            )?;
            let mut written = vec![dat];
            written.extend(write_sensitivity(&reference_sensitivity(), out, name)?);
            Ok(written)
        }
    }
}
