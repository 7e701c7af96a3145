//! Bodies of the `figure`, `feasibility` and `run` subcommands.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use qjump_core::hilbert::{self, DensityMatrix, HilbertSpec};
use qjump_core::lindblad::{self, JointModel, SimParams};
use qjump_core::record::{self, FilteredSeries};
use qjump_core::regimes::{self, RegimeReport};
use qjump_core::sme::{self, Frame, InitialState, Mode, PhononDistribution, SimulateOptions, TrajectoryRecord};
use qjump_core::stats;
use serde_json::json;

use crate::config::{ExperimentConfig, RunMode};
use crate::output::{self, Table, TRAJECTORY_COLUMNS};
use crate::svg;

/// Bad input on the command line or in a config file; exits with status 2.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

fn mode_name(mode: Mode) -> &'static str {
    match mode {
        Mode::Full => "full",
        Mode::Adiabatic => "adiabatic",
    }
}

fn frame_name(frame: Frame) -> &'static str {
    match frame {
        Frame::Lab => "lab",
        Frame::Moving => "moving",
        Frame::Pointer => "pointer",
        Frame::Auto => "auto",
    }
}

fn report_json(label: &str, r: &RegimeReport) -> serde_json::Value {
    json!({
        "panel": label,
        "thermalization_rate": r.thermalization_rate,
        "measurement_rate": r.measurement_rate,
        "adiabatic_ratio": r.adiabatic_ratio,
        "fast_meas_ratio": r.fast_meas_ratio,
        "gain": r.gain,
        "adiabatic_ok": r.adiabatic_ok,
        "fast_ok": r.fast_ok,
    })
}

fn with_params(table: Table, p: &SimParams, spec: &HilbertSpec) -> Table {
    table
        .meta("units", "rates in gamma*nbar")
        .meta("kappa", p.kappa)
        .meta("gamma", p.gamma)
        .meta("nbar", p.nbar)
        .meta("chi", p.chi)
        .meta("Gamma", p.measurement_rate())
        .meta("eta", p.eta)
        .meta("dt", p.dt)
        .meta("t_final", p.t_final)
        .meta("seed", p.seed)
        .meta("cavity_dim", spec.cavity_dim())
        .meta("mech_dim", spec.mech_dim())
}

/// Top-level cavity population above which a run is flagged as truncated.
const TRUNCATION_WARN: f64 = 1e-3;

fn warn_truncation(name: &str, r: &TrajectoryRecord) {
    let top = r.diagnostics.max_cavity_top;
    if top > TRUNCATION_WARN {
        eprintln!("warning: {name}: top cavity level reached population {top:.2e}; the cavity basis is too small for this gain");
    }
}

fn trajectory_rows(table: &mut Table, r: &TrajectoryRecord, filtered: &FilteredSeries) {
    for k in 0..r.len() {
        table.rows.push(vec![
            r.times[k],
            r.mean_n[k],
            r.var_n[k],
            r.quad_phase[k],
            r.photocurrent[k],
            filtered.values[k],
        ]);
    }
}

fn quicklook(title: &str, r: &TrajectoryRecord, filtered: &FilteredSeries, p: &SimParams) -> String {
    let quad_as_n: Vec<f64> = r.quad_phase.iter().map(|q| -q * p.kappa / (2.0 * p.chi)).collect();
    let current_as_n: Vec<f64> = filtered.values.iter().map(|i| -i / (2.0 * p.eta * p.chi)).collect();
    svg::render(&[
        svg::Panel {
            title: format!("{title}: phonon number"),
            x: &r.times,
            series: vec![
                svg::Series { label: "mean_n", y: &r.mean_n },
                svg::Series {
                    label: "-quad·κ/2χ",
                    y: &quad_as_n,
                },
            ],
        },
        svg::Panel {
            title: format!("{title}: filtered current / (-2ηχ)"),
            x: &r.times,
            series: vec![svg::Series {
                label: "i_h filtered",
                y: &current_as_n,
            }],
        },
        svg::Panel {
            title: format!("{title}: variance"),
            x: &r.times,
            series: vec![svg::Series { label: "var_n", y: &r.var_n }],
        },
    ])
}

fn write_svg(path: &Path, body: &str) -> Result<()> {
    fs::write(path, body).with_context(|| format!("writing {}", path.display()))
}

fn check_params(p: &SimParams, mode: Mode) -> Result<()> {
    p.validate(mode == Mode::Full).map_err(|e| usage(e.to_string()))?;
    if !(p.t_final > 0.0 && p.t_final.is_finite()) {
        return Err(usage(format!("t_final = {} must be positive", p.t_final)));
    }
    Ok(())
}

/// `qjump figure k`.
pub fn figure(
    k: u8,
    seed: Option<u64>,
    dt: Option<f64>,
    t_final: Option<f64>,
    window: Option<f64>,
    out: &Path,
) -> Result<ExitCode> {
    let panels = regimes::figure(k).map_err(|e| usage(e.to_string()))?;
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    for mut panel in panels {
        if let Some(s) = seed {
            panel.params.seed = s;
        }
        if let Some(dt) = dt {
            panel.params.dt = dt;
            panel.sample_every = ((regimes::SAMPLE_SPACING / dt).round() as usize).max(1);
        }
        if let Some(t) = t_final {
            panel.params.t_final = t;
        }
        check_params(&panel.params, panel.mode)?;
        let window = window.unwrap_or_else(|| panel.filter_window());
        let name = format!("fig{}{}", panel.figure, panel.label);
        let init = InitialState::Diagonal(PhononDistribution::fock(0, panel.spec.mech_dim() - 1)?);
        let options = SimulateOptions::default();
        let r = sme::simulate_with(&panel.params, &panel.spec, &init, panel.mode, panel.sample_every, 0, &options)
            .with_context(|| format!("simulating {name}"))?;
        let filtered = record::sliding_average(&r.times, &r.photocurrent, window)
            .map_err(|e| usage(format!("{name}: {e}")))?;

        let frame = match panel.mode {
            Mode::Full => frame_name(options.frame.resolve(&panel.params, &panel.spec)),
            Mode::Adiabatic => "none",
        };
        let mut table = with_params(Table::new(&TRAJECTORY_COLUMNS), &panel.params, &panel.spec)
            .meta("figure", panel.figure)
            .meta("panel", panel.label)
            .meta("mode", mode_name(panel.mode))
            .meta("frame", frame)
            .meta("stream", 0)
            .meta("trajectories", 1)
            .meta("sample_every", panel.sample_every)
            .meta("window", filtered.window)
            .meta("max_cavity_top", r.diagnostics.max_cavity_top);
        warn_truncation(&name, &r);
        trajectory_rows(&mut table, &r, &filtered);
        output::write_table(&out.join(format!("{name}.csv")), &table)?;
        write_svg(
            &out.join(format!("{name}.svg")),
            &quicklook(&name, &r, &filtered, &panel.params),
        )?;

        if panel.figure == 4 {
            let discard = stats::default_discard(panel.params.kappa, window);
            let h = stats::fock_histogram(&r, discard)?;
            let len = h.weights.len().max(2);
            let thermal = stats::thermal_distribution(panel.params.nbar, len - 1)?;
            let mut hist = with_params(Table::new(&["level", "weight", "thermal"]), &panel.params, &panel.spec)
                .meta("figure", panel.figure)
                .meta("panel", panel.label)
                .meta("discard", discard)
                .meta("samples", h.total_samples);
            let levels: Vec<f64> = (0..len).map(|n| n as f64).collect();
            let weights: Vec<f64> = (0..len).map(|n| h.weights.get(n).copied().unwrap_or(0.0)).collect();
            for n in 0..len {
                hist.rows.push(vec![levels[n], weights[n], thermal.probabilities()[n]]);
            }
            output::write_table(&out.join(format!("{name}_hist.csv")), &hist)?;
            let svg = svg::render(&[svg::Panel {
                title: format!("{name}: Fock histogram"),
                x: &levels,
                series: vec![
                    svg::Series {
                        label: "round(mean_n)",
                        y: &weights,
                    },
                    svg::Series {
                        label: "thermal",
                        y: thermal.probabilities(),
                    },
                ],
            }]);
            write_svg(&out.join(format!("{name}_hist.svg")), &svg)?;
        }
        println!("{}", report_json(&name, &panel.report()));
    }
    Ok(ExitCode::SUCCESS)
}

/// `qjump feasibility`: SI inputs, rates in s⁻¹.
pub fn feasibility(
    temperature: f64,
    q: f64,
    kappa: f64,
    chi: Option<f64>,
    drive: Option<(f64, f64)>,
) -> Result<ExitCode> {
    let chi = match (chi, drive) {
        (Some(c), _) => c,
        (None, Some((g, alpha0))) => regimes::chi_from_drive(g, alpha0),
        (None, None) => return Err(usage("give --chi or both --G and --alpha0")),
    };
    let f = regimes::feasibility(temperature, q, kappa, chi).map_err(|e| usage(e.to_string()))?;
    let line = json!({
        "temperature_K": temperature,
        "Q": q,
        "kappa": kappa,
        "chi": chi,
        "thermal_rate": f.thermal_rate,
        "measurement_rate": f.measurement_rate,
        "adiabatic_margin": f.adiabatic_margin,
        "fast_margin": f.fast_margin,
        "adiabatic_ok": f.adiabatic_ok,
        "fast_ok": f.fast_ok,
    });
    println!("{line}");
    Ok(ExitCode::SUCCESS)
}

/// `qjump run config`.
pub fn run(path: &Path, overrides: &[String]) -> Result<ExitCode> {
    let cfg = ExperimentConfig::load(path, overrides).map_err(|e| usage(format!("{}: {e:#}", path.display())))?;
    let out = resolve_output(path, &cfg.output);
    if let Some(dir) = out.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        }
    }
    match cfg.mode {
        RunMode::Lindblad => run_lindblad(&cfg, &out)?,
        RunMode::Full | RunMode::Adiabatic => run_conditional(&cfg, &out)?,
    }
    Ok(ExitCode::SUCCESS)
}

/// Relative outputs land next to the config file.
fn resolve_output(config: &Path, output: &Path) -> PathBuf {
    if output.is_absolute() {
        output.to_path_buf()
    } else {
        config.parent().unwrap_or(Path::new(".")).join(output)
    }
}

fn sibling(path: &Path, suffix: &str, ext: &str) -> PathBuf {
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("run");
    path.with_file_name(format!("{stem}{suffix}.{ext}"))
}

fn run_conditional(cfg: &ExperimentConfig, out: &Path) -> Result<()> {
    let mode = if cfg.mode == RunMode::Full { Mode::Full } else { Mode::Adiabatic };
    let p0 = cfg.initial.populations(cfg.spec.mech_dim()).map_err(|e| usage(format!("{e:#}")))?;
    let init = InitialState::Diagonal(p0);
    let options = SimulateOptions {
        frame: cfg.frame,
        positivity_every: None,
    };
    let runs = stats::par_indexed(cfg.trajectories, |k| {
        sme::simulate_with(&cfg.params, &cfg.spec, &init, mode, cfg.sample_every, k as u64, &options)
    })
    .context("simulating")?;
    let first = &runs[0];
    let filtered = record::sliding_average(&first.times, &first.photocurrent, cfg.window)
        .map_err(|e| usage(format!("window: {e}")))?;
    let frame = match mode {
        Mode::Full => frame_name(cfg.frame.resolve(&cfg.params, &cfg.spec)),
        Mode::Adiabatic => "none",
    };
    let mut table = with_params(Table::new(&TRAJECTORY_COLUMNS), &cfg.params, &cfg.spec)
        .meta("mode", mode_name(mode))
        .meta("frame", frame)
        .meta("stream", 0)
        .meta("trajectories", cfg.trajectories)
        .meta("sample_every", cfg.sample_every)
        .meta("window", filtered.window)
        .meta("max_cavity_top", first.diagnostics.max_cavity_top);
    for r in &runs {
        warn_truncation("run", r);
    }
    trajectory_rows(&mut table, first, &filtered);
    output::write_table(out, &table)?;
    write_svg(
        &sibling(out, "", "svg"),
        &quicklook("run", first, &filtered, &cfg.params),
    )?;

    if runs.len() > 1 {
        let series: Vec<Vec<f64>> = runs.iter().map(|r| r.mean_n.clone()).collect();
        let s = stats::summarize(first.times.clone(), &series)?;
        let mut ens = with_params(Table::new(&["time", "mean_n", "stderr", "unconditional"]), &cfg.params, &cfg.spec)
            .meta("mode", mode_name(mode))
            .meta("trajectories", s.trajectories)
            .meta("sample_every", cfg.sample_every);
        let n0 = runs[0].mean_n.first().copied().unwrap_or(0.0);
        let start = cfg
            .initial
            .populations(cfg.spec.mech_dim())
            .map(|p| p.mean())
            .unwrap_or(n0);
        for k in 0..s.times.len() {
            let exact = qjump_core::analytic::mean_phonon_unconditional(start, cfg.params.nbar, cfg.params.gamma, s.times[k]);
            ens.rows.push(vec![s.times[k], s.mean_of_mean_n[k], s.stderr[k], exact]);
        }
        output::write_table(&sibling(out, "_ensemble", "csv"), &ens)?;
    }
    println!(
        "{}",
        json!({
            "output": out.display().to_string(),
            "samples": first.len(),
            "trajectories": runs.len(),
            "regime": report_json("run", &regimes::check_conditions(&cfg.params, cfg.n_max)),
        })
    );
    Ok(())
}

fn run_lindblad(cfg: &ExperimentConfig, out: &Path) -> Result<()> {
    let p0 = cfg.initial.populations(cfg.spec.mech_dim()).map_err(|e| usage(format!("{e:#}")))?;
    let rho0 = DensityMatrix::product(
        &hilbert::fock_state(0, cfg.spec.cavity_dim())?,
        &hilbert::diagonal_state(p0.probabilities())?,
    );
    let evo = lindblad::evolve_with(
        &rho0,
        &cfg.params,
        &cfg.spec,
        cfg.sample_every,
        &lindblad::EvolveOptions { positivity_every: None },
    )
    .context("integrating the master equation")?;
    let model = JointModel::new(&cfg.params, &cfg.spec);
    let signal = cfg.params.eta * cfg.params.kappa;
    let mut table = with_params(Table::new(&TRAJECTORY_COLUMNS), &cfg.params, &cfg.spec)
        .meta("mode", "lindblad")
        .meta("trajectories", 0)
        .meta("sample_every", cfg.sample_every);
    let mut times = Vec::new();
    let mut mean = Vec::new();
    let mut quad = Vec::new();
    for (t, rho) in &evo.samples {
        let (m, v) = model.phonon_moments(rho.matrix());
        let q = 2.0 * model.mean_a(rho.matrix()).im;
        // noiseless current: the raw and filtered columns coincide
        table.rows.push(vec![*t, m, v, q, signal * q, signal * q]);
        times.push(*t);
        mean.push(m);
        quad.push(-q * cfg.params.kappa / (2.0 * cfg.params.chi));
    }
    output::write_table(out, &table)?;
    let svg = svg::render(&[svg::Panel {
        title: "master equation".into(),
        x: &times,
        series: vec![
            svg::Series { label: "mean_n", y: &mean },
            svg::Series {
                label: "-quad·κ/2χ",
                y: &quad,
            },
        ],
    }]);
    write_svg(&sibling(out, "", "svg"), &svg)?;
    println!(
        "{}",
        json!({
            "output": out.display().to_string(),
            "samples": evo.samples.len(),
            "max_trace_drift": evo.trace_drift.iter().copied().fold(0.0, f64::max),
        })
    );
    Ok(())
}
