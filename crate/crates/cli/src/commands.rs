//! The simulate, theory and validate subcommands.
//!
//! File formats: pattern CSVs carry one point per row with 17-significant-
//! digit coordinates; curve CSVs are `r,<name>` rows; envelope CSVs are
//! `r,lo,hi,observed`. Undefined values are written as `NaN`, never as zero.
//! Given a configuration and a seed every output byte is reproducible except
//! the manifest timestamp.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use ppchain::chain::{initial_window, intensity_after_n, simulate_chain};
use ppchain::equilibrium::EquilibriumConfig;
use ppchain::noise::sample_poisson;
use ppchain::summaries::{
    empirical_pcf, global_rank_envelope, j_function, l_function, RankEnvelope, SummaryCurve,
};
use ppchain::theory::{pcf_generation_n, pcf_limit, gamma_index, LimitPcf, MixtureKernel};
use ppchain::{PointPattern, RandomStream, Window};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{
    finite_chain_model, process_model, sample_initial, stationary_from_parts, CliError, CliResult,
    ExperimentConfig, RunConfig, SummaryKind, PRESETS,
};

/// Shortest decimal that round-trips an f64: one leading digit plus sixteen.
fn fmt17(v: f64) -> String {
    format!("{v:.16e}")
}

fn write_file(path: &Path, contents: &str) -> CliResult<()> {
    fs::write(path, contents)
        .map_err(|e| CliError::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))
}

fn write_pattern_csv(path: &Path, pattern: &PointPattern) -> CliResult<()> {
    let dim = pattern.dim();
    let header: String = match dim {
        1 => "x".into(),
        2 => "x,y".into(),
        3 => "x,y,z".into(),
        _ => {
            let cols: Vec<String> = (1..=dim).map(|i| format!("x{i}")).collect();
            cols.join(",")
        }
    };
    let mut out = String::with_capacity(16 + 26 * dim * pattern.len());
    out.push_str(&header);
    out.push('\n');
    for p in pattern.iter() {
        for (i, c) in p.iter().enumerate() {
            if i > 0 {
                out.push(',');
            }
            out.push_str(&fmt17(*c));
        }
        out.push('\n');
    }
    write_file(path, &out)
}

fn write_curve_csv(path: &Path, curve: &SummaryCurve, value_name: &str) -> CliResult<()> {
    let mut out = String::with_capacity(64 + 54 * curve.radii.len());
    let _ = writeln!(out, "r,{value_name}");
    for (r, v) in curve.radii.iter().zip(&curve.values) {
        let _ = writeln!(out, "{},{}", fmt17(*r), fmt17(*v));
    }
    write_file(path, &out)
}

fn write_envelope_csv(path: &Path, env: &RankEnvelope) -> CliResult<()> {
    let mut out = String::with_capacity(64 + 110 * env.radii.len());
    out.push_str("r,lo,hi,observed\n");
    for i in 0..env.radii.len() {
        let _ = writeln!(
            out,
            "{},{},{},{}",
            fmt17(env.radii[i]),
            fmt17(env.lo[i]),
            fmt17(env.hi[i]),
            fmt17(env.observed[i])
        );
    }
    write_file(path, &out)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let text = serde_json::to_string_pretty(value)
        .map_err(|e| CliError::Config(format!("serialization: {e}")))?;
    write_file(path, &text)
}

fn unix_now() -> u64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

#[derive(Serialize)]
struct Manifest<'a> {
    command: &'static str,
    package: &'static str,
    version: &'static str,
    seed: u64,
    created_unix: u64,
    config: &'a ExperimentConfig,
    files: Vec<FileEntry>,
}

#[derive(Serialize)]
struct FileEntry {
    file: String,
    points: usize,
}

/// One pattern file per replicate (per snapshot in chain mode), plus a
/// manifest recording the configuration and the seed.
pub fn cmd_simulate(cfg: &ExperimentConfig, seed: u64, out_dir: &Path) -> CliResult<()> {
    fs::create_dir_all(out_dir)?;
    let window = cfg.window()?;
    let root = RandomStream::from_seed(seed);
    let results: Vec<CliResult<Vec<(String, PointPattern)>>> = (0..cfg.replicates as u64)
        .into_par_iter()
        .map(|r| simulate_replicate(cfg, &window, &root.split(r), r))
        .collect();
    let mut files = Vec::new();
    for res in results {
        for (name, pattern) in res? {
            write_pattern_csv(&out_dir.join(&name), &pattern)?;
            files.push(FileEntry {
                file: name,
                points: pattern.len(),
            });
        }
    }
    let manifest = Manifest {
        command: "simulate",
        package: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        seed,
        created_unix: unix_now(),
        config: cfg,
        files,
    };
    write_json(&out_dir.join("manifest.json"), &manifest)?;
    println!(
        "simulate: wrote {} pattern file(s) to {}",
        manifest.files.len(),
        out_dir.display()
    );
    Ok(())
}

fn simulate_replicate(
    cfg: &ExperimentConfig,
    window: &Window,
    rep_stream: &RandomStream,
    rep: u64,
) -> CliResult<Vec<(String, PointPattern)>> {
    match &cfg.run {
        RunConfig::Chain {
            generations,
            snapshots,
        } => {
            let Some(initial_proc) = &cfg.initial else {
                return Err(CliError::Config(
                    "chain runs need an 'initial' process".into(),
                ));
            };
            let params = cfg.chain_params();
            let steps = vec![params; *generations as usize];
            let init_win = initial_window(window, &steps, cfg.buffer_multiplier);
            let mut init_stream = rep_stream.split(0);
            let initial = sample_initial(initial_proc, &init_win, &mut init_stream)?;
            let traces = simulate_chain(
                &initial,
                &steps,
                window,
                cfg.buffer_multiplier,
                &rep_stream.split(1),
            )?;
            let snaps: Vec<u32> = if snapshots.is_empty() {
                vec![*generations]
            } else {
                snapshots.clone()
            };
            let tag_gen = snaps.len() > 1;
            Ok(snaps
                .iter()
                .map(|&g| {
                    let name = if tag_gen {
                        format!("pattern_{rep:03}_gen{g}.csv")
                    } else {
                        format!("pattern_{rep:03}.csv")
                    };
                    (name, traces[g as usize - 1].merged())
                })
                .collect())
        }
        RunConfig::Equilibrium { epsilon } => {
            let mut ecfg = EquilibriumConfig::new(cfg.chain_params(), window.clone());
            ecfg.epsilon = *epsilon;
            ecfg.buffer_multiplier = cfg.buffer_multiplier;
            let pattern = ppchain::equilibrium::simulate_equilibrium(&ecfg, rep_stream)?;
            Ok(vec![(format!("pattern_{rep:03}.csv"), pattern)])
        }
    }
}

#[derive(Serialize)]
struct TheoryReport {
    entries: Vec<TheoryEntry>,
}

#[derive(Serialize)]
struct TheoryEntry {
    variant: String,
    mode: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    generation: Option<u32>,
    intensity: f64,
    /// Integral of `g - 1`; for equilibrium runs this is the aggregation
    /// index.
    #[serde(skip_serializing_if = "Option::is_none")]
    gamma: Option<f64>,
    files: Vec<String>,
}

/// Closed-form pair correlation curves (`g`, not `g - 1`), the underlying
/// mixture kernels as JSON, and a report with intensities and, for
/// equilibrium runs, the aggregation index.
pub fn cmd_theory(cfg: &ExperimentConfig, out_dir: &Path) -> CliResult<()> {
    fs::create_dir_all(out_dir)?;
    let window = cfg.window()?;
    let radii = cfg.radii(&window);
    let variants = cfg.theory_variants()?;
    let mut entries = Vec::new();
    for variant in &variants {
        let label = &variant.label;
        let params = &variant.params;
        match &cfg.run {
            RunConfig::Chain {
                generations,
                snapshots,
            } => {
                let init_model = process_model(&variant.initial, cfg.dim)?;
                let (chain_cfg, rho) =
                    finite_chain_model(cfg.dim, &init_model, params, *generations as usize)?;
                let snaps: Vec<u32> = if snapshots.is_empty() {
                    vec![*generations]
                } else {
                    snapshots.clone()
                };
                let tag_gen = snaps.len() > 1;
                for &g in &snaps {
                    let kernel = pcf_generation_n(&chain_cfg, g as usize)?;
                    let stem = if tag_gen {
                        format!("{label}_gen{g}")
                    } else {
                        label.to_string()
                    };
                    let files = write_theory_files(out_dir, &stem, &radii, &kernel)?;
                    entries.push(TheoryEntry {
                        variant: label.clone(),
                        mode: "generation",
                        generation: Some(g),
                        intensity: rho[g as usize],
                        gamma: None,
                        files,
                    });
                }
            }
            RunConfig::Equilibrium { .. } => {
                let noise = params.noise.pcf_model(cfg.dim)?;
                let model = stationary_from_parts(cfg.dim, params, noise)?;
                let gamma = gamma_index(&model)?;
                let files = match pcf_limit(&model, 1e-10)? {
                    LimitPcf::Mixture(kernel) => {
                        write_theory_files(out_dir, label, &radii, &kernel)?
                    }
                    LimitPcf::Evaluator(eval) => {
                        let mut curve = SummaryCurve::new(&radii);
                        for (i, &r) in radii.iter().enumerate() {
                            curve.values[i] = 1.0 + eval.evaluate(r, 1e-10)?;
                        }
                        let name = format!("theory_{label}.csv");
                        write_curve_csv(&out_dir.join(&name), &curve, "g")?;
                        vec![name]
                    }
                };
                println!("theory: {label} gamma = {gamma:.6e} intensity = {:.6}", model.rho);
                entries.push(TheoryEntry {
                    variant: label.clone(),
                    mode: "equilibrium",
                    generation: None,
                    intensity: model.rho,
                    gamma: Some(gamma),
                    files,
                });
            }
        }
    }
    let report = TheoryReport { entries };
    write_json(&out_dir.join("report.json"), &report)?;
    println!(
        "theory: wrote {} variant curve(s) to {}",
        report.entries.len(),
        out_dir.display()
    );
    Ok(())
}

fn write_theory_files(
    out_dir: &Path,
    stem: &str,
    radii: &[f64],
    kernel: &MixtureKernel,
) -> CliResult<Vec<String>> {
    let mut curve = SummaryCurve::new(radii);
    for (i, &r) in radii.iter().enumerate() {
        curve.values[i] = 1.0 + kernel.evaluate(r)?;
    }
    let curve_name = format!("theory_{stem}.csv");
    let kernel_name = format!("kernel_{stem}.json");
    write_curve_csv(&out_dir.join(&curve_name), &curve, "g")?;
    write_json(&out_dir.join(&kernel_name), kernel)?;
    Ok(vec![curve_name, kernel_name])
}

#[derive(Serialize)]
struct ValidateReport {
    intensity: f64,
    bandwidth: f64,
    level: f64,
    null_sims: usize,
    summaries: Vec<SummaryVerdict>,
}

#[derive(Serialize)]
struct SummaryVerdict {
    summary: String,
    /// True when more than half of the replicates reject.
    outside: bool,
    replicates: Vec<ReplicateVerdict>,
}

#[derive(Serialize)]
struct ReplicateVerdict {
    replicate: u64,
    p_value: f64,
    reject: bool,
    breach_above: bool,
    breach_below: bool,
    file: String,
}

/// Envelope test of each simulated replicate against a Poisson null of the
/// model intensity: envelope CSVs per summary and replicate, a verdict table
/// as JSON, and one verdict line per summary on stdout.
pub fn cmd_validate(cfg: &ExperimentConfig, seed: u64, out_dir: &Path) -> CliResult<()> {
    fs::create_dir_all(out_dir)?;
    let window = cfg.window()?;
    let radii = cfg.radii(&window);
    let rho_model = model_intensity(cfg)?;
    let bandwidth = cfg.bandwidth(rho_model);
    let root = RandomStream::from_seed(seed);
    let reps = cfg.replicates as u64;

    let observed: Vec<CliResult<Vec<(String, PointPattern)>>> = (0..reps)
        .into_par_iter()
        .map(|r| simulate_replicate(cfg, &window, &root.split(r), r))
        .collect();
    let observed: Vec<PointPattern> = observed
        .into_iter()
        .map(|res| {
            res.map(|mut files| {
                // Chain runs keep only the last snapshot for testing.
                files.pop().expect("replicate produced no pattern").1
            })
        })
        .collect::<CliResult<_>>()?;

    let nulls: Vec<PointPattern> = (0..cfg.output.null_sims as u64)
        .into_par_iter()
        .map(|j| {
            let mut s = root.split(reps + j);
            sample_poisson(rho_model, &window, &mut s)
        })
        .collect();

    let kinds = &cfg.output.summaries;
    let mut verdicts = Vec::new();
    for &kind in kinds {
        let sims: Vec<ppchain::Result<SummaryCurve>> = nulls
            .par_iter()
            .map(|p| compute_summary(kind, p, &window, &radii, bandwidth))
            .collect();
        let sims: Vec<SummaryCurve> = sims.into_iter().collect::<ppchain::Result<_>>()?;
        let mut rep_verdicts = Vec::new();
        let mut rejects = 0usize;
        for (r, pattern) in observed.iter().enumerate() {
            let obs = compute_summary(kind, pattern, &window, &radii, bandwidth)?;
            let env = global_rank_envelope(&obs, &sims, cfg.output.level)?;
            let file = if observed.len() > 1 {
                format!("envelope_{}_{r:03}.csv", kind.stem())
            } else {
                format!("envelope_{}.csv", kind.stem())
            };
            write_envelope_csv(&out_dir.join(&file), &env)?;
            rejects += env.reject as usize;
            rep_verdicts.push(ReplicateVerdict {
                replicate: r as u64,
                p_value: env.p_value,
                reject: env.reject,
                breach_above: env.breaches_above(),
                breach_below: env.breaches_below(),
                file,
            });
        }
        let outside = 2 * rejects > observed.len();
        println!(
            "validate: {} -> {} ({} of {} replicates reject at level {})",
            kind.stem(),
            if outside { "outside" } else { "inside" },
            rejects,
            observed.len(),
            cfg.output.level
        );
        verdicts.push(SummaryVerdict {
            summary: kind.stem().to_string(),
            outside,
            replicates: rep_verdicts,
        });
    }

    let report = ValidateReport {
        intensity: rho_model,
        bandwidth,
        level: cfg.output.level,
        null_sims: cfg.output.null_sims,
        summaries: verdicts,
    };
    write_json(&out_dir.join("verdicts.json"), &report)?;
    Ok(())
}

/// Intensity of the tested generation: the stationary intensity for
/// equilibrium runs, the final-generation intensity for chain runs.
fn model_intensity(cfg: &ExperimentConfig) -> CliResult<f64> {
    match &cfg.run {
        RunConfig::Equilibrium { .. } => {
            let params = cfg.chain_params();
            let survival = params.survival_factor();
            if survival >= 1.0 || params.noise.rho() <= 0.0 {
                return Err(CliError::Config(
                    "equilibrium validation needs beta*p + q < 1 and positive noise".into(),
                ));
            }
            Ok(params.noise.rho() / (1.0 - survival))
        }
        RunConfig::Chain { generations, .. } => {
            let Some(initial) = &cfg.initial else {
                return Err(CliError::Config(
                    "chain runs need an 'initial' process".into(),
                ));
            };
            let rho0 = crate::config::process_spec(initial).rho();
            let params = cfg.chain_params();
            let step = (
                params.count.mean(),
                params.thinning_p,
                params.retention_q,
                params.noise.rho(),
            );
            let rho = intensity_after_n(rho0, &vec![step; *generations as usize]);
            if rho <= 0.0 {
                return Err(CliError::Config(
                    "tested generation has zero intensity".into(),
                ));
            }
            Ok(rho)
        }
    }
}

fn compute_summary(
    kind: SummaryKind,
    pattern: &PointPattern,
    window: &Window,
    radii: &[f64],
    bandwidth: f64,
) -> ppchain::Result<SummaryCurve> {
    match kind {
        SummaryKind::Pcf => empirical_pcf(pattern, window, radii, bandwidth),
        SummaryKind::L => l_function(pattern, window, radii),
        SummaryKind::J => j_function(pattern, window, radii),
    }
}

/// Lists preset names, or prints one preset as canonical JSON.
pub fn cmd_presets(name: Option<&str>) -> CliResult<()> {
    match name {
        None => {
            for (n, _) in PRESETS {
                println!("{n}");
            }
            Ok(())
        }
        Some(n) => {
            let cfg = ExperimentConfig::from_preset(n)?;
            let text = serde_json::to_string_pretty(&cfg)
                .map_err(|e| CliError::Config(format!("serialization: {e}")))?;
            println!("{text}");
            Ok(())
        }
    }
}
