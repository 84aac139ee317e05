//! Experiment driver: parse a config, run the adaptive solver or one of the
//! verification tools, and write reproducible artifacts into an output
//! directory.
//!
//! Exit codes: 0 on success, 2 when a solve did not converge, 3 on config
//! errors.

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use liftnet::analysis::{
    builtin_candidates, diffuse_flux_condition, extract_network, oracle_best_network,
    triple_junction_certificate, Topology,
};
use liftnet::config::ExperimentConfig;
use liftnet::solver::{adaptive_solve, LevelRecord, SolverEvent};
use serde_json::json;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "liftnet",
    about = "Globally optimal 2D branched-transport networks via convex lifting",
    after_help = "Config defaults are echoed into report.json for provenance. \
                  The LIFTNET_OUT environment variable overrides output_dir."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Worker threads for the data-parallel sections (0 = all cores).
    #[arg(long, global = true, default_value_t = 1)]
    threads: usize,
    /// Seed for the multi-start topology oracle.
    #[arg(long, global = true, default_value_t = 7)]
    seed: u64,
    /// Suppress progress lines.
    #[arg(long, global = true)]
    quiet: bool,
}

#[derive(Args)]
struct ConfigArg {
    /// Path to the JSON experiment config.
    #[arg(long)]
    config: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Run the adaptive primal-dual solver on the configured measures.
    Solve(ConfigArg),
    /// Optimize candidate graph topologies for the configured measures.
    Oracle {
        #[command(flatten)]
        config: ConfigArg,
        /// JSON file with user-supplied topologies (overrides built-ins).
        #[arg(long)]
        topologies: Option<PathBuf>,
    },
    /// Build and check the triple-junction calibration certificate.
    CertifyTripleJunction {
        #[command(flatten)]
        config: ConfigArg,
        #[arg(long, default_value_t = 1.0)]
        m1: f64,
        #[arg(long, default_value_t = 1.0)]
        m2: f64,
    },
    /// Evaluate the diffuse-flux optimality condition for the configured cost.
    CheckDiffuse {
        #[command(flatten)]
        config: ConfigArg,
        #[arg(long, default_value_t = 1.0)]
        beta: f64,
        #[arg(long, default_value_t = 200)]
        samples: usize,
    },
    /// Solve and compare against the oracle over a parameter sweep.
    Sweep {
        #[command(flatten)]
        config: ConfigArg,
        /// Swept parameter: "alpha" (branched transport) or "b" (urban planning).
        #[arg(long)]
        param: String,
        /// Comma-separated parameter values.
        #[arg(long, value_delimiter = ',')]
        values: Vec<f64>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if cli.threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cli.threads)
            .build_global()
            .ok();
    }
    match run(cli) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(3)
        }
    }
}

fn load_config(path: &Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("cannot read config {}", path.display()))?;
    let cfg: ExperimentConfig =
        serde_json::from_str(&text).with_context(|| "malformed config".to_string())?;
    Ok(cfg)
}

fn output_dir(cfg: &ExperimentConfig) -> PathBuf {
    if let Ok(dir) = std::env::var("LIFTNET_OUT") {
        return PathBuf::from(dir);
    }
    PathBuf::from(cfg.output_dir.clone().unwrap_or_else(|| "out".into()))
}

/// Writes a file atomically: to a temporary sibling first, then rename.
fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, contents)
        .with_context(|| format!("cannot write {}", tmp.display()))?;
    std::fs::rename(&tmp, path)
        .with_context(|| format!("cannot move into place {}", path.display()))?;
    Ok(())
}

fn history_csv(history: &[LevelRecord]) -> String {
    let mut out = String::from("level,iters,elements,dofs,energy_primal,energy_dual,gap,seconds\n");
    for r in history {
        out.push_str(&format!(
            "{},{},{},{},{:.12e},{:.12e},{:.12e},{:.3}\n",
            r.level, r.iters, r.elements, r.dofs, r.energy_primal, r.energy_dual, r.gap, r.seconds
        ));
    }
    out
}

fn run(cli: Cli) -> Result<ExitCode> {
    match &cli.command {
        Command::Solve(arg) => cmd_solve(&cli, arg),
        Command::Oracle { config, topologies } => cmd_oracle(&cli, config, topologies.as_deref()),
        Command::CertifyTripleJunction { config, m1, m2 } => cmd_certify(&cli, config, *m1, *m2),
        Command::CheckDiffuse { config, beta, samples } => {
            cmd_check_diffuse(&cli, config, *beta, *samples)
        }
        Command::Sweep { config, param, values } => cmd_sweep(&cli, config, param, values),
    }
}

fn cmd_solve(cli: &Cli, arg: &ConfigArg) -> Result<ExitCode> {
    let cfg = load_config(&arg.config)?;
    let data = cfg.boundary_data()?;
    let cost = cfg.cost()?;
    let params = cfg.solver_params()?;
    let dir = output_dir(&cfg);
    std::fs::create_dir_all(&dir)?;

    let quiet = cli.quiet;
    let mut mesh_dumps: Vec<(usize, Vec<u8>)> = Vec::new();
    let result = adaptive_solve(
        &data,
        &cost,
        cfg.grid.x_level,
        cfg.grid.s_level,
        &params,
        &mut |event| match event {
            SolverEvent::Checkpoint { level, iter, primal, dual, gap, elements } => {
                if !quiet {
                    println!(
                        "level={level} iter={iter} energy_primal={primal:.6e} energy_dual={dual:.6e} gap={gap:.6e} elements={elements}"
                    );
                }
            }
            SolverEvent::LevelDone { record, grid, .. } => {
                if !quiet {
                    println!(
                        "level={} done iters={} elements={} dofs={} gap={:.6e} seconds={:.2}",
                        record.level, record.iters, record.elements, record.dofs, record.gap,
                        record.seconds
                    );
                }
                let mut buf = Vec::new();
                if grid.write_vtk(&mut buf, &[]).is_ok() {
                    mesh_dumps.push((record.level, buf));
                }
            }
        },
    )?;

    write_atomic(&dir.join("history.csv"), history_csv(&result.history).as_bytes())?;
    for (level, buf) in &mesh_dumps {
        write_atomic(&dir.join(format!("mesh_level_{level}.vtk")), buf)?;
    }
    let net = extract_network(&result.grid, &result.layout, &result.state, 0.25);
    let mut csv = Vec::new();
    net.write_csv(&mut csv)?;
    write_atomic(&dir.join("network.csv"), &csv)?;

    let report = json!({
        "command": "solve",
        "config": cfg,
        "converged": result.converged,
        "budget_exhausted": result.budget_exhausted,
        "final": result.history.last(),
        "segments": net.segments.len(),
    });
    write_atomic(&dir.join("report.json"), serde_json::to_string_pretty(&report)?.as_bytes())?;
    Ok(if result.converged { ExitCode::SUCCESS } else { ExitCode::from(2) })
}

fn load_topologies(path: &Path) -> Result<Vec<Topology>> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("cannot read topologies {}", path.display()))?;
    Ok(serde_json::from_str(&text)?)
}

fn config_terminals(
    cfg: &ExperimentConfig,
) -> Result<(Vec<([f64; 2], f64)>, Vec<([f64; 2], f64)>)> {
    let data = cfg.boundary_data()?;
    let domain = data.domain;
    let mut sources = Vec::new();
    let mut sinks = Vec::new();
    for atom in &data.atoms {
        let p = domain.point_of_arclength(atom.arclength)?;
        match atom.sign {
            liftnet::MassSign::Source => sources.push((p, atom.mass)),
            liftnet::MassSign::Sink => sinks.push((p, atom.mass)),
        }
    }
    Ok((sources, sinks))
}

fn cmd_oracle(cli: &Cli, arg: &ConfigArg, topologies: Option<&Path>) -> Result<ExitCode> {
    let cfg = load_config(&arg.config)?;
    let cost = cfg.cost()?;
    let (sources, sinks) = config_terminals(&cfg)?;
    let candidates = match topologies {
        Some(path) => load_topologies(path)?,
        None => builtin_candidates(&sources, &sinks),
    };
    anyhow::ensure!(
        !candidates.is_empty(),
        "no built-in topology family for this configuration; supply --topologies"
    );
    let result = oracle_best_network(&candidates, &cost, cli.seed);
    let dir = output_dir(&cfg);
    std::fs::create_dir_all(&dir)?;
    let best = &result.optimized[result.best_index];
    if !cli.quiet {
        for (i, opt) in result.optimized.iter().enumerate() {
            println!(
                "candidate={} energy={:.9e} junction_residual={:.3e}",
                candidates[i].name, opt.energy, opt.junction_residual
            );
        }
        println!("best={} energy={:.9e}", candidates[result.best_index].name, best.energy);
    }
    let report = json!({
        "command": "oracle",
        "config": cfg,
        "candidates": candidates.iter().map(|c| c.name.clone()).collect::<Vec<_>>(),
        "energies": result.optimized.iter().map(|o| o.energy).collect::<Vec<_>>(),
        "best": candidates[result.best_index].name,
        "best_energy": best.energy,
        "best_free_positions": best.free_positions,
        "bifurcations": result.bifurcations,
    });
    write_atomic(&dir.join("report.json"), serde_json::to_string_pretty(&report)?.as_bytes())?;
    Ok(ExitCode::SUCCESS)
}

fn cmd_certify(_cli: &Cli, arg: &ConfigArg, m1: f64, m2: f64) -> Result<ExitCode> {
    let cfg = load_config(&arg.config)?;
    let cost = cfg.cost()?;
    let cert = triple_junction_certificate(m1, m2, &cost)?;
    let dir = output_dir(&cfg);
    std::fs::create_dir_all(&dir)?;
    let report = json!({
        "command": "certify-triple-junction",
        "config": cfg,
        "m1": m1,
        "m2": m2,
        "passed": cert.passed,
        "collinear": cert.collinear,
        "nodal_slack_min": cert.nodal_slack_min,
        "sampled_slack_min": cert.sampled_slack_min,
        "divergence_free": cert.divergence_free,
        "pairing": cert.pairing,
        "expected_pairing": cert.expected_pairing,
        "directions": {"e0": cert.e0, "e1": cert.e1, "e2": cert.e2},
    });
    println!(
        "certificate passed={} pairing={:.12e} expected={:.12e}",
        cert.passed, cert.pairing, cert.expected_pairing
    );
    write_atomic(&dir.join("report.json"), serde_json::to_string_pretty(&report)?.as_bytes())?;
    Ok(if cert.passed { ExitCode::SUCCESS } else { ExitCode::from(2) })
}

fn cmd_check_diffuse(_cli: &Cli, arg: &ConfigArg, beta: f64, samples: usize) -> Result<ExitCode> {
    let cfg = load_config(&arg.config)?;
    let cost = cfg.cost()?;
    let rep = diffuse_flux_condition(&cost, beta, samples);
    let dir = output_dir(&cfg);
    std::fs::create_dir_all(&dir)?;
    println!(
        "diffuse-flux passed={} worst_margin={:.6e}{}",
        rep.passed,
        rep.worst_margin,
        rep.explanation.as_deref().map(|e| format!(" ({e})")).unwrap_or_default()
    );
    let report = json!({
        "command": "check-diffuse",
        "config": cfg,
        "beta": beta,
        "samples": samples,
        "passed": rep.passed,
        "worst_margin": rep.worst_margin,
        "explanation": rep.explanation,
    });
    write_atomic(&dir.join("report.json"), serde_json::to_string_pretty(&report)?.as_bytes())?;
    Ok(ExitCode::SUCCESS)
}

fn cmd_sweep(cli: &Cli, arg: &ConfigArg, param: &str, values: &[f64]) -> Result<ExitCode> {
    anyhow::ensure!(!values.is_empty(), "sweep needs at least one value");
    let base = load_config(&arg.config)?;
    let dir = output_dir(&base);
    std::fs::create_dir_all(&dir)?;
    let (sources, sinks) = config_terminals(&base)?;
    let candidates = builtin_candidates(&sources, &sinks);
    anyhow::ensure!(!candidates.is_empty(), "sweep requires a configuration with builtin topologies");

    let mut rows = String::from("value,energy_solver,gap,energy_oracle,best_topology,rel_error\n");
    let mut all_converged = true;
    for &v in values {
        let mut cfg = base.clone();
        match (param, &mut cfg.cost) {
            ("alpha", liftnet::config::CostConfig::Bt { alpha }) => *alpha = v,
            ("b", liftnet::config::CostConfig::Up { b, .. }) => *b = v,
            _ => anyhow::bail!("sweep parameter '{param}' does not match the configured cost"),
        }
        let cost = cfg.cost()?;
        let data = cfg.boundary_data()?;
        let params = cfg.solver_params()?;
        let result = adaptive_solve(&data, &cost, cfg.grid.x_level, cfg.grid.s_level, &params, &mut |event| {
            if let SolverEvent::LevelDone { record, .. } = event {
                if !cli.quiet {
                    println!(
                        "value={v} level={} elements={} gap={:.4e}",
                        record.level, record.elements, record.gap
                    );
                }
            }
        })?;
        all_converged &= result.converged;
        let oracle = oracle_best_network(&candidates, &cost, cli.seed);
        let rec = result.history.last().unwrap();
        let best = &oracle.optimized[oracle.best_index];
        let rel = (rec.energy_primal - best.energy) / best.energy;
        rows.push_str(&format!(
            "{v},{:.12e},{:.6e},{:.12e},{},{:.6e}\n",
            rec.energy_primal, rec.gap, best.energy, candidates[oracle.best_index].name, rel
        ));
    }
    write_atomic(&dir.join("sweep.csv"), rows.as_bytes())?;
    Ok(if all_converged { ExitCode::SUCCESS } else { ExitCode::from(2) })
}
