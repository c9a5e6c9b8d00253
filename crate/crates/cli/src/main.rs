use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};
use num_complex::Complex64;
use serde_json::json;

use soliton_lab::config::RunConfig;
use soliton_lab::evolution::{conserved_quantities, FieldState, Physics, Stepper};
use soliton_lab::experiments::{prepare, run_scenario, write_run, NfRow};
use soliton_lab::fgr::{check_a1, compute_gamma};
use soliton_lab::frame::{renormalize_e, split_h, BranchContext};
use soliton_lab::grid_spectral::{bound_states, SpectrumReport};
use soliton_lab::ground_state::{branch_sweep, energy_for_mass, solve_ground_state, GroundState};
use soliton_lab::io;
use soliton_lab::linearization::LinearizedSystem;
use soliton_lab::normal_form::{
    bracket_clock, build_params, comparison_bracket, example_family, minimal_bracket_m, nf_integrate, NormalFormParams,
};
use soliton_lab::{Error, Result};

const DEFAULT_CONFIG: &str = include_str!("../../../configs/default.toml");

const LONG_VERSION: &str = concat!(
    env!("CARGO_PKG_VERSION"),
    "\ntarget: ",
    env!("BUILD_TARGET"),
    "\nprofile: ",
    env!("BUILD_PROFILE"),
    "\nrustc: ",
    env!("BUILD_RUSTC"),
);

#[derive(Parser)]
#[command(name = "soliton-lab", version, long_version = LONG_VERSION)]
#[command(about = "Ground states, linearization, Fermi golden rule and soliton asymptotics for radial cubic NLS")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct Common {
    /// TOML or JSON run configuration (built-in defaults when omitted).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override a config key, e.g. `--set grid.n=2399`. Repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Output directory (default ./runs/<timestamp>).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads for parallel sweeps.
    #[arg(long, global = true)]
    jobs: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Bound states of -Delta + V.
    Spectrum,
    /// Nonlinear ground state at the configured mass or energy (and the branch if configured).
    Ground,
    /// Linearized operator at the ground state.
    Linearize,
    /// Fermi golden rule constant and the linear positivity constant.
    Fgr,
    /// Evolve the (optionally perturbed) soliton.
    Evolve,
    /// Soliton-frame decomposition of a checkpoint (or of the initial state).
    Decompose {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Normal-form amplitude equation and the scalar example family.
    Nf,
    /// Full scenario run from the `scenario` table.
    Experiment,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(cli) {
        Ok(dir) => {
            println!("output: {}", dir.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_validation() { 1 } else { 2 })
        }
    }
}

fn load_config(common: &Common) -> Result<RunConfig> {
    match &common.config {
        Some(p) => {
            if !p.exists() {
                return Err(Error::Config(format!("config file {} does not exist", p.display())));
            }
            RunConfig::load(p, &common.overrides)
        }
        None => RunConfig::parse(DEFAULT_CONFIG, false, &common.overrides),
    }
}

fn out_dir(common: &Common) -> Result<PathBuf> {
    let dir = match &common.out {
        Some(d) => d.clone(),
        None => {
            let stamp = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_millis());
            PathBuf::from("runs").join(stamp.to_string())
        }
    };
    std::fs::create_dir_all(&dir)?;
    Ok(dir)
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(value)?)?;
    Ok(())
}

fn run(cli: Cli) -> Result<PathBuf> {
    let cfg = load_config(&cli.common)?;
    if let Some(j) = cli.common.jobs {
        if j == 0 {
            return Err(Error::Config("--jobs must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(j)
            .build_global()
            .map_err(|e| Error::Config(format!("cannot size the thread pool: {e}")))?;
    }
    let dir = out_dir(&cli.common)?;
    write_json(&dir.join("config.json"), &cfg)?;
    match cli.command {
        Command::Spectrum => spectrum(&cfg, &dir)?,
        Command::Ground => ground(&cfg, &dir)?,
        Command::Linearize => linearize(&cfg, &dir)?,
        Command::Fgr => fgr(&cfg, &dir)?,
        Command::Evolve => evolve(&cfg, &dir)?,
        Command::Decompose { checkpoint } => decompose(&cfg, &dir, checkpoint.as_deref())?,
        Command::Nf => nf(&cfg, &dir)?,
        Command::Experiment => experiment(&cfg, &dir)?,
    }
    Ok(dir)
}

fn ground_state(cfg: &RunConfig) -> Result<GroundState> {
    let grid = cfg.grid()?;
    let pair = bound_states(&cfg.potential, &grid)?;
    match (cfg.energy, cfg.mass) {
        (Some(e), _) => solve_ground_state(e, cfg.lambda, &pair, &grid, &cfg.potential),
        (None, Some(m)) => energy_for_mass(m, cfg.lambda, &pair, &grid, &cfg.potential),
        (None, None) => Err(Error::Config("one of mass or energy is required".into())),
    }
}

fn spectrum(cfg: &RunConfig, dir: &Path) -> Result<()> {
    let pair = bound_states(&cfg.potential, &cfg.grid()?)?;
    let report = SpectrumReport::from(&pair);
    write_json(&dir.join("spectrum.json"), &report)?;
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(())
}

fn ground(cfg: &RunConfig, dir: &Path) -> Result<()> {
    let gs = ground_state(cfg)?;
    let summary = json!({
        "E": gs.e,
        "lambda": gs.lambda,
        "w": gs.w,
        "mass": gs.mass(),
        "residual": gs.residual,
        "r_residual": gs.r_residual(),
    });
    write_json(&dir.join("ground.json"), &summary)?;
    println!("{}", serde_json::to_string_pretty(&summary)?);
    if let Some(b) = &cfg.branch {
        let grid = cfg.grid()?;
        let pair = bound_states(&cfg.potential, &grid)?;
        let es: Vec<f64> = (0..b.count.max(1))
            .map(|i| b.e_min + (b.e_max - b.e_min) * i as f64 / (b.count.max(2) - 1) as f64)
            .collect();
        let branch = branch_sweep(cfg.lambda, &es, &pair, &grid, &cfg.potential)?;
        io::write_branch(&dir.join("branch.csv"), &dir.join("branch.bin"), &branch)?;
        for (e, why) in &branch.dropped {
            log::warn!("branch sample E = {e} dropped: {why}");
        }
    }
    Ok(())
}

fn linearize(cfg: &RunConfig, dir: &Path) -> Result<()> {
    let grid = cfg.grid()?;
    let pair = bound_states(&cfg.potential, &grid)?;
    let gs = ground_state(cfg)?;
    let sys = LinearizedSystem::build(&gs)?;
    let (res_plus, res_minus) = sys.eigen_residuals();
    let report = json!({
        "diagnostics": sys.diagnostics(Some(pair.e01)),
        "residual_lplus": res_plus,
        "residual_lminus": res_minus,
        "low_spectrum_a": &sys.a_values[..sys.a_values.len().min(8)],
    });
    write_json(&dir.join("linearization.json"), &report)?;
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(())
}

fn fgr(cfg: &RunConfig, dir: &Path) -> Result<()> {
    let grid = cfg.grid()?;
    let pair = bound_states(&cfg.potential, &grid)?;
    let gs = ground_state(cfg)?;
    let sys = LinearizedSystem::build(&gs)?;
    let result = compute_gamma(&sys)?;
    let a1 = check_a1(&cfg.potential, &grid, &pair, &cfg.fgr.s_sweep)?;
    let params = build_params(&gs, &sys, &result)?;
    write_json(
        &dir.join("fgr.json"),
        &json!({ "fgr": result, "a1": a1, "b22_direct": params.b22_direct, "b22_from_gamma": params.b22_from_gamma }),
    )?;
    println!("Gamma = {:.6e}", result.gamma);
    println!("gamma0 = {:.6e}", a1.gamma0);
    println!("Gamma / (2 lambda^2 w^2) = {:.6e}", result.gamma / (2.0 * cfg.lambda * cfg.lambda * gs.w * gs.w));
    println!("resolvent / time-domain = {:.6}", result.gamma_resolvent / result.gamma_timedomain);
    Ok(())
}

fn evolve(cfg: &RunConfig, dir: &Path) -> Result<()> {
    let gs = ground_state(cfg)?;
    let ev = &cfg.evolution;
    let psi0: Vec<Complex64> = gs.q.iter().map(|q| Complex64::new(q * (1.0 + ev.perturbation), 0.0)).collect();
    let mut state = FieldState::new(psi0, gs.e);
    let physics = Physics { grid: gs.grid.clone(), potential: cfg.potential, lambda: cfg.lambda, cap: ev.cap };
    let mut stepper = Stepper::new(physics, ev.dt, gs.e)?;
    stepper.check_dt(&state.psi)?;
    let mut rows: Vec<Vec<f64>> = vec![];
    let res = stepper.evolve(&mut state, ev.t_end, ev.stride, |s| {
        let c = conserved_quantities(&s.psi, &gs.grid, &cfg.potential, cfg.lambda);
        let dev: Vec<f64> = s.psi.iter().zip(&gs.q).map(|(z, q)| z.norm() - q).collect();
        rows.push(vec![s.t, c.mass, c.energy, gs.grid.norm(&dev)]);
        Ok(true)
    });
    io::write_table(&dir.join("trajectory.csv"), &["t", "mass", "energy", "fidelity"], &rows)?;
    if ev.checkpoint || res.is_err() {
        io::write_checkpoint(&dir.join("checkpoint.bin"), &state, gs.grid.dr)?;
    }
    res
}

fn decompose(cfg: &RunConfig, dir: &Path, checkpoint: Option<&Path>) -> Result<()> {
    let setup = cfg.setup()?;
    let prep = prepare(&setup)?;
    let state = match checkpoint {
        Some(p) => {
            let (s, dr) = io::read_checkpoint(p)?;
            if s.psi.len() != setup.grid.n || (dr - setup.grid.dr).abs() > 1e-12 * dr {
                return Err(Error::Config(format!(
                    "checkpoint grid (n = {}, dr = {dr}) does not match the config grid (n = {}, dr = {})",
                    s.psi.len(),
                    setup.grid.n,
                    setup.grid.dr
                )));
            }
            s
        }
        None => FieldState::new(prep.gs.q.iter().map(|q| Complex64::new(*q, 0.0)).collect(), prep.gs.e),
    };
    let mut ctx = BranchContext::new(prep.gs.clone(), prep.pair.clone());
    let ren = renormalize_e(&state.psi, prep.gs.e, &mut ctx)?;
    let (z, eta) = split_h(&ren.h, &prep.modes, &setup.grid);
    let beta0 = cfg.scenario.as_ref().map_or(3.0, |s| s.beta0);
    let report = json!({
        "t": state.t,
        "E": ren.e,
        "Theta": ren.theta - state.gauge * state.t,
        "Re_z": z.re,
        "Im_z": z.im,
        "abs_z": z.norm(),
        "eta_L2loc": setup.grid.l2_loc_c(&eta, beta0),
        "eta_L4": setup.grid.lp_norm_c(&eta, 4.0),
        "eta_L2": setup.grid.norm_c(&eta),
        "iterates": ren.iterates,
        "orthogonality_residual": ren.orthogonality_residual,
    });
    write_json(&dir.join("decomposition.json"), &report)?;
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(())
}

fn nf(cfg: &RunConfig, dir: &Path) -> Result<()> {
    let n = &cfg.nf;
    let params = NormalFormParams::scalar(n.gamma, 1.0);
    let traj = nf_integrate(Complex64::new(n.eps, 0.0), &params, |_| 0.0, |_| Complex64::new(0.0, 0.0), n.t_end, n.dt)?;
    let m = minimal_bracket_m(n.eps0, n.gamma, n.c1, n.sigma).unwrap_or(2.0);
    let bracket = comparison_bracket(n.eps, n.eps0, n.gamma, n.c1, n.sigma, m);
    let rows: Vec<NfRow> = traj
        .states
        .iter()
        .map(|s| {
            let (lo, hi) = if bracket.valid {
                (bracket.lo(s.t), bracket.hi(s.t))
            } else {
                let c = bracket_clock(n.eps, n.gamma, s.t).powf(-0.5);
                (c / m, c * m)
            };
            NfRow { t: s.t, rho: s.rho, omega: s.omega, bracket_lo: lo, bracket_hi: hi }
        })
        .collect();
    io::write_nf(&dir.join("nf.csv"), &rows)?;
    let samples: Vec<f64> = (0..12).map(|k| 0.01 * 1.5f64.powi(k)).collect();
    let facts = example_family(n.gamma, n.example_eps, &samples, n.example_t_end)?;
    write_json(&dir.join("facts.json"), &json!({ "bracket_m": m, "bracket_valid": bracket.valid, "example": facts }))?;
    println!("{}", serde_json::to_string_pretty(&facts)?);
    Ok(())
}

fn experiment(cfg: &RunConfig, dir: &Path) -> Result<()> {
    let scenario = cfg
        .scenario
        .as_ref()
        .ok_or_else(|| Error::Config("experiment needs a [scenario] table".into()))?;
    let record = run_scenario(&cfg.setup()?, scenario)?;
    write_run(dir, &record)?;
    println!("{}", serde_json::to_string_pretty(&record.fits)?);
    match &record.failure {
        Some(msg) => Err(Error::Integration { t: record.frames.last().map_or(0.0, |f| f.t), message: msg.clone() }),
        None => Ok(()),
    }
}
