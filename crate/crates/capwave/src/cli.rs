//! Command-line front end: argument parsing, run orchestration, and the
//! diagnostics report.

use std::fmt;
use std::path::PathBuf;
use std::sync::Arc;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::field::SurfaceField;
use crate::functionals::{
    eval_jrho, eval_k, eval_l2, phi_from_eta, FunctionalBreakdown, PenaltyParams,
};
use crate::gradients::{
    fd_relative_error, grad_jrho, grad_jrho_with_solve, grad_k, grad_l, precondition,
};
use crate::grid::GridSpec;
use crate::io;
use crate::minimizer::{
    construct_seed, continuation_run, minimize, sample_c_mu, MinimizerConfig, MinimizerState,
    SeedKind, StopReason,
};
use crate::slab::{SlabSolver, DEFAULT_MAX_TERMS};

/// Process exit codes, scriptable by the acceptance harness.
pub const EXIT_OK: i32 = 0;
pub const EXIT_NOT_CONVERGED: i32 = 2;
pub const EXIT_DIVERGED: i32 = 3;
pub const EXIT_CONFIG: i32 = 4;

/// Relative tolerance of the volume-vs-surface energy identity check.
const ENERGY_IDENTITY_TOL: f64 = 1e-6;

#[derive(Parser, Debug)]
#[command(
    name = "capwave",
    about = "Variational solver for fully localised gravity-capillary solitary waves",
    version
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Minimise the penalised objective from a seed profile.
    Solve(SolveArgs),
    /// Evaluate the functionals on a stored surface field.
    Eval(FieldArgs),
    /// Run the invariant report on a stored surface field.
    Diagnostics(DiagnosticsArgs),
    /// Validate the analytic gradients against finite differences.
    CheckGradients(CheckGradientsArgs),
    /// Estimate c_mu at mu and 2mu and test strict sub-additivity.
    Subadditivity(SubadditivityArgs),
    /// Export plot-ready centerline and surface data for a stored field.
    Export(ExportArgs),
}

/// Physical and numerical parameters of the computational domain.
#[derive(Args, Debug, Clone)]
pub struct GridArgs {
    /// Bond number; the model requires strong surface tension, beta > 1/3.
    #[arg(long, default_value_t = 2.0)]
    pub beta: f64,
    /// Momentum parameter mu > 0 (the constraint is I = 2 mu).
    #[arg(long, default_value_t = 0.2)]
    pub mu: f64,
    /// Streamwise grid points.
    #[arg(long, default_value_t = 256)]
    pub nx: usize,
    /// Spanwise grid points.
    #[arg(long, default_value_t = 256)]
    pub nz: usize,
    /// Vertical collocation points of the slab solver.
    #[arg(long, default_value_t = 16)]
    pub ny: usize,
    /// Streamwise box period.
    #[arg(long, default_value_t = 80.0)]
    pub lx: f64,
    /// Spanwise box period (long, matching the lump anisotropy).
    #[arg(long, default_value_t = 320.0)]
    pub lz: f64,
    /// Outer H^3 radius: reaching it is a hard error.
    #[arg(long = "m-ball", default_value_t = 12.0)]
    pub m_ball: f64,
    /// Inner H^3 radius where the penalty switches on.
    #[arg(long = "m-tilde", default_value_t = 10.0)]
    pub m_tilde: f64,
}

impl GridArgs {
    pub fn grid(&self) -> Result<Arc<GridSpec>> {
        if self.beta <= 1.0 / 3.0 {
            return Err(Error::invalid(
                "beta",
                format!(
                    "beta = {} rejected: the model covers strong surface tension only (beta > 1/3)",
                    self.beta
                ),
            ));
        }
        if self.mu <= 0.0 {
            return Err(Error::invalid("mu", "mu must be positive"));
        }
        Ok(Arc::new(GridSpec::new(
            self.nx,
            self.nz,
            self.ny,
            self.lx,
            self.lz,
            self.beta,
            self.mu,
            self.m_ball,
            self.m_tilde,
        )?))
    }

    pub fn penalty(&self) -> Result<PenaltyParams> {
        PenaltyParams::new(self.m_tilde, self.m_ball, 1.0)
    }
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum SeedArg {
    /// Explicit lump profile rescaled onto the momentum shell.
    Kp,
    /// Compactly supported stream-bump construction.
    Bump,
    /// Load the seed from a field dump (requires --seed-file).
    File,
}

impl SeedArg {
    fn kind(self) -> SeedKind {
        match self {
            SeedArg::Kp => SeedKind::Kp,
            SeedArg::Bump => SeedKind::Bump,
            SeedArg::File => SeedKind::File,
        }
    }

    fn name(self) -> &'static str {
        match self {
            SeedArg::Kp => "kp",
            SeedArg::Bump => "bump",
            SeedArg::File => "file",
        }
    }
}

#[derive(Args, Debug, Clone)]
pub struct SolveArgs {
    #[command(flatten)]
    pub grid: GridArgs,
    /// Preconditioned-residual stopping tolerance.
    #[arg(long = "tol", default_value_t = 1e-6)]
    pub tol_grad: f64,
    #[arg(long = "max-iter", default_value_t = 1000)]
    pub max_iter: usize,
    /// Tolerance of each slab boundary-value solve.
    #[arg(long = "bvp-tol", default_value_t = 1e-10)]
    pub bvp_tol: f64,
    /// Seed profile family.
    #[arg(long, value_enum, default_value_t = SeedArg::Kp)]
    pub seed: SeedArg,
    /// Amplitude A of the bump seed.
    #[arg(long = "bump-A", default_value_t = 4.0)]
    pub bump_amplitude: f64,
    /// Field dump used when --seed file; its header overrides the grid flags.
    #[arg(long = "seed-file")]
    pub seed_file: Option<PathBuf>,
    /// Strictly decreasing momentum schedule for continuation, e.g. 0.2,0.15,0.1.
    #[arg(long, value_delimiter = ',')]
    pub continuation: Option<Vec<f64>>,
    /// Directory receiving the run artifacts.
    #[arg(long, default_value = "runs/latest")]
    pub out: PathBuf,
    /// Keep every n-th record of the convergence log.
    #[arg(long = "log-every", default_value_t = 1)]
    pub log_every: usize,
    /// Skip the binary eta/phi dumps.
    #[arg(long = "no-fields")]
    pub no_fields: bool,
    /// Also write centerline and decimated-surface CSV slices.
    #[arg(long)]
    pub slices: bool,
}

/// A stored field plus the solver-side parameters its header cannot carry.
#[derive(Args, Debug, Clone)]
pub struct FieldArgs {
    /// Field dump to load.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, default_value_t = 16)]
    pub ny: usize,
    #[arg(long = "m-ball", default_value_t = 12.0)]
    pub m_ball: f64,
    #[arg(long = "m-tilde", default_value_t = 10.0)]
    pub m_tilde: f64,
    /// Tolerance of each slab boundary-value solve.
    #[arg(long = "bvp-tol", default_value_t = 1e-10)]
    pub bvp_tol: f64,
}

#[derive(Args, Debug, Clone)]
pub struct DiagnosticsArgs {
    #[command(flatten)]
    pub field: FieldArgs,
    /// Residual below which the field is treated as a critical point, so
    /// the critical-point-only checks apply instead of being skipped.
    #[arg(long = "critical-tol", default_value_t = 1e-4)]
    pub critical_tol: f64,
}

#[derive(Args, Debug, Clone)]
pub struct CheckGradientsArgs {
    /// Bond number of the test configuration.
    #[arg(long, default_value_t = 2.0)]
    pub beta: f64,
    #[arg(long, default_value_t = 0.1)]
    pub mu: f64,
    #[arg(long, default_value_t = 32)]
    pub nx: usize,
    #[arg(long, default_value_t = 32)]
    pub nz: usize,
    #[arg(long, default_value_t = 12)]
    pub ny: usize,
    /// Random directions per functional.
    #[arg(long, default_value_t = 5)]
    pub directions: usize,
    /// RNG seed for the random fields.
    #[arg(long = "rng-seed", default_value_t = 2024)]
    pub rng_seed: u64,
    /// Worst accepted relative error.
    #[arg(long = "tol", default_value_t = 1e-5)]
    pub tol: f64,
}

#[derive(Args, Debug, Clone)]
pub struct SubadditivityArgs {
    #[command(flatten)]
    pub grid: GridArgs,
    #[arg(long = "tol", default_value_t = 1e-6)]
    pub tol_grad: f64,
    #[arg(long = "max-iter", default_value_t = 1000)]
    pub max_iter: usize,
    #[arg(long = "bvp-tol", default_value_t = 1e-10)]
    pub bvp_tol: f64,
    #[arg(long, value_enum, default_value_t = SeedArg::Kp)]
    pub seed: SeedArg,
    #[arg(long = "bump-A", default_value_t = 4.0)]
    pub bump_amplitude: f64,
}

#[derive(Args, Debug, Clone)]
pub struct ExportArgs {
    /// Field dump to export.
    #[arg(long)]
    pub input: PathBuf,
    /// Directory receiving the CSV slices.
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

/// Full run configuration: the descent parameters plus artifact policy.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub minimizer: MinimizerConfig,
    pub out_dir: PathBuf,
    pub emit_fields: bool,
    pub emit_slices: bool,
    pub log_every: usize,
    pub seed_arg: SeedArg,
    pub seed_file: Option<PathBuf>,
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        self.minimizer.validate()?;
        if self.log_every == 0 {
            return Err(Error::invalid("log-every", "must be at least 1"));
        }
        if self.seed_arg == SeedArg::File && self.seed_file.is_none() {
            return Err(Error::invalid("seed-file", "required with --seed file"));
        }
        Ok(())
    }
}

/// Paths of everything a solve leaves on disk, plus the process exit code.
#[derive(Debug)]
pub struct RunArtifacts {
    pub metadata: PathBuf,
    pub eta_field: Option<PathBuf>,
    pub phi_field: Option<PathBuf>,
    pub convergence: PathBuf,
    pub diagnostics: PathBuf,
    pub exit_code: i32,
}

/// Build the run configuration from parsed arguments; for file seeds the
/// dump header overrides the grid flags (the stored samples fix the grid).
pub fn parse_config(args: &SolveArgs) -> Result<RunConfig> {
    let grid = match (&args.seed, &args.seed_file) {
        (SeedArg::File, Some(path)) => {
            let (header, _) = io::read_field(path)?;
            header.grid(args.grid.ny, args.grid.m_ball, args.grid.m_tilde)?
        }
        _ => args.grid.grid()?,
    };
    let cfg = RunConfig {
        minimizer: MinimizerConfig {
            grid,
            penalty: args.grid.penalty()?,
            tol_grad: args.tol_grad,
            max_iter: args.max_iter,
            bvp_tol: args.bvp_tol,
            seed_kind: args.seed.kind(),
            bump_amplitude: args.bump_amplitude,
            continuation: args.continuation.clone(),
        },
        out_dir: args.out.clone(),
        emit_fields: !args.no_fields,
        emit_slices: args.slices,
        log_every: args.log_every,
        seed_arg: args.seed,
        seed_file: args.seed_file.clone(),
    };
    cfg.validate()?;
    Ok(cfg)
}

fn stop_name(stop: StopReason) -> &'static str {
    match stop {
        StopReason::Converged => "converged",
        StopReason::MaxIter => "max-iter",
        StopReason::LineSearchFailed => "line-search-failed",
        StopReason::SeriesDiverged => "series-diverged",
    }
}

fn stop_exit_code(stop: StopReason) -> i32 {
    match stop {
        StopReason::Converged => EXIT_OK,
        StopReason::MaxIter | StopReason::LineSearchFailed => EXIT_NOT_CONVERGED,
        StopReason::SeriesDiverged => EXIT_DIVERGED,
    }
}

/// Exit code for a hard error (one that produced no final state).
pub fn error_exit_code(err: &Error) -> i32 {
    match err {
        Error::SeriesDiverged { .. } => EXIT_DIVERGED,
        _ => EXIT_CONFIG,
    }
}

fn metadata_skeleton(cfg: &RunConfig) -> io::RunMetadata {
    io::RunMetadata {
        format: io::FIELD_MAGIC.into(),
        transform: "unnormalized forward DFT, values row-major with z fastest, \
                    quadrature weight dx*dz/(nx*nz)"
            .into(),
        grid: (*cfg.minimizer.grid).clone(),
        m_tilde: cfg.minimizer.penalty.m_tilde,
        m_ball: cfg.minimizer.penalty.m_ball,
        kappa_rho: cfg.minimizer.penalty.kappa_rho,
        tol_grad: cfg.minimizer.tol_grad,
        max_iter: cfg.minimizer.max_iter,
        bvp_tol: cfg.minimizer.bvp_tol,
        seed: cfg.seed_arg.name().into(),
        bump_amplitude: cfg.minimizer.bump_amplitude,
        seed_file: cfg
            .seed_file
            .as_ref()
            .map(|p| p.to_string_lossy().into_owned()),
        continuation: cfg.minimizer.continuation.clone(),
        log_every: cfg.log_every,
        emit_fields: cfg.emit_fields,
        emit_slices: cfg.emit_slices,
        outcome: None,
    }
}

/// Run the descent described by the configuration and write every artifact
/// (also on non-converged stops, so partial runs stay inspectable).
pub fn run_solve(cfg: &RunConfig) -> Result<RunArtifacts> {
    cfg.validate()?;
    std::fs::create_dir_all(&cfg.out_dir)?;
    let t0 = Instant::now();
    let mut meta = metadata_skeleton(cfg);
    let meta_path = cfg.out_dir.join("metadata.json");

    let run = || -> Result<MinimizerState> {
        if let Some(schedule) = &cfg.minimizer.continuation {
            let mut states = continuation_run(&cfg.minimizer, schedule)?;
            for (i, st) in states.iter().enumerate() {
                io::write_convergence_csv(
                    &cfg.out_dir.join(format!("convergence_stage{i}.csv")),
                    &st.history,
                    cfg.log_every,
                )?;
            }
            states
                .pop()
                .ok_or_else(|| Error::invalid("continuation", "schedule must be nonempty"))
        } else {
            let seed = match cfg.seed_arg {
                SeedArg::File => {
                    let path = cfg.seed_file.as_ref().expect("validated");
                    let g = &cfg.minimizer.grid;
                    let (_, field) = io::load_field(path, g.n_y, g.m_ball, g.m_tilde)?;
                    field
                }
                _ => construct_seed(&cfg.minimizer)?,
            };
            minimize(&cfg.minimizer, &seed)
        }
    };

    let state = match run() {
        Ok(state) => state,
        Err(err) => {
            // Record what was attempted before bubbling the failure up.
            io::write_metadata(&meta_path, &meta)?;
            return Err(err);
        }
    };

    let grid = state.eta.grid().clone();
    let b = state.breakdown;
    meta.outcome = Some(io::RunOutcome {
        stop: stop_name(state.stop).into(),
        iterations: state.iter,
        j_mu: b.j_mu,
        j_penalised: b.j_mu + b.penalty,
        residual: state.residual,
        speed: b.speed_lambda,
        l_total: b.l_total,
        h3_norm: state.eta.h3_norm_sq().sqrt(),
        penalty: b.penalty,
        elapsed_seconds: t0.elapsed().as_secs_f64(),
    });

    let convergence = cfg.out_dir.join("convergence.csv");
    io::write_convergence_csv(&convergence, &state.history, cfg.log_every)?;

    let solver = SlabSolver::new(&grid);
    let (mut eta_path, mut phi_path) = (None, None);
    if cfg.emit_fields {
        let p = cfg.out_dir.join("eta.field");
        io::write_field(&p, &state.eta)?;
        eta_path = Some(p);
        // The potential trace requires one extra solve and is undefined on
        // degenerate states; skip it rather than discard the run.
        if let Ok(phi) = phi_from_eta(&solver, &state.eta, grid.mu, cfg.minimizer.bvp_tol) {
            let p = cfg.out_dir.join("phi.field");
            io::write_field(&p, &phi)?;
            phi_path = Some(p);
        }
    }
    if cfg.emit_slices {
        io::write_slices(&cfg.out_dir, &state.eta)?;
    }

    let report = diagnose(
        &solver,
        &state.eta,
        &cfg.minimizer.penalty,
        cfg.minimizer.bvp_tol,
        cfg.minimizer.tol_grad * 10.0,
    )?;
    let diagnostics = cfg.out_dir.join("diagnostics.txt");
    std::fs::write(&diagnostics, format!("{report}"))?;
    io::write_metadata(&meta_path, &meta)?;

    println!(
        "{}: {} iterations, J_mu = {:.8e}, residual = {:.3e}, speed = {:.6}, elapsed {:.1}s",
        stop_name(state.stop),
        state.iter,
        b.j_mu,
        state.residual,
        b.speed_lambda,
        t0.elapsed().as_secs_f64()
    );
    print!("{report}");

    Ok(RunArtifacts {
        metadata: meta_path,
        eta_field: eta_path,
        phi_field: phi_path,
        convergence,
        diagnostics,
        exit_code: stop_exit_code(state.stop),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CheckStatus {
    Pass,
    Fail,
    Skipped,
    Info,
}

impl fmt::Display for CheckStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            CheckStatus::Pass => "PASS",
            CheckStatus::Fail => "FAIL",
            CheckStatus::Skipped => "SKIPPED",
            CheckStatus::Info => "INFO",
        };
        write!(f, "{s}")
    }
}

#[derive(Debug)]
pub struct CheckRow {
    pub name: &'static str,
    pub status: CheckStatus,
    pub detail: String,
}

/// Invariant report for a surface field.
#[derive(Debug)]
pub struct DiagnosticsReport {
    pub rows: Vec<CheckRow>,
}

impl DiagnosticsReport {
    pub fn failed(&self) -> bool {
        self.rows.iter().any(|r| r.status == CheckStatus::Fail)
    }
}

impl fmt::Display for DiagnosticsReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for row in &self.rows {
            writeln!(f, "{:<26} {:<8} {}", row.name, row.status, row.detail)?;
        }
        Ok(())
    }
}

/// Evaluate the invariant suite on a field. Checks that only hold at
/// critical points are skipped unless the preconditioned residual is below
/// `critical_tol`; the universal ones always apply.
pub fn diagnose(
    solver: &SlabSolver,
    eta: &SurfaceField,
    penalty: &PenaltyParams,
    bvp_tol: f64,
    critical_tol: f64,
) -> Result<DiagnosticsReport> {
    if eta.max_abs() == 0.0 {
        return Err(Error::invalid(
            "field",
            "eta = 0: the objective is undefined at the origin",
        ));
    }
    let grid = eta.grid();
    let mu = grid.mu;
    let mut rows = Vec::new();

    let (g, b, _) = grad_jrho_with_solve(solver, eta, mu, penalty, bvp_tol, None)?;
    let residual = precondition(&g).inner(&g).max(0.0).sqrt();
    let critical = residual <= critical_tol;
    rows.push(CheckRow {
        name: "preconditioned-residual",
        status: CheckStatus::Info,
        detail: format!(
            "{residual:.3e} ({})",
            if critical {
                "treated as critical point"
            } else {
                "not a critical point"
            }
        ),
    });

    // Universal lower bound on the quadratic parts: K2 + mu^2/L2 >= 2 mu.
    let k = eval_k(eta);
    let l2 = eval_l2(eta);
    let quad = if l2 > 0.0 {
        k.k2 + mu * mu / l2
    } else {
        f64::INFINITY
    };
    rows.push(CheckRow {
        name: "quadratic-lower-bound",
        status: if quad >= 2.0 * mu {
            CheckStatus::Pass
        } else {
            CheckStatus::Fail
        },
        detail: format!("K2 + mu^2/L2 = {quad:.8e} vs 2 mu = {:.8e}", 2.0 * mu),
    });

    // Subcritical speed and negative M_mu hold at minimisers, not at
    // arbitrary fields.
    let speed_status = |ok: bool| {
        if !critical {
            CheckStatus::Skipped
        } else if ok {
            CheckStatus::Pass
        } else {
            CheckStatus::Fail
        }
    };
    rows.push(CheckRow {
        name: "speed-subcritical",
        status: speed_status(b.speed_lambda > 0.0 && b.speed_lambda < 1.0),
        detail: format!("mu / L = {:.6}", b.speed_lambda),
    });
    rows.push(CheckRow {
        name: "m-mu-negative",
        status: speed_status(b.m_mu < 0.0),
        detail: format!("M_mu = {:.6e}", b.m_mu),
    });

    // Volume integral of the transformed gradient squared against the
    // surface pairing <xi, trace>: the quadratic-form identity.
    let xi = eta.deriv_x();
    let sol = solver.solve_transformed_bvp(eta, &xi, bvp_tol, DEFAULT_MAX_TERMS)?;
    let pairing = xi.inner(&sol.trace);
    let energy = solver.dirichlet_energy(eta, &sol);
    let rel = (energy - pairing).abs() / pairing.abs().max(1e-300);
    rows.push(CheckRow {
        name: "energy-identity",
        status: if rel < ENERGY_IDENTITY_TOL {
            CheckStatus::Pass
        } else {
            CheckStatus::Fail
        },
        detail: format!("volume {energy:.8e} vs surface {pairing:.8e}, rel {rel:.2e}"),
    });

    for alpha in [0.25, 0.5, 0.75] {
        rows.push(CheckRow {
            name: match alpha {
                0.25 => "scaled-norm-alpha-0.25",
                0.5 => "scaled-norm-alpha-0.50",
                _ => "scaled-norm-alpha-0.75",
            },
            status: CheckStatus::Info,
            detail: format!("{:.6e}", eta.scaled_norm_alpha(mu, alpha)),
        });
    }
    Ok(DiagnosticsReport { rows })
}

/// Diagnostics on a stored field.
pub fn run_diagnostics(args: &DiagnosticsArgs) -> Result<DiagnosticsReport> {
    let (grid, eta) = io::load_field(
        &args.field.input,
        args.field.ny,
        args.field.m_ball,
        args.field.m_tilde,
    )?;
    let solver = SlabSolver::new(&grid);
    let penalty = PenaltyParams::new(args.field.m_tilde, args.field.m_ball, 1.0)?;
    diagnose(
        &solver,
        &eta,
        &penalty,
        args.field.bvp_tol,
        args.critical_tol,
    )
}

/// Evaluate and print the full functional breakdown of a stored field.
pub fn run_eval(args: &FieldArgs) -> Result<FunctionalBreakdown> {
    let (grid, eta) = io::load_field(&args.input, args.ny, args.m_ball, args.m_tilde)?;
    let solver = SlabSolver::new(&grid);
    let penalty = PenaltyParams::new(args.m_tilde, args.m_ball, 1.0)?;
    let b = eval_jrho(&solver, &eta, grid.mu, &penalty, args.bvp_tol)?;
    println!("j_mu        {:.17e}", b.j_mu);
    println!("k2          {:.17e}", b.k2);
    println!("k_nl        {:.17e}", b.k_nl);
    println!("k_total     {:.17e}", b.k_total);
    println!("l2          {:.17e}", b.l2);
    println!("l3          {:.17e}", b.l3);
    println!("l_total     {:.17e}", b.l_total);
    println!("m_mu        {:.17e}", b.m_mu);
    println!("penalty     {:.17e}", b.penalty);
    println!("speed       {:.17e}", b.speed_lambda);
    println!("h3_norm     {:.17e}", eta.h3_norm_sq().sqrt());
    Ok(b)
}

/// Band-limited random field with a Gaussian spectral envelope, so that
/// finite-difference quotients are not dominated by band-edge aliasing.
fn smooth_random(grid: &Arc<GridSpec>, rng: &mut ChaCha8Rng, max_mode: usize, sup: f64) -> SurfaceField {
    use rand::Rng;
    let mut values = vec![0.0; grid.len()];
    for mx in 0..=max_mode {
        for mz in -(max_mode as isize)..=(max_mode as isize) {
            if mx == 0 && mz <= 0 {
                continue;
            }
            let amp: f64 = rng.gen_range(-1.0..1.0);
            let phase: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
            let kx = 2.0 * std::f64::consts::PI * mx as f64 / grid.l_x;
            let kz = 2.0 * std::f64::consts::PI * mz as f64 / grid.l_z;
            let sigma = max_mode as f64 / 2.5;
            let envelope =
                (-((mx * mx) as f64 + (mz * mz) as f64) / (2.0 * sigma * sigma)).exp();
            for ix in 0..grid.n_x {
                for iz in 0..grid.n_z {
                    let arg = kx * grid.x(ix) + kz * grid.z(iz) + phase;
                    values[grid.idx(ix, iz)] += amp * envelope * arg.cos();
                }
            }
        }
    }
    let field = SurfaceField::from_values(grid, values).expect("matching length");
    let peak = field.max_abs();
    if peak == 0.0 {
        field
    } else {
        field.scaled(sup / peak)
    }
}

/// Report of one finite-difference gradient validation.
#[derive(Debug)]
pub struct GradientCheck {
    pub name: &'static str,
    pub worst_relative_error: f64,
}

/// Finite-difference validation of every analytic gradient on smooth
/// random fields; returns the worst observed error per functional.
pub fn run_check_gradients(args: &CheckGradientsArgs) -> Result<Vec<GradientCheck>> {
    use std::f64::consts::PI;
    if args.directions == 0 {
        return Err(Error::invalid("directions", "must be at least 1"));
    }
    let grid = Arc::new(GridSpec::new(
        args.nx,
        args.nz,
        args.ny,
        2.0 * PI,
        2.0 * PI,
        args.beta,
        args.mu,
        12.0,
        10.0,
    )?);
    let solver = SlabSolver::new(&grid);
    let mu = grid.mu;
    let mut rng = ChaCha8Rng::seed_from_u64(args.rng_seed);
    let eta = smooth_random(&grid, &mut rng, 5, 0.05);
    let t = eta.h3_norm_sq();
    let penalty = PenaltyParams::new((0.5 * t).sqrt(), (3.0 * t).sqrt(), 1.0)?;
    let tol = 1e-9;

    let gk = grad_k(&eta);
    let gl = grad_l(&solver, &eta, tol)?;
    let (gj, _, _) = crate::gradients::grad_jmu_with_solve(&solver, &eta, mu, tol, None)?;
    let gr = grad_jrho(&solver, &eta, mu, &penalty, tol)?;

    let mut worst = [0.0f64; 4];
    for _ in 0..args.directions {
        let delta = smooth_random(&grid, &mut rng, 5, 1.0);
        let delta = delta.scaled(1.0 / delta.norm_l2());
        let checks: [(usize, f64); 4] = [
            (
                0,
                fd_relative_error(|e| Ok(eval_k(e).k_total), &gk, &eta, &delta)?,
            ),
            (
                1,
                fd_relative_error(
                    |e| Ok(crate::functionals::eval_l(&solver, e, tol)?.l_total),
                    &gl,
                    &eta,
                    &delta,
                )?,
            ),
            (
                2,
                fd_relative_error(
                    |e| Ok(crate::functionals::eval_jmu(&solver, e, mu, tol)?.j_mu),
                    &gj,
                    &eta,
                    &delta,
                )?,
            ),
            (
                3,
                fd_relative_error(
                    |e| {
                        let b = eval_jrho(&solver, e, mu, &penalty, tol)?;
                        Ok(b.j_mu + b.penalty)
                    },
                    &gr,
                    &eta,
                    &delta,
                )?,
            ),
        ];
        for (i, err) in checks {
            worst[i] = worst[i].max(err);
        }
    }
    let names = ["K'", "L'", "J_mu'", "J_rho_mu'"];
    Ok(names
        .iter()
        .zip(worst)
        .map(|(name, worst_relative_error)| GradientCheck {
            name,
            worst_relative_error,
        })
        .collect())
}

/// Result rows of the sub-additivity probe.
#[derive(Debug)]
pub struct SubadditivityReport {
    pub mu: f64,
    pub c_mu: f64,
    pub residual_mu: f64,
    pub c_2mu: f64,
    pub residual_2mu: f64,
}

impl SubadditivityReport {
    /// Strict sub-additivity of the sampled pair.
    pub fn strict(&self) -> bool {
        self.c_2mu < 2.0 * self.c_mu
    }
}

/// Estimate c_mu and c_{2mu} by independent converged runs.
pub fn run_subadditivity(args: &SubadditivityArgs) -> Result<SubadditivityReport> {
    let cfg = MinimizerConfig {
        grid: args.grid.grid()?,
        penalty: args.grid.penalty()?,
        tol_grad: args.tol_grad,
        max_iter: args.max_iter,
        bvp_tol: args.bvp_tol,
        seed_kind: args.seed.kind(),
        bump_amplitude: args.bump_amplitude,
        continuation: None,
    };
    let mu = args.grid.mu;
    let table = sample_c_mu(&cfg, &[mu, 2.0 * mu])?;
    Ok(SubadditivityReport {
        mu,
        c_mu: table[0].c_mu,
        residual_mu: table[0].residual,
        c_2mu: table[1].c_mu,
        residual_2mu: table[1].residual,
    })
}

/// Write centerline and surface CSV slices for a stored field.
pub fn run_export(args: &ExportArgs) -> Result<()> {
    // A slice export needs no solver, so any vertical resolution works.
    let (_, field) = io::load_field(&args.input, 8, 1.0, 0.9)?;
    std::fs::create_dir_all(&args.out)?;
    io::write_slices(&args.out, &field)
}

/// Configure the global thread pool from `CAPWAVE_THREADS` if set.
fn configure_threads() {
    if let Ok(raw) = std::env::var("CAPWAVE_THREADS") {
        if let Ok(n) = raw.parse::<usize>() {
            if n >= 1 {
                // Ignore failure: the pool can only be built once.
                let _ = rayon::ThreadPoolBuilder::new()
                    .num_threads(n)
                    .build_global();
            }
        } else {
            eprintln!("warning: ignoring unparsable CAPWAVE_THREADS={raw:?}");
        }
    }
}

/// Entry point of the binary: parse, dispatch, map to an exit code.
pub fn main_entry() -> i32 {
    configure_threads();
    let cli = Cli::parse();
    match dispatch(&cli.command) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err}");
            error_exit_code(&err)
        }
    }
}

fn dispatch(command: &Command) -> Result<i32> {
    match command {
        Command::Solve(args) => {
            let cfg = parse_config(args)?;
            let artifacts = run_solve(&cfg)?;
            Ok(artifacts.exit_code)
        }
        Command::Eval(args) => {
            run_eval(args)?;
            Ok(EXIT_OK)
        }
        Command::Diagnostics(args) => {
            let report = run_diagnostics(args)?;
            print!("{report}");
            Ok(if report.failed() {
                EXIT_NOT_CONVERGED
            } else {
                EXIT_OK
            })
        }
        Command::CheckGradients(args) => {
            let checks = run_check_gradients(args)?;
            let mut ok = true;
            for c in &checks {
                let pass = c.worst_relative_error < args.tol;
                ok &= pass;
                println!(
                    "{:<10} worst relative error {:.3e}  {}",
                    c.name,
                    c.worst_relative_error,
                    if pass { "PASS" } else { "FAIL" }
                );
            }
            Ok(if ok { EXIT_OK } else { EXIT_NOT_CONVERGED })
        }
        Command::Subadditivity(args) => {
            let r = run_subadditivity(args)?;
            println!(
                "c({:.4}) = {:.8e}  (residual {:.2e})",
                r.mu, r.c_mu, r.residual_mu
            );
            println!(
                "c({:.4}) = {:.8e}  (residual {:.2e})",
                2.0 * r.mu,
                r.c_2mu,
                r.residual_2mu
            );
            println!(
                "2 c(mu) - c(2mu) = {:.8e}  strict sub-additivity: {}",
                2.0 * r.c_mu - r.c_2mu,
                if r.strict() { "PASS" } else { "FAIL" }
            );
            Ok(if r.strict() { EXIT_OK } else { EXIT_NOT_CONVERGED })
        }
        Command::Export(args) => {
            run_export(args)?;
            Ok(EXIT_OK)
        }
    }
}

