//! End-to-end checks of the command-line layer: argument validation,
//! artifact writing on every stop reason, diagnostics semantics, and
//! bit-exact reproducibility of runs.

use std::f64::consts::PI;
use std::sync::Arc;

use capwave::cli::{
    self, CheckStatus, Cli, Command, DiagnosticsArgs, ExportArgs, FieldArgs, RunConfig, SeedArg,
};
use capwave::functionals::{eval_jrho, PenaltyParams};
use capwave::io;
use capwave::minimizer::{MinimizerConfig, SeedKind};
use capwave::slab::SlabSolver;
use capwave::{GridSpec, SurfaceField};
use clap::Parser;

fn small_grid() -> Arc<GridSpec> {
    Arc::new(GridSpec::new(32, 32, 12, 2.0 * PI, 2.0 * PI, 2.0, 0.1, 12.0, 10.0).unwrap())
}

/// Smooth localized depression used as a generic test profile.
fn depression(grid: &Arc<GridSpec>, amp: f64) -> SurfaceField {
    SurfaceField::from_fn(grid, |x, z| {
        let sx = 0.5 * (1.0 + (x - grid.l_x / 2.0).cos());
        let sz = 0.5 * (1.0 + (z - grid.l_z / 2.0).cos());
        -amp * sx * sx * sz * sz
    })
}

fn solve_args(extra: &[&str]) -> Result<cli::SolveArgs, clap::Error> {
    let mut argv = vec!["capwave", "solve"];
    argv.extend_from_slice(extra);
    Cli::try_parse_from(argv).map(|cli| match cli.command {
        Command::Solve(args) => args,
        other => panic!("expected solve, parsed {other:?}"),
    })
}

#[test]
fn dump_then_eval_reproduces_the_objective() {
    let dir = tempfile::tempdir().unwrap();
    let grid = small_grid();
    let eta = depression(&grid, 0.05);

    let solver = SlabSolver::new(&grid);
    let penalty = PenaltyParams::new(10.0, 12.0, 1.0).unwrap();
    let direct = eval_jrho(&solver, &eta, grid.mu, &penalty, 1e-10).unwrap();

    let path = dir.path().join("eta.field");
    io::write_field(&path, &eta).unwrap();
    let loaded = cli::run_eval(&FieldArgs {
        input: path,
        ny: grid.n_y,
        m_ball: 12.0,
        m_tilde: 10.0,
        bvp_tol: 1e-10,
    })
    .unwrap();

    let rel = (loaded.j_mu - direct.j_mu).abs() / direct.j_mu.abs();
    assert!(rel < 1e-12, "j mismatch after round trip: rel {rel:e}");
    assert_eq!(loaded.penalty, direct.penalty);
}

#[test]
fn solve_argument_validation() {
    // Defaults parse into the documented desk-scale configuration.
    let cfg = cli::parse_config(&solve_args(&[]).unwrap()).unwrap();
    assert_eq!(cfg.minimizer.grid.n_x, 256);
    assert_eq!(cfg.minimizer.grid.l_z, 320.0);
    assert_eq!(cfg.minimizer.penalty.m_tilde, 10.0);
    assert_eq!(cfg.minimizer.seed_kind, SeedKind::Kp);

    // Weak surface tension is outside the model.
    let err = cli::parse_config(&solve_args(&["--beta", "0.2"]).unwrap()).unwrap_err();
    assert!(
        err.to_string().contains("strong surface tension"),
        "unexpected message: {err}"
    );
    assert!(cli::parse_config(&solve_args(&["--mu", "0"]).unwrap()).is_err());
    assert!(cli::parse_config(&solve_args(&["--seed", "file"]).unwrap()).is_err());
    assert!(cli::parse_config(&solve_args(&["--log-every", "0"]).unwrap()).is_err());
    // Exit code for configuration errors.
    assert_eq!(cli::error_exit_code(&err), cli::EXIT_CONFIG);
}

fn file_seed_config(dir: &std::path::Path, max_iter: usize, tol: f64) -> RunConfig {
    let grid = small_grid();
    let seed_path = dir.join("seed.field");
    io::write_field(&seed_path, &depression(&grid, 0.05)).unwrap();
    RunConfig {
        minimizer: MinimizerConfig {
            grid,
            penalty: PenaltyParams::new(10.0, 12.0, 1.0).unwrap(),
            tol_grad: tol,
            max_iter,
            bvp_tol: 1e-11,
            seed_kind: SeedKind::File,
            bump_amplitude: 1.0,
            continuation: None,
        },
        out_dir: dir.join("run"),
        emit_fields: true,
        emit_slices: false,
        log_every: 1,
        seed_arg: SeedArg::File,
        seed_file: Some(seed_path),
    }
}

#[test]
fn iteration_cap_still_writes_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = file_seed_config(dir.path(), 1, 1e-14);
    let artifacts = cli::run_solve(&cfg).unwrap();

    assert_eq!(artifacts.exit_code, cli::EXIT_NOT_CONVERGED);
    assert!(artifacts.metadata.is_file());
    assert!(artifacts.convergence.is_file());
    assert!(artifacts.eta_field.as_deref().is_some_and(|p| p.is_file()));
    assert!(artifacts.diagnostics.is_file());

    let meta = io::read_metadata(&artifacts.metadata).unwrap();
    let outcome = meta.outcome.expect("finished run records an outcome");
    assert_eq!(outcome.stop, "max-iter");
    assert_eq!(outcome.iterations, 1);
    assert!(outcome.j_mu > 0.0);

    // Convergence log holds the seed row and the single step.
    let log = std::fs::read_to_string(&artifacts.convergence).unwrap();
    let rows: Vec<&str> = log.lines().collect();
    assert_eq!(rows[0], "iter,j,residual,l,speed,h3");
    assert_eq!(rows.len(), 3);
}

#[test]
fn diagnostics_rejects_zero_and_reports_noncritical_fields() {
    let grid = small_grid();
    let solver = SlabSolver::new(&grid);
    let penalty = PenaltyParams::new(10.0, 12.0, 1.0).unwrap();

    let zero = SurfaceField::from_fn(&grid, |_, _| 0.0);
    assert!(cli::diagnose(&solver, &zero, &penalty, 1e-10, 1e-4).is_err());

    let report = cli::diagnose(&solver, &depression(&grid, 0.05), &penalty, 1e-10, 1e-4).unwrap();
    let status = |name: &str| {
        report
            .rows
            .iter()
            .find(|r| r.name == name)
            .unwrap_or_else(|| panic!("missing row {name}"))
            .status
    };
    assert_eq!(status("quadratic-lower-bound"), CheckStatus::Pass);
    assert_eq!(status("energy-identity"), CheckStatus::Pass);
    // An arbitrary profile is not a critical point: speed checks skip.
    assert_eq!(status("speed-subcritical"), CheckStatus::Skipped);
    assert_eq!(status("m-mu-negative"), CheckStatus::Skipped);
    assert!(!report.failed());

    // The same field through the file-backed entry point.
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("eta.field");
    io::write_field(&path, &depression(&grid, 0.05)).unwrap();
    let loaded = cli::run_diagnostics(&DiagnosticsArgs {
        field: FieldArgs {
            input: path,
            ny: grid.n_y,
            m_ball: 12.0,
            m_tilde: 10.0,
            bvp_tol: 1e-10,
        },
        critical_tol: 1e-4,
    })
    .unwrap();
    assert!(!loaded.failed());
}

#[test]
fn export_writes_full_length_slices() {
    let dir = tempfile::tempdir().unwrap();
    let grid = small_grid();
    let path = dir.path().join("eta.field");
    io::write_field(&path, &depression(&grid, 0.02)).unwrap();

    cli::run_export(&ExportArgs {
        input: path,
        out: dir.path().to_path_buf(),
    })
    .unwrap();

    let lines = |name: &str| {
        std::fs::read_to_string(dir.path().join(name))
            .unwrap()
            .lines()
            .count()
    };
    assert_eq!(lines("slice_x.csv"), grid.n_x + 1);
    assert_eq!(lines("slice_z.csv"), grid.n_z + 1);
    // 32 <= 128 per axis: the decimated surface keeps every sample.
    assert_eq!(lines("surface.csv"), grid.n_x * grid.n_z + 1);
}

#[test]
fn identical_runs_dump_bit_identical_fields() {
    let dir_a = tempfile::tempdir().unwrap();
    let dir_b = tempfile::tempdir().unwrap();
    let a = cli::run_solve(&file_seed_config(dir_a.path(), 3, 1e-14)).unwrap();
    let b = cli::run_solve(&file_seed_config(dir_b.path(), 3, 1e-14)).unwrap();

    let bytes_a = std::fs::read(a.eta_field.unwrap()).unwrap();
    let bytes_b = std::fs::read(b.eta_field.unwrap()).unwrap();
    assert_eq!(bytes_a, bytes_b, "repeated runs must be bit-identical");
}
