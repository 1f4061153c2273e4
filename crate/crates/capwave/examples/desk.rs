//! Ad-hoc desk-scale measurement run (timing, margins, norms).

use std::sync::Arc;
use std::time::Instant;

use capwave::functionals::PenaltyParams;
use capwave::grid::GridSpec;
use capwave::minimizer::{construct_seed, minimize, MinimizerConfig, SeedKind};

fn main() {
    let t0 = Instant::now();
    let grid = Arc::new(
        GridSpec::new(256, 256, 16, 80.0, 320.0, 2.0, 0.2, 12.0, 10.0).unwrap(),
    );
    let cfg = MinimizerConfig {
        grid: grid.clone(),
        penalty: PenaltyParams::new(10.0, 12.0, 1.0).unwrap(),
        tol_grad: 1e-6,
        max_iter: 2000,
        bvp_tol: 1e-10,
        seed_kind: SeedKind::Kp,
        bump_amplitude: 1.0,
        continuation: None,
    };
    let seed = construct_seed(&cfg).unwrap();
    println!(
        "seed built at {:.2?}: max|eta| {:.4e}  h3 {:.4e}",
        t0.elapsed(),
        seed.max_abs(),
        seed.h3_norm_sq().sqrt()
    );
    let state = minimize(&cfg, &seed).unwrap();
    let el = t0.elapsed();
    println!(
        "stop {:?} iters {} residual {:.3e} elapsed {:.2?} ({:.2?}/iter)",
        state.stop,
        state.iter,
        state.residual,
        el,
        el / (state.iter.max(1) as u32)
    );
    let b = state.breakdown;
    println!(
        "j_mu {:.8}  2mu {:.3}  margin {:.3e}  speed {:.6}  m_mu {:.3e}  penalty {:.3e}",
        b.j_mu,
        2.0 * grid.mu,
        b.j_mu - 2.0 * grid.mu,
        b.speed_lambda,
        b.m_mu,
        b.penalty
    );
    println!(
        "eta: min {:.4e} max_abs {:.4e} h3 {:.4e}",
        state.eta.min_value(),
        state.eta.max_abs(),
        state.eta.h3_norm_sq().sqrt()
    );
    // Localization: amplitude along the box edges relative to the peak.
    let mut edge = 0.0f64;
    for ix in 0..grid.n_x {
        edge = edge.max(state.eta.values()[grid.idx(ix, 0)].abs());
    }
    for iz in 0..grid.n_z {
        edge = edge.max(state.eta.values()[grid.idx(0, iz)].abs());
    }
    println!("edge/peak {:.3e}", edge / state.eta.max_abs());
    for h in state.history.iter().take(8) {
        println!(
            "  it {:4}  j {:.10}  res {:.3e}  l {:.5}  speed {:.4}",
            h.iter, h.j, h.residual, h.l, h.speed
        );
    }
    let n = state.history.len();
    if n > 8 {
        for h in state.history[n - 4..].iter() {
            println!(
                "  it {:4}  j {:.10}  res {:.3e}  l {:.5}  speed {:.4}",
                h.iter, h.j, h.residual, h.l, h.speed
            );
        }
    }
}
