//! Lump-capable-box measurement at mu = 0.2: box sized to hold the
//! momentum-consistent lump. Temporary measurement binary.

use std::sync::Arc;
use std::time::Instant;

use capwave::functionals::PenaltyParams;
use capwave::minimizer::{construct_seed, minimize, MinimizerConfig, SeedKind};
use capwave::GridSpec;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let get = |i: usize, d: f64| args.get(i).map(|s| s.parse().unwrap()).unwrap_or(d);
    let mu = get(1, 0.2);
    let lx = get(2, 12000.0);
    let lz = get(3, 1.2e6);
    let nx = get(4, 256.0) as usize;
    let nz = get(5, 256.0) as usize;
    let max_iter = get(6, 400.0) as usize;
    let tol = get(7, 1e-6);

    let grid = Arc::new(GridSpec::new(nx, nz, 16, lx, lz, 2.0, mu, 12.0, 10.0).unwrap());
    let cfg = MinimizerConfig {
        grid: grid.clone(),
        penalty: PenaltyParams::new(10.0, 12.0, 1.0).unwrap(),
        tol_grad: tol,
        max_iter,
        bvp_tol: 1e-10,
        seed_kind: SeedKind::Kp,
        bump_amplitude: 1.0,
        continuation: None,
    };

    let t0 = Instant::now();
    let seed = construct_seed(&cfg).unwrap();
    println!(
        "seed built in {:.1}s: amp {:.4e}  h3 {:.4e}",
        t0.elapsed().as_secs_f64(),
        seed.max_abs(),
        seed.h3_norm_sq().sqrt()
    );

    let t1 = Instant::now();
    let state = minimize(&cfg, &seed).unwrap();
    let b = state.breakdown;
    let el = t1.elapsed().as_secs_f64();
    println!(
        "stop {:?} iters {} residual {:.3e} elapsed {:.1}s ({:.2}s/iter)",
        state.stop,
        state.iter,
        state.residual,
        el,
        el / state.iter.max(1) as f64
    );
    println!(
        "j_mu {:.8} 2mu {:.3} margin {:+.4e} speed {:.6} m_mu {:+.3e} penalty {:.3e}",
        b.j_mu,
        2.0 * mu,
        b.j_mu - 2.0 * mu,
        b.speed_lambda,
        b.m_mu,
        b.penalty
    );
    println!(
        "l_total {:.6e} k_total {:.6e} k_nl {:+.3e} l3 {:+.3e}",
        b.l_total, b.k_total, b.k_nl, b.l3
    );
    println!(
        "eta: min {:.4e} max {:.4e} h3 {:.4e}",
        state.eta.min_value(),
        state.eta.max_value(),
        state.eta.h3_norm_sq().sqrt()
    );
    // Localization: largest |eta| along the box edges over the peak.
    let g = state.eta.grid().clone();
    let v = state.eta.values();
    let mut edge = 0.0f64;
    for iz in 0..g.n_z {
        edge = edge.max(v[g.idx(0, iz)].abs());
    }
    for ix in 0..g.n_x {
        edge = edge.max(v[g.idx(ix, 0)].abs());
    }
    println!("edge/peak {:.3e}", edge / state.eta.max_abs());
    let n = state.history.len();
    for (i, h) in state.history.iter().enumerate() {
        if i < 8 || i + 4 >= n || i % 25 == 0 {
            println!(
                "it {:4} j {:.10} res {:.3e} l {:.5} speed {:.4} h3 {:.3e}",
                h.iter, h.j, h.residual, h.l, h.speed, h.h3
            );
        }
    }
}
