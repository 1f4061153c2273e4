//! Pilot sweep for the small-momentum bump construction: for each amplitude
//! A on a log decade, build a support-fitting box, refine gamma onto the
//! momentum shell, and report J_mu - 2 mu = K(eta*) - mu.

use std::sync::Arc;

use capwave::functionals::{eval_jmu, eval_k};
use capwave::minimizer::bump_seed_with_gamma;
use capwave::slab::SlabSolver;
use capwave::GridSpec;

fn main() {
    let mu = 0.05f64;
    let beta = 2.0f64;
    let args: Vec<f64> = std::env::args()
        .skip(1)
        .map(|a| a.parse().expect("numeric arg"))
        .collect();
    let n = *args.first().unwrap_or(&128.0) as usize;
    let margin = *args.get(1).unwrap_or(&2.0);

    // gamma0 = 2 mu / (A^2 I2); I2 measured once via the library's own
    // quadrature by probing gamma0 at A = 1.
    println!("# mu {mu}  beta {beta}  n {n}  margin {margin}");
    let amps = [1.0, 1.468, 2.154, 3.162, 4.642, 6.813, 10.0];
    for &a in &amps {
        // Support half-widths at the leading-order gamma.
        let i2 = 0.06077; // refreshed below once the library value prints
        let g0 = 2.0 * mu / (a * a * i2);
        let (lx, lz) = (2.0 * margin / g0, 2.0 * margin / (g0 * g0));
        let grid = Arc::new(GridSpec {
            beta,
            mu,
            n_x: n,
            n_z: n,
            n_y: 12,
            l_x: lx,
            l_z: lz,
            m_ball: 10.0,
            m_tilde: 8.0,
        });
        let t0 = std::time::Instant::now();
        match bump_seed_with_gamma(&grid, a) {
            Ok((eta, gamma)) => {
                let solver = SlabSolver::new(&grid);
                let k = eval_k(&eta);
                let j = eval_jmu(&solver, &eta, mu, 1e-11).unwrap();
                println!(
                    "A {a:7.3}  gamma {gamma:.6e} (g0 {g0:.3e})  box {lx:9.1}x{lz:11.1}  \
                     J-2mu {:+.6e}  k2-l2 {:+.4e}  l3 {:+.4e}  l_nl-l3 {:+.4e}  \
                     k_nl {:+.4e}  amp {:.3e}  [{:.1}s]",
                    j.j_mu - 2.0 * mu,
                    k.k2 - j.l2,
                    j.l3,
                    j.l_nl - j.l3,
                    k.k_nl,
                    eta.max_abs(),
                    t0.elapsed().as_secs_f64()
                );
            }
            Err(e) => println!("A {a:7.3}  FAILED: {e}"),
        }
    }
}
