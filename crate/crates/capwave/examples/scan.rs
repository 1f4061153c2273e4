//! Landscape scan over the two-parameter lump seed family (width scale m,
//! amplitude factor c) at desk scale. Temporary measurement binary.

use std::sync::Arc;
use std::time::Instant;

use capwave::functionals::{eval_k, eval_l_with_solve};
use capwave::minimizer::kp_seed;
use capwave::slab::SlabSolver;
use capwave::GridSpec;

fn main() {
    let mu = 0.2;
    let grid = Arc::new(
        GridSpec::new(256, 256, 16, 80.0, 320.0, 2.0, mu, 12.0, 10.0).unwrap(),
    );
    let solver = SlabSolver::new(&grid);
    let two_mu = 2.0 * mu;

    let m_values = [0.08, 0.10, 0.125, 0.15, 0.175, 0.20, 0.25, 0.30, 0.40];
    let c_values = [
        0.05, 0.075, 0.10, 0.13, 0.17, 0.22, 0.30, 0.40, 0.55, 0.75, 1.0, 1.4, 2.0,
    ];

    let mut best = (f64::INFINITY, 0.0, 0.0);
    for &m in &m_values {
        let grid_m = Arc::new(
            GridSpec::new(256, 256, 16, 80.0, 320.0, 2.0, m, 12.0, 10.0).unwrap(),
        );
        let raw = match kp_seed(&grid_m) {
            Ok(f) => f.with_grid(&grid).unwrap(),
            Err(e) => {
                println!("m {m:.3}: seed failed: {e}");
                continue;
            }
        };
        println!(
            "m {m:.3}: raw amplitude {:.4e}  (x-halfwidth ~{:.1}, z-halfwidth ~{:.1})",
            raw.min_value().abs(),
            2.0 * (2.0 - 1.0f64 / 3.0).sqrt() * 3.0f64.sqrt() / m,
            3.0f64.sqrt() / (m * m),
        );
        let mut warm = None;
        for &c in &c_values {
            let eta = raw.scaled(c);
            let t0 = Instant::now();
            let k = eval_k(&eta);
            let le = match eval_l_with_solve(&solver, &eta, 1e-10, warm.as_ref()) {
                Ok((le, w)) => {
                    warm = Some(w);
                    le
                }
                Err(e) => {
                    println!("  c {c:.3}: {e}");
                    warm = None;
                    continue;
                }
            };
            let l = le.parts.l_total;
            let j = k.k_total + mu * mu / l;
            let margin = j - two_mu;
            println!(
                "  c {c:.3}: amp {:.3e}  K {:.5e}  L {:.5e}  speed {:.4}  j {:.8}  j-2mu {:+.3e}  ({} ms)",
                eta.min_value().abs(),
                k.k_total,
                l,
                mu / l,
                j,
                margin,
                t0.elapsed().as_millis(),
            );
            if j < best.0 {
                best = (j, m, c);
            }
        }
    }
    println!(
        "\nbest j {:.8} at m {:.3}, c {:.3}  (margin vs 2mu: {:+.3e})",
        best.0,
        best.1,
        best.2,
        best.0 - two_mu
    );
}
