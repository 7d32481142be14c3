use aniso::gauge::{gallery, Energy};
use aniso::grid::{Domain, ScalarField};
use aniso::solver::inner::{solve_subproblem, InnerOptions};
use std::time::Instant;

fn main() {
    let dom = Domain::unit_square(16).unwrap();
    let energy = Energy::polytope(gallery::skewed_box_2d(), 2.0).unwrap();
    let g = vec![1.0; dom.num_nodes()];
    for (tau, tol) in [(1e-5, 1e-6), (1e-6, 1e-6), (1e-7, 1e-7), (1e-8, 1e-9)] {
        let t = Instant::now();
        let opts = InnerOptions { tol, tau_final_rel: tau, ..InnerOptions::default() };
        let sol = solve_subproblem(&energy, &dom, &g, &opts).unwrap();
        println!("tau={:.0e} tol={:.0e}: residual={:.3e} newton={} cg={} ({:.2?})",
            tau, tol, sol.residual, sol.newton_iters, sol.cg_iters, t.elapsed());
    }
    // Compare two tau levels' solutions.
    let s1 = solve_subproblem(&energy, &dom, &g, &InnerOptions { tol: 1e-6, tau_final_rel: 1e-6, ..InnerOptions::default() }).unwrap();
    let s2 = solve_subproblem(&energy, &dom, &g, &InnerOptions { tol: 1e-9, tau_final_rel: 1e-8, ..InnerOptions::default() }).unwrap();
    let diff = s1.v.minus(&s2.v).norm_inf() / s2.v.norm_inf();
    println!("solution shift tau 1e-6 vs 1e-8: {:.3e}", diff);

    // 1D polytope for reference.
    let dom1 = Domain::interval(64, 1.0).unwrap();
    let e1 = Energy::polytope(gallery::skewed_interval(), 2.0).unwrap();
    let g1 = vec![1.0; dom1.num_nodes()];
    let sol = solve_subproblem(&e1, &dom1, &g1, &InnerOptions::default()).unwrap();
    println!("1D skewed torsion: residual={:.3e} newton={} cg={}", sol.residual, sol.newton_iters, sol.cg_iters);
    let ts = Instant::now();
    let ones = ScalarField::from_values(&dom1, g1.clone()).unwrap();
    let _ = ones;
    println!("({:.2?})", ts.elapsed());
}
