use aniso::gauge::{gallery, Energy};
use aniso::grid::{Domain, ScalarField};
use aniso::solver::*;
use std::time::Instant;

fn main() {
    let t0 = Instant::now();
    // Criterion 6: interval n=200, lambda ~ pi^2.
    {
        let dom = Domain::interval(200, 1.0).unwrap();
        let energy = Energy::euclidean(1, 2.0).unwrap();
        let t = Instant::now();
        let res = eigen(&energy, &dom, SignConstraint::Free, &EigenOptions::default()).unwrap();
        println!("eigen n=200: lambda={:.10} pi2={:.10} err={:.2e}  ({:.2?})",
            res.lambda, std::f64::consts::PI.powi(2),
            (res.lambda - std::f64::consts::PI.powi(2)).abs(), t.elapsed());
    }
    // Criterion 7 probe: 1D non-even gauge relations at 1e-8.
    {
        let dom = Domain::interval(40, 1.0).unwrap();
        let energy = Energy::polytope(gallery::skewed_interval(), 2.0).unwrap();
        let t = Instant::now();
        let rep = eigen_relations_check(&energy, &dom, &EigenOptions::default(), 1e-8).unwrap();
        println!("relations 1D skewed: free={:.12} plus={:.12} minus={:.12} refl={:.12}",
            rep.lambda_free, rep.lambda_plus, rep.lambda_minus, rep.lambda_plus_reflected);
        println!("  min_defect={:.2e} refl_defect={:.2e} sign_gap={:.2e} ({:.2?})",
            rep.min_relation_defect, rep.reflection_defect, rep.sign_gap, t.elapsed());
    }
    // 2D orthant relations.
    {
        let dom = Domain::rectangle(12, 10, 13.0/11.0, 1.0).unwrap();
        let energy = Energy::orthant_quadratic([2.0, 1.0, 2.0, 1.0]).unwrap();
        let t = Instant::now();
        let rep = eigen_relations_check(&energy, &dom, &EigenOptions::default(), 1e-8).unwrap();
        println!("relations 2D orthant: free={:.12} plus={:.12} minus={:.12}",
            rep.lambda_free, rep.lambda_plus, rep.lambda_minus);
        println!("  min_defect={:.2e} refl_defect={:.2e} sym={} gap={:.2e} ({:.2?})",
            rep.min_relation_defect, rep.reflection_defect, rep.symmetry_applies, rep.sign_gap, t.elapsed());
    }
    // Criterion 5: disk h=1/64, affine(2,1) -> -lap u = u+1, max >= 0.25.
    {
        let t = Instant::now();
        let dom = Domain::disk(1.0, 1.0/64.0).unwrap();
        println!("disk nodes: {}", dom.num_nodes());
        let energy = Energy::euclidean(2, 2.0).unwrap();
        let reaction = Reaction::affine(2.0, 1.0).unwrap();
        let start = ScalarField::zeros(&dom);
        let res = critical_point(&energy, &dom, &reaction, &start, &SolverOptions::default()).unwrap();
        println!("disk: max={:.6} (>= 0.25?) iters={} id_rel={:.2e} gap={:.2e} ({:.2?})",
            res.u.norm_inf(), res.iterations, res.identity_defect_rel, res.subproblem_gap, t.elapsed());
    }
    // 2D polytope torsion (criterion 10 instance).
    {
        let t = Instant::now();
        let dom = Domain::unit_square(16).unwrap();
        let energy = Energy::polytope(gallery::skewed_box_2d(), 2.0).unwrap();
        let reaction = Reaction::constant(1.0).unwrap();
        let res = critical_point(&energy, &dom, &reaction, &ScalarField::zeros(&dom), &SolverOptions::default()).unwrap();
        println!("2D polytope torsion: max={:.6} id_rel={:.2e} gap={:.2e} euler_max={:.2e} ({:.2?})",
            res.u.norm_inf(), res.identity_defect_rel, res.subproblem_gap, res.euler_defect_max, t.elapsed());
    }
    println!("total {:.2?}", t0.elapsed());
}
