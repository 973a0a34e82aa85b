//! A Lyapunov decay-rate LMI solved by the projection solver and checked
//! with the independent eigenvalue routine.

use lpv_lanekeep::lmi::{eig_extreme, solve, LmiProblem, Sense, SolveOptions};
use nalgebra::DMatrix;

fn main() -> lpv_lanekeep::Result<()> {
    // lightly damped oscillator, spectral abscissa -0.25
    let a = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -4.0, -0.5]);
    for alpha in [0.2, 0.45, 0.6] {
        let mut prob = LmiProblem::new();
        let p = prob.add_symmetric("P", 2);
        prob.add_constraint("P >= I", Sense::PosDef, |v| v.get(p) - DMatrix::identity(2, 2))?;
        prob.add_constraint("decay", Sense::NegDef, |v| {
            let pm = v.get(p);
            a.transpose() * pm + pm * &a + pm * alpha
        })?;
        let sol = solve(&prob, &SolveOptions { budget: 5000, ..SolveOptions::default() });
        let pm = prob.values(&sol.x).get(p).clone();
        let (_, top) = eig_extreme(&(a.transpose() * &pm + &pm * &a + &pm * alpha))?;
        println!("alpha {alpha:4.2}: {:?} after {:5} iterations, max eig {top:+.3e}", sol.status, sol.iterations);
    }
    println!("(feasible exactly for alpha < 0.5)");
    Ok(())
}
