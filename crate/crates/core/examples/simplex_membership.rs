//! Selects the vertex simplex around the reduced training data and checks the
//! convex coordinates of every sample.

use lpv_lanekeep::config::Config;
use lpv_lanekeep::pipeline;
use lpv_lanekeep::polytope::{bounds, box_corner, convex_coordinates, select_simplex};

fn main() -> lpv_lanekeep::Result<()> {
    let cfg = Config::default();
    let traj = pipeline::collect(&cfg)?;
    let (red, h) = pipeline::reduce(&traj, cfg.m)?;
    let (lo, hi) = bounds(&h)?;
    for i in 0..(1 << cfg.m) {
        println!("corner {i}: {:.3?}", box_corner(i, &lo, &hi).as_slice());
    }

    let poly = select_simplex(&h, &red, &cfg.vehicle, &cfg.polytope)?;
    println!("\nsimplex from corners {:?}, inflated by {:.4}", poly.corners, poly.inflation);
    for (p, th) in poly.vertex_thetas.iter().enumerate() {
        println!("  vertex {p}: Vx {:.2}  C_af {:.0}  C_ar {:.0}", th.vx(), th.c_af(), th.c_ar());
    }

    let (mut min_xi, mut max_sum_err, mut max_fit) = (f64::INFINITY, 0.0f64, 0.0f64);
    for j in 0..h.len() {
        let eta = h.0.column(j).into_owned();
        let mem = convex_coordinates(&poly, &eta)?;
        min_xi = min_xi.min(mem.xi.min());
        max_sum_err = max_sum_err.max((mem.xi.sum() - 1.0).abs());
        max_fit = max_fit.max((&poly.vertices * &mem.xi - &eta).amax());
    }
    println!("\nover {} samples: min xi {min_xi:.3e}, max |sum xi - 1| {max_sum_err:.1e}, max |V xi - eta| {max_fit:.1e}", h.len());
    Ok(())
}
