//! Designs the scheduled controller from the default training drives, then
//! drives the interchange with it and with the constant-gain baseline.

use std::time::Instant;

use lpv_lanekeep::config::Config;
use lpv_lanekeep::pipeline;

fn main() -> lpv_lanekeep::Result<()> {
    let cfg = Config::default();
    let t0 = Instant::now();
    let design = pipeline::design(&cfg)?;
    println!("design: {} samples, corners {:?}, inflation {:.3}, {:.1}s",
        design.trajectory.len(), design.polytope.corners, design.polytope.inflation, t0.elapsed().as_secs_f64());
    for (p, k) in design.synthesis.gains.iter().enumerate() {
        println!("K{p} = [{:.4} {:.4} {:.4} {:.4}]", k[0], k[1], k[2], k[3]);
    }
    println!("gamma = {:.4}  alpha = {}", design.synthesis.gamma, design.synthesis.alpha);

    let (cmp, _, _) = pipeline::compare_controllers(&cfg, &design)?;
    println!("\nconstant gain (baseline) vs scheduled (candidate)\n{}", cmp.to_table());
    Ok(())
}
