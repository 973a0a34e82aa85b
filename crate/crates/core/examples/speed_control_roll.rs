//! Roll on the interchange at a fixed speed and with the roll-limited speed
//! planner, both under the scheduled steering controller.

use lpv_lanekeep::config::Config;
use lpv_lanekeep::pipeline;

fn main() -> lpv_lanekeep::Result<()> {
    let cfg = Config::default();
    let design = pipeline::design(&cfg)?;
    let speed = 19.44;
    let (cmp, fixed, planned) = pipeline::compare_speed_control(&cfg, &design, speed)?;
    println!("fixed {speed} m/s (baseline) vs speed control (candidate)\n{}", cmp.to_table());
    let vmin = planned.vx.iter().cloned().fold(f64::INFINITY, f64::min);
    println!("fixed run {:.1}s, planned run {:.1}s, slowest planned speed {vmin:.2} m/s, roll limit {}",
        fixed.t.last().unwrap(), planned.t.last().unwrap(), cfg.vehicle.phi_max);
    Ok(())
}
