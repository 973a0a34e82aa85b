//! Roll response to a lateral-acceleration step, the roll-limited speed cap
//! and the stiffness droop that comes with load transfer.

use lpv_lanekeep::vehicle::{desired_speed, plant_stiffness, roll_derivative, RollState, StiffnessModel, VehicleParams};

fn main() -> lpv_lanekeep::Result<()> {
    let params = VehicleParams::default();
    let model = StiffnessModel::default();

    // 0.3 g step, semi-implicit Euler at 1 ms
    let a_y = 0.3 * params.g;
    let mut s = RollState::default();
    let dt = 1e-3;
    for k in 0..=3000 {
        if k % 500 == 0 {
            let (caf, car) = plant_stiffness(s, a_y, &params, &model);
            println!("t={:4.1}s  phi={:.5} rad  C_af={caf:.0}  C_ar={car:.0}", k as f64 * dt, s.phi);
        }
        s.phi_dot += dt * roll_derivative(s, a_y, &params);
        s.phi += dt * s.phi_dot;
    }

    println!("\nroll-limited speed (phi_max = {} rad)", params.phi_max);
    for r in [40.0, 80.0, 150.0, 300.0] {
        let v = desired_speed(r, &params)?;
        println!("  R = {r:5.0} m  ->  {v:6.2} m/s  ({:5.1} km/h)", v * 3.6);
    }
    Ok(())
}
