//! Vertex gains for the default polytope, the robust-stability certificate
//! and the closed-loop decay at each vertex.

use lpv_lanekeep::config::Config;
use lpv_lanekeep::controller::spectral_abscissa;
use lpv_lanekeep::pipeline;

fn main() -> lpv_lanekeep::Result<()> {
    let cfg = Config::default();
    let d = pipeline::design(&cfg)?;
    let s = &d.synthesis;
    println!("alpha {}  gamma {:.3e}  tau {:.3}", s.alpha, s.gamma, s.certificate.tau);
    for (p, (k, sys)) in s.gains.iter().zip(&d.polytope.vertex_systems).enumerate() {
        println!(
            "K{p} = [{:+.4} {:+.4} {:+.4} {:+.4}]  |K| {:.3}  abscissa {:+.3}",
            k[0], k[1], k[2], k[3], k.norm(), spectral_abscissa(&sys.closed_loop(k))
        );
    }
    println!("\npair constraints (max eigenvalue, need <= {:.1e}):", -s.certificate.required);
    for m in &s.certificate.margins {
        println!("  ({}, {}) {:+.4e}", m.p, m.q, m.max_eig);
    }
    let l = &d.lti;
    println!("\nconstant gain at {:.2} m/s: [{:+.4} {:+.4} {:+.4} {:+.4}]", l.design_speed, l.gain[0], l.gain[1], l.gain[2], l.gain[3]);
    Ok(())
}
