//! Collects the default training drives and reduces the five scheduling
//! variables with PCA.

use lpv_lanekeep::config::Config;
use lpv_lanekeep::pipeline;
use lpv_lanekeep::scheduling::{fraction_of_variation, reconstruction_rel_rms};

fn main() -> lpv_lanekeep::Result<()> {
    let cfg = Config::default();
    let traj = pipeline::collect(&cfg)?;
    println!("{} samples at {} s", traj.len(), traj.period);

    let (full, _) = pipeline::reduce(&traj, 5)?;
    println!("singular values: {:.4?}", full.singular_values.as_slice());
    for m in 1..=5 {
        println!("v_{m} = {:.9}", fraction_of_variation(&full, m)?);
    }

    let (red, h) = pipeline::reduce(&traj, 3)?;
    let rel = reconstruction_rel_rms(&traj, &red);
    println!("\nm = 3 basis (columns):\n{:.4}", red.basis);
    println!("relative reconstruction rms per variable: {}", rel.iter().map(|r| format!("{r:.2e}")).collect::<Vec<_>>().join(" "));
    println!("reduced trajectory: {} x {}", h.dim(), h.len());
    Ok(())
}
