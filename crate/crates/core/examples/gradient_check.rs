//! Finite-difference check of every network in the hierarchy for each
//! variant, reporting the worst relative error per tensor.
//!
//! `cargo run --release --example gradient_check -- [seed]`

use tihdp::nets::{gradient_check, GradCheckConfig};
use tihdp::obs::ObsConfig;
use tihdp::trainer::Variant;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let seed = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(0);
    let obs = ObsConfig::default();
    for variant in Variant::ALL {
        let spec = variant.net_spec(&obs, &[256, 128, 64], 64, 3, 4);
        let report = gradient_check(&spec, seed, &GradCheckConfig::default());
        println!("{variant}: worst {:.2e}", report.max_rel_error());
        for t in &report.tensors {
            println!("  {:<32} {:>5} entries  {:.2e}", t.name, t.checked, t.max_rel_error);
        }
    }
    Ok(())
}
