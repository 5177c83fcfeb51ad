//! Power series of g² measurements extrapolated to zero excitation power.

use spekit::pipeline::{fig2_series, RunConfig};

fn main() -> spekit::Result<()> {
    let mut cfg = RunConfig::default();
    cfg.fig2.duration_ns = 5e8;
    let (report, _) = fig2_series(&cfg)?;
    println!(
        "{:>8} {:>10} {:>8} {:>10} {:>10} {:>8} {:>8}",
        "P (mW)", "counts", "g2(0)", "1/tau1", "1/tau2", "alpha", "pred."
    );
    for p in &report.points {
        println!(
            "{:8.2} {:10} {:8.3} {:10.4} {:10.6} {:8.3} {:8.3}",
            p.power_mw,
            p.events[0] + p.events[1],
            p.g2_zero,
            p.inv_tau1_per_ns,
            p.inv_tau2_per_ns,
            p.params.alpha_bunching,
            p.alpha_predicted
        );
    }
    println!("tau1(0) = {:.3} ns (expected {:.3})", report.tau1_zero_ns, report.expected_tau1_zero_ns);
    println!("tau2(0) = {:.1} ns (expected {:.1})", report.tau2_zero_ns, report.expected_tau2_zero_ns);
    Ok(())
}
