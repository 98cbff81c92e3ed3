use std::f64::consts::PI;

use spinsync::atom::build_atom_system;
use spinsync::config::RunConfig;
use spinsync::spectrum::sweep_omegas;

#[test]
fn sweep_is_order_independent() {
    let cfg = RunConfig::default();
    let sys = build_atom_system(&cfg.atom).unwrap();
    let exp = cfg.experiment(&sys).unwrap();
    let w = [20.0e3, 33.0e3, 33.13e3].map(|f| 2.0 * PI * f);
    let pool = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
    let a = pool.install(|| sweep_omegas(&exp, &w, serde_json::Value::Null)).unwrap();
    let mut b: Vec<_> = w.iter().rev().map(|&o| exp.point(o).unwrap()).collect();
    b.reverse();
    assert_eq!(a.points, b);
    assert!(a.points.iter().all(|p| p.c1 >= p.c2 && p.converged));
}

#[test]
fn peak_dominates_off_peak_points() {
    let cfg = RunConfig::default();
    let sys = build_atom_system(&cfg.atom).unwrap();
    let exp = cfg.experiment(&sys).unwrap();
    let on = exp.point(2.0 * PI * 33.13e3).unwrap();
    let off = exp.point(2.0 * PI * 30.0e3).unwrap();
    assert!(on.c2 > 3.0 * off.c2, "{} vs {}", on.c2, off.c2);
}
