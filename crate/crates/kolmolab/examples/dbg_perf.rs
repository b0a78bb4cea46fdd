use kolmolab::fields::{make_drift, DriftSpec};
use kolmolab::formbounds::*;
use kolmolab::grid::build_domain;
use kolmolab::mollify::*;
use std::time::Instant;

fn main() {
    let g = build_domain(3, 1.0, 65).unwrap();
    let spec = DriftSpec::hardy_pair(1.0, 1.0, vec![0.0; 3], vec![0.4; 3]);
    let t = Instant::now();
    let drift = make_drift(&spec, &g).unwrap();
    println!("make_drift: {:.1?}", t.elapsed());
    let ws = PencilWorkspace::new(&g);
    let grid = default_eps_grid(&g, 9);
    let t = Instant::now();
    let dref = estimate_mf_delta_with(&ws, &drift.b.magnitude(), 0.0, &grid, &EigenOptions::default()).unwrap();
    println!("delta_ref: {:.4} (iters {}) in {:.1?}", dref.bound, dref.rayleigh_iterations, t.elapsed());
    let t = Instant::now();
    let kernel = friedrichs_kernel(0.2, &g).unwrap();
    let bn = mollify_vector(&drift.b, &kernel, Extension::Zero).unwrap();
    println!("mollify eps=0.2 (radius {} cells): {:.1?}", kernel.radius_cells(), t.elapsed());
    let t = Instant::now();
    let dn = estimate_mf_delta_with(&ws, &bn.magnitude(), 0.0, &grid, &EigenOptions::default()).unwrap();
    println!("delta_n: {:.4} (iters {}) in {:.1?}", dn.bound, dn.rayleigh_iterations, t.elapsed());
}
