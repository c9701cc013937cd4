//! Reflection and transmission from a direct linear solve on a finite window
//! of the side-coupled chain with a plane wave injected from the left and
//! outgoing conditions on both ends.

use std::f64::consts::PI;

use approx::assert_relative_eq;
use faer::linalg::solvers::Solve;
use faer::{c64, Mat};
use nhlattice::model::{build_side_coupled_chain, LatticeSpec, SiteLabel, Topology};
use nhlattice::scattering::{reflection_transmission, Amplitudes};

fn jost(k: f64, spec: &LatticeSpec<f64>, half_width: usize) -> (c64, c64) {
    let h = build_side_coupled_chain(spec, half_width).unwrap();
    let n = h.dim();
    let m = half_width as f64;
    let e = -2.0 * spec.kappa * k.cos();
    let out = c64::new(0.0, k).exp() * spec.kappa;
    let left = h.index_of(SiteLabel::Chain(-(half_width as i64))).unwrap();
    let right = h.index_of(SiteLabel::Chain(half_width as i64)).unwrap();
    let a = Mat::<c64>::from_fn(n, n, |i, j| {
        let mut v = -h.get(i, j);
        if i == j {
            v += e;
            if i == left || i == right {
                v += out;
            }
        }
        v
    });
    let mut b = Mat::<c64>::zeros(n, 1);
    b[(left, 0)] = c64::new(0.0, 2.0 * spec.kappa * k.sin()) * c64::new(0.0, -k * m).exp();
    let f = a.partial_piv_lu().solve(&b);
    let r = (f[(left, 0)] - c64::new(0.0, -k * m).exp()) * c64::new(0.0, -k * m).exp();
    let t = f[(right, 0)] * c64::new(0.0, -k * m).exp();
    (r, t)
}

#[test]
fn closed_form_matches_linear_solve() {
    for &(g, gamma) in &[(1.0, 0.3), (1.0, -0.4), (0.5, 0.1), (2.0, 1.7), (1.0, 0.0)] {
        let spec = LatticeSpec::new(1.0, g, gamma, 50, Topology::SideCoupledChain);
        for &k in &[0.3, PI / 4.0, 1.2, 2.0, 2.9] {
            let (r_ref, t_ref) = jost(k, &spec, 20);
            let Amplitudes::Finite { r, t } = reflection_transmission(k, &spec).unwrap().amplitudes else {
                panic!("unexpected divergence at k={k}");
            };
            assert!((r - r_ref).norm() < 1e-12, "g={g} gamma={gamma} k={k}: {r} vs {r_ref}");
            assert!((t - t_ref).norm() < 1e-12, "g={g} gamma={gamma} k={k}: {t} vs {t_ref}");
        }
    }
}

#[test]
fn frozen_quarter_pi_amplitudes() {
    // linear-solve values at k = π/4, κ = g = 1, γ = 0.3
    let spec = LatticeSpec::new(1.0, 1.0, 0.3, 50, Topology::SideCoupledChain);
    let (r, t) = jost(PI / 4.0, &spec, 20);
    assert_relative_eq!(r.re, -0.13291923612904474, max_relative = 1e-12);
    assert_relative_eq!(r.im, 0.4617368099005727, max_relative = 1e-12);
    assert_relative_eq!(t.re, 0.8670807638709553, max_relative = 1e-12);
    assert_relative_eq!(t.im, 0.4617368099005727, max_relative = 1e-12);
    let s = reflection_transmission(PI / 4.0, &spec).unwrap();
    assert!((s.r().unwrap() - r).norm() < 1e-13);
}

#[test]
fn singular_solve_at_critical_gain() {
    // at k = π/2, γ = g²/(2κ) the window system has a nontrivial solution
    // without a source: the closed form reports a divergence
    let spec = LatticeSpec::new(1.0, 1.0, 0.5, 50, Topology::SideCoupledChain);
    assert!(reflection_transmission(PI / 2.0, &spec).unwrap().is_divergent());
    let (r, _) = jost(PI / 2.0 + 1e-6, &spec, 20);
    assert!(r.norm() > 1e5);
}
