//! Central finite-difference gradient checker.
//!
//! Used by tests as an implementation-independent oracle for analytic
//! gradients: it only ever calls the supplied scalar function.

use super::Mlp;

/// Gradient of `f` with respect to every network parameter, estimated by
/// central differences with step `h`. Returned flat, in `Mlp::to_flat` order.
pub fn numerical_grad(net: &Mlp, f: &mut dyn FnMut(&Mlp) -> f64, h: f64) -> Vec<f64> {
    let base = net.to_flat();
    let mut work = net.clone();
    let mut grad = vec![0.0; base.len()];
    for i in 0..base.len() {
        let mut p = base.clone();
        p[i] = base[i] + h;
        work.set_flat(&p);
        let fp = f(&work);
        p[i] = base[i] - h;
        work.set_flat(&p);
        let fm = f(&work);
        grad[i] = (fp - fm) / (2.0 * h);
    }
    grad
}

/// Maximum relative error between two gradient vectors,
/// `|a - b| / (|a| + |b| + 1e-8)` per component.
pub fn max_rel_err(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y).abs() / (x.abs() + y.abs() + 1e-8))
        .fold(0.0, f64::max)
}
