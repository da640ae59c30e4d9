use super::Vector;
use crate::Scalar;

/// Central-difference gradient `(f(x+heᵢ) − f(x−heᵢ)) / 2h`, per coordinate.
pub fn finite_diff_gradient<S, F>(f: F, x: &Vector<S>, h: S) -> Vector<S>
where
    S: Scalar,
    F: Fn(&Vector<S>) -> S,
{
    assert!(h > S::zero(), "finite-difference step must be positive");
    let two_h = h + h;
    let mut probe = x.as_slice().to_vec();
    let out = (0..x.len())
        .map(|i| {
            let orig = probe[i];
            probe[i] = orig + h;
            let up = f(&Vector::from_raw(probe.clone()));
            probe[i] = orig - h;
            let down = f(&Vector::from_raw(probe.clone()));
            probe[i] = orig;
            (up - down) / two_h
        })
        .collect();
    Vector::from_raw(out)
}
