//! Golden-section search for the maximum of a unimodal function.

const INV_PHI: f64 = 0.618_033_988_749_894_9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Maximum {
    pub x: f64,
    pub value: f64,
    pub evaluations: usize,
}

/// Maximizes `f` on `[lo, hi]` until the bracket is narrower than
/// `rel_tol * (hi - lo)` (plus an absolute floor of `f64::EPSILON * hi`).
///
/// The endpoints are evaluated too, so a function that is monotone on the
/// interval reports the correct boundary maximum.
pub fn golden_section_max<F>(f: F, lo: f64, hi: f64, rel_tol: f64) -> Maximum
where
    F: Fn(f64) -> f64,
{
    assert!(hi >= lo, "empty bracket [{lo}, {hi}]");
    let width_tol = (rel_tol * (hi - lo)).max(f64::EPSILON * hi.abs());
    let (mut a, mut b) = (lo, hi);
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    let mut evaluations = 2;
    while b - a > width_tol && evaluations < 500 {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d);
        }
        evaluations += 1;
    }
    let mut best = if fc >= fd {
        Maximum { x: c, value: fc, evaluations }
    } else {
        Maximum { x: d, value: fd, evaluations }
    };
    for x in [lo, hi] {
        let value = f(x);
        best.evaluations += 1;
        if value > best.value {
            best.x = x;
            best.value = value;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn finds_parabola_peak() {
        let m = golden_section_max(|x| -(x - 1.25) * (x - 1.25), 0.0, 10.0, 1e-12);
        assert!((m.x - 1.25).abs() < 1e-6);
        assert!(m.value <= 0.0 && m.value > -1e-12);
    }

    #[test]
    fn monotone_function_hits_boundary() {
        assert_eq!(golden_section_max(|x| x, 0.0, 3.0, 1e-10).x, 3.0);
        assert_eq!(golden_section_max(|x| -x, 0.0, 3.0, 1e-10).x, 0.0);
    }
}
