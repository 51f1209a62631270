/// Result of comparing an analytic gradient with central differences.
#[derive(Clone, Copy, Debug)]
pub struct GradCheck {
    pub max_rel_error: f64,
    pub worst_index: usize,
    pub analytic: f64,
    pub numeric: f64,
}

/// Entries whose analytic and numeric magnitudes are both below this are
/// compared absolutely: central differences at `h = 1e-6` carry roughly
/// `1e-10 * |f|` of rounding noise, which swamps a relative test on
/// near-zero derivatives.
const MAGNITUDE_FLOOR: f64 = 1e-4;

/// Central finite differences of `f` around `params`, compared entry-wise
/// with `analytic` as `|a - n| / max(|a|, |n|, MAGNITUDE_FLOOR)`.
pub fn finite_difference_check<F>(f: F, params: &[f64], analytic: &[f64], h: f64) -> GradCheck
where
    F: Fn(&[f64]) -> f64,
{
    assert_eq!(params.len(), analytic.len());
    let mut p = params.to_vec();
    let mut worst = GradCheck {
        max_rel_error: 0.0,
        worst_index: 0,
        analytic: 0.0,
        numeric: 0.0,
    };
    for i in 0..p.len() {
        let orig = p[i];
        p[i] = orig + h;
        let up = f(&p);
        p[i] = orig - h;
        let down = f(&p);
        p[i] = orig;
        let numeric = (up - down) / (2.0 * h);
        let a = analytic[i];
        let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(MAGNITUDE_FLOOR);
        if rel > worst.max_rel_error || rel.is_nan() {
            worst = GradCheck {
                max_rel_error: rel,
                worst_index: i,
                analytic: a,
                numeric,
            };
        }
    }
    worst
}
