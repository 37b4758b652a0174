//! Layout comparison measures.

use crate::layout::FrameLayout;

/// Mean distance moved by points present in both layouts.
pub fn mean_displacement(prev: &FrameLayout, next: &FrameLayout) -> Option<f64> {
    let index = next.index();
    let mut total = 0.0;
    let mut count = 0usize;
    for (i, id) in prev.ids.iter().enumerate() {
        if let Some(&j) = index.get(id) {
            total += crate::layout::distance(prev.position(i), next.position(j));
            count += 1;
        }
    }
    (count > 0).then(|| total / count as f64)
}

/// Pearson correlation; `None` for fewer than two pairs or zero variance.
pub fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return None;
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some(sxy / (sxx * syy).sqrt())
}
