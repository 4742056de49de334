use crate::error::{Error, Result};
use crate::measure::DiscreteMeasure;

/// `W1` on the real line as the area between the two CDFs.
pub fn wasserstein_1d(a: &DiscreteMeasure, b: &DiscreteMeasure, alpha: f64) -> Result<f64> {
    if a.dim() != 1 || b.dim() != 1 {
        return Err(Error::invalid("wasserstein_1d needs one-dimensional measures"));
    }
    if alpha != 1.0 {
        return Err(Error::invalid("wasserstein_1d supports alpha = 1 only"));
    }
    // signed mass events: +w for a, -w for b
    let mut events: Vec<(f64, f64)> = a
        .atoms()
        .map(|(x, w)| (x[0], w))
        .chain(b.atoms().map(|(x, w)| (x[0], -w)))
        .collect();
    events.sort_by(|p, q| p.0.total_cmp(&q.0));
    let mut gap = 0.0;
    let mut area = 0.0;
    for k in 0..events.len() {
        gap += events[k].1;
        if let Some(next) = events.get(k + 1) {
            area += gap.abs() * (next.0 - events[k].0);
        }
    }
    Ok(area)
}
