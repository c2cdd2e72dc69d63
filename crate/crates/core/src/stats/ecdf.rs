use super::StatsError;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EcdfPoint {
    pub x: f64,
    pub cumulative: f64,
}

/// Weighted ECDF over `(value, weight)` pairs: one step per distinct value,
/// tied values merged. All-zero weights fall back to uniform weights.
pub fn weighted_ecdf(points: &[(f64, f64)]) -> Result<Vec<EcdfPoint>, StatsError> {
    if points.is_empty() {
        return Err(StatsError::Empty);
    }
    if points.iter().any(|(x, w)| !x.is_finite() || !w.is_finite()) {
        return Err(StatsError::NonFinite);
    }
    if let Some(i) = points.iter().position(|&(_, w)| w < 0.0) {
        return Err(StatsError::NegativeWeight(i));
    }
    let uniform = points.iter().all(|&(_, w)| w == 0.0);
    let mut sorted: Vec<(f64, f64)> = points.iter().map(|&(x, w)| (x, if uniform { 1.0 } else { w })).collect();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    let total: f64 = sorted.iter().map(|p| p.1).sum();

    let mut out: Vec<EcdfPoint> = Vec::new();
    let mut running = 0.0;
    for (x, w) in sorted {
        running += w;
        match out.last_mut() {
            Some(last) if last.x == x => last.cumulative = running / total,
            _ => out.push(EcdfPoint { x, cumulative: running / total }),
        }
    }
    if let Some(last) = out.last_mut() {
        last.cumulative = 1.0;
    }
    Ok(out)
}
