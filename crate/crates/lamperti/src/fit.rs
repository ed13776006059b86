//! Small shared numerics: least squares on a line, geometric grids.

/// Result of an ordinary least-squares line fit.
#[derive(Debug, Clone, Copy, serde::Serialize)]
pub struct FitLine {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
    pub n: usize,
}

/// Ordinary least squares of `y` on `x`. Returns `None` for fewer than two
/// distinct abscissae.
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> Option<FitLine> {
    assert_eq!(xs.len(), ys.len());
    let n = xs.len();
    if n < 2 {
        return None;
    }
    let nf = n as f64;
    let mx = xs.iter().sum::<f64>() / nf;
    let my = ys.iter().sum::<f64>() / nf;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    let mut syy = 0.0;
    for i in 0..n {
        let dx = xs[i] - mx;
        let dy = ys[i] - my;
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    if sxx == 0.0 {
        return None;
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r2 = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    Some(FitLine { slope, intercept, r2, n })
}

/// Strictly increasing integer grid with roughly `per_decade` points per
/// decade, starting at 1 and ending at `max` (inclusive).
pub fn geometric_edges(max: u64, per_decade: u32) -> Vec<u64> {
    let mut edges = Vec::new();
    let mut k = 0u32;
    loop {
        let v = 10f64.powf(f64::from(k) / f64::from(per_decade));
        let v = v.round() as u64;
        if v >= max {
            break;
        }
        if edges.last() != Some(&v) {
            edges.push(v);
        }
        k += 1;
    }
    if edges.last() != Some(&max) {
        edges.push(max);
    }
    edges
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fit_recovers_exact_line() {
        let xs: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let ys: Vec<f64> = xs.iter().map(|x| 3.0 - 2.0 * x).collect();
        let fit = linear_fit(&xs, &ys).unwrap();
        assert!((fit.slope + 2.0).abs() < 1e-12);
        assert!((fit.intercept - 3.0).abs() < 1e-12);
        assert!((fit.r2 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn edges_are_strictly_increasing() {
        let e = geometric_edges(1_000_000, 8);
        assert_eq!(*e.first().unwrap(), 1);
        assert_eq!(*e.last().unwrap(), 1_000_000);
        for w in e.windows(2) {
            assert!(w[0] < w[1]);
        }
    }
}
