//! Distances between one-dimensional distributions and small summaries.

/// 1-Wasserstein distance between two weighted atom sets,
/// `∫ |F_a(x) − F_b(x)| dx`. Weights are normalised internally.
pub fn wasserstein1_weighted(a: &[(f64, f64)], b: &[(f64, f64)]) -> f64 {
    assert!(
        !a.is_empty() && !b.is_empty(),
        "W1 of an empty distribution"
    );
    let wa: f64 = a.iter().map(|x| x.1).sum();
    let wb: f64 = b.iter().map(|x| x.1).sum();
    // (position, signed mass): +mass for a, −mass for b
    let mut events: Vec<(f64, f64)> = a
        .iter()
        .map(|&(x, w)| (x, w / wa))
        .chain(b.iter().map(|&(x, w)| (x, -w / wb)))
        .collect();
    events.sort_by(|p, q| p.0.total_cmp(&q.0));
    let mut diff = 0.0;
    let mut total = 0.0;
    for pair in events.windows(2) {
        diff += pair[0].1;
        total += diff.abs() * (pair[1].0 - pair[0].0);
    }
    total
}

/// 1-Wasserstein distance between two empirical samples.
pub fn wasserstein1(a: &[f64], b: &[f64]) -> f64 {
    if a.len() == b.len() {
        let mut x = a.to_vec();
        let mut y = b.to_vec();
        x.sort_by(f64::total_cmp);
        y.sort_by(f64::total_cmp);
        return x.iter().zip(&y).map(|(p, q)| (p - q).abs()).sum::<f64>() / x.len() as f64;
    }
    let wa: Vec<(f64, f64)> = a.iter().map(|&x| (x, 1.0)).collect();
    let wb: Vec<(f64, f64)> = b.iter().map(|&x| (x, 1.0)).collect();
    wasserstein1_weighted(&wa, &wb)
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample standard deviation (n − 1 denominator); 0 for fewer than two values.
pub fn std_dev(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64).sqrt()
}
