//! Direct formula evaluations used as oracles for the confidence measures.

/// Smallest index of the global minimum.
pub fn argmin(c: &[f64]) -> usize {
    (0..c.len()).fold(0, |b, i| if c[i] < c[b] { i } else { b })
}

/// Second smallest local minimum other than the global one, by exhaustive
/// scan; the second smallest value when there is none.
pub fn second_minimum(c: &[f64]) -> f64 {
    let d1 = argmin(c);
    let n = c.len();
    let mut locals = Vec::new();
    for d in 0..n {
        let left_ok = d == 0 || c[d] <= c[d - 1];
        let right_ok = d == n - 1 || c[d] <= c[d + 1];
        if d != d1 && left_ok && right_ok {
            locals.push(c[d]);
        }
    }
    if locals.is_empty() {
        locals = (0..n).filter(|&d| d != d1).map(|d| c[d]).collect();
    }
    if locals.is_empty() {
        return c[d1];
    }
    locals.into_iter().fold(f64::INFINITY, f64::min)
}

pub fn msm(c: &[f64]) -> f64 {
    -c[argmin(c)]
}

pub fn prob(s: &[f64]) -> f64 {
    let z: f64 = s.iter().map(|v| v.exp()).sum();
    s.iter().map(|v| v.exp() / z).fold(0.0, f64::max)
}

pub fn cur(c: &[f64]) -> f64 {
    let d1 = argmin(c);
    let lo = if d1 == 0 { c[1] } else { c[d1 - 1] };
    let hi = if d1 == c.len() - 1 { c[d1 - 1] } else { c[d1 + 1] };
    lo + hi - 2.0 * c[d1]
}

pub fn pkrn(c: &[f64]) -> f64 {
    second_minimum(c) / (c[argmin(c)] + 1e-9)
}

pub fn nem(c: &[f64]) -> f64 {
    let z: f64 = c.iter().map(|v| (-v).exp()).sum();
    -c.iter()
        .map(|v| {
            let p = (-v).exp() / z;
            -p * p.ln()
        })
        .sum::<f64>()
}

pub fn lrd(c: &[f64], right: &[f64]) -> f64 {
    let c1 = c[argmin(c)];
    let r = right.iter().copied().fold(f64::INFINITY, f64::min);
    (second_minimum(c) - c1) / ((c1 - r).abs() + 1e-9)
}
