use super::RefinementConfig;
use crate::maps::DisparityMap;
use crate::par;

/// Median over the valid pixels of a `window × window` neighborhood,
/// clipped at the borders.
pub fn median_filter(d: &DisparityMap, window: usize) -> DisparityMap {
    let r = window / 2;
    let (h, w) = (d.height, d.width);
    let rows = par::map_range(h, |y| {
        let mut buf = Vec::with_capacity(window * window);
        (0..w)
            .map(|x| {
                if !d.is_valid(y, x) {
                    return d.at(y, x);
                }
                buf.clear();
                for yy in y.saturating_sub(r)..(y + r + 1).min(h) {
                    for xx in x.saturating_sub(r)..(x + r + 1).min(w) {
                        if d.is_valid(yy, xx) {
                            buf.push(d.at(yy, xx));
                        }
                    }
                }
                buf.sort_by(f64::total_cmp);
                let n = buf.len();
                if n % 2 == 1 {
                    buf[n / 2]
                } else {
                    (buf[n / 2 - 1] + buf[n / 2]) / 2.0
                }
            })
            .collect::<Vec<_>>()
    });
    DisparityMap {
        data: rows.concat(),
        ..d.clone()
    }
}

/// Bilateral filter on the disparity values themselves (Gaussian spatial
/// and range weights, radius `⌈2σ_s⌉`).
pub fn bilateral_filter(d: &DisparityMap, sigma_s: f64, sigma_r: f64) -> DisparityMap {
    if sigma_s <= 0.0 || sigma_r <= 0.0 {
        return d.clone();
    }
    let r = (2.0 * sigma_s).ceil() as usize;
    let (h, w) = (d.height, d.width);
    let (ks, kr) = (1.0 / (2.0 * sigma_s * sigma_s), 1.0 / (2.0 * sigma_r * sigma_r));
    let rows = par::map_range(h, |y| {
        (0..w)
            .map(|x| {
                let c = d.at(y, x);
                if !d.is_valid(y, x) {
                    return c;
                }
                let (mut num, mut den) = (0.0, 0.0);
                for yy in y.saturating_sub(r)..(y + r + 1).min(h) {
                    for xx in x.saturating_sub(r)..(x + r + 1).min(w) {
                        if !d.is_valid(yy, xx) {
                            continue;
                        }
                        let (dy, dx) = (yy as f64 - y as f64, xx as f64 - x as f64);
                        let v = d.at(yy, xx);
                        let wt = (-(dx * dx + dy * dy) * ks - (v - c) * (v - c) * kr).exp();
                        num += wt * v;
                        den += wt;
                    }
                }
                num / den
            })
            .collect::<Vec<_>>()
    });
    DisparityMap {
        data: rows.concat(),
        ..d.clone()
    }
}

/// Median then bilateral filtering.
pub fn smooth(d: &DisparityMap, cfg: &RefinementConfig) -> DisparityMap {
    let m = median_filter(d, cfg.median_window);
    bilateral_filter(&m, cfg.sigma_s, cfg.sigma_r)
}
