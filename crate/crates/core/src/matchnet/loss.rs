use crate::error::{Error, Result};

/// Value and partial derivatives of the hybrid patch-pair loss
/// `α·XEnt(v₊, v₋) + (1 − α)·max(0, m + s₋ − s₊)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HybridLoss {
    pub loss: f64,
    pub xent: f64,
    pub hinge: f64,
    pub d_v_pos: f64,
    pub d_v_neg: f64,
    pub d_s_pos: f64,
    pub d_s_neg: f64,
}

/// With `as_printed` the cross-entropy is `−(log v₋ + log(1 − v₊))`;
/// otherwise the conventional `−(log v₊ + log(1 − v₋))`.
pub fn hybrid_loss(
    v_pos: f64,
    v_neg: f64,
    s_pos: f64,
    s_neg: f64,
    alpha: f64,
    margin: f64,
    as_printed: bool,
) -> Result<HybridLoss> {
    for v in [v_pos, v_neg] {
        if !(v > 0.0 && v < 1.0) {
            return Err(Error::Numeric(format!("decision output {v} outside (0, 1)")));
        }
    }
    let gap = margin + s_neg - s_pos;
    let hinge = gap.max(0.0);
    let active = if gap > 0.0 { 1.0 } else { 0.0 };
    let (xent, dvp, dvn) = if as_printed {
        (-(v_neg.ln() + (1.0 - v_pos).ln()), 1.0 / (1.0 - v_pos), -1.0 / v_neg)
    } else {
        (-(v_pos.ln() + (1.0 - v_neg).ln()), -1.0 / v_pos, 1.0 / (1.0 - v_neg))
    };
    Ok(HybridLoss {
        loss: alpha * xent + (1.0 - alpha) * hinge,
        xent,
        hinge,
        d_v_pos: alpha * dvp,
        d_v_neg: alpha * dvn,
        d_s_pos: -(1.0 - alpha) * active,
        d_s_neg: (1.0 - alpha) * active,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const ALPHA: f64 = 0.8;
    const M: f64 = 0.2;

    #[test]
    fn hinge_vanishes_beyond_margin() {
        let l = hybrid_loss(0.3, 0.6, 0.9, 0.7, ALPHA, M, true).unwrap();
        assert_eq!(l.hinge, 0.0);
        let l = hybrid_loss(0.3, 0.6, 0.9, 0.2, ALPHA, M, true).unwrap();
        assert_eq!(l.hinge, 0.0);
        assert_eq!(l.d_s_pos, 0.0);
    }

    #[test]
    fn equal_similarities_cost_the_margin() {
        let l = hybrid_loss(0.3, 0.6, 0.4, 0.4, ALPHA, M, true).unwrap();
        assert!((l.hinge - 0.2).abs() < 1e-15);
    }

    #[test]
    fn alpha_one_is_pure_cross_entropy() {
        let l = hybrid_loss(0.3, 0.6, 0.0, 0.9, 1.0, M, true).unwrap();
        assert_eq!(l.loss, l.xent);
        let expect = -(0.6f64.ln() + 0.7f64.ln());
        assert!((l.xent - expect).abs() < 1e-15);
    }

    #[test]
    fn conventional_cross_entropy_swaps_labels() {
        let l = hybrid_loss(0.3, 0.6, 0.0, 0.0, 1.0, M, false).unwrap();
        assert!((l.xent + (0.3f64.ln() + 0.4f64.ln())).abs() < 1e-15);
    }

    #[test]
    fn guards_decision_range() {
        assert!(matches!(
            hybrid_loss(1.0, 0.5, 0.0, 0.0, ALPHA, M, true),
            Err(Error::Numeric(_))
        ));
        assert!(hybrid_loss(0.5, 0.0, 0.0, 0.0, ALPHA, M, true).is_err());
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let h = 1e-6;
        for &printed in &[true, false] {
            let f = |vp: f64, vn: f64, sp: f64, sn: f64| hybrid_loss(vp, vn, sp, sn, ALPHA, M, printed).unwrap().loss;
            let (vp, vn, sp, sn) = (0.35, 0.55, 0.1, 0.2);
            let l = hybrid_loss(vp, vn, sp, sn, ALPHA, M, printed).unwrap();
            let fd = |a: f64, b: f64| (a - b) / (2.0 * h);
            assert!((fd(f(vp + h, vn, sp, sn), f(vp - h, vn, sp, sn)) - l.d_v_pos).abs() < 1e-6);
            assert!((fd(f(vp, vn + h, sp, sn), f(vp, vn - h, sp, sn)) - l.d_v_neg).abs() < 1e-6);
            assert!((fd(f(vp, vn, sp + h, sn), f(vp, vn, sp - h, sn)) - l.d_s_pos).abs() < 1e-6);
            assert!((fd(f(vp, vn, sp, sn + h), f(vp, vn, sp, sn - h)) - l.d_s_neg).abs() < 1e-6);
        }
    }
}
