/// Cauchy robust loss `c^2 ln(1 + s / c^2)` of a squared whitened residual `s`.
pub fn cauchy_loss(s: f64, c: f64) -> f64 {
    let c2 = c * c;
    c2 * (s / c2).ln_1p()
}

/// IRLS weight: derivative of [`cauchy_loss`] with respect to `s`.
pub fn cauchy_weight(s: f64, c: f64) -> f64 {
    1.0 / (1.0 + s / (c * c))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spot_values() {
        assert_eq!(cauchy_loss(0.0, 2.0), 0.0);
        assert!((cauchy_loss(1.0, 1.0) - std::f64::consts::LN_2).abs() < 1e-12);
        assert_eq!(cauchy_weight(0.0, 1.5), 1.0);
        assert_eq!(cauchy_weight(3.0, 1.0), 0.25);
    }

    #[test]
    fn sublinear_growth() {
        let mut prev = f64::INFINITY;
        for k in 1..12 {
            let s = 10f64.powi(k);
            let ratio = cauchy_loss(s, 2.0) / s;
            assert!(ratio < prev);
            prev = ratio;
        }
        assert!(prev < 1e-8);
    }

    #[test]
    fn weight_is_loss_derivative() {
        let h = 1e-5;
        for &c in &[0.5, 1.0, 2.0, 5.0] {
            for i in 1..200 {
                let s = i as f64 * 0.37;
                let fd = (cauchy_loss(s + h, c) - cauchy_loss(s - h, c)) / (2.0 * h);
                assert!((fd - cauchy_weight(s, c)).abs() < 1e-6);
            }
        }
    }
}
