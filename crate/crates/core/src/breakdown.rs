//! Per-term energy values.

/// Values of the individual terms of a functional evaluation.
///
/// `total` is always the sum of the six terms, accumulated in declaration order.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct EnergyBreakdown {
    pub bulk: f64,
    pub anisotropic_mm: f64,
    pub curvature: f64,
    pub point: f64,
    pub penalty_v: f64,
    pub penalty_w: f64,
    pub total: f64,
}

impl EnergyBreakdown {
    pub const NAMES: [&'static str; 7] = [
        "bulk",
        "anisotropic_mm",
        "curvature",
        "point",
        "penalty_v",
        "penalty_w",
        "total",
    ];

    pub fn new(bulk: f64, anisotropic_mm: f64, curvature: f64, point: f64, penalty_v: f64, penalty_w: f64) -> Self {
        let mut b = Self {
            bulk,
            anisotropic_mm,
            curvature,
            point,
            penalty_v,
            penalty_w,
            total: 0.0,
        };
        b.total = b.terms().iter().sum();
        b
    }

    /// Interfacial and curvature terms only.
    pub fn interface(anisotropic_mm: f64, curvature: f64) -> Self {
        Self::new(0.0, anisotropic_mm, curvature, 0.0, 0.0, 0.0)
    }

    pub fn terms(&self) -> [f64; 6] {
        [
            self.bulk,
            self.anisotropic_mm,
            self.curvature,
            self.point,
            self.penalty_v,
            self.penalty_w,
        ]
    }

    /// Terms followed by the total, in the order of [`Self::NAMES`].
    pub fn values(&self) -> [f64; 7] {
        let t = self.terms();
        [t[0], t[1], t[2], t[3], t[4], t[5], self.total]
    }

    pub fn add(&self, other: &Self) -> Self {
        let a = self.terms();
        let b = other.terms();
        Self::new(a[0] + b[0], a[1] + b[1], a[2] + b[2], a[3] + b[3], a[4] + b[4], a[5] + b[5])
    }

    pub fn is_nonnegative(&self) -> bool {
        self.terms().iter().all(|t| *t >= 0.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn total_is_sum(t in prop::array::uniform6(0.0f64..1e3)) {
            let b = EnergyBreakdown::new(t[0], t[1], t[2], t[3], t[4], t[5]);
            let s: f64 = t.iter().sum();
            prop_assert!((b.total - s).abs() <= 1e-12 * s.max(1.0));
            let d = b.add(&b);
            prop_assert!((d.total - 2.0 * b.total).abs() <= 1e-12 * s.max(1.0));
        }
    }
}
