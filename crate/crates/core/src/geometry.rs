//! Coordinate compactification of `[0, inf)^n` onto the unit box and
//! nonlinear local time homogenization, as wrappers around any
//! right-hand side.
//!
//! Both transformations preserve orbits and fixed points; the second also
//! bounds all speeds strictly below one, which is what makes a single grid
//! time step work across the whole state space.

use crate::dynamics::{Control, ControlledSystem};
use crate::error::{Error, Result};

/// Per-coordinate rational map `x -> x / (x_mid + x)` from `[0, inf)` onto
/// `[0, 1)`. The scale `x_mid` is the point mapped to one half, i.e. the
/// region resolved best.
#[derive(Debug, Clone, PartialEq)]
pub struct CompactMap {
    x_mid: Vec<f64>,
}

impl CompactMap {
    pub fn new(x_mid: Vec<f64>) -> Result<CompactMap> {
        if x_mid.is_empty() {
            return Err(Error::parameter("compact map: empty scale vector"));
        }
        for (i, &m) in x_mid.iter().enumerate() {
            if !(m.is_finite() && m > 0.0) {
                return Err(Error::parameter(format!(
                    "compact map: scale {i} must be strictly positive and finite, got {m}"
                )));
            }
        }
        Ok(CompactMap { x_mid })
    }

    pub fn dim(&self) -> usize {
        self.x_mid.len()
    }

    pub fn scales(&self) -> &[f64] {
        &self.x_mid
    }

    pub fn compactify_into(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        self.check_dim(x)?;
        for i in 0..x.len() {
            if !x[i].is_finite() || x[i] < 0.0 {
                return Err(Error::domain(format!(
                    "compactify: component {i} = {} outside [0, inf)",
                    x[i]
                )));
            }
            out[i] = x[i] / (self.x_mid[i] + x[i]);
        }
        Ok(())
    }

    pub fn compactify(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; x.len()];
        self.compactify_into(x, &mut out)?;
        Ok(out)
    }

    pub fn decompactify_into(&self, y: &[f64], out: &mut [f64]) -> Result<()> {
        self.check_dim(y)?;
        for i in 0..y.len() {
            if !y[i].is_finite() || y[i] < 0.0 || y[i] >= 1.0 {
                return Err(Error::domain(format!(
                    "decompactify: component {i} = {} outside [0, 1)",
                    y[i]
                )));
            }
            out[i] = y[i] * self.x_mid[i] / (1.0 - y[i]);
        }
        Ok(())
    }

    pub fn decompactify(&self, y: &[f64]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; y.len()];
        self.decompactify_into(y, &mut out)?;
        Ok(out)
    }

    fn check_dim(&self, v: &[f64]) -> Result<()> {
        if v.len() == self.dim() {
            Ok(())
        } else {
            Err(Error::usage(format!(
                "compact map: expected dimension {}, got {}",
                self.dim(),
                v.len()
            )))
        }
    }
}

/// A right-hand side pushed forward through a [`CompactMap`]:
/// `F_i(y) = (1 - y_i)^2 / x_mid_i * f_i(map^-1(y))` on `[0, 1)^n`.
///
/// Points with a coordinate equal to one have no finite preimage;
/// evaluation there is a domain error unless the point was registered as a
/// boundary fixed point, in which case the dynamics extend by zero.
pub struct Transformed<S> {
    inner: S,
    map: CompactMap,
    boundary_fixed_points: Vec<Vec<f64>>,
}

impl<S: ControlledSystem> Transformed<S> {
    pub fn new(inner: S, map: CompactMap) -> Result<Transformed<S>> {
        if inner.dim() != map.dim() {
            return Err(Error::usage(format!(
                "transform: system dimension {} does not match map dimension {}",
                inner.dim(),
                map.dim()
            )));
        }
        Ok(Transformed {
            inner,
            map,
            boundary_fixed_points: Vec::new(),
        })
    }

    /// Registers a point on the closed unit cube where the dynamics are
    /// formally extended by zero (a fixed point at infinity).
    pub fn with_boundary_fixed_point(mut self, y: Vec<f64>) -> Result<Transformed<S>> {
        if y.len() != self.map.dim() {
            return Err(Error::usage("boundary fixed point: dimension mismatch"));
        }
        if y.iter().any(|&v| !(0.0..=1.0).contains(&v)) {
            return Err(Error::parameter(
                "boundary fixed point must lie in the closed unit cube",
            ));
        }
        self.boundary_fixed_points.push(y);
        Ok(self)
    }

    pub fn map(&self) -> &CompactMap {
        &self.map
    }
}

impl<S: ControlledSystem> ControlledSystem for Transformed<S> {
    fn dim(&self) -> usize {
        self.inner.dim()
    }
    fn control_count(&self) -> usize {
        self.inner.control_count()
    }
    fn control_name(&self, u: Control) -> String {
        self.inner.control_name(u)
    }
    fn rhs(&self, y: &[f64], u: Control, out: &mut [f64]) -> Result<()> {
        if self.boundary_fixed_points.iter().any(|p| p.as_slice() == y) {
            out.fill(0.0);
            return Ok(());
        }
        let mut x = vec![0.0; y.len()];
        self.map.decompactify_into(y, &mut x)?;
        self.inner.rhs(&x, u, out)?;
        for i in 0..y.len() {
            let shrink = 1.0 - y[i];
            out[i] *= shrink * shrink / self.map.scales()[i];
        }
        Ok(())
    }
}

/// Time-homogenized right-hand side `F / (|F| + epsilon)` (Euclidean norm).
///
/// Away from fixed points (`|F| >> epsilon`) all speeds are close to one;
/// the zero set is preserved exactly, and the output norm is strictly
/// below one everywhere.
pub struct Homogenized<S> {
    inner: S,
    epsilon: f64,
}

impl<S: ControlledSystem> Homogenized<S> {
    pub fn new(inner: S, epsilon: f64) -> Result<Homogenized<S>> {
        if !(epsilon.is_finite() && epsilon > 0.0) {
            return Err(Error::parameter(format!(
                "homogenize: epsilon must be strictly positive, got {epsilon}"
            )));
        }
        Ok(Homogenized { inner, epsilon })
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn inner(&self) -> &S {
        &self.inner
    }
}

impl<S: ControlledSystem> ControlledSystem for Homogenized<S> {
    fn dim(&self) -> usize {
        self.inner.dim()
    }
    fn control_count(&self) -> usize {
        self.inner.control_count()
    }
    fn control_name(&self, u: Control) -> String {
        self.inner.control_name(u)
    }
    fn rhs(&self, x: &[f64], u: Control, out: &mut [f64]) -> Result<()> {
        self.inner.rhs(x, u, out)?;
        let norm = out.iter().map(|v| v * v).sum::<f64>().sqrt();
        let scale = 1.0 / (norm + self.epsilon);
        for v in out.iter_mut() {
            *v *= scale;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::FnSystem;
    use proptest::prelude::*;

    #[test]
    fn midpoint_maps_to_one_half() {
        let map = CompactMap::new(vec![240.0, 7e13, 5e11]).unwrap();
        let y = map.compactify(&[240.0, 7e13, 5e11]).unwrap();
        assert_eq!(y, vec![0.5, 0.5, 0.5]);
    }

    #[test]
    fn zero_maps_to_zero_both_ways() {
        let map = CompactMap::new(vec![1.0, 2.0]).unwrap();
        assert_eq!(map.compactify(&[0.0, 0.0]).unwrap(), vec![0.0, 0.0]);
        assert_eq!(map.decompactify(&[0.0, 0.0]).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn scalar_example() {
        let map = CompactMap::new(vec![2.0]).unwrap();
        assert_eq!(map.compactify(&[6.0]).unwrap(), vec![0.75]);
        assert_eq!(map.decompactify(&[0.75]).unwrap(), vec![6.0]);
    }

    #[test]
    fn compactify_rejects_bad_input() {
        let map = CompactMap::new(vec![1.0]).unwrap();
        assert!(matches!(map.compactify(&[-0.5]), Err(Error::Domain(_))));
        assert!(matches!(
            map.compactify(&[f64::INFINITY]),
            Err(Error::Domain(_))
        ));
        assert!(matches!(map.decompactify(&[1.0]), Err(Error::Domain(_))));
        assert!(matches!(
            CompactMap::new(vec![0.0]),
            Err(Error::Parameter(_))
        ));
    }

    proptest! {
        #[test]
        fn round_trip_within_tolerance(
            n in 1usize..=3,
            seed in any::<u64>(),
        ) {
            let mut state = seed | 1;
            let mut next = move || {
                state ^= state << 13;
                state ^= state >> 7;
                state ^= state << 17;
                (state >> 11) as f64 / (1u64 << 53) as f64
            };
            let x_mid: Vec<f64> = (0..n).map(|_| 1e-3 + next() * 1e6).collect();
            let map = CompactMap::new(x_mid.clone()).unwrap();
            for _ in 0..10 {
                // up to two orders of magnitude around the resolved scale;
                // far above x_mid the map compresses everything toward 1 and
                // f64 cannot represent the preimage to full precision
                let x: Vec<f64> = (0..n).map(|i| next() * 100.0 * x_mid[i]).collect();
                let back = map.decompactify(&map.compactify(&x).unwrap()).unwrap();
                for i in 0..n {
                    let rel = (back[i] - x[i]).abs() / x[i].abs().max(1e-300);
                    prop_assert!(rel <= 1e-12, "rel {rel} at component {i}");
                }
            }
        }

        #[test]
        fn compactify_is_strictly_increasing(
            a in 0.0f64..1e9,
            delta in 1e-6f64..1e9,
            mid in 1e-3f64..1e6,
        ) {
            let map = CompactMap::new(vec![mid]).unwrap();
            let lo = map.compactify(&[a]).unwrap()[0];
            let hi = map.compactify(&[a + delta]).unwrap()[0];
            prop_assert!(hi > lo);
        }
    }

    #[test]
    fn round_trip_dense_sample() {
        for n in 1..=3usize {
            let scales: Vec<f64> = (0..n).map(|i| 10f64.powi(i as i32 * 3 - 2)).collect();
            let map = CompactMap::new(scales.clone()).unwrap();
            let mut state = 0xfeedface0badf00du64;
            let mut next = move || {
                state ^= state << 13;
                state ^= state >> 7;
                state ^= state << 17;
                (state >> 11) as f64 / (1u64 << 53) as f64
            };
            for _ in 0..1000 {
                let x: Vec<f64> = (0..n).map(|i| next() * 100.0 * scales[i]).collect();
                let back = map.decompactify(&map.compactify(&x).unwrap()).unwrap();
                for i in 0..n {
                    assert!((back[i] - x[i]).abs() <= 1e-12 * x[i].abs().max(1e-300));
                }
            }
        }
    }

    fn linear_decay() -> FnSystem<impl Fn(&[f64], Control, &mut [f64]) -> Result<()> + Sync> {
        FnSystem::new(1, 1, |x, _u, out| {
            out[0] = -x[0];
            Ok(())
        })
    }

    #[test]
    fn transformed_rhs_scalar_decay() {
        let sys = Transformed::new(linear_decay(), CompactMap::new(vec![1.0]).unwrap()).unwrap();
        let mut out = [0.0];
        sys.rhs(&[0.5], Control(0), &mut out).unwrap();
        // (1-y)^2 / x_mid * f(y x_mid/(1-y)) = 0.25 * (-1)
        assert!((out[0] + 0.25).abs() < 1e-15);
    }

    #[test]
    fn transformed_constant_rhs_vanishes_toward_the_face() {
        let sys = FnSystem::new(1, 1, |_x, _u, out| {
            out[0] = 3.0;
            Ok(())
        });
        let sys = Transformed::new(sys, CompactMap::new(vec![1.0]).unwrap()).unwrap();
        let mut out = [0.0];
        let mut last = f64::INFINITY;
        for y in [0.9, 0.99, 0.999, 0.9999] {
            sys.rhs(&[y], Control(0), &mut out).unwrap();
            assert!(out[0] < last);
            last = out[0];
        }
        assert!(last < 1e-6);
    }

    #[test]
    fn transformed_errors_at_the_face_unless_registered() {
        let sys = Transformed::new(linear_decay(), CompactMap::new(vec![1.0]).unwrap()).unwrap();
        let mut out = [0.0];
        assert!(matches!(
            sys.rhs(&[1.0], Control(0), &mut out),
            Err(Error::Domain(_))
        ));

        let sys = Transformed::new(linear_decay(), CompactMap::new(vec![1.0]).unwrap())
            .unwrap()
            .with_boundary_fixed_point(vec![1.0])
            .unwrap();
        sys.rhs(&[1.0], Control(0), &mut out).unwrap();
        assert_eq!(out[0], 0.0);
    }

    #[test]
    fn homogenized_direction_and_norm() {
        let sys = FnSystem::new(2, 1, |_x, _u, out| {
            out.copy_from_slice(&[3.0, 4.0]);
            Ok(())
        });
        let h = Homogenized::new(sys, 1e-9).unwrap();
        let mut out = [0.0; 2];
        h.rhs(&[0.0, 0.0], Control(0), &mut out).unwrap();
        assert!((out[0] - 0.6).abs() < 1e-9);
        assert!((out[1] - 0.8).abs() < 1e-9);
        let norm = (out[0] * out[0] + out[1] * out[1]).sqrt();
        assert!(norm < 1.0 && norm > 1.0 - 1e-8);
    }

    #[test]
    fn homogenized_preserves_zeros_exactly() {
        let sys = FnSystem::new(2, 1, |x, _u, out| {
            out[0] = x[0] - 0.25;
            out[1] = 0.0;
            Ok(())
        });
        let h = Homogenized::new(sys, 1e-4).unwrap();
        let mut out = [0.0; 2];
        h.rhs(&[0.25, 0.9], Control(0), &mut out).unwrap();
        assert_eq!(out, [0.0, 0.0]);
    }

    #[test]
    fn homogenized_norm_is_half_when_norm_equals_epsilon() {
        let eps = 1e-3;
        let sys = FnSystem::new(1, 1, move |_x, _u, out| {
            out[0] = eps;
            Ok(())
        });
        let h = Homogenized::new(sys, eps).unwrap();
        let mut out = [0.0];
        h.rhs(&[0.0], Control(0), &mut out).unwrap();
        assert!((out[0] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn homogenized_epsilon_must_be_positive() {
        assert!(matches!(
            Homogenized::new(linear_decay(), 0.0),
            Err(Error::Parameter(_))
        ));
        assert!(matches!(
            Homogenized::new(linear_decay(), -1.0),
            Err(Error::Parameter(_))
        ));
    }

    #[test]
    fn homogenized_norm_bound_on_ays_samples() {
        use crate::dynamics::ays::{AysParams, AysTransformed};
        let sys = AysTransformed::new(AysParams::default()).unwrap();
        let eps = 1e-4;
        let h = Homogenized::new(&sys, eps).unwrap();
        let mut state = 99u64;
        let mut next = move || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            (state >> 11) as f64 / (1u64 << 53) as f64
        };
        let mut raw = [0.0; 3];
        let mut hom = [0.0; 3];
        for _ in 0..2000 {
            let y = [next(), next(), next()];
            for u in 0..4u16 {
                sys.rhs(&y, Control(u), &mut raw).unwrap();
                h.rhs(&y, Control(u), &mut hom).unwrap();
                let raw_norm = raw.iter().map(|v| v * v).sum::<f64>().sqrt();
                let hom_norm = hom.iter().map(|v| v * v).sum::<f64>().sqrt();
                assert!(hom_norm < 1.0);
                if raw_norm > 100.0 * eps {
                    assert!(hom_norm > 0.99, "norm {hom_norm} at {y:?}");
                }
            }
        }
    }
}
