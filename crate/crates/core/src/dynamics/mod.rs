//! Controlled-system abstraction plus the bundled climate–economy model.
//!
//! A controlled system is a right-hand-side evaluator `f(x, u)` over a
//! finite control set; control `0` is always the distinguished default
//! ("business as usual") control.

pub mod ays;

use crate::error::{Error, Result};

pub use ays::{AysControl, AysOriginal, AysParams, AysTransformed, FixedPoint};

/// Identifier of one control option: an index into the system's control set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Control(pub u16);

impl Control {
    pub const DEFAULT: Control = Control(0);
}

/// Right-hand side `ẋ = f(x, u)` over a finite control set.
///
/// Implementations must return a finite tangent vector for every in-domain
/// state; out-of-domain states yield a domain error.
pub trait ControlledSystem: Sync {
    fn dim(&self) -> usize;

    /// Number of controls; controls are identified as `Control(0..count)`,
    /// with `Control(0)` the default control.
    fn control_count(&self) -> usize;

    fn control_name(&self, u: Control) -> String {
        format!("u{}", u.0)
    }

    /// Writes `f(x, u)` into `out` (length `dim()`).
    fn rhs(&self, x: &[f64], u: Control, out: &mut [f64]) -> Result<()>;

    fn default_control(&self) -> Control {
        Control::DEFAULT
    }

    fn controls(&self) -> Vec<Control> {
        (0..self.control_count() as u16).map(Control).collect()
    }

    fn check_control(&self, u: Control) -> Result<()> {
        if (u.0 as usize) < self.control_count() {
            Ok(())
        } else {
            Err(Error::usage(format!(
                "control {} out of range (system has {})",
                u.0,
                self.control_count()
            )))
        }
    }
}

impl<S: ControlledSystem + ?Sized> ControlledSystem for &S {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn control_count(&self) -> usize {
        (**self).control_count()
    }
    fn control_name(&self, u: Control) -> String {
        (**self).control_name(u)
    }
    fn rhs(&self, x: &[f64], u: Control, out: &mut [f64]) -> Result<()> {
        (**self).rhs(x, u, out)
    }
}

/// Single-control system built from a plain function; handy for toy
/// dynamics in tests and demo configurations.
pub struct FnSystem<F> {
    dim: usize,
    controls: usize,
    f: F,
}

impl<F> FnSystem<F>
where
    F: Fn(&[f64], Control, &mut [f64]) -> Result<()> + Sync,
{
    pub fn new(dim: usize, controls: usize, f: F) -> FnSystem<F> {
        assert!(controls >= 1, "control set must be nonempty");
        FnSystem { dim, controls, f }
    }
}

impl<F> ControlledSystem for FnSystem<F>
where
    F: Fn(&[f64], Control, &mut [f64]) -> Result<()> + Sync,
{
    fn dim(&self) -> usize {
        self.dim
    }
    fn control_count(&self) -> usize {
        self.controls
    }
    fn rhs(&self, x: &[f64], u: Control, out: &mut [f64]) -> Result<()> {
        (self.f)(x, u, out)
    }
}

/// `ẋ = −x` on the half line; contracts onto the origin.
pub struct Decay1D;

impl ControlledSystem for Decay1D {
    fn dim(&self) -> usize {
        1
    }
    fn control_count(&self) -> usize {
        1
    }
    fn rhs(&self, x: &[f64], _u: Control, out: &mut [f64]) -> Result<()> {
        out[0] = -x[0];
        Ok(())
    }
}

/// `ẋ = +1`; every solution leaves any bounded interval.
pub struct Drift1D;

impl ControlledSystem for Drift1D {
    fn dim(&self) -> usize {
        1
    }
    fn control_count(&self) -> usize {
        1
    }
    fn rhs(&self, _x: &[f64], _u: Control, out: &mut [f64]) -> Result<()> {
        out[0] = 1.0;
        Ok(())
    }
}
