//! The AYS low-complexity climate–economy model: excess atmospheric carbon
//! `A` (GtC), economic output `Y` (US$/a) and renewable knowledge stock `S`
//! (GJ), with low-growth and energy-transformation management options.

use crate::error::{Error, Result};
use crate::geometry::CompactMap;

use super::{Control, ControlledSystem};

/// Model parameters. Defaults reproduce the published parameterization.
#[derive(Debug, Clone, PartialEq)]
pub struct AysParams {
    /// Carbon uptake relaxation time (a).
    pub tau_a: f64,
    /// Knowledge depreciation time (a).
    pub tau_s: f64,
    /// Basic economic growth rate (1/a).
    pub beta: f64,
    /// Growth rate under the low-growth option (1/a).
    pub beta_lg: f64,
    /// Temperature sensitivity of growth (1/(GtC a)).
    pub theta: f64,
    /// Energy efficiency (US$/GJ).
    pub epsilon_energy: f64,
    /// Fossil fuel combustion efficiency (GJ/GtC).
    pub phi: f64,
    /// Break-even knowledge level (GJ).
    pub sigma: f64,
    /// Break-even level under the energy-transformation option (GJ).
    pub sigma_et: f64,
    /// Cost-convexity / learning exponent ratio (dimensionless).
    pub rho: f64,
    /// Compactification scales: the state mapped to (1/2, 1/2, 1/2).
    pub a_mid: f64,
    pub y_mid: f64,
    pub s_mid: f64,
    /// Climate-change planetary boundary on excess carbon (GtC).
    pub a_pb: f64,
    /// Social foundation on economic output (US$/a).
    pub y_sf: f64,
}

/// Estimated current state `(A, Y, S)`: 240 GtC, 7e13 US$/a, 5e11 GJ.
pub const CURRENT_STATE: [f64; 3] = [240.0, 7e13, 5e11];

impl Default for AysParams {
    fn default() -> Self {
        AysParams {
            tau_a: 50.0,
            tau_s: 50.0,
            beta: 0.03,
            beta_lg: 0.015,
            theta: 8.57e-5,
            epsilon_energy: 147.0,
            phi: 4.7e10,
            sigma: 4e12,
            sigma_et: 2.83e12,
            rho: 2.0,
            a_mid: CURRENT_STATE[0],
            y_mid: CURRENT_STATE[1],
            s_mid: CURRENT_STATE[2],
            a_pb: 345.0,
            y_sf: 4e13,
        }
    }
}

impl AysParams {
    /// All parameters must be strictly positive and finite. The management
    /// values `beta_lg` and `sigma_et` sit below their defaults in the
    /// nominal setup but may equal or exceed them in parameter sweeps, so
    /// only positivity is enforced here.
    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("tau_a", self.tau_a),
            ("tau_s", self.tau_s),
            ("beta", self.beta),
            ("beta_lg", self.beta_lg),
            ("theta", self.theta),
            ("epsilon_energy", self.epsilon_energy),
            ("phi", self.phi),
            ("sigma", self.sigma),
            ("sigma_et", self.sigma_et),
            ("rho", self.rho),
            ("a_mid", self.a_mid),
            ("y_mid", self.y_mid),
            ("s_mid", self.s_mid),
            ("a_pb", self.a_pb),
            ("y_sf", self.y_sf),
        ];
        for (name, v) in fields {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::parameter(format!(
                    "ays: {name} must be strictly positive and finite, got {v}"
                )));
            }
        }
        Ok(())
    }

    /// Compactification scales `(a_mid, y_mid, s_mid)`.
    pub fn compact_map(&self) -> CompactMap {
        CompactMap::new(vec![self.a_mid, self.y_mid, self.s_mid]).expect("validated scales")
    }

    /// True iff the state satisfies both the climate boundary (`A < A_PB`)
    /// and the social foundation (`Y > Y_SF`). Both inequalities are
    /// strict: boundary states count as undesirable.
    pub fn desirable(&self, x: &[f64]) -> bool {
        x[0] < self.a_pb && x[1] > self.y_sf
    }

    /// The desirability predicate in transformed coordinates. Thresholds
    /// transform along with the state, so this agrees with [`AysParams::desirable`]
    /// and stays evaluable on the closed faces of the unit cube.
    pub fn desirable_transformed(&self, y: &[f64]) -> bool {
        let a_pb_t = self.a_pb / (self.a_mid + self.a_pb);
        let y_sf_t = self.y_sf / (self.y_mid + self.y_sf);
        y[0] < a_pb_t && y[1] > y_sf_t
    }
}

/// Management options: the four corners of the option space.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AysControl {
    Default,
    LowGrowth,
    EnergyTransformation,
    Combined,
}

impl AysControl {
    pub const ALL: [AysControl; 4] = [
        AysControl::Default,
        AysControl::LowGrowth,
        AysControl::EnergyTransformation,
        AysControl::Combined,
    ];

    pub fn name(self) -> &'static str {
        match self {
            AysControl::Default => "default",
            AysControl::LowGrowth => "lg",
            AysControl::EnergyTransformation => "et",
            AysControl::Combined => "lg-et",
        }
    }

    pub fn parse(s: &str) -> Option<AysControl> {
        match s {
            "default" => Some(AysControl::Default),
            "lg" => Some(AysControl::LowGrowth),
            "et" => Some(AysControl::EnergyTransformation),
            "lg-et" | "et-lg" => Some(AysControl::Combined),
            _ => None,
        }
    }

    /// Effective `(beta, sigma)` under this option.
    pub fn effective(self, p: &AysParams) -> (f64, f64) {
        match self {
            AysControl::Default => (p.beta, p.sigma),
            AysControl::LowGrowth => (p.beta_lg, p.sigma),
            AysControl::EnergyTransformation => (p.beta, p.sigma_et),
            AysControl::Combined => (p.beta_lg, p.sigma_et),
        }
    }
}

/// A fixed point of the flow; `boundary` marks the formal point at
/// infinity (green attractor), representable only in transformed
/// coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FixedPoint {
    pub state: [f64; 3],
    pub boundary: bool,
}

/// Black fixed point `(beta_u/theta, phi eps beta_u/(theta tau_A), 0)` in
/// original coordinates, for the given management option.
pub fn black_fixed_point(p: &AysParams, c: AysControl) -> FixedPoint {
    let (beta, _) = c.effective(p);
    FixedPoint {
        state: [
            beta / p.theta,
            p.phi * p.epsilon_energy * beta / (p.theta * p.tau_a),
            0.0,
        ],
        boundary: false,
    }
}

/// Green fixed point `(0, +inf, +inf)`: decarbonized unbounded growth.
pub fn green_fixed_point() -> FixedPoint {
    FixedPoint {
        state: [0.0, f64::INFINITY, f64::INFINITY],
        boundary: true,
    }
}

/// Both fixed points of the flow under the given management option.
pub fn fixed_points(p: &AysParams, c: AysControl) -> Vec<FixedPoint> {
    vec![black_fixed_point(p, c), green_fixed_point()]
}

/// Black fixed point in transformed coordinates.
pub fn black_fixed_point_transformed(p: &AysParams, c: AysControl) -> [f64; 3] {
    let (beta, _) = c.effective(p);
    let peb = p.phi * p.epsilon_energy * beta;
    [
        beta / (beta + p.theta * p.a_mid),
        peb / (peb + p.y_mid * p.theta * p.tau_a),
        0.0,
    ]
}

/// Green fixed point in transformed coordinates: `(0, 1, 1)`.
pub const GREEN_FIXED_POINT_TRANSFORMED: [f64; 3] = [0.0, 1.0, 1.0];

#[inline]
fn pow_rho(x: f64, rho: f64) -> f64 {
    if rho == 2.0 {
        x * x
    } else {
        x.powf(rho)
    }
}

/// Raw right-hand side in original coordinates; no domain checks.
pub fn ays_rhs(p: &AysParams, x: &[f64], c: AysControl) -> [f64; 3] {
    let (beta, sigma) = c.effective(p);
    let (a, y, s) = (x[0], x[1], x[2]);
    let demand = y / p.epsilon_energy;
    let gamma = 1.0 / (1.0 + pow_rho(s / sigma, p.rho));
    let fossil = gamma * demand;
    let renewable = (1.0 - gamma) * demand;
    let emissions = fossil / p.phi;
    [
        emissions - a / p.tau_a,
        (beta - p.theta * a) * y,
        renewable - s / p.tau_s,
    ]
}

/// Raw right-hand side in transformed coordinates on the closed unit cube.
///
/// The green fixed point `(0, 1, 1)` maps to the zero vector by formal
/// extension. On the remaining closed faces the divergent factors are
/// evaluated with the coordinate pulled in by 1e-12, which preserves the
/// limiting direction; downstream time homogenization turns that into the
/// correct unit-speed extension.
pub fn ays_rhs_transformed(p: &AysParams, y: &[f64], c: AysControl) -> [f64; 3] {
    if y == GREEN_FIXED_POINT_TRANSFORMED {
        return [0.0, 0.0, 0.0];
    }
    const DELTA: f64 = 1e-12;
    let (beta, sigma) = c.effective(p);
    let a = y[0].min(1.0 - DELTA);
    let yy = y[1].min(1.0 - DELTA);
    let s = y[2].min(1.0 - DELTA);
    let one_s = 1.0 - s;
    let gamma = {
        let num = pow_rho(one_s, p.rho);
        num / (num + pow_rho(p.s_mid * s / sigma, p.rho))
    };
    let w = yy / (1.0 - yy);
    let k_a = p.y_mid / (p.phi * p.epsilon_energy * p.a_mid);
    let k_s = p.y_mid / (p.epsilon_energy * p.s_mid);
    let one_a = 1.0 - a;
    [
        k_a * gamma * one_a * one_a * w - a * one_a / p.tau_a,
        yy * (1.0 - yy) * (beta - p.theta * p.a_mid * a / one_a),
        k_s * (1.0 - gamma) * one_s * one_s * w - s * one_s / p.tau_s,
    ]
}

fn select_controls(controls: &[AysControl]) -> Result<Vec<AysControl>> {
    if controls.is_empty() {
        return Err(Error::usage("ays: control set must be nonempty"));
    }
    if controls[0] != AysControl::Default {
        return Err(Error::usage(
            "ays: the default control must come first in the control set",
        ));
    }
    for (i, c) in controls.iter().enumerate() {
        if controls[..i].contains(c) {
            return Err(Error::usage(format!("ays: duplicate control {:?}", c)));
        }
    }
    Ok(controls.to_vec())
}

/// The model on original coordinates `[0, inf)^3`.
pub struct AysOriginal {
    params: AysParams,
    controls: Vec<AysControl>,
}

impl AysOriginal {
    pub fn new(params: AysParams) -> Result<AysOriginal> {
        AysOriginal::with_controls(params, &AysControl::ALL)
    }

    pub fn with_controls(params: AysParams, controls: &[AysControl]) -> Result<AysOriginal> {
        params.validate()?;
        Ok(AysOriginal {
            params,
            controls: select_controls(controls)?,
        })
    }

    pub fn params(&self) -> &AysParams {
        &self.params
    }

    pub fn option(&self, u: Control) -> AysControl {
        self.controls[u.0 as usize]
    }
}

impl ControlledSystem for AysOriginal {
    fn dim(&self) -> usize {
        3
    }
    fn control_count(&self) -> usize {
        self.controls.len()
    }
    fn control_name(&self, u: Control) -> String {
        self.controls[u.0 as usize].name().to_string()
    }
    fn rhs(&self, x: &[f64], u: Control, out: &mut [f64]) -> Result<()> {
        self.check_control(u)?;
        for (i, &v) in x.iter().enumerate() {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::domain(format!(
                    "ays: state component {i} = {v} outside [0, inf)"
                )));
            }
        }
        out.copy_from_slice(&ays_rhs(&self.params, x, self.controls[u.0 as usize]));
        Ok(())
    }
}

/// The model on transformed coordinates, defined on the closed unit cube
/// with `(0, 1, 1)` registered as a boundary fixed point.
pub struct AysTransformed {
    params: AysParams,
    controls: Vec<AysControl>,
}

impl AysTransformed {
    pub fn new(params: AysParams) -> Result<AysTransformed> {
        AysTransformed::with_controls(params, &AysControl::ALL)
    }

    pub fn with_controls(params: AysParams, controls: &[AysControl]) -> Result<AysTransformed> {
        params.validate()?;
        Ok(AysTransformed {
            params,
            controls: select_controls(controls)?,
        })
    }

    pub fn params(&self) -> &AysParams {
        &self.params
    }

    pub fn option(&self, u: Control) -> AysControl {
        self.controls[u.0 as usize]
    }
}

impl ControlledSystem for AysTransformed {
    fn dim(&self) -> usize {
        3
    }
    fn control_count(&self) -> usize {
        self.controls.len()
    }
    fn control_name(&self, u: Control) -> String {
        self.controls[u.0 as usize].name().to_string()
    }
    fn rhs(&self, y: &[f64], u: Control, out: &mut [f64]) -> Result<()> {
        self.check_control(u)?;
        for (i, &v) in y.iter().enumerate() {
            if !v.is_finite() || !(0.0..=1.0).contains(&v) {
                return Err(Error::domain(format!(
                    "ays: transformed component {i} = {v} outside [0, 1]"
                )));
            }
        }
        out.copy_from_slice(&ays_rhs_transformed(
            &self.params,
            y,
            self.controls[u.0 as usize],
        ));
        Ok(())
    }
}
