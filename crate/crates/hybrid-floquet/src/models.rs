//! Bundled hybrid systems with closed-form reference facts.
//!
//! Two models are provided. The forced vertical hopper: two masses joined by
//! an actuated linear spring, hopping over a ground plane with plastic impact
//! (the lower mass sticks, its velocity is zeroed) and lifting off when the
//! ground normal force reaches zero. And a single-domain unit-time cycle
//! whose reset applies a nilpotent matrix to a transverse block, so the
//! return map is linear with an exactly computable rank profile.

use crate::error::{Error, Result};
use crate::poincare::SectionDef;
use crate::system::{DomainDef, GuardDef, HybridSystemDef};
use serde::{Deserialize, Serialize};
use std::f64::consts::TAU;
use std::sync::Arc;

/// Parameters of the vertical hopper. Defaults are the reference
/// configuration (m, M, k, b, l0, a, omega, g) = (1, 2, 10, 5, 2, 20, 2π, 2).
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HopperParams {
    /// Lower (foot) mass.
    pub m: f64,
    /// Upper (body) mass.
    #[serde(rename = "M")]
    pub m_upper: f64,
    /// Spring stiffness.
    pub k: f64,
    /// Aerial drag coefficient on the lower mass.
    pub b: f64,
    /// Spring rest length.
    pub l0: f64,
    /// Actuator amplitude.
    pub a: f64,
    /// Forcing angular frequency.
    pub omega: f64,
    /// Gravity.
    pub g: f64,
}

impl Default for HopperParams {
    fn default() -> Self {
        Self {
            m: 1.0,
            m_upper: 2.0,
            k: 10.0,
            b: 5.0,
            l0: 2.0,
            a: 20.0,
            omega: TAU,
            g: 2.0,
        }
    }
}

impl HopperParams {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("m", self.m),
            ("M", self.m_upper),
            ("k", self.k),
            ("l0", self.l0),
            ("omega", self.omega),
            ("g", self.g),
        ] {
            if !(v > 0.0) {
                return Err(Error::Invalid(format!(
                    "hopper parameter {name} = {v} must be > 0"
                )));
            }
        }
        for (name, v) in [("a", self.a), ("b", self.b)] {
            if !(v >= 0.0) {
                return Err(Error::Invalid(format!(
                    "hopper parameter {name} = {v} must be >= 0"
                )));
            }
        }
        Ok(())
    }
}

pub const HOPPER_AERIAL: &str = "aerial";
pub const HOPPER_GROUND: &str = "ground";

/// Build the two-domain hopper.
///
/// Aerial domain (dim 5, state (phi, x, xdot, y, ydot)):
///   phi' = omega,
///   m x'' = -k l0 - a sin(phi) + k (y - x) - b xdot - g m,
///   M y'' = k l0 + a sin(phi) - k (y - x) - g M.
/// Ground domain (dim 3, state (phi, y, ydot)):
///   phi' = omega,
///   M y'' = k l0 + a sin(phi) - k y - g M.
///
/// Touchdown fires when x reaches 0 descending; the impact is plastic, the
/// reset keeps (phi, y, ydot) and discards (x, xdot). Liftoff fires when the
/// ground normal force N = k l0 + a sin(phi) - k y + g m reaches 0
/// descending; the reset injects x = xdot = 0. The phase wraps modulo 2π.
pub fn make_hopper(params: &HopperParams) -> Result<HybridSystemDef> {
    params.validate()?;
    let p = *params;

    let aerial_field = Arc::new(move |s: &[f64], out: &mut [f64]| {
        let (phi, x, xdot, y, ydot) = (s[0], s[1], s[2], s[3], s[4]);
        let spring = p.k * (y - x);
        out[0] = p.omega;
        out[1] = xdot;
        out[2] = (-p.k * p.l0 - p.a * phi.sin() + spring - p.b * xdot) / p.m - p.g;
        out[3] = ydot;
        out[4] = (p.k * p.l0 + p.a * phi.sin() - spring) / p.m_upper - p.g;
    });

    let ground_field = Arc::new(move |s: &[f64], out: &mut [f64]| {
        let (phi, y, _ydot) = (s[0], s[1], s[2]);
        out[0] = p.omega;
        out[1] = s[2];
        out[2] = (p.k * p.l0 + p.a * phi.sin() - p.k * y) / p.m_upper - p.g;
    });

    let normal_force = move |phi: f64, y: f64| p.k * p.l0 + p.a * phi.sin() - p.k * y + p.g * p.m;

    Ok(HybridSystemDef {
        domains: vec![
            DomainDef {
                id: HOPPER_AERIAL.into(),
                dim: 5,
                coord_names: vec![
                    "phi".into(),
                    "x".into(),
                    "xdot".into(),
                    "y".into(),
                    "ydot".into(),
                ],
                field: aerial_field,
                wrap: vec![(0, TAU)],
            },
            DomainDef {
                id: HOPPER_GROUND.into(),
                dim: 3,
                coord_names: vec!["phi".into(), "y".into(), "ydot".into()],
                field: ground_field,
                wrap: vec![(0, TAU)],
            },
        ],
        guards: vec![
            GuardDef {
                id: "touchdown".into(),
                src: HOPPER_AERIAL.into(),
                dst: HOPPER_GROUND.into(),
                event: Arc::new(|s: &[f64]| s[1]),
                reset: Arc::new(|s: &[f64]| vec![s[0], s[3], s[4]]),
            },
            GuardDef {
                id: "liftoff".into(),
                src: HOPPER_GROUND.into(),
                dst: HOPPER_AERIAL.into(),
                event: Arc::new(move |s: &[f64]| normal_force(s[0], s[1])),
                reset: Arc::new(|s: &[f64]| vec![s[0], 0.0, 0.0, s[1], s[2]]),
            },
        ],
    })
}

/// Signed phase distance to `phi0`, smooth at the crossing and gated to the
/// half-cycle containing it. With phi' = omega > 0 the value decreases
/// through zero exactly when the wrapped phase passes `phi0`, so a downward
/// crossing fires once per forcing period. Bisection needs the event to be
/// continuous near the crossing; the raw wrapped difference jumps there.
fn gated_phase_event(phi: f64, phi0: f64) -> f64 {
    let d = phi - phi0;
    if d.cos() > 0.0 {
        -d.sin()
    } else {
        -1.0
    }
}

/// The hopper's ground-domain section at phase zero: chart (y, ydot) with
/// lift u -> (0, u1, u2).
pub fn hopper_section() -> SectionDef {
    SectionDef {
        domain: HOPPER_GROUND.into(),
        event: Arc::new(|s: &[f64]| gated_phase_event(s[0], 0.0)),
        coords: Arc::new(|s: &[f64]| vec![s[1], s[2]]),
        lift: Arc::new(|u: &[f64]| vec![0.0, u[0], u[1]]),
        dim: 2,
    }
}

/// A phase section in the aerial domain at `phi0`, chart (x, xdot, y, ydot).
/// Used to compare spectra across sections; `phi0` should sit strictly
/// inside the orbit's aerial arc so nearby lifted states are valid.
pub fn hopper_aerial_section(phi0: f64) -> SectionDef {
    SectionDef {
        domain: HOPPER_AERIAL.into(),
        event: Arc::new(move |s: &[f64]| gated_phase_event(s[0], phi0)),
        coords: Arc::new(|s: &[f64]| vec![s[1], s[2], s[3], s[4]]),
        lift: Arc::new(move |u: &[f64]| vec![phi0, u[0], u[1], u[2], u[3]]),
        dim: 4,
    }
}

/// Parameters of the nilpotent-reset cycle. State (t, x, z) with
/// dim = 1 + k + l; the flow is t' = 1, x' = lambda_x (x - xi),
/// z_i' = lambda_z z_i, and at t = 1 the reset sends (1, x, z) to (0, x, Az)
/// with A nilpotent.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FloquetExampleParams {
    /// Dimension of the tangential x-block.
    pub k_dim: usize,
    /// Dimension of the transverse z-block.
    pub l_dim: usize,
    /// Nilpotent reset matrix (l_dim x l_dim, row major). Defaults to the
    /// single Jordan block with ones on the superdiagonal.
    #[serde(default)]
    pub a: Option<Vec<Vec<f64>>>,
    pub lambda_x: f64,
    pub lambda_z: f64,
    /// Fixed point of the x-block flow. Defaults to the origin.
    #[serde(default)]
    pub xi: Option<Vec<f64>>,
}

impl Default for FloquetExampleParams {
    fn default() -> Self {
        Self {
            k_dim: 2,
            l_dim: 2,
            a: None,
            lambda_x: -1.0,
            lambda_z: -1.0,
            xi: None,
        }
    }
}

pub const FLOQUET_DOMAIN: &str = "cycle";

fn jordan_nilpotent(l: usize) -> Vec<Vec<f64>> {
    let mut a = vec![vec![0.0; l]; l];
    for i in 0..l.saturating_sub(1) {
        a[i][i + 1] = 1.0;
    }
    a
}

fn mat_mul(a: &[Vec<f64>], b: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = a.len();
    let mut out = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..n {
            out[i][j] = (0..n).map(|t| a[i][t] * b[t][j]).sum();
        }
    }
    out
}

impl FloquetExampleParams {
    pub fn matrix(&self) -> Vec<Vec<f64>> {
        self.a.clone().unwrap_or_else(|| jordan_nilpotent(self.l_dim))
    }

    pub fn xi_vec(&self) -> Vec<f64> {
        self.xi.clone().unwrap_or_else(|| vec![0.0; self.k_dim])
    }

    pub fn validate(&self) -> Result<()> {
        if self.k_dim < 1 || self.l_dim < 1 {
            return Err(Error::Invalid(
                "k_dim and l_dim must both be at least 1".into(),
            ));
        }
        if !(self.lambda_x < 0.0 && self.lambda_z < 0.0) {
            return Err(Error::Invalid(format!(
                "lambda_x = {} and lambda_z = {} must be negative",
                self.lambda_x, self.lambda_z
            )));
        }
        let a = self.matrix();
        if a.len() != self.l_dim || a.iter().any(|row| row.len() != self.l_dim) {
            return Err(Error::Invalid(format!(
                "reset matrix must be {0}x{0}",
                self.l_dim
            )));
        }
        // A^l = 0 exactly, checked at construction.
        let mut power = a.clone();
        for _ in 1..self.l_dim {
            power = mat_mul(&power, &a);
        }
        if power.iter().flatten().any(|&v| v != 0.0) {
            return Err(Error::Invalid(
                "reset matrix is not nilpotent of index <= l_dim".into(),
            ));
        }
        if self.xi_vec().len() != self.k_dim {
            return Err(Error::Invalid(format!(
                "xi must have length k_dim = {}",
                self.k_dim
            )));
        }
        Ok(())
    }
}

/// Build the single-domain nilpotent-reset cycle. The return map on the
/// section t = 0 is closed form: (x, z) -> (e^{lambda_x} (x - xi) + xi,
/// e^{lambda_z} A z), so the z-block vanishes exactly after l_dim returns.
pub fn make_floquet_example(params: &FloquetExampleParams) -> Result<HybridSystemDef> {
    params.validate()?;
    let k = params.k_dim;
    let l = params.l_dim;
    let dim = 1 + k + l;
    let a = params.matrix();
    let xi = params.xi_vec();
    let (lx, lz) = (params.lambda_x, params.lambda_z);

    let field = Arc::new(move |s: &[f64], out: &mut [f64]| {
        out[0] = 1.0;
        for i in 0..k {
            out[1 + i] = lx * (s[1 + i] - xi[i]);
        }
        for i in 0..l {
            out[1 + k + i] = lz * s[1 + k + i];
        }
    });

    let reset_mat = a.clone();
    let reset = Arc::new(move |s: &[f64]| {
        let mut out = vec![0.0; 1 + k + l];
        out[1..1 + k].copy_from_slice(&s[1..1 + k]);
        for i in 0..l {
            out[1 + k + i] = (0..l).map(|j| reset_mat[i][j] * s[1 + k + j]).sum();
        }
        out
    });

    let mut coord_names = vec!["t".to_string()];
    coord_names.extend((1..=k).map(|i| format!("x{i}")));
    coord_names.extend((1..=l).map(|i| format!("z{i}")));

    Ok(HybridSystemDef {
        domains: vec![DomainDef {
            id: FLOQUET_DOMAIN.into(),
            dim,
            coord_names,
            field,
            wrap: vec![],
        }],
        guards: vec![GuardDef {
            id: "cycle_end".into(),
            src: FLOQUET_DOMAIN.into(),
            dst: FLOQUET_DOMAIN.into(),
            event: Arc::new(|s: &[f64]| 1.0 - s[0]),
            reset,
        }],
    })
}

/// Time section of the nilpotent-reset cycle at `t0` in [0, 1); chart drops
/// the clock coordinate. At t0 = 0 the return is reached exactly by the
/// reset, which lands on the section surface.
pub fn floquet_time_section(params: &FloquetExampleParams, t0: f64) -> SectionDef {
    let dim = params.k_dim + params.l_dim;
    SectionDef {
        domain: FLOQUET_DOMAIN.into(),
        event: Arc::new(move |s: &[f64]| t0 - s[0]),
        coords: Arc::new(|s: &[f64]| s[1..].to_vec()),
        lift: Arc::new(move |u: &[f64]| {
            let mut s = Vec::with_capacity(1 + u.len());
            s.push(t0);
            s.extend_from_slice(u);
            s
        }),
        dim,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::system::validate;

    #[test]
    fn default_hopper_is_valid() {
        let sys = make_hopper(&HopperParams::default()).unwrap();
        assert!(validate(&sys).is_empty());
    }

    #[test]
    fn default_floquet_example_is_valid() {
        let sys = make_floquet_example(&FloquetExampleParams::default()).unwrap();
        assert!(validate(&sys).is_empty());
    }

    #[test]
    fn unforced_ground_rest_point_is_an_equilibrium() {
        // a = 0: the rest height is y = l0 - g M / k = 2 - 0.4 = 1.6
        let params = HopperParams {
            a: 0.0,
            ..HopperParams::default()
        };
        let sys = make_hopper(&params).unwrap();
        let ground = sys.domain(HOPPER_GROUND).unwrap();
        let mut deriv = vec![0.0; 3];
        (ground.field)(&[0.3, 1.6, 0.0], &mut deriv);
        assert_eq!(deriv[0], params.omega);
        assert_eq!(deriv[1], 0.0);
        assert!(deriv[2].abs() < 1e-14);
    }

    #[test]
    fn liftoff_event_at_unforced_rest_is_positive() {
        // N = k l0 - k y + g m = 20 - 16 + 2 = 6 at the a = 0 rest state
        let params = HopperParams {
            a: 0.0,
            ..HopperParams::default()
        };
        let sys = make_hopper(&params).unwrap();
        let liftoff = sys.guards.iter().find(|g| g.id == "liftoff").unwrap();
        let n = (liftoff.event)(&[0.0, 1.6, 0.0]);
        assert!((n - 6.0).abs() < 1e-14);
    }

    #[test]
    fn springless_dragless_aerial_is_free_fall() {
        let params = HopperParams {
            k: 1e-300, // k must be positive; effectively zero
            b: 0.0,
            a: 0.0,
            ..HopperParams::default()
        };
        let sys = make_hopper(&params).unwrap();
        let aerial = sys.domain(HOPPER_AERIAL).unwrap();
        let mut deriv = vec![0.0; 5];
        (aerial.field)(&[1.0, 0.5, -0.2, 2.0, 0.1], &mut deriv);
        assert!((deriv[2] + params.g).abs() < 1e-13);
        assert!((deriv[4] + params.g).abs() < 1e-13);
    }

    #[test]
    fn touchdown_reset_keeps_phase_and_body_state() {
        let sys = make_hopper(&HopperParams::default()).unwrap();
        let touchdown = sys.guards.iter().find(|g| g.id == "touchdown").unwrap();
        let out = (touchdown.reset)(&[1.25, 0.0, -3.0, 2.5, -1.0]);
        assert_eq!(out, vec![1.25, 2.5, -1.0]);
    }

    #[test]
    fn liftoff_reset_injects_exact_zeros() {
        let sys = make_hopper(&HopperParams::default()).unwrap();
        let liftoff = sys.guards.iter().find(|g| g.id == "liftoff").unwrap();
        let out = (liftoff.reset)(&[0.75, 2.2, 1.9]);
        assert_eq!(out, vec![0.75, 0.0, 0.0, 2.2, 1.9]);
        assert_eq!(out[1].to_bits(), 0.0_f64.to_bits());
        assert_eq!(out[2].to_bits(), 0.0_f64.to_bits());
    }

    #[test]
    fn non_nilpotent_reset_matrix_is_rejected() {
        let params = FloquetExampleParams {
            a: Some(vec![vec![0.0, 1.0], vec![1.0, 0.0]]),
            ..FloquetExampleParams::default()
        };
        assert!(matches!(
            make_floquet_example(&params),
            Err(Error::Invalid(_))
        ));
    }

    #[test]
    fn jordan_default_is_nilpotent_of_index_l() {
        for l in 1..=4 {
            let params = FloquetExampleParams {
                l_dim: l,
                ..FloquetExampleParams::default()
            };
            params.validate().unwrap();
        }
    }

    #[test]
    fn floquet_reset_applies_the_matrix_to_z_only() {
        let sys = make_floquet_example(&FloquetExampleParams::default()).unwrap();
        let reset = &sys.guards[0].reset;
        let out = reset(&[1.0, 0.4, -0.3, 2.0, 5.0]);
        // A z = (z2, 0) for the Jordan block
        assert_eq!(out, vec![0.0, 0.4, -0.3, 5.0, 0.0]);
    }

    #[test]
    fn hopper_section_chart_roundtrip() {
        let section = hopper_section();
        let lifted = (section.lift)(&[1.96, 1.88]);
        assert_eq!(lifted, vec![0.0, 1.96, 1.88]);
        assert_eq!((section.coords)(&lifted), vec![1.96, 1.88]);
        assert_eq!((section.event)(&lifted), 0.0);
    }

    #[test]
    fn gated_event_is_negative_on_far_half_cycle() {
        assert_eq!(gated_phase_event(std::f64::consts::PI, 0.0), -1.0);
        assert!(gated_phase_event(0.1, 0.0) < 0.0);
        assert!(gated_phase_event(TAU - 0.1, 0.0) > 0.0);
    }

    #[test]
    fn negative_parameters_are_rejected() {
        let params = HopperParams {
            k: -1.0,
            ..HopperParams::default()
        };
        assert!(make_hopper(&params).is_err());
        let params = FloquetExampleParams {
            lambda_x: 0.5,
            ..FloquetExampleParams::default()
        };
        assert!(make_floquet_example(&params).is_err());
    }
}
