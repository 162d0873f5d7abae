//! Single-domain integration with guard-crossing detection.
//!
//! Fixed-step explicit integration (RK4 by default, Euler for configuration
//! parity with step size 1e-3) samples every guard event at each accepted
//! step. A sign change from positive to non-positive brackets a crossing; the
//! crossing is refined by bisection on the time bracket until both the event
//! residual and the bracket width meet their tolerances. Every located
//! crossing is checked for transversality: the finite-difference derivative of
//! the event value along the flow must be strictly negative with magnitude at
//! least `tangency_threshold`.
//!
//! Guards must not change sign twice within one step `h`; callers for whom
//! this can happen must reduce `h`. Wrapped coordinates are reduced after each
//! accepted step, so event functions must be periodic in wrapped coordinates.

use crate::error::{Error, Result};
use crate::system::{all_finite, DomainDef, EventFn, FieldFn, GuardDef, HybridSystemDef, StateVec};
use serde::{Deserialize, Serialize};

/// Explicit integration scheme.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    #[default]
    Rk4,
    Euler,
}

/// Integrator and event-location parameters.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct StepperConfig {
    pub method: Method,
    /// Step size.
    pub h: f64,
    /// Tolerance on |event value| at a located crossing.
    pub event_tol_g: f64,
    /// Tolerance on the crossing-time bracket width.
    pub event_tol_t: f64,
    /// Minimum |d(event)/dt| at a crossing; below this the crossing is
    /// reported as tangential.
    pub tangency_threshold: f64,
}

impl Default for StepperConfig {
    fn default() -> Self {
        Self {
            method: Method::Rk4,
            h: 1e-3,
            event_tol_g: 1e-12,
            event_tol_t: 1e-12,
            tangency_threshold: 1e-8,
        }
    }
}

impl StepperConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.h > 0.0) {
            return Err(Error::Invalid(format!("step size h = {} must be > 0", self.h)));
        }
        for (name, v) in [
            ("event_tol_g", self.event_tol_g),
            ("event_tol_t", self.event_tol_t),
            ("tangency_threshold", self.tangency_threshold),
        ] {
            if !(v > 0.0) {
                return Err(Error::Invalid(format!("{name} = {v} must be > 0")));
            }
        }
        Ok(())
    }
}

/// A located guard crossing.
#[derive(Clone, Debug)]
pub struct ImpactResult {
    pub guard_id: String,
    /// Time from the initial state to the crossing.
    pub eta: f64,
    /// State on the guard surface, |event| <= event_tol_g.
    pub exit_state: StateVec,
}

/// Time offset used for the finite-difference transversality probe.
const TANGENCY_FD_DT: f64 = 1e-6;
/// Bisection iteration cap; the bracket reaches f64 resolution long before.
const BISECT_MAX_ITER: usize = 200;
/// A section event must rise above this many `event_tol_g` before a new
/// downward crossing may fire (refractory exclusion of the departure).
const SECTION_ARM_FACTOR: f64 = 10.0;

/// One explicit integration step. Local error is O(h^5) for RK4 and O(h^2)
/// for Euler. Wrapping is not applied.
pub fn step(field: &FieldFn, state: &[f64], h: f64, method: Method) -> Result<StateVec> {
    let n = state.len();
    let mut out = vec![0.0; n];
    match method {
        Method::Euler => {
            let mut k1 = vec![0.0; n];
            field(state, &mut k1);
            for i in 0..n {
                out[i] = state[i] + h * k1[i];
            }
        }
        Method::Rk4 => {
            let mut k1 = vec![0.0; n];
            let mut k2 = vec![0.0; n];
            let mut k3 = vec![0.0; n];
            let mut k4 = vec![0.0; n];
            let mut tmp = vec![0.0; n];
            field(state, &mut k1);
            for i in 0..n {
                tmp[i] = state[i] + 0.5 * h * k1[i];
            }
            field(&tmp, &mut k2);
            for i in 0..n {
                tmp[i] = state[i] + 0.5 * h * k2[i];
            }
            field(&tmp, &mut k3);
            for i in 0..n {
                tmp[i] = state[i] + h * k3[i];
            }
            field(&tmp, &mut k4);
            for i in 0..n {
                out[i] = state[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
            }
        }
    }
    if !all_finite(&out) {
        return Err(Error::NonFiniteState {
            domain: "step".into(),
            t: 0.0,
        });
    }
    Ok(out)
}

fn wrap_state(state: &mut [f64], wrap: &[(usize, f64)]) {
    for &(idx, period) in wrap {
        state[idx] = state[idx].rem_euclid(period);
    }
}

/// Single-domain integration context.
pub(crate) struct DomainFlow<'a> {
    pub domain: &'a DomainDef,
    pub cfg: &'a StepperConfig,
}

impl<'a> DomainFlow<'a> {
    pub fn new(domain: &'a DomainDef, cfg: &'a StepperConfig) -> Self {
        Self { domain, cfg }
    }

    /// One step of size `dt` from `state` with wrapping and finiteness check.
    /// `dt` may be negative (used only by the transversality probe).
    fn substep(&self, state: &[f64], dt: f64, t_for_error: f64) -> Result<StateVec> {
        let mut s = step(&self.domain.field, state, dt, self.cfg.method).map_err(|_| {
            Error::NonFiniteState {
                domain: self.domain.id.clone(),
                t: t_for_error,
            }
        })?;
        wrap_state(&mut s, &self.domain.wrap);
        Ok(s)
    }

    /// Flow for a total duration `tau >= 0` with accepted steps of size `h`
    /// plus one final partial step. No event monitoring.
    pub fn flow_for(&self, state: &[f64], tau: f64) -> Result<StateVec> {
        let mut s = state.to_vec();
        let mut t = 0.0;
        while t < tau {
            let dt = self.cfg.h.min(tau - t);
            s = self.substep(&s, dt, t)?;
            t += dt;
        }
        Ok(s)
    }
}

/// Section watcher threaded through an arc by the return-map machinery.
/// `armed` persists across arcs of one return-map execution.
pub(crate) struct SectionWatch<'a> {
    pub id: &'a str,
    pub event: &'a EventFn,
    pub armed: &'a mut bool,
}

/// How an arc of single-domain flow ended.
pub(crate) enum ArcEnd {
    /// Reached the local time limit without any crossing.
    TimeLimit { state: StateVec },
    /// A guard fired. `guard_idx` indexes the guard slice passed in.
    Impact {
        guard_idx: usize,
        eta: f64,
        state: StateVec,
    },
    /// The watched section fired strictly before any guard.
    SectionHit { eta: f64, state: StateVec },
}

pub(crate) struct ArcResult {
    /// (local time, state) at the initial point, every accepted step, and the
    /// exact end point.
    pub samples: Vec<(f64, StateVec)>,
    pub end: ArcEnd,
}

struct Crossing {
    eta: f64,
    state: StateVec,
    /// index into `guards`, or usize::MAX for the section
    source: usize,
}

/// Integrate one arc in a single domain, watching guards (and optionally a
/// section event) for downward crossings. Local time starts at 0.
pub(crate) fn flow_arc(
    df: &DomainFlow,
    guards: &[&GuardDef],
    mut section: Option<&mut SectionWatch>,
    state0: &[f64],
    t_limit: f64,
    record_samples: bool,
) -> Result<ArcResult> {
    let domain_id = &df.domain.id;
    if state0.len() != df.domain.dim {
        return Err(Error::Invalid(format!(
            "state length {} does not match dimension {} of domain `{}`",
            state0.len(),
            df.domain.dim,
            domain_id
        )));
    }
    if !all_finite(state0) {
        return Err(Error::NonFiniteState {
            domain: domain_id.clone(),
            t: 0.0,
        });
    }

    let tol_g = df.cfg.event_tol_g;
    let tol_t = df.cfg.event_tol_t;
    let h = df.cfg.h;

    let mut g_prev: Vec<f64> = guards.iter().map(|g| (g.event)(state0)).collect();
    // States exactly on a guard surface are accepted only if the flow moves
    // the event value positive within one step; strictly negative starts are
    // outside the flow set and rejected as tangency violations up front.
    let mut on_surface = vec![false; guards.len()];
    for (i, &g0) in g_prev.iter().enumerate() {
        if g0 < -tol_g {
            return Err(Error::Tangency {
                domain: domain_id.clone(),
                event_id: guards[i].id.clone(),
                derivative: event_slope(df, state0, &guards[i].event, 0.0)?,
                threshold: df.cfg.tangency_threshold,
            });
        }
        if g0 <= tol_g {
            on_surface[i] = true;
        }
    }

    let mut sec_prev = if let Some(sec) = section.as_deref_mut() {
        let v = (sec.event)(state0);
        if v > SECTION_ARM_FACTOR * tol_g {
            *sec.armed = true;
        }
        Some(v)
    } else {
        None
    };

    let mut samples: Vec<(f64, StateVec)> = Vec::new();
    samples.push((0.0, state0.to_vec()));

    let mut state = state0.to_vec();
    let mut t = 0.0_f64;

    if t_limit <= 0.0 {
        return Ok(ArcResult {
            samples,
            end: ArcEnd::TimeLimit { state },
        });
    }

    loop {
        let dt = h.min(t_limit - t);
        let is_final = t + dt >= t_limit;
        let s_new = df.substep(&state, dt, t)?;

        let mut crossings: Vec<Crossing> = Vec::new();
        let mut first_step_clear = Vec::new();

        for (i, guard) in guards.iter().enumerate() {
            let g_new = (guard.event)(&s_new);
            if on_surface[i] {
                if g_new <= 0.0 {
                    return Err(Error::Tangency {
                        domain: domain_id.clone(),
                        event_id: guard.id.clone(),
                        derivative: event_slope(df, &state, &guard.event, 0.0)?,
                        threshold: df.cfg.tangency_threshold,
                    });
                }
                first_step_clear.push(i);
            } else if g_prev[i] > 0.0 && g_new <= 0.0 {
                let (eta_rel, cross_state, _) = bisect_crossing(
                    |frac| {
                        let s = df.substep(&state, frac, t)?;
                        let v = (guard.event)(&s);
                        Ok((s, v))
                    },
                    0.0,
                    g_prev[i],
                    dt,
                    g_new,
                    tol_t,
                    tol_g,
                    &guard.id,
                )?;
                crossings.push(Crossing {
                    eta: t + eta_rel,
                    state: cross_state,
                    source: i,
                });
            } else if is_final && g_new.abs() <= tol_g {
                // The horizon lands exactly on a crossing: fire the guard
                // deterministically rather than leaving the outcome to the
                // last-ulp sign of the event value.
                let slope = event_slope(df, &state, &guard.event, dt)?;
                if slope < 0.0 && slope.abs() >= df.cfg.tangency_threshold {
                    crossings.push(Crossing {
                        eta: t + dt,
                        state: s_new.clone(),
                        source: i,
                    });
                }
            }
            g_prev[i] = g_new;
        }
        for i in first_step_clear {
            on_surface[i] = false;
        }

        if let (Some(sec), Some(prev)) = (section.as_deref_mut(), sec_prev.as_mut()) {
            let g_new = (sec.event)(&s_new);
            if *sec.armed && *prev > 0.0 && g_new <= 0.0 {
                let (eta_rel, cross_state, _) = bisect_crossing(
                    |frac| {
                        let s = df.substep(&state, frac, t)?;
                        let v = (sec.event)(&s);
                        Ok((s, v))
                    },
                    0.0,
                    *prev,
                    dt,
                    g_new,
                    tol_t,
                    tol_g,
                    sec.id,
                )?;
                crossings.push(Crossing {
                    eta: t + eta_rel,
                    state: cross_state,
                    source: usize::MAX,
                });
            }
            if g_new > SECTION_ARM_FACTOR * tol_g {
                *sec.armed = true;
            }
            *prev = g_new;
        }

        if !crossings.is_empty() {
            // Earliest crossing wins; guards beat the section on ties (and
            // within the bracket tolerance), and declaration order breaks
            // ties among guards.
            let best_guard = crossings
                .iter()
                .filter(|c| c.source != usize::MAX)
                .min_by(|a, b| a.eta.total_cmp(&b.eta).then(a.source.cmp(&b.source)));
            let best_section = crossings.iter().find(|c| c.source == usize::MAX);
            let winner = match (best_guard, best_section) {
                (Some(g), Some(s)) if s.eta < g.eta - tol_t => s,
                (Some(g), _) => g,
                (None, Some(s)) => s,
                (None, None) => unreachable!(),
            };

            if winner.source != usize::MAX {
                let guard = guards[winner.source];
                let slope = event_slope(df, &state, &guard.event, winner.eta - t)?;
                if !(slope < 0.0 && slope.abs() >= df.cfg.tangency_threshold) {
                    return Err(Error::Tangency {
                        domain: domain_id.clone(),
                        event_id: guard.id.clone(),
                        derivative: slope,
                        threshold: df.cfg.tangency_threshold,
                    });
                }
                samples.push((winner.eta, winner.state.clone()));
                return Ok(ArcResult {
                    samples: finish_samples(samples, record_samples),
                    end: ArcEnd::Impact {
                        guard_idx: winner.source,
                        eta: winner.eta,
                        state: winner.state.clone(),
                    },
                });
            } else {
                let sec = section.as_deref_mut().expect("section crossing without watcher");
                let slope = event_slope(df, &state, sec.event, winner.eta - t)?;
                if !(slope < 0.0 && slope.abs() >= df.cfg.tangency_threshold) {
                    return Err(Error::Tangency {
                        domain: domain_id.clone(),
                        event_id: sec.id.to_string(),
                        derivative: slope,
                        threshold: df.cfg.tangency_threshold,
                    });
                }
                *sec.armed = false;
                samples.push((winner.eta, winner.state.clone()));
                return Ok(ArcResult {
                    samples: finish_samples(samples, record_samples),
                    end: ArcEnd::SectionHit {
                        eta: winner.eta,
                        state: winner.state.clone(),
                    },
                });
            }
        }

        state = s_new;
        t += dt;
        samples.push((t, state.clone()));
        if is_final {
            return Ok(ArcResult {
                samples: finish_samples(samples, record_samples),
                end: ArcEnd::TimeLimit { state },
            });
        }
    }
}

/// Keep only the first and last samples when the caller does not want the
/// full trajectory.
fn finish_samples(samples: Vec<(f64, StateVec)>, record: bool) -> Vec<(f64, StateVec)> {
    if record || samples.len() <= 2 {
        samples
    } else {
        let last = samples.len() - 1;
        vec![samples[0].clone(), samples[last].clone()]
    }
}

/// Finite-difference derivative of an event value along the flow at local
/// time offset `at` from `state`.
fn event_slope(df: &DomainFlow, state: &[f64], event: &EventFn, at: f64) -> Result<f64> {
    let sp = df.substep(state, at + TANGENCY_FD_DT, at)?;
    let sm = df.substep(state, at - TANGENCY_FD_DT, at)?;
    Ok((event(&sp) - event(&sm)) / (2.0 * TANGENCY_FD_DT))
}

/// Bisection refinement of a bracketed downward crossing.
///
/// `probe(dt)` returns the state and event value one partial step of size
/// `dt` from the bracket's base state. Requires `ga > 0 >= gb`. Returns the
/// last-evaluated midpoint, which lies inside every bracket produced, once
/// the bracket width is at most `tol_t` and the event residual at most
/// `tol_g`.
pub(crate) fn bisect_crossing<F>(
    probe: F,
    mut a: f64,
    _ga: f64,
    mut b: f64,
    gb: f64,
    tol_t: f64,
    tol_g: f64,
    event_id: &str,
) -> Result<(f64, StateVec, f64)>
where
    F: Fn(f64) -> Result<(StateVec, f64)>,
{
    if gb.abs() <= tol_g && (b - a) <= tol_t {
        let (state, g) = probe(b)?;
        return Ok((b, state, g));
    }
    let mut answer: Option<(f64, StateVec, f64)> = None;
    for _ in 0..BISECT_MAX_ITER {
        let m = 0.5 * (a + b);
        let (sm, gm) = probe(m)?;
        answer = Some((m, sm, gm));
        if gm > 0.0 {
            a = m;
        } else {
            b = m;
        }
        if (b - a) <= tol_t && gm.abs() <= tol_g {
            let (t, s, g) = answer.unwrap();
            return Ok((t, s, g));
        }
    }
    let residual = answer.map(|(_, _, g)| g.abs()).unwrap_or(f64::NAN);
    Err(Error::EventRefinement {
        event_id: event_id.to_string(),
        residual,
        tol: tol_g,
    })
}

/// Flow from `state` in `domain_id` until the earliest guard crossing.
///
/// The initial state must lie in the flow set of every guard of the domain
/// (all event values positive), or exactly on one guard surface moving
/// inward. Returns the earliest-firing guard with its time-to-impact and the
/// refined crossing state; `NoImpact` if `t_max` elapses with no sign change.
pub fn time_to_impact(
    system: &HybridSystemDef,
    domain_id: &str,
    state: &[f64],
    cfg: &StepperConfig,
    t_max: f64,
) -> Result<ImpactResult> {
    cfg.validate()?;
    let domain = system
        .domain(domain_id)
        .ok_or_else(|| Error::Invalid(format!("unknown domain `{domain_id}`")))?;
    let guards = system.guards_from(domain_id);
    let df = DomainFlow::new(domain, cfg);
    let arc = flow_arc(&df, &guards, None, state, t_max, false)?;
    match arc.end {
        ArcEnd::Impact {
            guard_idx,
            eta,
            state,
        } => {
            debug_assert!((guards[guard_idx].event)(&state).abs() <= cfg.event_tol_g);
            Ok(ImpactResult {
                guard_id: guards[guard_idx].id.clone(),
                eta,
                exit_state: state,
            })
        }
        ArcEnd::TimeLimit { .. } => Err(Error::NoImpact {
            domain: domain_id.to_string(),
            t_max,
        }),
        ArcEnd::SectionHit { .. } => unreachable!("no section watcher installed"),
    }
}

/// Trajectory samples at normalized times: position `sigma` in [0, 1] along
/// the arc from `state` to its guard crossing, i.e. the flow evaluated at
/// `eta * sigma`. `sigma = 0` returns the input and `sigma = 1` the impact
/// state, both bitwise.
pub fn sample_normalized(
    system: &HybridSystemDef,
    domain_id: &str,
    state: &[f64],
    cfg: &StepperConfig,
    sigma_grid: &[f64],
    t_max: f64,
) -> Result<Vec<StateVec>> {
    for &s in sigma_grid {
        if !(0.0..=1.0).contains(&s) {
            return Err(Error::Invalid(format!(
                "sigma = {s} outside the unit interval"
            )));
        }
    }
    let impact = time_to_impact(system, domain_id, state, cfg, t_max)?;
    let domain = system.domain(domain_id).expect("domain checked above");
    let df = DomainFlow::new(domain, cfg);
    let mut out = Vec::with_capacity(sigma_grid.len());
    for &sigma in sigma_grid {
        if sigma == 0.0 {
            out.push(state.to_vec());
        } else if sigma == 1.0 {
            out.push(impact.exit_state.clone());
        } else {
            out.push(df.flow_for(state, impact.eta * sigma)?);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::system::{DomainDef, GuardDef, HybridSystemDef};
    use std::cell::RefCell;
    use std::sync::Arc;

    fn one_domain(
        dim: usize,
        field: impl Fn(&[f64], &mut [f64]) + Send + Sync + 'static,
        event: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
    ) -> HybridSystemDef {
        HybridSystemDef {
            domains: vec![DomainDef {
                id: "d".into(),
                dim,
                coord_names: (0..dim).map(|i| format!("x{i}")).collect(),
                field: Arc::new(field),
                wrap: vec![],
            }],
            guards: vec![GuardDef {
                id: "g".into(),
                src: "d".into(),
                dst: "d".into(),
                event: Arc::new(event),
                reset: Arc::new(|s: &[f64]| s.to_vec()),
            }],
        }
    }

    /// Free fall with g = 2: y'' = -2 from (y, v) = (1, 0) hits y = 0 at t = 1.
    fn free_fall() -> HybridSystemDef {
        one_domain(
            2,
            |s, out| {
                out[0] = s[1];
                out[1] = -2.0;
            },
            |s| s[0],
        )
    }

    #[test]
    fn rk4_step_matches_exponential() {
        let field: FieldFn = Arc::new(|s, out| out[0] = -s[0]);
        let s = step(&field, &[1.0], 0.1, Method::Rk4).unwrap();
        assert!((s[0] - (-0.1_f64).exp()).abs() < 1e-7);
    }

    #[test]
    fn zero_field_is_identity() {
        let field: FieldFn = Arc::new(|_s, out| out.fill(0.0));
        let s0 = vec![3.25, -1.5, 0.0];
        let s = step(&field, &s0, 0.7, Method::Rk4).unwrap();
        assert_eq!(s, s0);
        let s = step(&field, &s0, 0.7, Method::Euler).unwrap();
        assert_eq!(s, s0);
    }

    #[test]
    fn non_finite_output_is_an_error() {
        let field: FieldFn = Arc::new(|s, out| out[0] = 1.0 / (s[0] - s[0]));
        assert!(matches!(
            step(&field, &[1.0], 0.1, Method::Euler),
            Err(Error::NonFiniteState { .. })
        ));
    }

    #[test]
    fn free_fall_impact_time() {
        let sys = free_fall();
        let cfg = StepperConfig::default();
        let imp = time_to_impact(&sys, "d", &[1.0, 0.0], &cfg, 10.0).unwrap();
        assert_eq!(imp.guard_id, "g");
        assert!((imp.eta - 1.0).abs() <= 1e-9, "eta = {}", imp.eta);
        assert!(imp.exit_state[0].abs() <= cfg.event_tol_g);
    }

    #[test]
    fn unit_clock_impact_time() {
        let sys = one_domain(1, |_s, out| out[0] = 1.0, |s| 1.0 - s[0]);
        let cfg = StepperConfig::default();
        let imp = time_to_impact(&sys, "d", &[0.0], &cfg, 5.0).unwrap();
        assert!((imp.eta - 1.0).abs() <= 1e-11);
    }

    #[test]
    fn no_impact_when_moving_away() {
        let sys = free_fall();
        let cfg = StepperConfig::default();
        // strong upward launch never returns within the horizon
        let err = time_to_impact(&sys, "d", &[1.0, 10.0], &cfg, 0.5).unwrap_err();
        assert!(matches!(err, Error::NoImpact { .. }));
    }

    #[test]
    fn grazing_crossing_is_tangency() {
        // event (1 - t)^3 crosses zero with vanishing derivative
        let sys = one_domain(1, |_s, out| out[0] = 1.0, |s| (1.0 - s[0]).powi(3));
        let cfg = StepperConfig::default();
        let err = time_to_impact(&sys, "d", &[0.0], &cfg, 5.0).unwrap_err();
        match err {
            Error::Tangency { derivative, .. } => assert!(derivative.abs() < 1e-8),
            other => panic!("expected Tangency, got {other:?}"),
        }
    }

    #[test]
    fn on_surface_moving_inward_is_accepted() {
        let sys = free_fall();
        let cfg = StepperConfig::default();
        // starts exactly on y = 0 moving up; falls back at t = v0
        let imp = time_to_impact(&sys, "d", &[0.0, 2.0], &cfg, 10.0).unwrap();
        assert!((imp.eta - 2.0).abs() <= 1e-9);
    }

    #[test]
    fn on_surface_moving_outward_is_tangency() {
        let sys = free_fall();
        let cfg = StepperConfig::default();
        let err = time_to_impact(&sys, "d", &[0.0, -1.0], &cfg, 10.0).unwrap_err();
        assert!(matches!(err, Error::Tangency { .. }));
    }

    #[test]
    fn outside_flow_set_is_rejected() {
        let sys = free_fall();
        let cfg = StepperConfig::default();
        let err = time_to_impact(&sys, "d", &[-0.5, 0.0], &cfg, 10.0).unwrap_err();
        assert!(matches!(err, Error::Tangency { .. }));
    }

    #[test]
    fn halving_h_changes_eta_at_fourth_order() {
        // oscillator y'' = -2 - 16 y from (1, 0); smooth, non-polynomial flow
        let sys = one_domain(
            2,
            |s, out| {
                out[0] = s[1];
                out[1] = -2.0 - 16.0 * s[0];
            },
            |s| s[0],
        );
        let eta_for = |h: f64| {
            let cfg = StepperConfig {
                h,
                event_tol_g: 1e-13,
                event_tol_t: 1e-13,
                ..StepperConfig::default()
            };
            time_to_impact(&sys, "d", &[1.0, 0.0], &cfg, 10.0).unwrap().eta
        };
        let e1 = eta_for(1e-2);
        let e2 = eta_for(5e-3);
        let e3 = eta_for(2.5e-3);
        let order = ((e1 - e2).abs() / (e2 - e3).abs()).log2();
        assert!(
            (3.3..=4.7).contains(&order),
            "observed convergence order {order}"
        );
        // exact crossing: 1.125 cos(4t) = 0.125
        let exact = (1.0_f64 / 9.0).acos() / 4.0;
        assert!((e3 - exact).abs() < 1e-10);
    }

    #[test]
    fn bisection_stays_inside_every_bracket() {
        let calls = RefCell::new(Vec::new());
        let probe = |dt: f64| {
            calls.borrow_mut().push(dt);
            Ok((vec![dt], 0.637 - dt))
        };
        let (t, _, g) = bisect_crossing(probe, 0.0, 0.637, 1.0, -0.363, 1e-12, 1e-12, "e").unwrap();
        assert!((t - 0.637).abs() <= 1e-12);
        assert!(g.abs() <= 1e-12);
        // replay the probes to rebuild the nested brackets and check that the
        // answer lies inside all of them
        let (mut a, mut b) = (0.0_f64, 1.0_f64);
        for &m in calls.borrow().iter() {
            assert!(t >= a && t <= b, "answer {t} escaped bracket [{a}, {b}]");
            if 0.637 - m > 0.0 {
                a = m;
            } else {
                b = m;
            }
        }
    }

    #[test]
    fn normalized_samples_hit_endpoints_bitwise() {
        let sys = free_fall();
        let cfg = StepperConfig::default();
        let state = vec![1.0, 0.0];
        let imp = time_to_impact(&sys, "d", &state, &cfg, 10.0).unwrap();
        let out = sample_normalized(&sys, "d", &state, &cfg, &[0.0, 0.5, 1.0], 10.0).unwrap();
        assert_eq!(out[0], state);
        assert_eq!(out[2], imp.exit_state);
        // closed form: y(eta/2) = 1 - 2 (0.5)^2 / 2 = 0.75
        assert!((out[1][0] - 0.75).abs() <= 1e-8);
    }

    #[test]
    fn sigma_outside_unit_interval_is_invalid() {
        let sys = free_fall();
        let cfg = StepperConfig::default();
        let err = sample_normalized(&sys, "d", &[1.0, 0.0], &cfg, &[1.5], 10.0).unwrap_err();
        assert!(matches!(err, Error::Invalid(_)));
    }

    #[test]
    fn euler_parity_configuration_runs() {
        let sys = free_fall();
        let cfg = StepperConfig {
            method: Method::Euler,
            ..StepperConfig::default()
        };
        let imp = time_to_impact(&sys, "d", &[1.0, 0.0], &cfg, 10.0).unwrap();
        // Euler at h = 1e-3 locates the impact to O(h)
        assert!((imp.eta - 1.0).abs() < 5e-3);
    }
}
