//! Poincaré sections, return maps, per-domain step maps, fixed points, and
//! finite-difference linearization.
//!
//! Return maps are computed by direct hybrid execution from the lifted
//! section point, not by composing per-domain maps; the per-domain step maps
//! exist separately so that the composition identity around a cycle is a
//! testable statement about the event machinery rather than a definition.
//!
//! A return fires in two ways. A smooth downward crossing of the section
//! event inside the section's domain counts once the event value has first
//! risen above a small arming band (ten times the event tolerance), which
//! excludes re-detection of the departure. A reset can also land exactly on
//! the section surface — entry sections are reached this way — so a
//! transition into the section's domain whose arrival state has |event| at
//! most the event tolerance counts as a return as well, provided time has
//! advanced.

use crate::error::{Error, Result};
use crate::exec::{Limits, Termination};
use crate::flow::{flow_arc, ArcEnd, DomainFlow, SectionWatch, StepperConfig};
use crate::system::{EventFn, HybridSystemDef, PeriodicOrbitResult, StateVec};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use std::sync::Arc;

/// Chart callable between section coordinates and the ambient domain chart.
pub type ChartFn = Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>;

/// A codimension-1 Poincaré section with a chart.
///
/// The section is the zero set of `event` inside `domain`; crossings fire
/// downward. `coords` maps an on-section state to R^dim and `lift` is its
/// right inverse with `event(lift(u)) = 0`.
#[derive(Clone)]
pub struct SectionDef {
    pub domain: String,
    pub event: EventFn,
    pub coords: ChartFn,
    pub lift: ChartFn,
    /// Chart dimension (domain dimension minus one).
    pub dim: usize,
}

impl std::fmt::Debug for SectionDef {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SectionDef")
            .field("domain", &self.domain)
            .field("dim", &self.dim)
            .finish_non_exhaustive()
    }
}

/// Result of one application of the return map.
#[derive(Clone, Debug, Serialize)]
pub struct ReturnResult {
    /// Section coordinates of the first return.
    pub u_out: Vec<f64>,
    pub return_time: f64,
    /// Domains traversed, one entry per flow arc of the journey.
    pub domain_sequence: Vec<String>,
    /// Arc durations; they sum to `return_time`.
    pub dwell_times: Vec<f64>,
}

/// One guard transition along a return journey.
#[derive(Clone, Debug, Serialize)]
pub struct TransitionRecord {
    pub guard_id: String,
    /// Journey time of the transition.
    pub time: f64,
    /// Crossing state on the guard surface.
    pub pre_reset: StateVec,
    /// Post-reset entry state in the destination domain.
    pub post_reset: StateVec,
}

/// Return-map evaluation with full transition bookkeeping.
#[derive(Clone, Debug)]
pub struct ReturnTrace {
    pub u_out: Vec<f64>,
    /// Ambient state at the located return.
    pub crossing_state: StateVec,
    pub return_time: f64,
    pub domain_sequence: Vec<String>,
    pub dwell_times: Vec<f64>,
    pub transitions: Vec<TransitionRecord>,
}

impl ReturnTrace {
    fn result(self) -> ReturnResult {
        ReturnResult {
            u_out: self.u_out,
            return_time: self.return_time,
            domain_sequence: self.domain_sequence,
            dwell_times: self.dwell_times,
        }
    }
}

/// First-return map of `section`, by direct hybrid execution from `lift(u)`.
pub fn return_map(
    system: &HybridSystemDef,
    section: &SectionDef,
    u: &[f64],
    cfg: &StepperConfig,
    max_time: f64,
) -> Result<ReturnResult> {
    return_trace(system, section, u, cfg, max_time).map(ReturnTrace::result)
}

/// As [`return_map`], but keeps the crossing state and every transition.
pub fn return_trace(
    system: &HybridSystemDef,
    section: &SectionDef,
    u: &[f64],
    cfg: &StepperConfig,
    max_time: f64,
) -> Result<ReturnTrace> {
    cfg.validate()?;
    let limits = Limits::default();
    let section_domain = system
        .domain(&section.domain)
        .ok_or_else(|| Error::Invalid(format!("unknown section domain `{}`", section.domain)))?;
    if u.len() != section.dim {
        return Err(Error::Invalid(format!(
            "section point has length {}, chart dimension is {}",
            u.len(),
            section.dim
        )));
    }

    let x0 = (section.lift)(u);
    if x0.len() != section_domain.dim {
        return Err(Error::Invalid(format!(
            "section lift produced length {} for domain `{}` of dimension {}",
            x0.len(),
            section.domain,
            section_domain.dim
        )));
    }

    let mut armed = false;
    let mut t = 0.0_f64;
    let mut domain_id = section.domain.clone();
    let mut state = x0;
    let mut domain_sequence = Vec::new();
    let mut dwell_times = Vec::new();
    let mut transitions: Vec<TransitionRecord> = Vec::new();

    loop {
        let remaining = max_time - t;
        if remaining <= 0.0 {
            return Err(Error::NoReturn {
                max_time,
                termination: Termination::TimeLimit,
            });
        }
        if transitions.len() >= limits.max_transitions {
            return Err(Error::Terminated {
                termination: Termination::MaxTransitions,
                context: format!("searching for a return to section in `{}`", section.domain),
            });
        }

        let domain = system
            .domain(&domain_id)
            .ok_or_else(|| Error::Invalid(format!("unknown domain `{domain_id}`")))?;
        let guards = system.guards_from(&domain_id);
        let df = DomainFlow::new(domain, cfg);

        let mut watch;
        let watch_ref = if domain_id == section.domain {
            watch = SectionWatch {
                id: "section",
                event: &section.event,
                armed: &mut armed,
            };
            Some(&mut watch)
        } else {
            None
        };

        let arc = flow_arc(&df, &guards, watch_ref, &state, remaining, false)?;
        match arc.end {
            ArcEnd::SectionHit { eta, state: hit } => {
                domain_sequence.push(domain_id.clone());
                dwell_times.push(eta);
                let u_out = (section.coords)(&hit);
                return Ok(ReturnTrace {
                    u_out,
                    crossing_state: hit,
                    return_time: t + eta,
                    domain_sequence,
                    dwell_times,
                    transitions,
                });
            }
            ArcEnd::Impact {
                guard_idx,
                eta,
                state: exit_state,
            } => {
                let guard = guards[guard_idx];
                let post = (guard.reset)(&exit_state);
                domain_sequence.push(domain_id.clone());
                dwell_times.push(eta);
                t += eta;
                transitions.push(TransitionRecord {
                    guard_id: guard.id.clone(),
                    time: t,
                    pre_reset: exit_state,
                    post_reset: post.clone(),
                });
                domain_id = guard.dst.clone();
                state = post;

                // A reset landing on the section surface is a return.
                if domain_id == section.domain && t > 0.0 {
                    let g = (section.event)(&state);
                    if g.abs() <= cfg.event_tol_g {
                        let u_out = (section.coords)(&state);
                        return Ok(ReturnTrace {
                            u_out,
                            crossing_state: state.clone(),
                            return_time: t,
                            domain_sequence,
                            dwell_times,
                            transitions,
                        });
                    }
                }
            }
            ArcEnd::TimeLimit { .. } => {
                return Err(Error::NoReturn {
                    max_time,
                    termination: Termination::TimeLimit,
                });
            }
        }
    }
}

/// Finite-difference scheme for [`jacobian_fd`].
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FdScheme {
    #[default]
    Central,
    Forward,
}

/// Finite-difference Jacobian of `map` at `u` with per-coordinate step
/// `delta_rel * max(|u_i|, 1)`. Central differences by default; map failures
/// are tagged with the perturbation that caused them.
pub fn jacobian_fd<F>(map: F, u: &[f64], delta_rel: f64, scheme: FdScheme) -> Result<DMatrix<f64>>
where
    F: Fn(&[f64]) -> Result<Vec<f64>>,
{
    if !(delta_rel > 0.0) {
        return Err(Error::Invalid(format!(
            "delta_rel = {delta_rel} must be > 0"
        )));
    }
    let d = u.len();
    let tag = |index: usize, sign: char, delta: f64| {
        move |e: Error| Error::Jacobian {
            index,
            sign,
            delta,
            source: Box::new(e),
        }
    };

    let base = match scheme {
        FdScheme::Forward => Some(map(u).map_err(tag(0, '0', 0.0))?),
        FdScheme::Central => None,
    };

    let mut columns: Vec<Vec<f64>> = Vec::with_capacity(d);
    for i in 0..d {
        let delta = delta_rel * u[i].abs().max(1.0);
        let mut up = u.to_vec();
        up[i] += delta;
        let fp = map(&up).map_err(tag(i, '+', delta))?;
        let col = match (&base, scheme) {
            (_, FdScheme::Central) => {
                let mut um = u.to_vec();
                um[i] -= delta;
                let fm = map(&um).map_err(tag(i, '-', delta))?;
                fp.iter()
                    .zip(&fm)
                    .map(|(p, m)| (p - m) / (2.0 * delta))
                    .collect()
            }
            (Some(f0), FdScheme::Forward) => {
                fp.iter().zip(f0).map(|(p, z)| (p - z) / delta).collect()
            }
            (None, FdScheme::Forward) => unreachable!(),
        };
        columns.push(col);
    }

    let rows = columns.first().map(|c| c.len()).unwrap_or(0);
    Ok(DMatrix::from_fn(rows, d, |r, c| columns[c][r]))
}

/// Fixed-point search strategy.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FixedPointMethod {
    /// Newton on P(u) - u with a finite-difference Jacobian.
    #[default]
    Newton,
    /// Plain iteration of P; valid for asymptotically stable orbits.
    Iterate,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct FixedPointOpts {
    pub tol: f64,
    pub max_iter: usize,
    pub method: FixedPointMethod,
    /// Relative displacement for the Newton finite-difference Jacobian.
    pub delta_rel: f64,
    /// Time horizon per return-map evaluation.
    pub max_time: f64,
}

impl Default for FixedPointOpts {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iter: 50,
            method: FixedPointMethod::Newton,
            delta_rel: 1e-5,
            max_time: 10.0,
        }
    }
}

fn inf_norm_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// Find u* with ||P(u*) - u*||_inf <= tol. Returns the point and its
/// measured residual; the residual is always re-evaluated, never assumed.
pub fn find_fixed_point(
    system: &HybridSystemDef,
    section: &SectionDef,
    u0: &[f64],
    cfg: &StepperConfig,
    opts: &FixedPointOpts,
) -> Result<(Vec<f64>, f64)> {
    let eval = |v: &[f64]| -> Result<Vec<f64>> {
        Ok(return_map(system, section, v, cfg, opts.max_time)?.u_out)
    };

    let mut u = u0.to_vec();
    let mut pu = eval(&u)?;
    let mut residual = inf_norm_diff(&pu, &u);
    let mut best = residual;

    for iteration in 0..opts.max_iter {
        if residual <= opts.tol {
            return Ok((u, residual));
        }
        match opts.method {
            FixedPointMethod::Iterate => {
                u = pu;
            }
            FixedPointMethod::Newton => {
                let jac = jacobian_fd(eval, &u, opts.delta_rel, FdScheme::Central)?;
                let d = u.len();
                let mut j_minus_i = jac;
                for i in 0..d {
                    j_minus_i[(i, i)] -= 1.0;
                }
                // a numerically singular (DP - I) signals a multiplier near 1
                let svd = nalgebra::linalg::SVD::try_new(
                    j_minus_i.clone(),
                    false,
                    false,
                    f64::EPSILON,
                    0,
                )
                .ok_or(Error::SingularNewtonStep)?;
                let smax = svd.singular_values.iter().copied().fold(0.0, f64::max);
                let smin = svd
                    .singular_values
                    .iter()
                    .copied()
                    .fold(f64::INFINITY, f64::min);
                if smax == 0.0 || smin <= 1e-10 * smax {
                    return Err(Error::SingularNewtonStep);
                }
                let g = DVector::from_iterator(d, pu.iter().zip(&u).map(|(p, x)| p - x));
                let lu = j_minus_i.lu();
                let delta = lu.solve(&(-g)).ok_or(Error::SingularNewtonStep)?;
                if !delta.iter().all(|v| v.is_finite()) {
                    return Err(Error::SingularNewtonStep);
                }
                for i in 0..d {
                    u[i] += delta[i];
                }
            }
        }
        pu = eval(&u)?;
        residual = inf_norm_diff(&pu, &u);
        best = best.min(residual);
        let _ = iteration;
    }
    if residual <= opts.tol {
        return Ok((u, residual));
    }
    Err(Error::NoConvergence {
        iterations: opts.max_iter,
        residual: best,
        tol: opts.tol,
    })
}

/// Assemble per-cycle orbit metadata by tracing one period from `u_star`.
///
/// Entry points are the post-reset states of the cycle's transitions; the
/// dwell time of the last entered domain wraps through the section point, so
/// the dwell times sum to the period.
pub fn periodic_orbit(
    system: &HybridSystemDef,
    section: &SectionDef,
    u_star: &[f64],
    cfg: &StepperConfig,
    max_time: f64,
) -> Result<PeriodicOrbitResult> {
    let trace = return_trace(system, section, u_star, cfg, max_time)?;
    let residual = inf_norm_diff(&trace.u_out, u_star);
    let period = trace.return_time;
    let m = trace.transitions.len();

    if m == 0 {
        // Single-domain orbit returning by a smooth crossing.
        return Ok(PeriodicOrbitResult {
            section_domain: section.domain.clone(),
            fixed_point: u_star.to_vec(),
            period,
            domain_sequence: vec![section.domain.clone()],
            dwell_times: vec![period],
            entry_points: vec![(section.lift)(u_star)],
            exit_points: vec![],
            guard_sequence: vec![],
            residual,
        });
    }

    let arriving_domain = |tr: &TransitionRecord| -> Result<String> {
        system
            .guards
            .iter()
            .find(|g| g.id == tr.guard_id)
            .map(|g| g.dst.clone())
            .ok_or_else(|| Error::Invalid(format!("unknown guard `{}`", tr.guard_id)))
    };

    let mut domain_sequence = Vec::with_capacity(m);
    let mut entry_points = Vec::with_capacity(m);
    let mut exit_points = Vec::with_capacity(m);
    let mut guard_sequence = Vec::with_capacity(m);
    let mut dwell_times = Vec::with_capacity(m);

    for j in 0..m {
        let tr = &trace.transitions[j];
        domain_sequence.push(arriving_domain(tr)?);
        entry_points.push(tr.post_reset.clone());
        let next = &trace.transitions[(j + 1) % m];
        exit_points.push(next.pre_reset.clone());
        guard_sequence.push(next.guard_id.clone());
        let t_next = if j + 1 < m {
            trace.transitions[j + 1].time
        } else {
            period + trace.transitions[0].time
        };
        dwell_times.push(t_next - tr.time);
    }

    Ok(PeriodicOrbitResult {
        section_domain: section.domain.clone(),
        fixed_point: u_star.to_vec(),
        period,
        domain_sequence,
        dwell_times,
        entry_points,
        exit_points,
        guard_sequence,
        residual,
    })
}

/// Chart on the set of reset arrivals at one entry point of a cycle.
///
/// If the incoming reset pins some coordinate of the arrival state to a
/// constant (its Jacobian row vanishes), that coordinate is dropped and the
/// chart is lossless on arrivals: lifting restores exactly the pinned value.
/// Otherwise the arrival set fills the domain near the anchor and the chart
/// is the identity.
#[derive(Clone, Debug)]
pub struct EntryChart {
    pub domain: String,
    /// The orbit's entry state; dropped coordinates lift to its values.
    pub anchor: StateVec,
    /// Index of the dropped coordinate, if any.
    pub dropped: Option<usize>,
}

impl EntryChart {
    pub fn dim(&self) -> usize {
        match self.dropped {
            Some(_) => self.anchor.len() - 1,
            None => self.anchor.len(),
        }
    }

    pub fn coords(&self, state: &[f64]) -> Vec<f64> {
        match self.dropped {
            Some(c) => {
                let mut u = Vec::with_capacity(state.len() - 1);
                u.extend_from_slice(&state[..c]);
                u.extend_from_slice(&state[c + 1..]);
                u
            }
            None => state.to_vec(),
        }
    }

    pub fn lift(&self, u: &[f64]) -> Vec<f64> {
        match self.dropped {
            Some(c) => {
                let mut s = Vec::with_capacity(u.len() + 1);
                s.extend_from_slice(&u[..c]);
                s.push(self.anchor[c]);
                s.extend_from_slice(&u[c..]);
                s
            }
            None => u.to_vec(),
        }
    }
}

/// Absolute Jacobian-row-norm threshold below which an arrival coordinate
/// counts as pinned by the reset. Pinned rows are exactly zero for constant
/// reset outputs; the margin only absorbs finite-difference noise.
const PINNED_ROW_TOL: f64 = 1e-8;

/// Entry charts for every domain of an orbit's cycle.
#[derive(Clone, Debug)]
pub struct CycleCharts {
    pub charts: Vec<EntryChart>,
}

/// Build entry charts about each entry point of the orbit's cycle by
/// differentiating the incoming reset at the pre-reset exit state.
pub fn build_cycle_charts(
    system: &HybridSystemDef,
    orbit: &PeriodicOrbitResult,
) -> Result<CycleCharts> {
    let m = orbit.domain_sequence.len();
    if m == 0 || orbit.guard_sequence.is_empty() {
        return Err(Error::Invalid(
            "orbit has no transitions; entry charts need a reset-bounded cycle".into(),
        ));
    }
    let mut charts = Vec::with_capacity(m);
    for j in 0..m {
        // entry j arrives via the guard leaving domain j-1
        let prev = (j + m - 1) % m;
        let guard_id = &orbit.guard_sequence[prev];
        let guard = system
            .guards
            .iter()
            .find(|g| &g.id == guard_id)
            .ok_or_else(|| Error::Invalid(format!("unknown guard `{guard_id}`")))?;
        let exit = &orbit.exit_points[prev];
        let reset = guard.reset.clone();
        let dr = jacobian_fd(
            move |s| Ok(reset(s)),
            exit,
            1e-6,
            FdScheme::Central,
        )?;
        let mut dropped = None;
        let mut best = f64::INFINITY;
        for r in 0..dr.nrows() {
            let norm = dr.row(r).iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm < best {
                best = norm;
                dropped = Some(r);
            }
        }
        let dropped = match dropped {
            Some(r) if best <= PINNED_ROW_TOL => Some(r),
            _ => None,
        };
        charts.push(EntryChart {
            domain: orbit.domain_sequence[j].clone(),
            anchor: orbit.entry_points[j].clone(),
            dropped,
        });
    }
    Ok(CycleCharts { charts })
}

/// One step map of the cycle: lift `u` at entry `j`, flow in that domain
/// alone to its exit guard, apply the reset, and read off coordinates in the
/// next entry chart. Composing the step maps around the cycle equals the
/// return map on entry chart 0.
pub fn step_map(
    system: &HybridSystemDef,
    charts: &CycleCharts,
    j: usize,
    u: &[f64],
    cfg: &StepperConfig,
    max_time: f64,
) -> Result<Vec<f64>> {
    let m = charts.charts.len();
    let chart = &charts.charts[j % m];
    let next = &charts.charts[(j + 1) % m];
    let state = chart.lift(u);
    let domain = system
        .domain(&chart.domain)
        .ok_or_else(|| Error::Invalid(format!("unknown domain `{}`", chart.domain)))?;
    let guards = system.guards_from(&chart.domain);
    let df = DomainFlow::new(domain, cfg);
    let arc = flow_arc(&df, &guards, None, &state, max_time, false)?;
    match arc.end {
        ArcEnd::Impact {
            guard_idx,
            state: exit_state,
            ..
        } => {
            let guard = guards[guard_idx];
            if guard.dst != next.domain {
                return Err(Error::Invalid(format!(
                    "step map left `{}` via `{}` into `{}`, but the cycle's next entry is `{}`",
                    chart.domain, guard.id, guard.dst, next.domain
                )));
            }
            Ok(next.coords(&(guard.reset)(&exit_state)))
        }
        ArcEnd::TimeLimit { .. } => Err(Error::NoImpact {
            domain: chart.domain.clone(),
            t_max: max_time,
        }),
        ArcEnd::SectionHit { .. } => unreachable!("step map installs no section watcher"),
    }
}

/// A SectionDef over an entry chart whose incoming reset pins a coordinate:
/// the section surface is the pinned-coordinate slice through the anchor.
/// Returns None when the chart is full-dimensional.
pub fn entry_section(chart: &EntryChart) -> Option<SectionDef> {
    let c = chart.dropped?;
    let anchor_value = chart.anchor[c];
    let coords_chart = chart.clone();
    let lift_chart = chart.clone();
    Some(SectionDef {
        domain: chart.domain.clone(),
        event: Arc::new(move |s: &[f64]| s[c] - anchor_value),
        coords: Arc::new(move |s: &[f64]| coords_chart.coords(s)),
        lift: Arc::new(move |u: &[f64]| lift_chart.lift(u)),
        dim: chart.dim(),
    })
}
