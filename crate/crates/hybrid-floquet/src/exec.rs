//! Multi-domain hybrid execution: alternate single-domain flow and guard
//! resets until a time horizon or a safety limit.
//!
//! Executions are fully deterministic: fixed-step integration, bisection
//! event location, and reset maps applied verbatim (no re-projection of
//! post-reset states). Resets are instantaneous, so global time is continuous
//! across transitions and advances by exactly the sum of arc durations.

use crate::error::{Error, Result};
use crate::flow::{flow_arc, ArcEnd, DomainFlow, StepperConfig};
use crate::system::{all_finite, HybridSystemDef, StateVec};
use serde::{Deserialize, Serialize};

/// One continuous-flow segment of an execution.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExecutionArc {
    pub domain: String,
    /// Global time at which the arc starts/ends.
    pub t_entry: f64,
    pub t_exit: f64,
    pub entry_state: StateVec,
    pub exit_state: StateVec,
    /// Guard that ended the arc, or None when the arc ends at the horizon or
    /// an abnormal termination.
    pub exit_guard: Option<String>,
    /// (global time, state) at the entry point, each accepted integrator
    /// step, and the exact exit point. No interpolation.
    pub samples: Vec<(f64, StateVec)>,
}

/// Why an execution stopped.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Termination {
    /// The requested horizon elapsed.
    TimeLimit,
    /// Reserved: flow left the domain with no guard crossing detectable.
    /// `execute` itself maps an exhausted horizon to `TimeLimit`.
    NoImpact,
    /// A located crossing violated the transversality threshold.
    Tangency,
    /// `zeno_run` consecutive arcs each dwelt less than `zeno_dwell`.
    Zeno,
    MaxTransitions,
    /// An integration step produced NaN/Inf.
    NonFiniteState,
}

/// Safety limits on an execution.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct Limits {
    pub max_transitions: usize,
    /// Arc dwell below this counts toward the Zeno detector.
    pub zeno_dwell: f64,
    /// Number of consecutive short arcs that triggers Zeno termination.
    pub zeno_run: usize,
}

impl Default for Limits {
    fn default() -> Self {
        Self {
            max_transitions: 1_000_000,
            zeno_dwell: 1e-9,
            zeno_run: 10,
        }
    }
}

/// A hybrid trajectory: ordered arcs joined by instantaneous resets.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Execution {
    pub arcs: Vec<ExecutionArc>,
    pub termination: Termination,
    pub transitions: usize,
}

impl Execution {
    /// State at the end of the last arc.
    pub fn final_state(&self) -> Option<&StateVec> {
        self.arcs.last().map(|a| &a.exit_state)
    }

    pub fn final_time(&self) -> f64 {
        self.arcs.last().map(|a| a.t_exit).unwrap_or(0.0)
    }
}

/// Each located event carries up to `event_tol_t` of bracket slop plus step
/// summation rounding, so the horizon is considered exhausted once the
/// remaining time falls below the accumulated location budget. This keeps a
/// transition landing exactly on the horizon from spawning a trailing
/// micro-arc.
fn horizon_slack(transitions: usize, cfg: &StepperConfig, t_max: f64) -> f64 {
    (transitions as f64 + 1.0) * 4.0 * cfg.event_tol_t + 16.0 * f64::EPSILON * t_max.abs()
}

/// Run the hybrid system from `x0` in `domain0` until `t_max`, a safety
/// limit, or an abnormal event condition.
///
/// Error conditions are encoded in `termination`, never thrown: the partial
/// trajectory up to the failure is always returned. Consecutive arcs satisfy
/// `reset(exit_state of arc i) = entry_state of arc i+1` exactly.
pub fn execute(
    system: &HybridSystemDef,
    domain0: &str,
    x0: &[f64],
    t_max: f64,
    cfg: &StepperConfig,
    limits: &Limits,
) -> Result<Execution> {
    cfg.validate()?;
    if system.domain(domain0).is_none() {
        return Err(Error::Invalid(format!("unknown domain `{domain0}`")));
    }
    if !all_finite(x0) {
        return Err(Error::Invalid("initial state is not finite".into()));
    }

    let mut arcs: Vec<ExecutionArc> = Vec::new();
    let mut transitions = 0usize;
    let mut short_run = 0usize;
    let mut t = 0.0_f64;
    let mut domain_id = domain0.to_string();
    let mut state = x0.to_vec();

    loop {
        if !arcs.is_empty() && t_max - t <= horizon_slack(transitions, cfg, t_max) {
            return Ok(Execution {
                arcs,
                termination: Termination::TimeLimit,
                transitions,
            });
        }

        let domain = system.domain(&domain_id).expect("domain resolved above");
        let guards = system.guards_from(&domain_id);
        let df = DomainFlow::new(domain, cfg);
        let remaining = (t_max - t).max(0.0);

        let arc = match flow_arc(&df, &guards, None, &state, remaining, true) {
            Ok(arc) => arc,
            Err(err) => {
                let termination = match err {
                    Error::Tangency { .. } => Termination::Tangency,
                    Error::NonFiniteState { .. } => Termination::NonFiniteState,
                    other => return Err(other),
                };
                // freeze the trajectory at the last good state
                arcs.push(ExecutionArc {
                    domain: domain_id.clone(),
                    t_entry: t,
                    t_exit: t,
                    entry_state: state.clone(),
                    exit_state: state.clone(),
                    exit_guard: None,
                    samples: vec![(t, state.clone())],
                });
                return Ok(Execution {
                    arcs,
                    termination,
                    transitions,
                });
            }
        };

        let samples: Vec<(f64, StateVec)> = arc
            .samples
            .into_iter()
            .map(|(lt, s)| (t + lt, s))
            .collect();

        match arc.end {
            ArcEnd::TimeLimit { state: end_state } => {
                arcs.push(ExecutionArc {
                    domain: domain_id.clone(),
                    t_entry: t,
                    t_exit: t + remaining.max(0.0),
                    entry_state: state,
                    exit_state: end_state,
                    exit_guard: None,
                    samples,
                });
                return Ok(Execution {
                    arcs,
                    termination: Termination::TimeLimit,
                    transitions,
                });
            }
            ArcEnd::Impact {
                guard_idx,
                eta,
                state: exit_state,
            } => {
                let guard = guards[guard_idx];
                arcs.push(ExecutionArc {
                    domain: domain_id.clone(),
                    t_entry: t,
                    t_exit: t + eta,
                    entry_state: state,
                    exit_state: exit_state.clone(),
                    exit_guard: Some(guard.id.clone()),
                    samples,
                });
                transitions += 1;

                if eta < limits.zeno_dwell {
                    short_run += 1;
                    if short_run >= limits.zeno_run {
                        return Ok(Execution {
                            arcs,
                            termination: Termination::Zeno,
                            transitions,
                        });
                    }
                } else {
                    short_run = 0;
                }
                if transitions >= limits.max_transitions {
                    return Ok(Execution {
                        arcs,
                        termination: Termination::MaxTransitions,
                        transitions,
                    });
                }

                let next_state = (guard.reset)(&exit_state);
                let dst = system.domain(&guard.dst).ok_or_else(|| {
                    Error::Invalid(format!(
                        "guard `{}` targets undeclared domain `{}`",
                        guard.id, guard.dst
                    ))
                })?;
                if next_state.len() != dst.dim {
                    return Err(Error::Invalid(format!(
                        "reset of guard `{}` produced length {} for domain `{}` of dimension {}",
                        guard.id,
                        next_state.len(),
                        guard.dst,
                        dst.dim
                    )));
                }
                t += eta;
                state = next_state;
                domain_id = guard.dst.clone();
            }
            ArcEnd::SectionHit { .. } => unreachable!("execute installs no section watcher"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::system::{DomainDef, GuardDef};
    use std::sync::Arc;

    /// Unit clock: t' = 1 on [0, 1], reset t -> 0. One transition per second.
    fn unit_clock() -> HybridSystemDef {
        HybridSystemDef {
            domains: vec![DomainDef {
                id: "cycle".into(),
                dim: 1,
                coord_names: vec!["t".into()],
                field: Arc::new(|_s, out| out[0] = 1.0),
                wrap: vec![],
            }],
            guards: vec![GuardDef {
                id: "wrap".into(),
                src: "cycle".into(),
                dst: "cycle".into(),
                event: Arc::new(|s: &[f64]| 1.0 - s[0]),
                reset: Arc::new(|_s: &[f64]| vec![0.0]),
            }],
        }
    }

    #[test]
    fn unit_clock_five_arcs_in_five_seconds() {
        let ex = execute(
            &unit_clock(),
            "cycle",
            &[0.0],
            5.0,
            &StepperConfig::default(),
            &Limits::default(),
        )
        .unwrap();
        assert_eq!(ex.termination, Termination::TimeLimit);
        assert_eq!(ex.transitions, 5);
        assert_eq!(ex.arcs.len(), 5);
        for arc in &ex.arcs {
            assert!(((arc.t_exit - arc.t_entry) - 1.0).abs() < 1e-9);
            assert_eq!(arc.exit_guard.as_deref(), Some("wrap"));
        }
    }

    #[test]
    fn zero_horizon_yields_single_zero_length_arc() {
        let ex = execute(
            &unit_clock(),
            "cycle",
            &[0.25],
            0.0,
            &StepperConfig::default(),
            &Limits::default(),
        )
        .unwrap();
        assert_eq!(ex.termination, Termination::TimeLimit);
        assert_eq!(ex.transitions, 0);
        assert_eq!(ex.arcs.len(), 1);
        let arc = &ex.arcs[0];
        assert_eq!(arc.t_entry, arc.t_exit);
        assert_eq!(arc.entry_state, arc.exit_state);
        assert_eq!(arc.samples.len(), 1);
    }

    #[test]
    fn executions_are_deterministic() {
        let cfg = StepperConfig::default();
        let lim = Limits::default();
        let a = execute(&unit_clock(), "cycle", &[0.3], 3.7, &cfg, &lim).unwrap();
        let b = execute(&unit_clock(), "cycle", &[0.3], 3.7, &cfg, &lim).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn arcs_are_linked_by_resets_exactly() {
        let ex = execute(
            &unit_clock(),
            "cycle",
            &[0.0],
            2.5,
            &StepperConfig::default(),
            &Limits::default(),
        )
        .unwrap();
        for pair in ex.arcs.windows(2) {
            // unit-clock reset sends everything to exactly [0.0]
            assert_eq!(pair[1].entry_state, vec![0.0]);
            assert_eq!(pair[0].samples.last().unwrap().1, pair[0].exit_state);
            assert_eq!(pair[1].samples[0].1, pair[1].entry_state);
            assert_eq!(pair[0].t_exit, pair[1].t_entry);
        }
    }

    #[test]
    fn semigroup_property_at_shared_samples() {
        // Executing to t1 and continuing must agree with the direct run at
        // every sample point both runs visit: the accepted steps before the
        // split (the split itself lands mid-step and realigns only at the
        // next reset) and everything after the first transition.
        let cfg = StepperConfig::default();
        let lim = Limits::default();
        let full = execute(&unit_clock(), "cycle", &[0.0], 1.75, &cfg, &lim).unwrap();
        let first = execute(&unit_clock(), "cycle", &[0.0], 0.5, &cfg, &lim).unwrap();
        let cont_state = first.final_state().unwrap().clone();
        let cont = execute(&unit_clock(), "cycle", &cont_state, 1.25, &cfg, &lim).unwrap();

        // shared prefix: full steps of the first leg, which stop one step
        // short of the horizon-aligned partial step
        let leg1 = &first.arcs[0].samples;
        let direct = &full.arcs[0].samples;
        assert!(leg1.len() >= 500);
        for i in 0..leg1.len() - 1 {
            assert_eq!(leg1[i].1, direct[i].1, "prefix mismatch at step {i}");
        }

        // after the first reset both runs restart from the same entry state
        // and are bitwise identical until each run's own final partial step
        // to its horizon (those endpoints are not shared points)
        assert_eq!(cont.arcs[1].entry_state, full.arcs[1].entry_state);
        for (a, b) in cont.arcs[1..].iter().zip(&full.arcs[1..]) {
            assert_eq!(a.domain, b.domain);
            assert_eq!(a.entry_state, b.entry_state);
            let shared = if a.exit_guard.is_some() {
                assert_eq!(a.exit_state, b.exit_state);
                a.samples.len()
            } else {
                a.samples.len().min(b.samples.len()) - 1
            };
            for (sa, sb) in a.samples[..shared].iter().zip(&b.samples[..shared]) {
                assert_eq!(sa.1, sb.1);
            }
        }
        assert!(((first.final_time() + cont.final_time()) - full.final_time()).abs() < 1e-9);
    }

    #[test]
    fn max_transitions_limit() {
        let lim = Limits {
            max_transitions: 3,
            ..Limits::default()
        };
        let ex = execute(
            &unit_clock(),
            "cycle",
            &[0.0],
            10.0,
            &StepperConfig::default(),
            &lim,
        )
        .unwrap();
        assert_eq!(ex.termination, Termination::MaxTransitions);
        assert_eq!(ex.transitions, 3);
    }

    #[test]
    fn shrinking_dwells_trigger_zeno() {
        // event s - t with reset (t, s) -> (0, s/2): dwell halves every arc
        let sys = HybridSystemDef {
            domains: vec![DomainDef {
                id: "d".into(),
                dim: 2,
                coord_names: vec!["t".into(), "s".into()],
                field: Arc::new(|_s, out| {
                    out[0] = 1.0;
                    out[1] = 0.0;
                }),
                wrap: vec![],
            }],
            guards: vec![GuardDef {
                id: "g".into(),
                src: "d".into(),
                dst: "d".into(),
                event: Arc::new(|s: &[f64]| s[1] - s[0]),
                reset: Arc::new(|s: &[f64]| vec![0.0, s[1] / 2.0]),
            }],
        };
        let ex = execute(
            &sys,
            "d",
            &[0.0, 1e-8],
            10.0,
            &StepperConfig::default(),
            &Limits::default(),
        )
        .unwrap();
        assert_eq!(ex.termination, Termination::Zeno);
        let tail = &ex.arcs[ex.arcs.len() - 10..];
        assert!(tail.iter().all(|a| a.t_exit - a.t_entry < 1e-9));
    }

    #[test]
    fn tangency_is_reported_as_termination() {
        let sys = HybridSystemDef {
            domains: vec![DomainDef {
                id: "d".into(),
                dim: 1,
                coord_names: vec!["t".into()],
                field: Arc::new(|_s, out| out[0] = 1.0),
                wrap: vec![],
            }],
            guards: vec![GuardDef {
                id: "g".into(),
                src: "d".into(),
                dst: "d".into(),
                event: Arc::new(|s: &[f64]| (1.0 - s[0]).powi(3)),
                reset: Arc::new(|s: &[f64]| s.to_vec()),
            }],
        };
        let ex = execute(
            &sys,
            "d",
            &[0.0],
            5.0,
            &StepperConfig::default(),
            &Limits::default(),
        )
        .unwrap();
        assert_eq!(ex.termination, Termination::Tangency);
    }
}
