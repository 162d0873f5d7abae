//! Definitions of hybrid dynamical systems: domains with vector fields,
//! guards with resets, and periodic-orbit metadata.
//!
//! A system is the triple (domains, fields, resets). Flow happens inside a
//! domain where every guard event value is positive; a transition fires when
//! some event value reaches zero from above, after which the guard's reset
//! produces the initial condition in the destination domain.
//!
//! All definition types are immutable after construction and safe to share
//! across threads. The callables supplied by model constructors must be pure;
//! this is a documented contract, not something the library can enforce.

use serde::Serialize;
use std::fmt;
use std::sync::Arc;

/// A state is a flat coordinate vector in some domain's chart.
pub type StateVec = Vec<f64>;

/// Vector field callable: writes the derivative of `state` into `out`.
pub type FieldFn = Arc<dyn Fn(&[f64], &mut [f64]) + Send + Sync>;

/// Scalar event callable; the zero set is the guard or section surface.
/// Flow occurs where the value is positive; crossings fire downward.
pub type EventFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// Reset callable: maps a guard-surface state to a state of the destination
/// domain. Applied exactly once per transition, never re-projected.
pub type ResetFn = Arc<dyn Fn(&[f64]) -> StateVec + Send + Sync>;

/// One continuous-flow component of the hybrid state space.
#[derive(Clone)]
pub struct DomainDef {
    pub id: String,
    pub dim: usize,
    pub coord_names: Vec<String>,
    pub field: FieldFn,
    /// Circle-valued coordinates: (coordinate index, period). The coordinate
    /// is reduced modulo the period after every accepted integrator step.
    pub wrap: Vec<(usize, f64)>,
}

impl fmt::Debug for DomainDef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DomainDef")
            .field("id", &self.id)
            .field("dim", &self.dim)
            .field("coord_names", &self.coord_names)
            .field("wrap", &self.wrap)
            .finish_non_exhaustive()
    }
}

/// A transition rule: when `event` on `src` reaches zero with strictly
/// negative time-derivative along the flow, `reset` maps the crossing state
/// into `dst`.
#[derive(Clone)]
pub struct GuardDef {
    pub id: String,
    pub src: String,
    pub dst: String,
    pub event: EventFn,
    pub reset: ResetFn,
}

impl fmt::Debug for GuardDef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("GuardDef")
            .field("id", &self.id)
            .field("src", &self.src)
            .field("dst", &self.dst)
            .finish_non_exhaustive()
    }
}

/// A hybrid dynamical system: domains plus guarded resets between them.
#[derive(Clone, Debug)]
pub struct HybridSystemDef {
    pub domains: Vec<DomainDef>,
    pub guards: Vec<GuardDef>,
}

impl HybridSystemDef {
    pub fn domain(&self, id: &str) -> Option<&DomainDef> {
        self.domains.iter().find(|d| d.id == id)
    }

    /// Guards whose source is `domain_id`, in declaration order (which is
    /// also the tie-break order for simultaneous crossings).
    pub fn guards_from(&self, domain_id: &str) -> Vec<&GuardDef> {
        self.guards.iter().filter(|g| g.src == domain_id).collect()
    }
}

/// Where a validation diagnostic points.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub enum DiagnosticKind {
    DuplicateDomainId,
    DuplicateGuardId,
    UnresolvedId,
    DimensionMismatch,
    BadWrap,
    BadCoordNames,
}

/// One well-formedness finding; `validate` returns these instead of failing.
#[derive(Clone, Debug, Serialize)]
pub struct Diagnostic {
    pub kind: DiagnosticKind,
    /// Id of the offending domain or guard.
    pub target: String,
    pub message: String,
}

/// Check the structural invariants of a system definition.
///
/// Returns an empty list iff the system is well formed: unique ids, resolvable
/// guard endpoints, positive wrap periods, and callables whose output lengths
/// match the declared dimensions. Field and reset outputs are probed at the
/// origin of each domain, so callables must be total there. Deterministic and
/// side-effect free.
pub fn validate(system: &HybridSystemDef) -> Vec<Diagnostic> {
    let mut out = Vec::new();

    for (i, d) in system.domains.iter().enumerate() {
        if system.domains[..i].iter().any(|e| e.id == d.id) {
            out.push(Diagnostic {
                kind: DiagnosticKind::DuplicateDomainId,
                target: d.id.clone(),
                message: format!("domain id `{}` declared more than once", d.id),
            });
        }
        if d.dim == 0 {
            out.push(Diagnostic {
                kind: DiagnosticKind::DimensionMismatch,
                target: d.id.clone(),
                message: format!("domain `{}` has dimension 0", d.id),
            });
            continue;
        }
        if d.coord_names.len() != d.dim {
            out.push(Diagnostic {
                kind: DiagnosticKind::BadCoordNames,
                target: d.id.clone(),
                message: format!(
                    "domain `{}`: {} coordinate names for dimension {}",
                    d.id,
                    d.coord_names.len(),
                    d.dim
                ),
            });
        }
        for &(idx, period) in &d.wrap {
            if idx >= d.dim {
                out.push(Diagnostic {
                    kind: DiagnosticKind::BadWrap,
                    target: d.id.clone(),
                    message: format!(
                        "domain `{}`: wrap index {} out of range for dimension {}",
                        d.id, idx, d.dim
                    ),
                });
            }
            if !(period > 0.0) {
                out.push(Diagnostic {
                    kind: DiagnosticKind::BadWrap,
                    target: d.id.clone(),
                    message: format!("domain `{}`: wrap period {} is not positive", d.id, period),
                });
            }
        }
        let origin = vec![0.0; d.dim];
        let mut deriv = vec![0.0; d.dim];
        (d.field)(&origin, &mut deriv);
        // The in-place signature fixes the output length; probing still
        // exercises the callable so that panics surface here, not mid-run.
    }

    for (i, g) in system.guards.iter().enumerate() {
        if system.guards[..i].iter().any(|e| e.id == g.id) {
            out.push(Diagnostic {
                kind: DiagnosticKind::DuplicateGuardId,
                target: g.id.clone(),
                message: format!("guard id `{}` declared more than once", g.id),
            });
        }
        let src = system.domain(&g.src);
        let dst = system.domain(&g.dst);
        if src.is_none() {
            out.push(Diagnostic {
                kind: DiagnosticKind::UnresolvedId,
                target: g.id.clone(),
                message: format!("guard `{}`: src domain `{}` is not declared", g.id, g.src),
            });
        }
        if dst.is_none() {
            out.push(Diagnostic {
                kind: DiagnosticKind::UnresolvedId,
                target: g.id.clone(),
                message: format!("guard `{}`: dst domain `{}` is not declared", g.id, g.dst),
            });
        }
        if let (Some(src), Some(dst)) = (src, dst) {
            let probe = vec![0.0; src.dim];
            let image = (g.reset)(&probe);
            if image.len() != dst.dim {
                out.push(Diagnostic {
                    kind: DiagnosticKind::DimensionMismatch,
                    target: g.id.clone(),
                    message: format!(
                        "guard `{}`: reset output has length {} but dst `{}` has dimension {}",
                        g.id,
                        image.len(),
                        g.dst,
                        dst.dim
                    ),
                });
            }
        }
    }

    out
}

/// True iff every entry is finite.
pub fn all_finite(state: &[f64]) -> bool {
    state.iter().all(|v| v.is_finite())
}

/// A periodic orbit located on a Poincaré section, with per-cycle metadata.
///
/// `entry_points[j]` is the post-reset state at which the orbit enters
/// `domain_sequence[j]`, and `dwell_times[j]` is the time it spends there per
/// cycle; the dwell times sum to `period`. The section's own crossing point
/// is `fixed_point` in section coordinates.
#[derive(Clone, Debug, Serialize)]
pub struct PeriodicOrbitResult {
    /// Domain that hosts the section this orbit was found on.
    pub section_domain: String,
    /// Fixed point of the return map, in section coordinates.
    pub fixed_point: Vec<f64>,
    /// Return time of the orbit.
    pub period: f64,
    /// Domains entered over one cycle, in transition order from the section.
    pub domain_sequence: Vec<String>,
    /// Time spent in each entered domain per cycle; sums to `period`.
    pub dwell_times: Vec<f64>,
    /// Post-reset entry state into each domain of the cycle.
    pub entry_points: Vec<StateVec>,
    /// Pre-reset exit state (on the guard surface) leaving each domain.
    pub exit_points: Vec<StateVec>,
    /// Guard taken when leaving each domain of the cycle.
    pub guard_sequence: Vec<String>,
    /// Residual of the return map at `fixed_point` (infinity norm).
    pub residual: f64,
}
