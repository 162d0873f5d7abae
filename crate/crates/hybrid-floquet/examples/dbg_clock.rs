use hybrid_floquet::exec::{execute, Limits};
use hybrid_floquet::flow::StepperConfig;
use hybrid_floquet::system::{DomainDef, GuardDef, HybridSystemDef};
use std::sync::Arc;

fn main() {
    let sys = HybridSystemDef {
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
    };
    let ex = execute(&sys, "cycle", &[0.0], 5.0, &StepperConfig::default(), &Limits::default()).unwrap();
    println!("termination {:?} transitions {}", ex.termination, ex.transitions);
    for (i, a) in ex.arcs.iter().enumerate() {
        println!("arc {i}: [{:.17}, {:.17}] guard {:?} entry {:?} exit {:?}", a.t_entry, a.t_exit, a.exit_guard, a.entry_state, a.exit_state);
    }
}
