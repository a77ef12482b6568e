//! Learning rate of each schedule at the phase boundaries of the default plan.

use sebays::schedule::{Phase, PhasePlan, Schedule};

fn main() {
    let mut plan = PhasePlan::default();
    let marks = [0, 74, 149, 150, 175, 199, 200, 249, 250, 449];
    print!("{:<12}", "epoch");
    for e in marks {
        print!("{e:>9}");
    }
    println!();
    for s in Schedule::ALL {
        plan.schedule = s;
        print!("{:<12}", s.name());
        for e in marks {
            print!("{:>9.5}", plan.lr_at(e).unwrap());
        }
        println!();
    }
    // snapshot_epochs counts completed epochs; the last one is 0-based done - 1
    for done in plan.snapshot_epochs() {
        if let Phase::Exploitation { index, .. } = plan.phase_of(done - 1) {
            println!("learner {} snapshot after epoch {} ({:?})", index + 1, done - 1, plan.event_at(done - 1));
        }
    }
}
