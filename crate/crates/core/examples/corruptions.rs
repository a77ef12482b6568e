//! Every corruption at every severity applied to one procedural digit,
//! drawn as ASCII art.

use sebays::data::{corrupt, procedural_digits, CorruptionKind, CorruptionSpec};
use sebays::numeric::{streams, RngStream};

fn draw(px: &[f64]) {
    for r in (0..28).step_by(2) {
        let line: String = (0..28).map(|c| b" .:-=+*#%@"[((px[r * 28 + c].clamp(0.0, 1.0)) * 9.0) as usize] as char).collect();
        println!("  {line}");
    }
}

fn main() -> sebays::Result<()> {
    let ds = procedural_digits(1, &mut RngStream::new(0, streams::DATA_GEN))?;
    println!("clean (label {})", ds.labels[0]);
    draw(ds.features.row(0));
    for kind in CorruptionKind::ALL {
        for severity in [1, 3, 5] {
            let c = corrupt(&ds, CorruptionSpec { kind, severity }, 7)?;
            println!("{} severity {severity}", kind.name());
            draw(c.features.row(0));
        }
    }
    Ok(())
}
