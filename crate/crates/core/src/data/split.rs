use super::{Dataset, Split};
use crate::error::{Error, Result};
use crate::numeric::RngStream;

/// Stratified split. The validation size is `round(n · val_fraction)`;
/// each class contributes `floor(n_c · f)` examples plus one for the classes
/// with the largest remainders (ties to the lower class), so per-class
/// proportions hold within one example.
pub fn split_train_val(ds: &Dataset, val_fraction: f64, rng: &mut RngStream) -> Result<(Dataset, Dataset)> {
    if !(val_fraction > 0.0 && val_fraction < 1.0) {
        return Err(Error::InvalidArgument(format!("val_fraction must be in (0, 1), got {val_fraction}")));
    }
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); ds.classes];
    for (i, &l) in ds.labels.iter().enumerate() {
        by_class[l].push(i);
    }
    let total = (ds.len() as f64 * val_fraction).round() as usize;
    let exact: Vec<f64> = by_class.iter().map(|c| c.len() as f64 * val_fraction).collect();
    let mut take: Vec<usize> = exact.iter().map(|e| e.floor() as usize).collect();
    let mut order: Vec<usize> = (0..ds.classes).collect();
    order.sort_by(|&a, &b| {
        let (ra, rb) = (exact[a] - exact[a].floor(), exact[b] - exact[b].floor());
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    let mut missing = total.saturating_sub(take.iter().sum());
    for &c in order.iter().cycle().take(order.len() * 2) {
        if missing == 0 {
            break;
        }
        if take[c] < by_class[c].len() {
            take[c] += 1;
            missing -= 1;
        }
    }
    let (mut train, mut val) = (Vec::new(), Vec::new());
    for (c, idx) in by_class.iter_mut().enumerate() {
        rng.shuffle(idx);
        val.extend_from_slice(&idx[..take[c]]);
        train.extend_from_slice(&idx[take[c]..]);
    }
    train.sort_unstable();
    val.sort_unstable();
    Ok((ds.subset(&train).with_split(Split::Train), ds.subset(&val).with_split(Split::Val)))
}
