//! Remaining-parameter and FLOP accounting under node pruning.
//!
//! Cost model: a unit is pruned iff its layer is gated and `γ < threshold`.
//! A surviving unit keeps its bias and every incoming weight whose source
//! unit survives. Each surviving incoming weight costs one multiply-add
//! (2 FLOPs) per output position per example; biases and activations are
//! free. Input features are never pruned.

use serde::{Deserialize, Serialize};

use crate::layers::Topology;
use crate::model::Network;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SparsityReport {
    pub remaining_param_ratio: f64,
    pub remaining_flop_ratio: f64,
    pub remaining_params: u64,
    pub total_params: u64,
    pub remaining_flops: u64,
    pub total_flops: u64,
    /// Per layer, per unit: `true` if the unit survives.
    pub mask: Vec<Vec<bool>>,
}

impl SparsityReport {
    pub fn pruned_units(&self) -> usize {
        self.mask.iter().flatten().filter(|&&m| !m).count()
    }
}

/// Source units feeding a layer and how many weights each contributes to
/// one output unit.
fn inbound(prev: Option<&Topology>, topo: &Topology, input: &[usize]) -> (usize, usize) {
    let src_units = match prev {
        Some(p) => p.units(),
        None => match *topo {
            Topology::Dense { fan_in, .. } if input.len() == 1 => fan_in,
            _ => input[0],
        },
    };
    (src_units, topo.unit_fan_in() / src_units)
}

pub fn sparsity_report(net: &Network, threshold: f64) -> SparsityReport {
    let mask: Vec<Vec<bool>> = net
        .layers
        .iter()
        .map(|l| match &l.gate {
            Some(g) => g.gammas().iter().map(|&x| x >= threshold).collect(),
            None => vec![true; l.units()],
        })
        .collect();

    let (mut rp, mut tp, mut rf, mut tf) = (0u64, 0u64, 0u64, 0u64);
    for (i, layer) in net.layers.iter().enumerate() {
        let topo = &layer.topology;
        let prev = i.checked_sub(1).map(|p| &net.layers[p].topology);
        let (src_units, per_edge) = inbound(prev, topo, &net.spec.input);
        let alive_src = match i {
            0 => src_units,
            _ => mask[i - 1].iter().filter(|&&m| m).count(),
        };
        let alive_out = mask[i].iter().filter(|&&m| m).count() as u64;
        let units = topo.units() as u64;
        let positions = topo.positions() as u64;
        let fan = topo.unit_fan_in() as u64;
        let live_fan = (alive_src * per_edge) as u64;

        tp += units * (fan + 1);
        rp += alive_out * (live_fan + 1);
        tf += units * 2 * fan * positions;
        rf += alive_out * 2 * live_fan * positions;
    }

    SparsityReport {
        remaining_param_ratio: if tp == 0 { 1.0 } else { rp as f64 / tp as f64 },
        remaining_flop_ratio: if tf == 0 { 1.0 } else { rf as f64 / tf as f64 },
        remaining_params: rp,
        total_params: tp,
        remaining_flops: rf,
        total_flops: tf,
        mask,
    }
}
