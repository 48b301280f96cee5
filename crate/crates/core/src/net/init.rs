//! Seeded parameter initialization.
//!
//! Tensors are filled in `ModelParams::NAMES` order from the crate's seeded
//! generator (stream 0), each uniform on (-1/sqrt(fan_in), 1/sqrt(fan_in)),
//! so a given (config, seed) pair reproduces bit-identical weights anywhere.

use rand_chacha::ChaCha20Rng;

use crate::rng::{next_unit_f64, seeded_rng};

use super::{ModelParams, NetworkConfig, CONV_KERNEL};

fn fill_uniform(data: &mut [f64], bound: f64, rng: &mut ChaCha20Rng) {
    for v in data {
        *v = (2.0 * next_unit_f64(rng) - 1.0) * bound;
    }
}

pub fn init_params(cfg: &NetworkConfig, seed: u64) -> ModelParams {
    let mut rng = seeded_rng(seed, 0);
    let mut params = ModelParams::zeros(cfg);
    let h = cfg.hidden;
    let conv_fan_in = CONV_KERNEL.iter().product::<usize>(); // one input channel
                                                             // fan_in per tensor: the input width of the layer the tensor feeds.
    let fan_ins: [usize; 10] = [conv_fan_in, conv_fan_in, h, h, h, h, h, h, h, h];
    for (i, fan_in) in fan_ins.iter().enumerate() {
        let bound = 1.0 / (*fan_in as f64).sqrt();
        fill_uniform(params.field_mut(i).data_mut(), bound, &mut rng);
    }
    params
}
