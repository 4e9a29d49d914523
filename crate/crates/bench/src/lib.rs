//! Shared fixtures for the criterion benches in `benches/`.

use ndarray::Array2;
use ssb_core::{CapsuleState, Family, InitScheme, Network, RngStream};

pub fn gaussian_state(batch: usize, n: usize, k: usize, seed: u64) -> CapsuleState {
    let mut rng = RngStream::new(seed);
    let data = Array2::from_shape_simple_fn((batch, n * k), || rng.normal());
    CapsuleState::new(data, n, k).expect("positive sizes")
}

pub fn network(family: Family, n: usize, k: usize, depth: usize, sigma_w: f64) -> Network {
    Network::random(
        family,
        n,
        k,
        depth,
        sigma_w,
        InitScheme::Gaussian,
        &mut RngStream::new(1),
    )
    .expect("valid network")
}
