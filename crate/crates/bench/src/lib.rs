//! Shared fixtures for the benchmark targets.

use std::sync::Arc;

use ctxzoom_core::env::generators::{make_random_taxonomy, make_tilted_tent};
use ctxzoom_core::env::EnvironmentInstance;
use ctxzoom_core::rng::{stream_rng, Stream};

pub fn tent(grid: usize) -> Arc<EnvironmentInstance> {
    Arc::new(make_tilted_tent(grid).expect("tent instance"))
}

pub fn taxonomy(leaves: usize) -> Arc<EnvironmentInstance> {
    let mut rng = stream_rng(7, Stream::InstanceGen);
    Arc::new(make_random_taxonomy(leaves, 3, &mut rng).expect("taxonomy instance"))
}
