//! Shared inputs for the benchmarks under benches/.

use valvemorph::phantom::{generate_phantom, PhantomParams};
use valvemorph::LabeledVolume;

/// Default valve phantom at the given spacing.
pub fn phantom(spacing: f64) -> LabeledVolume {
    generate_phantom(&PhantomParams {
        spacing,
        ..PhantomParams::default()
    })
    .expect("default phantom is valid")
    .0
}

/// Scattered samples of a smooth saddle on a jittered `side × side` grid.
pub fn saddle_samples(side: usize) -> (Vec<[f64; 2]>, Vec<f64>) {
    let mut sites = Vec::with_capacity(side * side);
    let mut values = Vec::with_capacity(side * side);
    for i in 0..side {
        for j in 0..side {
            let jitter = 0.3 * ((i * 7 + j * 13) % 11) as f64 / 11.0;
            let (u, v) = (i as f64 + jitter, j as f64 - jitter);
            sites.push([u, v]);
            values.push(0.05 * (u * u - v * v) + 0.5 * (0.3 * u).sin());
        }
    }
    (sites, values)
}
