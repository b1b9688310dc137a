//! Product quantization of object features into code sequences.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use scenediff::quantizer::fit_codebook;

fn main() -> scenediff::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    // Four chunk prototypes plus noise.
    let protos = [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0]];
    let features: Vec<Vec<f64>> = (0..200)
        .map(|_| {
            (0..4)
                .flat_map(|_| {
                    let p = protos[rng.random_range(0..4)];
                    [p[0] + rng.random_range(-0.05..0.05), p[1] + rng.random_range(-0.05..0.05)]
                })
                .collect()
        })
        .collect();

    for size in [2, 4, 8, 16] {
        let cb = fit_codebook(&features, size, 4, 50, 7)?;
        println!("K_f = {size:>2}: reconstruction error {:.4}", cb.reconstruction_error(&features)?);
    }
    let cb = fit_codebook(&features, 4, 4, 50, 7)?;
    let codes = cb.encode(&features[0])?;
    let back = cb.decode(&codes)?;
    println!("feature {:.2?}", features[0]);
    println!("codes   {codes:?}");
    println!("decoded {back:.2?}");
    assert_eq!(cb.encode(&back)?, codes);
    Ok(())
}
