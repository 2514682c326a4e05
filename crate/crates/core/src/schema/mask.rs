use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{ScreenSchema, SchemaError};

/// Literal written in place of a masked payload.
pub const MASK_TOKEN: &str = "<mask>";

/// Masks `floor(fraction * n)` of the `n` payload-bearing TEXT elements.
///
/// Which elements are masked is decided by a generator seeded with `seed`;
/// classes, boxes and tree shape are left untouched.
pub fn mask_text_elements(schema: &ScreenSchema, fraction: f64, seed: u64) -> Result<ScreenSchema, SchemaError> {
    if !(0.0..=1.0).contains(&fraction) {
        return Err(SchemaError::InvalidFraction(fraction));
    }
    let candidates = schema.iter().filter(|el| is_candidate(el)).count();
    let k = (fraction * candidates as f64).floor() as usize;
    let mut out = schema.clone();
    if k == 0 {
        return Ok(out);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut chosen = vec![false; candidates];
    for i in index::sample(&mut rng, candidates, k) {
        chosen[i] = true;
    }
    let mut next = 0;
    out.for_each_mut(|el| {
        if is_candidate(el) {
            if chosen[next] {
                el.mask();
            }
            next += 1;
        }
    });
    Ok(out)
}

fn is_candidate(el: &super::UiElement) -> bool {
    el.class.is_text() && el.payload().is_some()
}
