use crate::error::{Error, Result};

pub const MAX_HERMITE_ORDER: usize = 40;

/// Probabilists' Hermite polynomial `He_r(x)`, orthogonal under the standard
/// normal density with `∫ φ He_r² = r!`.
pub fn hermite(r: usize, x: f64) -> Result<f64> {
    if r > MAX_HERMITE_ORDER {
        return Err(Error::DegreeTooLarge { degree: r, max: MAX_HERMITE_ORDER });
    }
    let (mut prev, mut cur) = (1.0, x);
    if r == 0 {
        return Ok(prev);
    }
    for n in 1..r {
        let next = x * cur - n as f64 * prev;
        prev = cur;
        cur = next;
    }
    Ok(cur)
}
