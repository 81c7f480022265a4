//! Matrix functions built from tape primitives, so they differentiate by
//! construction.

use crate::autograd::{Tape, Var};
use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

pub const NEWTON_SCHULZ_ITERS: usize = 5;

/// Approximate square root of each symmetric PSD matrix in an `n×1×C×C`
/// tensor by the coupled Newton–Schulz iteration.
///
/// Each matrix is divided by its trace, iterated `iters` times with
/// `Y ← ½·Y(3I − ZY)`, `Z ← ½·(3I − ZY)Z` from `Y₀ = Â`, `Z₀ = I`, and the
/// result rescaled by `√tr(A)`. A matrix with trace below 1e-12 maps to zero.
pub fn newton_schulz_sqrt<T: Scalar>(tape: &mut Tape<T>, a: Var, iters: usize) -> Result<Var> {
    let s = tape.shape(a);
    if s.c != 1 || s.h != s.w {
        return Err(Error::InvalidShape {
            op: "newton_schulz_sqrt",
            shape: s,
            reason: "expected n×1×C×C square matrices".into(),
        });
    }
    if iters == 0 {
        return Err(Error::contract("newton_schulz_sqrt needs at least one iteration"));
    }
    let tr = tape.trace(a)?;
    let inv_tr = tape.guarded_recip(tr)?;
    let sqrt_tr = tape.guarded_sqrt(tr)?;
    let normalized = tape.mul(a, inv_tr)?;
    let three_eye = tape.constant(Tensor::identity(s.n, s.h).map(|v| v * T::of(3.0)))?;

    let mut y = normalized;
    let mut z = tape.constant(Tensor::identity(s.n, s.h))?;
    for _ in 0..iters {
        let zy = tape.matmul(z, y)?;
        let neg = tape.scale(zy, -1.0)?;
        let t = tape.add(three_eye, neg)?;
        let t = tape.scale(t, 0.5)?;
        let y_next = tape.matmul(y, t)?;
        let z_next = tape.matmul(t, z)?;
        y = y_next;
        z = z_next;
    }
    tape.mul(y, sqrt_tr)
}
