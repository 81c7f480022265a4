use amsr_core::gradcheck::{run_suite, GradcheckOptions, GradcheckReport};
use amsr_core::OpKind;

use crate::error::Result;

/// Runs the finite-difference suite over every op and the toy model.
/// `fault` scales one op's backward pass to exercise the failure path.
pub fn gradcheck(fault: Option<OpKind>) -> Result<GradcheckReport> {
    let opts = GradcheckOptions {
        fault,
        ..GradcheckOptions::default()
    };
    Ok(run_suite(&opts)?)
}
