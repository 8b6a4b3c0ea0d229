//! Dense matrices, the reverse-mode tape, and a central-difference gradient
//! checker used as an independent oracle for the tape.

mod gradcheck;
mod matrix;
mod tape;

pub use gradcheck::{finite_diff_check, relative_error, GradCheckConfig, GradCheckReport, ParamCheck};
pub use matrix::Matrix;
pub(crate) use matrix::{dot, norm};
pub use tape::{Reduction, Tape, TensorId, PROB_FLOOR};
