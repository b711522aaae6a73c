//! Dense kernels, temperature softmax, the optimizer and a gradient checker.

mod gradcheck;
mod optim;
mod params;
mod softmax;
pub mod tape;
mod tensor;

pub use gradcheck::{finite_diff_check, sample_coords, GradCheckReport};
pub use optim::{clip_global_norm, rmsprop_update, LrSchedule, RmsPropState};
pub use params::{ParamId, ParamSet};
pub use softmax::{softmax_temp, softmax_temp_f64};
pub use tensor::{affine, dot, Tensor};
