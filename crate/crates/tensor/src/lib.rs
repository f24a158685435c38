//! Dense `f64` tensors and a recorded-tape reverse-mode differentiator.
//!
//! The primitive set is deliberately small: elementwise arithmetic, matrix
//! products, reshaping, concatenation, a handful of activations, dilated
//! causal convolution along time, and two adjacency normalizations. Each
//! primitive has an analytic adjoint, and [`finite_difference_check`]
//! compares those adjoints against central differences.
//!
//! ```
//! use dan_tensor::{ParamStore, Tape, Tensor};
//!
//! let mut store = ParamStore::new();
//! let w = store.add("w", Tensor::scalar(3.0));
//! let mut tape = Tape::new();
//! let v = tape.param(&store, w);
//! let sq = tape.mul(v, v).unwrap();
//! tape.backward(sq, &mut store).unwrap();
//! assert_eq!(store.get(w).grad.data(), &[6.0]);
//! ```

mod error;
mod gradcheck;
pub mod io;
pub mod ops;
mod param;
mod tape;
mod tensor;

pub use error::{Result, TensorError};
pub use gradcheck::{finite_difference_check, relative_error, GradCheckReport};
pub use ops::{Activation, Padding};
pub use param::{ParamId, ParamStore, Parameter};
pub use tape::{Gradients, Tape, Var};
pub use tensor::Tensor;
