//! The numeric substrate: dense tensors, layer forward/backward pairs, and
//! a finite-difference gradient checker.
//!
//! All math is `f64`. Forward passes are pure; backward passes accumulate
//! into explicit gradient slots. There is no tape: the op set is small and
//! closed, and each op's backward contract is tested directly against
//! central differences.

pub mod attention;
pub mod gradcheck;
pub mod ops;
pub mod tensor;

pub use attention::{
    multi_head_attention, multi_head_attention_backward, AttentionCache, AttentionGrads,
    AttentionParams, MASK_BIAS,
};
pub use gradcheck::{grad_check, GradCheckReport, DEFAULT_STEP, DEFAULT_TOL_REL};
pub use ops::{
    dropout, dropout_backward, embedding_backward, embedding_lookup, gelu, gelu_backward,
    layer_norm, layer_norm_backward, linear, linear_backward, softmax_rows, softmax_rows_backward,
    DropoutMask, LayerNormCache, LAYER_NORM_EPS,
};
pub use tensor::{Param, ParamStore, Tensor};
