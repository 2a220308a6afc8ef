//! Gaussian mixtures with the component count chosen by minimum message
//! length.
//!
//! Fitting starts from `k_max` components and lets EM annihilate those whose
//! responsibility mass cannot pay for their parameters, then removes the
//! weakest survivor one at a time down to `k_min`, keeping the shortest
//! message.

mod fit;
mod gaussian;
mod model;

pub use fit::{fit_mml, Candidate, EmMode, FitTrace, MmlConfig, Selection, TraceEntry, TraceKind};
pub use gaussian::{log_gaussian_pdf, BASE_JITTER, JITTER_ESCALATIONS};
pub use model::{
    e_step, log_likelihood, m_step_annihilating, message_length, message_length_penalty,
    params_per_component, predict, Assignment, MixtureModel, Responsibilities,
};
