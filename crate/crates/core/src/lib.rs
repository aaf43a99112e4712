//! Distributed multi-satellite MIMO downlink precoding from statistical CSI.
//!
//! Modules build up from the link geometry ([`scenario`]) and channel model
//! ([`channel`]) to the two precoder designs: joint non-coherent WMMSE
//! ([`joint_wmmse`]) and streamwise transmission ([`streamwise`]), with
//! spectral-efficiency evaluation in [`se_eval`].

pub mod assignment;
pub mod baselines;
pub mod channel;
pub mod ellipsoid;
pub mod error;
pub mod experiment;
pub mod joint_wmmse;
pub mod linalg;
pub mod power;
pub mod scenario;
pub mod se_eval;
pub mod streamwise;
pub mod subproblem;

pub use error::{Error, Result};
