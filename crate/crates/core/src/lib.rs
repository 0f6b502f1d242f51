//! Numerical laboratory for m-isometric liftings and dilations.
//!
//! Every construction is done on a finite truncation and returned together
//! with the residuals that certify it: defect identities, growth bounds,
//! lifting and dilation relations, operator inequalities.

pub mod error;
pub mod numerics;
pub mod opcore;
pub mod defect;
pub mod serial;
pub mod certificate;
pub mod shiftlift;
pub mod convexlift;
pub mod vnfoguel;
pub mod cli;
