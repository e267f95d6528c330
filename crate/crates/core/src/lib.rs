pub mod hazard;
pub mod rates;
pub mod stats;
pub mod pedigree;
pub mod factors;
pub mod risk;
pub mod calib;
pub mod timecurves;
pub mod simcohort;
pub mod cli;
pub mod api;
