pub mod accountability;
pub mod algebra;
pub mod cpabe;
pub mod dsp;
pub mod ledger;
pub mod policy;
pub mod protocol;
