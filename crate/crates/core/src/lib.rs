pub mod convexir;
pub mod envelopes;
pub mod hullcheck;
pub mod interval;
pub mod netdata;
pub mod obbt;
pub mod par;
pub mod relax;
