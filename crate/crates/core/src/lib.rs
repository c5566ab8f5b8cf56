//! Multi-type preferential-attachment trees: Malthusian parameter and
//! limiting degree laws, an exact event-driven simulator, a forward-equation
//! oracle, and tools for comparing the two.

pub mod analytic;
pub mod cli;
pub mod oracle;
pub mod presets;
pub mod rates;
pub mod sim;
pub mod stats;
