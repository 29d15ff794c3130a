//! Identification of pathway-specific potential outcomes from observed data.

mod exact;
mod grid;
mod plugin;

pub use exact::{exact_plugin_po, FittedTables};
pub use grid::{check_grid, default_grid, quantile_grid};
pub use plugin::{fit_plugin, plugin_po, plugin_po_set, PluginDiagnostics, PoEstimate};

pub(crate) use plugin::{functional_value, weighted_plugin};
