//! Dataset directories, config files, and trace / sweep / JSON outputs.

mod config;
mod dataset;
mod trace;

pub use config::{load_config, parse_config, render_config, RunConfig, CONFIG_KEYS};
pub use dataset::{
    load_dataset, save_dataset, EDGES_FILE, FEATURES_FILE, META_FILE, NODES_FILE, SPARSE_FEATURES_FILE,
};
pub use trace::{
    emit_sweep, emit_trace, parse_trace, read_json, render_sweep, render_trace, write_json, SWEEP_HEADER,
    TRACE_HEADER,
};
