//! Experiment runner for the freshsched models: configuration files, result
//! tables, SVG charts and the command-line front end.

pub mod app;
pub mod config;
pub mod experiment;
pub mod plot;
pub mod table;

pub use config::{parse_config, parse_config_str, ConfigError, Engine, ExperimentSpec, PlotAxis, PolicyEntry, Rate, Sweep};
pub use experiment::{run_experiment, ResultRow, Source, Status};
pub use plot::{emit_plot, render_svg, PlotError};
pub use table::{emit_csv, format_sig6, read_csv, write_csv, TableError, HEADER};
