//! Config-driven Monte Carlo experiments on estimation rates.

mod config;
mod rates;

pub use config::{degree_schedule, parse_family, ExperimentConfig, IniDoc};
pub use rates::{
    column_medians, csv_header, fit_slope, fit_slope_csv, rates_csv, run_rates, write_rates,
    RateRecord, THREADS_ENV,
};
