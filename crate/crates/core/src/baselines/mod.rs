//! Benchmark forecasters: ARIMA, ARIMAX with temperature as regressor, and
//! epsilon-insensitive SVR.

pub mod arima;
pub mod optim;
pub mod svr;

pub use arima::{
    difference, fit_arima, fit_arimax, forecast_walk_forward, undifference, ArimaModel, ArimaOrder, ARIMA_FORMAT,
};
pub use optim::{nelder_mead, Minimum, NelderMeadOptions};
pub use svr::{fit_svr, predict_svr, Kernel, KernelKind, SvrModel, SvrParams, SVR_FORMAT};
