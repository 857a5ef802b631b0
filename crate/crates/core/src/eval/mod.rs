//! Accuracy metrics, correlation analysis and the RSI ablation.

mod ablation;
mod metrics;
mod sensitivity;

pub use ablation::{
    cell_split, check_arms_aligned, fit_and_score, predict_test, run_ablation, AblationConfig, AblationReport, AblationRow, PatternSel,
    PredictionPoint, RegimeSummary, ScoredModel, SeedResult,
};
pub use metrics::{improvement_pct, mean, mse, pearson, rmse, sign_test, SignTest};
pub use sensitivity::{render_sensitivity_table, sensitivity_report, write_plot_csv, SensitivityRow};
