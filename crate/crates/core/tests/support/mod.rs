#![allow(dead_code)]
pub mod annotation_scenario;
pub mod dtw_oracle;
pub mod location_oracle;
pub mod loss_oracle;
pub mod metric_cases;
pub mod stay_oracle;
