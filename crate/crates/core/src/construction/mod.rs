//! The switch construction, the iterated schedule, the condition checker and
//! the non-simplicity witness.

use serde::{Deserialize, Serialize};

pub mod schedule;
pub mod switch;
pub mod witness;

pub use schedule::{
    ksv_check, run_schedule, strand_measures, KsvCondition, KsvReport, Level, Schedule,
    ScheduleConfig, ScheduleRun,
};
pub use switch::{
    build_switch, verify_switch, ShadowStats, SwitchReport, SwitchResult, SwitchSpec,
};
pub use witness::{evaluate_witness, non_simplicity_witness, WitnessConfig, WitnessReport};

/// One inequality with its measured value.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub bound: f64,
    /// "<" or ">="
    pub relation: String,
    pub pass: bool,
    /// distance to the bound, positive when passing
    pub margin: f64,
}

impl Check {
    pub fn below(name: &str, value: f64, bound: f64) -> Self {
        Check {
            name: name.into(),
            value,
            bound,
            relation: "<".into(),
            pass: value < bound,
            margin: bound - value,
        }
    }

    pub fn at_least(name: &str, value: f64, bound: f64) -> Self {
        Check {
            name: name.into(),
            value,
            bound,
            relation: ">=".into(),
            pass: value >= bound,
            margin: value - bound,
        }
    }
}
