//! The two fully parameterized example systems: the two-wheeled robot and
//! the snakeboard, with controls, closed-form drifts and the planning
//! quadrature.

mod robot;
mod snakeboard;

pub use robot::{
    robot_cbm_problem, robot_drift_closed_form, robot_mean_motion_ode, robot_plan_mean,
    robot_system, PlanResult, RobotControl, RobotParams,
};
pub use snakeboard::{
    snakeboard_experiment, snakeboard_shape_problem, snakeboard_system, snakeboard_xh_problem,
    Snakeboard, SnakeboardControls, SnakeboardExperiment, SnakeboardParams,
};
