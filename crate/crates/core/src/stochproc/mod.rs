//! Target processes, trajectories and conditional tables.

mod hmm;
mod table;

pub use hmm::{
    sample_trajectory, sample_trajectory_with, stationary_distribution, true_conditional, uniform_renewal, Edge,
    HiddenMarkovModel, Trajectory,
};
pub use table::{count_windows, ConditionalTable, TableRow};
