//! Objectives, perturbations, optimization and hyperparameter search.

pub mod adam;
pub mod grid;
pub mod loss;
pub mod objective;
pub mod perturb;
pub mod trainer;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use grid::{grid_search, write_grid, GridCell, GridOutcome, GridSpec};
pub use loss::{hinge_grad, hinge_loss};
pub use objective::{
    adversarial_shifts, objective_adversarial, objective_normal, objective_random,
    objective_with_shifts, ObjectiveValue,
};
pub use perturb::{
    adversarial_perturbation, gen_adversarial, gen_random_perturbation, random_perturbation,
    Adversarial,
};
pub use trainer::{
    evaluate_split, train, write_loss_curve, EpochStats, TrainConfig, TrainMode, TrainOutcome,
};
