//! A whole babble-then-refine experiment held in memory.

use crate::config::ExperimentConfig;
use crate::error::Error;
use crate::pipeline::{
    babble_and_fit, derive_seed, run_evaluation, run_refinement, streams, BabbleReport, Learner, RmseReport,
    TrialRecord,
};
use crate::plant::{Plant, PlantSnapshot, CONTROL_RATE_HZ};
use crate::trajectory::{sample, DesiredKinematics};

pub struct Experiment {
    pub config: ExperimentConfig,
    pub plant: Plant,
    pub learner: Learner,
    pub desired: DesiredKinematics,
    /// `None` when the experiment was restored from disk.
    pub babble: Option<BabbleReport>,
    /// Trials run by this instance, in order.
    pub trials: Vec<TrialRecord>,
    completed: usize,
    evaluated: bool,
}

impl Experiment {
    fn plant_for(cfg: &ExperimentConfig) -> Result<Plant, Error> {
        Plant::new(
            cfg.plant.limb.clone(),
            derive_seed(cfg.seed, streams::PLANT),
            cfg.plant.noise_std,
        )
    }

    /// Builds the plant, babbles and fits the initial maps.
    pub fn babble(config: ExperimentConfig) -> Result<Self, Error> {
        config.validate()?;
        let desired = sample(&config.trajectory_spec()?, CONTROL_RATE_HZ);
        let mut plant = Self::plant_for(&config)?;
        let (learner, report) = babble_and_fit(&mut plant, &config.babble, &config.network, config.seed)?;
        Ok(Experiment {
            config,
            plant,
            learner,
            desired,
            babble: Some(report),
            trials: Vec::new(),
            completed: 0,
            evaluated: false,
        })
    }

    /// Continues after `completed` refinements from saved state.
    pub fn restore(
        config: ExperimentConfig,
        plant_state: &PlantSnapshot,
        learner: Learner,
        completed: usize,
    ) -> Result<Self, Error> {
        config.validate()?;
        if completed > config.refinement.num_refinements {
            return Err(Error::Config(format!(
                "refinement.num_refinements: run already has {completed} refinements, config asks for {}",
                config.refinement.num_refinements
            )));
        }
        let desired = sample(&config.trajectory_spec()?, CONTROL_RATE_HZ);
        let mut plant = Self::plant_for(&config)?;
        plant.restore(plant_state);
        Ok(Experiment {
            config,
            plant,
            learner,
            desired,
            babble: None,
            trials: Vec::new(),
            completed,
            evaluated: false,
        })
    }

    pub fn completed_refinements(&self) -> usize {
        self.completed
    }

    pub fn is_finished(&self) -> bool {
        self.evaluated
    }

    /// Runs the next refinement, or the final evaluation trial once all
    /// refinements are done. Returns `None` when nothing is left.
    pub fn step(&mut self) -> Result<Option<&TrialRecord>, Error> {
        if self.evaluated {
            return Ok(None);
        }
        let cfg = &self.config;
        let rec = if self.completed < cfg.refinement.num_refinements {
            let k = self.completed + 1;
            let rec = run_refinement(
                &mut self.plant,
                &mut self.learner,
                &self.desired,
                &cfg.refinement,
                &cfg.network,
                cfg.seed,
                k,
            )?;
            self.completed = k;
            rec
        } else {
            let rec = run_evaluation(&mut self.plant, &self.learner, &self.desired, &cfg.refinement, cfg.seed)?;
            self.evaluated = true;
            rec
        };
        self.trials.push(rec);
        Ok(self.trials.last())
    }

    /// Runs every remaining refinement and the evaluation trial.
    pub fn finish(&mut self) -> Result<(), Error> {
        while self.step()?.is_some() {}
        Ok(())
    }

    /// Babble, refine and evaluate with `config`.
    pub fn run(config: ExperimentConfig) -> Result<Self, Error> {
        let mut exp = Self::babble(config)?;
        exp.finish()?;
        Ok(exp)
    }

    /// RMSE of each trial run by this instance.
    pub fn rmse_history(&self) -> Vec<RmseReport> {
        self.trials.iter().map(|t| t.rmse.clone()).collect()
    }
}
