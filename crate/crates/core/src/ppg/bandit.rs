use crate::env::{Environment, StepInfo, Transition};
use crate::error::{Error, Result};

/// One-step episodes with two arms paying 1 and 0.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TwoArmBandit {
    pub better_arm: usize,
}

impl Environment for TwoArmBandit {
    fn observation_dim(&self) -> usize {
        1
    }

    fn head_sizes(&self) -> Vec<usize> {
        vec![2]
    }

    fn reset(&mut self, _seed: u64) -> Result<Vec<f64>> {
        Ok(vec![1.0])
    }

    fn step(&mut self, action: &[usize]) -> Result<Transition> {
        match action {
            [a] if *a < 2 => {
                let reward = if *a == self.better_arm { 1.0 } else { 0.0 };
                Ok(Transition {
                    observation: vec![1.0],
                    reward,
                    done: true,
                    info: StepInfo { throughput: reward, utility: reward, ..StepInfo::default() },
                })
            }
            _ => Err(Error::Action(format!("bandit expects one arm index in 0..2, got {action:?}"))),
        }
    }
}
