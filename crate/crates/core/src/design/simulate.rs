use rand::Rng;
use rand_distr::{Distribution as _, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{DesignSpec, Generation, NewExperimentPriors};
use crate::error::Result;
use crate::freq::TwoGroupData;

/// Parameter values a replicate was generated from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Truth {
    pub theta_c: f64,
    pub delta: f64,
    pub psi: f64,
    pub lambda: f64,
}

impl Truth {
    pub fn of(design: &DesignSpec) -> Self {
        Truth {
            theta_c: design.theta_c,
            delta: design.delta,
            psi: design.log_sigma_c,
            lambda: design.lambda(),
        }
    }
}

/// Generating parameters for one replicate under the chosen scheme.
pub fn draw_truth(
    design: &DesignSpec,
    priors: &NewExperimentPriors,
    generation: Generation,
    rng: &mut impl Rng,
) -> Result<Truth> {
    let fixed = Truth::of(design);
    Ok(match generation {
        Generation::Fixed => fixed,
        Generation::Bayesian => {
            Truth { theta_c: priors.theta_c.sample(rng)?, psi: priors.psi.sample(rng)?, ..fixed }
        }
    })
}

/// `y_C ~ N(theta_C, e^(2 psi))`, `y_E ~ N(theta_C + delta, e^(2 (psi + lambda)))`.
pub fn simulate_dataset(
    design: &DesignSpec,
    truth: &Truth,
    rng: &mut impl Rng,
) -> Result<TwoGroupData<f64>> {
    let sd_c = truth.psi.exp();
    let sd_e = (truth.psi + truth.lambda).exp();
    let mut draw = |n: usize, mu: f64, sd: f64| -> Vec<f64> {
        (0..n)
            .map(|_| {
                let z: f64 = StandardNormal.sample(rng);
                mu + sd * z
            })
            .collect()
    };
    let y_c = draw(design.n_c, truth.theta_c, sd_c);
    let y_e = draw(design.n_e, truth.theta_c + truth.delta, sd_e);
    TwoGroupData::new(y_c, y_e)
}
