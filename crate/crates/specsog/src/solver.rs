//! Assembled evaluation pipeline: near + mid + long - self.

use crate::error::Result;
use crate::fft::Fft3;
use crate::geometry::{CellList, ParticleSystem};
use crate::near_field::{near_potential, self_potential, total_energy};
use crate::params::SolverPlan;
use std::time::Instant;

/// Wall-clock seconds per stage.
#[derive(Debug, Clone, Copy, Default)]
pub struct StageTimings {
    pub near: f64,
    pub mid: f64,
    pub long: f64,
    pub total: f64,
}

#[derive(Debug, Clone)]
pub struct SolveResult {
    /// Total potential at each particle.
    pub potential: Vec<f64>,
    pub near: Vec<f64>,
    pub mid: Vec<f64>,
    pub long: Vec<f64>,
    pub self_term: Vec<f64>,
    /// U = 1/2 sum q_i phi_i.
    pub energy: f64,
    pub timings: StageTimings,
}

/// Runs a plan against particle systems; owns the FFT scratch so repeated
/// evaluations reuse the plans.
pub struct Solver {
    pub plan: SolverPlan,
    fft: Option<Fft3>,
}

impl Solver {
    pub fn new(plan: SolverPlan) -> Self {
        let fft = plan.mid.as_ref().map(|m| m.fft());
        Self { plan, fft }
    }

    pub fn evaluate(&mut self, system: &ParticleSystem) -> Result<SolveResult> {
        let start = Instant::now();
        for d in 0..3 {
            let want = self.plan.box_lengths[d];
            let got = system.box_lengths[d];
            if (want - got).abs() > 1e-12 * want.max(1.0) {
                return Err(crate::error::Error::InvalidParameter(format!(
                    "plan was built for box {:?}, system has {:?}",
                    self.plan.box_lengths, system.box_lengths
                )));
            }
        }

        let t0 = Instant::now();
        let cells = CellList::build(system, self.plan.decomp.r_cut)?;
        let near =
            near_potential(system, &self.plan.decomp, &cells, self.plan.near_table.as_ref())?;
        let t_near = t0.elapsed().as_secs_f64();

        let t0 = Instant::now();
        let mid = match (&self.plan.mid, &mut self.fft) {
            (Some(plan), Some(fft)) => plan.evaluate(system, fft),
            _ => vec![0.0; system.len()],
        };
        let t_mid = t0.elapsed().as_secs_f64();

        let t0 = Instant::now();
        let long = match &self.plan.long {
            Some(plan) => plan.evaluate(system, &self.plan.decomp, self.plan.split_index)?,
            None => vec![0.0; system.len()],
        };
        let t_long = t0.elapsed().as_secs_f64();

        let self_term = self_potential(system, &self.plan.decomp);
        let potential: Vec<f64> = (0..system.len())
            .map(|i| near[i] + mid[i] + long[i] - self_term[i])
            .collect();
        let energy = total_energy(&potential, system)?;
        Ok(SolveResult {
            potential,
            near,
            mid,
            long,
            self_term,
            energy,
            timings: StageTimings {
                near: t_near,
                mid: t_mid,
                long: t_long,
                total: start.elapsed().as_secs_f64(),
            },
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::{direct_shell_sum, OracleOptions};
    use crate::params::{select_parameters, PlanOptions};
    use approx::assert_relative_eq;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_system(n: usize, l: [f64; 3], seed: u64) -> ParticleSystem {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let positions = (0..n)
            .map(|_| {
                [
                    rng.random_range(-l[0] / 2.0..l[0] / 2.0),
                    rng.random_range(-l[1] / 2.0..l[1] / 2.0),
                    rng.random_range(-l[2] / 2.0..l[2] / 2.0),
                ]
            })
            .collect();
        let charges = (0..n).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
        ParticleSystem::new(positions, charges, l).unwrap()
    }

    /// End-to-end smoke: a mid-size random system matches the shell-sum
    /// oracle at the planned tolerance.
    #[test]
    fn matches_oracle_at_tolerance() {
        let l = [4.0, 4.0, 4.0];
        let sys = random_system(40, l, 5);
        for eps in [1e-4, 1e-8] {
            let opts = PlanOptions { eps, ..Default::default() };
            let plan = select_parameters(sys.len(), l, &opts).unwrap();
            let mut solver = Solver::new(plan);
            let result = solver.evaluate(&sys).unwrap();
            let oracle = direct_shell_sum(&sys, &OracleOptions::default()).unwrap();
            let scale = oracle.potentials.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
            let err = result
                .potential
                .iter()
                .zip(&oracle.potentials)
                .fold(0.0f64, |a, (x, y)| a.max((x - y).abs()))
                / scale;
            assert!(err <= 10.0 * eps, "eps {eps:e}: measured {err:e}");
        }
    }

    #[test]
    fn components_assemble() {
        let l = [3.0, 3.0, 2.0];
        let sys = random_system(12, l, 9);
        let opts = PlanOptions { eps: 1e-6, ..Default::default() };
        let plan = select_parameters(sys.len(), l, &opts).unwrap();
        let mut solver = Solver::new(plan);
        let r = solver.evaluate(&sys).unwrap();
        for i in 0..sys.len() {
            assert_relative_eq!(
                r.potential[i],
                r.near[i] + r.mid[i] + r.long[i] - r.self_term[i],
                epsilon = 1e-14
            );
        }
        let e = total_energy(&r.potential, &sys).unwrap();
        assert_relative_eq!(r.energy, e, epsilon = 1e-15);
    }

    #[test]
    fn rejects_wrong_box() {
        let sys = random_system(8, [2.0, 2.0, 2.0], 1);
        let opts = PlanOptions { eps: 1e-4, ..Default::default() };
        let plan = select_parameters(8, [3.0, 3.0, 3.0], &opts).unwrap();
        let mut solver = Solver::new(plan);
        assert!(solver.evaluate(&sys).is_err());
    }
}
