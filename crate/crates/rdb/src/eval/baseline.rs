use crate::data::TrajectoryWindow;
use crate::error::{Error, Result};
use crate::rng::SeedRng;

/// Extrapolate the mean velocity of the observation window.
pub fn constant_velocity_predict(obs: &[(f64, f64)], pred_len: usize) -> Result<Vec<(f64, f64)>> {
    if obs.len() < 2 {
        return Err(Error::Config(
            "constant-velocity baseline needs at least two observed positions".into(),
        ));
    }
    let n = obs.len() as f64;
    let first = obs[0];
    let last = obs[obs.len() - 1];
    let vx = (last.0 - first.0) / (n - 1.0);
    let vy = (last.1 - first.1) / (n - 1.0);
    Ok((1..=pred_len)
        .map(|i| (last.0 + vx * i as f64, last.1 + vy * i as f64))
        .collect())
}

/// Uniform random positions on the unit square, one per predicted step.
pub fn random_predict(pred_len: usize, rng: &mut SeedRng) -> Vec<(f64, f64)> {
    (0..pred_len)
        .map(|_| (rng.uniform(), rng.uniform()))
        .collect()
}

/// Ground-truth lookup (the oracle stub used to validate the harness).
pub fn oracle_predict(window: &TrajectoryWindow) -> Vec<(f64, f64)> {
    window.pred().iter().map(|s| (s.x, s.y)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_motion_extrapolates_exactly() {
        let obs = vec![(0.0, 0.0), (0.1, 0.0)];
        let pred = constant_velocity_predict(&obs, 3).unwrap();
        let want = [(0.2, 0.0), (0.3, 0.0), (0.4, 0.0)];
        for (p, w) in pred.iter().zip(&want) {
            assert!((p.0 - w.0).abs() < 1e-12 && (p.1 - w.1).abs() < 1e-12);
        }
    }

    #[test]
    fn stationary_stays_stationary() {
        let obs = vec![(0.5, 0.5); 4];
        let pred = constant_velocity_predict(&obs, 5).unwrap();
        assert!(pred.iter().all(|p| *p == (0.5, 0.5)));
    }

    #[test]
    fn single_observation_is_an_error() {
        assert!(constant_velocity_predict(&[(0.0, 0.0)], 3).is_err());
    }
}
