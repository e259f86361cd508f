use crate::error::{Error, Result};

fn check_lengths(predicted: &[(f64, f64)], truth: &[(f64, f64)]) -> Result<()> {
    if predicted.len() != truth.len() || predicted.is_empty() {
        return Err(Error::Dimension {
            context: "displacement metric",
            expected: truth.len(),
            got: predicted.len(),
        });
    }
    Ok(())
}

/// Average displacement error of one trajectory: the root mean squared
/// Euclidean distance over all predicted positions.
pub fn ade(predicted: &[(f64, f64)], truth: &[(f64, f64)]) -> Result<f64> {
    check_lengths(predicted, truth)?;
    let mut acc = 0.0;
    for (p, t) in predicted.iter().zip(truth) {
        let dx = p.0 - t.0;
        let dy = p.1 - t.1;
        acc += dx * dx + dy * dy;
    }
    Ok((acc / predicted.len() as f64).sqrt())
}

/// Final displacement error: Euclidean distance at the last predicted step.
pub fn fde(predicted: &[(f64, f64)], truth: &[(f64, f64)]) -> Result<f64> {
    check_lengths(predicted, truth)?;
    let p = predicted.last().unwrap();
    let t = truth.last().unwrap();
    Ok(((p.0 - t.0).powi(2) + (p.1 - t.1).powi(2)).sqrt())
}

/// Mean-of-distances variant of ADE, emitted alongside the RMSE form for
/// comparability with reports that average distances instead.
pub fn ade_mean_of_distances(predicted: &[(f64, f64)], truth: &[(f64, f64)]) -> Result<f64> {
    check_lengths(predicted, truth)?;
    let mut acc = 0.0;
    for (p, t) in predicted.iter().zip(truth) {
        acc += ((p.0 - t.0).powi(2) + (p.1 - t.1).powi(2)).sqrt();
    }
    Ok(acc / predicted.len() as f64)
}
