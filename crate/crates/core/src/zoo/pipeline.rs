//! Feature conditioning applied between extraction and training.
//!
//! Raw magnitudes span several orders of magnitude and train poorly.
//! The standard recipe is log compression followed by standardization
//! with statistics estimated on the training split only, so the test
//! split stays untouched by its own statistics.

use crate::error::Result;
use crate::optim::Sample;
use crate::timefreq::STD_FLOOR;

/// Applies `v -> ln(v + eps)` to every input, then subtracts the mean and
/// divides by the population standard deviation of the *training* inputs.
/// Both splits are transformed in place; returns `(mean, std)` as used.
pub fn log_standardize(train: &mut [Sample], test: &mut [Sample], eps: f64) -> Result<(f64, f64)> {
    for s in train.iter_mut().chain(test.iter_mut()) {
        for v in s.input.data_mut() {
            *v = (*v + eps).ln();
        }
    }

    let n: usize = train.iter().map(|s| s.input.numel()).sum();
    assert!(n > 0, "no training values to standardize against");
    let sum: f64 = train.iter().flat_map(|s| s.input.data().iter()).sum();
    let mean = sum / n as f64;
    let var: f64 = train
        .iter()
        .flat_map(|s| s.input.data().iter())
        .map(|&v| (v - mean) * (v - mean))
        .sum::<f64>()
        / n as f64;
    let std = var.sqrt().max(STD_FLOOR);

    for s in train.iter_mut().chain(test.iter_mut()) {
        for v in s.input.data_mut() {
            *v = (*v - mean) / std;
        }
    }
    Ok((mean, std))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::array::Array;

    fn sample(values: Vec<f64>) -> Sample {
        let n = values.len();
        Sample {
            input: Array::new(vec![1, n], values).unwrap(),
            target: Array::zeros(&[1, 1]),
        }
    }

    #[test]
    fn training_split_ends_up_zero_mean_unit_variance() {
        let mut train = vec![sample(vec![0.1, 1.0]), sample(vec![10.0, 100.0])];
        let mut test = vec![sample(vec![1.0, 1.0])];
        let (mean, std) = log_standardize(&mut train, &mut test, 1e-7).unwrap();
        assert!(std > 0.0);

        let vals: Vec<f64> = train.iter().flat_map(|s| s.input.data().to_vec()).collect();
        let m: f64 = vals.iter().sum::<f64>() / vals.len() as f64;
        let v: f64 = vals.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / vals.len() as f64;
        assert!(m.abs() < 1e-12);
        assert!((v - 1.0).abs() < 1e-12);

        // test values got the training statistics, not their own
        let expect = ((1.0f64 + 1e-7).ln() - mean) / std;
        assert!((test[0].input.data()[0] - expect).abs() < 1e-12);
    }

    #[test]
    fn constant_features_hit_the_std_floor_instead_of_dividing_by_zero() {
        let mut train = vec![sample(vec![2.0, 2.0, 2.0])];
        let (_, std) = log_standardize(&mut train, &mut [], 1e-7).unwrap();
        assert_eq!(std, STD_FLOOR);
        assert!(train[0].input.data().iter().all(|v| v.is_finite()));
    }
}
