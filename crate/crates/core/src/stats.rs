//! Chi-square tests used to check that shares and protocol transcripts look
//! uniform over the field.

use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::field::Fp;

fn bucket_counts<const P: u64>(samples: &[Fp<P>], buckets: usize) -> Vec<u64> {
    let mut counts = vec![0u64; buckets];
    for s in samples {
        let b = (s.value() as u128 * buckets as u128 / P as u128) as usize;
        counts[b] += 1;
    }
    counts
}

fn chi_square_sf(statistic: f64, dof: f64) -> f64 {
    let dist = ChiSquared::new(dof).expect("positive degrees of freedom");
    1.0 - dist.cdf(statistic)
}

/// Goodness-of-fit p-value against the uniform law on `[0, P)`, using
/// `buckets` equal-width bins.
pub fn uniformity_p_value<const P: u64>(samples: &[Fp<P>], buckets: usize) -> f64 {
    assert!(buckets >= 2 && !samples.is_empty());
    let counts = bucket_counts(samples, buckets);
    let n = samples.len() as f64;
    // exact bin probabilities; the last bins may be one element wider
    let statistic: f64 = counts
        .iter()
        .enumerate()
        .map(|(b, &observed)| {
            let lo = (b as u128 * P as u128).div_ceil(buckets as u128);
            let hi = ((b + 1) as u128 * P as u128).div_ceil(buckets as u128);
            let expected = n * (hi - lo) as f64 / P as f64;
            let diff = observed as f64 - expected;
            diff * diff / expected
        })
        .sum();
    chi_square_sf(statistic, (buckets - 1) as f64)
}

/// Chi-square test of homogeneity between two samples over equal-width bins.
/// A small p-value means the two samples are distinguishable.
pub fn two_sample_p_value<const P: u64>(a: &[Fp<P>], b: &[Fp<P>], buckets: usize) -> f64 {
    assert!(buckets >= 2 && !a.is_empty() && !b.is_empty());
    let ca = bucket_counts(a, buckets);
    let cb = bucket_counts(b, buckets);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let total = na + nb;
    let mut statistic = 0.0;
    let mut used = 0usize;
    for (&x, &y) in ca.iter().zip(&cb) {
        let col = (x + y) as f64;
        if col == 0.0 {
            continue;
        }
        used += 1;
        let ea = na * col / total;
        let eb = nb * col / total;
        statistic += (x as f64 - ea).powi(2) / ea + (y as f64 - eb).powi(2) / eb;
    }
    if used < 2 {
        return 1.0;
    }
    chi_square_sf(statistic, (used - 1) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::FieldElement;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    #[test]
    fn uniform_samples_pass() {
        let mut rng = ChaCha20Rng::seed_from_u64(9);
        let s: Vec<FieldElement> = (0..10_000).map(|_| FieldElement::random(&mut rng)).collect();
        assert!(uniformity_p_value(&s, 20) > 0.01);
    }

    #[test]
    fn constant_samples_fail() {
        let s = vec![FieldElement::new(5); 10_000];
        assert!(uniformity_p_value(&s, 20) < 1e-6);
    }

    #[test]
    fn shifted_distributions_are_detected() {
        let mut rng = ChaCha20Rng::seed_from_u64(4);
        let low: Vec<FieldElement> = (0..5_000)
            .map(|_| FieldElement::new(FieldElement::random(&mut rng).value() / 2))
            .collect();
        let full: Vec<FieldElement> = (0..5_000).map(|_| FieldElement::random(&mut rng)).collect();
        assert!(two_sample_p_value(&low, &full, 20) < 1e-6);
    }

    #[test]
    fn small_field_uniformity() {
        let mut rng = ChaCha20Rng::seed_from_u64(8);
        let s: Vec<Fp<101>> = (0..10_000).map(|_| Fp::random(&mut rng)).collect();
        assert!(uniformity_p_value(&s, 10) > 0.01);
    }
}
