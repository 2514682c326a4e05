use std::collections::BTreeMap;

use super::MetricError;

/// Geometric mean over tasks of `variant[task] / baseline[task]`.
pub fn aggregate_score(
    variant: &BTreeMap<String, f64>,
    baseline: &BTreeMap<String, f64>,
) -> Result<f64, MetricError> {
    if variant.len() != baseline.len() || variant.keys().ne(baseline.keys()) {
        let only_variant: Vec<_> = variant.keys().filter(|k| !baseline.contains_key(*k)).collect();
        let only_baseline: Vec<_> = baseline.keys().filter(|k| !variant.contains_key(*k)).collect();
        return Err(MetricError::KeyMismatch(format!(
            "only in variant {only_variant:?}, only in baseline {only_baseline:?}"
        )));
    }
    if variant.is_empty() {
        return Err(MetricError::EmptyCorpus);
    }
    let mut log_sum = 0.0;
    let mut any_zero = false;
    for (task, &v) in variant {
        let b = baseline[task];
        if !(b > 0.0 && b.is_finite()) {
            return Err(MetricError::NonPositiveBaseline { task: task.clone(), score: b });
        }
        if !(v >= 0.0 && v.is_finite()) {
            return Err(MetricError::NegativeScore { task: task.clone(), score: v });
        }
        if v == 0.0 {
            any_zero = true;
        } else {
            log_sum += (v / b).ln();
        }
    }
    if any_zero {
        return Ok(0.0);
    }
    Ok((log_sum / variant.len() as f64).exp())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn map(v: &[(&str, f64)]) -> BTreeMap<String, f64> {
        v.iter().map(|(k, s)| (k.to_string(), *s)).collect()
    }

    #[test]
    fn unit_ratios() {
        let s = map(&[("a", 0.3), ("b", 0.7)]);
        assert!((aggregate_score(&s, &s).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn reciprocal_ratios() {
        let v = map(&[("a", 2.0), ("b", 0.5)]);
        let b = map(&[("a", 1.0), ("b", 1.0)]);
        assert!((aggregate_score(&v, &b).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn single_task() {
        let v = map(&[("a", 0.6)]);
        let b = map(&[("a", 0.8)]);
        assert!((aggregate_score(&v, &b).unwrap() - 0.75).abs() < 1e-12);
    }

    #[test]
    fn errors() {
        let v = map(&[("a", 1.0)]);
        assert!(matches!(aggregate_score(&v, &map(&[("b", 1.0)])), Err(MetricError::KeyMismatch(_))));
        assert!(matches!(aggregate_score(&v, &map(&[("a", 0.0)])), Err(MetricError::NonPositiveBaseline { .. })));
        assert!(matches!(aggregate_score(&map(&[("a", -1.0)]), &v), Err(MetricError::NegativeScore { .. })));
        assert_eq!(aggregate_score(&map(&[("a", 0.0)]), &v).unwrap(), 0.0);
    }

    proptest! {
        #[test]
        fn scale_covariant(scores in prop::collection::vec((0.01f64..1.0, 0.01f64..1.0), 1..8), k in 0.1f64..10.0) {
            let v: BTreeMap<String, f64> = scores.iter().enumerate().map(|(i, s)| (format!("t{i}"), s.0)).collect();
            let b: BTreeMap<String, f64> = scores.iter().enumerate().map(|(i, s)| (format!("t{i}"), s.1)).collect();
            let base = aggregate_score(&v, &b).unwrap();
            let mut scaled = v.clone();
            *scaled.get_mut("t0").unwrap() *= k;
            let expected = base * k.powf(1.0 / scores.len() as f64);
            prop_assert!((aggregate_score(&scaled, &b).unwrap() - expected).abs() < 1e-9 * expected.max(1.0));
        }
    }
}
