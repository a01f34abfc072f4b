//! Choosing the number of clusters from a likelihood curve.

use std::io::Write;

use rayon::prelude::*;

use super::{corpus_log_likelihood, gibbs_fit, FitConfig};
use crate::corpus::Corpus;
use crate::error::{EngageError, Result};
use crate::format::{Provenance, TABLE_FORMAT};

/// Seed used for the fit with `k` clusters in a sweep from `base`.
pub fn sweep_seed(base: u64, k: usize) -> u64 {
    base ^ (k as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// Fits one model per entry of `k_values` and returns `(K, log-likelihood)`
/// in the order given.
pub fn sweep_k(corpus: &Corpus, k_values: &[usize], config: &FitConfig) -> Result<Vec<(usize, f64)>> {
    if k_values.is_empty() {
        return Err(EngageError::Config("no K values to sweep".into()));
    }
    k_values
        .par_iter()
        .map(|&k| {
            let cfg = FitConfig { k, seed: sweep_seed(config.seed, k), ..*config };
            let model = gibbs_fit(corpus, &cfg)?;
            Ok((k, corpus_log_likelihood(&model, corpus)?))
        })
        .collect()
}

/// Elbow of a likelihood curve: the interior point with the largest bend
/// `2 y[i] - y[i-1] - y[i+1]`, after sorting by K. Curves with fewer than
/// three points return the K with the highest likelihood.
pub fn elbow_select(curve: &[(usize, f64)]) -> Option<usize> {
    let mut pts = curve.to_vec();
    pts.sort_by_key(|p| p.0);
    if pts.len() < 3 {
        return pts.iter().max_by(|a, b| a.1.total_cmp(&b.1)).map(|p| p.0);
    }
    let mut best = (pts[1].0, f64::NEG_INFINITY);
    for w in pts.windows(3) {
        let bend = 2.0 * w[1].1 - w[0].1 - w[2].1;
        if bend > best.1 {
            best = (w[1].0, bend);
        }
    }
    Some(best.0)
}

/// `k,log_likelihood`, one row per fitted K.
pub fn write_curve_csv<W: Write>(curve: &[(usize, f64)], mut writer: W, provenance: &Provenance) -> Result<()> {
    writeln!(writer, "{}", provenance.csv_comment(TABLE_FORMAT))?;
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["k", "log_likelihood"])?;
    for (k, ll) in curve {
        w.write_record([k.to_string(), ll.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn elbow_of_a_knee() {
        let curve = [(1, -1000.0), (2, -600.0), (3, -300.0), (4, -100.0), (5, -90.0), (6, -85.0)];
        assert_eq!(elbow_select(&curve), Some(4));
        let shuffled = [(5, -90.0), (1, -1000.0), (4, -100.0), (6, -85.0), (3, -300.0), (2, -600.0)];
        assert_eq!(elbow_select(&shuffled), Some(4));
    }

    #[test]
    fn short_curves() {
        assert_eq!(elbow_select(&[]), None);
        assert_eq!(elbow_select(&[(3, -5.0)]), Some(3));
        assert_eq!(elbow_select(&[(3, -5.0), (4, -2.0)]), Some(4));
    }

    #[test]
    fn seeds_differ_per_k() {
        assert_ne!(sweep_seed(7, 2), sweep_seed(7, 3));
        assert_eq!(sweep_seed(7, 2), sweep_seed(7, 2));
    }
}
