//! Rank-one identification by cosine similarity against a gallery.

use crate::error::{Error, Result};

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    dot / (na * nb)
}

/// Index of the gallery entry most similar to `probe`; ties go to the lower
/// index.
pub fn best_match(gallery: &[(Vec<f64>, u32)], probe: &[f64]) -> Result<usize> {
    if gallery.is_empty() {
        return Err(Error::invalid("rank_one: empty gallery"));
    }
    if probe.iter().all(|&v| v == 0.0) {
        return Err(Error::invalid("rank_one: zero probe embedding"));
    }
    let mut best = 0usize;
    let mut best_sim = f64::NEG_INFINITY;
    for (idx, (emb, _)) in gallery.iter().enumerate() {
        if emb.len() != probe.len() {
            return Err(Error::invalid("rank_one: embedding length mismatch"));
        }
        if emb.iter().all(|&v| v == 0.0) {
            return Err(Error::invalid("rank_one: zero gallery embedding"));
        }
        let sim = cosine(emb, probe);
        if sim > best_sim {
            best_sim = sim;
            best = idx;
        }
    }
    Ok(best)
}

/// Fraction of probes whose best gallery match carries the same identity.
pub fn rank_one(gallery: &[(Vec<f64>, u32)], probes: &[(Vec<f64>, u32)]) -> Result<f64> {
    if probes.is_empty() {
        return Err(Error::invalid("rank_one: no probes"));
    }
    let mut hits = 0usize;
    for (emb, id) in probes {
        let m = best_match(gallery, emb)?;
        if gallery[m].1 == *id {
            hits += 1;
        }
    }
    Ok(hits as f64 / probes.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    #[test]
    fn self_match_is_perfect() {
        let g: Vec<(Vec<f64>, u32)> = (0..5)
            .map(|i| {
                let mut v = vec![0.1; 8];
                v[i] = 1.0;
                (v, i as u32)
            })
            .collect();
        assert_eq!(rank_one(&g, &g).unwrap(), 1.0);
    }

    #[test]
    fn cosine_is_scale_invariant() {
        let g: Vec<(Vec<f64>, u32)> = (0..4)
            .map(|i| {
                let mut v = vec![0.0; 4];
                v[i] = 1.0;
                (v, i as u32)
            })
            .collect();
        let probes: Vec<(Vec<f64>, u32)> = g
            .iter()
            .map(|(v, id)| (v.iter().map(|x| x * 7.0).collect(), *id))
            .collect();
        assert_eq!(rank_one(&g, &probes).unwrap(), 1.0);
    }

    #[test]
    fn matches_brute_force_similarity_matrix() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let dim = 16;
        let gallery: Vec<(Vec<f64>, u32)> = (0..10)
            .map(|i| {
                (
                    (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect(),
                    i as u32,
                )
            })
            .collect();
        let probes: Vec<(Vec<f64>, u32)> = (0..30)
            .map(|k| {
                (
                    (0..dim).map(|_| rng.gen_range(-1.0..1.0f64)).collect(),
                    (k % 10) as u32,
                )
            })
            .collect();
        for (emb, _) in &probes {
            let got = best_match(&gallery, emb).unwrap();
            // oracle: full similarity matrix, first argmax
            let sims: Vec<f64> = gallery.iter().map(|(g, _)| cosine(g, emb)).collect();
            let mut oracle = 0;
            for (i, &s) in sims.iter().enumerate() {
                if s > sims[oracle] {
                    oracle = i;
                }
            }
            assert_eq!(got, oracle);
        }
    }

    #[test]
    fn ties_break_to_lower_index() {
        let g = vec![
            (vec![1.0, 0.0], 0u32),
            (vec![2.0, 0.0], 1u32), // same direction as index 0
        ];
        assert_eq!(best_match(&g, &[3.0, 0.0]).unwrap(), 0);
    }

    #[test]
    fn empty_gallery_rejected() {
        assert!(matches!(
            best_match(&[], &[1.0]),
            Err(Error::InvalidInput(_))
        ));
    }
}
