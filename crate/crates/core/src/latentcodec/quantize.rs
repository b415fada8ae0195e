//! Nearest-neighbour vector quantization against a learned codebook.

use crate::error::{Result, SaiiError};
use ndarray::{Array2, Array3};

/// K x c codebook with per-row usage counts from the last training epoch.
#[derive(Debug, Clone)]
pub struct Codebook {
    pub vectors: Array2<f64>,
    pub usage_counts: Vec<u64>,
}

impl Codebook {
    pub fn new(vectors: Array2<f64>) -> Self {
        let k = vectors.nrows();
        Self { vectors, usage_counts: vec![0; k] }
    }

    pub fn size(&self) -> usize {
        self.vectors.nrows()
    }

    pub fn dim(&self) -> usize {
        self.vectors.ncols()
    }

    /// Fraction of codes with non-zero usage.
    pub fn usage_fraction(&self) -> f64 {
        let used = self.usage_counts.iter().filter(|&&c| c > 0).count();
        used as f64 / self.size().max(1) as f64
    }
}

/// Maps every spatial vector of `z_e` to its nearest codebook row (Euclidean,
/// ties resolved to the lowest index). Returns the quantized latent, the index
/// map, and the two unweighted quantization losses
/// `mean||sg(z_e) - e||^2` and `mean||z_e - sg(e)||^2` (equal in value; they
/// differ only in which side receives gradients during training).
pub fn quantize(
    z_e: &Array3<f64>,
    book: &Codebook,
) -> Result<(Array3<f64>, Array2<usize>, f64, f64)> {
    let (c, h, w) = z_e.dim();
    if book.size() == 0 {
        return Err(SaiiError::Parameter("empty codebook".into()));
    }
    if book.dim() != c {
        return Err(SaiiError::Dimension(format!(
            "latent has {c} channels, codebook rows have {}",
            book.dim()
        )));
    }
    let mut z_q = Array3::zeros((c, h, w));
    let mut indices = Array2::zeros((h, w));
    let mut total_sq = 0.0;
    for i in 0..h {
        for j in 0..w {
            let mut best = 0usize;
            let mut best_d = f64::INFINITY;
            for k in 0..book.size() {
                let mut d = 0.0;
                for ci in 0..c {
                    let diff = z_e[[ci, i, j]] - book.vectors[[k, ci]];
                    d += diff * diff;
                }
                if d < best_d {
                    best_d = d;
                    best = k;
                }
            }
            indices[[i, j]] = best;
            total_sq += best_d;
            for ci in 0..c {
                z_q[[ci, i, j]] = book.vectors[[best, ci]];
            }
        }
    }
    let denom = (c * h * w) as f64;
    let loss = total_sq / denom;
    Ok((z_q, indices, loss, loss))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::arr2;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn exact_vectors_quantize_losslessly() {
        let book = Codebook::new(arr2(&[[0.0, 0.0], [1.0, -1.0], [0.5, 0.25]]));
        let mut z = Array3::zeros((2, 2, 2));
        // place codebook rows 1 and 2 into the latent
        z[[0, 0, 0]] = 1.0;
        z[[1, 0, 0]] = -1.0;
        z[[0, 1, 1]] = 0.5;
        z[[1, 1, 1]] = 0.25;
        let (z_q, idx, vq, commit) = quantize(&z, &book).unwrap();
        assert_eq!(z_q, z);
        assert_eq!(vq, 0.0);
        assert_eq!(commit, 0.0);
        assert_eq!(idx[[0, 0]], 1);
        assert_eq!(idx[[1, 1]], 2);
        assert_eq!(idx[[0, 1]], 0);
    }

    #[test]
    fn single_code_book_maps_everything_to_it() {
        let book = Codebook::new(arr2(&[[0.7, -0.2, 0.1]]));
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let z = Array3::from_shape_fn((3, 4, 4), |_| rng.gen_range(-1.0..1.0));
        let (z_q, idx, _, _) = quantize(&z, &book).unwrap();
        assert!(idx.iter().all(|&k| k == 0));
        for i in 0..4 {
            for j in 0..4 {
                assert_eq!(z_q[[0, i, j]], 0.7);
                assert_eq!(z_q[[1, i, j]], -0.2);
                assert_eq!(z_q[[2, i, j]], 0.1);
            }
        }
    }

    #[test]
    fn matches_brute_force_scan() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let book = Codebook::new(Array2::from_shape_fn((17, 3), |_| rng.gen_range(-1.0..1.0)));
        let z = Array3::from_shape_fn((3, 4, 4), |_| rng.gen_range(-1.0..1.0));
        let (z_q, idx, _, _) = quantize(&z, &book).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                let mut dists: Vec<(usize, f64)> = (0..17)
                    .map(|k| {
                        let d: f64 = (0..3)
                            .map(|ci| (z[[ci, i, j]] - book.vectors[[k, ci]]).powi(2))
                            .sum();
                        (k, d)
                    })
                    .collect();
                dists.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap().then(a.0.cmp(&b.0)));
                assert_eq!(idx[[i, j]], dists[0].0);
                for ci in 0..3 {
                    assert_eq!(z_q[[ci, i, j]], book.vectors[[dists[0].0, ci]]);
                }
            }
        }
    }

    #[test]
    fn ties_resolve_to_lowest_index() {
        // two identical rows: the first must win
        let book = Codebook::new(arr2(&[[0.5, 0.5], [0.5, 0.5]]));
        let z = Array3::from_elem((2, 1, 1), 0.4);
        let (_, idx, _, _) = quantize(&z, &book).unwrap();
        assert_eq!(idx[[0, 0]], 0);
    }

    #[test]
    fn output_rows_are_exact_codebook_members() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let book = Codebook::new(Array2::from_shape_fn((9, 2), |_| rng.gen_range(-1.0..1.0)));
        let z = Array3::from_shape_fn((2, 5, 5), |_| rng.gen_range(-1.0..1.0));
        let (z_q, idx, _, _) = quantize(&z, &book).unwrap();
        for i in 0..5 {
            for j in 0..5 {
                let k = idx[[i, j]];
                for ci in 0..2 {
                    assert_eq!(z_q[[ci, i, j]], book.vectors[[k, ci]]);
                }
            }
        }
    }

    #[test]
    fn channel_mismatch_rejected() {
        let book = Codebook::new(arr2(&[[0.0, 0.0]]));
        let z = Array3::zeros((3, 2, 2));
        assert!(quantize(&z, &book).is_err());
    }
}
