use crate::error::{Error, Result};

/// Anchor/positive share an identity; anchor/negative do not.
#[derive(Debug, Clone, PartialEq)]
pub struct Triplet {
    pub anchor: Vec<f64>,
    pub positive: Vec<f64>,
    pub negative: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TripletGradient {
    pub anchor: Vec<f64>,
    pub positive: Vec<f64>,
    pub negative: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TripletLoss {
    pub loss: f64,
    /// Gradient of `loss` with respect to each embedding of each triplet.
    pub gradients: Vec<TripletGradient>,
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Mean hinge `max(d(a,p) - d(a,n) + margin, 0)` over the batch, with its
/// gradient. Triplets at or past the hinge contribute zero loss and zero
/// gradient.
pub fn triplet_loss(triplets: &[Triplet], margin: f64) -> Result<TripletLoss> {
    if triplets.is_empty() {
        return Err(Error::EmptyBatch);
    }
    if !(margin > 0.0) {
        return Err(Error::Input(format!("margin must be positive, got {margin}")));
    }
    let dim = triplets[0].anchor.len();
    let n = triplets.len() as f64;
    let mut loss = 0.0;
    let mut gradients = Vec::with_capacity(triplets.len());
    for t in triplets {
        for v in [&t.anchor, &t.positive, &t.negative] {
            if v.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    actual: v.len(),
                });
            }
        }
        let d_pos = dist(&t.anchor, &t.positive);
        let d_neg = dist(&t.anchor, &t.negative);
        let hinge = d_pos - d_neg + margin;
        let mut g = TripletGradient {
            anchor: vec![0.0; dim],
            positive: vec![0.0; dim],
            negative: vec![0.0; dim],
        };
        if hinge > 0.0 {
            loss += hinge;
            for i in 0..dim {
                // d(d_pos)/da = (a - p) / d_pos; zero subgradient when a == p
                let up = if d_pos > 0.0 {
                    (t.anchor[i] - t.positive[i]) / d_pos
                } else {
                    0.0
                };
                let un = if d_neg > 0.0 {
                    (t.anchor[i] - t.negative[i]) / d_neg
                } else {
                    0.0
                };
                g.anchor[i] = (up - un) / n;
                g.positive[i] = -up / n;
                g.negative[i] = un / n;
            }
        }
        gradients.push(g);
    }
    Ok(TripletLoss {
        loss: loss / n,
        gradients,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Triplet on a line with the requested anchor distances.
    fn on_axis(d_pos: f64, d_neg: f64) -> Triplet {
        Triplet {
            anchor: vec![0.0, 0.0],
            positive: vec![d_pos, 0.0],
            negative: vec![0.0, d_neg],
        }
    }

    #[test]
    fn hinge_examples() {
        let easy = triplet_loss(&[on_axis(0.2, 0.9)], 0.5).unwrap();
        assert_eq!(easy.loss, 0.0);
        assert!(easy.gradients[0].anchor.iter().all(|&g| g == 0.0));

        let hard = triplet_loss(&[on_axis(0.8, 0.9)], 0.5).unwrap();
        assert!((hard.loss - 0.4).abs() < 1e-12);

        let both = triplet_loss(&[on_axis(0.2, 0.9), on_axis(0.8, 0.9)], 0.5).unwrap();
        assert!((both.loss - 0.2).abs() < 1e-12);
    }

    #[test]
    fn errors() {
        assert!(matches!(triplet_loss(&[], 0.2), Err(Error::EmptyBatch)));
        let bad = Triplet {
            anchor: vec![0.0; 3],
            positive: vec![0.0; 2],
            negative: vec![0.0; 3],
        };
        assert!(matches!(triplet_loss(&[bad], 0.2), Err(Error::DimensionMismatch { .. })));
    }

    fn random_triplet(rng: &mut ChaCha8Rng, dim: usize) -> Triplet {
        let mut v = || (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect::<Vec<f64>>();
        Triplet {
            anchor: v(),
            positive: v(),
            negative: v(),
        }
    }

    fn coord(t: &mut Triplet, role: usize, i: usize) -> &mut f64 {
        match role {
            0 => &mut t.anchor[i],
            1 => &mut t.positive[i],
            _ => &mut t.negative[i],
        }
    }

    fn loss_of(ts: &[Triplet], m: f64) -> f64 {
        triplet_loss(ts, m).unwrap().loss
    }

    #[test]
    fn gradient_matches_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let margin = 0.5;
        let mut checked = 0;
        while checked < 50 {
            let batch: Vec<Triplet> = (0..3).map(|_| random_triplet(&mut rng, 8)).collect();
            // stay clear of the hinge so finite differences are smooth
            let far = batch.iter().all(|t| {
                let h = dist(&t.anchor, &t.positive) - dist(&t.anchor, &t.negative) + margin;
                h.abs() > 1e-3
            });
            if !far {
                continue;
            }
            let analytic = triplet_loss(&batch, margin).unwrap();
            let step = 1e-5;
            for ti in 0..batch.len() {
                for role in 0..3 {
                    for i in 0..8 {
                        let mut plus = batch.clone();
                        let mut minus = batch.clone();
                        *coord(&mut plus[ti], role, i) += step;
                        *coord(&mut minus[ti], role, i) -= step;
                        let fd = (loss_of(&plus, margin) - loss_of(&minus, margin)) / (2.0 * step);
                        let g = &analytic.gradients[ti];
                        let an = [&g.anchor, &g.positive, &g.negative][role][i];
                        let err = (fd - an).abs() / an.abs().max(fd.abs()).max(1e-8);
                        assert!(err < 1e-6 || (fd - an).abs() < 1e-9, "fd {fd} an {an}");
                    }
                }
            }
            checked += 1;
        }
    }

    #[test]
    fn toy_fit_separates_identities() {
        // Gradient descent directly on embeddings of two identities.
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut points: Vec<Vec<f64>> = (0..6)
            .map(|_| (0..4).map(|_| rng.random_range(-0.1..0.1)).collect())
            .collect();
        let ident = |i: usize| i / 3;
        let margin = 0.5;
        let mut index = Vec::new();
        for a in 0..6 {
            for p in 0..6 {
                for n in 0..6 {
                    if a != p && ident(a) == ident(p) && ident(n) != ident(a) {
                        index.push((a, p, n));
                    }
                }
            }
        }
        let batch = |pts: &Vec<Vec<f64>>| -> Vec<Triplet> {
            index
                .iter()
                .map(|&(a, p, n)| Triplet {
                    anchor: pts[a].clone(),
                    positive: pts[p].clone(),
                    negative: pts[n].clone(),
                })
                .collect()
        };
        let initial = triplet_loss(&batch(&points), margin).unwrap().loss;
        for _ in 0..500 {
            let out = triplet_loss(&batch(&points), margin).unwrap();
            let mut grad = vec![vec![0.0; 4]; 6];
            for (&(a, p, n), g) in index.iter().zip(&out.gradients) {
                for i in 0..4 {
                    grad[a][i] += g.anchor[i];
                    grad[p][i] += g.positive[i];
                    grad[n][i] += g.negative[i];
                }
            }
            for (pt, g) in points.iter_mut().zip(&grad) {
                for i in 0..4 {
                    pt[i] -= 0.5 * g[i];
                }
            }
        }
        let fin = triplet_loss(&batch(&points), margin).unwrap().loss;
        assert!(initial > 0.4);
        assert!(fin < 1e-3, "{initial} -> {fin}");
    }
}
