use std::collections::VecDeque;

use crate::error::{Error, Result};

/// Appearance feature vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedding(Vec<f32>);

impl Embedding {
    pub fn new(values: Vec<f32>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Input("embedding has non-finite components".into()));
        }
        Ok(Self(values))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f32> {
        self.0
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|&v| (v as f64) * (v as f64)).sum::<f64>().sqrt()
    }

    /// Unit-length copy; a zero vector is returned unchanged.
    pub fn normalized(&self) -> Self {
        let n = self.norm();
        if n == 0.0 {
            return self.clone();
        }
        Self(self.0.iter().map(|&v| (v as f64 / n) as f32).collect())
    }
}

fn check_dims(a: &Embedding, b: &Embedding) -> Result<()> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch {
            expected: a.dim(),
            actual: b.dim(),
        });
    }
    Ok(())
}

fn squared_distance(a: &[f32], b: &[f32]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| {
            let d = x as f64 - y as f64;
            d * d
        })
        .sum()
}

/// Euclidean distance.
pub fn embedding_distance(a: &Embedding, b: &Embedding) -> Result<f64> {
    check_dims(a, b)?;
    Ok(squared_distance(&a.0, &b.0).sqrt())
}

/// Squared distance, or `None` once the running sum exceeds `bound_sq`.
fn squared_distance_bounded(a: &[f32], b: &[f32], bound_sq: f64) -> Option<f64> {
    let mut acc = 0.0f64;
    for (ca, cb) in a.chunks(16).zip(b.chunks(16)) {
        acc += squared_distance(ca, cb);
        if acc > bound_sq {
            return None;
        }
    }
    Some(acc)
}

/// Fixed-capacity FIFO of embeddings saved for one track.
///
/// The first embedding ever stored is kept as a pivot, together with each
/// entry's distance to it, so whole galleries can be skipped by the
/// triangle inequality when they are clearly out of range.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureGallery {
    capacity: usize,
    items: VecDeque<Embedding>,
    pivot: Option<Embedding>,
    pivot_dist: VecDeque<f64>,
    radius: f64,
}

impl FeatureGallery {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "gallery capacity must be positive");
        Self {
            capacity,
            items: VecDeque::with_capacity(capacity.min(128)),
            pivot: None,
            pivot_dist: VecDeque::with_capacity(capacity.min(128)),
            radius: 0.0,
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// Appends `e`, evicting the oldest entry when full.
    pub fn push(&mut self, e: Embedding) {
        let pivot = self.pivot.get_or_insert_with(|| e.clone());
        let d = if pivot.dim() == e.dim() {
            squared_distance(&pivot.0, &e.0).sqrt()
        } else {
            f64::INFINITY
        };
        let mut evicted = false;
        if self.items.len() == self.capacity {
            self.items.pop_front();
            self.pivot_dist.pop_front();
            evicted = true;
        }
        self.items.push_back(e);
        self.pivot_dist.push_back(d);
        self.radius = if evicted {
            self.pivot_dist.iter().copied().fold(0.0, f64::max)
        } else {
            self.radius.max(d)
        };
    }

    pub fn latest(&self) -> Option<&Embedding> {
        self.items.back()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Embedding> {
        self.items.iter()
    }

    /// Minimum distance between `e` and any stored embedding.
    pub fn distance(&self, e: &Embedding) -> Result<f64> {
        let mut best = f64::INFINITY;
        for g in &self.items {
            check_dims(g, e)?;
            best = best.min(squared_distance(&g.0, &e.0));
        }
        if self.items.is_empty() {
            return Err(Error::EmptyGallery);
        }
        Ok(best.sqrt())
    }

    /// Like [`distance`](Self::distance) but only exact when the result is
    /// at most `bound`; returns `Ok(None)` if every entry is farther.
    pub fn distance_within(&self, e: &Embedding, bound: f64) -> Result<Option<f64>> {
        let Some(pivot) = &self.pivot else {
            return Err(Error::EmptyGallery);
        };
        check_dims(pivot, e)?;
        // every entry g satisfies d(e, g) >= d(e, pivot) - radius
        let to_pivot = squared_distance(&pivot.0, &e.0).sqrt();
        if to_pivot - self.radius > bound * (1.0 + 1e-9) + 1e-12 {
            return Ok(None);
        }
        let mut limit = bound * bound;
        let mut best: Option<f64> = None;
        for g in self.items.iter().rev() {
            check_dims(g, e)?;
            let d = match best {
                None => squared_distance_bounded(&g.0, &e.0, limit),
                // later entries only matter when strictly closer
                Some(b) => squared_distance_bounded(&g.0, &e.0, b).filter(|&d| d < b),
            };
            if let Some(d) = d {
                best = Some(d);
                limit = d;
            }
        }
        Ok(best.map(f64::sqrt))
    }
}

/// Minimum distance between `e` and the gallery.
pub fn gallery_distance(gallery: &FeatureGallery, e: &Embedding) -> Result<f64> {
    gallery.distance(e)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn unit(dim: usize, at: usize, scale: f32) -> Embedding {
        let mut v = vec![0.0; dim];
        v[at] = scale;
        Embedding::new(v).unwrap()
    }

    #[test]
    fn distance_examples() {
        let a = unit(512, 0, 1.0);
        let b = unit(512, 1, 1.0);
        assert_eq!(embedding_distance(&a, &a).unwrap(), 0.0);
        assert!((embedding_distance(&a, &b).unwrap() - 2f64.sqrt()).abs() < 1e-12);
        assert!(matches!(
            embedding_distance(&a, &unit(4, 0, 1.0)),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn gallery_examples() {
        let mut g = FeatureGallery::new(4);
        assert!(matches!(g.distance(&unit(8, 0, 1.0)), Err(Error::EmptyGallery)));
        let e = unit(8, 0, 1.0);
        g.push(e.clone());
        assert_eq!(gallery_distance(&g, &e).unwrap(), 0.0);

        let mut g = FeatureGallery::new(4);
        g.push(Embedding::new(vec![0.0; 8]).unwrap());
        g.push(unit(8, 0, 10.0));
        assert_eq!(g.distance(&unit(8, 0, 1.0)).unwrap(), 1.0);
    }

    #[test]
    fn gallery_evicts_oldest() {
        let mut g = FeatureGallery::new(3);
        for i in 0..5 {
            g.push(unit(8, i, 1.0));
        }
        assert_eq!(g.len(), 3);
        assert_eq!(g.iter().next().unwrap(), &unit(8, 2, 1.0));
        assert_eq!(g.latest().unwrap(), &unit(8, 4, 1.0));
    }

    #[test]
    fn bounded_distance_matches_when_close() {
        let mut g = FeatureGallery::new(10);
        g.push(unit(64, 0, 1.0));
        g.push(unit(64, 1, 0.3));
        let q = unit(64, 1, 0.1);
        assert_eq!(g.distance_within(&q, 0.4).unwrap(), Some(g.distance(&q).unwrap()));
        assert_eq!(g.distance_within(&q, 0.1).unwrap(), None);
    }

    #[test]
    fn normalization() {
        let e = Embedding::new(vec![3.0, 4.0]).unwrap();
        let n = e.normalized();
        assert!((n.norm() - 1.0).abs() < 1e-6);
        assert!(Embedding::new(vec![f32::NAN]).is_err());
    }

    fn arb_vec(dim: usize) -> impl Strategy<Value = Embedding> {
        prop::collection::vec(-2.0f32..2.0, dim).prop_map(|v| Embedding::new(v).unwrap())
    }

    proptest! {
        #[test]
        fn symmetric(a in arb_vec(16), b in arb_vec(16)) {
            prop_assert_eq!(embedding_distance(&a, &b).unwrap(), embedding_distance(&b, &a).unwrap());
        }

        #[test]
        fn gallery_min_properties(items in prop::collection::vec(arb_vec(16), 1..12), extra in arb_vec(16), q in arb_vec(16), bound in 0.1..6.0f64) {
            let mut g = FeatureGallery::new(100);
            for e in &items {
                g.push(e.clone());
            }
            let before = g.distance(&q).unwrap();
            prop_assert!(before <= embedding_distance(g.latest().unwrap(), &q).unwrap());
            match g.distance_within(&q, bound).unwrap() {
                Some(d) => prop_assert!((d - before).abs() < 1e-9 && d <= bound),
                None => prop_assert!(before > bound - 1e-9),
            }
            g.push(extra);
            prop_assert!(g.distance(&q).unwrap() <= before);
        }
    }
}
