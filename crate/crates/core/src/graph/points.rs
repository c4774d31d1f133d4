use crate::error::{Error, Result};

/// Irregular node coordinates: `n` points in `d` = 2 or 3 dimensions,
/// stored row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct PointCloud {
    coords: Vec<f64>,
    n: usize,
    d: usize,
}

impl PointCloud {
    /// Validates dimension, finiteness, and rejects exactly coincident points.
    pub fn new(coords: Vec<f64>, d: usize) -> Result<Self> {
        if d != 2 && d != 3 {
            return Err(Error::InvalidInput(format!("spatial dimension must be 2 or 3, got {d}")));
        }
        if coords.len() % d != 0 {
            return Err(Error::InvalidInput(format!("{} coordinates is not a multiple of d={d}", coords.len())));
        }
        let n = coords.len() / d;
        if n < 2 {
            return Err(Error::InvalidInput(format!("need at least 2 points, got {n}")));
        }
        if let Some(i) = coords.iter().position(|x| !x.is_finite()) {
            return Err(Error::InvalidInput(format!("non-finite coordinate at point {}", i / d)));
        }
        let cloud = PointCloud { coords, n, d };
        if let Some((a, b)) = cloud.find_duplicate() {
            return Err(Error::InvalidInput(format!("points {a} and {b} coincide")));
        }
        Ok(cloud)
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let d = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != d) {
            return Err(Error::InvalidInput("ragged coordinate rows".into()));
        }
        Self::new(rows.concat(), d)
    }

    fn find_duplicate(&self) -> Option<(usize, usize)> {
        let mut order: Vec<usize> = (0..self.n).collect();
        order.sort_by(|&a, &b| {
            self.point(a)
                .iter()
                .zip(self.point(b))
                .map(|(x, y)| x.total_cmp(y))
                .find(|o| o.is_ne())
                .unwrap_or(std::cmp::Ordering::Equal)
        });
        order.windows(2).find(|w| self.point(w[0]) == self.point(w[1])).map(|w| (w[0].min(w[1]), w[0].max(w[1])))
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.coords[i * self.d..(i + 1) * self.d]
    }

    /// Squared Euclidean distance; every graph builder compares through
    /// this function so brute-force and tree searches agree bit for bit.
    #[inline]
    pub fn dist2(&self, i: usize, j: usize) -> f64 {
        self.point(i).iter().zip(self.point(j)).map(|(a, b)| (a - b) * (a - b)).sum()
    }

    pub fn dist(&self, i: usize, j: usize) -> f64 {
        self.dist2(i, j).sqrt()
    }

    /// New cloud with rows reordered so that new row `perm[i]` is old row `i`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        let mut coords = vec![0.0; self.coords.len()];
        for (old, &new) in perm.iter().enumerate() {
            coords[new * self.d..(new + 1) * self.d].copy_from_slice(self.point(old));
        }
        Self::new(coords, self.d)
    }
}
