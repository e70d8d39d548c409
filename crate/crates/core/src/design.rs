//! Index designs for incomplete U-statistics.

use rand::Rng;

use crate::error::{Error, Result};

/// A multiset of index tuples addressing a sample of size `n`.
///
/// Tuples may repeat; indices within one tuple are distinct.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Design<const K: usize> {
    tuples: Vec<[usize; K]>,
    n: usize,
}

pub type PairDesign = Design<2>;
pub type QuadDesign = Design<4>;

impl<const K: usize> Design<K> {
    pub fn new(tuples: Vec<[usize; K]>, n: usize) -> Result<Self> {
        for t in &tuples {
            if t.iter().any(|&i| i >= n) {
                return Err(Error::Shape(format!("tuple {t:?} out of range for n = {n}")));
            }
            for a in 0..K {
                for b in (a + 1)..K {
                    if t[a] == t[b] {
                        return Err(Error::RepeatedIndex(t.to_vec()));
                    }
                }
            }
        }
        Ok(Self { tuples, n })
    }

    pub fn tuples(&self) -> &[[usize; K]] {
        &self.tuples
    }

    pub fn len(&self) -> usize {
        self.tuples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tuples.is_empty()
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub(crate) fn check_against(&self, n: usize) -> Result<()> {
        if self.tuples.is_empty() {
            return Err(Error::EmptyDesign);
        }
        if self.n > n {
            return Err(Error::Shape(format!(
                "design addresses {} rows, sample has {n}",
                self.n
            )));
        }
        Ok(())
    }
}

/// Design size l = round(r·n).
pub fn design_size(n: usize, r: f64) -> Result<usize> {
    if !(r > 0.0 && r.is_finite()) {
        return Err(Error::InvalidParameter(format!("design ratio r = {r}")));
    }
    Ok((r * n as f64).round() as usize)
}

/// `l` ordered pairs drawn uniformly, with replacement, from the n(n−1) pairs
/// of distinct indices.
pub fn sample_pair_design<R: Rng + ?Sized>(n: usize, l: usize, rng: &mut R) -> Result<PairDesign> {
    if n < 2 {
        return Err(Error::InvalidParameter(format!("pair design needs n >= 2, got {n}")));
    }
    let tuples = (0..l)
        .map(|_| {
            let i = rng.random_range(0..n);
            let mut j = rng.random_range(0..n - 1);
            if j >= i {
                j += 1;
            }
            [i, j]
        })
        .collect();
    Ok(Design { tuples, n })
}

/// Every ordered pair of distinct indices.
pub fn complete_pair_design(n: usize) -> PairDesign {
    let tuples = (0..n)
        .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| [i, j]))
        .collect();
    Design { tuples, n }
}

/// The fixed design of the linear-time estimator: (1,0), (3,2), ...
/// An odd trailing row is dropped.
pub fn linear_pair_design(n: usize) -> Result<PairDesign> {
    if n < 2 {
        return Err(Error::InvalidParameter(format!("linear design needs n >= 2, got {n}")));
    }
    let tuples = (0..n / 2).map(|i| [2 * i + 1, 2 * i]).collect();
    Ok(Design { tuples, n })
}

/// `l` ordered 4-tuples of distinct indices drawn uniformly with replacement.
pub fn sample_quad_design<R: Rng + ?Sized>(n: usize, l: usize, rng: &mut R) -> Result<QuadDesign> {
    if n < 4 {
        return Err(Error::InvalidParameter(format!("quadruple design needs n >= 4, got {n}")));
    }
    let tuples = (0..l)
        .map(|_| {
            // Sequential draw without replacement within the tuple.
            let mut t = [0usize; 4];
            for k in 0..4 {
                let mut v = rng.random_range(0..n - k);
                let mut taken: Vec<usize> = t[..k].to_vec();
                taken.sort_unstable();
                for &u in &taken {
                    if v >= u {
                        v += 1;
                    }
                }
                t[k] = v;
            }
            t
        })
        .collect();
    Ok(Design { tuples, n })
}

/// All ordered 4-tuples of distinct indices in `range`.
pub(crate) fn ordered_quads(range: std::ops::Range<usize>) -> Vec<[usize; 4]> {
    let mut out = Vec::new();
    for i in range.clone() {
        for j in range.clone() {
            if j == i {
                continue;
            }
            for q in range.clone() {
                if q == i || q == j {
                    continue;
                }
                for r in range.clone() {
                    if r != i && r != j && r != q {
                        out.push([i, j, q, r]);
                    }
                }
            }
        }
    }
    out
}

pub fn complete_quad_design(n: usize) -> QuadDesign {
    Design {
        tuples: ordered_quads(0..n),
        n,
    }
}

/// Union over consecutive blocks of size `block` of all ordered distinct
/// 4-tuples inside each block. Trailing `n mod block` rows are unused.
pub fn block_design(n: usize, block: usize) -> Result<QuadDesign> {
    if block < 4 {
        return Err(Error::InvalidParameter(format!("block size {block} < 4")));
    }
    if n < block {
        return Err(Error::InvalidParameter(format!("n = {n} smaller than block size {block}")));
    }
    let tuples = (0..n / block)
        .flat_map(|t| ordered_quads(t * block..(t + 1) * block))
        .collect();
    Ok(Design { tuples, n })
}
