//! Fuzzy-rough set primitives: a Gaussian similarity relation, graded
//! memberships over a finite universe, and the lower/upper approximation
//! operators built from them.
//!
//! The lower approximation of `x` with respect to a fuzzy set `d` is
//! `min_y max(1 - R(x, y), d(y))`; the upper approximation is
//! `max_y min(R(x, y), d(y))`. Both are taken over a finite universe, so
//! the infimum and supremum are attained.

use ndarray::{Array2, ArrayView1};

use crate::error::{config, input, Result};
use crate::Scalar;

/// Gaussian similarity relation `exp(-|x - y|^2 / (2 sigma^2))`.
///
/// Values lie in `[0, 1]`, `R(x, x) = 1` and `R(x, y) = R(y, x)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Kernel<T> {
    sigma: T,
}

impl<T: Scalar> Kernel<T> {
    /// `sigma` must be positive; `+inf` is accepted and gives the constant
    /// relation `R = 1`.
    pub fn gaussian(sigma: T) -> Result<Self> {
        if !(sigma > T::zero()) {
            return config(format!("kernel bandwidth must be positive, got {sigma}"));
        }
        Ok(Self { sigma })
    }

    pub fn sigma(&self) -> T {
        self.sigma
    }

    /// Similarity without the dimension check. Callers guarantee equal lengths.
    #[inline]
    pub(crate) fn eval(&self, x: &[T], y: &[T]) -> T {
        let sq: T = x.iter().zip(y).map(|(&a, &b)| (a - b) * (a - b)).sum();
        self.eval_sq_dist(sq)
    }

    #[inline]
    pub(crate) fn eval_sq_dist(&self, sq: T) -> T {
        let two = T::of(2.0);
        (-(sq / (two * self.sigma * self.sigma))).exp()
    }
}

impl<T: Scalar> Default for Kernel<T> {
    fn default() -> Self {
        Self { sigma: T::one() }
    }
}

pub fn kernel_similarity<T: Scalar>(x: &[T], y: &[T], k: &Kernel<T>) -> Result<T> {
    if x.len() != y.len() {
        return input(format!("dimension mismatch: {} vs {}", x.len(), y.len()));
    }
    Ok(k.eval(x, y))
}

/// Ordered, nonempty set of samples sharing one dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct Universe<T> {
    samples: Array2<T>,
}

impl<T: Scalar> Universe<T> {
    /// Rows of `samples` are the universe elements.
    pub fn new(samples: Array2<T>) -> Result<Self> {
        if samples.nrows() == 0 {
            return input("universe is empty");
        }
        if samples.ncols() == 0 {
            return input("universe samples have dimension 0");
        }
        Ok(Self { samples })
    }

    pub fn from_rows(rows: &[Vec<T>]) -> Result<Self> {
        let Some(first) = rows.first() else {
            return input("universe is empty");
        };
        let d = first.len();
        if rows.iter().any(|r| r.len() != d) {
            return input("universe samples have differing dimensions");
        }
        let flat: Vec<T> = rows.iter().flatten().copied().collect();
        let samples = Array2::from_shape_vec((rows.len(), d), flat)
            .map_err(|e| crate::Error::Input(e.to_string()))?;
        Self::new(samples)
    }

    pub fn len(&self) -> usize {
        self.samples.nrows()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn dim(&self) -> usize {
        self.samples.ncols()
    }

    pub fn sample(&self, i: usize) -> ArrayView1<'_, T> {
        self.samples.row(i)
    }

    pub fn samples(&self) -> &Array2<T> {
        &self.samples
    }
}

/// Membership degrees indexed by universe position.
#[derive(Debug, Clone, PartialEq)]
pub struct FuzzySet<T> {
    membership: Vec<T>,
}

impl<T: Scalar> FuzzySet<T> {
    pub fn new(membership: Vec<T>) -> Result<Self> {
        if let Some(bad) = membership
            .iter()
            .find(|&&m| !(m >= T::zero() && m <= T::one()))
        {
            return input(format!("membership degree {bad} outside [0, 1]"));
        }
        Ok(Self { membership })
    }

    /// The similarity class of `target`: `d(y) = R(y, target)` for every `y` in `u`.
    pub fn similarity_class(target: &[T], u: &Universe<T>, k: &Kernel<T>) -> Result<Self> {
        if target.len() != u.dim() {
            return input(format!(
                "target has dimension {}, universe has {}",
                target.len(),
                u.dim()
            ));
        }
        let membership = u
            .samples
            .rows()
            .into_iter()
            .map(|y| k.eval(y.as_slice().expect("standard layout"), target))
            .collect();
        Ok(Self { membership })
    }

    pub fn complement(&self) -> Self {
        Self {
            membership: self.membership.iter().map(|&m| T::one() - m).collect(),
        }
    }

    pub fn degree(&self, i: usize) -> T {
        self.membership[i]
    }

    pub fn degrees(&self) -> &[T] {
        &self.membership
    }

    pub fn len(&self) -> usize {
        self.membership.len()
    }

    pub fn is_empty(&self) -> bool {
        self.membership.is_empty()
    }
}

fn check_operands<T: Scalar>(x: &[T], d: &FuzzySet<T>, u: &Universe<T>) -> Result<()> {
    if x.len() != u.dim() {
        return input(format!(
            "sample has dimension {}, universe has {}",
            x.len(),
            u.dim()
        ));
    }
    if d.len() != u.len() {
        return input(format!(
            "fuzzy set covers {} elements, universe has {}",
            d.len(),
            u.len()
        ));
    }
    Ok(())
}

/// `min_{y in u} max(1 - R(x, y), d(y))`.
pub fn fuzzy_lower_approx<T: Scalar>(
    x: &[T],
    d: &FuzzySet<T>,
    u: &Universe<T>,
    k: &Kernel<T>,
) -> Result<T> {
    check_operands(x, d, u)?;
    Ok(u
        .samples
        .rows()
        .into_iter()
        .zip(&d.membership)
        .map(|(y, &dy)| (T::one() - k.eval(x, y.as_slice().expect("standard layout"))).max(dy))
        .fold(T::one(), T::min))
}

/// `max_{y in u} min(R(x, y), d(y))`.
pub fn fuzzy_upper_approx<T: Scalar>(
    x: &[T],
    d: &FuzzySet<T>,
    u: &Universe<T>,
    k: &Kernel<T>,
) -> Result<T> {
    check_operands(x, d, u)?;
    Ok(u
        .samples
        .rows()
        .into_iter()
        .zip(&d.membership)
        .map(|(y, &dy)| k.eval(x, y.as_slice().expect("standard layout")).min(dy))
        .fold(T::zero(), T::max))
}

/// Degree to which `y` belongs to the fuzzy class of nodes similar to `target`.
pub fn node_membership<T: Scalar>(target: &[T], y: &[T], k: &Kernel<T>) -> Result<T> {
    kernel_similarity(y, target, k)
}
