//! Built-in periodic coefficient family used for `a(x, y)`, `b(x, y)` and `f(x, y)`.

use std::fmt;
use std::sync::Arc;

use crate::scalar::Real;

/// Function of the slow variable `x` and the fast variable `y`, 1-periodic in both.
#[derive(Clone)]
pub enum Coefficient<T> {
    Constant(T),
    /// `2 + cos(2πy)`
    TwoPlusCosY,
    /// `cos(2πy)`
    CosY,
    /// `cos(2πx) cos(2πy)`
    CosXCosY,
    /// `cos(2πx)`; no fast-variable dependence.
    CosX,
    Custom {
        name: String,
        f: Arc<dyn Fn(T, T) -> T + Send + Sync>,
        y_dependent: bool,
    },
}

impl<T: Real> Coefficient<T> {
    pub fn custom(name: &str, y_dependent: bool, f: impl Fn(T, T) -> T + Send + Sync + 'static) -> Self {
        Self::Custom {
            name: name.to_string(),
            f: Arc::new(f),
            y_dependent,
        }
    }

    #[inline]
    pub fn eval(&self, x: T, y: T) -> T {
        let tau = T::two_pi();
        match self {
            Self::Constant(c) => *c,
            Self::TwoPlusCosY => T::c(2.0) + (tau * y).cos(),
            Self::CosY => (tau * y).cos(),
            Self::CosXCosY => (tau * x).cos() * (tau * y).cos(),
            Self::CosX => (tau * x).cos(),
            Self::Custom { f, .. } => f(x, y),
        }
    }

    /// Inverse of the `Display` form for the built-in family, e.g. `constant(2)`.
    pub fn parse(s: &str) -> Option<Self> {
        let s = s.trim();
        match s {
            "two_plus_cos_y" => Some(Self::TwoPlusCosY),
            "cos_y" => Some(Self::CosY),
            "cos_x_cos_y" => Some(Self::CosXCosY),
            "cos_x" => Some(Self::CosX),
            "zero" => Some(Self::Constant(T::zero())),
            _ => {
                let inner = s.strip_prefix("constant(")?.strip_suffix(')')?;
                let v: f64 = inner.trim().parse().ok()?;
                v.is_finite().then(|| Self::Constant(T::c(v)))
            }
        }
    }

    pub fn depends_on_y(&self) -> bool {
        match self {
            Self::Constant(_) | Self::CosX => false,
            Self::TwoPlusCosY | Self::CosY | Self::CosXCosY => true,
            Self::Custom { y_dependent, .. } => *y_dependent,
        }
    }

    pub fn depends_on_x(&self) -> bool {
        match self {
            Self::Constant(_) | Self::TwoPlusCosY | Self::CosY => false,
            Self::CosXCosY | Self::CosX => true,
            Self::Custom { .. } => true,
        }
    }

    /// Sampled `(min, max)` over a `k × k` product grid.
    pub fn range(&self, k: usize) -> (T, T) {
        let h = T::one() / T::from_usize_lossy(k);
        let mut lo = T::infinity();
        let mut hi = T::neg_infinity();
        for i in 0..k {
            for j in 0..k {
                let v = self.eval(T::from_usize_lossy(i) * h, T::from_usize_lossy(j) * h);
                lo = lo.min(v);
                hi = hi.max(v);
            }
        }
        (lo, hi)
    }

    pub fn sup_abs(&self, k: usize) -> T {
        let (lo, hi) = self.range(k);
        lo.abs().max(hi.abs())
    }
}

impl<T: Real> fmt::Display for Coefficient<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Constant(c) => write!(f, "constant({c})"),
            Self::TwoPlusCosY => write!(f, "two_plus_cos_y"),
            Self::CosY => write!(f, "cos_y"),
            Self::CosXCosY => write!(f, "cos_x_cos_y"),
            Self::CosX => write!(f, "cos_x"),
            Self::Custom { name, .. } => write!(f, "{name}"),
        }
    }
}

impl<T: fmt::Debug> fmt::Debug for Coefficient<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Constant(c) => write!(f, "constant({c:?})"),
            Self::TwoPlusCosY => write!(f, "two_plus_cos_y"),
            Self::CosY => write!(f, "cos_y"),
            Self::CosXCosY => write!(f, "cos_x_cos_y"),
            Self::CosX => write!(f, "cos_x"),
            Self::Custom { name, .. } => write!(f, "{name}"),
        }
    }
}
