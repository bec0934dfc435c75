//! Geometric integrands Ψ on Λ_k ℝⁿ, classical integrands ψ = Ψ∘∧M and
//! Q-integrands ψ̄_Q(X₁,…,X_Q) = Σ ψ(Xᵢ).
//!
//! Every integrand is evaluated through its positively homogeneous
//! extension: `Ψ(ξ) = |ξ| Ψ(ξ/|ξ|)` and `Ψ(0) = 0`.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::exterior::{binomial, wedge_m, KVector};

type Evaluator = Arc<dyn Fn(&KVector<f64>) -> f64 + Send + Sync>;

#[derive(Clone)]
enum Kind {
    Area,
    EllipseNorm(DMatrix<f64>),
    PerturbedArea { direction: KVector<f64>, eps: f64 },
    Tabulated(Vec<(KVector<f64>, f64)>),
    Custom(Evaluator),
}

/// A positively homogeneous, non-negative integrand on Λ_k ℝⁿ.
#[derive(Clone)]
pub struct GeometricIntegrand {
    n: usize,
    k: usize,
    name: String,
    kind: Kind,
    pub is_even: bool,
    pub claimed_lipschitz_bound: Option<f64>,
}

impl fmt::Debug for GeometricIntegrand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("GeometricIntegrand")
            .field("name", &self.name)
            .field("n", &self.n)
            .field("k", &self.k)
            .finish()
    }
}

impl GeometricIntegrand {
    /// Ψ(ξ) = |ξ|.
    pub fn area(n: usize, k: usize) -> Self {
        Self { n, k, name: "area".into(), kind: Kind::Area, is_even: true, claimed_lipschitz_bound: Some(1.0) }
    }

    /// Ψ(ξ) = sqrt(ξᵀAξ) for symmetric positive definite `A` of size C(n,k).
    pub fn ellipse_norm(n: usize, k: usize, a: DMatrix<f64>) -> Result<Self> {
        let m = binomial(n, k);
        if a.shape() != (m, m) {
            return Err(Error::DimensionMismatch(format!("ellipse matrix must be {m}×{m}, got {:?}", a.shape())));
        }
        if (&a - a.transpose()).amax() > 1e-12 * a.amax().max(1.0) {
            return Err(Error::Invalid("ellipse matrix is not symmetric".into()));
        }
        if a.clone().cholesky().is_none() {
            return Err(Error::Invalid("ellipse matrix is not positive definite".into()));
        }
        let lip = a.symmetric_eigenvalues().max().sqrt();
        Ok(Self {
            n,
            k,
            name: "ellipse_norm".into(),
            kind: Kind::EllipseNorm(a),
            is_even: true,
            claimed_lipschitz_bound: Some(lip),
        })
    }

    /// Ψ(ξ) = |ξ| + ε (ξ•η*)² / |ξ|, i.e. `1 + ε(ξ̂•η*)²` on unit vectors.
    pub fn perturbed_area(direction: KVector<f64>, eps: f64) -> Result<Self> {
        if eps <= -1.0 {
            return Err(Error::Invalid(format!("perturbation ε = {eps} makes the integrand vanish")));
        }
        let direction = direction.normalized()?;
        let (n, k) = (direction.dim(), direction.grade());
        Ok(Self {
            n,
            k,
            name: "perturbed_area".into(),
            kind: Kind::PerturbedArea { direction, eps },
            is_even: true,
            claimed_lipschitz_bound: Some(1.0 + 3.0 * eps.abs()),
        })
    }

    /// Nearest-sample lookup on the unit sphere, extended homogeneously.
    pub fn tabulated(samples: Vec<(KVector<f64>, f64)>) -> Result<Self> {
        let first = samples.first().ok_or_else(|| Error::Invalid("empty sample table".into()))?;
        let (n, k) = (first.0.dim(), first.0.grade());
        let mut table = Vec::with_capacity(samples.len());
        for (xi, v) in samples {
            if xi.dim() != n || xi.grade() != k {
                return Err(Error::DimensionMismatch("mixed (n, k) in sample table".into()));
            }
            if v < 0.0 {
                return Err(Error::NegativeIntegrand { name: "tabulated".into(), value: v });
            }
            let nrm = xi.norm();
            let unit = xi.normalized()?;
            // store values on the unit sphere
            table.push((unit, v / nrm));
        }
        Ok(Self { n, k, name: "tabulated".into(), kind: Kind::Tabulated(table), is_even: false, claimed_lipschitz_bound: None })
    }

    /// Wraps a user-supplied evaluator, called on unit vectors only.
    pub fn custom(
        n: usize,
        k: usize,
        name: impl Into<String>,
        f: impl Fn(&KVector<f64>) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self { n, k, name: name.into(), kind: Kind::Custom(Arc::new(f)), is_even: false, claimed_lipschitz_bound: None }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn grade(&self) -> usize {
        self.k
    }

    fn eval_unit(&self, unit: &KVector<f64>) -> f64 {
        match &self.kind {
            Kind::Area => 1.0,
            Kind::EllipseNorm(a) => {
                let v = DVector::from_column_slice(unit.coeffs());
                (v.transpose() * a * &v)[(0, 0)].max(0.0).sqrt()
            }
            Kind::PerturbedArea { direction, eps } => {
                let t = unit.inner(direction).expect("same space");
                1.0 + eps * t * t
            }
            Kind::Tabulated(table) => {
                let mut best = f64::INFINITY;
                let mut value = 0.0;
                for (xi, v) in table {
                    let d = xi.distance(unit);
                    if d < best {
                        best = d;
                        value = *v;
                    }
                }
                value
            }
            Kind::Custom(f) => f(unit),
        }
    }

    /// Ψ(ξ) through the homogeneous extension; errors on negative values.
    pub fn eval(&self, xi: &KVector<f64>) -> Result<f64> {
        if xi.dim() != self.n || xi.grade() != self.k {
            return Err(Error::DimensionMismatch(format!(
                "integrand on Λ_{}ℝ^{} evaluated at Λ_{}ℝ^{}",
                self.k,
                self.n,
                xi.grade(),
                xi.dim()
            )));
        }
        let nrm = xi.norm();
        if nrm == 0.0 {
            return Ok(0.0);
        }
        let value = match &self.kind {
            Kind::Area => nrm,
            _ => nrm * self.eval_unit(&xi.scale(&(1.0 / nrm))),
        };
        if value < 0.0 || value.is_nan() {
            return Err(Error::NegativeIntegrand { name: self.name.clone(), value });
        }
        Ok(value)
    }

    /// Checks the claimed Lipschitz bound with sampled difference quotients
    /// over random pairs of k-vectors in the unit ball.
    pub fn validate_lipschitz(&self, pairs: usize, seed: u64) -> Result<LipschitzCheck> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = binomial(self.n, self.k);
        let mut worst = 0.0f64;
        for _ in 0..pairs {
            let a: Vec<f64> = (0..m).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
            let b: Vec<f64> = (0..m).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
            let a = KVector::new(self.n, self.k, a)?;
            let mut b = KVector::new(self.n, self.k, b)?;
            // mix in nearby pairs so local slopes are probed too
            if rng.random_bool(0.5) {
                let t: f64 = rng.random_range(1e-4..1e-1);
                b = &a + &b.scale(&t);
            }
            let d = a.distance(&b);
            if d == 0.0 {
                continue;
            }
            let q = (self.eval(&a)? - self.eval(&b)?).abs() / d;
            worst = worst.max(q);
        }
        Ok(LipschitzCheck {
            pairs,
            max_quotient: worst,
            claimed: self.claimed_lipschitz_bound,
            consistent: self.claimed_lipschitz_bound.is_none_or(|c| worst <= c * (1.0 + 1e-9)),
        })
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct LipschitzCheck {
    pub pairs: usize,
    pub max_quotient: f64,
    pub claimed: Option<f64>,
    pub consistent: bool,
}

/// Classical integrand ψ(X) = Ψ(∧M(X)) for `(n−k)×k` matrices X.
#[derive(Clone, Debug)]
pub struct ClassicalIntegrand {
    pub underlying: GeometricIntegrand,
}

impl ClassicalIntegrand {
    pub fn new(underlying: GeometricIntegrand) -> Self {
        Self { underlying }
    }

    pub fn eval(&self, x: &DMatrix<f64>) -> Result<f64> {
        let (n, k) = (self.underlying.n, self.underlying.k);
        if x.shape() != (n - k, k) {
            return Err(Error::DimensionMismatch(format!(
                "classical integrand expects a {}×{k} matrix, got {:?}",
                n - k,
                x.shape()
            )));
        }
        self.underlying.eval(&wedge_m(x))
    }
}

/// ψ̄_Q(X₁,…,X_Q) = Σ ψ(Xᵢ).
#[derive(Clone, Debug)]
pub struct QIntegrand {
    pub q: usize,
    pub base: ClassicalIntegrand,
}

impl QIntegrand {
    pub fn new(q: usize, base: ClassicalIntegrand) -> Result<Self> {
        if q == 0 {
            return Err(Error::Invalid("Q must be positive".into()));
        }
        Ok(Self { q, base })
    }

    pub fn eval(&self, xs: &[DMatrix<f64>]) -> Result<f64> {
        if xs.len() != self.q {
            return Err(Error::Invalid(format!("expected {} sheets, got {}", self.q, xs.len())));
        }
        xs.iter().map(|x| self.base.eval(x)).sum()
    }
}

/// `{"name": "...", "params": {...}}` as found in integrand files.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct IntegrandSpec {
    pub name: String,
    #[serde(default)]
    pub params: Value,
}

impl IntegrandSpec {
    pub fn area() -> Self {
        Self { name: "area".into(), params: Value::Null }
    }

    /// Builds the integrand; `(n, k)` in `params` override the defaults.
    pub fn build(&self, n: usize, k: usize) -> Result<GeometricIntegrand> {
        let n = self.params.get("n").and_then(Value::as_u64).map_or(n, |v| v as usize);
        let k = self.params.get("k").and_then(Value::as_u64).map_or(k, |v| v as usize);
        if k == 0 || k > n {
            return Err(Error::Invalid(format!("integrand needs 1 ≤ k ≤ n, got n={n}, k={k}")));
        }
        match self.name.as_str() {
            "area" => Ok(GeometricIntegrand::area(n, k)),
            "ellipse_norm" => {
                let a = self.params.get("A").ok_or_else(|| Error::Invalid("ellipse_norm needs params.A".into()))?;
                let rows: Vec<Vec<f64>> = serde_json::from_value(a.clone())?;
                let m = rows.len();
                if rows.iter().any(|r| r.len() != m) {
                    return Err(Error::Invalid("params.A must be square".into()));
                }
                let a = DMatrix::from_fn(m, m, |i, j| rows[i][j]);
                GeometricIntegrand::ellipse_norm(n, k, a)
            }
            "perturbed_area" => {
                let eps = self
                    .params
                    .get("eps")
                    .and_then(Value::as_f64)
                    .ok_or_else(|| Error::Invalid("perturbed_area needs params.eps".into()))?;
                let direction = match self.params.get("direction") {
                    Some(d) => {
                        let coeffs: Vec<f64> = serde_json::from_value(d.clone())?;
                        KVector::new(n, k, coeffs)?
                    }
                    None => KVector::basis(n, &crate::exterior::MultiIndex::unrank(0, n, k)),
                };
                GeometricIntegrand::perturbed_area(direction, eps)
            }
            "tabulated" => {
                let samples = self
                    .params
                    .get("samples")
                    .ok_or_else(|| Error::Invalid("tabulated needs params.samples".into()))?;
                let samples: Vec<(KVector<f64>, f64)> = serde_json::from_value(samples.clone())?;
                GeometricIntegrand::tabulated(samples)
            }
            other => Err(Error::Invalid(format!("unknown integrand {other:?}"))),
        }
    }
}
