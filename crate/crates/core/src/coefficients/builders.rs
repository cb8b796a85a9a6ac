use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::coefficients::{CoefficientModel, FrozenCoefficients};
use crate::error::{Error, Result};
use crate::measures::Measure;
use crate::numeric::exact_sum;

/// Interaction kernel `(t, x, y) ↦ value`, written into the output slice.
pub type VecKernel = Arc<dyn Fn(f64, &[f64], &[f64], &mut [f64]) + Send + Sync>;
/// Kernel of `N` measure arguments `(t, x, [y_1..y_N]) ↦ value`.
pub type MultiKernel = Arc<dyn Fn(f64, &[f64], &[&[f64]], &mut [f64]) + Send + Sync>;
/// Test function `y ↦ ψ(y)` whose integral enters a scalar interaction.
pub type ScalarFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;
/// Outer map `(t, x, z) ↦ value` with `z ∈ R^N` the vector of moments.
/// The same signature is used for local coefficients, which ignore `z`.
pub type OuterFn = Arc<dyn Fn(f64, &[f64], &[f64], &mut [f64]) + Send + Sync>;

fn check_dims(d: usize, q: usize) -> Result<()> {
    if d == 0 || q == 0 {
        return Err(Error::Usage("state and noise dimensions must be positive".into()));
    }
    Ok(())
}

fn row_major(m: &DMatrix<f64>) -> Vec<f64> {
    let mut v = Vec::with_capacity(m.len());
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            v.push(m[(i, j)]);
        }
    }
    v
}

// ---------------------------------------------------------------------------
// Local (measure-free) coefficients.

/// Coefficients that depend on `(t, x)` only.
#[derive(Clone)]
pub struct LocalModel {
    name: String,
    d: usize,
    q: usize,
    drift: OuterFn,
    sigma: OuterFn,
}

/// Measure-independent model `b(t, x)`, `σ(t, x)`. The moment slot of the
/// closures is always empty.
pub fn make_local(d: usize, q: usize, drift: OuterFn, sigma: OuterFn) -> Result<LocalModel> {
    check_dims(d, q)?;
    Ok(LocalModel {
        name: "local".into(),
        d,
        q,
        drift,
        sigma,
    })
}

impl LocalModel {
    pub fn named(mut self, name: &str) -> Self {
        self.name = name.into();
        self
    }
}

struct LocalFrozen<'a> {
    m: &'a LocalModel,
    t: f64,
}

impl FrozenCoefficients for LocalFrozen<'_> {
    fn dim_x(&self) -> usize {
        self.m.d
    }
    fn dim_w(&self) -> usize {
        self.m.q
    }
    fn drift_into(&self, x: &[f64], out: &mut [f64]) {
        (self.m.drift)(self.t, x, &[], out)
    }
    fn sigma_into(&self, x: &[f64], out: &mut [f64]) {
        (self.m.sigma)(self.t, x, &[], out)
    }
}

impl CoefficientModel for LocalModel {
    fn name(&self) -> &str {
        &self.name
    }
    fn dim_x(&self) -> usize {
        self.d
    }
    fn dim_w(&self) -> usize {
        self.q
    }
    fn freeze<'a>(&'a self, t: f64, _law: &'a Measure) -> Result<Box<dyn FrozenCoefficients + 'a>> {
        Ok(Box::new(LocalFrozen { m: self, t }))
    }
    fn measure_independent(&self) -> bool {
        true
    }
    fn flat_drift(&self, _t: f64, _x: &[f64], _law: &Measure, _y: &[f64]) -> Result<Option<DVector<f64>>> {
        Ok(Some(DVector::zeros(self.d)))
    }
    fn flat_sigma(&self, _t: f64, _x: &[f64], _law: &Measure, _y: &[f64]) -> Result<Option<DMatrix<f64>>> {
        Ok(Some(DMatrix::zeros(self.d, self.q)))
    }
    fn flat2_diffusion(&self, _: f64, _: &[f64], _: &Measure, _: &[f64], _: &[f64]) -> Result<Option<DMatrix<f64>>> {
        Ok(Some(DMatrix::zeros(self.d, self.d)))
    }
}

// ---------------------------------------------------------------------------
// First order interaction.

/// `b = ∫ b̄(t, x, y) μ(dy)`, `σ = ∫ σ̄(t, x, y) μ(dy)`.
#[derive(Clone)]
pub struct FirstOrderModel {
    name: String,
    d: usize,
    q: usize,
    bbar: VecKernel,
    sbar: VecKernel,
    measure_free: bool,
}

pub fn make_first_order(d: usize, q: usize, bbar: VecKernel, sbar: VecKernel) -> Result<FirstOrderModel> {
    check_dims(d, q)?;
    Ok(FirstOrderModel {
        name: "first_order".into(),
        d,
        q,
        bbar,
        sbar,
        measure_free: false,
    })
}

impl FirstOrderModel {
    pub fn named(mut self, name: &str) -> Self {
        self.name = name.into();
        self
    }

    /// Declares that neither kernel depends on `y`, which lets evaluation
    /// skip the measure integral.
    pub fn measure_free(mut self, yes: bool) -> Self {
        self.measure_free = yes;
        self
    }
}

struct FirstOrderFrozen<'a> {
    m: &'a FirstOrderModel,
    t: f64,
    law: &'a Measure,
}

impl FirstOrderFrozen<'_> {
    fn integrate(&self, k: &VecKernel, x: &[f64], n: usize, out: &mut [f64]) {
        if self.m.measure_free {
            k(self.t, x, x, out);
        } else {
            let v = self.law.integrate_vec(n, |y, o| k(self.t, x, y, o));
            out.copy_from_slice(&v);
        }
    }
}

impl FrozenCoefficients for FirstOrderFrozen<'_> {
    fn dim_x(&self) -> usize {
        self.m.d
    }
    fn dim_w(&self) -> usize {
        self.m.q
    }
    fn drift_into(&self, x: &[f64], out: &mut [f64]) {
        self.integrate(&self.m.bbar, x, self.m.d, out)
    }
    fn sigma_into(&self, x: &[f64], out: &mut [f64]) {
        self.integrate(&self.m.sbar, x, self.m.d * self.m.q, out)
    }
}

impl FirstOrderModel {
    fn flat_sigma_raw(&self, t: f64, x: &[f64], law: &Measure, y: &[f64]) -> Result<DMatrix<f64>> {
        let (d, q) = (self.d, self.q);
        let mut k = vec![0.0; d * q];
        (self.sbar)(t, x, y, &mut k);
        let s = self.freeze(t, law)?.sigma(x);
        Ok(DMatrix::from_row_slice(d, q, &k) - s)
    }
}

impl CoefficientModel for FirstOrderModel {
    fn name(&self) -> &str {
        &self.name
    }
    fn dim_x(&self) -> usize {
        self.d
    }
    fn dim_w(&self) -> usize {
        self.q
    }
    fn freeze<'a>(&'a self, t: f64, law: &'a Measure) -> Result<Box<dyn FrozenCoefficients + 'a>> {
        if law.dim() != self.d {
            return Err(Error::Usage("measure dimension differs from the model state dimension".into()));
        }
        Ok(Box::new(FirstOrderFrozen { m: self, t, law }))
    }
    fn measure_independent(&self) -> bool {
        self.measure_free
    }
    fn flat_drift(&self, t: f64, x: &[f64], law: &Measure, y: &[f64]) -> Result<Option<DVector<f64>>> {
        let mut k = vec![0.0; self.d];
        (self.bbar)(t, x, y, &mut k);
        let b = self.freeze(t, law)?.drift(x);
        Ok(Some(DVector::from_vec(k) - b))
    }
    fn flat_sigma(&self, t: f64, x: &[f64], law: &Measure, y: &[f64]) -> Result<Option<DMatrix<f64>>> {
        self.flat_sigma_raw(t, x, law, y).map(Some)
    }
    fn flat2_diffusion(&self, t: f64, x: &[f64], law: &Measure, y: &[f64], y2: &[f64]) -> Result<Option<DMatrix<f64>>> {
        let a = self.flat_sigma_raw(t, x, law, y)?;
        let b = self.flat_sigma_raw(t, x, law, y2)?;
        Ok(Some(&a * b.transpose() + &b * a.transpose()))
    }
}

// ---------------------------------------------------------------------------
// N-th order interaction.

/// Cap on kernel evaluations per N-fold integral.
pub const N_ORDER_BUDGET: usize = 1_000_000;

/// `b = ∫..∫ b̄(t, x, y_1..y_N) μ(dy_1)..μ(dy_N)`, likewise for `σ`.
#[derive(Clone)]
pub struct NOrderModel {
    name: String,
    order: usize,
    d: usize,
    q: usize,
    bbar: MultiKernel,
    sbar: MultiKernel,
}

pub fn make_n_order(order: usize, d: usize, q: usize, bbar: MultiKernel, sbar: MultiKernel) -> Result<NOrderModel> {
    check_dims(d, q)?;
    if order == 0 {
        return Err(Error::Usage("interaction order must be at least 1".into()));
    }
    Ok(NOrderModel {
        name: "n_order".into(),
        order,
        d,
        q,
        bbar,
        sbar,
    })
}

impl NOrderModel {
    pub fn named(mut self, name: &str) -> Self {
        self.name = name.into();
        self
    }

    pub fn order(&self) -> usize {
        self.order
    }

    fn atoms(&self, law: &Measure) -> Result<Atoms> {
        let mut points = Vec::new();
        let mut weights = Vec::new();
        law.for_each(|p, w| {
            points.push(p.to_vec());
            weights.push(w);
        });
        let n = weights.len();
        let evals = (n as f64).powi(self.order as i32) * self.order as f64;
        if evals > N_ORDER_BUDGET as f64 {
            return Err(Error::Resource(format!(
                "order-{} interaction over {n} atoms needs {evals:.3e} kernel evaluations (budget {N_ORDER_BUDGET})",
                self.order
            )));
        }
        Ok(Atoms {
            points,
            weights,
            exact: !law.is_grid(),
        })
    }
}

struct Atoms {
    points: Vec<Vec<f64>>,
    weights: Vec<f64>,
    exact: bool,
}

impl Atoms {
    /// Integral over the slots not yet in `slots`; `pinned` fixes one slot
    /// to an extra point instead of integrating it (used for flat derivatives).
    fn nested(
        &self,
        slots: &mut Vec<usize>,
        order: usize,
        pinned: Option<(usize, &[f64])>,
        n_out: usize,
        f: &dyn Fn(&[&[f64]], &mut [f64]),
    ) -> Vec<f64> {
        let slot = slots.len();
        if slot == order {
            let args: Vec<&[f64]> = (0..order)
                .map(|k| match pinned {
                    Some((p, y)) if p == k => y,
                    _ => self.points[slots[k]].as_slice(),
                })
                .collect();
            let mut out = vec![0.0; n_out];
            f(&args, &mut out);
            return out;
        }
        if let Some((p, _)) = pinned {
            if p == slot {
                slots.push(usize::MAX);
                let v = self.nested(slots, order, pinned, n_out, f);
                slots.pop();
                return v;
            }
        }
        let mut cols: Vec<Vec<f64>> = vec![Vec::with_capacity(self.weights.len()); n_out];
        let mut acc = vec![0.0; n_out];
        for (i, w) in self.weights.iter().enumerate() {
            slots.push(i);
            let v = self.nested(slots, order, pinned, n_out, f);
            slots.pop();
            for k in 0..n_out {
                if self.exact {
                    cols[k].push(w * v[k]);
                } else {
                    acc[k] += w * v[k];
                }
            }
        }
        if self.exact {
            cols.into_iter().map(exact_sum).collect()
        } else {
            acc
        }
    }
}

struct NOrderFrozen<'a> {
    m: &'a NOrderModel,
    t: f64,
    atoms: Atoms,
}

impl FrozenCoefficients for NOrderFrozen<'_> {
    fn dim_x(&self) -> usize {
        self.m.d
    }
    fn dim_w(&self) -> usize {
        self.m.q
    }
    fn drift_into(&self, x: &[f64], out: &mut [f64]) {
        let f = |ys: &[&[f64]], o: &mut [f64]| (self.m.bbar)(self.t, x, ys, o);
        let v = self.atoms.nested(&mut Vec::new(), self.m.order, None, self.m.d, &f);
        out.copy_from_slice(&v);
    }
    fn sigma_into(&self, x: &[f64], out: &mut [f64]) {
        let f = |ys: &[&[f64]], o: &mut [f64]| (self.m.sbar)(self.t, x, ys, o);
        let v = self.atoms.nested(&mut Vec::new(), self.m.order, None, self.m.d * self.m.q, &f);
        out.copy_from_slice(&v);
    }
}

impl NOrderModel {
    /// `Σ_k ∫ K(.., y in slot k, ..) − N ∫ K`.
    fn flat_generic(&self, kernel: &MultiKernel, n_out: usize, t: f64, x: &[f64], law: &Measure, y: &[f64]) -> Result<Vec<f64>> {
        let atoms = self.atoms(law)?;
        let f = |ys: &[&[f64]], o: &mut [f64]| kernel(t, x, ys, o);
        let base = atoms.nested(&mut Vec::new(), self.order, None, n_out, &f);
        let mut acc = vec![0.0; n_out];
        for k in 0..self.order {
            let v = atoms.nested(&mut Vec::new(), self.order, Some((k, y)), n_out, &f);
            for i in 0..n_out {
                acc[i] += v[i];
            }
        }
        for i in 0..n_out {
            acc[i] -= self.order as f64 * base[i];
        }
        Ok(acc)
    }
}

impl CoefficientModel for NOrderModel {
    fn name(&self) -> &str {
        &self.name
    }
    fn dim_x(&self) -> usize {
        self.d
    }
    fn dim_w(&self) -> usize {
        self.q
    }
    fn freeze<'a>(&'a self, t: f64, law: &'a Measure) -> Result<Box<dyn FrozenCoefficients + 'a>> {
        if law.dim() != self.d {
            return Err(Error::Usage("measure dimension differs from the model state dimension".into()));
        }
        Ok(Box::new(NOrderFrozen {
            m: self,
            t,
            atoms: self.atoms(law)?,
        }))
    }
    fn flat_drift(&self, t: f64, x: &[f64], law: &Measure, y: &[f64]) -> Result<Option<DVector<f64>>> {
        Ok(Some(DVector::from_vec(self.flat_generic(&self.bbar, self.d, t, x, law, y)?)))
    }
    fn flat_sigma(&self, t: f64, x: &[f64], law: &Measure, y: &[f64]) -> Result<Option<DMatrix<f64>>> {
        let v = self.flat_generic(&self.sbar, self.d * self.q, t, x, law, y)?;
        Ok(Some(DMatrix::from_row_slice(self.d, self.q, &v)))
    }
}

// ---------------------------------------------------------------------------
// Scalar interaction.

/// `b = B(t, x, ∫ψ_1 dμ, .., ∫ψ_N dμ)`, `σ = S(t, x, ∫φ_1 dμ, .., ∫φ_M dμ)`.
#[derive(Clone)]
pub struct ScalarModel {
    name: String,
    d: usize,
    q: usize,
    psis: Vec<ScalarFn>,
    phis: Vec<ScalarFn>,
    bouter: OuterFn,
    souter: OuterFn,
    bgrad: Option<OuterFn>,
    sgrad: Option<OuterFn>,
}

pub fn make_scalar(
    d: usize,
    q: usize,
    psis: Vec<ScalarFn>,
    phis: Vec<ScalarFn>,
    bouter: OuterFn,
    souter: OuterFn,
) -> Result<ScalarModel> {
    check_dims(d, q)?;
    Ok(ScalarModel {
        name: "scalar".into(),
        d,
        q,
        psis,
        phis,
        bouter,
        souter,
        bgrad: None,
        sgrad: None,
    })
}

impl ScalarModel {
    pub fn named(mut self, name: &str) -> Self {
        self.name = name.into();
        self
    }

    /// Analytic `∂_z B`, written row-major as a `d × N` matrix.
    pub fn with_drift_gradient(mut self, g: OuterFn) -> Self {
        self.bgrad = Some(g);
        self
    }

    /// Analytic `∂_z S`, written as `M` consecutive row-major `d × q` blocks.
    pub fn with_sigma_gradient(mut self, g: OuterFn) -> Self {
        self.sgrad = Some(g);
        self
    }

    fn moments(fs: &[ScalarFn], law: &Measure) -> Vec<f64> {
        fs.iter().map(|f| law.integrate(|y| f(y))).collect()
    }

    /// Columns `∂_{z_k} outer` as `n_out`-vectors, analytic or by central
    /// differences. Analytic drift gradients are `d × N` row-major; analytic
    /// sigma gradients are `N` consecutive `d × q` blocks (`blocked`).
    fn outer_gradient(
        outer: &OuterFn,
        grad: &Option<OuterFn>,
        blocked: bool,
        n_out: usize,
        t: f64,
        x: &[f64],
        z: &[f64],
    ) -> Vec<Vec<f64>> {
        let n = z.len();
        if let Some(g) = grad {
            let mut buf = vec![0.0; n_out * n];
            g(t, x, z, &mut buf);
            return (0..n)
                .map(|k| {
                    if blocked {
                        buf[k * n_out..(k + 1) * n_out].to_vec()
                    } else {
                        (0..n_out).map(|i| buf[i * n + k]).collect()
                    }
                })
                .collect();
        }
        let mut zp = z.to_vec();
        let mut hi = vec![0.0; n_out];
        let mut lo = vec![0.0; n_out];
        (0..n)
            .map(|k| {
                let h = 1e-6 * (1.0 + z[k].abs());
                zp[k] = z[k] + h;
                outer(t, x, &zp, &mut hi);
                zp[k] = z[k] - h;
                outer(t, x, &zp, &mut lo);
                zp[k] = z[k];
                (0..n_out).map(|i| (hi[i] - lo[i]) / (2.0 * h)).collect()
            })
            .collect()
    }
}

struct ScalarFrozen<'a> {
    m: &'a ScalarModel,
    t: f64,
    zb: Vec<f64>,
    zs: Vec<f64>,
}

impl FrozenCoefficients for ScalarFrozen<'_> {
    fn dim_x(&self) -> usize {
        self.m.d
    }
    fn dim_w(&self) -> usize {
        self.m.q
    }
    fn drift_into(&self, x: &[f64], out: &mut [f64]) {
        (self.m.bouter)(self.t, x, &self.zb, out)
    }
    fn sigma_into(&self, x: &[f64], out: &mut [f64]) {
        (self.m.souter)(self.t, x, &self.zs, out)
    }
}

impl CoefficientModel for ScalarModel {
    fn name(&self) -> &str {
        &self.name
    }
    fn dim_x(&self) -> usize {
        self.d
    }
    fn dim_w(&self) -> usize {
        self.q
    }
    fn freeze<'a>(&'a self, t: f64, law: &'a Measure) -> Result<Box<dyn FrozenCoefficients + 'a>> {
        if law.dim() != self.d {
            return Err(Error::Usage("measure dimension differs from the model state dimension".into()));
        }
        Ok(Box::new(ScalarFrozen {
            m: self,
            t,
            zb: Self::moments(&self.psis, law),
            zs: Self::moments(&self.phis, law),
        }))
    }
    fn measure_independent(&self) -> bool {
        self.psis.is_empty() && self.phis.is_empty()
    }
    fn flat_drift(&self, t: f64, x: &[f64], law: &Measure, y: &[f64]) -> Result<Option<DVector<f64>>> {
        let z = Self::moments(&self.psis, law);
        let cols = Self::outer_gradient(&self.bouter, &self.bgrad, false, self.d, t, x, &z);
        let mut out = DVector::zeros(self.d);
        for (k, col) in cols.iter().enumerate() {
            let dpsi = (self.psis[k])(y) - z[k];
            for i in 0..self.d {
                out[i] += col[i] * dpsi;
            }
        }
        Ok(Some(out))
    }
    fn flat_sigma(&self, t: f64, x: &[f64], law: &Measure, y: &[f64]) -> Result<Option<DMatrix<f64>>> {
        let z = Self::moments(&self.phis, law);
        let n_out = self.d * self.q;
        let cols = Self::outer_gradient(&self.souter, &self.sgrad, true, n_out, t, x, &z);
        let mut out = vec![0.0; n_out];
        for (k, col) in cols.iter().enumerate() {
            let dphi = (self.phis[k])(y) - z[k];
            for i in 0..n_out {
                out[i] += col[i] * dphi;
            }
        }
        Ok(Some(DMatrix::from_row_slice(self.d, self.q, &out)))
    }
}

// ---------------------------------------------------------------------------
// Polynomials on the Wasserstein space.

/// A matrix-valued factor `φ(t, x, y)` of shape `rows × cols` in a `σ` product.
#[derive(Clone)]
pub struct SigmaFactor {
    pub rows: usize,
    pub cols: usize,
    pub kernel: VecKernel,
}

/// `b_j = Π_i ∫ h̄_{i,j}(t, x, y) μ(dy)` componentwise and
/// `σ = Π_i ∫ φ_i(t, x, y) μ(dy)` as a matrix product.
#[derive(Clone)]
pub struct PolynomialModel {
    name: String,
    d: usize,
    q: usize,
    drift_factors: Vec<VecKernel>,
    sigma_factors: Vec<SigmaFactor>,
}

pub fn make_polynomial(
    d: usize,
    q: usize,
    drift_factors: Vec<VecKernel>,
    sigma_factors: Vec<SigmaFactor>,
) -> Result<PolynomialModel> {
    check_dims(d, q)?;
    if drift_factors.is_empty() || sigma_factors.is_empty() {
        return Err(Error::Usage("polynomial models need at least one drift and one sigma factor".into()));
    }
    let mut rows = d;
    for f in &sigma_factors {
        if f.rows != rows {
            return Err(Error::Usage("sigma factor shapes do not chain".into()));
        }
        rows = f.cols;
    }
    if rows != q {
        return Err(Error::Usage("sigma factor product must have q columns".into()));
    }
    Ok(PolynomialModel {
        name: "polynomial".into(),
        d,
        q,
        drift_factors,
        sigma_factors,
    })
}

impl PolynomialModel {
    pub fn named(mut self, name: &str) -> Self {
        self.name = name.into();
        self
    }

    fn drift_integrals(&self, t: f64, x: &[f64], law: &Measure) -> Vec<Vec<f64>> {
        self.drift_factors
            .iter()
            .map(|k| law.integrate_vec(self.d, |y, o| k(t, x, y, o)))
            .collect()
    }

    fn sigma_integrals(&self, t: f64, x: &[f64], law: &Measure) -> Vec<DMatrix<f64>> {
        self.sigma_factors
            .iter()
            .map(|f| {
                let v = law.integrate_vec(f.rows * f.cols, |y, o| (f.kernel)(t, x, y, o));
                DMatrix::from_row_slice(f.rows, f.cols, &v)
            })
            .collect()
    }

    fn chain(ms: &[DMatrix<f64>], rows: usize) -> DMatrix<f64> {
        ms.iter().fold(DMatrix::identity(rows, rows), |acc, m| acc * m)
    }
}

struct PolynomialFrozen<'a> {
    m: &'a PolynomialModel,
    t: f64,
    law: &'a Measure,
}

impl FrozenCoefficients for PolynomialFrozen<'_> {
    fn dim_x(&self) -> usize {
        self.m.d
    }
    fn dim_w(&self) -> usize {
        self.m.q
    }
    fn drift_into(&self, x: &[f64], out: &mut [f64]) {
        let hs = self.m.drift_integrals(self.t, x, self.law);
        for j in 0..self.m.d {
            out[j] = hs.iter().map(|h| h[j]).product();
        }
    }
    fn sigma_into(&self, x: &[f64], out: &mut [f64]) {
        let ms = self.m.sigma_integrals(self.t, x, self.law);
        out.copy_from_slice(&row_major(&PolynomialModel::chain(&ms, self.m.d)));
    }
}

impl CoefficientModel for PolynomialModel {
    fn name(&self) -> &str {
        &self.name
    }
    fn dim_x(&self) -> usize {
        self.d
    }
    fn dim_w(&self) -> usize {
        self.q
    }
    fn freeze<'a>(&'a self, t: f64, law: &'a Measure) -> Result<Box<dyn FrozenCoefficients + 'a>> {
        if law.dim() != self.d {
            return Err(Error::Usage("measure dimension differs from the model state dimension".into()));
        }
        Ok(Box::new(PolynomialFrozen { m: self, t, law }))
    }
    fn flat_drift(&self, t: f64, x: &[f64], law: &Measure, y: &[f64]) -> Result<Option<DVector<f64>>> {
        let hs = self.drift_integrals(t, x, law);
        let mut out = DVector::zeros(self.d);
        let mut k = vec![0.0; self.d];
        for (i, f) in self.drift_factors.iter().enumerate() {
            f(t, x, y, &mut k);
            for j in 0..self.d {
                let others: f64 = hs
                    .iter()
                    .enumerate()
                    .filter(|(l, _)| *l != i)
                    .map(|(_, h)| h[j])
                    .product();
                out[j] += (k[j] - hs[i][j]) * others;
            }
        }
        Ok(Some(out))
    }
    fn flat_sigma(&self, t: f64, x: &[f64], law: &Measure, y: &[f64]) -> Result<Option<DMatrix<f64>>> {
        let ms = self.sigma_integrals(t, x, law);
        let mut out = DMatrix::zeros(self.d, self.q);
        for (i, f) in self.sigma_factors.iter().enumerate() {
            let mut k = vec![0.0; f.rows * f.cols];
            (f.kernel)(t, x, y, &mut k);
            let delta = DMatrix::from_row_slice(f.rows, f.cols, &k) - &ms[i];
            let left = PolynomialModel::chain(&ms[..i], self.d);
            let right = PolynomialModel::chain(&ms[i + 1..], f.cols);
            out += left * delta * right;
        }
        Ok(Some(out))
    }
}
