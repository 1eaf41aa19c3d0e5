//! Heat semigroup, control injection and mild-solution map in a truncated
//! Dirichlet eigenbasis.
//!
//! Fields are coefficient vectors in the orthonormal eigenbasis
//! `φ_k = √(2/L) sin(kπx/L)` (tensor products on rectangles). In that basis
//! `e^{Δt}` is diagonal with factors `e^{-λ_k t}` and `χ_ω` becomes the Gram
//! matrix `G_{jk} = ⟨χ_ω φ_j, φ_k⟩`.

use std::f64::consts::PI;
use std::ops::{Add, Mul, Sub};

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::admissible::ControlProfile;
use crate::error::{Error, Result};

/// Spatial domain with an explicit Dirichlet eigenbasis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum DomainSpec {
    /// `(0, length)`.
    Interval { length: f64 },
    /// `(0, width) × (0, height)`.
    Rectangle { width: f64, height: f64 },
}

impl DomainSpec {
    pub fn validate(&self) -> Result<()> {
        let ok = |v: f64| v.is_finite() && v > 0.0;
        match *self {
            DomainSpec::Interval { length } if ok(length) => Ok(()),
            DomainSpec::Rectangle { width, height } if ok(width) && ok(height) => Ok(()),
            _ => Err(Error::invalid(format!(
                "domain lengths must be positive and finite: {self:?}"
            ))),
        }
    }
}

/// The control region ω.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ControlRegion {
    Interval { lower: f64, upper: f64 },
    Rectangle { x: [f64; 2], y: [f64; 2] },
}

impl ControlRegion {
    pub fn validate(&self, domain: &DomainSpec) -> Result<()> {
        let check = |a: f64, b: f64, len: f64, axis: &str| -> Result<()> {
            if !(a.is_finite() && b.is_finite()) {
                return Err(Error::invalid(format!(
                    "control region {axis}-bounds must be finite"
                )));
            }
            if a >= b {
                return Err(Error::invalid(format!(
                    "degenerate control region along {axis}: ({a}, {b}) has no interior"
                )));
            }
            if a < 0.0 || b > len {
                return Err(Error::invalid(format!(
                    "control region ({a}, {b}) along {axis} is not inside (0, {len})"
                )));
            }
            Ok(())
        };
        match (*self, *domain) {
            (ControlRegion::Interval { lower, upper }, DomainSpec::Interval { length }) => {
                check(lower, upper, length, "x")
            }
            (ControlRegion::Rectangle { x, y }, DomainSpec::Rectangle { width, height }) => {
                check(x[0], x[1], width, "x")?;
                check(y[0], y[1], height, "y")
            }
            _ => Err(Error::invalid(
                "control region kind does not match the domain kind",
            )),
        }
    }
}

/// Position of a basis function in the separable family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ModeIndex {
    Interval(usize),
    Rectangle(usize, usize),
}

/// The first `K` Dirichlet eigenpairs, eigenvalues ascending.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenBasis {
    lambdas: Vec<f64>,
    modes: Vec<ModeIndex>,
}

impl EigenBasis {
    pub fn len(&self) -> usize {
        self.lambdas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lambdas.is_empty()
    }

    pub fn lambdas(&self) -> &[f64] {
        &self.lambdas
    }

    pub fn modes(&self) -> &[ModeIndex] {
        &self.modes
    }

    /// Per-mode factors `e^{-λ_k t}`.
    pub fn decay(&self, t: f64) -> DVector<f64> {
        DVector::from_iterator(self.len(), self.lambdas.iter().map(|l| (-l * t).exp()))
    }
}

/// Element of L²(Ω) stored as eigenbasis coefficients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SpectralField(DVector<f64>);

impl SpectralField {
    pub fn new(coeffs: DVector<f64>) -> Self {
        SpectralField(coeffs)
    }

    pub fn zeros(modes: usize) -> Self {
        SpectralField(DVector::zeros(modes))
    }

    /// The `k`-th basis function (zero-based).
    pub fn unit(modes: usize, k: usize) -> Self {
        let mut v = DVector::zeros(modes);
        v[k] = 1.0;
        SpectralField(v)
    }

    pub fn from_slice(coeffs: &[f64]) -> Self {
        SpectralField(DVector::from_column_slice(coeffs))
    }

    pub fn coeffs(&self) -> &DVector<f64> {
        &self.0
    }

    pub fn into_inner(self) -> DVector<f64> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn norm(&self) -> f64 {
        self.0.norm()
    }

    pub fn dot(&self, other: &SpectralField) -> f64 {
        self.0.dot(&other.0)
    }

    pub fn scale(&self, c: f64) -> SpectralField {
        SpectralField(&self.0 * c)
    }

    pub fn as_slice(&self) -> &[f64] {
        self.0.as_slice()
    }
}

impl Add for &SpectralField {
    type Output = SpectralField;
    fn add(self, rhs: &SpectralField) -> SpectralField {
        SpectralField(&self.0 + &rhs.0)
    }
}

impl Sub for &SpectralField {
    type Output = SpectralField;
    fn sub(self, rhs: &SpectralField) -> SpectralField {
        SpectralField(&self.0 - &rhs.0)
    }
}

impl Mul<f64> for &SpectralField {
    type Output = SpectralField;
    fn mul(self, rhs: f64) -> SpectralField {
        self.scale(rhs)
    }
}

/// `χ_ω` restricted to the truncated basis.
#[derive(Debug, Clone, PartialEq)]
pub struct GramMatrix(DMatrix<f64>);

impl GramMatrix {
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn apply(&self, v: &DVector<f64>) -> DVector<f64> {
        &self.0 * v
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }
}

pub fn build_basis(domain: &DomainSpec, modes: usize) -> Result<EigenBasis> {
    if modes == 0 {
        return Err(Error::invalid("mode count K must be at least 1"));
    }
    domain.validate()?;
    match *domain {
        DomainSpec::Interval { length } => {
            let lambdas = (1..=modes)
                .map(|k| (k as f64 * PI / length).powi(2))
                .collect();
            let modes = (1..=modes).map(ModeIndex::Interval).collect();
            Ok(EigenBasis { lambdas, modes })
        }
        DomainSpec::Rectangle { width, height } => {
            let mut all = Vec::with_capacity(modes * modes);
            for m in 1..=modes {
                for n in 1..=modes {
                    let l = (m as f64 * PI / width).powi(2) + (n as f64 * PI / height).powi(2);
                    all.push((l, m, n));
                }
            }
            all.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
            all.truncate(modes);
            Ok(EigenBasis {
                lambdas: all.iter().map(|e| e.0).collect(),
                modes: all.iter().map(|e| ModeIndex::Rectangle(e.1, e.2)).collect(),
            })
        }
    }
}

/// `(2/L) ∫_a^b sin(jπx/L) sin(kπx/L) dx` in closed form.
fn sine_overlap(j: usize, k: usize, length: f64, a: f64, b: f64) -> f64 {
    let w = PI / length;
    if j == k {
        let f = |x: f64| x - (2.0 * j as f64 * w * x).sin() / (2.0 * j as f64 * w);
        (f(b) - f(a)) / length
    } else {
        let d = j as f64 - k as f64;
        let s = (j + k) as f64;
        let f = |x: f64| (d * w * x).sin() / (d * w) - (s * w * x).sin() / (s * w);
        (f(b) - f(a)) / length
    }
}

pub fn control_gram(
    domain: &DomainSpec,
    region: &ControlRegion,
    basis: &EigenBasis,
) -> Result<GramMatrix> {
    region.validate(domain)?;
    let k = basis.len();
    let entry = |p: ModeIndex, q: ModeIndex| -> f64 {
        match (p, q, *domain, *region) {
            (
                ModeIndex::Interval(j),
                ModeIndex::Interval(l),
                DomainSpec::Interval { length },
                ControlRegion::Interval { lower, upper },
            ) => sine_overlap(j, l, length, lower, upper),
            (
                ModeIndex::Rectangle(m, n),
                ModeIndex::Rectangle(p, q),
                DomainSpec::Rectangle { width, height },
                ControlRegion::Rectangle { x, y },
            ) => sine_overlap(m, p, width, x[0], x[1]) * sine_overlap(n, q, height, y[0], y[1]),
            _ => unreachable!("basis built for a different domain kind"),
        }
    };
    let modes = basis.modes();
    let mut g = DMatrix::zeros(k, k);
    for i in 0..k {
        for j in i..k {
            let v = entry(modes[i], modes[j]);
            g[(i, j)] = v;
            g[(j, i)] = v;
        }
    }

    // Compression of a projection onto span{φ_k}: spectrum must lie in [0, 1].
    let spectrum = SymmetricEigen::new(g.clone()).eigenvalues;
    let (lo, hi) = spectrum
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &e| {
            (lo.min(e), hi.max(e))
        });
    if lo < -1e-10 || hi > 1.0 + 1e-10 {
        return Err(Error::invalid(format!(
            "control Gram spectrum [{lo:e}, {hi:e}] outside [0, 1]"
        )));
    }
    Ok(GramMatrix(g))
}

/// Applies the free heat semigroup `e^{Δt}`.
pub fn propagate(y: &SpectralField, t: f64, basis: &EigenBasis) -> Result<SpectralField> {
    if !(t >= 0.0) || !t.is_finite() {
        return Err(Error::invalid(format!(
            "propagation time must be finite and nonnegative, got {t}"
        )));
    }
    check_len(y, basis)?;
    Ok(SpectralField(y.0.component_mul(&basis.decay(t))))
}

/// `∫_{s0}^{s1} e^{-λ(T-σ)} dσ` for `s0 ≤ s1 ≤ T`, stable for small `λ(s1-s0)`.
pub fn window_factor(lambda: f64, s0: f64, s1: f64, horizon: f64) -> f64 {
    if s1 <= s0 {
        return 0.0;
    }
    -(-lambda * (horizon - s1)).exp() * (-lambda * (s1 - s0)).exp_m1() / lambda
}

/// Per-mode window factors for the part of `[s0, s1]` after `tau`.
pub fn window_factors(
    basis: &EigenBasis,
    s0: f64,
    s1: f64,
    tau: f64,
    horizon: f64,
) -> DVector<f64> {
    let lo = s0.max(tau);
    DVector::from_iterator(
        basis.len(),
        basis
            .lambdas()
            .iter()
            .map(|&l| window_factor(l, lo, s1, horizon)),
    )
}

/// Terminal state `y(T; χ_(τ,T) u, y0)` of the mild solution. Each control step
/// is integrated exactly against the semigroup; the step straddling `tau` is
/// clipped.
pub fn solve_state(
    y0: &SpectralField,
    u: &ControlProfile,
    tau: f64,
    horizon: f64,
    basis: &EigenBasis,
    gram: &GramMatrix,
) -> Result<SpectralField> {
    if !(tau >= 0.0) || !(tau < horizon) {
        return Err(Error::invalid(format!(
            "start time must satisfy 0 <= tau < T, got tau = {tau}, T = {horizon}"
        )));
    }
    check_len(y0, basis)?;
    if gram.dim() != basis.len() {
        return Err(Error::invalid("Gram matrix size does not match the basis"));
    }
    if u.modes() != basis.len() {
        return Err(Error::invalid(format!(
            "control has {} modes, basis has {}",
            u.modes(),
            basis.len()
        )));
    }
    let grid = u.grid();
    if (grid.horizon() - horizon).abs() > 1e-12 * horizon {
        return Err(Error::invalid(format!(
            "control grid horizon {} does not match T = {horizon}",
            grid.horizon()
        )));
    }
    let mut y = y0.0.component_mul(&basis.decay(horizon));
    for (i, ui) in u.values().iter().enumerate() {
        let (s0, s1) = grid.step(i);
        if s1 <= tau {
            continue;
        }
        let f = window_factors(basis, s0, s1, tau, horizon);
        y += gram.apply(ui).component_mul(&f);
    }
    Ok(SpectralField(y))
}

fn check_len(y: &SpectralField, basis: &EigenBasis) -> Result<()> {
    if y.len() != basis.len() {
        return Err(Error::invalid(format!(
            "field has {} coefficients, basis has {} modes",
            y.len(),
            basis.len()
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::admissible::TimeGrid;
    use proptest::prelude::*;

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs().max(1e-300)
    }

    fn unit_interval() -> DomainSpec {
        DomainSpec::Interval { length: PI }
    }

    #[test]
    fn zero_modes_rejected() {
        assert!(matches!(
            build_basis(&unit_interval(), 0),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn rectangle_modes_sorted_and_stable() {
        let b = build_basis(
            &DomainSpec::Rectangle {
                width: PI,
                height: PI,
            },
            4,
        )
        .unwrap();
        assert_eq!(b.lambdas(), &[2.0, 5.0, 5.0, 8.0]);
        assert_eq!(
            b.modes(),
            &[
                ModeIndex::Rectangle(1, 1),
                ModeIndex::Rectangle(1, 2),
                ModeIndex::Rectangle(2, 1),
                ModeIndex::Rectangle(2, 2)
            ]
        );
    }

    #[test]
    fn full_region_gives_identity() {
        let d = unit_interval();
        let b = build_basis(&d, 8).unwrap();
        let g = control_gram(
            &d,
            &ControlRegion::Interval {
                lower: 0.0,
                upper: PI,
            },
            &b,
        )
        .unwrap();
        assert!((g.matrix() - DMatrix::identity(8, 8)).amax() < 1e-14);

        let d = DomainSpec::Rectangle {
            width: 1.0,
            height: 2.0,
        };
        let b = build_basis(&d, 6).unwrap();
        let r = ControlRegion::Rectangle {
            x: [0.0, 1.0],
            y: [0.0, 2.0],
        };
        let g = control_gram(&d, &r, &b).unwrap();
        assert!((g.matrix() - DMatrix::identity(6, 6)).amax() < 1e-14);
    }

    #[test]
    fn degenerate_region_rejected() {
        let d = unit_interval();
        let b = build_basis(&d, 3).unwrap();
        let r = ControlRegion::Interval {
            lower: 0.5,
            upper: 0.5,
        };
        assert!(matches!(
            control_gram(&d, &r, &b),
            Err(Error::InvalidArgument(_))
        ));
        let r = ControlRegion::Interval {
            lower: -0.1,
            upper: 0.5,
        };
        assert!(control_gram(&d, &r, &b).is_err());
    }

    #[test]
    fn negative_time_rejected() {
        let b = build_basis(&unit_interval(), 3).unwrap();
        assert!(propagate(&SpectralField::zeros(3), -1e-3, &b).is_err());
    }

    #[test]
    fn zero_control_is_free_evolution() {
        let d = unit_interval();
        let b = build_basis(&d, 5).unwrap();
        let g = control_gram(
            &d,
            &ControlRegion::Interval {
                lower: 0.2,
                upper: 0.8,
            },
            &b,
        )
        .unwrap();
        let y0 = SpectralField::from_slice(&[1.0, 0.5, -0.2, 0.0, 0.1]);
        let u = ControlProfile::zeros(TimeGrid::new(1.0, 16).unwrap(), 5);
        let y = solve_state(&y0, &u, 0.0, 1.0, &b, &g).unwrap();
        let free = propagate(&y0, 1.0, &b).unwrap();
        assert!((y.coeffs() - free.coeffs()).amax() < 1e-15);
        let z = solve_state(&SpectralField::zeros(5), &u, 0.3, 1.0, &b, &g).unwrap();
        assert_eq!(z.norm(), 0.0);
    }

    #[test]
    fn state_map_rejects_bad_inputs() {
        let d = unit_interval();
        let b = build_basis(&d, 3).unwrap();
        let g = control_gram(
            &d,
            &ControlRegion::Interval {
                lower: 0.2,
                upper: 0.8,
            },
            &b,
        )
        .unwrap();
        let y0 = SpectralField::zeros(3);
        let u = ControlProfile::zeros(TimeGrid::new(1.0, 4).unwrap(), 3);
        assert!(solve_state(&y0, &u, 1.0, 1.0, &b, &g).is_err());
        assert!(solve_state(&y0, &u, 0.0, 2.0, &b, &g).is_err());
        let wrong = ControlProfile::zeros(TimeGrid::new(1.0, 4).unwrap(), 2);
        assert!(solve_state(&y0, &wrong, 0.0, 1.0, &b, &g).is_err());
    }

    #[test]
    fn single_active_step_is_clipped_at_tau() {
        // One mode, unit control on the last step only half active.
        let d = unit_interval();
        let b = build_basis(&d, 1).unwrap();
        let g = control_gram(
            &d,
            &ControlRegion::Interval {
                lower: 0.0,
                upper: PI,
            },
            &b,
        )
        .unwrap();
        let grid = TimeGrid::new(1.0, 2).unwrap();
        let u = ControlProfile::from_steps(grid, vec![DVector::from_element(1, 1.0); 2]).unwrap();
        let y = solve_state(&SpectralField::zeros(1), &u, 0.75, 1.0, &b, &g).unwrap();
        assert!(rel(y.coeffs()[0], 1.0 - (-0.25f64).exp()) < 1e-14);
    }

    #[test]
    fn window_factor_small_lambda_limit() {
        let f = window_factor(1e-14, 0.2, 0.7, 1.0);
        assert!((f - 0.5).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn semigroup_composition(c in proptest::collection::vec(-2.0f64..2.0, 6), s in 0.0f64..2.0, t in 0.0f64..2.0) {
            let b = build_basis(&unit_interval(), 6).unwrap();
            let y = SpectralField::from_slice(&c);
            let two = propagate(&propagate(&y, s, &b).unwrap(), t, &b).unwrap();
            let one = propagate(&y, s + t, &b).unwrap();
            prop_assert!((two.coeffs() - one.coeffs()).amax() <= 1e-12 * (1.0 + y.norm()));
        }

        #[test]
        fn energy_decay(c in proptest::collection::vec(-2.0f64..2.0, 6), t in 0.0f64..3.0) {
            let b = build_basis(&unit_interval(), 6).unwrap();
            let y = SpectralField::from_slice(&c);
            let p = propagate(&y, t, &b).unwrap();
            prop_assert!(p.norm() <= (-b.lambdas()[0] * t).exp() * y.norm() * (1.0 + 1e-14));
        }

        #[test]
        fn gram_symmetric_psd(a in 0.0f64..3.0, w in 0.01f64..3.0, k in 1usize..24) {
            let d = unit_interval();
            let upper = (a + w).min(PI);
            prop_assume!(upper > a + 1e-6);
            let b = build_basis(&d, k).unwrap();
            let g = control_gram(&d, &ControlRegion::Interval { lower: a, upper }, &b).unwrap();
            prop_assert_eq!(g.matrix(), &g.matrix().transpose());
            let e = SymmetricEigen::new(g.matrix().clone()).eigenvalues;
            prop_assert!(e.iter().all(|&v| (-1e-12..=1.0 + 1e-12).contains(&v)));
        }
    }
}
