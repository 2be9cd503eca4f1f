//! Rate laws: coagulation kernel, selection rate and the power-law breakage
//! function, plus an admissibility checker for the standing assumptions.
//!
//! The breakage function is fixed to the power-law family
//!
//! ```text
//! b(m | m*) = (γ + 2) m^γ / m*^(1+γ),   0 < m < m*,   -1 < γ <= 0
//! ```
//!
//! so every integral of `b` against `1`, `m` or `m^(-2σ)` over a sub-interval
//! has a closed form. The sectional scheme uses these closed forms directly,
//! which keeps breakage free of quadrature error.

use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, Error, Result};

/// Polynomial with ascending coefficients `c0 + c1 m + c2 m^2 + ...`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Polynomial {
    coeffs: Vec<f64>,
}

impl Polynomial {
    pub fn new(coeffs: Vec<f64>) -> Self {
        Self { coeffs }
    }

    /// `Γ(m) = c m`.
    pub fn linear(c: f64) -> Self {
        Self::new(vec![0.0, c])
    }

    pub fn constant(c: f64) -> Self {
        Self::new(vec![c])
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn eval(&self, m: f64) -> f64 {
        self.coeffs.iter().rev().fold(0.0, |acc, &c| acc * m + c)
    }

    /// Index of the highest nonzero coefficient.
    pub fn degree(&self) -> Option<usize> {
        self.coeffs.iter().rposition(|&c| c != 0.0)
    }

    pub fn leading_coeff(&self) -> f64 {
        self.degree().map_or(0.0, |d| self.coeffs[d])
    }
}

/// Decay function φ controlling the selection rate of large particles.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DecayFn {
    /// `φ0 (1 + m)^(-a)`
    Power { phi0: f64, a: f64 },
    /// `φ0 exp(-a m)`
    Exponential { phi0: f64, a: f64 },
    ConstantZero,
}

impl DecayFn {
    pub fn eval(&self, m: f64) -> f64 {
        match *self {
            DecayFn::Power { phi0, a } => phi0 * (1.0 + m).powf(-a),
            DecayFn::Exponential { phi0, a } => phi0 * (-a * m).exp(),
            DecayFn::ConstantZero => 0.0,
        }
    }

    /// φ(0), the supremum of a non-increasing φ.
    pub fn at_zero(&self) -> f64 {
        self.eval(0.0)
    }

    /// Nonnegative, non-increasing, and vanishing at infinity.
    pub fn decays(&self) -> bool {
        match *self {
            DecayFn::Power { phi0, a } | DecayFn::Exponential { phi0, a } => {
                phi0 == 0.0 || (phi0 > 0.0 && a > 0.0)
            }
            DecayFn::ConstantZero => true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelForm {
    /// `k1 (m m*)^(-σ)` on `(0,1)^2`, `k1 Γ(m*) m^(-σ)` on `(0,1)×[1,∞)`,
    /// `k1 Γ(m) Γ(m*)` on `[1,∞)^2`.
    Piecewise,
    /// `k1 Γ(m) Γ(m*) (m m*)^(-σ)` everywhere.
    ProductSingular,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionForm {
    /// `S(m) = k3 φ(m) m^(1+γ)`
    PowerBound,
    /// `S(m) = k3 φ(m) m`
    LinearBound,
    Zero,
}

/// Which set of hypotheses a model is meant to satisfy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Hypothesis {
    /// Existence of weak solutions with singular piecewise kernel.
    Existence,
    /// Gelation bounds for pure coagulation with product kernel.
    CoagulationGelation,
    /// Gelation and long-time bound with product kernel plus fragmentation.
    FragmentationGelation,
}

/// All rate-law parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelModel {
    pub sigma: f64,
    pub gamma: f64,
    pub k1: f64,
    #[serde(default)]
    pub k3: f64,
    pub gamma_poly: Polynomial,
    #[serde(default = "default_lambda")]
    pub lambda_growth: f64,
    #[serde(default = "default_phi")]
    pub phi: DecayFn,
    pub kernel_form: KernelForm,
    #[serde(default = "default_selection")]
    pub selection_form: SelectionForm,
}

fn default_lambda() -> f64 {
    1.0
}

fn default_phi() -> DecayFn {
    DecayFn::ConstantZero
}

fn default_selection() -> SelectionForm {
    SelectionForm::Zero
}

impl KernelModel {
    /// Product kernel `k1 Γ(m)Γ(m*)(m m*)^(-σ)` without fragmentation.
    pub fn product(sigma: f64, k1: f64, gamma_poly: Polynomial, lambda_growth: f64) -> Self {
        Self {
            sigma,
            gamma: 0.0,
            k1,
            k3: 0.0,
            gamma_poly,
            lambda_growth,
            phi: DecayFn::ConstantZero,
            kernel_form: KernelForm::ProductSingular,
            selection_form: SelectionForm::Zero,
        }
    }

    pub fn with_selection(mut self, form: SelectionForm, k3: f64, phi: DecayFn) -> Self {
        self.selection_form = form;
        self.k3 = k3;
        self.phi = phi;
        self
    }

    pub fn with_sigma(mut self, sigma: f64) -> Self {
        self.sigma = sigma;
        self
    }

    pub fn with_gamma(mut self, gamma: f64) -> Self {
        self.gamma = gamma;
        self
    }

    /// Expected number of fragments per breakup, `(γ+2)/(γ+1)`.
    pub fn eta(&self) -> f64 {
        (self.gamma + 2.0) / (self.gamma + 1.0)
    }

    /// `(γ+2)/(1+γ-2σ)`, the constant bounding the singular fragment moment.
    pub fn k2(&self) -> f64 {
        (self.gamma + 2.0) / (1.0 + self.gamma - 2.0 * self.sigma)
    }

    pub fn has_fragmentation(&self) -> bool {
        self.selection_form != SelectionForm::Zero
            && self.k3 != 0.0
            && self.phi != DecayFn::ConstantZero
    }

    pub fn target_hypothesis(&self) -> Hypothesis {
        match (self.kernel_form, self.has_fragmentation()) {
            (KernelForm::Piecewise, _) => Hypothesis::Existence,
            (KernelForm::ProductSingular, false) => Hypothesis::CoagulationGelation,
            (KernelForm::ProductSingular, true) => Hypothesis::FragmentationGelation,
        }
    }

    fn check_finite(&self) -> Result<()> {
        ensure_finite("sigma", self.sigma)?;
        ensure_finite("gamma", self.gamma)?;
        ensure_finite("k1", self.k1)?;
        ensure_finite("k3", self.k3)?;
        ensure_finite("lambda_growth", self.lambda_growth)?;
        for &c in self.gamma_poly.coeffs() {
            ensure_finite("gamma_poly", c)?;
        }
        match self.phi {
            DecayFn::Power { phi0, a } | DecayFn::Exponential { phi0, a } => {
                ensure_finite("phi.phi0", phi0)?;
                ensure_finite("phi.a", a)?;
            }
            DecayFn::ConstantZero => {}
        }
        Ok(())
    }
}

fn positive_mass(name: &str, m: f64) -> Result<()> {
    if m > 0.0 && m.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!("{name} must be a positive finite mass, got {m}")))
    }
}

/// Coagulation rate `C^K(m, m*)`.
pub fn coag_rate(m: f64, m_star: f64, model: &KernelModel) -> Result<f64> {
    positive_mass("m", m)?;
    positive_mass("m_star", m_star)?;
    Ok(coag_rate_unchecked(m, m_star, model))
}

pub(crate) fn coag_rate_unchecked(m: f64, m_star: f64, model: &KernelModel) -> f64 {
    let KernelModel { sigma, k1, .. } = *model;
    let gp = &model.gamma_poly;
    match model.kernel_form {
        KernelForm::ProductSingular => {
            k1 * gp.eval(m) * gp.eval(m_star) * (m * m_star).powf(-sigma)
        }
        KernelForm::Piecewise => {
            let (lo, hi) = if m <= m_star { (m, m_star) } else { (m_star, m) };
            if hi < 1.0 {
                k1 * (lo * hi).powf(-sigma)
            } else if lo < 1.0 {
                k1 * gp.eval(hi) * lo.powf(-sigma)
            } else {
                k1 * gp.eval(lo) * gp.eval(hi)
            }
        }
    }
}

/// Selection rate `S^R(m)`.
pub fn selection_rate(m: f64, model: &KernelModel) -> Result<f64> {
    positive_mass("m", m)?;
    Ok(selection_rate_unchecked(m, model))
}

pub(crate) fn selection_rate_unchecked(m: f64, model: &KernelModel) -> f64 {
    match model.selection_form {
        SelectionForm::PowerBound => model.k3 * model.phi.eval(m) * m.powf(1.0 + model.gamma),
        SelectionForm::LinearBound => model.k3 * model.phi.eval(m) * m,
        SelectionForm::Zero => 0.0,
    }
}

fn check_interval(a: f64, b: f64, m_star: f64) -> Result<()> {
    positive_mass("m_star", m_star)?;
    if !(0.0 <= a && a <= b && b <= m_star) {
        return Err(Error::Domain(format!(
            "fragment interval [{a}, {b}] must satisfy 0 <= a <= b <= m_star = {m_star}"
        )));
    }
    Ok(())
}

/// Number of fragments with mass in `[a, b]` per breakup of a particle of
/// mass `m_star`: `η ((b/m*)^(γ+1) - (a/m*)^(γ+1))`.
pub fn fragment_number_in(a: f64, b: f64, m_star: f64, model: &KernelModel) -> Result<f64> {
    check_interval(a, b, m_star)?;
    Ok(fragment_number_unchecked(a, b, m_star, model.gamma))
}

/// Mass carried by fragments in `[a, b]`: `m* ((b/m*)^(γ+2) - (a/m*)^(γ+2))`.
pub fn fragment_mass_in(a: f64, b: f64, m_star: f64, model: &KernelModel) -> Result<f64> {
    check_interval(a, b, m_star)?;
    Ok(fragment_mass_unchecked(a, b, m_star, model.gamma))
}

pub(crate) fn fragment_number_unchecked(a: f64, b: f64, m_star: f64, gamma: f64) -> f64 {
    if a == b {
        return 0.0;
    }
    let e = gamma + 1.0;
    let eta = (gamma + 2.0) / e;
    eta * ((b / m_star).powf(e) - (a / m_star).powf(e))
}

pub(crate) fn fragment_mass_unchecked(a: f64, b: f64, m_star: f64, gamma: f64) -> f64 {
    if a == b {
        return 0.0;
    }
    let e = gamma + 2.0;
    m_star * ((b / m_star).powf(e) - (a / m_star).powf(e))
}

/// `∫_0^{m*} m^(-2σ) b(m|m*) dm = k2 m*^(-2σ)`.
pub fn singular_fragment_moment(m_star: f64, model: &KernelModel) -> Result<f64> {
    positive_mass("m_star", m_star)?;
    let denom = 1.0 + model.gamma - 2.0 * model.sigma;
    if denom <= 0.0 {
        return Err(Error::Domain(format!(
            "1 + γ - 2σ = {denom} <= 0: singular fragment moment diverges"
        )));
    }
    Ok(model.k2() * m_star.powf(-2.0 * model.sigma))
}

/// Identifier of one standing assumption.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConditionId {
    GammaRange,
    SigmaRange,
    K1Positive,
    K3Nonnegative,
    GammaPolyNonnegative,
    K2AboveTwo,
    PInterval,
    EtaAtLeastTwo,
    PhiDecay,
    SelectionBound,
    SelectionZero,
    GammaGrowth,
}

impl ConditionId {
    pub const ALL: [ConditionId; 12] = [
        ConditionId::GammaRange,
        ConditionId::SigmaRange,
        ConditionId::K1Positive,
        ConditionId::K3Nonnegative,
        ConditionId::GammaPolyNonnegative,
        ConditionId::K2AboveTwo,
        ConditionId::PInterval,
        ConditionId::EtaAtLeastTwo,
        ConditionId::PhiDecay,
        ConditionId::SelectionBound,
        ConditionId::SelectionZero,
        ConditionId::GammaGrowth,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ConditionId::GammaRange => "gamma_range",
            ConditionId::SigmaRange => "sigma_range",
            ConditionId::K1Positive => "k1_positive",
            ConditionId::K3Nonnegative => "k3_nonnegative",
            ConditionId::GammaPolyNonnegative => "gamma_poly_nonnegative",
            ConditionId::K2AboveTwo => "k2_above_two",
            ConditionId::PInterval => "p_interval",
            ConditionId::EtaAtLeastTwo => "eta_at_least_two",
            ConditionId::PhiDecay => "phi_decay",
            ConditionId::SelectionBound => "selection_bound",
            ConditionId::SelectionZero => "selection_zero",
            ConditionId::GammaGrowth => "gamma_growth",
        }
    }

    /// Hypothesis sets this condition belongs to.
    pub fn applies_to(self, h: Hypothesis) -> bool {
        use ConditionId::*;
        use Hypothesis::*;
        match self {
            GammaRange | SigmaRange | K1Positive | K3Nonnegative | GammaPolyNonnegative
            | EtaAtLeastTwo => true,
            K2AboveTwo | PInterval | SelectionBound => h == Existence,
            PhiDecay => h != CoagulationGelation,
            SelectionZero => h == CoagulationGelation,
            GammaGrowth => h != Existence,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Condition {
    pub id: ConditionId,
    pub holds: bool,
    /// The constant the verdict was computed from.
    pub value: f64,
    /// Whether this condition is part of the model's target hypothesis set.
    pub required: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdmissibilityReport {
    pub target: Hypothesis,
    pub conditions: Vec<Condition>,
    /// Feasible `p` with `p(γ-σ)+1 > 0`, intersected with `(1, 2)`.
    pub p_interval: Option<(f64, f64)>,
    pub k2: f64,
    pub eta: f64,
}

impl AdmissibilityReport {
    pub fn get(&self, id: ConditionId) -> &Condition {
        self.conditions
            .iter()
            .find(|c| c.id == id)
            .expect("every condition id is reported")
    }

    /// All conditions required by the target hypothesis hold.
    pub fn verdict(&self) -> bool {
        self.conditions.iter().filter(|c| c.required).all(|c| c.holds)
    }

    pub fn failures(&self) -> Vec<&'static str> {
        self.conditions
            .iter()
            .filter(|c| c.required && !c.holds)
            .map(|c| c.id.name())
            .collect()
    }
}

/// Sampling window for the `Γ(m) >= λ m^(1+σ)` check when no grid is known.
pub const DEFAULT_GROWTH_RANGE: (f64, f64) = (1e-6, 1e6);
const GROWTH_SAMPLES: usize = 256;

pub fn validate_model(model: &KernelModel) -> Result<AdmissibilityReport> {
    validate_model_on(model, DEFAULT_GROWTH_RANGE)
}

/// Like [`validate_model`], sampling the growth condition on `mass_range`.
pub fn validate_model_on(model: &KernelModel, mass_range: (f64, f64)) -> Result<AdmissibilityReport> {
    model.check_finite()?;
    if model.gamma_poly.coeffs().is_empty() {
        return Err(Error::Domain("gamma_poly must have at least one coefficient".into()));
    }
    let (lo, hi) = mass_range;
    if !(lo > 0.0 && hi > lo) {
        return Err(Error::Domain(format!("invalid growth sampling range [{lo}, {hi}]")));
    }

    let target = model.target_hypothesis();
    let KernelModel { sigma, gamma, k1, k3, .. } = *model;
    let k2 = model.k2();
    let eta = model.eta();

    let p_upper = if gamma - sigma >= 0.0 { 2.0 } else { (1.0 / (sigma - gamma)).min(2.0) };
    let p_interval = (p_upper > 1.0).then_some((1.0, p_upper));

    let growth = growth_ratio(model, lo, hi);

    let mut conditions = Vec::with_capacity(ConditionId::ALL.len());
    let mut push = |id: ConditionId, holds: bool, value: f64| {
        conditions.push(Condition { id, holds, value, required: id.applies_to(target) });
    };
    push(ConditionId::GammaRange, gamma > -1.0 && gamma <= 0.0, gamma);
    let sigma_cap = (1.0 + gamma) / 2.0;
    push(ConditionId::SigmaRange, sigma >= 0.0 && sigma < sigma_cap, sigma_cap);
    push(ConditionId::K1Positive, k1 > 0.0, k1);
    push(ConditionId::K3Nonnegative, k3 >= 0.0, k3);
    let min_coeff = model.gamma_poly.coeffs().iter().copied().fold(f64::INFINITY, f64::min);
    push(
        ConditionId::GammaPolyNonnegative,
        min_coeff >= 0.0 && model.gamma_poly.leading_coeff() > 0.0,
        min_coeff,
    );
    let k2_value = if k2.is_finite() && k2 > 0.0 { k2 } else { f64::MAX };
    push(ConditionId::K2AboveTwo, k2.is_finite() && k2 > 2.0 && 1.0 + gamma - 2.0 * sigma > 0.0, k2_value);
    push(ConditionId::PInterval, p_interval.is_some(), p_upper);
    push(ConditionId::EtaAtLeastTwo, eta >= 2.0, eta);
    let phi_limit = model.phi.eval(1e12);
    push(ConditionId::PhiDecay, model.phi.decays(), phi_limit);
    let selection_ok = match model.selection_form {
        SelectionForm::PowerBound | SelectionForm::Zero => true,
        SelectionForm::LinearBound => gamma == 0.0,
    };
    push(ConditionId::SelectionBound, selection_ok, gamma);
    push(ConditionId::SelectionZero, !model.has_fragmentation(), k3);
    push(
        ConditionId::GammaGrowth,
        model.kernel_form == KernelForm::ProductSingular && model.lambda_growth > 1.0 && growth.holds,
        growth.min_ratio,
    );

    Ok(AdmissibilityReport { target, conditions, p_interval, k2: k2_value, eta })
}

struct Growth {
    holds: bool,
    min_ratio: f64,
}

/// Samples `Γ(m) / (λ m^(1+σ))` on log-spaced points and checks the leading
/// term dominates at infinity.
fn growth_ratio(model: &KernelModel, lo: f64, hi: f64) -> Growth {
    let lambda = model.lambda_growth;
    let exponent = 1.0 + model.sigma;
    let step = (hi / lo).ln() / (GROWTH_SAMPLES - 1) as f64;
    let min_ratio = (0..GROWTH_SAMPLES)
        .map(|k| {
            let m = lo * (step * k as f64).exp();
            model.gamma_poly.eval(m) / (lambda * m.powf(exponent))
        })
        .fold(f64::INFINITY, f64::min);
    let min_ratio = if min_ratio.is_finite() { min_ratio } else { 0.0 };

    let asymptotic = match model.gamma_poly.degree() {
        Some(d) if (d as f64) > exponent => model.gamma_poly.leading_coeff() > 0.0,
        Some(d) if (d as f64) == exponent => model.gamma_poly.leading_coeff() >= lambda,
        _ => false,
    };
    Growth { holds: asymptotic && min_ratio >= 1.0 - 1e-12, min_ratio }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn piecewise(sigma: f64, gamma: f64) -> KernelModel {
        KernelModel {
            sigma,
            gamma,
            k1: 1.0,
            k3: 0.1,
            gamma_poly: Polynomial::linear(1.0),
            lambda_growth: 1.0,
            phi: DecayFn::Power { phi0: 1.0, a: 1.0 },
            kernel_form: KernelForm::Piecewise,
            selection_form: SelectionForm::PowerBound,
        }
    }

    #[test]
    fn k2_examples() {
        let r = validate_model(&piecewise(0.25, 0.0)).unwrap();
        assert_relative_eq!(r.k2, 4.0);
        assert!(r.get(ConditionId::K2AboveTwo).holds);
        assert!(r.verdict());

        let r = validate_model(&piecewise(0.0, 0.0)).unwrap();
        assert_relative_eq!(r.k2, 2.0);
        assert!(!r.get(ConditionId::K2AboveTwo).holds);
        assert!(!r.verdict());
    }

    #[test]
    fn eta_and_p_interval() {
        let r = validate_model(&piecewise(0.0, -0.5)).unwrap();
        assert_relative_eq!(r.eta, 3.0);
        assert_eq!(r.p_interval, Some((1.0, 2.0)));
        assert_relative_eq!(r.get(ConditionId::PInterval).value, 2.0);
    }

    #[test]
    fn every_condition_reported_once() {
        let r = validate_model(&piecewise(0.1, -0.2)).unwrap();
        for id in ConditionId::ALL {
            assert_eq!(r.conditions.iter().filter(|c| c.id == id).count(), 1);
        }
        assert!(r.conditions.iter().all(|c| c.value.is_finite()));
    }

    #[test]
    fn non_finite_parameter_is_named() {
        let mut m = piecewise(0.1, 0.0);
        m.k3 = f64::NAN;
        match validate_model(&m) {
            Err(Error::NonFinite { field, .. }) => assert_eq!(field, "k3"),
            other => panic!("expected NonFinite, got {other:?}"),
        }
    }

    #[test]
    fn sigma_out_of_range() {
        let r = validate_model(&piecewise(0.6, 0.0)).unwrap();
        assert!(!r.get(ConditionId::SigmaRange).holds);
        assert!(r.failures().contains(&"sigma_range"));
    }

    #[test]
    fn growth_condition_on_product_kernel() {
        let m = KernelModel::product(0.0, 1.0, Polynomial::linear(2.0), 2.0);
        let r = validate_model(&m).unwrap();
        assert_eq!(r.target, Hypothesis::CoagulationGelation);
        assert!(r.get(ConditionId::GammaGrowth).holds);
        // k2 = 2 at σ = 0 is not required for the gelation hypothesis.
        assert!(!r.get(ConditionId::K2AboveTwo).required);
        assert!(r.verdict());

        let m = KernelModel::product(0.0, 1.0, Polynomial::linear(1.0), 1.0);
        assert!(!validate_model(&m).unwrap().verdict());

        let m = KernelModel::product(0.0, 1.0, Polynomial::linear(1.5), 2.0);
        assert!(!validate_model(&m).unwrap().get(ConditionId::GammaGrowth).holds);

        // Quadratic Γ dominates λ m^(1+σ) at infinity but not near the origin.
        let m = KernelModel::product(0.25, 1.0, Polynomial::new(vec![0.0, 0.0, 3.0]), 2.0);
        let r = validate_model_on(&m, (1e-3, 1e3)).unwrap();
        assert!(!r.get(ConditionId::GammaGrowth).holds);
    }

    #[test]
    fn coag_rate_examples() {
        let m = KernelModel { sigma: 0.25, ..piecewise(0.25, 0.0) };
        assert_relative_eq!(coag_rate(0.25, 0.25, &m).unwrap(), 2.0, max_relative = 1e-14);
        assert_relative_eq!(coag_rate(0.25, 4.0, &m).unwrap(), 4.0 * 0.25f64.powf(-0.25), max_relative = 1e-14);
        assert_relative_eq!(coag_rate(0.25, 4.0, &m).unwrap(), 5.656854249492381, max_relative = 1e-12);
        assert_relative_eq!(coag_rate(4.0, 9.0, &m).unwrap(), 36.0, max_relative = 1e-14);
        assert!(matches!(coag_rate(0.0, 1.0, &m), Err(Error::Domain(_))));
        assert!(matches!(coag_rate(1.0, -2.0, &m), Err(Error::Domain(_))));
    }

    #[test]
    fn selection_rate_examples() {
        let zero = KernelModel { selection_form: SelectionForm::Zero, ..piecewise(0.0, 0.0) };
        assert_eq!(selection_rate(3.0, &zero).unwrap(), 0.0);

        let lin = KernelModel {
            selection_form: SelectionForm::LinearBound,
            k3: 0.1,
            phi: DecayFn::Power { phi0: 1.0, a: 1.0 },
            ..piecewise(0.0, 0.0)
        };
        assert_relative_eq!(selection_rate(1.0, &lin).unwrap(), 0.05, max_relative = 1e-15);

        let pow = KernelModel {
            selection_form: SelectionForm::PowerBound,
            k3: 1.0,
            phi: DecayFn::Power { phi0: 1.0, a: 0.0 },
            ..piecewise(0.0, 0.0)
        };
        assert_relative_eq!(selection_rate(2.0, &pow).unwrap(), 2.0, max_relative = 1e-15);
        assert!(selection_rate(0.0, &pow).is_err());
    }

    #[test]
    fn fragment_examples() {
        let g0 = piecewise(0.0, 0.0);
        let ms = 3.7;
        assert_relative_eq!(fragment_number_in(0.0, ms, ms, &g0).unwrap(), 2.0, max_relative = 1e-15);
        assert_relative_eq!(fragment_number_in(ms / 2.0, ms, ms, &g0).unwrap(), 1.0, max_relative = 1e-15);
        let gh = piecewise(0.0, -0.5);
        assert_relative_eq!(fragment_number_in(0.0, ms, ms, &gh).unwrap(), 3.0, max_relative = 1e-15);

        assert_eq!(fragment_mass_in(0.0, ms, ms, &g0).unwrap(), ms);
        assert_relative_eq!(fragment_mass_in(0.0, ms / 2.0, ms, &g0).unwrap(), ms / 4.0, max_relative = 1e-15);
        assert_eq!(fragment_mass_in(1.0, 1.0, ms, &g0).unwrap(), 0.0);

        assert!(fragment_number_in(0.0, 4.0, ms, &g0).is_err());
        assert!(fragment_mass_in(2.0, 1.0, ms, &g0).is_err());
    }

    #[test]
    fn singular_moment_examples() {
        let m = piecewise(0.25, 0.0);
        assert_relative_eq!(singular_fragment_moment(1.0, &m).unwrap(), 4.0, max_relative = 1e-15);
        assert_relative_eq!(singular_fragment_moment(16.0, &m).unwrap(), 1.0, max_relative = 1e-15);
        let m0 = piecewise(0.0, 0.0);
        assert_relative_eq!(singular_fragment_moment(7.0, &m0).unwrap(), 2.0, max_relative = 1e-15);
        let bad = piecewise(0.5, 0.0);
        assert!(singular_fragment_moment(1.0, &bad).is_err());
    }

    /// Composite Simpson on `m = m* u^q`, which removes the endpoint singularity.
    fn singular_moment_quadrature(m_star: f64, sigma: f64, gamma: f64) -> f64 {
        let q = 4.0 / (1.0 + gamma - 2.0 * sigma);
        let f = |u: f64| {
            if u == 0.0 {
                return 0.0;
            }
            let m = m_star * u.powf(q);
            m.powf(-2.0 * sigma) * (gamma + 2.0) * m.powf(gamma) / m_star.powf(1.0 + gamma)
                * m_star
                * q
                * u.powf(q - 1.0)
        };
        let n = 2000;
        let h = 1.0 / n as f64;
        let mut s = f(0.0) + f(1.0);
        for k in 1..n {
            s += f(k as f64 * h) * if k % 2 == 1 { 4.0 } else { 2.0 };
        }
        s * h / 3.0
    }

    #[test]
    fn singular_moment_matches_quadrature() {
        for &(sigma, gamma, ms) in &[(0.1, 0.0, 2.0), (0.25, -0.3, 0.5), (0.05, -0.8, 13.0)] {
            let m = piecewise(sigma, gamma);
            let closed = singular_fragment_moment(ms, &m).unwrap();
            let quad = singular_moment_quadrature(ms, sigma, gamma);
            assert_relative_eq!(closed, quad, max_relative = 1e-9);
        }
    }

    proptest! {
        #[test]
        fn coag_rate_symmetric(a in 1e-4f64..1e4, b in 1e-4f64..1e4, sigma in 0.0f64..0.49, piece in any::<bool>()) {
            let mut m = piecewise(sigma, 0.0);
            m.gamma_poly = Polynomial::new(vec![0.3, 1.0, 0.5]);
            if !piece { m.kernel_form = KernelForm::ProductSingular; }
            let x = coag_rate(a, b, &m).unwrap();
            let y = coag_rate(b, a, &m).unwrap();
            prop_assert!(x >= 0.0);
            prop_assert_eq!(x, y);
        }

        #[test]
        fn fragment_number_additive(gamma in -0.99f64..=0.0, ms in 1e-3f64..1e3, u in 0.0f64..1.0, v in 0.0f64..1.0, w in 0.0f64..1.0) {
            let mut pts = [u * ms, v * ms, w * ms];
            pts.sort_by(f64::total_cmp);
            let [a, b, c] = pts;
            let m = piecewise(0.0, gamma);
            let whole = fragment_number_in(a, c, ms, &m).unwrap();
            let parts = fragment_number_in(a, b, ms, &m).unwrap() + fragment_number_in(b, c, ms, &m).unwrap();
            prop_assert!((whole - parts).abs() <= 1e-12 * m.eta());
            let wm = fragment_mass_in(a, c, ms, &m).unwrap();
            let pm = fragment_mass_in(a, b, ms, &m).unwrap() + fragment_mass_in(b, c, ms, &m).unwrap();
            prop_assert!((wm - pm).abs() <= 1e-12 * ms);
        }

        #[test]
        fn full_interval_closed_forms(gamma in -0.99f64..=0.0, ms in 1e-6f64..1e6, s in 0.0f64..1.0) {
            let sigma = s * (1.0 + gamma) / 2.0 * 0.999;
            let m = piecewise(sigma, gamma);
            let n = fragment_number_in(0.0, ms, ms, &m).unwrap();
            prop_assert!((n - m.eta()).abs() <= 1e-12 * m.eta());
            let mass = fragment_mass_in(0.0, ms, ms, &m).unwrap();
            prop_assert!((mass - ms).abs() <= 1e-12 * ms);
            let sm = singular_fragment_moment(ms, &m).unwrap() * ms.powf(2.0 * sigma);
            prop_assert!((sm - m.k2()).abs() <= 1e-12 * m.k2());
        }
    }
}
