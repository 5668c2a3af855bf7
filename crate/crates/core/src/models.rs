//! Builders for the two probe models.
//!
//! Parameters are given in SI units (Hz, as quoted for each model) and
//! converted to the model's natural time unit: femtoseconds for the
//! light–bacteria model, nanoseconds for the qubit–tardigrade model. With
//! ħ = 1 the generator then has units of inverse femtoseconds or inverse
//! nanoseconds respectively.

use serde::{Deserialize, Serialize};

use crate::error::ModelError;
use crate::lindblad::{JumpOperator, LindbladGenerator};
use crate::tensorspace::{annihilation_op, embed, pauli_op, CompositeSpace, OperatorMatrix, Pauli, SubsystemSpec};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseChannels {
    None,
    DecayOnly,
    #[default]
    DecayAndDephasing,
}

impl NoiseChannels {
    fn decay(self) -> bool {
        !matches!(self, NoiseChannels::None)
    }

    fn dephasing(self) -> bool {
        matches!(self, NoiseChannels::DecayAndDephasing)
    }
}

/// How quoted "Hz" values are read.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FrequencyConvention {
    /// Values are angular frequencies (rad/s).
    #[default]
    Angular,
    /// Values are ordinary frequencies; every rate and frequency is multiplied by 2π.
    Ordinary,
}

impl FrequencyConvention {
    fn factor(self) -> f64 {
        match self {
            FrequencyConvention::Angular => 1.0,
            FrequencyConvention::Ordinary => 2.0 * std::f64::consts::PI,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TimeUnit {
    Femtoseconds,
    Nanoseconds,
}

impl TimeUnit {
    pub fn seconds(self) -> f64 {
        match self {
            TimeUnit::Femtoseconds => 1e-15,
            TimeUnit::Nanoseconds => 1e-9,
        }
    }

    pub fn symbol(self) -> &'static str {
        match self {
            TimeUnit::Femtoseconds => "fs",
            TimeUnit::Nanoseconds => "ns",
        }
    }
}

fn check_rate(field: &'static str, value: f64) -> Result<(), ModelError> {
    if value.is_finite() && value >= 0.0 {
        Ok(())
    } else {
        Err(ModelError::InvalidParameter {
            field,
            reason: format!("must be finite and non-negative, got {value}"),
        })
    }
}

fn check_truncation(field: &'static str, value: usize) -> Result<(), ModelError> {
    if value >= 2 {
        Ok(())
    } else {
        Err(ModelError::InvalidParameter {
            field,
            reason: format!("must be at least 2, got {value}"),
        })
    }
}

/// Light–bacteria model: `M` cavity modes coupled to two bacterial exciton modes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BacteriaModelParams {
    pub n_light_modes: usize,
    pub light_truncation: usize,
    pub bacteria_dim: usize,
    /// Mode `m` (1-based) has frequency `m * omega_light_base`.
    pub omega_light_base: f64,
    /// `[Ω_I, Ω_II]`
    pub omega_bacteria: [f64; 2],
    /// `[G_I, G_II]`; light mode `m` couples with `m * G_n`.
    pub coupling_base: [f64; 2],
    pub kappa: f64,
    pub gamma: [f64; 2],
    /// Light-mode dephasing rate; defaults to `kappa`.
    pub kappa_dephasing: Option<f64>,
    /// Bacteria dephasing rates; default to `gamma`.
    pub gamma_dephasing: Option<[f64; 2]>,
    pub noise_channels: NoiseChannels,
    /// When set, every decay and dephasing rate becomes `10^(15 - i)` Hz.
    pub noise_exponent: Option<f64>,
    pub frequency_convention: FrequencyConvention,
}

impl Default for BacteriaModelParams {
    fn default() -> Self {
        Self {
            n_light_modes: 4,
            light_truncation: 5,
            bacteria_dim: 2,
            omega_light_base: 1.37e15,
            omega_bacteria: [2.5e15, 4.1e15],
            coupling_base: [0.04e15, 0.2e15],
            kappa: 7.5e13,
            gamma: [0.78e13, 3.63e13],
            kappa_dephasing: None,
            gamma_dephasing: None,
            noise_channels: NoiseChannels::DecayAndDephasing,
            noise_exponent: None,
            frequency_convention: FrequencyConvention::Angular,
        }
    }
}

impl BacteriaModelParams {
    pub const TIME_UNIT: TimeUnit = TimeUnit::Femtoseconds;

    /// Reduced configuration: two light modes truncated at three levels (dim 36).
    pub fn ci_profile() -> Self {
        Self {
            n_light_modes: 2,
            light_truncation: 3,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.n_light_modes < 1 {
            return Err(ModelError::InvalidParameter {
                field: "n_light_modes",
                reason: "at least one light mode is required".into(),
            });
        }
        check_truncation("light_truncation", self.light_truncation)?;
        check_truncation("bacteria_dim", self.bacteria_dim)?;
        check_rate("omega_light_base", self.omega_light_base)?;
        for &w in &self.omega_bacteria {
            check_rate("omega_bacteria", w)?;
        }
        for &g in &self.coupling_base {
            if !g.is_finite() {
                return Err(ModelError::InvalidParameter {
                    field: "coupling_base",
                    reason: "must be finite".into(),
                });
            }
        }
        let (kappa, gamma, kd, gd) = self.rates();
        check_rate("kappa", kappa)?;
        check_rate("kappa_dephasing", kd)?;
        for (&g, &d) in gamma.iter().zip(&gd) {
            check_rate("gamma", g)?;
            check_rate("gamma_dephasing", d)?;
        }
        Ok(())
    }

    /// Effective `(κ, γ, κ̃, γ̃)` in Hz after defaults and the noise exponent.
    pub fn rates(&self) -> (f64, [f64; 2], f64, [f64; 2]) {
        if let Some(i) = self.noise_exponent {
            let r = 10f64.powf(15.0 - i);
            return (r, [r; 2], r, [r; 2]);
        }
        (
            self.kappa,
            self.gamma,
            self.kappa_dephasing.unwrap_or(self.kappa),
            self.gamma_dephasing.unwrap_or(self.gamma),
        )
    }

    pub fn space(&self) -> Result<CompositeSpace, ModelError> {
        let mut subs = Vec::with_capacity(self.n_light_modes + 2);
        for m in 1..=self.n_light_modes {
            subs.push(SubsystemSpec::boson(format!("light{m}"), self.light_truncation)?);
        }
        for label in ["bacteria_I", "bacteria_II"] {
            subs.push(if self.bacteria_dim == 2 {
                SubsystemSpec::qubit(label)
            } else {
                SubsystemSpec::boson(label, self.bacteria_dim)?
            });
        }
        Ok(CompositeSpace::new(subs)?)
    }
}

/// `H = Σ_m ω_m a_m†a_m + Σ_n Ω_n b_n†b_n + Σ_{m,n} G_mn (a_m + a_m†)(b_n + b_n†)`
/// with decay `sqrt(2κ) a_m`, `sqrt(2γ_n) b_n` and dephasing
/// `sqrt(2κ̃) a_m a_m†`, `sqrt(2γ̃_n) σ_z` (or `b_n b_n†` for `bacteria_dim > 2`).
pub fn build_bacteria_model(params: &BacteriaModelParams) -> Result<(CompositeSpace, LindbladGenerator), ModelError> {
    params.validate()?;
    let space = params.space()?;
    let scale = params.frequency_convention.factor() * BacteriaModelParams::TIME_UNIT.seconds();
    let m_modes = params.n_light_modes;

    let a = annihilation_op(params.light_truncation)?;
    let b = annihilation_op(params.bacteria_dim)?;
    let lights: Vec<Local> = (0..m_modes).map(|s| Local::new(&a, s, &space)).collect::<Result<_, _>>()?;
    let bacteria: Vec<Local> = (0..2).map(|n| Local::new(&b, m_modes + n, &space)).collect::<Result<_, _>>()?;

    let mut h = OperatorMatrix::zeros(&space);
    for (m, light) in lights.iter().enumerate() {
        let omega = (m + 1) as f64 * params.omega_light_base * scale;
        h = &h + &light.number().scale(omega);
    }
    for (n, bact) in bacteria.iter().enumerate() {
        h = &h + &bact.number().scale(params.omega_bacteria[n] * scale);
    }
    for (m, light) in lights.iter().enumerate() {
        let x_light = light.quadrature();
        for (n, bact) in bacteria.iter().enumerate() {
            let g = (m + 1) as f64 * params.coupling_base[n] * scale;
            if g != 0.0 {
                h = &h + &(&x_light * &bact.quadrature()).scale(g);
            }
        }
    }

    let (kappa, gamma, kappa_d, gamma_d) = params.rates();
    let mut jumps = Vec::new();
    if params.noise_channels.decay() {
        for (m, light) in lights.iter().enumerate() {
            push_jump(&mut jumps, format!("decay:light{}", m + 1), kappa * scale, &light.lower);
        }
        for (n, bact) in bacteria.iter().enumerate() {
            push_jump(&mut jumps, format!("decay:{}", space.subsystems()[m_modes + n].label()), gamma[n] * scale, &bact.lower);
        }
    }
    if params.noise_channels.dephasing() {
        for (m, light) in lights.iter().enumerate() {
            push_jump(&mut jumps, format!("dephasing:light{}", m + 1), kappa_d * scale, &light.anti_number());
        }
        for (n, bact) in bacteria.iter().enumerate() {
            let site = m_modes + n;
            let op = if params.bacteria_dim == 2 {
                embed(&pauli_op(Pauli::Z), site, &space)?
            } else {
                bact.anti_number()
            };
            push_jump(&mut jumps, format!("dephasing:{}", space.subsystems()[site].label()), gamma_d[n] * scale, &op);
        }
    }
    let generator = LindbladGenerator::new(h, jumps)?;
    Ok((space, generator))
}

/// Qubit–tardigrade model: a transmon qubit and a tardigrade mode, each
/// coupled only to the cavity light mode(s).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TardigradeModelParams {
    pub omega_q: f64,
    pub omega_l: f64,
    pub omega_t: f64,
    pub g_ql: f64,
    pub f_tl: f64,
    pub kappa_l: f64,
    pub delta_q: f64,
    pub gamma_t: f64,
    pub kappa_l_dephasing: Option<f64>,
    pub delta_q_dephasing: Option<f64>,
    pub gamma_t_dephasing: Option<f64>,
    /// Cavity modes; extra modes are degenerate copies of the first.
    pub n_light_modes: usize,
    pub light_truncation: usize,
    pub tardigrade_truncation: usize,
    pub noise_channels: NoiseChannels,
    /// When set, every decay and dephasing rate becomes `10^(9 - i)` Hz.
    pub noise_exponent: Option<f64>,
    pub frequency_convention: FrequencyConvention,
    /// Couplings must lie in `[0, coupling_limit]`.
    pub coupling_limit: f64,
}

impl Default for TardigradeModelParams {
    fn default() -> Self {
        Self {
            omega_q: 3.271e9,
            omega_l: 4.521e9,
            omega_t: 2.7e9,
            g_ql: 0.15e9,
            f_tl: 0.05e9,
            kappa_l: 3.7e7,
            delta_q: 2.5e7,
            gamma_t: 1.8e7,
            kappa_l_dephasing: None,
            delta_q_dephasing: None,
            gamma_t_dephasing: None,
            n_light_modes: 1,
            light_truncation: 5,
            tardigrade_truncation: 5,
            noise_channels: NoiseChannels::DecayAndDephasing,
            noise_exponent: None,
            frequency_convention: FrequencyConvention::Angular,
            coupling_limit: 0.3e9,
        }
    }
}

/// Effective tardigrade-model rates in Hz.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TardigradeRates {
    pub kappa_l: f64,
    pub delta_q: f64,
    pub gamma_t: f64,
    pub kappa_l_dephasing: f64,
    pub delta_q_dephasing: f64,
    pub gamma_t_dephasing: f64,
}

impl TardigradeModelParams {
    pub const TIME_UNIT: TimeUnit = TimeUnit::Nanoseconds;

    pub fn rates(&self) -> TardigradeRates {
        if let Some(i) = self.noise_exponent {
            let r = 10f64.powf(9.0 - i);
            return TardigradeRates {
                kappa_l: r,
                delta_q: r,
                gamma_t: r,
                kappa_l_dephasing: r,
                delta_q_dephasing: r,
                gamma_t_dephasing: r,
            };
        }
        TardigradeRates {
            kappa_l: self.kappa_l,
            delta_q: self.delta_q,
            gamma_t: self.gamma_t,
            kappa_l_dephasing: self.kappa_l_dephasing.unwrap_or(self.kappa_l),
            delta_q_dephasing: self.delta_q_dephasing.unwrap_or(self.delta_q),
            gamma_t_dephasing: self.gamma_t_dephasing.unwrap_or(self.gamma_t),
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.n_light_modes < 1 {
            return Err(ModelError::InvalidParameter {
                field: "n_light_modes",
                reason: "at least one light mode is required".into(),
            });
        }
        check_truncation("light_truncation", self.light_truncation)?;
        check_truncation("tardigrade_truncation", self.tardigrade_truncation)?;
        check_rate("omega_q", self.omega_q)?;
        check_rate("omega_l", self.omega_l)?;
        check_rate("omega_t", self.omega_t)?;
        check_rate("coupling_limit", self.coupling_limit)?;
        for (field, g) in [("g_ql", self.g_ql), ("f_tl", self.f_tl)] {
            if !(g.is_finite() && (0.0..=self.coupling_limit).contains(&g)) {
                return Err(ModelError::InvalidParameter {
                    field,
                    reason: format!("must lie in [0, {:e}], got {g:e}", self.coupling_limit),
                });
            }
        }
        let r = self.rates();
        check_rate("kappa_l", r.kappa_l)?;
        check_rate("delta_q", r.delta_q)?;
        check_rate("gamma_t", r.gamma_t)?;
        check_rate("kappa_l_dephasing", r.kappa_l_dephasing)?;
        check_rate("delta_q_dephasing", r.delta_q_dephasing)?;
        check_rate("gamma_t_dephasing", r.gamma_t_dephasing)?;
        Ok(())
    }

    pub fn space(&self) -> Result<CompositeSpace, ModelError> {
        let mut subs = Vec::with_capacity(self.n_light_modes + 2);
        for l in 1..=self.n_light_modes {
            subs.push(SubsystemSpec::boson(format!("light{l}"), self.light_truncation)?);
        }
        subs.push(SubsystemSpec::boson("tardigrade", self.tardigrade_truncation)?);
        subs.push(SubsystemSpec::qubit("qubit"));
        Ok(CompositeSpace::new(subs)?)
    }
}

/// `H = (ω_q/2)σ_z + Σ_l ω_l a_l†a_l + ω_t b†b + Σ_l g σ_x (a_l + a_l†) + Σ_l f (b + b†)(a_l + a_l†)`
/// with decay `sqrt(2κ) a_l`, `sqrt(2γ) b`, `sqrt(2δ) σ_-` and dephasing
/// `sqrt(2κ̃) a_l a_l†`, `sqrt(2γ̃) b b†`, `sqrt(2δ̃) σ_z`.
pub fn build_tardigrade_model(params: &TardigradeModelParams) -> Result<(CompositeSpace, LindbladGenerator), ModelError> {
    params.validate()?;
    let space = params.space()?;
    let scale = params.frequency_convention.factor() * TardigradeModelParams::TIME_UNIT.seconds();
    let n_l = params.n_light_modes;
    let t_site = n_l;
    let q_site = n_l + 1;

    let a = annihilation_op(params.light_truncation)?;
    let lights: Vec<Local> = (0..n_l).map(|s| Local::new(&a, s, &space)).collect::<Result<_, _>>()?;
    let tard = Local::new(&annihilation_op(params.tardigrade_truncation)?, t_site, &space)?;
    let sigma_z = embed(&pauli_op(Pauli::Z), q_site, &space)?;
    let sigma_x = embed(&pauli_op(Pauli::X), q_site, &space)?;
    let sigma_minus = embed(&pauli_op(Pauli::Minus), q_site, &space)?;

    let mut h = sigma_z.scale(0.5 * params.omega_q * scale);
    h = &h + &tard.number().scale(params.omega_t * scale);
    let x_tard = tard.quadrature();
    for light in &lights {
        h = &h + &light.number().scale(params.omega_l * scale);
        let x_light = light.quadrature();
        if params.g_ql != 0.0 {
            h = &h + &(&sigma_x * &x_light).scale(params.g_ql * scale);
        }
        if params.f_tl != 0.0 {
            h = &h + &(&x_tard * &x_light).scale(params.f_tl * scale);
        }
    }

    let r = params.rates();
    let mut jumps = Vec::new();
    if params.noise_channels.decay() {
        for (l, light) in lights.iter().enumerate() {
            push_jump(&mut jumps, format!("decay:light{}", l + 1), r.kappa_l * scale, &light.lower);
        }
        push_jump(&mut jumps, "decay:tardigrade".into(), r.gamma_t * scale, &tard.lower);
        push_jump(&mut jumps, "decay:qubit".into(), r.delta_q * scale, &sigma_minus);
    }
    if params.noise_channels.dephasing() {
        for (l, light) in lights.iter().enumerate() {
            push_jump(&mut jumps, format!("dephasing:light{}", l + 1), r.kappa_l_dephasing * scale, &light.anti_number());
        }
        push_jump(&mut jumps, "dephasing:tardigrade".into(), r.gamma_t_dephasing * scale, &tard.anti_number());
        push_jump(&mut jumps, "dephasing:qubit".into(), r.delta_q_dephasing * scale, &sigma_z);
    }
    let generator = LindbladGenerator::new(h, jumps)?;
    Ok((space, generator))
}

/// Zero-rate channels are omitted.
fn push_jump(jumps: &mut Vec<JumpOperator>, label: String, rate: f64, op: &OperatorMatrix) {
    if rate > 0.0 {
        jumps.push(JumpOperator::from_rate(label, rate, op));
    }
}

/// Embedded ladder operators of one mode.
struct Local {
    lower: OperatorMatrix,
    raise: OperatorMatrix,
}

impl Local {
    fn new(a: &OperatorMatrix, site: usize, space: &CompositeSpace) -> Result<Self, ModelError> {
        let lower = embed(a, site, space)?;
        Ok(Self {
            raise: lower.adjoint(),
            lower,
        })
    }

    fn number(&self) -> OperatorMatrix {
        &self.raise * &self.lower
    }

    fn anti_number(&self) -> OperatorMatrix {
        &self.lower * &self.raise
    }

    fn quadrature(&self) -> OperatorMatrix {
        &self.lower + &self.raise
    }
}
