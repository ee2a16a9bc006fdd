//! The truncated Dirichlet-process phone loop.
//!
//! Units are left-to-right HMMs with `S` emitting states. Each state owns a
//! two-outcome Dirichlet over {self-loop, advance} and an `M`-component
//! diagonal GMM whose weights carry a Dirichlet posterior and whose
//! per-dimension mean/precision pairs carry Normal-Gamma posteriors. Unit
//! weights follow a stick-breaking construction truncated at `T` units, with
//! `v_T = 1` so the last unit absorbs the remaining mass. Advancing out of a
//! unit's final state exits the unit; the loop then re-enters the first state
//! of any unit with the stick weight of that unit.
//!
//! Indexing: state `unit * S + s`, component `state * M + m`.

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::corpus::FeatureSet;
use crate::error::{Error, Result};
use crate::math::{dirichlet_expected_log, digamma, kl_beta, kl_dirichlet, kl_normal_gamma, LN_2PI};

pub const SELF_LOOP: usize = 0;
pub const ADVANCE: usize = 1;

/// Normal-Gamma prior shared by every Gaussian component.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalGammaPrior {
    pub mean: Vec<f64>,
    pub kappa: f64,
    pub shape: f64,
    pub rate: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub truncation: usize,
    pub states_per_unit: usize,
    pub gaussians_per_state: usize,
    pub dim: usize,
    pub stick_concentration: f64,
    pub dirichlet_prior_weight: f64,
    pub normal_gamma_prior: NormalGammaPrior,
}

impl ModelConfig {
    /// Data-scaled weak priors: `m0` is the global mean, `b0` the global
    /// per-dimension variance, `kappa0 = a0 = 1`, `gamma = 1` and unit
    /// Dirichlet pseudo-counts.
    pub fn from_features(
        fs: &FeatureSet,
        truncation: usize,
        states_per_unit: usize,
        gaussians_per_state: usize,
    ) -> Result<Self> {
        if fs.is_empty() {
            return Err(Error::Invalid("cannot derive priors from an empty feature set".into()));
        }
        let (mean, var) = fs.global_mean_var();
        let cfg = ModelConfig {
            truncation,
            states_per_unit,
            gaussians_per_state,
            dim: fs.dim(),
            stick_concentration: 1.0,
            dirichlet_prior_weight: 1.0,
            normal_gamma_prior: NormalGammaPrior {
                mean,
                kappa: 1.0,
                shape: 1.0,
                rate: var.into_iter().map(|v| v.max(1e-8)).collect(),
            },
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Invalid(format!("model config: {m}")));
        if self.truncation == 0 || self.states_per_unit == 0 || self.gaussians_per_state == 0 {
            return bad("truncation, states_per_unit and gaussians_per_state must be >= 1".into());
        }
        if self.dim == 0 {
            return bad("dim must be >= 1".into());
        }
        let positive = |x: f64| x > 0.0 && x.is_finite();
        if !positive(self.stick_concentration) {
            return bad(format!("stick concentration {} must be > 0", self.stick_concentration));
        }
        if !positive(self.dirichlet_prior_weight) {
            return bad(format!("dirichlet prior weight {} must be > 0", self.dirichlet_prior_weight));
        }
        let ng = &self.normal_gamma_prior;
        if ng.mean.len() != self.dim || ng.rate.len() != self.dim {
            return bad(format!(
                "normal-gamma prior has {} means and {} rates for dim {}",
                ng.mean.len(),
                ng.rate.len(),
                self.dim
            ));
        }
        if !positive(ng.kappa) {
            return bad(format!("kappa0 {} must be > 0", ng.kappa));
        }
        if !positive(ng.shape) {
            return bad(format!("a0 {} must be > 0", ng.shape));
        }
        if !ng.rate.iter().copied().all(positive) || !ng.mean.iter().all(|m| m.is_finite()) {
            return bad("b0 must be positive and m0 finite".into());
        }
        Ok(())
    }

    pub fn n_states(&self) -> usize {
        self.truncation * self.states_per_unit
    }

    pub fn n_components(&self) -> usize {
        self.n_states() * self.gaussians_per_state
    }
}

/// Per-dimension Normal-Gamma posterior of one Gaussian component. `kappa`
/// and `shape` are shared by all dimensions because they depend only on the
/// component occupancy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalGamma {
    pub mean: Vec<f64>,
    pub kappa: f64,
    pub shape: f64,
    pub rate: Vec<f64>,
}

impl NormalGamma {
    pub fn from_prior(prior: &NormalGammaPrior) -> Self {
        NormalGamma {
            mean: prior.mean.clone(),
            kappa: prior.kappa,
            shape: prior.shape,
            rate: prior.rate.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhoneLoopModel {
    pub config: ModelConfig,
    /// Beta posteriors `(a, b)` of the first `T - 1` stick fractions.
    pub sticks: Vec<[f64; 2]>,
    /// Dirichlet posterior over `[self-loop, advance]`, per state.
    pub transitions: Vec<[f64; 2]>,
    /// Dirichlet posterior over mixture weights, per state.
    pub weights: Vec<Vec<f64>>,
    pub gaussians: Vec<NormalGamma>,
}

/// KL(q || p) of each parameter family.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct KlTerms {
    pub sticks: f64,
    pub transitions: f64,
    pub weights: f64,
    pub gaussians: f64,
}

impl KlTerms {
    pub fn total(&self) -> f64 {
        self.sticks + self.transitions + self.weights + self.gaussians
    }
}

/// The phone loop seen as a single HMM over `T * S` states, carrying the
/// expected log parameters used by forward-backward and Viterbi.
#[derive(Debug, Clone, PartialEq)]
pub struct UnifiedHmmView {
    pub n_units: usize,
    pub states_per_unit: usize,
    pub components_per_state: usize,
    /// `E[log pi_u]`, one per unit.
    pub log_entry: Vec<f64>,
    /// `E[log p(self-loop)]`, one per state.
    pub log_self: Vec<f64>,
    /// `E[log p(advance)]`, one per state; for a final state this is the exit.
    pub log_advance: Vec<f64>,
}

impl UnifiedHmmView {
    pub fn new(
        n_units: usize,
        states_per_unit: usize,
        components_per_state: usize,
        log_entry: Vec<f64>,
        log_self: Vec<f64>,
        log_advance: Vec<f64>,
    ) -> Result<Self> {
        let n_states = n_units * states_per_unit;
        if n_units == 0 || states_per_unit == 0 || components_per_state == 0 {
            return Err(Error::Invalid("empty HMM topology".into()));
        }
        if log_entry.len() != n_units || log_self.len() != n_states || log_advance.len() != n_states
        {
            return Err(Error::Shape(format!(
                "view expects {n_units} entry and {n_states} transition terms"
            )));
        }
        let all = log_entry.iter().chain(&log_self).chain(&log_advance);
        if all.clone().any(|v| v.is_nan() || *v == f64::INFINITY) {
            return Err(Error::NonFinite("HMM log parameters".into()));
        }
        Ok(UnifiedHmmView {
            n_units,
            states_per_unit,
            components_per_state,
            log_entry,
            log_self,
            log_advance,
        })
    }

    pub fn n_states(&self) -> usize {
        self.n_units * self.states_per_unit
    }

    pub fn n_components(&self) -> usize {
        self.n_states() * self.components_per_state
    }
}

/// Precomputed expected emission terms: for component `c`,
/// `loglik(x) = constant[c] - 0.5 * sum_d precision[c][d] * (x_d - mean[c][d])^2`.
#[derive(Debug, Clone)]
pub struct EmissionTerms {
    dim: usize,
    constant: Vec<f64>,
    mean: Array2<f64>,
    precision: Array2<f64>,
}

impl EmissionTerms {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn frame_loglik(&self, frames: &Array2<f64>) -> Result<Array2<f64>> {
        if frames.ncols() != self.dim {
            return Err(Error::DimMismatch {
                expected: self.dim,
                found: frames.ncols(),
            });
        }
        let n_comp = self.constant.len();
        let mut out = Array2::zeros((frames.nrows(), n_comp));
        for (t, x) in frames.rows().into_iter().enumerate() {
            let x = x.as_slice().map(<[f64]>::to_vec).unwrap_or_else(|| x.to_vec());
            for c in 0..n_comp {
                let mean = self.mean.row(c);
                let prec = self.precision.row(c);
                let mut q = 0.0;
                for d in 0..self.dim {
                    let diff = x[d] - mean[d];
                    q += prec[d] * diff * diff;
                }
                out[[t, c]] = self.constant[c] - 0.5 * q;
            }
        }
        Ok(out)
    }
}

/// `E[log pi_t] = E[log v_t] + sum_{s<t} E[log(1 - v_s)]` for `t = 0..T`,
/// given the expectations of the first `T - 1` stick fractions. The last
/// fraction is fixed to 1.
pub fn expected_log_weights_from(elog_v: &[f64], elog_1mv: &[f64]) -> Vec<f64> {
    assert_eq!(elog_v.len(), elog_1mv.len());
    let mut out = Vec::with_capacity(elog_v.len() + 1);
    let mut remaining = 0.0;
    for (lv, l1mv) in elog_v.iter().zip(elog_1mv) {
        out.push(lv + remaining);
        remaining += l1mv;
    }
    out.push(remaining);
    out
}

impl PhoneLoopModel {
    /// Posteriors equal to the priors, except component means which are drawn
    /// around `m0` with the prior's expected spread to break unit symmetry.
    pub fn init(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let prior = &config.normal_gamma_prior;
        let w = config.dirichlet_prior_weight;
        let gaussians = (0..config.n_components())
            .map(|_| {
                let mut ng = NormalGamma::from_prior(prior);
                for (d, m) in ng.mean.iter_mut().enumerate() {
                    let sd = (prior.rate[d] / (prior.shape * prior.kappa)).sqrt();
                    let z: f64 = StandardNormal.sample(&mut rng);
                    *m += sd * z;
                }
                ng
            })
            .collect();
        Ok(PhoneLoopModel {
            sticks: vec![[1.0, config.stick_concentration]; config.truncation - 1],
            transitions: vec![[w, w]; config.n_states()],
            weights: vec![vec![w; config.gaussians_per_state]; config.n_states()],
            gaussians,
            config,
        })
    }

    /// A model whose posteriors are exact copies of the priors.
    pub fn from_prior(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let w = config.dirichlet_prior_weight;
        Ok(PhoneLoopModel {
            sticks: vec![[1.0, config.stick_concentration]; config.truncation - 1],
            transitions: vec![[w, w]; config.n_states()],
            weights: vec![vec![w; config.gaussians_per_state]; config.n_states()],
            gaussians: vec![NormalGamma::from_prior(&config.normal_gamma_prior); config.n_components()],
            config,
        })
    }

    pub fn validate(&self) -> Result<()> {
        self.config.validate()?;
        let cfg = &self.config;
        let shape_ok = self.sticks.len() == cfg.truncation - 1
            && self.transitions.len() == cfg.n_states()
            && self.weights.len() == cfg.n_states()
            && self.weights.iter().all(|w| w.len() == cfg.gaussians_per_state)
            && self.gaussians.len() == cfg.n_components()
            && self
                .gaussians
                .iter()
                .all(|g| g.mean.len() == cfg.dim && g.rate.len() == cfg.dim);
        if !shape_ok {
            return Err(Error::Shape("posterior shapes do not match the model config".into()));
        }
        let positive = |x: &f64| *x > 0.0 && x.is_finite();
        let ok = self.sticks.iter().flatten().all(positive)
            && self.transitions.iter().flatten().all(positive)
            && self.weights.iter().flatten().all(positive)
            && self.gaussians.iter().all(|g| {
                positive(&g.kappa)
                    && positive(&g.shape)
                    && g.rate.iter().all(positive)
                    && g.mean.iter().all(|m| m.is_finite())
            });
        if !ok {
            return Err(Error::Invalid("posterior parameters must be positive and finite".into()));
        }
        Ok(())
    }

    pub fn expected_log_weights(&self) -> Vec<f64> {
        let (elog_v, elog_1mv): (Vec<f64>, Vec<f64>) = self
            .sticks
            .iter()
            .map(|&[a, b]| {
                let total = digamma(a + b);
                (digamma(a) - total, digamma(b) - total)
            })
            .unzip();
        expected_log_weights_from(&elog_v, &elog_1mv)
    }

    pub fn unified_view(&self) -> UnifiedHmmView {
        let (log_self, log_advance) = self
            .transitions
            .iter()
            .map(|t| {
                let e = dirichlet_expected_log(t);
                (e[SELF_LOOP], e[ADVANCE])
            })
            .unzip();
        UnifiedHmmView {
            n_units: self.config.truncation,
            states_per_unit: self.config.states_per_unit,
            components_per_state: self.config.gaussians_per_state,
            log_entry: self.expected_log_weights(),
            log_self,
            log_advance,
        }
    }

    pub fn emission_terms(&self) -> EmissionTerms {
        let cfg = &self.config;
        let m = cfg.gaussians_per_state;
        let n_comp = cfg.n_components();
        let mut constant = Vec::with_capacity(n_comp);
        let mut mean = Array2::zeros((n_comp, cfg.dim));
        let mut precision = Array2::zeros((n_comp, cfg.dim));
        for (state, w) in self.weights.iter().enumerate() {
            let elog_w = dirichlet_expected_log(w);
            for (k, elw) in elog_w.iter().enumerate() {
                let c = state * m + k;
                let g = &self.gaussians[c];
                let psi_a = digamma(g.shape);
                let mut acc = 0.0;
                for d in 0..cfg.dim {
                    let elog_lambda = psi_a - g.rate[d].ln();
                    acc += elog_lambda - LN_2PI - 1.0 / g.kappa;
                    mean[[c, d]] = g.mean[d];
                    precision[[c, d]] = g.shape / g.rate[d];
                }
                constant.push(elw + 0.5 * acc);
            }
        }
        EmissionTerms {
            dim: cfg.dim,
            constant,
            mean,
            precision,
        }
    }

    /// `n x (T*S*M)` matrix of expected per-component log densities,
    /// including the expected log mixture weight.
    pub fn expected_frame_loglik(&self, frames: &Array2<f64>) -> Result<Array2<f64>> {
        self.emission_terms().frame_loglik(frames)
    }

    pub fn kl_terms(&self) -> KlTerms {
        let cfg = &self.config;
        let w = cfg.dirichlet_prior_weight;
        let sticks = self
            .sticks
            .iter()
            .map(|&[a, b]| kl_beta(a, b, 1.0, cfg.stick_concentration))
            .sum();
        let transitions = self.transitions.iter().map(|t| kl_dirichlet(t, &[w, w])).sum();
        let prior_w = vec![w; cfg.gaussians_per_state];
        let weights = self.weights.iter().map(|q| kl_dirichlet(q, &prior_w)).sum();
        let p = &cfg.normal_gamma_prior;
        let gaussians = self
            .gaussians
            .iter()
            .map(|g| {
                (0..cfg.dim)
                    .map(|d| {
                        kl_normal_gamma(
                            g.mean[d], g.kappa, g.shape, g.rate[d], p.mean[d], p.kappa, p.shape,
                            p.rate[d],
                        )
                    })
                    .sum::<f64>()
            })
            .sum();
        KlTerms {
            sticks,
            transitions,
            weights,
            gaussians,
        }
    }

    pub fn state_index(&self, unit: usize, state: usize) -> usize {
        unit * self.config.states_per_unit + state
    }
}

pub fn init_model(config: ModelConfig, seed: u64) -> Result<PhoneLoopModel> {
    PhoneLoopModel::init(config, seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand_distr::Beta;

    pub(crate) fn toy_config(t: usize, s: usize, m: usize, dim: usize) -> ModelConfig {
        ModelConfig {
            truncation: t,
            states_per_unit: s,
            gaussians_per_state: m,
            dim,
            stick_concentration: 1.0,
            dirichlet_prior_weight: 1.0,
            normal_gamma_prior: NormalGammaPrior {
                mean: vec![0.0; dim],
                kappa: 1.0,
                shape: 1.0,
                rate: vec![1.0; dim],
            },
        }
    }

    #[test]
    fn init_copies_priors_except_means() {
        let cfg = ModelConfig {
            stick_concentration: 2.5,
            ..toy_config(4, 3, 2, 2)
        };
        let model = init_model(cfg.clone(), 1).unwrap();
        assert!(model.sticks.iter().all(|s| *s == [1.0, 2.5]));
        assert_eq!(model.sticks.len(), 3);
        let kl = model.kl_terms();
        assert_eq!(kl.sticks, 0.0);
        assert_eq!(kl.transitions, 0.0);
        assert_eq!(kl.weights, 0.0);
        assert!(kl.gaussians > 0.0);
        assert_eq!(init_model(cfg.clone(), 1).unwrap(), model);
        assert_ne!(init_model(cfg.clone(), 2).unwrap(), model);
        assert!(PhoneLoopModel::from_prior(cfg).unwrap().kl_terms().total().abs() < 1e-12);
    }

    #[test]
    fn invalid_kappa_rejected() {
        let mut cfg = toy_config(2, 1, 1, 1);
        cfg.normal_gamma_prior.kappa = 0.0;
        assert!(init_model(cfg, 0).is_err());
    }

    #[test]
    fn single_unit_gets_full_mass() {
        let model = init_model(toy_config(1, 1, 1, 1), 0).unwrap();
        assert_eq!(model.expected_log_weights(), vec![0.0]);
    }

    #[test]
    fn point_mass_sticks_leave_remainder_to_last_unit() {
        let h = 0.5f64.ln();
        let w: Vec<f64> = expected_log_weights_from(&[h, h], &[h, h])
            .into_iter()
            .map(f64::exp)
            .collect();
        assert!((w[0] - 0.5).abs() < 1e-15);
        assert!((w[1] - 0.25).abs() < 1e-15);
        assert!((w[2] - 0.25).abs() < 1e-15);
    }

    #[test]
    fn stick_expectation_matches_monte_carlo() {
        let mut model = init_model(toy_config(2, 1, 1, 1), 0).unwrap();
        model.sticks[0] = [2.0, 2.0];
        let analytic = model.expected_log_weights()[0];
        assert!((analytic - (digamma(2.0) - digamma(4.0))).abs() < 1e-14);
        let beta = Beta::new(2.0, 2.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let n = 1_000_000;
        let mc = (0..n).map(|_| { let v: f64 = beta.sample(&mut rng); v.ln() }).sum::<f64>() / n as f64;
        assert!((analytic - mc).abs() < 1e-3, "{analytic} vs {mc}");
    }

    #[test]
    fn expected_weights_are_subnormalized() {
        let mut model = init_model(toy_config(6, 1, 1, 1), 0).unwrap();
        for (i, s) in model.sticks.iter_mut().enumerate() {
            *s = [1.0 + i as f64, 0.5 + 2.0 * i as f64];
        }
        let total: f64 = model.expected_log_weights().iter().map(|v| v.exp()).sum();
        assert!(total <= 1.0 + 1e-12);
        assert!(total < 1.0);
    }

    #[test]
    fn collapsed_normal_gamma_matches_gaussian() {
        let mut model = init_model(toy_config(1, 1, 1, 2), 0).unwrap();
        let (mu, lambda): ([f64; 2], [f64; 2]) = ([0.3, -1.2], [2.0, 0.5]);
        let g = &mut model.gaussians[0];
        g.kappa = 1e12;
        g.shape = 1e12;
        g.mean = mu.to_vec();
        g.rate = lambda.iter().map(|l| 1e12 / l).collect();
        // one component: the weight term is exactly zero
        let x = array![[1.0, 0.7]];
        let got = model.expected_frame_loglik(&x).unwrap()[[0, 0]];
        let expect: f64 = (0..2)
            .map(|d| {
                0.5 * (lambda[d].ln() - LN_2PI) - 0.5 * lambda[d] * (x[[0, d]] - mu[d]).powi(2)
            })
            .sum();
        assert!((got - expect).abs() < 1e-9, "{got} vs {expect}");
    }

    #[test]
    fn frame_at_mean_has_no_quadratic_term() {
        let mut model = init_model(toy_config(1, 1, 2, 1), 0).unwrap();
        model.weights[0] = vec![3.0, 1.0];
        let g = &mut model.gaussians[0];
        g.mean = vec![0.4];
        g.kappa = 3.0;
        g.shape = 2.5;
        g.rate = vec![0.7];
        let got = model.expected_frame_loglik(&array![[0.4]]).unwrap()[[0, 0]];
        let elog_w = digamma(3.0) - digamma(4.0);
        let expect = 0.5 * (digamma(2.5) - 0.7f64.ln() - LN_2PI - 1.0 / 3.0) + elog_w;
        assert!((got - expect).abs() < 1e-14);
    }

    #[test]
    fn batching_and_permutation_are_row_wise() {
        let model = init_model(toy_config(3, 2, 2, 3), 5).unwrap();
        let x = array![[0.1, 0.2, 0.3], [-1.0, 2.0, 0.5], [3.0, -0.5, 1.5]];
        let all = model.expected_frame_loglik(&x).unwrap();
        assert_eq!(all.dim(), (3, 12));
        for t in 0..3 {
            let single = model
                .expected_frame_loglik(&x.row(t).to_owned().insert_axis(ndarray::Axis(0)))
                .unwrap();
            assert_eq!(single.row(0), all.row(t));
        }
        let perm = array![[3.0, -0.5, 1.5], [0.1, 0.2, 0.3], [-1.0, 2.0, 0.5]];
        let p = model.expected_frame_loglik(&perm).unwrap();
        assert_eq!(p.row(0), all.row(2));
        assert_eq!(p.row(1), all.row(0));
    }

    #[test]
    fn dim_mismatch_is_error() {
        let model = init_model(toy_config(1, 1, 1, 2), 0).unwrap();
        assert!(matches!(
            model.expected_frame_loglik(&array![[1.0, 2.0, 3.0]]),
            Err(Error::DimMismatch { expected: 2, found: 3 })
        ));
    }

    #[test]
    fn unified_view_shapes() {
        let model = init_model(toy_config(4, 3, 2, 1), 0).unwrap();
        let view = model.unified_view();
        assert_eq!(view.n_states(), 12);
        assert_eq!(view.log_entry.len(), 4);
        // Dirichlet(1,1): E[log p] = psi(1) - psi(2) = -1
        assert!(view.log_self.iter().all(|v| (v + 1.0).abs() < 1e-12));
    }
}
