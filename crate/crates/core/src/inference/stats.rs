use ndarray::{Array2, Zip};

use super::fb::{FbResult, TransitionStats};
use crate::error::{Error, Result};

/// Expected counts and moments that drive every conjugate update.
#[derive(Debug, Clone, PartialEq)]
pub struct SufficientStats {
    pub n_units: usize,
    pub states_per_unit: usize,
    pub components_per_state: usize,
    pub transitions: TransitionStats,
    /// Expected occupancy per component.
    pub occupancy: Vec<f64>,
    /// Occupancy-weighted feature sums, `components x dim`.
    pub s1: Array2<f64>,
    /// Occupancy-weighted squared feature sums, `components x dim`.
    pub s2: Array2<f64>,
    pub log_evidence: f64,
    pub n_frames: usize,
}

impl SufficientStats {
    pub fn zeros(n_units: usize, states_per_unit: usize, components_per_state: usize, dim: usize) -> Self {
        let n_states = n_units * states_per_unit;
        let n_comp = n_states * components_per_state;
        SufficientStats {
            n_units,
            states_per_unit,
            components_per_state,
            transitions: TransitionStats::zeros(n_units, n_states),
            occupancy: vec![0.0; n_comp],
            s1: Array2::zeros((n_comp, dim)),
            s2: Array2::zeros((n_comp, dim)),
            log_evidence: 0.0,
            n_frames: 0,
        }
    }

    pub fn dim(&self) -> usize {
        self.s1.ncols()
    }

    pub fn n_components(&self) -> usize {
        self.occupancy.len()
    }

    fn same_shape(&self, other: &Self) -> bool {
        self.n_units == other.n_units
            && self.states_per_unit == other.states_per_unit
            && self.components_per_state == other.components_per_state
            && self.s1.dim() == other.s1.dim()
    }

    pub fn merge_into(&mut self, other: &SufficientStats) -> Result<()> {
        if !self.same_shape(other) {
            return Err(Error::Shape(format!(
                "cannot merge stats of shape ({}, {}, {}, {}) with ({}, {}, {}, {})",
                self.n_units,
                self.states_per_unit,
                self.components_per_state,
                self.dim(),
                other.n_units,
                other.states_per_unit,
                other.components_per_state,
                other.dim()
            )));
        }
        let add = |a: &mut Vec<f64>, b: &Vec<f64>| a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
        add(&mut self.transitions.entry, &other.transitions.entry);
        add(&mut self.transitions.self_loop, &other.transitions.self_loop);
        add(&mut self.transitions.advance, &other.transitions.advance);
        add(&mut self.occupancy, &other.occupancy);
        self.s1 += &other.s1;
        self.s2 += &other.s2;
        self.log_evidence += other.log_evidence;
        self.n_frames += other.n_frames;
        Ok(())
    }

    /// Total expected occupancy, which equals the number of frames seen.
    pub fn total_occupancy(&self) -> f64 {
        self.occupancy.iter().sum()
    }

    /// Checks non-negativity and `s2 >= s1^2 / N` up to `slack`.
    pub fn check(&self, slack: f64) -> Result<()> {
        let counts = self
            .transitions
            .entry
            .iter()
            .chain(&self.transitions.self_loop)
            .chain(&self.transitions.advance)
            .chain(&self.occupancy);
        if let Some(v) = counts.clone().find(|v| !(**v >= 0.0) || !v.is_finite()) {
            return Err(Error::Invalid(format!("negative or non-finite count {v}")));
        }
        for (c, &n) in self.occupancy.iter().enumerate() {
            if n > 0.0 {
                for d in 0..self.dim() {
                    let s1 = self.s1[[c, d]];
                    if self.s2[[c, d]] + slack < s1 * s1 / n {
                        return Err(Error::Invalid(format!(
                            "component {c} dim {d}: s2 {} < s1^2/N {}",
                            self.s2[[c, d]],
                            s1 * s1 / n
                        )));
                    }
                }
            }
        }
        Ok(())
    }
}

pub fn merge_stats(a: &SufficientStats, b: &SufficientStats) -> Result<SufficientStats> {
    let mut out = a.clone();
    out.merge_into(b)?;
    Ok(out)
}

/// Pairs latent posteriors with feature frames. `frames` may live in a
/// different feature space from the one that produced the posteriors.
pub fn accumulate_with(
    n_units: usize,
    states_per_unit: usize,
    comp_post: &Array2<f64>,
    transitions: &TransitionStats,
    log_evidence: f64,
    frames: &Array2<f64>,
) -> Result<SufficientStats> {
    let (n, n_comp) = comp_post.dim();
    let n_states = n_units * states_per_unit;
    if n_states == 0 || n_comp % n_states != 0 {
        return Err(Error::Shape(format!(
            "{n_comp} component posteriors do not divide into {n_states} states"
        )));
    }
    if frames.nrows() != n {
        return Err(Error::Shape(format!(
            "{} frames but {n} posterior rows",
            frames.nrows()
        )));
    }
    if transitions.entry.len() != n_units
        || transitions.self_loop.len() != n_states
        || transitions.advance.len() != n_states
    {
        return Err(Error::Shape("transition statistics do not match the topology".into()));
    }
    let occupancy = comp_post.sum_axis(ndarray::Axis(0)).to_vec();
    let s1 = comp_post.t().dot(frames);
    let mut squared = frames.clone();
    squared.mapv_inplace(|x| x * x);
    let s2 = comp_post.t().dot(&squared);
    Ok(SufficientStats {
        n_units,
        states_per_unit,
        components_per_state: n_comp / n_states,
        transitions: transitions.clone(),
        occupancy,
        s1,
        s2,
        log_evidence,
        n_frames: n,
    })
}

pub fn accumulate_stats(
    fb: &FbResult,
    n_units: usize,
    states_per_unit: usize,
    frames: &Array2<f64>,
) -> Result<SufficientStats> {
    accumulate_with(
        n_units,
        states_per_unit,
        &fb.comp_post,
        &fb.transitions,
        fb.log_evidence,
        frames,
    )
}

impl SufficientStats {
    /// Multiplies every count and moment by `factor` (used in tests of
    /// linearity and for weighting).
    pub fn scaled(&self, factor: f64) -> SufficientStats {
        let mut out = self.clone();
        let scale = |v: &mut Vec<f64>| v.iter_mut().for_each(|x| *x *= factor);
        scale(&mut out.transitions.entry);
        scale(&mut out.transitions.self_loop);
        scale(&mut out.transitions.advance);
        scale(&mut out.occupancy);
        Zip::from(&mut out.s1).for_each(|x| *x *= factor);
        Zip::from(&mut out.s2).for_each(|x| *x *= factor);
        out
    }
}
