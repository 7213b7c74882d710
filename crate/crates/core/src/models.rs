//! System models shared by the tracker, the estimator and the simulator.
//!
//! The kinematic state is `[x, y, vx, vy]` in pixels and pixels per frame;
//! measurements are positions `[x, y]`. Motion-model indices are zero-based.

use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen, Vector2};
use serde::{Deserialize, Serialize};

use crate::cardinality::CardinalityDistribution;
use crate::error::{Error, Result};
use crate::numerics::GaussianDensity;

pub const STATE_DIM: usize = 4;
pub const MEAS_DIM: usize = 2;

/// A 2-D position in measurement units.
pub type Point = Vector2<f64>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MotionModel {
    pub name: String,
    #[serde(with = "crate::serde_matrix")]
    pub f: DMatrix<f64>,
    #[serde(with = "crate::serde_matrix")]
    pub q: DMatrix<f64>,
}

impl MotionModel {
    /// Position diffuses with standard deviation `pos_sigma` per frame; the
    /// velocity is reset to zero-mean noise with standard deviation `vel_sigma`.
    pub fn random_walk(pos_sigma: f64, vel_sigma: f64) -> Self {
        let mut f = DMatrix::zeros(4, 4);
        f[(0, 0)] = 1.0;
        f[(1, 1)] = 1.0;
        let q = DMatrix::from_diagonal(&DVector::from_vec(vec![
            pos_sigma * pos_sigma,
            pos_sigma * pos_sigma,
            vel_sigma * vel_sigma,
            vel_sigma * vel_sigma,
        ]));
        MotionModel {
            name: "random-walk".into(),
            f,
            q,
        }
    }

    /// Near-constant velocity with white acceleration noise, unit frame interval.
    pub fn constant_velocity(accel_sigma: f64) -> Self {
        #[rustfmt::skip]
        let f = DMatrix::from_row_slice(4, 4, &[
            1.0, 0.0, 1.0, 0.0,
            0.0, 1.0, 0.0, 1.0,
            0.0, 0.0, 1.0, 0.0,
            0.0, 0.0, 0.0, 1.0,
        ]);
        let a2 = accel_sigma * accel_sigma;
        #[rustfmt::skip]
        let q = DMatrix::from_row_slice(4, 4, &[
            0.25, 0.0,  0.5, 0.0,
            0.0,  0.25, 0.0, 0.5,
            0.5,  0.0,  1.0, 0.0,
            0.0,  0.5,  0.0, 1.0,
        ]) * a2;
        MotionModel {
            name: "constant-velocity".into(),
            f,
            q,
        }
    }
}

/// Motion models with Markov switching `tau[(from, to)]` and birth model
/// probabilities `pi`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSet {
    pub models: Vec<MotionModel>,
    #[serde(with = "crate::serde_matrix")]
    pub tau: DMatrix<f64>,
    pub pi: Vec<f64>,
}

impl ModelSet {
    pub fn len(&self) -> usize {
        self.models.len()
    }

    pub fn is_empty(&self) -> bool {
        self.models.is_empty()
    }

    /// Probability of switching from model `from` to model `to`.
    pub fn transition(&self, from: usize, to: usize) -> f64 {
        self.tau[(from, to)]
    }

    pub fn single(model: MotionModel) -> Self {
        ModelSet {
            models: vec![model],
            tau: DMatrix::from_element(1, 1, 1.0),
            pi: vec![1.0],
        }
    }
}

impl Default for ModelSet {
    /// Random walk plus near-constant velocity, sticky switching.
    fn default() -> Self {
        ModelSet {
            models: vec![
                MotionModel::random_walk(1.0, 0.1),
                MotionModel::constant_velocity(0.2),
            ],
            tau: DMatrix::from_row_slice(2, 2, &[0.9, 0.1, 0.1, 0.9]),
            pi: vec![0.5, 0.5],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasurementModel {
    #[serde(with = "crate::serde_matrix")]
    pub h: DMatrix<f64>,
    #[serde(with = "crate::serde_matrix")]
    pub r: DMatrix<f64>,
}

impl MeasurementModel {
    /// Observes `[x, y]` with isotropic noise.
    pub fn position(sigma: f64) -> Self {
        let mut h = DMatrix::zeros(MEAS_DIM, STATE_DIM);
        h[(0, 0)] = 1.0;
        h[(1, 1)] = 1.0;
        MeasurementModel {
            h,
            r: DMatrix::identity(MEAS_DIM, MEAS_DIM) * (sigma * sigma),
        }
    }
}

impl Default for MeasurementModel {
    fn default() -> Self {
        MeasurementModel::position(0.5)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Region {
    pub x_min: f64,
    pub y_min: f64,
    pub x_max: f64,
    pub y_max: f64,
}

impl Region {
    pub fn new(x_min: f64, y_min: f64, x_max: f64, y_max: f64) -> Self {
        Region {
            x_min,
            y_min,
            x_max,
            y_max,
        }
    }

    pub fn square(side: f64) -> Self {
        Region::new(0.0, 0.0, side, side)
    }

    pub fn width(&self) -> f64 {
        self.x_max - self.x_min
    }

    pub fn height(&self) -> f64 {
        self.y_max - self.y_min
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn center(&self) -> Point {
        Point::new(0.5 * (self.x_min + self.x_max), 0.5 * (self.y_min + self.y_max))
    }

    /// Closed on the lower edges, open on the upper ones.
    pub fn contains(&self, p: &Point) -> bool {
        p.x >= self.x_min && p.x < self.x_max && p.y >= self.y_min && p.y < self.y_max
    }
}

impl Default for Region {
    fn default() -> Self {
        Region::square(230.0)
    }
}

/// Poisson clutter, uniform over `region`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClutterModel {
    pub region: Region,
    /// Mean clutter count per frame.
    pub lambda: f64,
}

impl ClutterModel {
    /// `K(z)`: `1/V` inside the region, zero outside.
    pub fn spatial_density(&self, z: &Point) -> f64 {
        clutter_spatial_density(self, z)
    }
}

pub fn clutter_spatial_density(model: &ClutterModel, z: &Point) -> f64 {
    if model.region.contains(z) {
        1.0 / model.region.area()
    } else {
        0.0
    }
}

/// Birth intensity `γ(x)` as a weighted Gaussian mixture plus the birth
/// cardinality distribution `ρ_Γ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BirthModel {
    pub components: Vec<(f64, GaussianDensity)>,
    pub cardinality: CardinalityDistribution,
}

impl BirthModel {
    /// One broad Gaussian centred on the region, position standard deviation
    /// equal to half the region extent, Poisson(`mean_births`) cardinality.
    pub fn diffuse(region: &Region, mean_births: f64, vel_sigma: f64, n_max: usize) -> Result<Self> {
        let c = region.center();
        let sx = 0.5 * region.width();
        let sy = 0.5 * region.height();
        let density = GaussianDensity::new(
            DVector::from_vec(vec![c.x, c.y, 0.0, 0.0]),
            DMatrix::from_diagonal(&DVector::from_vec(vec![
                sx * sx,
                sy * sy,
                vel_sigma * vel_sigma,
                vel_sigma * vel_sigma,
            ])),
        )?;
        Ok(BirthModel {
            components: if mean_births > 0.0 {
                vec![(mean_births, density)]
            } else {
                Vec::new()
            },
            cardinality: CardinalityDistribution::poisson(mean_births, n_max)?,
        })
    }

    pub fn none() -> Self {
        BirthModel {
            components: Vec::new(),
            cardinality: CardinalityDistribution::delta(0, 0),
        }
    }

    pub fn total_weight(&self) -> f64 {
        self.components.iter().map(|(w, _)| w).sum()
    }
}

/// Frame-level survival and detection probabilities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SurvivalDetectionParams {
    pub p_s: f64,
    pub p_d: f64,
}

impl Default for SurvivalDetectionParams {
    fn default() -> Self {
        SurvivalDetectionParams { p_s: 0.99, p_d: 0.9 }
    }
}

/// Everything a filter needs to know about targets, sensor and clutter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelBundle {
    pub motion: ModelSet,
    pub measurement: MeasurementModel,
    pub birth: BirthModel,
    pub clutter: ClutterModel,
    pub rates: SurvivalDetectionParams,
}

impl ModelBundle {
    /// Two motion models, diffuse birth of `mean_births` targets per frame.
    pub fn default_for_region(region: Region, mean_births: f64, n_max: usize) -> Result<Self> {
        Ok(ModelBundle {
            motion: ModelSet::default(),
            measurement: MeasurementModel::default(),
            birth: BirthModel::diffuse(&region, mean_births, 1.0, n_max)?,
            clutter: ClutterModel { region, lambda: 10.0 },
            rates: SurvivalDetectionParams::default(),
        })
    }

    /// All invariant violations, or `Ok` when there are none.
    pub fn validate(&self) -> std::result::Result<(), Vec<String>> {
        validate(self)
    }

    pub fn validated(self) -> Result<Self> {
        validate(&self).map_err(Error::InvalidModel)?;
        Ok(self)
    }
}

const STOCHASTIC_TOL: f64 = 1e-12;

fn check_covariance(name: &str, m: &DMatrix<f64>, dim: usize, strict: bool, out: &mut Vec<String>) {
    if m.shape() != (dim, dim) {
        out.push(format!("{name} is {}x{}, expected {dim}x{dim}", m.nrows(), m.ncols()));
        return;
    }
    if m.iter().any(|v| !v.is_finite()) {
        out.push(format!("{name} has non-finite entries"));
        return;
    }
    if !crate::numerics::gaussian_is_symmetric(m) {
        out.push(format!("{name} is not symmetric"));
        return;
    }
    let min_eig = SymmetricEigen::new(m.clone()).eigenvalues.min();
    if min_eig < 0.0 || (strict && Cholesky::new(m.clone()).is_none()) {
        out.push(format!("{name} has negative eigenvalue {min_eig:.3e}"));
    }
}

/// Check every model invariant and report all failures.
pub fn validate(bundle: &ModelBundle) -> std::result::Result<(), Vec<String>> {
    let mut out = Vec::new();
    let motion = &bundle.motion;
    let r = motion.models.len();
    if r == 0 {
        out.push("model set is empty".into());
    }
    for (i, m) in motion.models.iter().enumerate() {
        if m.f.shape() != (STATE_DIM, STATE_DIM) {
            out.push(format!("model {i} transition is {}x{}, expected 4x4", m.f.nrows(), m.f.ncols()));
        }
        check_covariance(&format!("model {i} process noise"), &m.q, STATE_DIM, false, &mut out);
    }
    if motion.tau.shape() != (r, r) {
        out.push(format!("tau is {}x{}, expected {r}x{r}", motion.tau.nrows(), motion.tau.ncols()));
    } else {
        for (i, row) in motion.tau.row_iter().enumerate() {
            let sum: f64 = row.iter().sum();
            if row.iter().any(|p| *p < 0.0) || (sum - 1.0).abs() > STOCHASTIC_TOL {
                out.push(format!("tau row {i} sums to {sum}"));
            }
        }
    }
    if motion.pi.len() != r {
        out.push(format!("pi has {} entries, expected {r}", motion.pi.len()));
    }
    let pi_sum: f64 = motion.pi.iter().sum();
    if motion.pi.iter().any(|p| *p < 0.0) || (pi_sum - 1.0).abs() > STOCHASTIC_TOL {
        out.push(format!("pi sums to {pi_sum}"));
    }

    let meas = &bundle.measurement;
    if meas.h.shape() != (MEAS_DIM, STATE_DIM) {
        out.push(format!("observation matrix is {}x{}, expected 2x4", meas.h.nrows(), meas.h.ncols()));
    }
    check_covariance("measurement noise", &meas.r, MEAS_DIM, true, &mut out);

    for (i, (w, g)) in bundle.birth.components.iter().enumerate() {
        if !(*w >= 0.0) {
            out.push(format!("birth component {i} has weight {w}"));
        }
        if g.dim() != STATE_DIM {
            out.push(format!("birth component {i} has dimension {}", g.dim()));
        }
    }
    let birth_sum = bundle.birth.cardinality.sum();
    if (birth_sum - 1.0).abs() > CardinalityDistribution::TOLERANCE {
        out.push(format!("birth cardinality sums to {birth_sum}"));
    }

    let region = &bundle.clutter.region;
    if !(region.area() > 0.0) || !region.area().is_finite() {
        out.push(format!("clutter region has area {}", region.area()));
    }
    if !(bundle.clutter.lambda >= 0.0) {
        out.push(format!("clutter rate {} is negative", bundle.clutter.lambda));
    }
    for (name, p) in [("p_s", bundle.rates.p_s), ("p_d", bundle.rates.p_d)] {
        if !(0.0..=1.0).contains(&p) {
            out.push(format!("{name} = {p} is outside [0, 1]"));
        }
    }

    if out.is_empty() {
        Ok(())
    } else {
        Err(out)
    }
}
