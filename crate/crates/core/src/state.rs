//! Points of the unit simplex and the geometry of its boundary.
//!
//! A realizable state is a vector `Y = (Y_1, ..., Y_N)` with `Y_a >= 0` and
//! `sum Y_a = 1`. Only the first `N - 1` coordinates are independent; the
//! processes in this crate evolve that reduced vector and recover `Y_N`
//! from the unit-sum condition.

use rand::Rng;
use rand_distr::{Distribution, Exp1};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Construction tolerance on `|sum - 1|` and on tiny negative components.
pub const TOL_SUM: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StateError {
    #[error("a simplex state needs at least 2 components, got {0}")]
    TooFewComponents(usize),
    #[error("component {index} is negative ({value:e})")]
    NegativeComponent { index: usize, value: f64 },
    #[error("components sum to {sum:.17}, which is not 1 within {TOL_SUM:e}")]
    SumViolation { sum: f64 },
    #[error("component {index} is not finite")]
    NonFinite { index: usize },
    #[error("expected {expected} components, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
}

fn check_finite(values: &[f64]) -> Result<(), StateError> {
    match values.iter().position(|v| !v.is_finite()) {
        Some(index) => Err(StateError::NonFinite { index }),
        None => Ok(()),
    }
}

/// A realizable point: `N >= 2` non-negative fractions summing to one.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimplexState {
    fractions: Vec<f64>,
}

impl SimplexState {
    /// Validates and normalizes a full vector of fractions.
    ///
    /// Components in `[-TOL_SUM, 0)` are set to zero, and the vector is then
    /// divided by its sum. Exact zeros stay exact zeros.
    pub fn new(fractions: Vec<f64>) -> Result<Self, StateError> {
        make_state(fractions)
    }

    pub fn dim(&self) -> usize {
        self.fractions.len()
    }

    pub fn fractions(&self) -> &[f64] {
        &self.fractions
    }

    /// The independent coordinates `Y_1..Y_{N-1}`.
    pub fn reduced(&self) -> ReducedState {
        ReducedState {
            fractions: self.fractions[..self.fractions.len() - 1].to_vec(),
        }
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.fractions
    }
}

/// Builds a [`SimplexState`], renormalizing sums that are within [`TOL_SUM`] of one.
pub fn make_state(mut fractions: Vec<f64>) -> Result<SimplexState, StateError> {
    if fractions.len() < 2 {
        return Err(StateError::TooFewComponents(fractions.len()));
    }
    check_finite(&fractions)?;
    for (index, &value) in fractions.iter().enumerate() {
        if value < -TOL_SUM {
            return Err(StateError::NegativeComponent { index, value });
        }
    }
    for v in fractions.iter_mut() {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
    let sum: f64 = fractions.iter().sum();
    if (sum - 1.0).abs() > TOL_SUM {
        return Err(StateError::SumViolation { sum });
    }
    for v in fractions.iter_mut() {
        *v /= sum;
    }
    Ok(SimplexState { fractions })
}

/// The `N - 1` independent coordinates of a simplex point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReducedState {
    fractions: Vec<f64>,
}

impl ReducedState {
    /// Accepts coordinates that are non-negative (up to [`TOL_SUM`]) with sum at most `1 + TOL_SUM`.
    pub fn new(mut fractions: Vec<f64>) -> Result<Self, StateError> {
        if fractions.is_empty() {
            return Err(StateError::TooFewComponents(1));
        }
        check_finite(&fractions)?;
        for (index, &value) in fractions.iter().enumerate() {
            if value < -TOL_SUM {
                return Err(StateError::NegativeComponent { index, value });
            }
        }
        for v in fractions.iter_mut() {
            *v = v.max(0.0);
        }
        let sum: f64 = fractions.iter().sum();
        if sum > 1.0 + TOL_SUM {
            return Err(StateError::SumViolation { sum });
        }
        Ok(Self { fractions })
    }

    /// Number of reduced coordinates, `N - 1`.
    pub fn len(&self) -> usize {
        self.fractions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fractions.is_empty()
    }

    /// Dimension `N` of the full state.
    pub fn full_dim(&self) -> usize {
        self.fractions.len() + 1
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.fractions
    }

    /// `Y_N = 1 - sum_{a<N} Y_a`, clamped at zero.
    pub fn last(&self) -> f64 {
        (1.0 - self.fractions.iter().sum::<f64>()).max(0.0)
    }
}

/// Appends `Y_N = 1 - sum Y_a` to a reduced vector.
pub fn complete_reduced(reduced: &ReducedState) -> Result<SimplexState, StateError> {
    let sum: f64 = reduced.fractions.iter().sum();
    if sum > 1.0 + TOL_SUM {
        return Err(StateError::SumViolation { sum });
    }
    let mut full = Vec::with_capacity(reduced.len() + 1);
    full.extend_from_slice(&reduced.fractions);
    full.push((1.0 - sum).max(0.0));
    make_state(full)
}

/// Smallest Euclidean distance from a reduced state to any face of the simplex.
///
/// The zero faces `Y_a = 0` are at distance `Y_a`; the unit-sum face is at
/// distance `(1 - sum Y_a) / sqrt(N - 1)`.
pub fn boundary_distance(state: &ReducedState) -> f64 {
    let k = state.len() as f64;
    let to_zero = state.fractions.iter().copied().fold(f64::INFINITY, f64::min);
    let to_sum = (1.0 - state.fractions.iter().sum::<f64>()) / k.sqrt();
    to_zero.min(to_sum).max(0.0)
}

/// One of the `N` flat faces bounding the reduced simplex.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", content = "index")]
pub enum BoundaryFace {
    /// `Y_a = 0`, with a 1-based index `a` in `1..=N-1`.
    Zero(usize),
    /// `Y_1 + ... + Y_{N-1} = 1`, i.e. `Y_N = 0`.
    UnitSum,
}

impl BoundaryFace {
    /// All faces of the reduced system for full dimension `n`, zero faces first.
    pub fn all(n: usize) -> Vec<BoundaryFace> {
        (1..n).map(BoundaryFace::Zero).chain([BoundaryFace::UnitSum]).collect()
    }

    pub fn is_valid_for(&self, n: usize) -> bool {
        match *self {
            BoundaryFace::Zero(a) => a >= 1 && a < n,
            BoundaryFace::UnitSum => n >= 2,
        }
    }

    pub fn label(&self) -> String {
        match *self {
            BoundaryFace::Zero(a) => format!("Y{a}=0"),
            BoundaryFace::UnitSum => "sum=1".to_string(),
        }
    }
}

/// Uniform draw from the simplex `{x >= 0, sum x = 1}` with `len` components.
fn uniform_simplex<R: Rng + ?Sized>(rng: &mut R, len: usize) -> Vec<f64> {
    let mut x: Vec<f64> = (0..len).map(|_| Exp1.sample(rng)).collect();
    let total: f64 = x.iter().sum();
    for v in x.iter_mut() {
        *v /= total;
    }
    x
}

/// Draws a point uniformly on `face` for full dimension `n`.
///
/// The face coordinate is set to an exact zero (or, on the unit-sum face, the
/// last reduced coordinate is set to `1 - sum` of the others) so that boundary
/// conditions are evaluated exactly on the face.
///
/// Panics if the face is not valid for `n`.
pub fn sample_face<R: Rng + ?Sized>(face: BoundaryFace, n: usize, rng: &mut R) -> ReducedState {
    assert!(face.is_valid_for(n), "face {face:?} is not a face of the {n}-simplex");
    let k = n - 1;
    let fractions = match face {
        BoundaryFace::Zero(a) => {
            // The remaining k-1 reduced coordinates fill their own sub-simplex
            // {y >= 0, sum y <= 1}: a uniform k-component simplex point with
            // its last entry (the slack Y_N) dropped.
            let rest = uniform_simplex(rng, k);
            let mut y = Vec::with_capacity(k);
            let mut it = rest.into_iter();
            for i in 1..=k {
                y.push(if i == a { 0.0 } else { it.next().unwrap_or(0.0) });
            }
            y
        }
        BoundaryFace::UnitSum => {
            let mut y = uniform_simplex(rng, k);
            let head: f64 = y[..k - 1].iter().sum();
            y[k - 1] = (1.0 - head).max(0.0);
            y
        }
    };
    ReducedState { fractions }
}

/// A collection of `M` simplex states of common dimension `N`, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Ensemble {
    dim: usize,
    data: Vec<f64>,
}

impl Ensemble {
    pub fn from_states(states: &[SimplexState]) -> Result<Self, StateError> {
        let first = states.first().ok_or(StateError::TooFewComponents(0))?;
        let dim = first.dim();
        let mut data = Vec::with_capacity(dim * states.len());
        for s in states {
            if s.dim() != dim {
                return Err(StateError::DimensionMismatch { expected: dim, got: s.dim() });
            }
            data.extend_from_slice(s.fractions());
        }
        Ok(Self { dim, data })
    }

    /// `size` copies of one state.
    pub fn delta(state: &SimplexState, size: usize) -> Self {
        let mut data = Vec::with_capacity(state.dim() * size);
        for _ in 0..size {
            data.extend_from_slice(state.fractions());
        }
        Self { dim: state.dim(), data }
    }

    /// `size` independent uniform draws on the `n`-simplex.
    pub fn uniform<R: Rng + ?Sized>(n: usize, size: usize, rng: &mut R) -> Self {
        let mut data = Vec::with_capacity(n * size);
        for _ in 0..size {
            let mut y = uniform_simplex(rng, n);
            let head: f64 = y[..n - 1].iter().sum();
            y[n - 1] = (1.0 - head).max(0.0);
            data.extend_from_slice(&y);
        }
        Self { dim: n, data }
    }

    /// Wraps raw rows without checking the simplex constraints. Used for
    /// negative controls and for data read back from dumps.
    pub fn from_rows_unchecked(dim: usize, data: Vec<f64>) -> Self {
        assert!(dim >= 2 && data.len() % dim == 0, "ragged ensemble data");
        Self { dim, data }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> std::slice::ChunksExact<'_, f64> {
        self.data.chunks_exact(self.dim)
    }

    pub(crate) fn rows_mut(&mut self) -> std::slice::ChunksExactMut<'_, f64> {
        self.data.chunks_exact_mut(self.dim)
    }

    pub(crate) fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// Contiguous sub-ensemble of rows `range`.
    pub fn slice(&self, range: std::ops::Range<usize>) -> Ensemble {
        Ensemble {
            dim: self.dim,
            data: self.data[range.start * self.dim..range.end * self.dim].to_vec(),
        }
    }

    /// Index and residual of the worst row: most negative component or largest `|sum - 1|`.
    pub fn worst_violation(&self) -> Option<(usize, f64)> {
        let mut worst: Option<(usize, f64)> = None;
        for (i, row) in self.rows().enumerate() {
            let neg = row.iter().copied().fold(0.0_f64, |m, v| m.max(-v));
            let sum_err = (row.iter().sum::<f64>() - 1.0).abs();
            let v = neg.max(sum_err);
            if worst.map_or(true, |(_, w)| v > w) {
                worst = Some((i, v));
            }
        }
        worst
    }

    /// Number of rows with a negative component or `|sum - 1| > TOL_SUM`.
    pub fn count_unrealizable(&self) -> usize {
        self.rows().filter(|row| !is_realizable(row)).count()
    }
}

/// `Y_a >= 0` for all components and `|sum - 1| <= TOL_SUM`.
pub fn is_realizable(row: &[f64]) -> bool {
    row.iter().all(|&v| v >= 0.0) && (row.iter().sum::<f64>() - 1.0).abs() <= TOL_SUM
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn make_state_examples() {
        let s = make_state(vec![0.2, 0.3, 0.5]).unwrap();
        assert_eq!(s.fractions(), &[0.2, 0.3, 0.5]);
        let v = make_state(vec![1.0, 0.0, 0.0]).unwrap();
        assert_eq!(v.fractions(), &[1.0, 0.0, 0.0]);
        assert!(matches!(
            make_state(vec![0.5, 0.6, -0.1]),
            Err(StateError::NegativeComponent { index: 2, .. })
        ));
    }

    #[test]
    fn make_state_rejects_bad_sums_and_sizes() {
        assert!(matches!(make_state(vec![0.5, 0.6]), Err(StateError::SumViolation { .. })));
        assert!(matches!(make_state(vec![1.0]), Err(StateError::TooFewComponents(1))));
        assert!(matches!(make_state(vec![f64::NAN, 1.0]), Err(StateError::NonFinite { index: 0 })));
    }

    #[test]
    fn make_state_renormalizes_and_keeps_zeros() {
        let s = make_state(vec![0.0, 0.5 + 4e-13, 0.5]).unwrap();
        assert_eq!(s.fractions()[0], 0.0);
        assert!((s.fractions().iter().sum::<f64>() - 1.0).abs() < 1e-15);
        let t = make_state(vec![-5e-13, 0.5, 0.5]).unwrap();
        assert_eq!(t.fractions()[0], 0.0);
    }

    #[test]
    fn complete_reduced_examples() {
        let r = ReducedState::new(vec![0.25, 0.25]).unwrap();
        assert_eq!(complete_reduced(&r).unwrap().fractions(), &[0.25, 0.25, 0.5]);
        let r = ReducedState::new(vec![0.0]).unwrap();
        assert_eq!(complete_reduced(&r).unwrap().fractions(), &[0.0, 1.0]);
        assert!(matches!(
            ReducedState::new(vec![0.7, 0.5]),
            Err(StateError::SumViolation { .. })
        ));
    }

    /// Distance to a hyperplane by brute force: minimize |x - p| over a dense
    /// sample of points of the face (restricted to the 2-D case).
    fn brute_force_face_distance(p: [f64; 2]) -> f64 {
        let mut best = f64::INFINITY;
        let n = 20_000;
        for i in 0..=n {
            let u = i as f64 / n as f64;
            for q in [[0.0, u], [u, 0.0], [u, 1.0 - u]] {
                let d = ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2)).sqrt();
                best = best.min(d);
            }
        }
        best
    }

    #[test]
    fn boundary_distance_matches_brute_force() {
        let expected = brute_force_face_distance([1.0 / 3.0, 1.0 / 3.0]);
        let got = boundary_distance(&ReducedState::new(vec![1.0 / 3.0, 1.0 / 3.0]).unwrap());
        assert!((got - expected).abs() < 1e-8, "{got} vs {expected}");
        assert!((got - 1.0 / (3.0 * 2f64.sqrt())).abs() < 1e-15);

        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let y = uniform_simplex(&mut rng, 3);
            let p = [y[0], y[1]];
            let got = boundary_distance(&ReducedState::new(p.to_vec()).unwrap());
            assert!((got - brute_force_face_distance(p)).abs() < 1e-4);
        }
    }

    #[test]
    fn boundary_distance_zero_on_faces() {
        assert_eq!(boundary_distance(&ReducedState::new(vec![0.0]).unwrap()), 0.0);
        assert_eq!(boundary_distance(&ReducedState::new(vec![0.5, 0.5]).unwrap()), 0.0);
    }

    #[test]
    fn sample_face_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100 {
            let p = sample_face(BoundaryFace::Zero(1), 3, &mut rng);
            assert_eq!(p.as_slice()[0], 0.0);
            assert!((0.0..=1.0).contains(&p.as_slice()[1]));
            let q = sample_face(BoundaryFace::UnitSum, 3, &mut rng);
            assert!((q.as_slice()[0] + q.as_slice()[1] - 1.0).abs() < 1e-15);
        }
        assert_eq!(sample_face(BoundaryFace::Zero(1), 2, &mut rng).as_slice(), &[0.0]);
        assert_eq!(sample_face(BoundaryFace::UnitSum, 2, &mut rng).as_slice(), &[1.0]);
    }

    #[test]
    fn zero_face_samples_are_uniform_on_segment() {
        // For N = 3 the free coordinate on Y1 = 0 is Uniform[0, 1]: mean 1/2, variance 1/12.
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 40_000;
        let xs: Vec<f64> = (0..n)
            .map(|_| sample_face(BoundaryFace::Zero(1), 3, &mut rng).as_slice()[1])
            .collect();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64;
        assert!((mean - 0.5).abs() < 4.0 * (1.0 / 12.0 / n as f64).sqrt());
        assert!((var - 1.0 / 12.0).abs() < 2e-3);
    }

    #[test]
    fn faces_enumerate_reduced_system() {
        assert_eq!(
            BoundaryFace::all(4),
            vec![BoundaryFace::Zero(1), BoundaryFace::Zero(2), BoundaryFace::Zero(3), BoundaryFace::UnitSum]
        );
        assert!(!BoundaryFace::Zero(3).is_valid_for(3));
    }
}
