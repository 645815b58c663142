//! Exact mutual information, Wasserstein distance and Wasserstein dependency
//! measure on small finite distributions.
//!
//! Everything here is solved exactly (closed form or linear programming) and
//! serves as ground truth for the neural estimators.

mod lp;

use crate::error::{Error, Result};
use lp::{Constraint, Relation};
use ndarray::Array2;
use serde::{Deserialize, Serialize};

const MASS_TOL: f64 = 1e-12;
const METRIC_TOL: f64 = 1e-12;

/// A support point made of one or more vector components.
///
/// Single-space points have one component; points of a product space `X × Y`
/// carry the `x` and `y` coordinates as two components. Integer labels are
/// one-dimensional components.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Point(pub Vec<Vec<f64>>);

impl Point {
    pub fn vector(v: Vec<f64>) -> Self {
        Point(vec![v])
    }

    pub fn label(l: usize) -> Self {
        Point(vec![vec![l as f64]])
    }

    /// Concatenation of components, as used for product-space points.
    pub fn product(a: &Point, b: &Point) -> Self {
        Point(a.0.iter().chain(&b.0).cloned().collect())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricKind {
    /// Sum over components of the per-component Euclidean distance.
    EuclideanL1Product,
    /// Euclidean distance over all coordinates.
    EuclideanL2Product,
    /// Number of differing coordinates.
    Hamming,
    /// Cost looked up by support index in a validated matrix.
    ExplicitMatrix,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GroundMetric {
    kind: MetricKind,
    matrix: Option<Array2<f64>>,
}

impl GroundMetric {
    pub fn euclidean_l1_product() -> Self {
        Self { kind: MetricKind::EuclideanL1Product, matrix: None }
    }

    pub fn euclidean_l2_product() -> Self {
        Self { kind: MetricKind::EuclideanL2Product, matrix: None }
    }

    pub fn hamming() -> Self {
        Self { kind: MetricKind::Hamming, matrix: None }
    }

    /// Validates symmetry, zero diagonal, nonnegativity and the triangle inequality.
    pub fn explicit(matrix: Array2<f64>) -> Result<Self> {
        let (n, m) = matrix.dim();
        if n != m {
            return Err(Error::InvalidMetric(format!("cost matrix is {n}x{m}, not square")));
        }
        for i in 0..n {
            if matrix[[i, i]].abs() > METRIC_TOL {
                return Err(Error::InvalidMetric(format!("d({i},{i}) = {} ≠ 0", matrix[[i, i]])));
            }
            for j in 0..n {
                let d = matrix[[i, j]];
                if !d.is_finite() || d < 0.0 {
                    return Err(Error::InvalidMetric(format!("negative or non-finite cost at ({i},{j})")));
                }
                if (d - matrix[[j, i]]).abs() > METRIC_TOL {
                    return Err(Error::InvalidMetric(format!("asymmetric at ({i},{j})")));
                }
                for k in 0..n {
                    if d > matrix[[i, k]] + matrix[[k, j]] + METRIC_TOL {
                        return Err(Error::InvalidMetric(format!(
                            "triangle inequality fails for ({i},{j}) via {k}"
                        )));
                    }
                }
            }
        }
        Ok(Self { kind: MetricKind::ExplicitMatrix, matrix: Some(matrix) })
    }

    pub fn kind(&self) -> MetricKind {
        self.kind
    }

    pub fn matrix(&self) -> Option<&Array2<f64>> {
        self.matrix.as_ref()
    }

    /// Distance between two points. Explicit metrics are index-based; use
    /// [`GroundMetric::cost_matrix`] for those.
    pub fn distance(&self, a: &Point, b: &Point) -> Result<f64> {
        if a.0.len() != b.0.len() || a.0.iter().zip(&b.0).any(|(u, v)| u.len() != v.len()) {
            return Err(Error::Shape("points have different component layouts".into()));
        }
        let comps = a.0.iter().zip(&b.0);
        Ok(match self.kind {
            MetricKind::EuclideanL1Product => comps.map(|(u, v)| sq_dist(u, v).sqrt()).sum(),
            MetricKind::EuclideanL2Product => comps.map(|(u, v)| sq_dist(u, v)).sum::<f64>().sqrt(),
            MetricKind::Hamming => comps
                .map(|(u, v)| u.iter().zip(v).filter(|(p, q)| p != q).count() as f64)
                .sum(),
            MetricKind::ExplicitMatrix => {
                return Err(Error::InvalidMetric("explicit metric needs support indices".into()))
            }
        })
    }

    /// Pairwise costs between the supports of `p` and `q`.
    pub fn cost_matrix(&self, p: &DiscreteDistribution, q: &DiscreteDistribution) -> Result<Array2<f64>> {
        match &self.matrix {
            Some(m) => {
                if m.nrows() != p.len() || m.nrows() != q.len() {
                    return Err(Error::InvalidMetric(format!(
                        "cost matrix is {0}x{0} but supports have {1} and {2} points",
                        m.nrows(),
                        p.len(),
                        q.len()
                    )));
                }
                Ok(m.clone())
            }
            None => {
                let mut c = Array2::zeros((p.len(), q.len()));
                for (i, a) in p.points.iter().enumerate() {
                    for (j, b) in q.points.iter().enumerate() {
                        c[[i, j]] = self.distance(a, b)?;
                    }
                }
                Ok(c)
            }
        }
    }
}

fn sq_dist(u: &[f64], v: &[f64]) -> f64 {
    u.iter().zip(v).map(|(a, b)| (a - b) * (a - b)).sum()
}

/// A normalized finite distribution. Zero-mass points are kept.
#[derive(Clone, Debug, PartialEq)]
pub struct DiscreteDistribution {
    pub points: Vec<Point>,
    pub mass: Vec<f64>,
}

impl DiscreteDistribution {
    pub fn new(points: Vec<Point>, mass: Vec<f64>) -> Result<Self> {
        if points.len() != mass.len() {
            return Err(Error::Shape(format!("{} points but {} masses", points.len(), mass.len())));
        }
        check_mass(&mass)?;
        Ok(Self { points, mass })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

fn check_mass(mass: &[f64]) -> Result<()> {
    if mass.is_empty() {
        return Err(Error::InvalidDistribution("empty support".into()));
    }
    if let Some(m) = mass.iter().find(|m| !m.is_finite() || **m < 0.0) {
        return Err(Error::InvalidDistribution(format!("mass entry {m} is negative or non-finite")));
    }
    let total: f64 = mass.iter().sum();
    if (total - 1.0).abs() > MASS_TOL {
        return Err(Error::InvalidDistribution(format!("total mass {total} is not 1")));
    }
    Ok(())
}

/// Finite joint distribution over two labeled supports.
#[derive(Clone, Debug, PartialEq)]
pub struct DiscreteJoint {
    support_x: Vec<Point>,
    support_y: Vec<Point>,
    mass: Array2<f64>,
}

impl DiscreteJoint {
    pub fn new(support_x: Vec<Point>, support_y: Vec<Point>, mass: Array2<f64>) -> Result<Self> {
        if mass.dim() != (support_x.len(), support_y.len()) {
            return Err(Error::Shape(format!(
                "mass is {:?} but supports have {} and {} points",
                mass.dim(),
                support_x.len(),
                support_y.len()
            )));
        }
        check_mass(mass.as_slice().expect("standard layout"))?;
        for (axis, support) in [("x", &support_x), ("y", &support_y)] {
            for i in 0..support.len() {
                if support[i + 1..].contains(&support[i]) {
                    return Err(Error::InvalidDistribution(format!("duplicate {axis} support point {i}")));
                }
            }
        }
        Ok(Self { support_x, support_y, mass })
    }

    /// Joint over integer labels `0..rows` × `0..cols`.
    pub fn from_labels(mass: Array2<f64>) -> Result<Self> {
        let (n, m) = mass.dim();
        Self::new((0..n).map(Point::label).collect(), (0..m).map(Point::label).collect(), mass)
    }

    pub fn support_x(&self) -> &[Point] {
        &self.support_x
    }

    pub fn support_y(&self) -> &[Point] {
        &self.support_y
    }

    pub fn mass(&self) -> &Array2<f64> {
        &self.mass
    }

    pub fn marginal_x(&self) -> Vec<f64> {
        self.mass.rows().into_iter().map(|r| r.sum()).collect()
    }

    pub fn marginal_y(&self) -> Vec<f64> {
        self.mass.columns().into_iter().map(|c| c.sum()).collect()
    }

    fn product_points(&self) -> Vec<Point> {
        self.support_x
            .iter()
            .flat_map(|x| self.support_y.iter().map(move |y| Point::product(x, y)))
            .collect()
    }

    /// The joint as a distribution on the flattened product support (row-major).
    pub fn flatten(&self) -> DiscreteDistribution {
        DiscreteDistribution {
            points: self.product_points(),
            mass: self.mass.iter().copied().collect(),
        }
    }

    /// Product of the marginals on the same flattened support.
    pub fn product_of_marginals(&self) -> DiscreteDistribution {
        let (px, py) = (self.marginal_x(), self.marginal_y());
        DiscreteDistribution {
            points: self.product_points(),
            mass: px.iter().flat_map(|a| py.iter().map(move |b| a * b)).collect(),
        }
    }
}

/// Mutual information of a joint distribution, in nats.
pub fn mi_discrete(joint: &DiscreteJoint) -> f64 {
    let (px, py) = (joint.marginal_x(), joint.marginal_y());
    let mut mi = 0.0;
    for ((i, j), &m) in joint.mass.indexed_iter() {
        if m > 0.0 {
            mi += m * (m / (px[i] * py[j])).ln();
        }
    }
    mi.max(0.0)
}

/// Optimal coupling together with its transport cost.
#[derive(Clone, Debug)]
pub struct Transport {
    pub cost: f64,
    pub coupling: Array2<f64>,
}

/// Exact optimal-transport cost between `p` and `q`, solved as a linear
/// program over couplings.
pub fn wasserstein_discrete(
    p: &DiscreteDistribution,
    q: &DiscreteDistribution,
    metric: &GroundMetric,
) -> Result<f64> {
    Ok(optimal_transport(p, q, metric)?.cost)
}

pub fn optimal_transport(
    p: &DiscreteDistribution,
    q: &DiscreteDistribution,
    metric: &GroundMetric,
) -> Result<Transport> {
    check_mass(&p.mass)?;
    check_mass(&q.mass)?;
    let cost = metric.cost_matrix(p, q)?;
    if cost.iter().any(|c| !c.is_finite() || *c < 0.0) {
        return Err(Error::InvalidMetric("negative or non-finite transport cost".into()));
    }
    let (n, m) = cost.dim();
    let objective: Vec<f64> = cost.iter().map(|c| -c).collect();
    let mut constraints = Vec::with_capacity(n + m);
    for i in 0..n {
        let mut row = vec![0.0; n * m];
        row[i * m..(i + 1) * m].fill(1.0);
        constraints.push(Constraint { coeffs: row, relation: Relation::Equal, rhs: p.mass[i] });
    }
    for j in 0..m {
        let mut row = vec![0.0; n * m];
        for i in 0..n {
            row[i * m + j] = 1.0;
        }
        constraints.push(Constraint { coeffs: row, relation: Relation::Equal, rhs: q.mass[j] });
    }
    let sol = lp::maximize(&objective, &constraints)?;
    let coupling = Array2::from_shape_vec((n, m), sol.x).expect("n*m entries");
    let cost = (&coupling * &cost).sum().max(0.0);
    Ok(Transport { cost, coupling })
}

/// Kantorovich–Rubinstein dual solution.
#[derive(Clone, Debug)]
pub struct DualSolution {
    pub value: f64,
    /// 1-Lipschitz potential on `support`, shifted so its first entry is 0.
    pub potentials: Vec<f64>,
    /// Union of the supports of `p` and `q`.
    pub support: Vec<Point>,
}

/// Solves `max Σ f·(p − q)` subject to `|f(a) − f(b)| ≤ d(a, b)` over the
/// union of both supports.
pub fn kr_dual_discrete(
    p: &DiscreteDistribution,
    q: &DiscreteDistribution,
    metric: &GroundMetric,
) -> Result<DualSolution> {
    check_mass(&p.mass)?;
    check_mass(&q.mass)?;
    let (support, pm, qm, cost) = match metric.matrix() {
        Some(matrix) => {
            if matrix.nrows() != p.len() || matrix.nrows() != q.len() {
                return Err(Error::InvalidMetric("cost matrix does not match supports".into()));
            }
            (p.points.clone(), p.mass.clone(), q.mass.clone(), matrix.clone())
        }
        None => {
            let mut support: Vec<Point> = Vec::new();
            let index = |pt: &Point, support: &mut Vec<Point>| match support.iter().position(|s| s == pt) {
                Some(i) => i,
                None => {
                    support.push(pt.clone());
                    support.len() - 1
                }
            };
            let pi: Vec<usize> = p.points.iter().map(|pt| index(pt, &mut support)).collect();
            let qi: Vec<usize> = q.points.iter().map(|pt| index(pt, &mut support)).collect();
            let mut pm = vec![0.0; support.len()];
            let mut qm = vec![0.0; support.len()];
            for (&i, &m) in pi.iter().zip(&p.mass) {
                pm[i] += m;
            }
            for (&i, &m) in qi.iter().zip(&q.mass) {
                qm[i] += m;
            }
            let mut cost = Array2::zeros((support.len(), support.len()));
            for a in 0..support.len() {
                for b in 0..support.len() {
                    cost[[a, b]] = metric.distance(&support[a], &support[b])?;
                }
            }
            (support, pm, qm, cost)
        }
    };
    if cost.iter().any(|c| !c.is_finite() || *c < 0.0) {
        return Err(Error::InvalidMetric("negative or non-finite cost".into()));
    }

    // Potentials are shift-invariant; solve for g = f + const ≥ 0.
    let u = support.len();
    let objective: Vec<f64> = pm.iter().zip(&qm).map(|(a, b)| a - b).collect();
    let mut constraints = Vec::with_capacity(u * u.saturating_sub(1));
    for a in 0..u {
        for b in 0..u {
            if a != b {
                let mut row = vec![0.0; u];
                row[a] = 1.0;
                row[b] = -1.0;
                constraints.push(Constraint { coeffs: row, relation: Relation::LessEq, rhs: cost[[a, b]] });
            }
        }
    }
    let sol = lp::maximize(&objective, &constraints)
        .map_err(|e| Error::LinearProgram(format!("dual LP failed on valid input: {e}")))?;
    let base = sol.x[0];
    let potentials: Vec<f64> = sol.x.iter().map(|g| g - base).collect();
    let value = objective.iter().zip(&potentials).map(|(c, f)| c * f).sum::<f64>();
    Ok(DualSolution { value, potentials, support })
}

/// Wasserstein distance between a joint and the product of its marginals.
pub fn wdm_discrete(joint: &DiscreteJoint, metric: &GroundMetric) -> Result<f64> {
    wasserstein_discrete(&joint.flatten(), &joint.product_of_marginals(), metric)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use std::f64::consts::LN_2;

    fn bits(mass: Array2<f64>) -> DiscreteJoint {
        DiscreteJoint::from_labels(mass).unwrap()
    }

    #[test]
    fn mi_of_identical_bits_is_ln2() {
        let j = bits(array![[0.5, 0.0], [0.0, 0.5]]);
        assert!((mi_discrete(&j) - LN_2).abs() < 1e-12);
    }

    #[test]
    fn mi_of_product_is_zero() {
        let j = bits(array![[0.25, 0.25], [0.25, 0.25]]);
        assert_eq!(mi_discrete(&j), 0.0);
    }

    #[test]
    fn joint_rejects_bad_input() {
        assert!(DiscreteJoint::from_labels(array![[0.5, 0.4]]).is_err());
        assert!(DiscreteJoint::from_labels(array![[1.5, -0.5]]).is_err());
        let dup = DiscreteJoint::new(
            vec![Point::label(0), Point::label(0)],
            vec![Point::label(0)],
            array![[0.5], [0.5]],
        );
        assert!(dup.is_err());
    }

    #[test]
    fn point_masses_cost_their_distance() {
        let a = Point::vector(vec![0.0, 0.0]);
        let b = Point::vector(vec![3.0, 4.0]);
        let p = DiscreteDistribution::new(vec![a.clone()], vec![1.0]).unwrap();
        let q = DiscreteDistribution::new(vec![b.clone()], vec![1.0]).unwrap();
        let m = GroundMetric::euclidean_l2_product();
        assert!((wasserstein_discrete(&p, &q, &m).unwrap() - 5.0).abs() < 1e-12);
        let dual = kr_dual_discrete(&p, &q, &m).unwrap();
        assert!((dual.value - 5.0).abs() < 1e-9);
        assert!(((dual.potentials[0] - dual.potentials[1]).abs() - 5.0).abs() < 1e-9);
    }

    #[test]
    fn identical_distributions_cost_zero() {
        let pts = vec![Point::label(0), Point::label(1), Point::label(2)];
        let p = DiscreteDistribution::new(pts, vec![0.2, 0.3, 0.5]).unwrap();
        let m = GroundMetric::euclidean_l1_product();
        assert!(wasserstein_discrete(&p, &p, &m).unwrap().abs() < 1e-12);
        assert!(kr_dual_discrete(&p, &p, &m).unwrap().value.abs() < 1e-12);
    }

    #[test]
    fn correlated_and_anticorrelated_bits_wdm() {
        let m = GroundMetric::euclidean_l1_product();
        let corr = bits(array![[0.5, 0.0], [0.0, 0.5]]);
        let anti = bits(array![[0.0, 0.5], [0.5, 0.0]]);
        assert!((wdm_discrete(&corr, &m).unwrap() - 0.5).abs() < 1e-12);
        assert!((wdm_discrete(&anti, &m).unwrap() - 0.5).abs() < 1e-12);
        let prod = bits(array![[0.25, 0.25], [0.25, 0.25]]);
        assert!(wdm_discrete(&prod, &m).unwrap().abs() < 1e-12);
    }

    #[test]
    fn explicit_metric_validation() {
        assert!(GroundMetric::explicit(array![[0.0, 1.0], [2.0, 0.0]]).is_err());
        assert!(GroundMetric::explicit(array![[0.0, -1.0], [-1.0, 0.0]]).is_err());
        assert!(GroundMetric::explicit(array![[1.0, 1.0], [1.0, 1.0]]).is_err());
        let tri = array![[0.0, 5.0, 1.0], [5.0, 0.0, 1.0], [1.0, 1.0, 0.0]];
        assert!(GroundMetric::explicit(tri).is_err());
        assert!(GroundMetric::explicit(array![[0.0, 2.0], [2.0, 0.0]]).is_ok());
    }

    #[test]
    fn explicit_metric_shape_mismatch() {
        let m = GroundMetric::explicit(array![[0.0, 1.0], [1.0, 0.0]]).unwrap();
        let p = DiscreteDistribution::new(vec![Point::label(0)], vec![1.0]).unwrap();
        assert!(matches!(wasserstein_discrete(&p, &p, &m), Err(Error::InvalidMetric(_))));
    }

    #[test]
    fn hamming_counts_differing_coordinates() {
        let m = GroundMetric::hamming();
        let a = Point(vec![vec![0.0, 1.0], vec![2.0]]);
        let b = Point(vec![vec![0.0, 0.0], vec![3.0]]);
        assert_eq!(m.distance(&a, &b).unwrap(), 2.0);
    }
}
