//! Equidistant spatial mesh carrying four Gauss-Lobatto nodes per step.

use crate::error::{Error, Result};
use crate::real::Real;

/// Interior reference abscissa `1/√5` of the 4-point Gauss-Lobatto rule.
#[inline]
pub fn lobatto_inner<T: Real>() -> T {
    T::one() / T::lit(5.0).sqrt()
}

/// Reference abscissae `{−1, −1/√5, 1/√5, 1}` on `[−1, 1]`.
pub fn lobatto_abscissae<T: Real>() -> [T; 4] {
    let r = lobatto_inner::<T>();
    [-T::one(), -r, r, T::one()]
}

/// Nodes per step; adjacent steps share their boundary node.
pub const NODES_PER_STEP: usize = 4;

#[derive(Debug, Clone, PartialEq)]
pub struct SpatialMesh<T> {
    x_min: T,
    x_max: T,
    n_steps: usize,
    step_width: T,
    nodes: Vec<T>,
}

impl<T: Real> SpatialMesh<T> {
    pub fn new(x_min: T, x_max: T, n_steps: usize) -> Result<Self> {
        if !(x_min.is_finite() && x_max.is_finite()) || x_min >= x_max {
            return Err(Error::Config(format!("degenerate spatial range [{x_min}, {x_max}]")));
        }
        if n_steps == 0 {
            return Err(Error::Config("mesh needs at least one step".into()));
        }
        let n = T::from_usize_lossy(n_steps);
        let step_width = (x_max - x_min) / n;
        let half = step_width * T::lit(0.5);
        let refs = lobatto_abscissae::<T>();
        let mut nodes = Vec::with_capacity(3 * n_steps + 1);
        for step in 0..n_steps {
            let left = x_min + T::from_usize_lossy(step) * step_width;
            let start = if step == 0 { 0 } else { 1 };
            for r in &refs[start..] {
                nodes.push(left + (*r + T::one()) * half);
            }
        }
        // pin the outer boundary exactly
        *nodes.last_mut().expect("non-empty") = x_max;
        nodes[0] = x_min;
        Ok(Self { x_min, x_max, n_steps, step_width, nodes })
    }

    /// Mesh with steps of width close to `dx`; the count is rounded to the nearest integer.
    pub fn with_step(x_min: T, x_max: T, dx: T) -> Result<Self> {
        if !(dx > T::zero()) {
            return Err(Error::Config(format!("step width must be positive, got {dx}")));
        }
        let steps = ((x_max - x_min) / dx).round().to_usize().unwrap_or(0);
        Self::new(x_min, x_max, steps.max(1))
    }

    pub fn x_min(&self) -> T {
        self.x_min
    }

    pub fn x_max(&self) -> T {
        self.x_max
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    pub fn step_width(&self) -> T {
        self.step_width
    }

    pub fn nodes(&self) -> &[T] {
        &self.nodes
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    /// Global index of local node `local ∈ 0..4` of `step`.
    #[inline]
    pub fn node_of_step(&self, step: usize, local: usize) -> usize {
        debug_assert!(step < self.n_steps && local < NODES_PER_STEP);
        3 * step + local
    }

    /// Step owning a node; shared boundary nodes belong to the step on their right
    /// (the last node belongs to the last step).
    #[inline]
    pub fn step_of_node(&self, node: usize) -> usize {
        (node / 3).min(self.n_steps - 1)
    }

    /// Left end of a step.
    #[inline]
    pub fn step_left(&self, step: usize) -> T {
        self.nodes[3 * step]
    }

    /// Midpoint of a step.
    #[inline]
    pub fn step_center(&self, step: usize) -> T {
        (self.nodes[3 * step] + self.nodes[3 * step + 3]) * T::lit(0.5)
    }

    /// The four nodes of a step.
    #[inline]
    pub fn step_nodes(&self, step: usize) -> &[T] {
        &self.nodes[3 * step..3 * step + 4]
    }

    /// Step containing `x`, clamped to the mesh.
    pub fn locate(&self, x: T) -> usize {
        let s = ((x - self.x_min) / self.step_width).floor();
        let s = s.to_isize().unwrap_or(0).max(0) as usize;
        s.min(self.n_steps - 1)
    }

    /// Composite integral with the classical (degree-5) Lobatto rule of samples at all nodes.
    pub fn integrate_nodes(&self, values: &[T]) -> T {
        assert_eq!(values.len(), self.n_nodes());
        let w = crate::quadrature::classical_lobatto_weights::<T>();
        let half = self.step_width * T::lit(0.5);
        let mut total = T::zero();
        for step in 0..self.n_steps {
            let base = 3 * step;
            let mut s = T::zero();
            for (j, wj) in w.iter().enumerate() {
                s += *wj * values[base + j];
            }
            total += s * half;
        }
        total
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_reference_step() {
        let m = SpatialMesh::new(-1.0, 1.0, 1).unwrap();
        let r = 1.0 / 5f64.sqrt();
        for (a, b) in m.nodes().iter().zip([-1.0, -r, r, 1.0]) {
            assert!((a - b).abs() <= f64::EPSILON, "{a} vs {b}");
        }
        assert_eq!(m.nodes()[0], -1.0);
        assert_eq!(m.nodes()[3], 1.0);
    }

    #[test]
    fn shared_boundary_node() {
        let m = SpatialMesh::new(0.0, 2.0, 2).unwrap();
        assert_eq!(m.n_nodes(), 7);
        assert_eq!(m.nodes()[3], 1.0);
    }

    #[test]
    fn long_range_counts() {
        let m = SpatialMesh::new(-10.0, 10.0, 40).unwrap();
        assert_eq!(m.step_width(), 0.5);
        assert_eq!(m.n_nodes(), 121);
        for w in m.nodes().windows(2) {
            assert!(w[0] < w[1]);
        }
        for step in 0..40 {
            let expect = -10.0 + step as f64 * 0.5;
            assert!((m.step_left(step) - expect).abs() <= f64::EPSILON * 10.0);
        }
    }

    #[test]
    fn rejects_bad_config() {
        assert!(matches!(SpatialMesh::new(1.0, 1.0, 3), Err(Error::Config(_))));
        assert!(matches!(SpatialMesh::new(2.0, 1.0, 3), Err(Error::Config(_))));
        assert!(matches!(SpatialMesh::new(0.0, 1.0, 0), Err(Error::Config(_))));
    }

    #[test]
    fn node_count_formula() {
        for n in 1..50 {
            let m = SpatialMesh::new(-3.0f32, 7.0, n).unwrap();
            assert_eq!(m.n_nodes(), 3 * n + 1);
        }
    }

    #[test]
    fn locate_and_index_maps() {
        let m = SpatialMesh::new(0.0, 4.0, 4).unwrap();
        assert_eq!(m.locate(0.0), 0);
        assert_eq!(m.locate(2.5), 2);
        assert_eq!(m.locate(4.0), 3);
        assert_eq!(m.step_of_node(m.node_of_step(2, 1)), 2);
        assert_eq!(m.step_of_node(m.n_nodes() - 1), 3);
    }
}
