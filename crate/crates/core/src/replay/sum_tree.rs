/// Complete binary tree of `2·C − 1` masses; leaf `i` is node `C − 1 + i`.
///
/// Internal nodes are always recomputed as the sum of their children, never
/// adjusted by deltas, so repeated updates do not accumulate drift.
#[derive(Debug, Clone, PartialEq)]
pub struct SumTree {
    capacity: usize,
    nodes: Vec<f64>,
}

impl SumTree {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "sum tree capacity must be positive");
        Self {
            capacity,
            nodes: vec![0.0; 2 * capacity - 1],
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn total(&self) -> f64 {
        self.nodes[0]
    }

    pub fn leaf(&self, i: usize) -> f64 {
        self.nodes[self.capacity - 1 + i]
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    /// Sets leaf `i` and repairs its ancestors. Returns the number of
    /// ancestors rewritten.
    pub fn set(&mut self, i: usize, mass: f64) -> usize {
        debug_assert!(mass >= 0.0 && mass.is_finite());
        let mut node = self.capacity - 1 + i;
        self.nodes[node] = mass;
        let mut touched = 0;
        while node > 0 {
            node = (node - 1) / 2;
            self.nodes[node] = self.nodes[2 * node + 1] + self.nodes[2 * node + 2];
            touched += 1;
        }
        touched
    }

    /// Leaf whose cumulative-mass interval contains `query`.
    ///
    /// A branch with zero mass is never entered while its sibling has mass,
    /// so the returned leaf has positive mass whenever the total does.
    pub fn find(&self, query: f64) -> usize {
        let internal = self.capacity - 1;
        let mut q = query.clamp(0.0, self.total());
        let mut node = 0;
        while node < internal {
            let left = 2 * node + 1;
            let right = left + 1;
            if q < self.nodes[left] || self.nodes[right] <= 0.0 {
                node = left;
            } else {
                q -= self.nodes[left];
                node = right;
            }
        }
        node - internal
    }

    /// Largest `|node − (left + right)|` over internal nodes.
    pub fn audit(&self) -> f64 {
        (0..self.capacity - 1)
            .map(|i| (self.nodes[i] - (self.nodes[2 * i + 1] + self.nodes[2 * i + 2])).abs())
            .fold(0.0, f64::max)
    }

    /// Recomputes every internal node from the leaves.
    pub fn rebuild(&mut self) {
        for i in (0..self.capacity - 1).rev() {
            self.nodes[i] = self.nodes[2 * i + 1] + self.nodes[2 * i + 2];
        }
    }
}
