use crate::ad::Scalar;

/// Time-indexed emergent statistics of one simulation run.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory<S> {
    pub names: Vec<String>,
    pub rows: Vec<Vec<S>>,
}

impl<S: Scalar> Trajectory<S> {
    pub fn new(names: &[&str]) -> Self {
        Self {
            names: names.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn width(&self) -> usize {
        self.names.len()
    }

    pub fn column(&self, j: usize) -> Vec<S> {
        self.rows.iter().map(|r| r[j]).collect()
    }

    /// Primal values, row-major.
    pub fn values(&self) -> Vec<Vec<f64>> {
        self.rows
            .iter()
            .map(|r| r.iter().map(|x| x.value()).collect())
            .collect()
    }

    /// Tangent slot `slot` of column `j` over time.
    pub fn tangent_column(&self, j: usize, slot: usize) -> Vec<f64> {
        self.rows.iter().map(|r| r[j].tangent()[slot]).collect()
    }

    pub fn primal_bits(&self) -> Vec<u64> {
        self.rows
            .iter()
            .flat_map(|r| r.iter().map(|x| x.value().to_bits()))
            .collect()
    }
}
