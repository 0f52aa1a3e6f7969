//! Factor graphs over discrete output variables, label assignments and
//! structured examples.
//!
//! Node indices are 0-based everywhere in the library and in the JSON dataset
//! format. Reports that quote factor neighborhoods shift them to 1-based.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default cap on the number of assignments any brute-force path may visit.
pub const DEFAULT_ENUMERATION_CAP: u64 = 10_000_000;

/// Output structure `Y = Y_1 × … × Y_l` with factors `N(f) ⊆ [l]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GraphSpec", into = "GraphSpec")]
pub struct FactorGraph {
    num_vars: usize,
    alphabet_sizes: Vec<usize>,
    factors: Vec<Vec<usize>>,
    factor_sizes: Vec<usize>,
    // strides[f][j]: weight of the j-th node of N(f) in the factor assignment index
    strides: Vec<Vec<usize>>,
    max_factor_size: usize,
    uniform_d: bool,
}

/// Wire form of a graph: `{"l": int, "alphabet": [int,...], "factors": [[int,...],...]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphSpec {
    pub l: usize,
    pub alphabet: Vec<usize>,
    pub factors: Vec<Vec<usize>>,
}

impl TryFrom<GraphSpec> for FactorGraph {
    type Error = Error;

    fn try_from(spec: GraphSpec) -> Result<Self> {
        if spec.alphabet.len() != spec.l {
            return Err(Error::InvalidGraph(format!(
                "alphabet has {} entries for {} nodes",
                spec.alphabet.len(),
                spec.l
            )));
        }
        FactorGraph::new(spec.alphabet, spec.factors)
    }
}

impl From<FactorGraph> for GraphSpec {
    fn from(g: FactorGraph) -> Self {
        GraphSpec {
            l: g.num_vars,
            alphabet: g.alphabet_sizes,
            factors: g.factors,
        }
    }
}

impl FactorGraph {
    pub fn new(alphabet_sizes: Vec<usize>, factors: Vec<Vec<usize>>) -> Result<Self> {
        let num_vars = alphabet_sizes.len();
        if num_vars == 0 {
            return Err(Error::InvalidGraph("graph has no variable nodes".into()));
        }
        if let Some(k) = alphabet_sizes.iter().position(|&c| c == 0) {
            return Err(Error::InvalidGraph(format!("node {k} has an empty alphabet")));
        }
        if factors.is_empty() {
            return Err(Error::InvalidGraph("graph has no factors".into()));
        }
        let mut factor_sizes = Vec::with_capacity(factors.len());
        let mut strides = Vec::with_capacity(factors.len());
        for (f, nodes) in factors.iter().enumerate() {
            if nodes.is_empty() {
                return Err(Error::InvalidGraph(format!("factor {f} has no neighbors")));
            }
            if nodes.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::InvalidGraph(format!(
                    "factor {f} node indices are not strictly increasing"
                )));
            }
            if let Some(&bad) = nodes.iter().find(|&&k| k >= num_vars) {
                return Err(Error::InvalidGraph(format!(
                    "factor {f} references node {bad} but the graph has {num_vars} nodes"
                )));
            }
            let mut s = vec![1usize; nodes.len()];
            let mut size: usize = 1;
            for j in (0..nodes.len()).rev() {
                s[j] = size;
                size = size.checked_mul(alphabet_sizes[nodes[j]]).ok_or_else(|| {
                    Error::InvalidGraph(format!("factor {f} label space overflows"))
                })?;
            }
            factor_sizes.push(size);
            strides.push(s);
        }
        let max_factor_size = *factor_sizes.iter().max().expect("nonempty");
        let uniform_d = factor_sizes.iter().all(|&s| s == max_factor_size);
        Ok(FactorGraph {
            num_vars,
            alphabet_sizes,
            factors,
            factor_sizes,
            strides,
            max_factor_size,
            uniform_d,
        })
    }

    /// Sequence graph whose factors are the sliding windows `{k, …, k+v−1}`.
    pub fn chain(l: usize, window: usize, alphabet: usize) -> Result<Self> {
        if window < 2 {
            return Err(Error::InvalidGraph("chain window must be at least 2".into()));
        }
        if l < window {
            return Err(Error::InvalidGraph(format!(
                "chain of length {l} is shorter than its window {window}"
            )));
        }
        if alphabet < 2 {
            return Err(Error::InvalidGraph("chain alphabet must have at least 2 labels".into()));
        }
        let factors = (0..=l - window).map(|k| (k..k + window).collect()).collect();
        FactorGraph::new(vec![alphabet; l], factors)
    }

    /// Single factor over one node with `c` labels (multi-class classification).
    pub fn single_node(c: usize) -> Result<Self> {
        FactorGraph::new(vec![c], vec![vec![0]])
    }

    pub fn num_vars(&self) -> usize {
        self.num_vars
    }

    pub fn alphabet_sizes(&self) -> &[usize] {
        &self.alphabet_sizes
    }

    pub fn factors(&self) -> &[Vec<usize>] {
        &self.factors
    }

    pub fn num_factors(&self) -> usize {
        self.factors.len()
    }

    pub fn factor_nodes(&self, f: usize) -> Result<&[usize]> {
        self.factors
            .get(f)
            .map(Vec::as_slice)
            .ok_or(Error::FactorOutOfRange {
                index: f,
                count: self.factors.len(),
            })
    }

    /// `|Y_f|`.
    pub fn factor_size(&self, f: usize) -> usize {
        self.factor_sizes[f]
    }

    /// `d = max_f |Y_f|`.
    pub fn d(&self) -> usize {
        self.max_factor_size
    }

    /// Whether every factor has the same label-space size.
    pub fn uniform_d(&self) -> bool {
        self.uniform_d
    }

    /// `|Y| = Π_k c_k`, saturating at `u128::MAX`.
    pub fn label_space_size(&self) -> u128 {
        self.alphabet_sizes
            .iter()
            .fold(1u128, |acc, &c| acc.saturating_mul(c as u128))
    }

    /// Window length `v` if the factors are exactly the sliding windows of
    /// [`FactorGraph::chain`].
    pub fn chain_window(&self) -> Option<usize> {
        let v = self.factors[0].len();
        if v < 2 || v > self.num_vars || self.factors.len() != self.num_vars - v + 1 {
            return None;
        }
        let is_chain = self
            .factors
            .iter()
            .enumerate()
            .all(|(k, nodes)| nodes.len() == v && nodes[0] == k && nodes[v - 1] == k + v - 1);
        is_chain.then_some(v)
    }

    /// Index of `y_f` (the restriction of a full labeling) inside `Y_f`,
    /// lexicographic with the last node fastest.
    #[inline]
    pub fn factor_index(&self, f: usize, labels: &[usize]) -> usize {
        self.factors[f]
            .iter()
            .zip(&self.strides[f])
            .map(|(&k, &s)| labels[k] * s)
            .sum()
    }

    /// Index of a partial assignment given in the node order of `N(f)`.
    pub fn partial_index(&self, f: usize, partial: &[usize]) -> usize {
        partial.iter().zip(&self.strides[f]).map(|(&a, &s)| a * s).sum()
    }

    /// Inverse of [`FactorGraph::partial_index`].
    pub fn partial_from_index(&self, f: usize, mut index: usize) -> Vec<usize> {
        self.strides[f]
            .iter()
            .map(|&s| {
                let a = index / s;
                index %= s;
                a
            })
            .collect()
    }

    /// Sub-tuple `y_f` of `y` on `N(f)`, in node order.
    pub fn restrict(&self, y: &LabelAssignment, f: usize) -> Result<Vec<usize>> {
        let nodes = self.factor_nodes(f)?;
        self.check_assignment(y)?;
        Ok(nodes.iter().map(|&k| y.0[k]).collect())
    }

    pub fn check_assignment(&self, y: &LabelAssignment) -> Result<()> {
        if y.0.len() != self.num_vars {
            return Err(Error::InvalidAssignment(format!(
                "length {} but the graph has {} nodes",
                y.0.len(),
                self.num_vars
            )));
        }
        if let Some((k, &a)) = y
            .0
            .iter()
            .enumerate()
            .find(|(k, &a)| a >= self.alphabet_sizes[*k])
        {
            return Err(Error::InvalidAssignment(format!(
                "label {a} at node {k} exceeds alphabet size {}",
                self.alphabet_sizes[k]
            )));
        }
        Ok(())
    }

    /// All of `Y` in lexicographic order (last node fastest).
    pub fn enumerate(&self, cap: u64) -> Result<Assignments> {
        Assignments::new(self.alphabet_sizes.clone(), cap)
    }

    /// All of `Y_f` in lexicographic order.
    pub fn enumerate_factor(&self, f: usize, cap: u64) -> Result<Assignments> {
        let radices = self
            .factor_nodes(f)?
            .iter()
            .map(|&k| self.alphabet_sizes[k])
            .collect();
        Assignments::new(radices, cap)
    }

    /// Node-owner map used for emission features and per-node loss terms:
    /// a node belongs to the last factor that contains it. On a chain this is
    /// the window starting at the node, and the final window owns its tail.
    /// Nodes outside every factor map to `None`.
    pub fn node_owner(&self) -> Vec<Option<usize>> {
        let mut owner = vec![None; self.num_vars];
        for (f, nodes) in self.factors.iter().enumerate() {
            for &k in nodes {
                owner[k] = Some(f);
            }
        }
        owner
    }

    /// Factor neighborhoods shifted to 1-based node indices, for reports.
    pub fn factors_one_based(&self) -> Vec<Vec<usize>> {
        self.factors
            .iter()
            .map(|nodes| nodes.iter().map(|k| k + 1).collect())
            .collect()
    }
}

/// `y = (y^1, …, y^l)` as 0-based class indices.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LabelAssignment(pub Vec<usize>);

impl LabelAssignment {
    pub fn new(labels: Vec<usize>) -> Self {
        LabelAssignment(labels)
    }

    pub fn zeros(l: usize) -> Self {
        LabelAssignment(vec![0; l])
    }

    pub fn labels(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl From<Vec<usize>> for LabelAssignment {
    fn from(v: Vec<usize>) -> Self {
        LabelAssignment(v)
    }
}

/// Mixed-radix counter over a product of finite alphabets.
#[derive(Debug, Clone)]
pub struct Odometer {
    radices: Vec<usize>,
    digits: Vec<usize>,
    done: bool,
}

impl Odometer {
    pub fn new(radices: Vec<usize>) -> Self {
        let done = radices.contains(&0);
        let digits = vec![0; radices.len()];
        Odometer {
            radices,
            digits,
            done,
        }
    }

    pub fn current(&self) -> Option<&[usize]> {
        (!self.done).then_some(self.digits.as_slice())
    }

    /// Steps to the next assignment; returns false once exhausted.
    pub fn advance(&mut self) -> bool {
        if self.done {
            return false;
        }
        for j in (0..self.digits.len()).rev() {
            self.digits[j] += 1;
            if self.digits[j] < self.radices[j] {
                return true;
            }
            self.digits[j] = 0;
        }
        self.done = true;
        false
    }
}

/// Iterator over a product label space, guarded by an enumeration cap.
#[derive(Debug, Clone)]
pub struct Assignments {
    odometer: Odometer,
    size: u128,
}

impl Assignments {
    pub fn new(radices: Vec<usize>, cap: u64) -> Result<Self> {
        let size = radices
            .iter()
            .fold(1u128, |acc, &c| acc.saturating_mul(c as u128));
        if size > cap as u128 {
            return Err(Error::EnumerationCap { size, cap });
        }
        Ok(Assignments {
            odometer: Odometer::new(radices),
            size,
        })
    }

    pub fn size(&self) -> u128 {
        self.size
    }
}

impl Iterator for Assignments {
    type Item = Vec<usize>;

    fn next(&mut self) -> Option<Vec<usize>> {
        let out = self.odometer.current()?.to_vec();
        self.odometer.advance();
        Some(out)
    }
}

/// Checks that the product of `radices` fits under `cap`.
pub(crate) fn check_cap(size: u128, cap: u64) -> Result<()> {
    if size > cap as u128 {
        Err(Error::EnumerationCap { size, cap })
    } else {
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chain_windows() {
        let g = FactorGraph::chain(5, 3, 3).unwrap();
        assert_eq!(g.factors(), &[vec![0, 1, 2], vec![1, 2, 3], vec![2, 3, 4]]);
        assert_eq!(g.factors_one_based()[0], vec![1, 2, 3]);
        assert_eq!(g.d(), 27);
        assert!(g.uniform_d());
        assert_eq!(g.chain_window(), Some(3));

        let g = FactorGraph::chain(2, 2, 2).unwrap();
        assert_eq!(g.num_factors(), 1);
        assert_eq!(g.d(), 4);

        let g = FactorGraph::chain(4, 2, 3).unwrap();
        assert_eq!(g.num_factors(), 3);
        assert_eq!(g.d(), 9);
    }

    #[test]
    fn chain_rejects_short_sequences() {
        assert!(matches!(FactorGraph::chain(2, 3, 2), Err(Error::InvalidGraph(_))));
        assert!(FactorGraph::chain(3, 1, 2).is_err());
        assert!(FactorGraph::chain(3, 2, 1).is_err());
    }

    #[test]
    fn graph_validation() {
        assert!(FactorGraph::new(vec![2, 2], vec![]).is_err());
        assert!(FactorGraph::new(vec![2, 2], vec![vec![]]).is_err());
        assert!(FactorGraph::new(vec![2, 2], vec![vec![1, 0]]).is_err());
        assert!(FactorGraph::new(vec![2, 2], vec![vec![0, 0]]).is_err());
        assert!(FactorGraph::new(vec![2, 2], vec![vec![0, 2]]).is_err());
        let g = FactorGraph::new(vec![2, 3], vec![vec![0], vec![0, 1]]).unwrap();
        assert_eq!(g.d(), 6);
        assert!(!g.uniform_d());
        assert_eq!(g.chain_window(), None);
    }

    #[test]
    fn restrict_projects_onto_factor() {
        let g = FactorGraph::new(vec![3; 4], vec![vec![0, 1], vec![1, 2], vec![2, 3]]).unwrap();
        let y = LabelAssignment::new(vec![0, 1, 2, 1]);
        assert_eq!(g.restrict(&y, 1).unwrap(), vec![1, 2]);

        let g = FactorGraph::new(vec![2; 3], vec![vec![0, 1, 2]]).unwrap();
        assert_eq!(g.restrict(&LabelAssignment::zeros(3), 0).unwrap(), vec![0, 0, 0]);

        let g = FactorGraph::new(vec![3, 2], vec![vec![1]]).unwrap();
        let y = LabelAssignment::new(vec![2, 1]);
        assert_eq!(g.restrict(&y, 0).unwrap(), vec![1]);
        assert!(matches!(g.restrict(&y, 1), Err(Error::FactorOutOfRange { .. })));
    }

    #[test]
    fn enumeration_is_lexicographic() {
        let g = FactorGraph::new(vec![2, 2], vec![vec![0, 1]]).unwrap();
        let all: Vec<_> = g.enumerate(DEFAULT_ENUMERATION_CAP).unwrap().collect();
        assert_eq!(all, vec![vec![0, 0], vec![0, 1], vec![1, 0], vec![1, 1]]);

        let g = FactorGraph::new(vec![3], vec![vec![0]]).unwrap();
        let all: Vec<_> = g.enumerate_factor(0, 10).unwrap().collect();
        assert_eq!(all, vec![vec![0], vec![1], vec![2]]);

        let g = FactorGraph::chain(3, 2, 2).unwrap();
        let mut all: Vec<_> = g.enumerate(100).unwrap().collect();
        assert_eq!(all.len(), 8);
        all.dedup();
        assert_eq!(all.len(), 8);
    }

    #[test]
    fn enumeration_cap() {
        let g = FactorGraph::chain(10, 2, 4).unwrap();
        assert!(matches!(
            g.enumerate(1000),
            Err(Error::EnumerationCap { size: 1_048_576, cap: 1000 })
        ));
    }

    #[test]
    fn factor_index_roundtrip() {
        let g = FactorGraph::new(vec![2, 3, 4], vec![vec![0, 2], vec![0, 1, 2]]).unwrap();
        for (i, partial) in g.enumerate_factor(1, 100).unwrap().enumerate() {
            assert_eq!(g.partial_index(1, &partial), i);
            assert_eq!(g.partial_from_index(1, i), partial);
            assert_eq!(g.factor_index(1, &partial), i);
        }
        assert_eq!(g.factor_index(0, &[1, 2, 3]), 7);
    }

    #[test]
    fn chain_node_owners() {
        let g = FactorGraph::chain(5, 3, 2).unwrap();
        assert_eq!(g.node_owner(), vec![Some(0), Some(1), Some(2), Some(2), Some(2)]);
        let g = FactorGraph::new(vec![2, 2, 2], vec![vec![0, 1]]).unwrap();
        assert_eq!(g.node_owner(), vec![Some(0), Some(0), None]);
    }

    #[test]
    fn graph_json_shape() {
        let g = FactorGraph::chain(3, 2, 2).unwrap();
        let s = serde_json::to_string(&g).unwrap();
        assert_eq!(s, r#"{"l":3,"alphabet":[2,2,2],"factors":[[0,1],[1,2]]}"#);
        let back: FactorGraph = serde_json::from_str(&s).unwrap();
        assert_eq!(back, g);
        assert!(serde_json::from_str::<FactorGraph>(r#"{"l":2,"alphabet":[2],"factors":[[0]]}"#)
            .is_err());
    }
}
