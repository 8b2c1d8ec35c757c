//! Areal maps: undirected neighbor structure, boundary lengths, and the
//! directed acyclic ordering that the DAGAR precision is built on.
//!
//! Areas are 0-indexed internally; file formats and labels are 1-indexed and
//! converted at the I/O boundary.

use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::Result;

/// Undirected adjacency over `n_areas` regions. Immutable after construction.
#[derive(Debug, Clone, PartialEq)]
pub struct ArealMap {
    n_areas: usize,
    neighbors: Vec<Vec<usize>>,
    n_edges: usize,
    n_components: usize,
    labels: Option<Vec<String>>,
}

impl ArealMap {
    /// Build from undirected edge rows with 1-indexed areas. Duplicates and
    /// reversed pairs are tolerated; self-loops and index 0 are rejected.
    /// `n_areas` defaults to the largest index seen when not declared.
    pub fn from_neighbor_list(rows: &[(usize, usize)], n_areas: Option<usize>) -> Result<Self> {
        let mut max_seen = 0;
        for &(a, b) in rows {
            if a == 0 || b == 0 {
                return Err(Error::InvalidMap(format!(
                    "area indices are 1-based, got edge ({a}, {b})"
                )));
            }
            if a == b {
                return Err(Error::InvalidMap(format!("self-loop on area {a}")));
            }
            max_seen = max_seen.max(a).max(b);
        }
        let n = match n_areas {
            Some(n) => {
                if n < max_seen {
                    return Err(Error::InvalidMap(format!(
                        "declared {n} areas but edge references area {max_seen}"
                    )));
                }
                n
            }
            None => max_seen,
        };
        if n == 0 {
            return Err(Error::InvalidMap("map must contain at least one area".into()));
        }
        let mut neighbors = vec![Vec::new(); n];
        for &(a, b) in rows {
            let (i, j) = (a - 1, b - 1);
            if !neighbors[i].contains(&j) {
                neighbors[i].push(j);
                neighbors[j].push(i);
            }
        }
        for list in &mut neighbors {
            list.sort_unstable();
        }
        Ok(Self::from_sorted_lists(neighbors))
    }

    /// Rook-adjacency lattice with `rows * cols` areas, numbered row-major.
    pub fn grid(rows: usize, cols: usize) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::InvalidMap("grid dimensions must be positive".into()));
        }
        let n = rows * cols;
        let mut neighbors = vec![Vec::new(); n];
        for r in 0..rows {
            for c in 0..cols {
                let i = r * cols + c;
                if c + 1 < cols {
                    neighbors[i].push(i + 1);
                    neighbors[i + 1].push(i);
                }
                if r + 1 < rows {
                    neighbors[i].push(i + cols);
                    neighbors[i + cols].push(i);
                }
            }
        }
        for list in &mut neighbors {
            list.sort_unstable();
        }
        Ok(Self::from_sorted_lists(neighbors))
    }

    fn from_sorted_lists(neighbors: Vec<Vec<usize>>) -> Self {
        let n = neighbors.len();
        let n_edges = neighbors.iter().map(Vec::len).sum::<usize>() / 2;
        let n_components = count_components(&neighbors);
        Self {
            n_areas: n,
            neighbors,
            n_edges,
            n_components,
            labels: None,
        }
    }

    pub fn with_labels(mut self, labels: Vec<String>) -> Result<Self> {
        if labels.len() != self.n_areas {
            return Err(Error::InvalidMap(format!(
                "{} labels for {} areas",
                labels.len(),
                self.n_areas
            )));
        }
        self.labels = Some(labels);
        Ok(self)
    }

    pub fn n_areas(&self) -> usize {
        self.n_areas
    }

    pub fn n_edges(&self) -> usize {
        self.n_edges
    }

    pub fn n_components(&self) -> usize {
        self.n_components
    }

    pub fn neighbors(&self, area: usize) -> &[usize] {
        &self.neighbors[area]
    }

    pub fn degree(&self, area: usize) -> usize {
        self.neighbors[area].len()
    }

    pub fn are_neighbors(&self, a: usize, b: usize) -> bool {
        self.neighbors[a].binary_search(&b).is_ok()
    }

    pub fn labels(&self) -> Option<&[String]> {
        self.labels.as_deref()
    }

    /// Undirected edge list with i < j, in lexicographic order.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::with_capacity(self.n_edges);
        for i in 0..self.n_areas {
            for &j in &self.neighbors[i] {
                if i < j {
                    out.push((i, j));
                }
            }
        }
        out
    }

    /// Boundary length of an area set: the number of neighbor relations that
    /// cross from the set to the rest of the map.
    pub fn boundary_length_of_set(&self, in_set: &[bool]) -> usize {
        debug_assert_eq!(in_set.len(), self.n_areas);
        let mut total = 0;
        for i in 0..self.n_areas {
            if in_set[i] {
                total += self.neighbors[i].iter().filter(|&&j| !in_set[j]).count();
            }
        }
        total
    }
}

fn count_components(neighbors: &[Vec<usize>]) -> usize {
    let n = neighbors.len();
    let mut seen = vec![false; n];
    let mut count = 0;
    let mut stack = Vec::new();
    for start in 0..n {
        if seen[start] {
            continue;
        }
        count += 1;
        seen[start] = true;
        stack.push(start);
        while let Some(i) = stack.pop() {
            for &j in &neighbors[i] {
                if !seen[j] {
                    seen[j] = true;
                    stack.push(j);
                }
            }
        }
    }
    count
}

/// Rule selecting the DAG ordering. DAGAR results depend on the ordering, so
/// the rule is recorded in output metadata rather than hidden.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OrderingRule {
    ByIndex,
    MaxDegreeFirst,
    /// Explicit permutation of 1-indexed areas, first-to-last.
    UserPermutation(Vec<usize>),
}

impl Default for OrderingRule {
    fn default() -> Self {
        OrderingRule::ByIndex
    }
}

/// A permutation of the areas together with, for each area, the subset of its
/// undirected neighbors that precede it in the permutation.
#[derive(Debug, Clone, PartialEq)]
pub struct DagOrdering {
    order: Vec<usize>,
    position: Vec<usize>,
    directed: Vec<Vec<usize>>,
    rule: OrderingRule,
}

impl DagOrdering {
    /// Derive the ordering for `map` under `rule`. Components are ordered one
    /// after another (each component owns a contiguous prefix slice), so an
    /// island map never interleaves with the mainland.
    pub fn new(map: &ArealMap, rule: OrderingRule) -> Result<Self> {
        let n = map.n_areas();
        let order: Vec<usize> = match &rule {
            OrderingRule::UserPermutation(perm) => {
                if perm.len() != n {
                    return Err(Error::InvalidMap(format!(
                        "permutation length {} does not match {} areas",
                        perm.len(),
                        n
                    )));
                }
                let mut seen = vec![false; n];
                let mut order = Vec::with_capacity(n);
                for &p in perm {
                    if p == 0 || p > n || seen[p - 1] {
                        return Err(Error::InvalidMap(
                            "user permutation is not a bijection over the areas".into(),
                        ));
                    }
                    seen[p - 1] = true;
                    order.push(p - 1);
                }
                order
            }
            OrderingRule::ByIndex => component_ordered(map, |areas| {
                let mut v = areas.to_vec();
                v.sort_unstable();
                v
            }),
            OrderingRule::MaxDegreeFirst => component_ordered(map, |areas| {
                let mut v = areas.to_vec();
                // Stable on index for deterministic ties.
                v.sort_by_key(|&a| (std::cmp::Reverse(map.degree(a)), a));
                v
            }),
        };

        let mut position = vec![0usize; n];
        for (pos, &a) in order.iter().enumerate() {
            position[a] = pos;
        }
        let mut directed = vec![Vec::new(); n];
        for a in 0..n {
            for &b in map.neighbors(a) {
                if position[b] < position[a] {
                    directed[a].push(b);
                }
            }
            directed[a].sort_unstable();
        }
        Ok(Self {
            order,
            position,
            directed,
            rule,
        })
    }

    pub fn n_areas(&self) -> usize {
        self.order.len()
    }

    /// Areas in permutation order, first to last.
    pub fn order(&self) -> &[usize] {
        &self.order
    }

    /// Position of an area in the permutation (0-based).
    pub fn position(&self, area: usize) -> usize {
        self.position[area]
    }

    /// Directed neighbors of `area`: its undirected neighbors that precede it.
    pub fn directed_neighbors(&self, area: usize) -> &[usize] {
        &self.directed[area]
    }

    pub fn n_directed(&self, area: usize) -> usize {
        self.directed[area].len()
    }

    pub fn rule(&self) -> &OrderingRule {
        &self.rule
    }
}

/// Order areas component by component, applying `sort_component` within each.
/// Components are visited in order of their smallest area index.
fn component_ordered<F>(map: &ArealMap, sort_component: F) -> Vec<usize>
where
    F: Fn(&[usize]) -> Vec<usize>,
{
    let n = map.n_areas();
    let mut component = vec![usize::MAX; n];
    let mut comps: Vec<Vec<usize>> = Vec::new();
    let mut stack = Vec::new();
    for start in 0..n {
        if component[start] != usize::MAX {
            continue;
        }
        let id = comps.len();
        component[start] = id;
        stack.push(start);
        let mut members = vec![start];
        while let Some(i) = stack.pop() {
            for &j in map.neighbors(i) {
                if component[j] == usize::MAX {
                    component[j] = id;
                    stack.push(j);
                    members.push(j);
                }
            }
        }
        comps.push(members);
    }
    let mut order = Vec::with_capacity(n);
    for members in comps {
        order.extend(sort_component(&members));
    }
    order
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn neighbor_list_minimal_pair() {
        let map = ArealMap::from_neighbor_list(&[(1, 2)], None).unwrap();
        assert_eq!(map.n_areas(), 2);
        assert!(map.are_neighbors(0, 1));
        assert_eq!(map.n_edges(), 1);
    }

    #[test]
    fn neighbor_list_dedups_and_symmetrizes() {
        let map = ArealMap::from_neighbor_list(&[(1, 2), (2, 1), (2, 3)], None).unwrap();
        assert_eq!(map.n_areas(), 3);
        let degrees: Vec<usize> = (0..3).map(|i| map.degree(i)).collect();
        assert_eq!(degrees, vec![1, 2, 1]);
    }

    #[test]
    fn neighbor_list_rejects_self_loop() {
        assert!(matches!(
            ArealMap::from_neighbor_list(&[(1, 1)], None),
            Err(Error::InvalidMap(_))
        ));
    }

    #[test]
    fn neighbor_list_rejects_zero_index() {
        assert!(ArealMap::from_neighbor_list(&[(0, 1)], None).is_err());
    }

    #[test]
    fn grid_edge_counts() {
        assert_eq!(ArealMap::grid(1, 2).unwrap().n_edges(), 1);
        assert_eq!(ArealMap::grid(2, 2).unwrap().n_edges(), 4);
        // rows*(cols-1) + cols*(rows-1)
        assert_eq!(ArealMap::grid(3, 3).unwrap().n_edges(), 12);
        assert!(ArealMap::grid(0, 3).is_err());
    }

    #[test]
    fn grid_components() {
        assert_eq!(ArealMap::grid(3, 4).unwrap().n_components(), 1);
        let disconnected = ArealMap::from_neighbor_list(&[(1, 2), (3, 4)], None).unwrap();
        assert_eq!(disconnected.n_components(), 2);
    }

    #[test]
    fn ordering_path_by_index() {
        let map = ArealMap::from_neighbor_list(&[(1, 2), (2, 3)], None).unwrap();
        let ord = DagOrdering::new(&map, OrderingRule::ByIndex).unwrap();
        assert!(ord.directed_neighbors(0).is_empty());
        assert_eq!(ord.directed_neighbors(1), &[0]);
        assert_eq!(ord.directed_neighbors(2), &[1]);
    }

    #[test]
    fn ordering_single_area() {
        let map = ArealMap::from_neighbor_list(&[], Some(1)).unwrap();
        let ord = DagOrdering::new(&map, OrderingRule::ByIndex).unwrap();
        assert!(ord.directed_neighbors(0).is_empty());
    }

    #[test]
    fn ordering_2x2_grid_counts() {
        let map = ArealMap::grid(2, 2).unwrap();
        let ord = DagOrdering::new(&map, OrderingRule::ByIndex).unwrap();
        let counts: Vec<usize> = (0..4).map(|i| ord.n_directed(i)).collect();
        assert_eq!(counts, vec![0, 1, 1, 2]);
    }

    #[test]
    fn ordering_rejects_bad_permutation() {
        let map = ArealMap::grid(2, 2).unwrap();
        assert!(DagOrdering::new(&map, OrderingRule::UserPermutation(vec![1, 1, 2, 3])).is_err());
        assert!(DagOrdering::new(&map, OrderingRule::UserPermutation(vec![1, 2])).is_err());
    }

    #[test]
    fn ordering_user_permutation_respected() {
        let map = ArealMap::from_neighbor_list(&[(1, 2), (2, 3)], None).unwrap();
        let ord = DagOrdering::new(&map, OrderingRule::UserPermutation(vec![3, 2, 1])).unwrap();
        assert_eq!(ord.order(), &[2, 1, 0]);
        assert_eq!(ord.directed_neighbors(0), &[1]);
        assert_eq!(ord.directed_neighbors(1), &[2]);
        assert!(ord.directed_neighbors(2).is_empty());
    }

    #[test]
    fn disconnected_components_get_contiguous_prefixes() {
        // areas {1,2} and {3,4,5} in separate components
        let map = ArealMap::from_neighbor_list(&[(1, 2), (3, 4), (4, 5)], None).unwrap();
        let ord = DagOrdering::new(&map, OrderingRule::MaxDegreeFirst).unwrap();
        // First component {0,1} then {2,3,4} with area 3 (degree 2) first.
        assert_eq!(ord.order()[..2], [0, 1]);
        assert_eq!(ord.order()[2], 3);
    }

    fn arbitrary_edges(n: usize) -> impl Strategy<Value = Vec<(usize, usize)>> {
        proptest::collection::vec((1..=n, 1..=n), 0..(2 * n)).prop_map(|pairs| {
            pairs
                .into_iter()
                .filter(|(a, b)| a != b)
                .collect::<Vec<_>>()
        })
    }

    proptest! {
        #[test]
        fn directed_counts_sum_to_edge_count(edges in arbitrary_edges(9)) {
            let map = ArealMap::from_neighbor_list(&edges, Some(9)).unwrap();
            for rule in [OrderingRule::ByIndex, OrderingRule::MaxDegreeFirst] {
                let ord = DagOrdering::new(&map, rule).unwrap();
                let total: usize = (0..9).map(|i| ord.n_directed(i)).sum();
                prop_assert_eq!(total, map.n_edges());
            }
        }

        #[test]
        fn directed_neighbors_precede(edges in arbitrary_edges(8)) {
            let map = ArealMap::from_neighbor_list(&edges, Some(8)).unwrap();
            let ord = DagOrdering::new(&map, OrderingRule::ByIndex).unwrap();
            for a in 0..8 {
                for &b in ord.directed_neighbors(a) {
                    prop_assert!(ord.position(b) < ord.position(a));
                    prop_assert!(map.are_neighbors(a, b));
                }
            }
        }
    }
}
