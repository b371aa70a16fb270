//! Anticommutation graphs and the search for adjacency-preserving images
//! of a generator set.

use rayon::prelude::*;

use crate::f2::Echelon;
use crate::machine::GeneratorSet;
use crate::pauli::PauliLabel;

#[derive(Clone, Debug, PartialEq)]
pub struct CommGraph {
    vertices: Vec<PauliLabel>,
    adjacency: Vec<Vec<bool>>,
}

/// Edge between two labels iff they anticommute.
pub fn build_graph(labels: &[PauliLabel]) -> CommGraph {
    let adjacency = labels
        .iter()
        .map(|a| labels.iter().map(|b| a.anticommutes(b)).collect())
        .collect();
    CommGraph {
        vertices: labels.to_vec(),
        adjacency,
    }
}

impl CommGraph {
    pub fn vertices(&self) -> &[PauliLabel] {
        &self.vertices
    }

    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    pub fn adjacent(&self, u: usize, v: usize) -> bool {
        self.adjacency[u][v]
    }

    pub fn degree(&self, u: usize) -> usize {
        self.adjacency[u].iter().filter(|&&e| e).count()
    }

    pub fn index_of(&self, label: &PauliLabel) -> Option<usize> {
        self.vertices.iter().position(|v| v == label)
    }

    /// Edges `(u, v)` with `u < v`.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let n = self.len();
        (0..n)
            .flat_map(|u| (u + 1..n).map(move |v| (u, v)))
            .filter(|&(u, v)| self.adjacency[u][v])
            .collect()
    }

    /// One `u v` line per edge, vertices named by their Pauli strings.
    pub fn to_edge_list(&self) -> String {
        let mut out = String::new();
        for (u, v) in self.edges() {
            out.push_str(&format!("{} {}\n", self.vertices[u], self.vertices[v]));
        }
        out
    }
}

/// All injective maps from the generators of `gen` onto graph vertices that
/// preserve adjacency among the generators and have an F2-independent
/// image. Each map is a list of vertex indices, one per generator, in
/// lexicographic order.
pub fn generator_images(graph: &CommGraph, gen: &GeneratorSet) -> Vec<Vec<usize>> {
    let gens = gen.generators();
    let k = gens.len();
    if k == 0 {
        return vec![Vec::new()];
    }
    let g_adj: Vec<Vec<bool>> = gens
        .iter()
        .map(|a| gens.iter().map(|b| a.anticommutes(b)).collect())
        .collect();
    let g_deg: Vec<usize> = g_adj
        .iter()
        .map(|row| row.iter().filter(|&&e| e).count())
        .collect();
    let candidates: Vec<Vec<usize>> = (0..k)
        .map(|i| {
            (0..graph.len())
                .filter(|&v| graph.degree(v) >= g_deg[i])
                .collect()
        })
        .collect();
    let search = Search {
        graph,
        g_adj: &g_adj,
        candidates: &candidates,
        k,
    };
    candidates[0]
        .par_iter()
        .map(|&root| {
            let mut out = Vec::new();
            let mut echelon = Echelon::new();
            if echelon.insert(graph.vertices[root].to_bits(), 0) {
                let mut assigned = vec![root];
                search.extend(&mut assigned, &mut echelon, &mut out);
            }
            out
        })
        .collect::<Vec<_>>()
        .into_iter()
        .flatten()
        .collect()
}

struct Search<'a> {
    graph: &'a CommGraph,
    g_adj: &'a [Vec<bool>],
    candidates: &'a [Vec<usize>],
    k: usize,
}

impl Search<'_> {
    fn extend(&self, assigned: &mut Vec<usize>, echelon: &mut Echelon, out: &mut Vec<Vec<usize>>) {
        let i = assigned.len();
        if i == self.k {
            out.push(assigned.clone());
            return;
        }
        for &v in &self.candidates[i] {
            if assigned.contains(&v) {
                continue;
            }
            let consistent = assigned
                .iter()
                .enumerate()
                .all(|(j, &u)| self.graph.adjacent(u, v) == self.g_adj[i][j]);
            if !consistent || !echelon.insert(self.graph.vertices[v].to_bits(), 0) {
                continue;
            }
            assigned.push(v);
            self.extend(assigned, echelon, out);
            assigned.pop();
            echelon.pop();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::machine::find_generator;

    fn labels(s: &str) -> Vec<PauliLabel> {
        s.split_whitespace().map(|t| t.parse().unwrap()).collect()
    }

    fn brute_force(graph: &CommGraph, gen: &GeneratorSet) -> Vec<Vec<usize>> {
        fn rec(
            graph: &CommGraph,
            gens: &[PauliLabel],
            cur: &mut Vec<usize>,
            out: &mut Vec<Vec<usize>>,
        ) {
            if cur.len() == gens.len() {
                let ok_adj = (0..gens.len()).all(|a| {
                    (0..gens.len()).all(|b| {
                        graph.adjacent(cur[a], cur[b]) == gens[a].anticommutes(&gens[b])
                    })
                });
                let ok_indep = (1u32..(1 << gens.len())).all(|s| {
                    let x = (0..gens.len())
                        .filter(|i| s >> i & 1 == 1)
                        .fold(PauliLabel::identity(gens[0].n()), |acc, i| {
                            acc ^ graph.vertices()[cur[i]]
                        });
                    !x.is_identity()
                });
                if ok_adj && ok_indep {
                    out.push(cur.clone());
                }
                return;
            }
            for v in 0..graph.len() {
                if !cur.contains(&v) {
                    cur.push(v);
                    rec(graph, gens, cur, out);
                    cur.pop();
                }
            }
        }
        let mut out = Vec::new();
        rec(graph, gen.generators(), &mut Vec::new(), &mut out);
        out
    }

    #[test]
    fn h1_graph_edges() {
        let d = labels("XI ZI IX IZ ZZ");
        let g = build_graph(&d);
        assert_eq!(g.edges(), vec![(0, 1), (0, 4), (2, 3), (2, 4)]);
        assert_eq!(g.to_edge_list(), "XI ZI\nXI ZZ\nIX IZ\nIX ZZ\n");
        assert!((0..5).all(|v| !g.adjacent(v, v)));
    }

    #[test]
    fn empty_and_single() {
        let g = build_graph(&[]);
        assert!(g.is_empty() && g.edges().is_empty());
        let d = labels("X");
        let gen = find_generator(&d).unwrap();
        assert_eq!(generator_images(&build_graph(&d), &gen), vec![vec![0]]);
    }

    #[test]
    fn h1_images_match_brute_force() {
        let d = labels("XI ZI IX IZ ZZ");
        let g = build_graph(&d);
        let gen = find_generator(&d).unwrap();
        let images = generator_images(&g, &gen);
        assert_eq!(images, brute_force(&g, &gen));
        assert_eq!(images[0], vec![0, 1, 2, 3]);
        assert!(images.contains(&vec![2, 3, 0, 1]));
    }

    #[test]
    fn h2_n3_images_match_brute_force() {
        let d = labels("XII ZII IXI IZI IIX IIZ ZZI ZIZ IZZ");
        let g = build_graph(&d);
        let gen = find_generator(&d).unwrap();
        let images = generator_images(&g, &gen);
        assert_eq!(images, brute_force(&g, &gen));
        assert!(images.contains(&(0..6).collect::<Vec<_>>()));
    }

    #[test]
    fn h4_visible_graph() {
        let d = labels("XI ZI IX IZ ZZ XX");
        let g = build_graph(&d);
        assert_eq!(g.len(), 6);
        assert_eq!(g.edges().len(), 6);
    }
}
