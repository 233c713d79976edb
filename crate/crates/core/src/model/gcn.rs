use crate::dggr::DGGraph;
use crate::numerics::{Tape, Tensor, TensorId};

use super::ModelError;

/// Symmetric-normalized graph convolution over first-order (bond) edges and
/// self-loops only: `x* = D^{-1/2} (A + I) D^{-1/2} x W`, with `D` the
/// degree matrix of the self-looped adjacency. All distances and all
/// order-2/3 edges are ignored; this is the 2D baseline.
pub fn gcn_forward(
    tape: &mut Tape,
    x: TensorId,
    graph: &DGGraph,
    weight: TensorId,
) -> Result<TensorId, ModelError> {
    let mut src = Vec::new();
    let mut dst = Vec::new();
    let mut degree = vec![0usize; graph.n_nodes];
    for e in &graph.edges {
        if e.order <= 1 {
            src.push(e.src);
            dst.push(e.dst);
            degree[e.dst] += 1;
        }
    }
    let norm: Vec<f64> = src
        .iter()
        .zip(&dst)
        .map(|(&s, &d)| 1.0 / ((degree[s] * degree[d]) as f64).sqrt())
        .collect();

    let coeffs = tape.leaf(Tensor::vector(norm));
    let transformed = tape.matmul(x, weight)?;
    let gathered = tape.gather_rows(transformed, &src)?;
    Ok(tape.segment_weighted_sum(coeffs, gathered, &dst, graph.n_nodes)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dggr::{build_dg_graph, DGConfig};
    use crate::molio::{Atom, Bond, Molecule};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::collections::BTreeMap;

    fn molecule(n: usize, bonds: &[(usize, usize)]) -> Molecule {
        Molecule {
            id: "gcn".into(),
            atoms: (0..n)
                .map(|i| Atom { z: 6, pos: [i as f64, 0.3 * i as f64, 0.0] })
                .collect(),
            bonds: bonds.iter().map(|&(i, j)| Bond { i, j, order: 1 }).collect(),
            targets: BTreeMap::new(),
        }
    }

    /// Dense normalized-adjacency product, the oracle.
    fn dense_gcn(x: &[f64], n: usize, f_in: usize, w: &[f64], f_out: usize, bonds: &[(usize, usize)]) -> Vec<f64> {
        let mut a = vec![vec![0.0; n]; n];
        for i in 0..n {
            a[i][i] = 1.0;
        }
        for &(i, j) in bonds {
            a[i][j] = 1.0;
            a[j][i] = 1.0;
        }
        let deg: Vec<f64> = (0..n).map(|i| a[i].iter().sum()).collect();
        let mut norm = vec![vec![0.0; n]; n];
        for i in 0..n {
            for j in 0..n {
                norm[i][j] = a[i][j] / (deg[i] * deg[j]).sqrt();
            }
        }
        // norm * x * w
        let mut nx = vec![0.0; n * f_in];
        for i in 0..n {
            for j in 0..n {
                for c in 0..f_in {
                    nx[i * f_in + c] += norm[i][j] * x[j * f_in + c];
                }
            }
        }
        let mut out = vec![0.0; n * f_out];
        for i in 0..n {
            for c in 0..f_out {
                for k in 0..f_in {
                    out[i * f_out + c] += nx[i * f_in + k] * w[k * f_out + c];
                }
            }
        }
        out
    }

    #[test]
    fn two_connected_nodes_identity_weight() {
        let m = molecule(2, &[(0, 1)]);
        let features = Tensor::matrix(2, 1, vec![1.0, 1.0]);
        let graph = build_dg_graph(&m, features, &DGConfig::default()).unwrap();
        let mut tape = Tape::new();
        let x = tape.leaf(graph.node_features.clone());
        let w = tape.leaf(Tensor::matrix(1, 1, vec![1.0]));
        let out = gcn_forward(&mut tape, x, &graph, w).unwrap();
        assert!((tape.data(out)[0] - 1.0).abs() < 1e-15);
        assert!((tape.data(out)[1] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn isolated_node_unchanged_by_identity() {
        let m = molecule(1, &[]);
        let features = Tensor::matrix(1, 2, vec![0.7, -0.3]);
        let graph = build_dg_graph(&m, features, &DGConfig::default()).unwrap();
        let mut tape = Tape::new();
        let x = tape.leaf(graph.node_features.clone());
        let w = tape.leaf(Tensor::matrix(2, 2, vec![1.0, 0.0, 0.0, 1.0]));
        let out = gcn_forward(&mut tape, x, &graph, w).unwrap();
        assert_eq!(tape.data(out), &[0.7, -0.3]);
    }

    #[test]
    fn matches_dense_oracle_on_random_graphs() {
        let mut rng = ChaCha8Rng::seed_from_u64(404);
        for _ in 0..20 {
            let n = 6;
            let mut bonds: Vec<(usize, usize)> = (1..n).map(|i| (rng.gen_range(0..i), i)).collect();
            if rng.gen_bool(0.5) {
                let (i, j) = (rng.gen_range(0..n), rng.gen_range(0..n));
                if i != j && !bonds.contains(&(i.min(j), i.max(j))) {
                    bonds.push((i.min(j), i.max(j)));
                }
            }
            let (f_in, f_out) = (3, 2);
            let x_data: Vec<f64> = (0..n * f_in).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let w_data: Vec<f64> = (0..f_in * f_out).map(|_| rng.gen_range(-1.0..1.0)).collect();

            let m = molecule(n, &bonds);
            // order 3 on purpose: gcn_forward must ignore higher-order edges
            let graph =
                build_dg_graph(&m, Tensor::matrix(n, f_in, x_data.clone()), &DGConfig::default())
                    .unwrap();
            let mut tape = Tape::new();
            let x = tape.leaf(graph.node_features.clone());
            let w = tape.leaf(Tensor::matrix(f_in, f_out, w_data.clone()));
            let out = gcn_forward(&mut tape, x, &graph, w).unwrap();

            let expected = dense_gcn(&x_data, n, f_in, &w_data, f_out, &bonds);
            for (a, b) in tape.data(out).iter().zip(&expected) {
                assert!((a - b).abs() < 1e-10, "{a} vs {b}");
            }
        }
    }
}
