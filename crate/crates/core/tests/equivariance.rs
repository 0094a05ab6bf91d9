//! Relabeling nodes permutes outputs and changes nothing else.

use std::rc::Rc;

use rand::seq::SliceRandom;
use rand::Rng;

use hypegt_core::graph::{Graph, LaplacianKind};
use hypegt_core::manifold::ManifoldSpec;
use hypegt_core::models::gcn_layer;
use hypegt_core::nn::{Linear, NormKind, ParamStore};
use hypegt_core::pe::{lap_pe, rw_pe};
use hypegt_core::rng::SeedStreams;
use hypegt_core::verify::{gt_permutation_error, hgcn_permutation_error, random_connected_graph, random_matrix};
use hypegt_core::{Tape, Tensor};

fn permute_rows(x: &Tensor, perm: &[usize]) -> Tensor {
    let mut out = Tensor::zeros(x.rows(), x.cols());
    for i in 0..x.rows() {
        out.row_mut(perm[i]).copy_from_slice(x.row(i));
    }
    out
}

#[test]
fn gt_layer_is_permutation_equivariant() {
    let mut rng = SeedStreams::new(21).stream("perm");
    for t in 0..20 {
        let n = rng.random_range(2..=32);
        let norm = if t % 2 == 0 { NormKind::Batch } else { NormKind::Layer };
        let e = gt_permutation_error(&mut rng, n, norm).unwrap();
        assert!(e <= 1e-10, "n={n}: {e}");
    }
}

#[test]
fn hgcn_is_permutation_equivariant() {
    let mut rng = SeedStreams::new(22).stream("perm");
    for c in [0.5, 1.0, 2.0] {
        for spec in [ManifoldSpec::hyperboloid(c).unwrap(), ManifoldSpec::poincare(c).unwrap()] {
            for _ in 0..4 {
                let n = rng.random_range(2..=32);
                let e = hgcn_permutation_error(&mut rng, spec, n).unwrap();
                assert!(e <= 1e-10, "{spec:?} n={n}: {e}");
            }
        }
    }
}

#[test]
fn gcn_layer_is_permutation_equivariant() {
    let mut rng = SeedStreams::new(23).stream("perm");
    for _ in 0..10 {
        let n = rng.random_range(2..=32);
        let g = random_connected_graph(&mut rng, n, 0.2);
        let mut perm: Vec<usize> = (0..n).collect();
        perm.shuffle(&mut rng);
        let gp = g.permute(&perm).unwrap();
        let mut store = ParamStore::new();
        let lin = Linear::new(&mut store, "w", 3, 4, true, &mut rng);
        store.values_mut()[1] = random_matrix(&mut rng, 1, 4, 0.5);
        let x = random_matrix(&mut rng, n, 3, 1.0);
        let tape = Tape::new();
        let p = store.bind_frozen(&tape);
        let a = gcn_layer(tape.constant(x.clone()), &Rc::new(g.gcn_norm()), &p, &lin).unwrap().value();
        let b = gcn_layer(tape.constant(permute_rows(&x, &perm)), &Rc::new(gp.gcn_norm()), &p, &lin).unwrap().value();
        assert!(permute_rows(&a, &perm).max_abs_diff(&b) <= 1e-12);
    }
}

#[test]
fn initial_encodings_follow_relabeling() {
    let mut rng = SeedStreams::new(24).stream("perm");
    for _ in 0..10 {
        let n = rng.random_range(3..=24);
        let g: Graph = random_connected_graph(&mut rng, n, 0.3);
        let mut perm: Vec<usize> = (0..n).collect();
        perm.shuffle(&mut rng);
        let gp = g.permute(&perm).unwrap();
        let rw = rw_pe(&g, 5).unwrap();
        assert!(permute_rows(&rw, &perm).max_abs_diff(&rw_pe(&gp, 5).unwrap()) <= 1e-12);
        // eigenvectors are only defined up to sign and rotation; compare projectors
        let k = 1;
        let a = lap_pe(&g, k, LaplacianKind::Sym, false).unwrap();
        let b = lap_pe(&gp, k, LaplacianKind::Sym, false).unwrap();
        let pa = permute_rows(&a, &perm);
        let proj = |u: &Tensor| u.matmul_nt(u).unwrap();
        let l = g.sym_norm_laplacian().unwrap();
        let eig = hypegt_core::eigen::sym_eigen(&l).unwrap();
        if eig.values[2] - eig.values[1] > 1e-6 {
            assert!(proj(&pa).max_abs_diff(&proj(&b)) <= 1e-8);
        }
    }
}
