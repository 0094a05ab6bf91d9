//! Finite-difference checks through every layer type.

use hypegt_core::gradcheck::grad_check;
use hypegt_core::manifold::{exp_o, log_o, tan_proj, ManifoldSpec};
use hypegt_core::rng::SeedStreams;
use hypegt_core::verify::{layer_grad_errors, FD_STEP, GRAD_TOL};
use hypegt_core::Tensor;

#[test]
fn every_layer_passes_central_differences() {
    for seed in [0, 1] {
        let errors = layer_grad_errors(&SeedStreams::new(seed)).unwrap();
        let names: Vec<&str> = errors.iter().map(|(n, _)| n.as_str()).collect();
        for expected in [
            "hnn_forward",
            "hgcn_forward",
            "fuse_v1",
            "fuse_v2",
            "gt_layer",
            "gcn_layer",
            "gcnii_layer",
            "cross_entropy",
            "jknet_forward",
        ] {
            assert!(names.contains(&expected), "missing {expected}");
        }
        for (name, e) in errors {
            assert!(e <= GRAD_TOL, "{name}: relative error {e}");
        }
    }
}

#[test]
fn exp_log_maps_are_differentiable_at_the_origin() {
    for spec in [ManifoldSpec::hyperboloid(1.5).unwrap(), ManifoldSpec::poincare(0.7).unwrap()] {
        for x in [Tensor::zeros(2, 3), Tensor::from_rows(&[&[1e-7, 0.0, -2e-7], &[0.4, -0.2, 0.9]])] {
            let e = grad_check(
                |_, v| {
                    let h = exp_o(spec, tan_proj(spec, v)?)?;
                    Ok(log_o(&h)?.square().sum().add(h.points.sum())?)
                },
                &x,
                FD_STEP,
            )
            .unwrap();
            assert!(e <= GRAD_TOL, "{spec:?}: {e}");
        }
    }
}
