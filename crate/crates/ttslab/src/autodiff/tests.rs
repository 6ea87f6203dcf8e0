use super::functional::*;
use super::*;
use ndarray::{ArrayD, IxDyn};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn randn(shape: &[usize], rng: &mut ChaCha8Rng) -> ArrayD<f64> {
    ArrayD::from_shape_fn(IxDyn(shape), |_| rng.gen_range(-1.0..1.0))
}

/// Central-difference check of `grad` against a scalar-valued builder that
/// reconstructs the expression from raw arrays.
fn check_grads<F>(build: F, inputs: &[ArrayD<f64>], tol: f64)
where
    F: Fn(&Graph, &[Var]) -> Var,
{
    let g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|a| g.leaf(a.clone())).collect();
    let out = build(&g, &vars);
    let grads = grad(&out, &vars);

    let h = 1e-5;
    for (i, input) in inputs.iter().enumerate() {
        let analytic = grads[i].as_ref().expect("missing grad").value();
        for (j, _) in input.iter().enumerate() {
            let mut plus = inputs.to_vec();
            let mut minus = inputs.to_vec();
            plus[i].as_slice_mut().unwrap()[j] += h;
            minus[i].as_slice_mut().unwrap()[j] -= h;
            let eval = |arrs: &[ArrayD<f64>]| {
                let g2 = Graph::new();
                let vs: Vec<Var> = arrs.iter().map(|a| g2.leaf(a.clone())).collect();
                build(&g2, &vs).scalar_value()
            };
            let fd = (eval(&plus) - eval(&minus)) / (2.0 * h);
            let a = analytic.as_slice().unwrap()[j];
            let denom = fd.abs().max(a.abs()).max(1e-6);
            assert!(
                (a - fd).abs() / denom < tol,
                "input {i} elem {j}: analytic {a} vs fd {fd}"
            );
        }
    }
}

#[test]
fn grad_elementwise_chain() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let a = randn(&[3, 4], &mut rng);
    let b = randn(&[3, 4], &mut rng).mapv(|v| v + 2.5); // keep positive for ln/sqrt
    check_grads(
        |_, v| {
            let t = v[0].mul(&v[1]).tanh().add(&v[1].sqrt().ln());
            t.exp().sub(&v[0].powf(2.0)).sum_all()
        },
        &[a, b],
        1e-5,
    );
}

#[test]
fn grad_broadcast_ops() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let a = randn(&[2, 3, 4], &mut rng);
    let b = randn(&[4], &mut rng);
    let c = randn(&[3, 1], &mut rng);
    check_grads(
        |_, v| v[0].add(&v[1]).mul(&v[2]).square().mean_all(),
        &[a, b, c],
        1e-5,
    );
}

#[test]
fn grad_matmul_batched() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let a = randn(&[2, 3, 4], &mut rng);
    let w = randn(&[4, 5], &mut rng);
    let b = randn(&[2, 5, 3], &mut rng);
    check_grads(
        |_, v| v[0].matmul(&v[1]).matmul(&v[2]).sum_all(),
        &[a, w, b],
        1e-5,
    );
}

#[test]
fn grad_shape_ops() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let a = randn(&[2, 6], &mut rng);
    let b = randn(&[2, 4], &mut rng);
    check_grads(
        |g, v| {
            let r = v[0].reshape(&[2, 3, 2]).permute(&[1, 0, 2]).reshape(&[3, 4]);
            let s = v[1].slice_axis(1, 1, 4).pad_zero(0, 0, 1);
            g.concat(&[r, s], 1).square().sum_all()
        },
        &[a, b],
        1e-5,
    );
}

#[test]
fn grad_unfold_fold_maxpool() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let a = randn(&[2, 3, 12], &mut rng);
    check_grads(
        |_, v| {
            let u = v[0].unfold_last(5, 1); // (2,3,8,5)
            let f = u.square().fold_last(5, 1, 12);
            f.maxpool_last(2).sum_all()
        },
        &[a],
        1e-5,
    );
}

#[test]
fn grad_softmax_and_friends() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let x = randn(&[4, 7], &mut rng);
    check_grads(|_, v| softmax(&v[0]).powf(2.0).sum_all(), &[x.clone()], 1e-5);
    check_grads(|_, v| gelu(&v[0]).sum_all(), &[x.clone()], 1e-5);
    check_grads(|_, v| sigmoid(&v[0]).square().sum_all(), &[x.clone()], 1e-5);
    let onehot = {
        let mut m = ArrayD::zeros(IxDyn(&[4, 7]));
        for i in 0..4 {
            m[[i, (i * 2) % 7]] = 1.0;
        }
        m
    };
    check_grads(
        |g, v| nll_from_logits(&v[0], &g.constant(onehot.clone())),
        &[x],
        1e-5,
    );
}

#[test]
fn grad_layer_norm() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let x = randn(&[3, 5], &mut rng);
    let gamma = randn(&[5], &mut rng);
    let beta = randn(&[5], &mut rng);
    check_grads(
        |_, v| layer_norm(&v[0], &v[1], &v[2], 1e-5).square().sum_all(),
        &[x, gamma, beta],
        1e-4,
    );
}

#[test]
fn double_backward_through_input_gradient() {
    // f(w) = || d/dx (x^T w)^2 ||^2 evaluated at fixed x: the inner grad is
    // 2 (x.w) w, so f(w) = 4 (x.w)^2 ||w||^2, df/dw checkable by fd.
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let x0 = randn(&[3], &mut rng);
    let w0 = randn(&[3], &mut rng);
    check_grads(
        |g, v| {
            let x = g.leaf(x0.clone());
            let y = x.mul(&v[0]).sum_all().square();
            let gx = grad(&y, &[x.clone()])[0].clone().unwrap();
            gx.square().sum_all()
        },
        &[w0.clone()],
        1e-4,
    );
    // Closed form cross-check.
    let g = Graph::new();
    let w = g.leaf(w0.clone());
    let x = g.leaf(x0.clone());
    let y = x.mul(&w).sum_all().square();
    let gx = grad(&y, &[x])[0].clone().unwrap();
    let f = gx.square().sum_all().scalar_value();
    let dot: f64 = (&x0 * &w0).sum();
    let expect = 4.0 * dot * dot * w0.mapv(|v| v * v).sum();
    assert!((f - expect).abs() < 1e-9 * expect.abs().max(1.0));
}

#[test]
fn grad_accumulates_over_reuse() {
    let g = Graph::new();
    let x = g.leaf(ArrayD::from_elem(IxDyn(&[2]), 3.0));
    let y = x.mul(&x).add(&x).sum_all(); // dy/dx = 2x + 1 = 7
    let gx = grad(&y, &[x])[0].clone().unwrap();
    assert_eq!(gx.value().as_slice().unwrap(), &[7.0, 7.0]);
}

#[test]
fn detached_values_block_gradients() {
    let g = Graph::new();
    let x = g.leaf(ArrayD::from_elem(IxDyn(&[2]), 2.0));
    let y = x.detach().mul(&x).sum_all();
    let gx = grad(&y, &[x])[0].clone().unwrap();
    // Only the non-detached factor contributes.
    assert_eq!(gx.value().as_slice().unwrap(), &[2.0, 2.0]);
}
