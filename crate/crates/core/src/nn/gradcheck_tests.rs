//! Finite-difference verification of every autodiff op.

use super::graph::{Graph, ParamStore};
use ndarray::{Array4, Dimension};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random(shape: (usize, usize, usize, usize), seed: u64) -> Array4<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Array4::from_shape_fn(shape, |_| rng.gen_range(-1.5..1.5))
}

/// Compares analytic gradients of `build` with central finite differences
/// over every parameter in the store.
fn gradcheck<F>(store: &mut ParamStore, build: F, tol: f64)
where
    F: Fn(&mut Graph, &ParamStore) -> super::graph::Var,
{
    let mut g = Graph::new();
    let loss = build(&mut g, store);
    assert_eq!(g.value(loss).len(), 1, "loss must be scalar");
    store.zero_grads();
    g.backward(loss, store);
    let analytic: Vec<Array4<f64>> = store.grads.clone();

    let h = 1e-5;
    for pi in 0..store.tensors.len() {
        let shape = store.tensors[pi].raw_dim();
        for flat in 0..shape.size() {
            let idx = flat_to_idx(&shape, flat);
            let orig = store.tensors[pi][idx];

            store.tensors[pi][idx] = orig + h;
            let mut gp = Graph::new();
            let lp = build(&mut gp, store);
            let fp = gp.value(lp)[[0, 0, 0, 0]];

            store.tensors[pi][idx] = orig - h;
            let mut gm = Graph::new();
            let lm = build(&mut gm, store);
            let fm = gm.value(lm)[[0, 0, 0, 0]];

            store.tensors[pi][idx] = orig;
            let fd = (fp - fm) / (2.0 * h);
            let an = analytic[pi][idx];
            let denom = fd.abs().max(an.abs()).max(1e-6);
            assert!(
                (fd - an).abs() / denom < tol,
                "param {pi} ({}) idx {:?}: fd {fd} vs analytic {an}",
                store.names[pi],
                idx
            );
        }
    }
}

fn flat_to_idx(shape: &ndarray::Ix4, flat: usize) -> [usize; 4] {
    let d = shape.as_array_view();
    let (d1, d2, d3) = (d[1], d[2], d[3]);
    let i0 = flat / (d1 * d2 * d3);
    let r0 = flat % (d1 * d2 * d3);
    let i1 = r0 / (d2 * d3);
    let r1 = r0 % (d2 * d3);
    [i0, i1, r1 / d3, r1 % d3]
}

#[test]
fn conv2d_gradients() {
    let mut store = ParamStore::new();
    let x = store.add("x", random((2, 3, 6, 6), 1));
    let w = store.add("w", random((4, 3, 3, 3), 2).mapv(|v| v * 0.3));
    let b = store.add("b", random((1, 4, 1, 1), 3).mapv(|v| v * 0.1));
    let target = random((2, 4, 6, 6), 4);
    let xi = x;
    gradcheck(
        &mut store,
        move |g, s| {
            let xv = g.param(s, xi);
            let wv = g.param(s, w);
            let bv = g.param(s, b);
            let y = g.conv2d(xv, wv, Some(bv), 1, 1);
            g.mse_loss(y, &target)
        },
        1e-6,
    );
}

#[test]
fn strided_conv_gradients() {
    let mut store = ParamStore::new();
    let x = store.add("x", random((1, 2, 8, 8), 5));
    let w = store.add("w", random((3, 2, 3, 3), 6).mapv(|v| v * 0.3));
    let target = random((1, 3, 4, 4), 7);
    gradcheck(
        &mut store,
        move |g, s| {
            let xv = g.param(s, x);
            let wv = g.param(s, w);
            let y = g.conv2d(xv, wv, None, 2, 1);
            g.mse_loss(y, &target)
        },
        1e-6,
    );
}

#[test]
fn activation_gradients() {
    let mut store = ParamStore::new();
    let x = store.add("x", random((1, 2, 4, 4), 8));
    let target = random((1, 2, 4, 4), 9);
    gradcheck(
        &mut store,
        move |g, s| {
            let xv = g.param(s, x);
            let a = g.silu(xv);
            let b = g.tanh(a);
            let c = g.leaky_relu(b, 0.2);
            g.mse_loss(c, &target)
        },
        1e-5,
    );
}

#[test]
fn group_norm_gradients() {
    let mut store = ParamStore::new();
    let x = store.add("x", random((2, 4, 3, 3), 10));
    let gamma = store.add("gamma", random((1, 4, 1, 1), 11).mapv(|v| 1.0 + 0.2 * v));
    let beta = store.add("beta", random((1, 4, 1, 1), 12).mapv(|v| 0.2 * v));
    let target = random((2, 4, 3, 3), 13);
    gradcheck(
        &mut store,
        move |g, s| {
            let xv = g.param(s, x);
            let ga = g.param(s, gamma);
            let be = g.param(s, beta);
            let y = g.group_norm(xv, ga, be, 2, 1e-5);
            g.mse_loss(y, &target)
        },
        1e-5,
    );
}

#[test]
fn batch_norm_gradients_training_mode() {
    let mut store = ParamStore::new();
    let x = store.add("x", random((3, 2, 4, 4), 14));
    let gamma = store.add("gamma", random((1, 2, 1, 1), 15).mapv(|v| 1.0 + 0.2 * v));
    let beta = store.add("beta", random((1, 2, 1, 1), 16).mapv(|v| 0.2 * v));
    let target = random((3, 2, 4, 4), 17);
    let rm = ndarray::Array1::zeros(2);
    let rv = ndarray::Array1::ones(2);
    gradcheck(
        &mut store,
        move |g, s| {
            let xv = g.param(s, x);
            let ga = g.param(s, gamma);
            let be = g.param(s, beta);
            let (y, _) = g.batch_norm(xv, ga, be, &rm, &rv, true, 1e-5);
            g.mse_loss(y, &target)
        },
        1e-5,
    );
}

#[test]
fn upsample_concat_broadcast_gradients() {
    let mut store = ParamStore::new();
    let x = store.add("x", random((1, 2, 3, 3), 18));
    let y = store.add("y", random((1, 3, 6, 6), 19));
    let e = store.add("e", random((1, 5, 1, 1), 20));
    let target = random((1, 5, 6, 6), 21);
    gradcheck(
        &mut store,
        move |g, s| {
            let xv = g.param(s, x);
            let yv = g.param(s, y);
            let ev = g.param(s, e);
            let up = g.upsample2x(xv);
            let cat = g.concat(&[up, yv]);
            let shifted = g.add_broadcast(cat, ev);
            g.mse_loss(shifted, &target)
        },
        1e-6,
    );
}

#[test]
fn haar_analysis_gradients() {
    let mut store = ParamStore::new();
    let x = store.add("x", random((1, 2, 4, 4), 22));
    let target = random((1, 8, 2, 2), 23);
    gradcheck(
        &mut store,
        move |g, s| {
            let xv = g.param(s, x);
            let y = g.haar_analysis(xv);
            g.mse_loss(y, &target)
        },
        1e-6,
    );
}

#[test]
fn tv_gradients_away_from_kinks() {
    let mut store = ParamStore::new();
    // strictly monotone field keeps differences away from zero
    let x = store.add(
        "x",
        Array4::from_shape_fn((1, 1, 4, 4), |(_, _, i, j)| (i * 4 + j) as f64 * 0.37 + 0.1 * ((i + 2 * j) as f64).sin()),
    );
    gradcheck(
        &mut store,
        move |g, s| {
            let xv = g.param(s, x);
            g.tv_iso(xv)
        },
        1e-5,
    );
}

#[test]
fn l1_and_arith_gradients() {
    let mut store = ParamStore::new();
    let x = store.add("x", random((1, 1, 4, 4), 24));
    let y = store.add("y", random((1, 1, 4, 4), 25));
    let target = random((1, 1, 4, 4), 26).mapv(|v| v + 3.0); // keep |diff| away from 0
    gradcheck(
        &mut store,
        move |g, s| {
            let xv = g.param(s, x);
            let yv = g.param(s, y);
            let d = g.sub(xv, yv);
            let a = g.affine(d, 1.3, -0.2);
            g.l1_loss(a, &target)
        },
        1e-5,
    );
}

#[test]
fn straight_through_passes_gradient_unchanged() {
    let mut store = ParamStore::new();
    let x = store.add("x", random((1, 2, 2, 2), 27));
    let q = random((1, 2, 2, 2), 28);
    let mut g = Graph::new();
    let xv = g.param(&store, x);
    let st = g.straight_through(xv, q.clone());
    assert_eq!(g.value(st), &q);
    let loss = g.mse_loss(st, &Array4::zeros((1, 2, 2, 2)));
    g.backward(loss, &mut store);
    // gradient is d mse(q)/dq routed to x
    let expected = q.mapv(|v| 2.0 * v / 8.0);
    for (a, b) in store.grads[x].iter().zip(expected.iter()) {
        assert!((a - b).abs() < 1e-12);
    }
}

#[test]
fn external_scalar_chains_provided_gradient() {
    let mut store = ParamStore::new();
    let x = store.add("x", random((1, 1, 2, 2), 29));
    let provided = random((1, 1, 2, 2), 30);
    let mut g = Graph::new();
    let xv = g.param(&store, x);
    let s1 = g.external_scalar(xv, 7.5, provided.clone());
    let s2 = g.affine(s1, 2.0, 0.0);
    assert!((g.value(s2)[[0, 0, 0, 0]] - 15.0).abs() < 1e-12);
    g.backward(s2, &mut store);
    for (a, b) in store.grads[x].iter().zip(provided.iter()) {
        assert!((a - 2.0 * b).abs() < 1e-12);
    }
}

#[test]
fn unet_end_to_end_gradcheck() {
    use super::layers::ResBlock;
    // a tiny res block with time conditioning exercises the composite path
    let mut store = ParamStore::new();
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let block = ResBlock::new(&mut store, &mut rng, "rb", 2, 4, Some(6));
    let x_idx = store.add("x", random((2, 2, 4, 4), 32));
    let e_idx = store.add("e", random((2, 6, 1, 1), 33));
    let target = random((2, 4, 4, 4), 34);
    gradcheck(
        &mut store,
        move |g, s| {
            let xv = g.param(s, x_idx);
            let ev = g.param(s, e_idx);
            let y = block.forward(g, s, xv, Some(ev));
            g.mse_loss(y, &target)
        },
        1e-4,
    );
}
