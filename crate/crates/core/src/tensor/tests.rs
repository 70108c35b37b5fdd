use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::gradcheck::{check_gradients, Input, DEFAULT_STEP};
use super::*;
use crate::error::Error;

fn rand_input(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Input {
    Input::new(r, c, (0..r * c).map(|_| rng.random_range(-1.0..1.0)).collect())
}

fn assert_fd<F>(inputs: &[Input], f: F)
where
    F: for<'t> Fn(&'t Tape, &[Var<'t>]) -> crate::Result<Var<'t>>,
{
    let rep = check_gradients(inputs, DEFAULT_STEP, f).unwrap();
    assert!(rep.max_rel_error < 1e-4, "{rep:?}");
}

#[test]
fn softmax_of_constant_row_is_uniform() {
    let t = Tape::new();
    let x = t.constant(2, 5, vec![3.0; 10]);
    for v in x.softmax_rows().to_vec() {
        assert!((v - 0.2).abs() < 1e-15);
    }
}

#[test]
fn layer_norm_output_has_zero_mean_unit_var() {
    let t = Tape::new();
    let x = t.constant(1, 4, vec![1.0, 5.0, -2.0, 0.5]);
    let g = t.constant(1, 4, vec![1.0; 4]);
    let b = t.constant(1, 4, vec![0.0; 4]);
    let y = x.layer_norm(&g, &b, 0.0).unwrap().to_vec();
    let mean = y.iter().sum::<f64>() / 4.0;
    let var = y.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / 4.0;
    assert!(mean.abs() < 1e-12);
    assert!((var - 1.0).abs() < 1e-12);
}

#[test]
fn matmul_hand_product() {
    let t = Tape::new();
    let a = t.constant(2, 3, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
    let b = t.constant(3, 2, vec![7.0, 8.0, 9.0, 10.0, 11.0, 12.0]);
    assert_eq!(a.matmul(&b).unwrap().to_vec(), vec![58.0, 64.0, 139.0, 154.0]);
}

#[test]
fn backward_of_sum_is_ones() {
    let t = Tape::new();
    let x = t.leaf(2, 3, vec![0.3; 6]);
    let g = t.backward(x.sum()).unwrap();
    assert_eq!(g.wrt(x).unwrap(), &[1.0; 6]);
}

#[test]
fn backward_of_square_is_two_x() {
    let t = Tape::new();
    let x = t.leaf(1, 3, vec![1.5, -2.0, 0.25]);
    let g = t.backward(x.mul(&x).unwrap().sum()).unwrap();
    assert_eq!(g.wrt(x).unwrap(), &[3.0, -4.0, 0.5]);
}

#[test]
fn second_backward_fails() {
    let t = Tape::new();
    let x = t.leaf(1, 1, vec![2.0]);
    let y = x.mul(&x).unwrap();
    t.backward(y).unwrap();
    assert!(matches!(t.backward(y), Err(Error::TapeConsumed)));
}

#[test]
fn shape_mismatch_is_an_error() {
    let t = Tape::new();
    let a = t.constant(2, 3, vec![0.0; 6]);
    let b = t.constant(2, 3, vec![0.0; 6]);
    assert!(matches!(a.matmul(&b), Err(Error::Shape { .. })));
    assert!(a.add(&t.constant(3, 2, vec![0.0; 6])).is_err());
}

#[test]
fn param_gradients_accumulate_into_buffer() {
    let mut store = ParamStore::new();
    let id = store.add("w", Tensor::new(vec![2], vec![1.0, 2.0]).unwrap()).unwrap();
    let mut buf = GradBuffer::new(&store);
    for _ in 0..2 {
        let t = Tape::new();
        let w = t.param(&store, id);
        let g = t.backward(w.mul(&w).unwrap().sum()).unwrap();
        g.accumulate(&mut buf);
    }
    assert_eq!(buf.get(id), &[4.0, 8.0]);
}

#[test]
fn fd_elementwise_and_reductions() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let ins = [rand_input(&mut rng, 3, 4), rand_input(&mut rng, 3, 4), rand_input(&mut rng, 1, 4)];
    assert_fd(&ins, |_, v| {
        let a = v[0].mul(&v[1])?.add(&v[0])?.sub(&v[1].scale(0.3))?;
        let b = a.add_row(&v[2])?.exp().add_scalar(1.0).ln();
        Ok(b.sum_rows().mean())
    });
}

#[test]
fn fd_matmul_variants() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let ins = [rand_input(&mut rng, 3, 4), rand_input(&mut rng, 4, 2), rand_input(&mut rng, 5, 4)];
    assert_fd(&ins, |_, v| {
        let a = v[0].matmul(&v[1])?;
        let b = v[0].matmul_t(&v[2])?;
        Ok(a.mul(&a)?.sum().add(&b.mul(&b)?.sum())?)
    });
}

#[test]
fn fd_softmax_layernorm_relu() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let ins = [rand_input(&mut rng, 3, 5), rand_input(&mut rng, 1, 5), rand_input(&mut rng, 1, 5), rand_input(&mut rng, 3, 5)];
    assert_fd(&ins, |_, v| {
        let y = v[0].layer_norm(&v[1], &v[2], 1e-5)?;
        let s = y.softmax_rows().mul(&v[3])?.sum();
        let l = y.log_softmax_rows().mul(&v[3])?.sum();
        let r = v[0].scale(3.0).add_scalar(0.1).relu().sum();
        Ok(s.add(&l)?.add(&r)?)
    });
}

#[test]
fn fd_structural_ops() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let ins = [rand_input(&mut rng, 6, 3), rand_input(&mut rng, 2, 3)];
    assert_fd(&ins, |_, v| {
        let p = v[0].max_pool_rows(3)?;
        let c = concat_rows(&[p, v[1]])?;
        let d = concat_cols(&[c, c.transpose().transpose()])?;
        let s = d.slice_cols(1, 5)?.gather_rows(&[3, 0, 0, 2])?;
        let k = s.pick(&[0, 5, 7, 15])?;
        Ok(k.mul(&k)?.sum().add(&s.row_norm().sum())?)
    });
}

#[test]
fn fd_normalize_quaternion_rigid_chamfer() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let pts: Vec<f64> = (0..2 * 4 * 3).map(|_| rng.random_range(-1.0..1.0)).collect();
    let target: Vec<f64> = (0..2 * 5 * 3).map(|_| rng.random_range(-1.0..1.0)).collect();
    let ins = [rand_input(&mut rng, 2, 4), rand_input(&mut rng, 2, 3)];
    let pts = Arc::new(pts);
    assert_fd(&ins, move |t, v| {
        let q = v[0].l2_normalize_rows(1e-8);
        let r = q.quat_to_rotmat()?;
        let moved = r.rigid_transform(Some(&v[1]), pts.clone(), 4)?;
        let tgt = t.constant(10, 3, target.clone());
        Ok(moved.chamfer_segments(&tgt, 4, 5)?.sum())
    });
}

#[test]
fn rotmat_of_unit_quaternion_is_orthonormal() {
    let t = Tape::new();
    let q = t.constant(1, 4, vec![0.5, 0.5, -0.5, 0.5]);
    let r = q.quat_to_rotmat().unwrap().to_vec();
    for i in 0..3 {
        for j in 0..3 {
            let d: f64 = (0..3).map(|k| r[i * 3 + k] * r[j * 3 + k]).sum();
            assert!((d - if i == j { 1.0 } else { 0.0 }).abs() < 1e-12);
        }
    }
}

#[test]
fn mlp_binds_after_construction() {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut store = ParamStore::new();
    let m = Mlp::new(&mut store, "enc", &[3, 8, 4], &mut rng).unwrap();
    let b = Mlp::bind(&store, "enc", 2).unwrap();
    assert_eq!(m.layers[1].w, b.layers[1].w);
    assert_eq!(b.layers[0].fan_in, 3);
    let t = Tape::new();
    let x = t.constant(5, 3, vec![0.1; 15]);
    assert_eq!(m.forward(&t, &store, &x).unwrap().shape(), (5, 4));
}
