//! Finite-difference checks of every differentiable op.

use crate::autodiff::{Tape, Var};
use crate::error::Result;
use crate::nn::{ConvOpts, BN_EPSILON, LEAKY_SLOPE};
use crate::rng::{sample_gaussian, Rng};
use crate::tensor::Tensor;
use crate::testing::{check_gradients, GradCheck};

const LINEAR_TOL: f64 = 1e-3;
const NONLINEAR_TOL: f64 = 1e-2;

fn gauss(rng: &mut Rng, shape: &[usize]) -> Tensor {
    sample_gaussian(rng, shape).unwrap()
}

fn assert_check<F>(inputs: &[Tensor], build: F, tol: f64, seed: u64)
where
    F: Fn(&Tape, &[Var]) -> Result<Var>,
{
    let report = check_gradients(inputs, build, GradCheck::new(1e-2, tol).samples(16), &mut Rng::new(seed)).unwrap();
    assert!(report.passed(tol), "{report:?}");
}

#[test]
fn matmul_and_bias() {
    let mut rng = Rng::new(1);
    let inputs = [gauss(&mut rng, &[3, 4]), gauss(&mut rng, &[4, 5]), gauss(&mut rng, &[5])];
    assert_check(
        &inputs,
        |t, v| {
            let y = t.matmul(v[0], v[1])?;
            t.bias_add(y, v[2])
        },
        LINEAR_TOL,
        2,
    );
}

#[test]
fn elementwise_binary() {
    let mut rng = Rng::new(3);
    let inputs = [gauss(&mut rng, &[2, 3]), gauss(&mut rng, &[2, 3]), gauss(&mut rng, &[])];
    assert_check(
        &inputs,
        |t, v| {
            let a = t.add(v[0], v[1])?;
            let b = t.mul(a, v[0])?;
            let c = t.sub(b, v[2])?;
            t.mul(c, v[2])
        },
        NONLINEAR_TOL,
        4,
    );
}

#[test]
fn activations() {
    let mut rng = Rng::new(5);
    let inputs = [gauss(&mut rng, &[40])];
    assert_check(&inputs, |t, v| Ok(t.relu(v[0])), NONLINEAR_TOL, 6);
    assert_check(&inputs, |t, v| Ok(t.leaky_relu(v[0], LEAKY_SLOPE)), NONLINEAR_TOL, 7);
    assert_check(&inputs, |t, v| Ok(t.tanh(v[0])), NONLINEAR_TOL, 8);
    assert_check(&inputs, |t, v| Ok(t.softplus(v[0])), NONLINEAR_TOL, 9);
}

#[test]
fn reductions_and_reshape() {
    let mut rng = Rng::new(10);
    let inputs = [gauss(&mut rng, &[2, 3, 4])];
    assert_check(
        &inputs,
        |t, v| {
            let r = t.reshape(v[0], &[6, 4])?;
            let s = t.scale(r, 0.5);
            let m = t.mean(s);
            let n = t.neg(t.sum(r));
            t.add(m, n)
        },
        LINEAR_TOL,
        11,
    );
}

#[test]
fn resize_nearest() {
    let mut rng = Rng::new(12);
    let inputs = [gauss(&mut rng, &[2, 3, 2, 3])];
    assert_check(&inputs, |t, v| t.resize_nn_2x(v[0]), LINEAR_TOL, 13);
}

#[test]
fn batch_norm_train_mode() {
    let mut rng = Rng::new(14);
    for shape in [vec![6, 3], vec![2, 3, 3, 2]] {
        let c = *shape.last().unwrap();
        let inputs = [
            gauss(&mut rng, &shape),
            gauss(&mut rng, &[c]).map(|v| v + 1.5),
            gauss(&mut rng, &[c]),
        ];
        assert_check(
            &inputs,
            |t, v| Ok(t.batch_norm_train(v[0], v[1], v[2], BN_EPSILON)?.0),
            NONLINEAR_TOL,
            15,
        );
    }
}

#[test]
fn batch_norm_eval_mode() {
    let mut rng = Rng::new(16);
    let rm = gauss(&mut rng, &[3]);
    let rv = gauss(&mut rng, &[3]).map(|v| v.abs() + 0.5);
    let inputs = [gauss(&mut rng, &[2, 2, 2, 3]), gauss(&mut rng, &[3]), gauss(&mut rng, &[3])];
    assert_check(
        &inputs,
        |t, v| t.batch_norm_eval(v[0], v[1], v[2], &rm, &rv, BN_EPSILON),
        LINEAR_TOL,
        17,
    );
}

#[test]
fn conv_bn_relu_composite() {
    let mut rng = Rng::new(18);
    let inputs = [
        gauss(&mut rng, &[2, 4, 4, 2]),
        gauss(&mut rng, &[3, 3, 2, 3]),
        gauss(&mut rng, &[3]).map(|v| v + 2.0),
        gauss(&mut rng, &[3]),
    ];
    let report = check_gradients(
        &inputs,
        |t, v| {
            let y = t.conv2d(v[0], v[1], None, ConvOpts::same(3))?;
            let (y, _) = t.batch_norm_train(y, v[2], v[3], BN_EPSILON)?;
            Ok(t.relu(y))
        },
        GradCheck::new(1e-2, NONLINEAR_TOL).samples(16),
        &mut Rng::new(49),
    )
    .unwrap();
    assert!(report.passed(NONLINEAR_TOL), "{report:?}");
}
