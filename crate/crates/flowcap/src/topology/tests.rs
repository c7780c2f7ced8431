use super::*;
use crate::densities::{GaussianD, MixtureGaussianD};
use crate::flows::{Nonlinearity, Planar, Sylvester};
use proptest::prelude::*;
use rand::Rng;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn rvec(r: &mut ChaCha8Rng, d: usize, s: f64) -> Vec<f64> {
    (0..d).map(|_| r.random_range(-s..s)).collect()
}

fn mog2d() -> MixtureGaussianD {
    let cov = DMatrix::from_row_slice(2, 2, &[1.0, 0.3, 0.3, 0.8]);
    MixtureGaussianD::new(
        vec![0.3, 0.7],
        vec![GaussianD::from_slices(&[-1.0, 0.5], cov.clone()).unwrap(), GaussianD::from_slices(&[1.5, -0.5], cov * 0.5).unwrap()],
    )
    .unwrap()
}

/// Random invertible ReLU planar/Sylvester layer (guard enforced by rejection).
fn relu_layer(r: &mut ChaCha8Rng, d: usize) -> FlowLayer {
    loop {
        let l: Result<FlowLayer> = if r.random_bool(0.5) {
            Planar::new(rvec(r, d, 1.0), rvec(r, d, 1.0), r.random_range(-0.5..0.5), Nonlinearity::Relu).map(Into::into)
        } else {
            let m = r.random_range(1..=d.min(3));
            let a = DMatrix::from_fn(d, m, |_, _| r.random_range(-0.6..0.6));
            let b = DMatrix::from_fn(d, m, |_, _| r.random_range(-0.6..0.6));
            Sylvester::new(a, b, rvec(r, m, 0.5), Nonlinearity::Relu).map(Into::into)
        };
        if let Ok(l) = l {
            return l;
        }
    }
}

#[test]
fn empty_stack_has_zero_residual() {
    let q = mog2d();
    let pts = default_points(&q, 50, 1).unwrap();
    let rep = residual_relu(&FlowStack::identity(), &q, &pts, default_margin()).unwrap();
    assert_eq!(rep.max_residual, 0.0);
    assert_eq!(rep.excluded, 0);
}

#[test]
fn relu_stack_on_mog_matches_and_excludes_hyperplane() {
    let mut r = rng(7);
    let q = mog2d();
    let stack = FlowStack::new((0..3).map(|_| relu_layer(&mut r, 2)).collect()).unwrap();
    let mut pts = default_points(&q, 500, 2).unwrap();
    // a point exactly on the first layer's hyperplane
    if let FlowLayer::Planar(p) = &stack.layers()[0] {
        let w = p.w();
        let s = -p.b() / (w[0] * w[0] + w[1] * w[1]);
        pts.push(vec![s * w[0], s * w[1]]);
    } else if let FlowLayer::Sylvester(s) = &stack.layers()[0] {
        let c = s.bmat().column(0);
        let t = -s.b()[0] / c.norm_squared();
        pts.push(vec![t * c[0], t * c[1]]);
    }
    let rep = residual_relu(&stack, &q, &pts, default_margin()).unwrap();
    assert!(rep.max_residual < 1e-6, "{}", rep.max_residual);
    let last = rep.points.last().unwrap();
    assert!(last.residual.is_none() && last.reason.as_deref().unwrap().contains("layer 0"));
    assert!(rep.excluded >= 1);
}

#[test]
fn relu_rejects_smooth_layers() {
    let s = FlowStack::new(vec![Planar::new(vec![0.5, 0.0], vec![1.0, 0.0], 0.0, Nonlinearity::Tanh).unwrap().into()]).unwrap();
    assert!(matches!(residual_relu(&s, &mog2d(), &[vec![0.0, 0.0]], 1e-8), Err(Error::WrongFamily(_))));
}

#[test]
fn span_residual_examples() {
    let q = GaussianD::from_slices(&[0.3, -0.2], DMatrix::from_row_slice(2, 2, &[1.0, 0.4, 0.4, 2.0])).unwrap();
    let pts = default_points(&q, 500, 3).unwrap();
    let zero_u = FlowStack::new(vec![Planar::new(vec![0.0, 0.0], vec![1.0, 2.0], 0.1, Nonlinearity::Tanh).unwrap().into()]).unwrap();
    assert!(residual_span(&zero_u, &q, &pts).unwrap().max_residual < 1e-14);
    let tanh = FlowStack::new(vec![Planar::new(vec![0.9, -0.4], vec![0.7, 0.5], 0.2, Nonlinearity::Tanh).unwrap().into()]).unwrap();
    let rep = residual_span(&tanh, &q, &pts).unwrap();
    assert!(!rep.vacuous);
    assert!(rep.max_residual < 1e-6, "{}", rep.max_residual);
    // the difference itself is far from zero: the check is not trivial
    let (y, _) = tanh.forward(&pts[0]).unwrap();
    let gp = tanh.pushforward_grad_log_density(&q, &y).unwrap();
    let gq = grad_log_density(&q, &pts[0]).unwrap();
    assert!(norm(&gp.iter().zip(&gq).map(|(a, b)| a - b).collect::<Vec<_>>()) > 1e-3);
    let two = FlowStack::new(vec![tanh.layers()[0].clone(), Planar::new(vec![0.1, 0.3], vec![-0.5, 0.5], 0.0, Nonlinearity::Sigmoid).unwrap().into()]).unwrap();
    assert!(residual_span(&two, &q, &pts[..5]).unwrap().vacuous);
}

#[test]
fn span_residual_multi_layer_sylvester_4d() {
    let mut r = rng(21);
    let q = GaussianD::standard(4);
    let layers: Vec<FlowLayer> = vec![
        Sylvester::new(DMatrix::from_fn(4, 2, |_, _| r.random_range(-0.4..0.4)), DMatrix::from_fn(4, 2, |_, _| r.random_range(-0.4..0.4)), vec![0.1, -0.2], Nonlinearity::Tanh).unwrap().into(),
        Planar::new(rvec(&mut r, 4, 0.5), rvec(&mut r, 4, 0.5), 0.3, Nonlinearity::Arctan).unwrap().into(),
    ];
    let stack = FlowStack::new(layers).unwrap();
    let rep = residual_span(&stack, &q, &default_points(&q, 300, 4).unwrap()).unwrap();
    assert!(rep.max_residual < 1e-6, "{}", rep.max_residual);
}

#[test]
fn radial_residual_examples() {
    let q = GaussianD::from_slices(&[0.5, 0.0, -0.5], DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 2.0, 0.5]))).unwrap();
    let pts = default_points(&q, 500, 5).unwrap();
    let id = Radial::new(1.0, 0.0, vec![0.0; 3]).unwrap();
    assert!(residual_radial(&id, &q, &pts, 1e-8).unwrap().max_residual < 1e-14);
    let rad = Radial::new(0.7, 0.9, vec![0.2, -0.1, 0.3]).unwrap();
    let mut pts2 = pts.clone();
    pts2.push(vec![0.2, -0.1, 0.3]);
    let rep = residual_radial(&rad, &q, &pts2, 1e-8).unwrap();
    assert!(rep.max_residual < 1e-6, "{}", rep.max_residual);
    assert_eq!(rep.excluded, 1);
    assert!(rep.points.last().unwrap().reason.as_deref().unwrap().contains("seam"));
    for p in &rep.points {
        if let Some(c) = p.cosine {
            assert!(c > 1.0 - 1e-10, "{c}");
        }
    }
}

fn mog_rhs(p: &MixtureGaussianD, q: &MixtureGaussianD, a: &DMatrix<f64>, b: &[f64], z: &[f64]) -> DVector<f64> {
    let mean_part = |m: &MixtureGaussianD, x: &[f64]| {
        let pi = m.responsibilities(x);
        let mut s = DVector::zeros(x.len());
        for (w, c) in pi.iter().zip(m.components()) {
            s += *w * c.mean();
        }
        m.components()[0].precision() * s
    };
    let x = (a * dvec(z) + dvec(b)).as_slice().to_vec();
    a.transpose() * mean_part(p, &x) - mean_part(q, z)
}

#[test]
fn mog_condition_matches_finite_difference_oracle() {
    let p = mog2d();
    let cov = DMatrix::from_row_slice(2, 2, &[0.7, -0.2, -0.2, 1.1]);
    let q = MixtureGaussianD::new(
        vec![0.2, 0.5, 0.3],
        vec![
            GaussianD::from_slices(&[0.0, 1.0], cov.clone()).unwrap(),
            GaussianD::from_slices(&[1.0, -1.0], cov.clone()).unwrap(),
            GaussianD::from_slices(&[-1.0, 0.0], cov).unwrap(),
        ],
    );
    let q = q.unwrap();
    let a = DMatrix::from_row_slice(2, 2, &[1.2, 0.3, -0.4, 0.9]);
    let b = [0.1, -0.2];
    // shared covariance needed for p too: rebuild with one covariance
    let pc = p.components()[0].cov().clone();
    let p = MixtureGaussianD::new(
        vec![0.3, 0.7],
        vec![GaussianD::from_slices(&[-1.0, 0.5], pc.clone()).unwrap(), GaussianD::from_slices(&[1.5, -0.5], pc).unwrap()],
    )
    .unwrap();
    for z in [[0.2, 0.1], [-0.7, 0.4], [1.0, -1.0]] {
        let h = 1e-5;
        let mut jac = DMatrix::zeros(2, 2);
        for k in 0..2 {
            let mut zp = z;
            let mut zm = z;
            zp[k] += h;
            zm[k] -= h;
            jac.set_column(k, &((mog_rhs(&p, &q, &a, &b, &zp) - mog_rhs(&p, &q, &a, &b, &zm)) / (2.0 * h)));
        }
        let x = (&a * dvec(&z) + dvec(&b)).as_slice().to_vec();
        let closed = a.transpose() * mog_term(&p, &x) * &a - mog_term(&q, &z);
        assert!((closed - jac).abs().max() < 1e-7);
    }
    let rep = mog_condition(&p, &q, &a, &b, &[0.0, 0.0], 1.0, 100, 3).unwrap();
    assert!(rep.max_deviation > 1e-3);
}

#[test]
fn mog_condition_examples() {
    let g = |m: &[f64]| GaussianD::from_slices(m, DMatrix::identity(2, 2)).unwrap();
    let single = MixtureGaussianD::new(vec![1.0], vec![g(&[0.5, 0.5])]).unwrap();
    let other = MixtureGaussianD::new(vec![1.0], vec![g(&[-1.0, 2.0])]).unwrap();
    let a = DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.5, 1.0]);
    let rep = mog_condition(&single, &other, &a, &[0.0, 1.0], &[0.0, 0.0], 2.0, 100, 1).unwrap();
    assert_eq!(rep.max_deviation, 0.0);
    // equal p-means, distinct q-means, weights ½
    let p = MixtureGaussianD::new(vec![0.5, 0.5], vec![g(&[1.0, 1.0]), g(&[1.0, 1.0])]).unwrap();
    let q = MixtureGaussianD::new(vec![0.5, 0.5], vec![g(&[-1.0, 0.0]), g(&[1.0, 0.0])]).unwrap();
    let rep = mog_condition(&p, &q, &DMatrix::identity(2, 2), &[0.0, 0.0], &[0.3, 0.0], 0.5, 100, 2).unwrap();
    assert!(rep.max_deviation > 1e-3, "{}", rep.max_deviation);
    let mixed = MixtureGaussianD::new(vec![0.5, 0.5], vec![g(&[0.0, 0.0]), GaussianD::from_slices(&[1.0, 0.0], DMatrix::identity(2, 2) * 2.0).unwrap()]).unwrap();
    assert!(matches!(mog_condition(&mixed, &q, &DMatrix::identity(2, 2), &[0.0, 0.0], &[0.0, 0.0], 1.0, 10, 1), Err(Error::WrongForm(_))));
}

#[test]
fn prod_condition_examples() {
    let i2 = DMatrix::<f64>::identity(2, 2);
    let pts = vec![vec![0.5, 1.5], vec![2.0, 0.3]];
    let rep = prod_condition(ScalarKernel::Identity, 1.5, 1.5, &i2, &[0.0, 0.0], &pts).unwrap();
    assert_eq!(rep.max_residual, 0.0);
    // g(x) = x, r_p ≠ r_q: no invertible A satisfies the condition
    let mut r = rng(9);
    let grid: Vec<Vec<f64>> = (0..5).flat_map(|i| (0..5).map(move |j| vec![0.5 + 0.4 * i as f64, 0.5 + 0.4 * j as f64])).collect();
    for _ in 0..1000 {
        let a = DMatrix::<f64>::from_fn(2, 2, |_, _| r.random_range(0.1..2.0));
        if a.determinant().abs() < 1e-3 {
            continue;
        }
        let b = rvec(&mut r, 2, 0.05).iter().map(|x| x.abs() + 0.01).collect::<Vec<_>>();
        let rep = prod_condition(ScalarKernel::Identity, 2.0, 1.0, &a, &b, &grid).unwrap();
        assert!(rep.max_residual > 1e-8);
    }
    assert!(matches!(prod_condition(ScalarKernel::Identity, 1.0, 2.0, &i2, &[0.0, 0.0], &[vec![-1.0, 1.0]]), Err(Error::Domain(_))));
}

#[test]
fn prod_condition_matches_finite_differences() {
    let a = DMatrix::from_row_slice(3, 3, &[1.0, 0.2, 0.0, -0.3, 0.8, 0.1, 0.0, 0.4, 1.1]);
    let b = [0.1, 0.0, -0.2];
    let z = vec![0.3, -0.8, 1.2];
    for g in [ScalarKernel::Logistic, ScalarKernel::Cauchy, ScalarKernel::Gaussian] {
        let dl = |x: f64| (g.ln_value(x + 1e-6) - g.ln_value(x - 1e-6)) / 2e-6;
        let x = &a * dvec(&z) + dvec(&b);
        let gz = DVector::from_iterator(3, z.iter().map(|&t| dl(t)));
        let gx = DVector::from_iterator(3, x.iter().map(|&t| dl(t)));
        let oracle = (0.7 * gz - 1.3 * a.transpose() * gx).norm();
        let rep = prod_condition(g, 1.3, 0.7, &a, &b, &[z.clone()]).unwrap();
        assert!((rep.max_residual - oracle).abs() < 1e-7, "{g:?}");
    }
}

#[test]
fn feasibility_examples() {
    let sq = DMatrix::from_row_slice(3, 3, &[2.0, 0.3, 0.0, 0.3, 1.0, 0.1, 0.0, 0.1, 1.5]);
    for f in [Family::PlanarSmooth, Family::Radial, Family::ReluSylvester] {
        assert_eq!(gaussian_feasibility(&sq, &sq, f, None).unwrap().verdict, Verdict::NotRuledOut);
    }
    assert_eq!(gaussian_feasibility(&sq, &sq, Family::SylvesterSmooth, Some(1)).unwrap().verdict, Verdict::NotRuledOut);
    let v = DVector::from_vec(vec![1.0, -0.5, 0.2]);
    let w = DVector::from_vec(vec![0.0, 1.0, 1.0]);
    let r1 = &sq + &v * v.transpose();
    let r2 = &r1 + &w * w.transpose();
    assert_eq!(gaussian_feasibility(&sq, &r1, Family::PlanarSmooth, None).unwrap().verdict, Verdict::NotRuledOut);
    assert_eq!(gaussian_feasibility(&sq, &r2, Family::PlanarSmooth, None).unwrap().verdict, Verdict::RuledOut);
    let i4 = DMatrix::<f64>::identity(4, 4);
    let d4 = DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 3.0, 4.0, 5.0]));
    assert_eq!(gaussian_feasibility(&i4, &d4, Family::Radial, None).unwrap().verdict, Verdict::RuledOut);
    // rank(Σ_q⁻¹ − Σ_p⁻¹) = 4 > 2m for m = 1
    let v = gaussian_feasibility(&i4, &d4, Family::SylvesterSmooth, Some(1)).unwrap();
    assert_eq!(v.verdict, Verdict::RuledOut);
    // a rank-2 update of the precision is allowed for m = 1 only with one eigenvalue of each sign
    let mixed = DMatrix::from_diagonal(&DVector::from_vec(vec![0.5, 2.0, 1.0, 1.0]));
    assert_eq!(gaussian_feasibility(&i4, &mixed, Family::SylvesterSmooth, Some(1)).unwrap().verdict, Verdict::NotRuledOut);
    let same_sign = DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 3.0, 1.0, 1.0]));
    assert_eq!(gaussian_feasibility(&i4, &same_sign, Family::SylvesterSmooth, Some(1)).unwrap().verdict, Verdict::RuledOut);
    assert!(gaussian_feasibility(&i4, &d4, Family::SylvesterSmooth, Some(4)).is_err());
    assert!(gaussian_feasibility(&i4, &(-&d4), Family::Radial, None).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn prop_feasibility_scale_invariant(seed in any::<u64>(), c in 1e-3f64..1e3, k in 0usize..3) {
        let mut r = rng(seed);
        let d = 4;
        let b = DMatrix::from_fn(d, d, |_, _| r.random_range(-1.0..1.0));
        let sq = &b * b.transpose() + DMatrix::<f64>::identity(d, d);
        let mut sp = sq.clone();
        for _ in 0..k {
            let v = DVector::from_vec(rvec(&mut r, d, 1.0));
            sp += &v * v.transpose();
        }
        for (f, m) in [(Family::PlanarSmooth, None), (Family::Radial, None), (Family::SylvesterSmooth, Some(1)), (Family::SylvesterSmooth, Some(2))] {
            let a = gaussian_feasibility(&sq, &sp, f, m).unwrap().verdict;
            let b = gaussian_feasibility(&(&sq * c), &(&sp * c), f, m).unwrap().verdict;
            prop_assert_eq!(a, b);
        }
    }

    #[test]
    fn prop_relu_residual_vanishes(seed in any::<u64>(), n in 1usize..6) {
        let mut r = rng(seed);
        let q = GaussianD::standard(4);
        let stack = FlowStack::new((0..n).map(|_| relu_layer(&mut r, 4)).collect()).unwrap();
        let rep = residual_relu(&stack, &q, &default_points(&q, 100, seed).unwrap(), default_margin()).unwrap();
        prop_assert!(rep.fraction_within(1e-6) >= 0.99);
    }
}
