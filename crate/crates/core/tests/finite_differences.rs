//! Analytic derivatives checked against central finite differences.

use nalgebra::DVector;
use poisson_relax::pvae::{poisson_kl, poisson_kl_grad, LinearPvae};
use poisson_relax::relax::{eat_from_uniforms, gsm_from_noise, poisson_logits, SoftIndicator};
use poisson_relax::sampling::RngStream;
use proptest::prelude::*;

fn instance(seed: u64, d: usize, k: usize) -> (LinearPvae, DVector<f64>, DVector<f64>) {
    let model = LinearPvae::init(d, k, seed).unwrap();
    let mut rng = RngStream::new(seed).derive(99);
    let x = DVector::from_fn(d, |_, _| rng.standard_normal());
    let u = DVector::from_fn(k, |_, _| 0.8 * rng.standard_normal());
    (model, x, u)
}

fn loss_at(model: &LinearPvae, x: &DVector<f64>, u: &DVector<f64>) -> f64 {
    model.recon_loss_exact(x, &u.map(f64::exp)).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn recon_gradient(seed in any::<u64>(), d in 1usize..7, k in 1usize..6) {
        let (model, x, u) = instance(seed, d, k);
        let g = model.recon_grad_exact(&x, &u.map(f64::exp)).unwrap();
        let h = 1e-6;
        for i in 0..k {
            let mut up = u.clone();
            let mut dn = u.clone();
            up[i] += h;
            dn[i] -= h;
            let fd = (loss_at(&model, &x, &up) - loss_at(&model, &x, &dn)) / (2.0 * h);
            prop_assert!((fd - g[i]).abs() <= 1e-6 * g[i].abs().max(1.0), "coord {i}: fd={fd} g={}", g[i]);
        }
    }

    #[test]
    fn recon_hessian(seed in any::<u64>(), d in 1usize..7, k in 1usize..6) {
        let (model, x, u) = instance(seed, d, k);
        let hess = model.recon_hessian_exact(&x, &u.map(f64::exp)).unwrap();
        let scale = hess.amax().max(1.0);
        prop_assert!((&hess - hess.transpose()).amax() <= 1e-12 * scale);
        let h = 1e-5;
        for j in 0..k {
            let mut up = u.clone();
            let mut dn = u.clone();
            up[j] += h;
            dn[j] -= h;
            let gu = model.recon_grad_exact(&x, &up.map(f64::exp)).unwrap();
            let gd = model.recon_grad_exact(&x, &dn.map(f64::exp)).unwrap();
            for i in 0..k {
                let fd = (gu[i] - gd[i]) / (2.0 * h);
                prop_assert!((fd - hess[(i, j)]).abs() <= 1e-4 * scale, "({i},{j}): fd={fd} h={}", hess[(i, j)]);
            }
        }
        // The Gram part is positive semidefinite.
        let scaled = u.map(f64::exp);
        prop_assert!(2.0 * (&model.gram() * &scaled).dot(&scaled) >= -1e-12);
    }

    #[test]
    fn kl_gradient(seed in any::<u64>(), k in 1usize..6) {
        let mut rng = RngStream::new(seed);
        let lq = DVector::from_fn(k, |_, _| rng.standard_normal());
        let p = DVector::from_fn(k, |_, _| (0.5 * rng.standard_normal()).exp());
        let g = poisson_kl_grad(&lq.map(f64::exp), &p).unwrap();
        let h = 1e-6;
        for i in 0..k {
            let mut up = lq.clone();
            let mut dn = lq.clone();
            up[i] += h;
            dn[i] -= h;
            let fd = (poisson_kl(&up.map(f64::exp), &p).unwrap() - poisson_kl(&dn.map(f64::exp), &p).unwrap()) / (2.0 * h);
            prop_assert!((fd - g[i]).abs() <= 1e-6 * g[i].abs().max(1.0));
        }
        prop_assert!(poisson_kl(&lq.map(f64::exp), &p).unwrap() >= 0.0);
    }

    #[test]
    fn eat_pathwise_derivative(seed in any::<u64>(), rate in 0.5f64..40.0, tau in 0.05f64..1.0, cubic in any::<bool>()) {
        let ind = if cubic { SoftIndicator::Cubic } else { SoftIndicator::Sigmoid };
        let mut rng = RngStream::new(seed);
        let us: Vec<f64> = (0..(3.0 * rate + 30.0) as usize).map(|_| rng.uniform_open_closed()).collect();
        let s = eat_from_uniforms(rate, tau, ind, &us).unwrap();
        let h: f64 = 1e-6;
        let up = eat_from_uniforms(rate * h.exp(), tau, ind, &us).unwrap().value;
        let dn = eat_from_uniforms(rate * (-h).exp(), tau, ind, &us).unwrap().value;
        let fd = (up - dn) / (2.0 * h);
        prop_assert!((fd - s.dlog).abs() <= 1e-5 * s.dlog.abs().max(1.0), "fd={fd} dlog={}", s.dlog);
    }

    #[test]
    fn gsm_pathwise_derivative(seed in any::<u64>(), rate in 0.5f64..30.0, tau in 0.05f64..2.0) {
        let m = (rate + 10.0 * rate.sqrt() + 10.0) as usize;
        let mut rng = RngStream::new(seed);
        let g: Vec<f64> = (0..m).map(|_| -(-rng.uniform_open().ln()).ln()).collect();
        let s = gsm_from_noise(&poisson_logits(rate, m).unwrap(), &g, tau).unwrap();
        let h: f64 = 1e-6;
        let up = gsm_from_noise(&poisson_logits(rate * h.exp(), m).unwrap(), &g, tau).unwrap().value;
        let dn = gsm_from_noise(&poisson_logits(rate * (-h).exp(), m).unwrap(), &g, tau).unwrap().value;
        let fd = (up - dn) / (2.0 * h);
        prop_assert!((fd - s.dlog).abs() <= 1e-5 * s.dlog.abs().max(1.0), "fd={fd} dlog={}", s.dlog);
    }
}
