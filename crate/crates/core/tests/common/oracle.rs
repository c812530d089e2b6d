//! Straight-line robust UCB agent with default constants. Re-inverts the
//! gram matrix every round and projects through an eigendecomposition.
//! Only the simulated environment is shared with the library.

use crhvt_core::env::{CorruptionSpec, Environment, NoiseSpec};
use nalgebra::{DMatrix, DVector};

pub struct OracleRun {
    pub thetas: Vec<DVector<f64>>,
    pub arms: Vec<usize>,
    pub cum_regret: Vec<f64>,
}

/// argmin over `|theta| <= s` of `|theta - tilde|_V`.
fn project(v: &DMatrix<f64>, tilde: &DVector<f64>, s: f64) -> DVector<f64> {
    if tilde.norm() <= s {
        return tilde.clone();
    }
    let eig = v.clone().symmetric_eigen();
    let coords = eig.eigenvectors.transpose() * tilde;
    let at = |mu: f64| -> DVector<f64> {
        DVector::from_iterator(
            coords.len(),
            coords
                .iter()
                .zip(eig.eigenvalues.iter())
                .map(|(c, l)| l * c / (l + mu)),
        )
    };
    let (mut lo, mut hi) = (0.0, 1.0);
    while at(hi).norm() > s {
        lo = hi;
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if at(mid).norm() > s {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    &eig.eigenvectors * at(hi)
}

pub fn run(
    horizon: usize,
    d: usize,
    k: usize,
    noise: NoiseSpec,
    budget: f64,
    seed: u64,
) -> OracleRun {
    let big_t = horizon as f64;
    let (alpha, lambda, s_bound, l_bound) = (8.0, d as f64, 1.0, 1.0);
    let sigma_min = 1.0 / big_t.sqrt();
    let delta = 1.0 / (8.0 * big_t);
    let (eps, _) = noise.declared().unwrap();
    let expo = (1.0 - eps) / (2.0 * (1.0 + eps));

    let kappa = d as f64
        * (1.0 + l_bound * l_bound * big_t / (sigma_min * sigma_min * lambda * alpha * d as f64))
            .ln();
    let log_conf = (2.0 * big_t * big_t / delta).ln();
    let tau0 =
        (2.0 * kappa).sqrt() * (3.0 * big_t).ln().powf(expo) / log_conf.powf(1.0 / (1.0 + eps));
    let tail = (lambda * (2.0 + 4.0 * s_bound * s_bound)).sqrt();
    let beta = |t: usize| 409.0 * log_conf * tau0 * (t as f64).powf(expo) + tail;

    let corruption = if budget > 0.0 {
        CorruptionSpec::ThetaFlip { budget }
    } else {
        CorruptionSpec::None
    };
    let mut env = Environment::new(seed, d, k, noise, corruption).unwrap();
    let theta_star = env.instance.theta_star.clone();

    let mut v = DMatrix::<f64>::identity(d, d) * lambda;
    let mut theta = DVector::<f64>::zeros(d);
    let mut beta_prev = tail;
    let mut cum = 0.0;
    let mut out = OracleRun {
        thetas: Vec::with_capacity(horizon),
        arms: Vec::with_capacity(horizon),
        cum_regret: Vec::with_capacity(horizon),
    };

    for t in 1..=horizon {
        let v_inv = v.clone().try_inverse().unwrap();
        let norm_inv = |x: &DVector<f64>| x.dot(&(&v_inv * x)).sqrt();
        let set = env.decision_set();

        let mut chosen = 0;
        let mut best = f64::NEG_INFINITY;
        for (i, x) in set.iter().enumerate() {
            let score = x.dot(&theta) + beta_prev * norm_inv(x);
            if score > best {
                best = score;
                chosen = i;
            }
        }
        let x = set[chosen].clone();
        let draw = env.pull(&x).unwrap();
        let top = set
            .iter()
            .map(|a| a.dot(&theta_star))
            .fold(f64::NEG_INFINITY, f64::max);
        cum += (top - x.dot(&theta_star)).max(0.0);

        let xn = norm_inv(&x);
        let growth = (t as f64).powf(expo);
        let sigma = draw
            .nu_t
            .max(sigma_min)
            .max((2.0 * beta_prev / (tau0 * alpha.sqrt() * growth)).sqrt() * xn)
            .max(budget.sqrt() * kappa.powf(-0.25) * xn.sqrt());
        let w = xn / (sigma * alpha.sqrt());
        let tau = tau0 * (1.0 + w * w).sqrt() / w * growth;

        v += &x * x.transpose() / (alpha * sigma * sigma);
        let z = (draw.reward - x.dot(&theta)) / sigma;
        let grad = &x * (-z.clamp(-tau, tau) / sigma);
        let tilde = &theta - v.clone().try_inverse().unwrap() * grad;
        theta = project(&v, &tilde, s_bound);
        beta_prev = beta(t);

        out.thetas.push(theta.clone());
        out.arms.push(chosen);
        out.cum_regret.push(cum);
    }
    out
}
