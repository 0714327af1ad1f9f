use tslab_core::numeric::Rng;
use tslab_core::scaling::{fit_params, FittedLaw, Observation};
use tslab_core::Error;

const PLANTED: FittedLaw = FittedLaw {
    k2_sq: 4.0,
    k1_sq_damped_lambda: 0.8,
    noise_term: 0.05,
    alpha_z: 1.8,
};

fn log_uniform(r: &mut Rng, lo: f64, hi: f64) -> f64 {
    r.uniform_in(lo.ln(), hi.ln()).exp()
}

fn observations(n: usize, noise: f64, seed: u64) -> Vec<Observation> {
    let mut r = Rng::new(seed);
    (0..n)
        .map(|_| {
            let mut o = Observation {
                n_params: log_uniform(&mut r, 1e2, 1e5),
                n_data: log_uniform(&mut r, 1e3, 1e6),
                horizon: log_uniform(&mut r, 2.0, 64.0),
                d: [4.0, 8.0, 12.0, 16.0][r.below(4)],
                loss: 0.0,
            };
            o.loss = PLANTED.predict(&o) * (1.0 + noise * r.normal(0.0, 1.0));
            o
        })
        .collect()
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

#[test]
fn noiseless_fit_is_exact() {
    let fit = fit_params(&observations(50, 0.0, 1)).unwrap();
    assert!(fit.rms_log_residual < 1e-8, "{}", fit.rms_log_residual);
}

#[test]
fn planted_parameters_recovered_under_noise() {
    let obs = observations(50, 0.01, 2);
    let fit = fit_params(&obs).unwrap();
    let l = fit.law;
    assert!(rel(l.k2_sq, PLANTED.k2_sq) < 0.05, "{l:?}");
    assert!(rel(l.k1_sq_damped_lambda, PLANTED.k1_sq_damped_lambda) < 0.05, "{l:?}");
    assert!(rel(l.noise_term, PLANTED.noise_term) < 0.05, "{l:?}");
    assert!(rel(l.alpha_z, PLANTED.alpha_z) < 0.05, "{l:?}");
    for o in &obs {
        assert!(rel(l.predict(o), o.loss) < 0.05);
    }
}

#[test]
fn too_few_observations() {
    assert!(matches!(
        fit_params(&observations(2, 0.0, 3)),
        Err(Error::Underdetermined { observations: 2, .. })
    ));
}
