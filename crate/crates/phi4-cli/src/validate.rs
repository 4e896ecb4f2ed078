//! Quadrature-oracle self-checks behind `phi4 validate`. Each check prints
//! one line; the command exits nonzero if any check fails.

use phi4_core::model::{CouplingSet, FieldConfig};
use phi4_core::quadrature::{
    conditional_quadrature_moments, quadrature_moments, QuadratureSpec,
};
use phi4_core::rng::{derive_rng, derive_seed};
use phi4_core::sampler::{burn_in, record_moments, ChainState, SamplerConfig};
use phi4_core::trainer::{data_moments, kl_gradient_from_means};

use rand::Rng;

use crate::ValidateLevel;

struct Outcome {
    name: &'static str,
    detail: String,
    ok: bool,
}

pub fn run(level: ValidateLevel, seed: u64) -> bool {
    let mut checks: Vec<Outcome> = vec![
        local_energy_change(seed),
        action_gradient_finite_differences(seed),
        quadrature_grid_refinement(),
        sampler_vs_quadrature(seed, 1),
        sampler_vs_quadrature(seed, 2),
        sampler_determinism(seed),
    ];
    if matches!(level, ValidateLevel::Full) {
        checks.push(sampler_vs_quadrature(seed, 3));
        checks.push(conditional_sampling_vs_quadrature(seed));
        checks.push(kl_gradient_vs_quadrature(seed));
    }
    let mut all_ok = true;
    for c in &checks {
        let tag = if c.ok { " ok " } else { "FAIL" };
        println!("[{tag}] {}: {}", c.name, c.detail);
        all_ok &= c.ok;
    }
    println!(
        "validate: {}/{} checks passed",
        checks.iter().filter(|c| c.ok).count(),
        checks.len()
    );
    all_ok
}

fn random_theta(rng: &mut impl Rng, v: usize) -> CouplingSet {
    CouplingSet::new(
        v,
        (0..v * (v - 1) / 2).map(|_| rng.random_range(-0.4..0.4)).collect(),
        (0..v).map(|_| rng.random_range(-0.2..0.8)).collect(),
        (0..v).map(|_| rng.random_range(0.15..0.6)).collect(),
        (0..v).map(|_| rng.random_range(-0.4..0.4)).collect(),
    )
    .expect("valid couplings")
}

fn local_energy_change(seed: u64) -> Outcome {
    let mut rng = derive_rng(seed, &[1]);
    let mut worst: f64 = 0.0;
    for _ in 0..300 {
        let v = rng.random_range(1..6);
        let theta = random_theta(&mut rng, v);
        let phi =
            FieldConfig::new((0..v).map(|_| rng.random_range(-2.0..2.0)).collect()).unwrap();
        let site = rng.random_range(0..v);
        let newv = rng.random_range(-2.0..2.0);
        let delta = theta.action_delta(&phi, site, newv).unwrap();
        let mut moved = phi.values().to_vec();
        moved[site] = newv;
        let full = theta.action(&FieldConfig::new(moved).unwrap()).unwrap()
            - theta.action(&phi).unwrap();
        worst = worst.max((delta - full).abs() / (1.0 + full.abs()));
    }
    Outcome {
        name: "local energy change vs full recomputation",
        detail: format!("worst relative gap {worst:.2e} (tol 1e-12)"),
        ok: worst < 1e-12,
    }
}

fn action_gradient_finite_differences(seed: u64) -> Outcome {
    let mut rng = derive_rng(seed, &[2]);
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let v = rng.random_range(1..4);
        let theta = random_theta(&mut rng, v);
        let phi =
            FieldConfig::new((0..v).map(|_| rng.random_range(-1.5..1.5)).collect()).unwrap();
        let g = theta.grad_action(&phi).unwrap();
        let families: Vec<(Vec<f64>, Box<dyn Fn(usize, f64) -> CouplingSet>)> = vec![
            (
                g.weights.clone(),
                Box::new(|k, d| {
                    let mut w = theta.weights().to_vec();
                    w[k] += d;
                    CouplingSet::new(
                        theta.volume(),
                        w,
                        theta.mass_sq().to_vec(),
                        theta.quartic().to_vec(),
                        theta.bias().to_vec(),
                    )
                    .unwrap()
                }),
            ),
            (
                g.mass_sq.clone(),
                Box::new(|k, d| {
                    let mut m = theta.mass_sq().to_vec();
                    m[k] += d;
                    CouplingSet::new(
                        theta.volume(),
                        theta.weights().to_vec(),
                        m,
                        theta.quartic().to_vec(),
                        theta.bias().to_vec(),
                    )
                    .unwrap()
                }),
            ),
            (
                g.bias.clone(),
                Box::new(|k, d| {
                    let mut a = theta.bias().to_vec();
                    a[k] += d;
                    CouplingSet::new(
                        theta.volume(),
                        theta.weights().to_vec(),
                        theta.mass_sq().to_vec(),
                        theta.quartic().to_vec(),
                        a,
                    )
                    .unwrap()
                }),
            ),
        ];
        for (grad, bump) in &families {
            for (k, g_k) in grad.iter().enumerate() {
                let fd = (bump(k, h).action(&phi).unwrap()
                    - bump(k, -h).action(&phi).unwrap())
                    / (2.0 * h);
                worst = worst.max((g_k - fd).abs());
            }
        }
    }
    Outcome {
        name: "action gradient vs finite differences",
        detail: format!("worst absolute gap {worst:.2e} (tol 1e-6)"),
        ok: worst < 1e-6,
    }
}

fn quadrature_grid_refinement() -> Outcome {
    let theta = CouplingSet::new(1, vec![], vec![1.0], vec![1.0], vec![0.2]).unwrap();
    let coarse = quadrature_moments(&theta, &QuadratureSpec::with_points(201)).unwrap();
    let fine = quadrature_moments(&theta, &QuadratureSpec::with_points(401)).unwrap();
    let rel = (coarse.moments.mean_sq[0] - fine.moments.mean_sq[0]).abs()
        / fine.moments.mean_sq[0];
    Outcome {
        name: "quadrature grid refinement",
        detail: format!("h vs h/2 second-moment gap {rel:.2e} (tol 1e-8)"),
        ok: rel < 1e-8,
    }
}

/// Per-chain moment means against the quadrature oracle at volume `v`.
fn sampler_vs_quadrature(seed: u64, v: usize) -> Outcome {
    let mut rng = derive_rng(seed, &[3, v as u64]);
    let theta = random_theta(&mut rng, v);
    let points = match v {
        1 => 401,
        2 => 301,
        _ => 161,
    };
    let oracle = quadrature_moments(&theta, &QuadratureSpec::with_points(points))
        .unwrap()
        .moments;
    let cfg = SamplerConfig {
        proposal_width: 1.0,
        sweeps_burn_in: 800,
        sweeps_between_samples: 3,
        n_samples: 6_000,
        adapt_acceptance: Some(0.44),
    };
    let chains = 8;
    let per_chain: Vec<phi4_core::Moments> = (0..chains)
        .map(|c| {
            let mut state = ChainState::new(
                FieldConfig::zeros(v),
                derive_seed(seed, &[4, v as u64, c]),
                cfg.proposal_width,
            )
            .unwrap();
            burn_in(&theta, &mut state, &cfg).unwrap();
            let (acc, _) =
                record_moments(&theta, &mut state, cfg.sweeps_between_samples, cfg.n_samples)
                    .unwrap();
            acc.means().unwrap()
        })
        .collect();
    let mut worst_sigma: f64 = 0.0;
    for site in 0..v {
        for (emp, exact) in [
            (per_chain.iter().map(|m| m.mean_phi[site]).collect::<Vec<_>>(), oracle.mean_phi[site]),
            (per_chain.iter().map(|m| m.mean_sq[site]).collect::<Vec<_>>(), oracle.mean_sq[site]),
            (
                per_chain.iter().map(|m| m.mean_quart[site]).collect::<Vec<_>>(),
                oracle.mean_quart[site],
            ),
        ] {
            let n = emp.len() as f64;
            let mean = emp.iter().sum::<f64>() / n;
            let var =
                emp.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
            let se = (var / n).sqrt().max(1e-5);
            worst_sigma = worst_sigma.max((mean - exact).abs() / se);
        }
    }
    Outcome {
        name: match v {
            1 => "sampler moments vs quadrature (V=1)",
            2 => "sampler moments vs quadrature (V=2)",
            _ => "sampler moments vs quadrature (V=3)",
        },
        detail: format!("worst deviation {worst_sigma:.2} SE (tol 4 SE)"),
        ok: worst_sigma < 4.0,
    }
}

fn sampler_determinism(seed: u64) -> Outcome {
    let mut rng = derive_rng(seed, &[5]);
    let theta = random_theta(&mut rng, 3);
    let cfg = SamplerConfig {
        proposal_width: 1.0,
        sweeps_burn_in: 100,
        sweeps_between_samples: 2,
        n_samples: 200,
        adapt_acceptance: Some(0.44),
    };
    let a = phi4_core::sampler::sample(&theta, &cfg, &FieldConfig::zeros(3), None, seed ^ 7)
        .unwrap();
    let b = phi4_core::sampler::sample(&theta, &cfg, &FieldConfig::zeros(3), None, seed ^ 7)
        .unwrap();
    let ok = a == b;
    Outcome {
        name: "seeded sample stream reproducibility",
        detail: if ok {
            format!("{} samples bit-identical across reruns", a.len())
        } else {
            "sample streams differ".into()
        },
        ok,
    }
}

fn conditional_sampling_vs_quadrature(seed: u64) -> Outcome {
    let mut rng = derive_rng(seed, &[6]);
    let theta = random_theta(&mut rng, 3);
    let clamp_spec = [Some(0.6), Some(-0.4), None];
    let oracle =
        conditional_quadrature_moments(&theta, &clamp_spec, &QuadratureSpec::with_points(401))
            .unwrap()
            .moments;
    let cfg = SamplerConfig {
        proposal_width: 1.0,
        sweeps_burn_in: 800,
        sweeps_between_samples: 3,
        n_samples: 20_000,
        adapt_acceptance: Some(0.44),
    };
    let clamp = phi4_core::Clamp::from_options(&clamp_spec);
    let summary =
        phi4_core::sampler::conditional_mean(&theta, &cfg, &clamp, derive_seed(seed, &[7]))
            .unwrap();
    let se = (summary.std[0] / (cfg.n_samples as f64).sqrt()).max(1e-4);
    let dev = (summary.mean[0] - oracle.mean_phi[2]).abs() / se;
    Outcome {
        name: "clamped conditional mean vs 1-D quadrature",
        detail: format!("deviation {dev:.2} SE (tol 4 SE)"),
        ok: dev < 4.0,
    }
}

fn kl_gradient_vs_quadrature(seed: u64) -> Outcome {
    let mut rng = derive_rng(seed, &[8]);
    let theta = random_theta(&mut rng, 2);
    let data: Vec<FieldConfig> = (0..100)
        .map(|_| {
            FieldConfig::new(vec![
                0.8 * rng.random_range(-1.0..1.0),
                0.8 * rng.random_range(-1.0..1.0),
            ])
            .unwrap()
        })
        .collect();
    let spec = QuadratureSpec::with_points(301);
    let data_m = data_moments(&data).unwrap().means().unwrap();
    let model_m = quadrature_moments(&theta, &spec).unwrap().moments;
    let grad = kl_gradient_from_means(&data_m, &model_m);

    let kl = |t: &CouplingSet| -> f64 {
        let mean_s: f64 =
            data.iter().map(|p| t.action(p).unwrap()).sum::<f64>() / data.len() as f64;
        mean_s + phi4_core::quadrature::log_partition(t, &spec).unwrap()
    };
    let h = 1e-4;
    let mut worst: f64 = 0.0;
    let mut check = |got: f64, rebuild: &dyn Fn(f64) -> CouplingSet| {
        let fd = (kl(&rebuild(h)) - kl(&rebuild(-h))) / (2.0 * h);
        worst = worst.max((got - fd).abs());
    };
    check(grad.weights[0], &|d| {
        CouplingSet::new(
            2,
            vec![theta.weights()[0] + d],
            theta.mass_sq().to_vec(),
            theta.quartic().to_vec(),
            theta.bias().to_vec(),
        )
        .unwrap()
    });
    for i in 0..2 {
        check(grad.mass_sq[i], &|d| {
            let mut m = theta.mass_sq().to_vec();
            m[i] += d;
            CouplingSet::new(
                2,
                theta.weights().to_vec(),
                m,
                theta.quartic().to_vec(),
                theta.bias().to_vec(),
            )
            .unwrap()
        });
        check(grad.quartic[i], &|d| {
            let mut l = theta.quartic().to_vec();
            l[i] += d;
            CouplingSet::new(
                2,
                theta.weights().to_vec(),
                theta.mass_sq().to_vec(),
                l,
                theta.bias().to_vec(),
            )
            .unwrap()
        });
        check(grad.bias[i], &|d| {
            let mut a = theta.bias().to_vec();
            a[i] += d;
            CouplingSet::new(
                2,
                theta.weights().to_vec(),
                theta.mass_sq().to_vec(),
                theta.quartic().to_vec(),
                a,
            )
            .unwrap()
        });
    }
    Outcome {
        name: "KL gradient vs quadrature finite differences",
        detail: format!("worst absolute gap {worst:.2e} (tol 1e-5)"),
        ok: worst < 1e-5,
    }
}
