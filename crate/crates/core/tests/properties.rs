use graphnls::calculus::{self, EnergyConvention, Gamma2Form, NormKind};
use graphnls::corpus;
use graphnls::curvature::{self, CdForms};
use graphnls::inequality;
use graphnls::nls::{self, Mode, MountainPassOptions, PowerNonlinearity, SignReport, SolveStatus};
use graphnls::spectral;
use graphnls::{AscentOptions, VertexFunction, VertexSubsetProblem, WeightedGraph};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn graph_and_functions(seed: u64, max_n: usize, count: usize) -> (WeightedGraph, Vec<Vec<f64>>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.gen_range(2..=max_n);
    let g = corpus::random_connected(n, 0.1, 10.0, rng.gen());
    let fs = (0..count)
        .map(|_| (0..n).map(|_| rng.gen_range(-3.0..3.0)).collect())
        .collect();
    (g, fs)
}

fn close(a: f64, b: f64, rel: f64) -> bool {
    (a - b).abs() <= rel * a.abs().max(b.abs()).max(1e-300)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn gamma_forms_agree(seed in any::<u64>()) {
        let (g, fs) = graph_and_functions(seed, 12, 2);
        let a = calculus::gamma(&g, &fs[0], &fs[1]);
        let b = calculus::gamma_product_rule(&g, &fs[0], &fs[1]);
        let scale = fs.iter().flatten().fold(1.0f64, |m, v| m.max(v.abs()));
        for (x, y) in a.iter().zip(b.iter()) {
            prop_assert!((x - y).abs() <= 1e-12 * scale * scale * 4.0);
        }
        let gs = calculus::gamma(&g, &fs[0], &fs[0]);
        let grad = calculus::grad_norm_sq(&g, &fs[0]);
        for (x, y) in gs.iter().zip(grad.iter()) {
            prop_assert!(close(2.0 * x, *y, 1e-12));
        }
    }

    #[test]
    fn gamma2_forms_agree(seed in any::<u64>()) {
        let (g, fs) = graph_and_functions(seed, 12, 1);
        let a = calculus::gamma2(&g, &fs[0], Gamma2Form::Iterated);
        let b = calculus::gamma2(&g, &fs[0], Gamma2Form::Expanded);
        for (x, y) in a.iter().zip(b.iter()) {
            prop_assert!(close(*x, *y, 1e-10), "{x} vs {y}");
        }
    }

    #[test]
    fn divergence_and_green(seed in any::<u64>()) {
        let (g, fs) = graph_and_functions(seed, 15, 2);
        let (u, v) = (&fs[0], &fs[1]);
        let lap = calculus::laplacian(&g, u);
        let scale: f64 = g.edges().iter().map(|&(x, y, w)| 2.0 * w * (u[x] - u[y]).abs()).sum();
        prop_assert!(calculus::integrate(&g, &lap).abs() <= 1e-12 * scale);
        let lhs: f64 = (0..g.len()).map(|x| g.mu(x) * v[x] * lap[x]).sum();
        let rhs = -calculus::integrate(&g, &calculus::gamma(&g, u, v));
        let terms: f64 = (0..g.len()).map(|x| (g.mu(x) * v[x] * lap[x]).abs()).sum();
        prop_assert!((lhs - rhs).abs() <= 1e-13 * terms);
        // int |grad u|^2 = 2 E(u)
        let grad = calculus::integrate(&g, &calculus::grad_norm_sq(&g, u));
        prop_assert!(close(grad, 2.0 * calculus::dirichlet_energy(&g, u), 1e-12));
    }

    #[test]
    fn handshake_identity(seed in any::<u64>()) {
        let (g, _) = graph_and_functions(seed, 20, 0);
        let weights: f64 = g.edges().iter().map(|e| e.2).sum();
        prop_assert!(close(g.total_volume(), 2.0 * weights, 1e-14));
    }

    #[test]
    fn json_round_trip_is_bit_exact(seed in any::<u64>()) {
        let (g, fs) = graph_and_functions(seed, 15, 1);
        let text = g.to_json_string();
        let back = WeightedGraph::from_json_str(&text).unwrap();
        prop_assert_eq!(back.to_json_string(), text);
        for (a, b) in g.edges().iter().zip(back.edges()) {
            prop_assert_eq!(a.2.to_bits(), b.2.to_bits());
        }
        let u = VertexFunction::new(&g, fs[0].clone()).unwrap();
        let json = serde_json::to_string(&serde_json::Value::Object(u.to_labeled(&g))).unwrap();
        let back = VertexFunction::from_json_str(&g, &json).unwrap();
        for (a, b) in u.iter().zip(back.iter()) {
            prop_assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn cd_form_is_local_and_kills_constants(seed in any::<u64>(), xi in -2.0f64..2.0) {
        let (g, fs) = graph_and_functions(seed, 12, 2);
        let x = (seed as usize) % g.len();
        let q = curvature::local_cd_form(&g, x, 2.0, xi).unwrap();
        prop_assert!(q.evaluate(&vec![1.0; g.len()]).abs() < 1e-10);
        // changing u outside the 2-ball leaves the form unchanged
        let ball = g.ball(x, 2);
        let mut u2 = fs[0].clone();
        for y in 0..g.len() {
            if !ball.contains(&y) {
                u2[y] = fs[1][y];
            }
        }
        prop_assert!(close(q.evaluate(&fs[0]), q.evaluate(&u2), 1e-12));
        // Q(u) = Gamma2 - (Lap u)^2 / m - xi Gamma at the center
        let g2 = calculus::gamma2(&g, &fs[0], Gamma2Form::Iterated)[x];
        let lap = calculus::laplacian(&g, &fs[0])[x];
        let gm = calculus::gamma(&g, &fs[0], &fs[0])[x];
        let direct = g2 - lap * lap / 2.0 - xi * gm;
        prop_assert!((q.evaluate(&fs[0]) - direct).abs() <= 1e-9 * (g2.abs() + lap * lap + gm.abs()).max(1.0));
    }

    #[test]
    fn cd_monotone_in_xi_and_m(seed in any::<u64>()) {
        let (g, _) = graph_and_functions(seed, 10, 0);
        let forms = CdForms::new(&g);
        let min = |m: f64, xi: f64| forms.min_eigs(m, xi).into_iter().fold(f64::INFINITY, f64::min);
        prop_assert!(min(2.0, -1.0) >= min(2.0, 0.0) - 1e-12);
        prop_assert!(min(2.0, 0.0) >= min(2.0, 1.0) - 1e-12);
        prop_assert!(min(4.0, 0.0) >= min(2.0, 0.0) - 1e-12);
        prop_assert!(min(1e6, 0.0) >= min(4.0, 0.0) - 1e-12);
        let xi = forms.best_xi(2.0);
        prop_assert!(forms.holds(2.0, xi));
        prop_assert!(!forms.holds(2.0, xi + 1e-6));
        let lin_yau = curvature::lin_yau_certificate(&g);
        prop_assert!(xi >= lin_yau.xi - 1e-9);
    }

    #[test]
    fn spectrum_is_orthonormal_and_bounded(seed in any::<u64>()) {
        let (g, _) = graph_and_functions(seed, 15, 0);
        let pairs = spectral::spectrum(&g).unwrap();
        prop_assert_eq!(pairs[0].lambda, 0.0);
        for (i, p) in pairs.iter().enumerate() {
            prop_assert!(p.lambda <= 2.0 + 1e-12);
            prop_assert!(p.residual < 1e-10);
            for q in &pairs[i..] {
                let ip: f64 = (0..g.len()).map(|x| g.mu(x) * p.u[x] * q.u[x]).sum();
                let expected = if std::ptr::eq(p, q) { 1.0 } else { 0.0 };
                prop_assert!((ip - expected).abs() < 1e-10);
            }
        }
        for p in spectral::nonzero_pairs(&pairs) {
            let r = spectral::rayleigh_quotient(&g, &p.u, EnergyConvention::DirichletEnergy).unwrap();
            prop_assert!(close(r, p.lambda, 1e-9));
        }
    }

    #[test]
    fn rayleigh_quotient_bounded_below(seed in any::<u64>()) {
        let (g, mut fs) = graph_and_functions(seed, 15, 1);
        calculus::remove_mean(&g, &mut fs[0]);
        let lambda1 = spectral::spectrum(&g).unwrap()[1].lambda;
        let r = spectral::rayleigh_quotient(&g, &fs[0], EnergyConvention::DirichletEnergy).unwrap();
        prop_assert!(r >= lambda1 * (1.0 - 1e-10));
        let r2 = spectral::rayleigh_quotient(&g, &fs[0], EnergyConvention::GradSq).unwrap();
        prop_assert!(close(r2, 2.0 * r, 1e-14));
    }

    #[test]
    fn theorem2_holds_at_certified_curvature(seed in any::<u64>()) {
        let (g, _) = graph_and_functions(seed, 10, 0);
        let forms = CdForms::new(&g);
        let xi = forms.best_xi(2.0);
        let pairs = spectral::spectrum(&g).unwrap();
        for p in spectral::nonzero_pairs(&pairs) {
            prop_assert!(inequality::check_lambda_bound(p.lambda, 2.0, xi).unwrap().holds);
            let r = inequality::check_theorem2_certified(&g, p, 2.0, xi, true).unwrap();
            prop_assert!(r.slack >= -1e-9, "{r:?}");
        }
    }

    #[test]
    fn tm_functional_at_least_volume(seed in any::<u64>(), beta in 0.1f64..3.0, p in 2.1f64..6.0) {
        let (g, fs) = graph_and_functions(seed, 15, 1);
        let v = inequality::tm_functional(&g, &fs[0], beta, p).unwrap();
        prop_assert!(v >= g.total_volume());
    }

    #[test]
    fn gradient_matches_finite_differences(seed in any::<u64>(), dirichlet in any::<bool>(), grad_sq in any::<bool>()) {
        let (g, fs) = graph_and_functions(seed, 10, 2);
        let n = g.len();
        let mode = if dirichlet && n >= 3 {
            Mode::Dirichlet(VertexSubsetProblem::new(&g, &(0..n - 1).collect::<Vec<_>>()).unwrap())
        } else {
            Mode::Whole
        };
        let mask = |v: &[f64]| -> Vec<f64> {
            v.iter().enumerate().map(|(x, &val)| match &mode {
                Mode::Dirichlet(p) if !p.contains(x) => 0.0,
                _ => val,
            }).collect()
        };
        let conv = if grad_sq { EnergyConvention::GradSq } else { EnergyConvention::DirichletEnergy };
        let f = PowerNonlinearity::uniform(&g, 3.5, 0.7).unwrap();
        let (u, v) = (mask(&fs[0]), mask(&fs[1]));
        let grad = nls::gradient_j(&g, &u, -0.3, &f, &mode, conv).unwrap();
        let h = 1e-6;
        let at = |s: f64| {
            let w: Vec<f64> = u.iter().zip(&v).map(|(a, b)| a + s * b).collect();
            nls::functional_j(&g, &w, -0.3, &f, &mode, conv).unwrap()
        };
        let fd = (at(h) - at(-h)) / (2.0 * h);
        let exact: f64 = (0..n).map(|x| g.mu(x) * grad[x] * v[x]).sum();
        // central differences lose about eps |J| / h to cancellation
        let tol = 1e-6 * exact.abs() + 1e-8 * at(0.0).abs() + 1e-9;
        prop_assert!((fd - exact).abs() <= tol, "{fd} vs {exact}");
    }

    #[test]
    fn constant_solutions_scale(seed in any::<u64>(), alpha in -3.0f64..-0.1, q in 2.5f64..6.0, c in 0.2f64..5.0) {
        // u = (-alpha)^(1/(q-2)) solves -Lap u - alpha u = u^(q-1); c u solves
        // it with coefficient c^(2-q)
        let (g, _) = graph_and_functions(seed, 10, 0);
        let t = (-alpha).powf(1.0 / (q - 2.0));
        let f = PowerNonlinearity::uniform(&g, q, 1.0).unwrap();
        let conv = EnergyConvention::DirichletEnergy;
        let r = nls::verify_solution(&g, &vec![t; g.len()], alpha, &f, &Mode::Whole, conv);
        prop_assert!(r.residual < 1e-10 * t.max(1.0).powf(q));
        let scaled = PowerNonlinearity::uniform(&g, q, c.powf(2.0 - q)).unwrap();
        let r = nls::verify_solution(&g, &vec![c * t; g.len()], alpha, &scaled, &Mode::Whole, conv);
        prop_assert!(r.residual < 1e-10 * (c * t).max(1.0).powf(q));
        let ct = r.constant_test.unwrap();
        prop_assert!(ct.consistent && ct.admits_nonnegative_solution);
    }

    #[test]
    fn sobolev_constant_dominates_samples(seed in any::<u64>()) {
        let (g, mut fs) = graph_and_functions(seed, 6, 3);
        let opts = AscentOptions { starts: 4, seed, ..Default::default() };
        let est = inequality::sobolev_constant(&g, 2.0, 4.0, &opts).unwrap();
        let sup = inequality::sobolev_constant(&g, 2.0, f64::INFINITY, &opts).unwrap();
        for u in fs.iter_mut() {
            calculus::remove_mean(&g, u);
            let den = calculus::norm(&g, u, NormKind::SobolevSeminorm(2.0)).unwrap();
            let q4 = calculus::norm(&g, u, NormKind::Lp(4.0)).unwrap();
            let inf = calculus::norm(&g, u, NormKind::SupNorm).unwrap();
            prop_assert!(est.value >= q4 / den * (1.0 - 1e-9));
            prop_assert!(sup.value >= inf / den * (1.0 - 1e-9));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn tm_estimate_invariant_under_relabeling(seed in any::<u64>()) {
        let (g, _) = graph_and_functions(seed, 6, 0);
        let mut perm: Vec<usize> = (0..g.len()).collect();
        perm.reverse();
        perm.rotate_left((seed % g.len() as u64) as usize);
        let h = g.permuted(&perm).unwrap();
        let opts = AscentOptions { seed: 3, ..Default::default() };
        let a = inequality::tm_sup_estimate(&g, 1.5, 3.0, &opts).unwrap();
        let b = inequality::tm_sup_estimate(&h, 1.5, 3.0, &opts).unwrap();
        prop_assert!(a.converged && b.converged);
        prop_assert!((a.empirical_sup - b.empirical_sup).abs() <= 1e-8 * a.empirical_sup, "{} vs {}", a.empirical_sup, b.empirical_sup);
    }

    #[test]
    fn mountain_pass_invariants(seed in any::<u64>(), alpha in -2.0f64..-0.2) {
        let (g, _) = graph_and_functions(seed, 8, 0);
        let f = PowerNonlinearity::uniform(&g, 4.0, 1.0).unwrap();
        let opts = MountainPassOptions { seed, ..Default::default() };
        let sol = nls::mountain_pass_solve(&g, alpha, &f, &Mode::Whole, EnergyConvention::DirichletEnergy, &opts).unwrap();
        prop_assert!(sol.trace.path_max.windows(2).all(|w| w[1] <= w[0]));
        if sol.status == SolveStatus::Converged {
            prop_assert!(sol.residual < 1e-10);
            prop_assert!(matches!(sol.sign_report, SignReport::Positive | SignReport::Nonnegative), "{:?}", sol.sign_report);
            let ct = nls::verify_solution(&g, &sol.u, alpha, &f, &Mode::Whole, EnergyConvention::DirichletEnergy)
                .constant_test
                .unwrap();
            prop_assert!((ct.lhs - ct.rhs).abs() <= 1e-9 * ct.rhs.abs().max(1.0));
        }
    }

    #[test]
    fn dirichlet_solutions_vanish_on_boundary(seed in any::<u64>()) {
        let (g, _) = graph_and_functions(seed, 8, 0);
        prop_assume!(g.len() >= 3);
        let interior: Vec<usize> = (0..g.len() - 1).collect();
        let prob = VertexSubsetProblem::new(&g, &interior).unwrap();
        let lambda = spectral::dirichlet_lambda1(&g, &prob).unwrap().lambda;
        let mode = Mode::Dirichlet(prob.clone());
        let f = PowerNonlinearity::uniform(&g, 3.0, 1.0).unwrap();
        let opts = MountainPassOptions { seed, ..Default::default() };
        let sol = nls::mountain_pass_solve(&g, 0.5 * lambda, &f, &mode, EnergyConvention::DirichletEnergy, &opts).unwrap();
        prop_assert!(sol.trace.path_max.windows(2).all(|w| w[1] <= w[0]));
        for &b in prob.boundary() {
            prop_assert_eq!(sol.u[b], 0.0);
        }
        let outside = (0..g.len()).filter(|x| !prob.contains(*x));
        for x in outside {
            prop_assert_eq!(sol.u[x], 0.0);
        }
        prop_assert_eq!(sol.status, SolveStatus::Converged);
        prop_assert!(sol.residual < 1e-10);
    }
}
