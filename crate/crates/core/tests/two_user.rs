use robustwf::metrics::social_optimum_bruteforce;
use robustwf::rates::sum_rate;
use robustwf::solver::{default_initial_profile, solve, Schedule, SolverOptions};
use robustwf::twouser::{
    alpha_crit, antisym_sum_rate, antisym_sum_rate_at, interior_dp_deps, interior_p, interior_profile, AntiSymSystem,
};

fn solver_p(sys: &AntiSymSystem) -> f64 {
    let (ch, cfg) = (sys.channels(), sys.config());
    let opts = SolverOptions {
        tol: 1e-14,
        max_iters: 100_000,
        record_trajectory: false,
    };
    let res = solve(&ch, &cfg, &default_initial_profile(&cfg).unwrap(), &Schedule::gauss_seidel(), &opts).unwrap();
    assert!(res.converged);
    res.profile.get(0, 0)
}

#[test]
fn closed_form_matches_the_solver() {
    for (alpha, m, eps) in [(0.1, 1.5, 0.0), (0.2, 2.0, 0.05), (0.3, 3.0, 0.05), (0.25, 2.5, 0.1)] {
        let sys = AntiSymSystem::new(alpha, m, 0.1, eps).unwrap();
        assert!((solver_p(&sys) - interior_p(&sys).unwrap()).abs() < 1e-10);
    }
}

#[test]
fn closed_form_derivative_matches_solver_differences() {
    let sys = AntiSymSystem::new(0.2, 2.0, 0.5, 0.05).unwrap();
    let h = 1e-4;
    let fd = (solver_p(&sys.with_eps(0.05 + h).unwrap()) - solver_p(&sys.with_eps(0.05 - h).unwrap())) / (2.0 * h);
    let exact = interior_dp_deps(&sys).unwrap();
    assert!((fd - exact).abs() < 1e-6 * exact.abs());
}

#[test]
fn critical_coupling_is_efficient_and_flat() {
    for (m, sigma2) in [(1.5, 0.1), (3.0, 1.0)] {
        let a = alpha_crit(m, sigma2);
        let s0 = antisym_sum_rate(&AntiSymSystem::new(a, m, sigma2, 0.0).unwrap()).unwrap();
        for p in [0.55, 0.7, 0.95] {
            assert!((antisym_sum_rate_at(a, m, sigma2, p) - s0).abs() < 1e-10);
        }
        let sys = AntiSymSystem::new(a, m, sigma2, 0.1).unwrap();
        let opt = social_optimum_bruteforce(&sys.channels(), &sys.config(), 100).unwrap();
        let eq = sum_rate(&sys.channels(), &interior_profile(&sys).unwrap()).unwrap();
        assert!((opt.sum_rate / eq - 1.0).abs() < 1e-9);
    }
}
