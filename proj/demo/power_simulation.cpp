// Empirical power on a simulated superpopulation against the analytic design size.
#include <cmath>
#include <cstdio>

#include "pspower/pspower.hpp"

int main(int argc, char** argv) {
    using namespace pspower;
    const double kappa = argc > 1 ? std::atof(argv[1]) : 1.0;
    SimulationConfig cfg;
    cfg.kappa = kappa;
    cfg.n_pop = 200000;
    cfg.b_reps = 500;

    const Dataset pop = fit_logistic(generate(cfg));
    const auto s = extract_summaries(pop);
    std::printf("r=%.3f phi=%.3f S2=%.2f rho2=%.3f R2=%.3f\n", s.r, s.phi_hat, s.s2_pooled,
                s.rho2_pooled, s.r2);

    DesignInputs d;
    d.overlap = {s.r, std::min(s.phi_hat, 1.0)};
    d.tau_std = cfg.tau / std::sqrt(s.s2_pooled);
    d.rho2 = s.rho2_pooled;
    const auto n = sample_size(d).n;
    std::printf("design size n=%lld\n", static_cast<long long>(n));

    const TiltingFunction ate{Estimand::ATE};
    for (bool fitted : {false, true}) {
        const auto p = empirical_power(pop, n, cfg.b_reps, ate, fitted, 0.05, Sidedness::two,
                                       SamplingMode::without_replacement, cfg.seed);
        std::printf("%s scores: power %.3f (se %.3f, failures %lld)\n", fitted ? "fitted" : "true",
                    p.power, p.mc_se, static_cast<long long>(p.failures));
    }
    return 0;
}
