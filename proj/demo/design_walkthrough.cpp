// Sample-size bounds for a 1:1 design as confounding grows.
#include <cmath>
#include <cstdio>

#include "pspower/pspower.hpp"

int main() {
    using namespace pspower;
    struct Row {
        double phi, s2, r2;
    };
    const Row rows[] = {{1.00, 20.02, 0.00}, {0.98, 19.96, 0.03}, {0.93, 19.95, 0.08},
                        {0.87, 19.90, 0.14}, {0.83, 19.85, 0.18}, {0.81, 19.81, 0.19}};

    std::printf("%6s %6s %8s %8s %10s %10s\n", "phi", "R2", "n_low", "n_high", "mu_e", "sigma_e2");
    for (const auto& row : rows) {
        DesignInputs d;
        d.overlap = {0.5, row.phi};
        d.tau_std = 1.0 / std::sqrt(row.s2);
        d.rho2 = 0.0;
        const auto lo = sample_size(d);
        d.rho2 = row.r2;
        const auto hi = sample_size(d);
        std::printf("%6.2f %6.2f %8lld %8lld %10.4f %10.4f\n", row.phi, row.r2,
                    static_cast<long long>(lo.n), static_cast<long long>(hi.n),
                    lo.trace.propensity.mu_e, lo.trace.propensity.sigma_e2);
    }

    std::printf("\nz-test size ignoring confounding: %lld\n",
                static_cast<long long>(ztest_size(0.05, 0.8, 0.5, 1.0 / std::sqrt(20.02))));

    DesignInputs rhc;
    rhc.overlap = {0.381, 0.835};
    rhc.tau_std = 0.14;
    for (auto est : {Estimand::ATE, Estimand::ATT, Estimand::ATO}) {
        rhc.estimand = est;
        rhc.tau_std = est == Estimand::ATE ? 0.14 : est == Estimand::ATT ? 0.15 : 0.16;
        const auto res = sample_size(rhc);
        std::printf("r=0.381 phi=0.835 %s effect=%.2f -> n=%lld (V=%.4f)\n",
                    std::string(to_string(est)).c_str(), rhc.tau_std,
                    static_cast<long long>(res.n), res.variance.v_total);
    }
    return 0;
}
