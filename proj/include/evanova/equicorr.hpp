#pragma once

// Closed-form linear algebra and log-densities for equicorrelated
// ("compound symmetry") multivariate normal vectors of cell means.
//
// For an I-vector with common correlation rho and per-coordinate variance
// sigma2/n:
//
//   det(R)        = (1 + (I-1) rho) (1 - rho)^(I-1)
//   d' R^{-1} d   = 1/(1-rho) [ sum d_i^2 - rho/(1+(I-1)rho) (sum d_i)^2 ]
//
// where R is the correlation matrix. All densities are computed and
// returned in log space; the (1-rho)^(I-1) factor underflows long before
// the log form loses accuracy.

#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <vector>

namespace evanova {

// Largest correlation the evidence pipeline ever evaluates; estimates that
// land within 1e-12 of 1 are clamped here and flagged degenerate upstream.
inline constexpr double kRhoMax = 1.0 - 1e-12;

inline void require_rho(double rho) {
    if (!(rho >= 0.0 && rho < 1.0))
        throw std::domain_error("rho must lie in [0, 1)");
}

struct EquicorrSpec {
    int dim = 0;          // number of coordinates (I, or I_k for one group)
    double rho = 0.0;     // common correlation, in [0, 1)
    double sigma2 = 1.0;  // error variance, score^2 units
    double n = 1.0;       // observations per cell (fractional allowed)

    void validate() const {
        if (dim < 1) throw std::invalid_argument("EquicorrSpec: dim must be >= 1");
        require_rho(rho);
        if (!(sigma2 > 0.0)) throw std::invalid_argument("EquicorrSpec: sigma2 must be > 0");
        if (!(n > 0.0)) throw std::invalid_argument("EquicorrSpec: n must be > 0");
    }
};

// log[(1 + (dim-1) rho) (1 - rho)^(dim-1)], via log1p for stability near 0 and 1.
inline double equicorr_logdet(int dim, double rho) {
    require_rho(rho);
    if (dim < 1) throw std::invalid_argument("equicorr_logdet: dim must be >= 1");
    const double m = static_cast<double>(dim - 1);
    return std::log1p(m * rho) + m * std::log1p(-rho);
}

// d' R^{-1} d for the equicorrelation matrix R (no sigma2/n prefactor).
inline double equicorr_quadform(std::span<const double> devs, double rho) {
    require_rho(rho);
    const double m = static_cast<double>(devs.size()) - 1.0;
    double sum = 0.0;
    double sumsq = 0.0;
    for (double d : devs) {
        sum += d;
        sumsq += d * d;
    }
    return (sumsq - rho / (1.0 + m * rho) * sum * sum) / (1.0 - rho);
}

// Log of the joint density of the cell-mean vector `means` around `nu`,
// all coordinates sharing one correlation:
//   (n / (2 pi sigma2))^{I/2} det(R)^{-1/2} exp(-n/(2 sigma2) d'R^{-1}d)
inline double log_density_pooled(std::span<const double> means,
                                 std::span<const double> nu,
                                 const EquicorrSpec& spec) {
    spec.validate();
    if (means.size() != nu.size() || means.size() != static_cast<std::size_t>(spec.dim))
        throw std::invalid_argument("log_density_pooled: length mismatch");

    std::vector<double> devs(means.size());
    for (std::size_t i = 0; i < means.size(); ++i) devs[i] = means[i] - nu[i];

    const double quad = equicorr_quadform(devs, spec.rho);
    return 0.5 * spec.dim * std::log(spec.n / (2.0 * M_PI * spec.sigma2))
         - 0.5 * equicorr_logdet(spec.dim, spec.rho)
         - 0.5 * spec.n / spec.sigma2 * quad;
}

// Block-diagonal variant: each group carries its own rho (and spec), groups
// are independent. `groups` holds cell indices into `means`/`nu`.
inline double log_density_pergroup(std::span<const double> means,
                                   std::span<const double> nu,
                                   std::span<const EquicorrSpec> group_specs,
                                   std::span<const std::vector<std::size_t>> groups) {
    if (means.size() != nu.size())
        throw std::invalid_argument("log_density_pergroup: length mismatch");
    if (group_specs.size() != groups.size())
        throw std::invalid_argument("log_density_pergroup: one spec per group required");

    double total = 0.0;
    for (std::size_t k = 0; k < groups.size(); ++k) {
        const auto& idx = groups[k];
        if (idx.size() != static_cast<std::size_t>(group_specs[k].dim))
            throw std::invalid_argument("log_density_pergroup: group size does not match spec dim");
        std::vector<double> m(idx.size()), v(idx.size());
        for (std::size_t j = 0; j < idx.size(); ++j) {
            if (idx[j] >= means.size())
                throw std::invalid_argument("log_density_pergroup: group index out of range");
            m[j] = means[idx[j]];
            v[j] = nu[idx[j]];
        }
        total += log_density_pooled(m, v, group_specs[k]);
    }
    return total;
}

}  // namespace evanova
