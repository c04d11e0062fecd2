#pragma once

// Fabrication simulator and independent numerical referees.
//
// The copying model: with shared draws U_j, idiosyncratic draws V_ij (both
// N(0, sigma2)) and indicators Delta_ij ~ Bernoulli(sqrt(rho)),
//
//   eps_ij = Delta_ij U_j + (1 - Delta_ij) V_ij
//
// so two errors in the same column j coincide (both equal U_j) with
// probability rho, giving cross-cell correlation rho. This module also
// provides the brute-force suprema (grid + golden-section) that referee the
// closed forms in evidence.hpp, and Monte Carlo helpers for distributional
// checks of the dependent t statistic.
//
// Replicated simulations draw each replicate from its own counter-based
// stream, so a parallel fan-out reproduces serial results exactly.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "evanova/evidence.hpp"
#include "evanova/rng.hpp"
#include "evanova/study.hpp"

namespace evanova {

struct CopyingDraw {
    int cells = 0;
    int per_cell = 0;
    std::vector<std::uint8_t> deltas;    // I x n, row-major
    std::vector<double> shared;          // n
    std::vector<double> idiosyncratic;   // I x n, row-major
};

struct RawDataset {
    int cells = 0;
    int per_cell = 0;
    std::vector<double> values;  // I x n, row-major
    std::vector<double> mu;
    double sigma2 = 1.0;
    double rho = 0.0;
    std::uint64_t seed = 0;
    std::uint64_t stream = 0;
    std::string generator = "counter-splitmix64/box-muller";

    double at(int i, int j) const { return values[static_cast<std::size_t>(i) * per_cell + j]; }
};

inline CopyingDraw sample_copying_draw(int cells, int per_cell, double rho, double sigma2,
                                       CounterRng& rng) {
    require_rho(rho);
    if (cells < 1 || per_cell < 1)
        throw std::invalid_argument("sample_copying_draw: dimensions must be positive");
    if (!(sigma2 > 0.0)) throw std::invalid_argument("sample_copying_draw: sigma2 must be > 0");
    const double sigma = std::sqrt(sigma2);
    const double p_copy = std::sqrt(rho);

    CopyingDraw d;
    d.cells = cells;
    d.per_cell = per_cell;
    d.shared.resize(per_cell);
    d.deltas.resize(static_cast<std::size_t>(cells) * per_cell);
    d.idiosyncratic.resize(static_cast<std::size_t>(cells) * per_cell);
    for (int j = 0; j < per_cell; ++j) d.shared[j] = sigma * rng.next_normal();
    for (int i = 0; i < cells; ++i)
        for (int j = 0; j < per_cell; ++j) {
            const std::size_t idx = static_cast<std::size_t>(i) * per_cell + j;
            d.deltas[idx] = rng.next_bernoulli(p_copy) ? 1 : 0;
            d.idiosyncratic[idx] = sigma * rng.next_normal();
        }
    return d;
}

// Draw an I x n dataset X_ij = mu_i + eps_ij under the copying model.
inline RawDataset fabricate(int cells, int per_cell, std::span<const double> mu, double sigma2,
                            double rho, std::uint64_t seed, std::uint64_t stream = 0) {
    if (per_cell < 2)
        throw std::invalid_argument("fabricate: per_cell must be an integer >= 2");
    if (mu.size() != static_cast<std::size_t>(cells))
        throw std::invalid_argument("fabricate: one mu per cell required");

    CounterRng rng(seed, stream);
    const CopyingDraw d = sample_copying_draw(cells, per_cell, rho, sigma2, rng);

    RawDataset out;
    out.cells = cells;
    out.per_cell = per_cell;
    out.mu.assign(mu.begin(), mu.end());
    out.sigma2 = sigma2;
    out.rho = rho;
    out.seed = seed;
    out.stream = stream;
    out.values.resize(static_cast<std::size_t>(cells) * per_cell);
    for (int i = 0; i < cells; ++i)
        for (int j = 0; j < per_cell; ++j) {
            const std::size_t idx = static_cast<std::size_t>(i) * per_cell + j;
            const double eps = d.deltas[idx] ? d.shared[j] : d.idiosyncratic[idx];
            out.values[idx] = mu[i] + eps;
        }
    return out;
}

inline std::vector<double> cell_means(const RawDataset& data) {
    std::vector<double> m(data.cells, 0.0);
    for (int i = 0; i < data.cells; ++i) {
        double sum = 0.0;
        for (int j = 0; j < data.per_cell; ++j) sum += data.at(i, j);
        m[i] = sum / data.per_cell;
    }
    return m;
}

// (1 / (I (n-1))) sum_i sum_j (X_ij - Xbar_i)^2, unbiased for sigma^2
// whatever the cross-cell correlation.
inline double mse_estimate(const RawDataset& data) {
    if (data.per_cell < 2) throw std::invalid_argument("mse_estimate: per_cell must be >= 2");
    const auto means = cell_means(data);
    double ss = 0.0;
    for (int i = 0; i < data.cells; ++i)
        for (int j = 0; j < data.per_cell; ++j) {
            const double d = data.at(i, j) - means[i];
            ss += d * d;
        }
    return ss / (static_cast<double>(data.cells) * (data.per_cell - 1));
}

struct LemmaSample {
    std::vector<double> z;
    double zbar = 0.0;
    double s2 = 0.0;
};

inline LemmaSample make_lemma_sample(std::vector<double> z) {
    if (z.size() < 2) throw std::invalid_argument("LemmaSample: need at least 2 coordinates");
    LemmaSample s;
    s.zbar = std::accumulate(z.begin(), z.end(), 0.0) / z.size();
    double ss = 0.0;
    for (double v : z) ss += (v - s.zbar) * (v - s.zbar);
    s.s2 = ss / (z.size() - 1);
    s.z = std::move(z);
    return s;
}

// Equicorrelated standard normals: Z_i = sqrt(rho) W0 + sqrt(1-rho) W_i.
inline LemmaSample sample_equicorr_standard(int d, double rho, CounterRng& rng) {
    require_rho(rho);
    if (d < 2) throw std::invalid_argument("sample_equicorr_standard: d must be >= 2");
    const double a = std::sqrt(rho);
    const double b = std::sqrt(1.0 - rho);
    const double w0 = rng.next_normal();
    std::vector<double> z(d);
    for (int i = 0; i < d; ++i) z[i] = a * w0 + b * rng.next_normal();
    return make_lemma_sample(std::move(z));
}

// sqrt(d (1-rho) / (1 + (d-1) rho)) * zbar / s, t-distributed with d-1
// degrees of freedom under equicorrelation rho.
inline double dependent_t(const LemmaSample& sample, double rho) {
    require_rho(rho);
    if (!(sample.s2 > 0.0)) throw std::invalid_argument("dependent_t: zero sample variance");
    const double d = static_cast<double>(sample.z.size());
    return std::sqrt(d * (1.0 - rho) / (1.0 + (d - 1.0) * rho)) * sample.zbar /
           std::sqrt(sample.s2);
}

// ---------------------------------------------------------------------------
// Numerical referees
// ---------------------------------------------------------------------------

struct SupChiResult {
    double rho_star = 0.0;
    double log_value = 0.0;
    double value = 1.0;
    bool diverged = false;  // objective still rising at the edge of the rho range
};

// Brute-force sup of chi over rho in [0, 1-1e-6]: grid scan followed by
// golden-section refinement on the bracketing interval. log chi has at most
// two interior critical points, so the bracketed arc is unimodal. This is
// the referee for the closed form in evidence.hpp and must stay independent
// of it.
inline SupChiResult sup_chi_oracle(double ss, int dim, double n, double sigma2,
                                   int grid_points = 10000) {
    if (grid_points < 1000)
        throw std::invalid_argument("sup_chi_oracle: need at least 1000 grid points");
    const double rho_hi = 1.0 - 1e-6;
    auto objective = [&](double rho) { return log_chi(rho, ss, dim, n, sigma2); };

    double best_rho = 0.0;
    double best_val = objective(0.0);  // exactly 0
    int best_idx = 0;
    for (int i = 1; i <= grid_points; ++i) {
        const double rho = rho_hi * i / grid_points;
        const double val = objective(rho);
        if (val > best_val) {
            best_val = val;
            best_rho = rho;
            best_idx = i;
        }
    }

    SupChiResult out;
    if (best_idx == grid_points && ss == 0.0) {
        out.diverged = true;
        out.rho_star = rho_hi;
        out.log_value = best_val;
        out.value = std::numeric_limits<double>::infinity();
        return out;
    }

    // Golden-section on [rho_(i-1), rho_(i+1)] around the best grid point.
    const double step = rho_hi / grid_points;
    double a = std::max(0.0, best_rho - step);
    double b = std::min(rho_hi, best_rho + step);
    constexpr double kInvPhi = 0.6180339887498949;
    double x1 = b - kInvPhi * (b - a);
    double x2 = a + kInvPhi * (b - a);
    double f1 = objective(x1);
    double f2 = objective(x2);
    for (int it = 0; it < 200 && (b - a) > 1e-14; ++it) {
        if (f1 < f2) {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + kInvPhi * (b - a);
            f2 = objective(x2);
        } else {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - kInvPhi * (b - a);
            f1 = objective(x1);
        }
    }
    double refined_rho = 0.5 * (a + b);
    double refined_val = objective(refined_rho);
    if (refined_val >= best_val) {
        out.rho_star = refined_rho;
        out.log_value = refined_val;
    } else {
        out.rho_star = best_rho;
        out.log_value = best_val;
    }
    out.value = std::exp(out.log_value);
    return out;
}

namespace detail {

// For one group held at center nu: sup over rho of the density ratio
//   det^{-1/2} exp( -n rho / (2 sigma2 (1-rho)) [ A - B^2/(1+(I-1)rho) ] )
// with A = sum (x_i - nu)^2 and B = sum (x_i - nu). At nu = xbar this is
// exactly the chi function; elsewhere the bracket depends on rho.
inline double log_sup_ratio_at_nu(std::span<const double> x, double nu, double n, double sigma2,
                                  int grid_points) {
    const double dim = static_cast<double>(x.size());
    double a_term = 0.0, b_term = 0.0;
    for (double v : x) {
        a_term += (v - nu) * (v - nu);
        b_term += v - nu;
    }
    auto objective = [&](double rho) {
        const double bracket = a_term - b_term * b_term / (1.0 + (dim - 1.0) * rho);
        return -0.5 * equicorr_logdet(static_cast<int>(x.size()), rho) -
               n * rho / (2.0 * sigma2 * (1.0 - rho)) * bracket;
    };
    const double rho_hi = 1.0 - 1e-6;
    double best = objective(0.0);
    double best_rho = 0.0;
    for (int i = 1; i <= grid_points; ++i) {
        const double rho = rho_hi * i / grid_points;
        const double val = objective(rho);
        if (val > best) {
            best = val;
            best_rho = rho;
        }
    }
    const double step = rho_hi / grid_points;
    double lo = std::max(0.0, best_rho - step);
    double hi = std::min(rho_hi, best_rho + step);
    for (int it = 0; it < 120 && (hi - lo) > 1e-13; ++it) {
        const double m1 = lo + (hi - lo) / 3.0;
        const double m2 = hi - (hi - lo) / 3.0;
        if (objective(m1) < objective(m2))
            lo = m1;
        else
            hi = m2;
    }
    return std::max(best, objective(0.5 * (lo + hi)));
}

// Golden-section minimization of a 1-d function over [a, b].
template <typename F>
inline double golden_min(F&& f, double a, double b, double tol, int max_iter = 400) {
    constexpr double kInvPhi = 0.6180339887498949;
    double x1 = b - kInvPhi * (b - a);
    double x2 = a + kInvPhi * (b - a);
    double f1 = f(x1);
    double f2 = f(x2);
    int it = 0;
    while ((b - a) > tol && it++ < max_iter) {
        if (f1 > f2) {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + kInvPhi * (b - a);
            f2 = f(x2);
        } else {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - kInvPhi * (b - a);
            f1 = f(x1);
        }
    }
    if (it >= max_iter)
        throw std::runtime_error("v_tilde_oracle: nuisance minimization did not converge");
    return 0.5 * (a + b);
}

}  // namespace detail

// Alternative definition of the evidential value: hold the group centers
// fixed, take the sup over the per-group correlations, then minimize over
// the centers. Groups are independent, so the outer inf separates into one
// scalar minimization per group, started and bracketed around the group
// mean (where the minimum is attained). Serves as an independent referee
// for evidence_pergroup.
inline double v_tilde_oracle(const StudySummary& study, double sigma2, double tol = 1e-6,
                             std::optional<double> n_override = std::nullopt) {
    if (!(sigma2 > 0.0)) throw std::invalid_argument("v_tilde_oracle: sigma2 must be > 0");
    const double n = n_override.value_or(study.table.per_cell_count());
    const auto groups = resolve_groups(study.table, study.grouping);
    const auto means = group_means(study.table, study.grouping);

    constexpr int kGrid = 2000;
    double log_v = 0.0;
    for (std::size_t k = 0; k < groups.size(); ++k) {
        if (groups[k].size() < 2)
            throw std::invalid_argument("v_tilde_oracle: every group needs at least two cells");
        std::vector<double> x;
        x.reserve(groups[k].size());
        double lo = std::numeric_limits<double>::infinity();
        double hi = -std::numeric_limits<double>::infinity();
        for (std::size_t i : groups[k]) {
            x.push_back(study.table.cells[i].mean);
            lo = std::min(lo, x.back());
            hi = std::max(hi, x.back());
        }
        const double spread = std::max(hi - lo, 1e-3);
        auto inner = [&](double nu) {
            return detail::log_sup_ratio_at_nu(x, nu, n, sigma2, kGrid);
        };
        const double nu_star = detail::golden_min(inner, means[k] - 2.0 * spread,
                                                  means[k] + 2.0 * spread, tol * spread);
        log_v += inner(nu_star);
    }
    return std::exp(log_v);
}

// ---------------------------------------------------------------------------
// Null calibration
// ---------------------------------------------------------------------------

struct CalibrationResult {
    int reps = 0;
    std::uint64_t seed = 0;
    double sigma2_true = 0.0;
    int per_cell = 0;
    std::vector<double> v_pooled;     // sorted ascending
    std::vector<double> v_per_group;  // sorted ascending
    bool single_rep_warning = false;

    static double quantile(const std::vector<double>& sorted, double q) {
        if (sorted.empty()) return std::numeric_limits<double>::quiet_NaN();
        const double pos = q * (sorted.size() - 1);
        const std::size_t i = static_cast<std::size_t>(pos);
        if (i + 1 >= sorted.size()) return sorted.back();
        const double frac = pos - i;
        return sorted[i] * (1.0 - frac) + sorted[i + 1] * frac;
    }

    // P(V > v0) with its binomial standard error.
    static std::pair<double, double> exceedance(const std::vector<double>& sorted, double v0) {
        if (sorted.empty()) return {0.0, 0.0};
        const auto it = std::upper_bound(sorted.begin(), sorted.end(), v0);
        const double p = static_cast<double>(sorted.end() - it) / sorted.size();
        const double se = std::sqrt(p * (1.0 - p) / sorted.size());
        return {p, se};
    }
};

// Distribution of V under proper data: raw datasets are drawn with rho = 0
// and cell means equal to the template's group means, aggregated to cell
// means, sigma^2 re-estimated per replicate from the raw MSE, and both
// evidence models evaluated. Each replicate owns stream = replicate index.
inline CalibrationResult null_calibration(const StudySummary& tmpl, double sigma2, int reps,
                                          std::uint64_t seed) {
    if (reps < 1) throw std::invalid_argument("null_calibration: reps must be >= 1");
    if (!(sigma2 > 0.0)) throw std::invalid_argument("null_calibration: sigma2 must be > 0");

    const auto groups = resolve_groups(tmpl.table, tmpl.grouping);
    const auto nu = group_means(tmpl.table, tmpl.grouping);
    const int cells = static_cast<int>(tmpl.table.cells.size());
    const int n_int = std::max(2, static_cast<int>(std::llround(tmpl.table.per_cell_count())));

    std::vector<double> mu(cells, 0.0);
    for (std::size_t k = 0; k < groups.size(); ++k)
        for (std::size_t i : groups[k]) mu[i] = nu[k];

    CalibrationResult out;
    out.reps = reps;
    out.seed = seed;
    out.sigma2_true = sigma2;
    out.per_cell = n_int;
    out.single_rep_warning = (reps == 1);
    out.v_pooled.reserve(reps);
    out.v_per_group.reserve(reps);

    StudySummary synthetic = tmpl;
    synthetic.table.rounding_decimals = std::nullopt;  // simulated means are exact
    synthetic.table.total_observations = static_cast<double>(cells) * n_int;

    for (int r = 0; r < reps; ++r) {
        const RawDataset data = fabricate(cells, n_int, mu, sigma2, 0.0, seed, r);
        const auto m = cell_means(data);
        for (int i = 0; i < cells; ++i) synthetic.table.cells[i].mean = m[i];
        const double sigma2_rep = mse_estimate(data);
        out.v_pooled.push_back(evidence_pooled(synthetic, sigma2_rep).v);
        out.v_per_group.push_back(evidence_pergroup(synthetic, sigma2_rep).v);
    }
    std::sort(out.v_pooled.begin(), out.v_pooled.end());
    std::sort(out.v_per_group.begin(), out.v_per_group.end());
    return out;
}

}  // namespace evanova
