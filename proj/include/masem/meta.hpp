#ifndef MASEM_META_HPP
#define MASEM_META_HPP

#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "masem/composite.hpp"
#include "masem/dataset.hpp"

namespace masem {

// Fisher r-to-z transform, z = atanh(r). Requires |r| < 1.
double fisher_z(double r);
// Inverse transform, r = tanh(z).
double inv_fisher(double z);

// One study's contribution to a random-effects pool, in z-metric.
// v = 1/(N-3) is the within-study sampling variance.
struct EffectPoint {
    std::string study_id;
    double z = 0.0;
    double v = 0.0;
    int n = 0;

    static EffectPoint from_r(const std::string& study_id, double r, int n);
};

// Restricted log-likelihood of tau^2 given the points (up to a constant):
//   -1/2 [ sum log(v_i+t) + log sum w_i + sum w_i (z_i - mu)^2 ],
// w_i = 1/(v_i+t), mu = sum(w_i z_i)/sum(w_i).
double reml_log_likelihood(std::span<const EffectPoint> points, double tau2);

// REML estimate of the between-study variance: bounded golden-section
// maximization on [0, max(1, 10*var(z))], tolerance 1e-10, boundary 0
// compared explicitly. k <= 1 returns 0.
double reml_tau2(std::span<const EffectPoint> points);

// Random-effects pooled result for one variable pair.
struct PooledCell {
    double theta_z = 0.0;  // pooled effect, z-metric
    double se_theta = 0.0; // standard error of theta_z
    double tau2 = 0.0;
    double r = 0.0;        // tanh(theta_z)
    double ci_lo = 0.0;    // r-metric 95% CI
    double ci_hi = 0.0;
    double p_z = 1.0;      // two-sided normal p for theta_z
    double q = 0.0;        // Cochran Q, fixed-effect weights
    std::optional<double> p_q; // chi-square upper tail on k-1 df; absent at k=1
    std::optional<double> i2;  // max(0, (Q-(k-1))/Q)*100; absent at k=1
    std::optional<double> h2;  // Q/(k-1); absent at k=1
    int k = 0;
    long long n_total = 0;
};

// Inverse-variance random-effects pool with REML tau^2. Requires k >= 1.
PooledCell pool_cell(std::span<const EffectPoint> points);

// Unordered canonical-variable pair, stored sorted.
struct PairKey {
    std::string a;
    std::string b;

    PairKey() = default;
    PairKey(std::string x, std::string y);
    auto operator<=>(const PairKey&) const = default;
    std::string str() const { return a + "-" + b; }
};

using PairEffects = std::map<PairKey, std::vector<EffectPoint>>;

// Study-level effect points per pair, from composed correlations. Study Ns
// come from the dataset's study records.
PairEffects effects_by_pair(const std::vector<ComposedCorrelation>& composed,
                            const Dataset& dataset);

// Pools every pair with k >= 1. Pairs absent from the input stay missing --
// missingness is represented by absence, never by a zero cell.
std::map<PairKey, PooledCell> pool_all(const PairEffects& effects);

} // namespace masem

#endif
