#include "masem/meta.hpp"

#include <algorithm>
#include <cmath>

#include <boost/math/distributions/chi_squared.hpp>
#include <boost/math/distributions/normal.hpp>

namespace masem {

namespace {

constexpr double kZCrit95 = 1.959964; // two-sided 95% normal quantile

double normal_two_sided_p(double statistic) {
    boost::math::normal_distribution<double> norm;
    return 2.0 * boost::math::cdf(boost::math::complement(norm, std::abs(statistic)));
}

double chi2_upper_tail(double x, double df) {
    if (x <= 0.0) return 1.0;
    boost::math::chi_squared_distribution<double> dist(df);
    return boost::math::cdf(boost::math::complement(dist, x));
}

} // namespace

double fisher_z(double r) {
    if (!(std::abs(r) < 1.0))
        throw DomainError("fisher_z: |r| must be < 1, got " + std::to_string(r));
    return std::atanh(r);
}

double inv_fisher(double z) { return std::tanh(z); }

EffectPoint EffectPoint::from_r(const std::string& study_id, double r, int n) {
    if (n < 4)
        throw DomainError("study " + study_id + ": N must be >= 4 for a finite Fisher variance");
    return EffectPoint{study_id, fisher_z(r), 1.0 / (n - 3.0), n};
}

double reml_log_likelihood(std::span<const EffectPoint> points, double tau2) {
    double sum_log = 0.0, sum_w = 0.0, sum_wz = 0.0;
    for (const auto& p : points) {
        const double w = 1.0 / (p.v + tau2);
        sum_log += std::log(p.v + tau2);
        sum_w += w;
        sum_wz += w * p.z;
    }
    const double mu = sum_wz / sum_w;
    double ss = 0.0;
    for (const auto& p : points) {
        const double w = 1.0 / (p.v + tau2);
        ss += w * (p.z - mu) * (p.z - mu);
    }
    return -0.5 * (sum_log + std::log(sum_w) + ss);
}

double reml_tau2(std::span<const EffectPoint> points) {
    const std::size_t k = points.size();
    if (k <= 1) return 0.0; // unidentifiable with one study

    double mean_z = 0.0;
    for (const auto& p : points) mean_z += p.z;
    mean_z /= static_cast<double>(k);
    double var_z = 0.0;
    for (const auto& p : points) var_z += (p.z - mean_z) * (p.z - mean_z);
    var_z /= static_cast<double>(k);

    const double hi = std::max(1.0, 10.0 * var_z);
    const auto neg_ll = [&](double t) { return -reml_log_likelihood(points, t); };

    // golden-section search on [0, hi], tolerance 1e-10 in tau^2
    constexpr double kInvPhi = 0.6180339887498949;
    double a = 0.0, b = hi;
    double c = b - kInvPhi * (b - a);
    double d = a + kInvPhi * (b - a);
    double fc = neg_ll(c), fd = neg_ll(d);
    while (b - a > 1e-10) {
        if (fc < fd) {
            b = d;
            d = c;
            fd = fc;
            c = b - kInvPhi * (b - a);
            fc = neg_ll(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + kInvPhi * (b - a);
            fd = neg_ll(d);
        }
    }
    double best = 0.5 * (a + b);
    // the maximizer is frequently at the boundary 0; compare explicitly
    if (neg_ll(0.0) <= neg_ll(best)) best = 0.0;
    return best;
}

PooledCell pool_cell(std::span<const EffectPoint> points) {
    if (points.empty()) throw DomainError("pool_cell: no effect points");
    PooledCell cell;
    cell.k = static_cast<int>(points.size());
    for (const auto& p : points) cell.n_total += p.n;

    cell.tau2 = reml_tau2(points);

    double sum_w = 0.0, sum_wz = 0.0;
    for (const auto& p : points) {
        const double w = 1.0 / (p.v + cell.tau2);
        sum_w += w;
        sum_wz += w * p.z;
    }
    cell.theta_z = sum_wz / sum_w;
    cell.se_theta = 1.0 / std::sqrt(sum_w);
    cell.r = inv_fisher(cell.theta_z);
    cell.ci_lo = inv_fisher(cell.theta_z - kZCrit95 * cell.se_theta);
    cell.ci_hi = inv_fisher(cell.theta_z + kZCrit95 * cell.se_theta);
    cell.p_z = normal_two_sided_p(cell.theta_z / cell.se_theta);

    if (cell.k >= 2) {
        // Cochran Q with fixed-effect weights about the fixed-effect mean
        double sum_wf = 0.0, sum_wfz = 0.0;
        for (const auto& p : points) {
            sum_wf += 1.0 / p.v;
            sum_wfz += p.z / p.v;
        }
        const double mu_f = sum_wfz / sum_wf;
        double q = 0.0;
        for (const auto& p : points) q += (p.z - mu_f) * (p.z - mu_f) / p.v;
        cell.q = q;
        const double df = cell.k - 1;
        cell.p_q = chi2_upper_tail(q, df);
        cell.i2 = q > 0.0 ? std::max(0.0, (q - df) / q) * 100.0 : 0.0;
        cell.h2 = q / df;
    }
    return cell;
}

PairKey::PairKey(std::string x, std::string y) : a(std::move(x)), b(std::move(y)) {
    if (b < a) std::swap(a, b);
}

PairEffects effects_by_pair(const std::vector<ComposedCorrelation>& composed,
                            const Dataset& dataset) {
    PairEffects effects;
    for (const auto& c : composed) {
        const auto& study = dataset.study(c.study_id);
        effects[PairKey(c.var_a, c.var_b)].push_back(
            EffectPoint::from_r(c.study_id, c.r, study.sample_n));
    }
    return effects;
}

std::map<PairKey, PooledCell> pool_all(const PairEffects& effects) {
    std::map<PairKey, PooledCell> cells;
    for (const auto& [pair, points] : effects) {
        if (points.empty()) continue;
        cells.emplace(pair, pool_cell(points));
    }
    return cells;
}

} // namespace masem
