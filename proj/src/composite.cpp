#include "masem/composite.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

namespace masem {

namespace {

constexpr double kRangeSlack = 1e-12;

// Composites of valid correlation matrices are valid correlations; anything
// outside (-1,1) beyond numerical slack signals inconsistent input.
double check_range(double value, const std::string& what) {
    if (!std::isfinite(value))
        throw DomainError(what + ": non-finite result");
    if (std::abs(value) >= 1.0) {
        if (std::abs(value) - 1.0 > kRangeSlack)
            throw DomainError(what + ": composite " + std::to_string(value) +
                              " lies outside (-1, 1)");
        value = value > 0 ? 1.0 - kRangeSlack : -1.0 + kRangeSlack;
    }
    return value;
}

} // namespace

double composite_one_many(std::span<const double> r_xy, double rbar_yy) {
    if (r_xy.empty()) throw DomainError("composite_one_many: empty correlation list");
    const double n = static_cast<double>(r_xy.size());
    const double denom_sq = n + n * (n - 1.0) * rbar_yy;
    if (!(denom_sq > 0.0))
        throw DomainError("composite_one_many: non-positive denominator " +
                          std::to_string(denom_sq));
    const double sum = std::accumulate(r_xy.begin(), r_xy.end(), 0.0);
    return check_range(sum / std::sqrt(denom_sq), "composite_one_many");
}

double composite_many_many(const CompositeInput& input) {
    const auto nx = input.xx.rows();
    const auto ny = input.yy.rows();
    if (input.cross.rows() != nx || input.cross.cols() != ny)
        throw DomainError("composite_many_many: cross must be n_x x n_y");
    if (input.xx.cols() != nx || input.yy.cols() != ny)
        throw DomainError("composite_many_many: xx and yy must be square");
    for (Eigen::Index i = 0; i < nx; ++i)
        if (std::abs(input.xx(i, i) - 1.0) > 1e-12)
            throw DomainError("composite_many_many: xx diagonal must be 1");
    for (Eigen::Index i = 0; i < ny; ++i)
        if (std::abs(input.yy(i, i) - 1.0) > 1e-12)
            throw DomainError("composite_many_many: yy diagonal must be 1");

    const double sum_xx = input.xx.sum();
    const double sum_yy = input.yy.sum();
    if (!(sum_xx > 0.0) || !(sum_yy > 0.0))
        throw DomainError("composite_many_many: non-positive denominator");
    return check_range(input.cross.sum() / (std::sqrt(sum_xx) * std::sqrt(sum_yy)),
                       "composite_many_many");
}

namespace {

std::vector<std::string> side_measures(const ClusteredGroup& group, bool first_side) {
    std::set<std::string> seen;
    std::vector<std::string> measures;
    for (const auto& o : group.cross) {
        const std::string& m = first_side ? o.measure_a : o.measure_b;
        if (seen.insert(m).second) measures.push_back(m);
    }
    return measures;
}

// Inter-correlation matrix among `measures` from the study's within-set
// observations. Every off-diagonal entry must be present.
Eigen::MatrixXd within_matrix(const ClusteredGroup& group, const ClusteredData& data,
                              const std::string& var, const std::vector<std::string>& measures) {
    const auto n = static_cast<Eigen::Index>(measures.size());
    Eigen::MatrixXd m = Eigen::MatrixXd::Identity(n, n);
    const auto* within = data.within_of(group.study_id, var);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = i + 1; j < n; ++j) {
            double value = 0.0;
            bool found = false;
            if (within) {
                for (const auto& o : *within) {
                    if ((o.measure_a == measures[i] && o.measure_b == measures[j]) ||
                        (o.measure_a == measures[j] && o.measure_b == measures[i])) {
                        value = o.r;
                        found = true;
                        break;
                    }
                }
            }
            if (!found)
                throw DomainError("study " + group.study_id + ", variable " + var +
                                  ": missing inter-correlation between '" + measures[i] +
                                  "' and '" + measures[j] + "' needed for the composite");
            m(i, j) = m(j, i) = value;
        }
    }
    return m;
}

} // namespace

ComposedCorrelation compose_group(const ClusteredGroup& group, const ClusteredData& data) {
    if (group.cross.empty())
        throw DomainError("empty group for (" + group.var_a + ", " + group.var_b + ")");

    ComposedCorrelation out;
    out.study_id = group.study_id;
    out.var_a = group.var_a;
    out.var_b = group.var_b;

    // Cross observations are keyed (var_a measure, var_b measure); the
    // loader guarantees no duplicates, so a single observation means a
    // single measure on each side (or a precomposed row): identity.
    if (group.cross.size() == 1) {
        out.r = group.cross.front().r;
        out.composed = false;
        return out;
    }

    const auto a_measures = side_measures(group, true);
    const auto b_measures = side_measures(group, false);
    const auto na = static_cast<Eigen::Index>(a_measures.size());
    const auto nb = static_cast<Eigen::Index>(b_measures.size());

    CompositeInput input;
    input.cross = Eigen::MatrixXd::Zero(na, nb);
    Eigen::MatrixXd have = Eigen::MatrixXd::Zero(na, nb);
    for (const auto& o : group.cross) {
        auto ia = std::find(a_measures.begin(), a_measures.end(), o.measure_a) - a_measures.begin();
        auto ib = std::find(b_measures.begin(), b_measures.end(), o.measure_b) - b_measures.begin();
        input.cross(ia, ib) = o.r;
        have(ia, ib) = 1.0;
    }
    if (have.sum() != static_cast<double>(na * nb))
        throw DomainError("study " + group.study_id + " (" + group.var_a + ", " + group.var_b +
                          "): incomplete cross-correlation block");
    input.xx = within_matrix(group, data, group.var_a, a_measures);
    input.yy = within_matrix(group, data, group.var_b, b_measures);

    out.r = composite_many_many(input);
    out.composed = true;
    return out;
}

std::vector<ComposedCorrelation> compose_all(const ClusteredData& data) {
    std::vector<ComposedCorrelation> out;
    out.reserve(data.groups.size());
    for (const auto& group : data.groups) out.push_back(compose_group(group, data));
    return out;
}

} // namespace masem
