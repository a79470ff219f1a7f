#ifndef MASEM_COMPOSITE_HPP
#define MASEM_COMPOSITE_HPP

#include <span>
#include <vector>

#include <Eigen/Dense>

#include "masem/dataset.hpp"

namespace masem {

// Inputs for the general composite of two measure sets: cross-correlations
// between the x- and y-measures plus the inter-correlation matrices of each
// set (unit diagonal).
struct CompositeInput {
    Eigen::MatrixXd cross; // n_x x n_y
    Eigen::MatrixXd xx;    // n_x x n_x, symmetric, unit diagonal
    Eigen::MatrixXd yy;    // n_y x n_y, symmetric, unit diagonal
};

// Composite correlation between a single measure and the sum of n measures:
//   sum(r_xy) / sqrt(n + n(n-1)*rbar_yy)
// rbar_yy is the mean inter-correlation among the y measures.
double composite_one_many(std::span<const double> r_xy, double rbar_yy);

// General composite between two sums of measures:
//   sum(cross) / (sqrt(sum(xx)) * sqrt(sum(yy)))
// The element sums of xx and yy play the role of the composite SDs; with a
// single x-measure this reduces exactly to composite_one_many.
double composite_many_many(const CompositeInput& input);

// One study-level correlation for one canonical pair.
struct ComposedCorrelation {
    std::string study_id;
    std::string var_a;
    std::string var_b;
    double r = 0.0;
    bool composed = false; // false when the group passed through unchanged
};

// Collapses one clustered group to a single correlation. Groups with one
// cross-correlation (single measures or precomposed fixture rows) pass
// through unchanged; larger groups dispatch to the composite formulas and
// need the within-set inter-correlations from `data`.
ComposedCorrelation compose_group(const ClusteredGroup& group, const ClusteredData& data);

// compose_group over every group.
std::vector<ComposedCorrelation> compose_all(const ClusteredData& data);

} // namespace masem

#endif
