#ifndef MASEM_POOLED_MATRIX_HPP
#define MASEM_POOLED_MATRIX_HPP

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "masem/meta.hpp"

namespace masem {

// Pooled correlation matrix over an ordered variable subset plus the
// harmonic-mean effective sample size over the per-pair cumulative Ns.
// Pairs with no studies are recorded in missing_pairs and hold NaN in r;
// the SEM stage refuses matrices with missing pairs.
struct PooledMatrix {
    std::vector<std::string> variables;
    Eigen::MatrixXd r;        // symmetric, unit diagonal, NaN where missing
    Eigen::MatrixXd n_cells;  // per-pair cumulative N (0 on diagonal/missing)
    double n_harmonic = 0.0;  // over available off-diagonal pairs
    std::vector<PairKey> missing_pairs;

    int index_of(const std::string& var) const;
};

// Builds the matrix for `variables` from pooled cells. With
// allow_missing=false every pairwise cell must exist; the error lists all
// missing pairs. n_harmonic is the harmonic mean of the per-pair cumulative
// sample sizes.
PooledMatrix assemble(const std::map<PairKey, PooledCell>& cells,
                      const std::vector<std::string>& variables,
                      bool allow_missing = false);

// Submatrix over `variables` with the harmonic mean recomputed from that
// subset's per-pair Ns. Throws when a needed pair is missing or carries no N.
PooledMatrix subset(const PooledMatrix& matrix, const std::vector<std::string>& variables);

struct PdCheck {
    double min_eigenvalue = 0.0;
    bool positive_definite = false; // min eigenvalue > 1e-10
    bool near_singular = false;     // PD but min eigenvalue < 1e-4
};

PdCheck check_positive_definite(const Eigen::MatrixXd& symmetric);

// Floors eigenvalues at `floor` and rescales back to unit diagonal. Only for
// explicit opt-in repair of non-PD pooled matrices.
Eigen::MatrixXd repair_positive_definite(const Eigen::MatrixXd& symmetric,
                                         double floor = 1e-6);

// CSV with variables as header row and first column; missing cells are empty.
void write_matrix_csv(const std::filesystem::path& path, const PooledMatrix& matrix);
PooledMatrix load_matrix_csv(const std::filesystem::path& path);

} // namespace masem

#endif
