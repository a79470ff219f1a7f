#ifndef MASEM_REPORT_HPP
#define MASEM_REPORT_HPP

#include <string>
#include <vector>

#include "masem/meta.hpp"
#include "masem/pooled_matrix.hpp"
#include "masem/sem.hpp"

namespace masem {

// Correlations and coefficients print with 3 decimals in paper style
// (".343", "-.110"); p-values below .0005 print as "<.001".
std::string format_r(double value);
std::string format_p(double value);

// Lower-triangular pooled correlation table in Markdown. Missing pairs
// print as an em-dash placeholder, never as zero.
std::string pooled_table_markdown(const std::map<PairKey, PooledCell>& cells,
                                  const std::vector<std::string>& variables);

// Pair-level CSV: var_a,var_b,k,n,r,ci_lo,ci_hi,p,theta_z,se_theta,tau2,q,p_q,i2,h2
std::string cells_csv(const std::map<PairKey, PooledCell>& cells,
                      const std::vector<std::string>& variables);
std::map<PairKey, PooledCell> load_cells_csv(const std::filesystem::path& path);

// Study-level forest data: var_a,var_b,study_id,n,r,ci_lo,ci_hi (CIs from
// the within-study variance alone, for external plotting).
std::string forest_csv(const PairEffects& effects);

// Per-model fit summary in Markdown (paths, R2, Wald, effects, indices).
std::string model_report_markdown(const FitResult& fit);

// Comparison table over several fits, sorted by AIC (saturated models first
// by their chi2-based AIC as well).
std::string comparison_table_markdown(const std::vector<FitResult>& fits);

} // namespace masem

#endif
