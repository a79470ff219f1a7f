#ifndef MASEM_SEM_HPP
#define MASEM_SEM_HPP

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "masem/pooled_matrix.hpp"

namespace masem {

struct PathEquation {
    std::string dependent;
    std::vector<std::string> predictors;
};

// Recursive path model over observed variables. Exogenous variables correlate
// freely; residuals are uncorrelated.
struct PathModelSpec {
    std::string name;
    std::vector<PathEquation> equations;

    // Union of all variables, in first-appearance order.
    std::vector<std::string> variables() const;

    // Text format: one equation per line, "DEP ~ P1 + P2 + ...".
    // '#' starts a comment. Throws ModelError on cycles or repeated
    // dependents, ParseError on malformed lines.
    static PathModelSpec parse(const std::string& text, const std::string& name = "");
    static PathModelSpec load(const std::filesystem::path& path);
};

// RAM formulation: A holds directed paths (A[i][j] = path j -> i), S the
// symmetric covariance of exogenous variables and residuals, filter = I
// (all variables observed). Implied covariance: (I-A)^-1 S (I-A)^-T.
//
// Free parameters, in order: one per path, one per exogenous covariance,
// one variance per variable (exogenous variance or residual variance).
struct RamMatrices {
    std::vector<std::string> variables;
    std::vector<std::pair<int, int>> path_params; // (row, col) in A
    std::vector<std::pair<int, int>> cov_params;  // (row, col) in S, row < col
    std::vector<int> endogenous;                  // indices with an equation
    std::vector<int> exogenous;

    int n_vars() const { return static_cast<int>(variables.size()); }
    int n_free() const {
        return static_cast<int>(path_params.size() + cov_params.size()) + n_vars();
    }
    int degrees_of_freedom() const {
        int p = n_vars();
        return p * (p + 1) / 2 - n_free();
    }

    // theta layout: [paths..., exo covariances..., variances...]
    Eigen::MatrixXd a_matrix(const Eigen::VectorXd& theta) const;
    Eigen::MatrixXd s_matrix(const Eigen::VectorXd& theta) const;
};

// Maps the model onto RAM skeletons over the given variable order. Throws
// ModelError when the spec is cyclic or names a variable not in `variables`.
RamMatrices build_ram(const PathModelSpec& spec, const std::vector<std::string>& variables);

// Sigma(theta) = (I-A)^-1 S (I-A)^-T. Throws DomainError when I-A is singular.
Eigen::MatrixXd implied_covariance(const RamMatrices& ram, const Eigen::VectorXd& theta);

// ML discrepancy F(theta) = log|Sigma| + tr(S_obs Sigma^-1) - log|S_obs| - p,
// +inf when Sigma is not positive definite.
double fml(const RamMatrices& ram, const Eigen::MatrixXd& observed, const Eigen::VectorXd& theta);

// Analytic gradient of F, same parameter order as theta.
Eigen::VectorXd fml_gradient(const RamMatrices& ram, const Eigen::MatrixXd& observed,
                             const Eigen::VectorXd& theta);

struct PathCoefficient {
    std::string dependent;
    std::string predictor;
    double estimate = 0.0;
    double se = 0.0;
    double z = 0.0;
    double p = 1.0;
};

struct WaldTest {
    std::string dependent;
    double w = 0.0;
    int df = 0;
    double p = 1.0;
};

// Indirect effect of `source` on `target` through at least one mediator,
// with a first-order delta-method standard error.
struct IndirectEffect {
    std::string source;
    std::string target;
    double estimate = 0.0;
    double se = 0.0;
    double z = 0.0;
    double p = 1.0;
};

struct FitIndices {
    bool saturated = false; // df = 0: indices undefined by construction
    std::optional<double> cfi;
    std::optional<double> tli;
    std::optional<double> rmsea;
    std::optional<double> p_chi2;
    double srmr = 0.0;
    double aic = 0.0; // chi2 + 2q
    double bic = 0.0; // chi2 + q ln
};

struct FitResult {
    std::string model_name;
    RamMatrices ram;
    Eigen::VectorXd theta;     // estimates, ram parameter order
    Eigen::MatrixXd param_cov; // inverse observed information at the optimum
    std::vector<PathCoefficient> coefficients;
    std::map<std::string, double> r2; // per endogenous variable
    double f_min = 0.0;
    double chi2 = 0.0;
    int df = 0;
    double chi2_baseline = 0.0;
    int df_baseline = 0;
    FitIndices indices;
    std::vector<WaldTest> wald;
    Eigen::MatrixXd direct;   // [target][source] path coefficients
    Eigen::MatrixXd indirect; // total - direct
    Eigen::MatrixXd total;    // (I-B)^-1 - I
    std::vector<IndirectEffect> indirect_effects;
    int n_used = 0;
    int q_free = 0;
    bool converged = false;
    int iterations = 0;

    const std::vector<std::string>& variables() const { return ram.variables; }
    const PathCoefficient& coefficient(const std::string& dependent,
                                       const std::string& predictor) const;
    double effect(const Eigen::MatrixXd& m, const std::string& source,
                  const std::string& target) const;
};

struct FitOptions {
    int max_iterations = 500;
    double gradient_tolerance = 1e-8;   // max-norm
    double relative_f_tolerance = 1e-12;
    bool throw_on_nonconvergence = true;
    // start from zero paths/covariances and unit variances instead of the
    // OLS/sample-moment point (forces the quasi-Newton iteration to work)
    bool neutral_start = false;
};

// Fits by maximum likelihood with a BFGS quasi-Newton iteration (analytic
// gradient, OLS/sample-moment start, steepest-descent fallback on stall).
// The correlation matrix is treated as a covariance matrix with
// N = round(n_harmonic). Standard errors come from the observed information
// at the optimum; chi2 = (N-1) * F_min.
FitResult fit(const RamMatrices& ram, const PooledMatrix& pooled,
              const FitOptions& options = {});
FitResult fit(const RamMatrices& ram, const Eigen::MatrixXd& observed, int n,
              const std::string& model_name = "", const FitOptions& options = {});

// Builds the RAM map over the spec's own variable union and fits it on the
// matching submatrix of `pooled`.
FitResult fit_model(const PathModelSpec& spec, const PooledMatrix& pooled,
                    const FitOptions& options = {});

// Independence-model baseline on the same matrix: chi2_b = (N-1)(-log|S|),
// df_b = p(p-1)/2.
double baseline_chi2(const Eigen::MatrixXd& observed, int n);

// CFI/TLI/RMSEA/SRMR/AIC/BIC per the conventions above. `residual_std` is
// the standardized residual matrix (S - Sigma) / sqrt(s_ii s_jj); SRMR
// averages its squared lower triangle including the diagonal.
FitIndices fit_indices(double chi2, int df, double chi2_b, int df_b, int n,
                       const Eigen::MatrixXd& residual_std, int q_free);

// W = b' V_b^-1 b on (number of predictors) df for one equation. Uses the
// fit's parameter covariance.
WaldTest wald_equation_test(const FitResult& result, const std::string& dependent);

// Direct, indirect and total effect matrices plus delta-method standard
// errors for every structurally nonzero indirect path. fit() calls this;
// exposed for reuse on existing results.
void effects(FitResult& result);

} // namespace masem

#endif
