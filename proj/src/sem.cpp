#include "masem/sem.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <boost/math/distributions/chi_squared.hpp>
#include <boost/math/distributions/normal.hpp>

#include "csv.hpp"

namespace masem {

namespace {

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

// ---------------------------------------------------------------- model spec

std::vector<std::string> PathModelSpec::variables() const {
    std::vector<std::string> vars;
    auto push = [&](const std::string& v) {
        if (std::find(vars.begin(), vars.end(), v) == vars.end()) vars.push_back(v);
    };
    for (const auto& eq : equations) {
        push(eq.dependent);
        for (const auto& p : eq.predictors) push(p);
    }
    return vars;
}

PathModelSpec PathModelSpec::parse(const std::string& text, const std::string& name) {
    PathModelSpec spec;
    spec.name = name;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    std::set<std::string> dependents;
    while (std::getline(in, line)) {
        ++lineno;
        auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = csv::strip(line);
        if (line.empty()) continue;

        auto tilde = line.find('~');
        if (tilde == std::string::npos)
            throw ParseError("model '" + name + "' line " + std::to_string(lineno) +
                             ": expected 'DEP ~ P1 + P2 + ...'");
        PathEquation eq;
        eq.dependent = csv::strip(line.substr(0, tilde));
        if (eq.dependent.empty())
            throw ParseError("model '" + name + "' line " + std::to_string(lineno) +
                             ": empty dependent variable");
        std::string rhs = line.substr(tilde + 1);
        std::size_t start = 0;
        while (start <= rhs.size()) {
            auto plus = rhs.find('+', start);
            std::string tok = csv::strip(plus == std::string::npos ? rhs.substr(start)
                                                                   : rhs.substr(start, plus - start));
            if (tok.empty())
                throw ParseError("model '" + name + "' line " + std::to_string(lineno) +
                                 ": empty predictor");
            if (tok == eq.dependent)
                throw ModelError("model '" + name + "': " + tok + " cannot predict itself");
            if (std::find(eq.predictors.begin(), eq.predictors.end(), tok) != eq.predictors.end())
                throw ModelError("model '" + name + "': duplicate predictor " + tok);
            eq.predictors.push_back(tok);
            if (plus == std::string::npos) break;
            start = plus + 1;
        }
        if (!dependents.insert(eq.dependent).second)
            throw ModelError("model '" + name + "': " + eq.dependent +
                             " appears twice as a dependent variable");
        spec.equations.push_back(std::move(eq));
    }
    if (spec.equations.empty())
        throw ParseError("model '" + name + "': no equations");

    // recursivity: the directed graph predictor -> dependent must be acyclic
    auto vars = spec.variables();
    std::map<std::string, std::vector<std::string>> out_edges;
    std::map<std::string, int> in_degree;
    for (const auto& v : vars) in_degree[v] = 0;
    for (const auto& eq : spec.equations) {
        for (const auto& p : eq.predictors) {
            out_edges[p].push_back(eq.dependent);
            ++in_degree[eq.dependent];
        }
    }
    std::vector<std::string> queue;
    for (const auto& [v, deg] : in_degree)
        if (deg == 0) queue.push_back(v);
    std::size_t done = 0;
    while (done < queue.size()) {
        const std::string v = queue[done++];
        for (const auto& w : out_edges[v])
            if (--in_degree[w] == 0) queue.push_back(w);
    }
    if (done != vars.size())
        throw ModelError("model '" + name + "': the equation system is cyclic");
    return spec;
}

PathModelSpec PathModelSpec::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open model file: " + path.string());
    std::stringstream buf;
    buf << in.rdbuf();
    return parse(buf.str(), path.stem().string());
}

// ----------------------------------------------------------------------- RAM

RamMatrices build_ram(const PathModelSpec& spec, const std::vector<std::string>& variables) {
    RamMatrices ram;
    ram.variables = variables;
    auto index_of = [&](const std::string& v) {
        auto it = std::find(variables.begin(), variables.end(), v);
        if (it == variables.end())
            throw ModelError("model '" + spec.name + "': variable " + v +
                             " is not in the data matrix");
        return static_cast<int>(it - variables.begin());
    };

    std::set<int> endo;
    for (const auto& eq : spec.equations) {
        const int d = index_of(eq.dependent);
        endo.insert(d);
        for (const auto& p : eq.predictors) ram.path_params.emplace_back(d, index_of(p));
    }
    for (int i = 0; i < ram.n_vars(); ++i)
        (endo.count(i) ? ram.endogenous : ram.exogenous).push_back(i);

    // one free covariance per exogenous pair; residuals stay uncorrelated
    for (std::size_t a = 0; a < ram.exogenous.size(); ++a)
        for (std::size_t b = a + 1; b < ram.exogenous.size(); ++b)
            ram.cov_params.emplace_back(std::min(ram.exogenous[a], ram.exogenous[b]),
                                        std::max(ram.exogenous[a], ram.exogenous[b]));

    if (ram.degrees_of_freedom() < 0)
        throw ModelError("model '" + spec.name + "': more free parameters than moments");
    return ram;
}

Eigen::MatrixXd RamMatrices::a_matrix(const Eigen::VectorXd& theta) const {
    Eigen::MatrixXd a = Eigen::MatrixXd::Zero(n_vars(), n_vars());
    for (std::size_t k = 0; k < path_params.size(); ++k)
        a(path_params[k].first, path_params[k].second) = theta(static_cast<Eigen::Index>(k));
    return a;
}

Eigen::MatrixXd RamMatrices::s_matrix(const Eigen::VectorXd& theta) const {
    const auto np = path_params.size();
    const auto nc = cov_params.size();
    Eigen::MatrixXd s = Eigen::MatrixXd::Zero(n_vars(), n_vars());
    for (std::size_t k = 0; k < nc; ++k) {
        const auto [i, j] = cov_params[k];
        s(i, j) = s(j, i) = theta(static_cast<Eigen::Index>(np + k));
    }
    for (int i = 0; i < n_vars(); ++i) s(i, i) = theta(static_cast<Eigen::Index>(np + nc) + i);
    return s;
}

Eigen::MatrixXd implied_covariance(const RamMatrices& ram, const Eigen::VectorXd& theta) {
    const Eigen::MatrixXd a = ram.a_matrix(theta);
    const Eigen::MatrixXd ima = Eigen::MatrixXd::Identity(ram.n_vars(), ram.n_vars()) - a;
    Eigen::FullPivLU<Eigen::MatrixXd> lu(ima);
    if (!lu.isInvertible()) throw DomainError("implied_covariance: I - A is singular");
    const Eigen::MatrixXd b = lu.inverse();
    return b * ram.s_matrix(theta) * b.transpose();
}

// ------------------------------------------------------------ ML discrepancy

double fml(const RamMatrices& ram, const Eigen::MatrixXd& observed,
           const Eigen::VectorXd& theta) {
    const auto p = observed.rows();
    Eigen::MatrixXd sigma;
    try {
        sigma = implied_covariance(ram, theta);
    } catch (const DomainError&) {
        return std::numeric_limits<double>::infinity();
    }
    Eigen::LLT<Eigen::MatrixXd> llt(sigma);
    if (llt.info() != Eigen::Success) return std::numeric_limits<double>::infinity();

    double logdet_sigma = 0.0;
    for (Eigen::Index i = 0; i < p; ++i) logdet_sigma += 2.0 * std::log(llt.matrixL()(i, i));
    const Eigen::MatrixXd sigma_inv = llt.solve(Eigen::MatrixXd::Identity(p, p));

    Eigen::LLT<Eigen::MatrixXd> llt_obs(observed);
    if (llt_obs.info() != Eigen::Success)
        throw DomainError("fml: observed matrix is not positive definite");
    double logdet_obs = 0.0;
    for (Eigen::Index i = 0; i < p; ++i) logdet_obs += 2.0 * std::log(llt_obs.matrixL()(i, i));

    return logdet_sigma + (observed * sigma_inv).trace() - logdet_obs - static_cast<double>(p);
}

Eigen::VectorXd fml_gradient(const RamMatrices& ram, const Eigen::MatrixXd& observed,
                             const Eigen::VectorXd& theta) {
    const auto p = observed.rows();
    const Eigen::MatrixXd a = ram.a_matrix(theta);
    const Eigen::MatrixXd ima = Eigen::MatrixXd::Identity(p, p) - a;
    const Eigen::MatrixXd b = ima.inverse();
    const Eigen::MatrixXd s = ram.s_matrix(theta);
    const Eigen::MatrixXd sigma = b * s * b.transpose();
    const Eigen::MatrixXd sigma_inv = sigma.llt().solve(Eigen::MatrixXd::Identity(p, p));

    // dF/dSigma-weighted core: G = Sigma^-1 (Sigma - S_obs) Sigma^-1
    const Eigen::MatrixXd g = sigma_inv * (sigma - observed) * sigma_inv;
    const Eigen::MatrixXd grad_a = 2.0 * b.transpose() * g * sigma; // dF/dA at (i,j)
    const Eigen::MatrixXd grad_s = b.transpose() * g * b;           // dF/dS

    const auto np = ram.path_params.size();
    const auto nc = ram.cov_params.size();
    Eigen::VectorXd grad(static_cast<Eigen::Index>(ram.n_free()));
    for (std::size_t k = 0; k < np; ++k)
        grad(static_cast<Eigen::Index>(k)) = grad_a(ram.path_params[k].first, ram.path_params[k].second);
    for (std::size_t k = 0; k < nc; ++k) {
        const auto [i, j] = ram.cov_params[k];
        grad(static_cast<Eigen::Index>(np + k)) = 2.0 * grad_s(i, j);
    }
    for (int i = 0; i < ram.n_vars(); ++i)
        grad(static_cast<Eigen::Index>(np + nc) + i) = grad_s(i, i);
    return grad;
}

// -------------------------------------------------------------- optimization

namespace {

// OLS start: regression coefficients per equation, sample moments for the
// exogenous block, OLS residual variances. For recursive models this point
// is already the ML solution; the quasi-Newton iteration then only has to
// confirm stationarity.
Eigen::VectorXd initial_theta(const RamMatrices& ram, const Eigen::MatrixXd& observed) {
    const auto np = ram.path_params.size();
    const auto nc = ram.cov_params.size();
    Eigen::VectorXd theta = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(ram.n_free()));

    // group path params by dependent
    std::map<int, std::vector<std::size_t>> by_dep;
    for (std::size_t k = 0; k < np; ++k) by_dep[ram.path_params[k].first].push_back(k);

    for (const auto& [dep, params] : by_dep) {
        const auto m = static_cast<Eigen::Index>(params.size());
        Eigen::MatrixXd rxx(m, m);
        Eigen::VectorXd rxy(m);
        for (Eigen::Index i = 0; i < m; ++i) {
            const int pi = ram.path_params[params[static_cast<std::size_t>(i)]].second;
            rxy(i) = observed(pi, dep);
            for (Eigen::Index j = 0; j < m; ++j) {
                const int pj = ram.path_params[params[static_cast<std::size_t>(j)]].second;
                rxx(i, j) = observed(pi, pj);
            }
        }
        Eigen::VectorXd beta = rxx.ldlt().solve(rxy);
        for (Eigen::Index i = 0; i < m; ++i)
            theta(static_cast<Eigen::Index>(params[static_cast<std::size_t>(i)])) = beta(i);
        const double resid = observed(dep, dep) - beta.dot(rxy);
        theta(static_cast<Eigen::Index>(np + nc) + dep) = std::max(resid, 1e-8);
    }
    for (std::size_t k = 0; k < nc; ++k)
        theta(static_cast<Eigen::Index>(np + k)) =
            observed(ram.cov_params[k].first, ram.cov_params[k].second);
    for (int v : ram.exogenous)
        theta(static_cast<Eigen::Index>(np + nc) + v) = observed(v, v);
    return theta;
}

struct OptimResult {
    Eigen::VectorXd theta;
    double f = 0.0;
    bool converged = false;
    int iterations = 0;
};

// BFGS with Armijo backtracking; resets to the steepest-descent direction
// when the quasi-Newton step stalls.
OptimResult minimize_bfgs(const RamMatrices& ram, const Eigen::MatrixXd& observed,
                          Eigen::VectorXd theta, const FitOptions& opt) {
    const auto n = theta.size();
    Eigen::MatrixXd h_inv = Eigen::MatrixXd::Identity(n, n);
    double f = fml(ram, observed, theta);
    if (!std::isfinite(f))
        throw DomainError("fit: implied matrix not positive definite at the starting point");
    Eigen::VectorXd grad = fml_gradient(ram, observed, theta);

    OptimResult result;
    for (int iter = 0; iter < opt.max_iterations; ++iter) {
        result.iterations = iter;
        if (grad.cwiseAbs().maxCoeff() < opt.gradient_tolerance) {
            result.converged = true;
            break;
        }

        Eigen::VectorXd direction = -h_inv * grad;
        if (direction.dot(grad) >= 0.0) { // not a descent direction: reset
            h_inv.setIdentity();
            direction = -grad;
        }

        // Armijo backtracking
        double step = 1.0;
        const double slope = grad.dot(direction);
        double f_new = std::numeric_limits<double>::infinity();
        Eigen::VectorXd theta_new;
        bool accepted = false;
        for (int ls = 0; ls < 60; ++ls) {
            theta_new = theta + step * direction;
            f_new = fml(ram, observed, theta_new);
            if (std::isfinite(f_new) && f_new <= f + 1e-4 * step * slope) {
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if (!accepted) {
            // steepest-descent fallback with a fresh line search
            h_inv.setIdentity();
            direction = -grad;
            step = 1.0 / std::max(1.0, grad.norm());
            for (int ls = 0; ls < 60; ++ls) {
                theta_new = theta + step * direction;
                f_new = fml(ram, observed, theta_new);
                if (std::isfinite(f_new) && f_new < f) {
                    accepted = true;
                    break;
                }
                step *= 0.5;
            }
            if (!accepted) {
                // no descent possible at floating-point resolution
                result.converged = grad.cwiseAbs().maxCoeff() < 1e-6;
                break;
            }
        }

        Eigen::VectorXd grad_new = fml_gradient(ram, observed, theta_new);
        const Eigen::VectorXd s = theta_new - theta;
        const Eigen::VectorXd y = grad_new - grad;
        const double sy = s.dot(y);
        if (sy > 1e-12 * s.norm() * y.norm()) {
            const Eigen::VectorXd hy = h_inv * y;
            const double yhy = y.dot(hy);
            h_inv += ((sy + yhy) / (sy * sy)) * (s * s.transpose()) -
                     (hy * s.transpose() + s * hy.transpose()) / sy;
        }

        const double rel_change = std::abs(f - f_new) / std::max(1.0, std::abs(f));
        theta = theta_new;
        grad = grad_new;
        f = f_new;
        if (rel_change < opt.relative_f_tolerance &&
            grad.cwiseAbs().maxCoeff() < opt.gradient_tolerance) {
            result.converged = true;
            break;
        }
    }
    if (grad.cwiseAbs().maxCoeff() < opt.gradient_tolerance) result.converged = true;
    result.theta = std::move(theta);
    result.f = f;
    return result;
}

// Observed information: central finite differences of the analytic gradient.
Eigen::MatrixXd fd_hessian(const RamMatrices& ram, const Eigen::MatrixXd& observed,
                           const Eigen::VectorXd& theta) {
    const auto n = theta.size();
    Eigen::MatrixXd hess(n, n);
    for (Eigen::Index j = 0; j < n; ++j) {
        const double h = 1e-5 * std::max(1.0, std::abs(theta(j)));
        Eigen::VectorXd tp = theta, tm = theta;
        tp(j) += h;
        tm(j) -= h;
        hess.col(j) = (fml_gradient(ram, observed, tp) - fml_gradient(ram, observed, tm)) / (2 * h);
    }
    return 0.5 * (hess + hess.transpose());
}

Eigen::MatrixXd invert_information(const Eigen::MatrixXd& info) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(info);
    const double max_ev = solver.eigenvalues().cwiseAbs().maxCoeff();
    Eigen::VectorXd inv_ev(info.rows());
    for (Eigen::Index i = 0; i < info.rows(); ++i) {
        const double ev = solver.eigenvalues()(i);
        if (ev <= 1e-12 * max_ev)
            throw ConvergenceError("information matrix is singular; standard errors unavailable");
        inv_ev(i) = 1.0 / ev;
    }
    return solver.eigenvectors() * inv_ev.asDiagonal() * solver.eigenvectors().transpose();
}

// structurally nonzero indirect entries: a directed path of length >= 2
std::vector<std::pair<int, int>> indirect_pairs(const RamMatrices& ram) {
    const int p = ram.n_vars();
    std::vector<std::vector<bool>> adj(p, std::vector<bool>(p, false));
    for (const auto& [d, s] : ram.path_params) adj[d][s] = true; // d <- s
    // reach[t][s]: path from s to t of length >= 2
    std::vector<std::vector<bool>> cur = adj, reach(p, std::vector<bool>(p, false));
    for (int len = 2; len <= p; ++len) {
        std::vector<std::vector<bool>> next(p, std::vector<bool>(p, false));
        for (int t = 0; t < p; ++t)
            for (int m = 0; m < p; ++m)
                if (adj[t][m])
                    for (int s = 0; s < p; ++s)
                        if (cur[m][s]) next[t][s] = true;
        cur = next;
        for (int t = 0; t < p; ++t)
            for (int s = 0; s < p; ++s)
                if (cur[t][s]) reach[t][s] = true;
    }
    std::vector<std::pair<int, int>> pairs;
    for (int t = 0; t < p; ++t)
        for (int s = 0; s < p; ++s)
            if (reach[t][s]) pairs.emplace_back(t, s);
    return pairs;
}

} // namespace

void effects(FitResult& result) {
    const int p = result.ram.n_vars();
    const Eigen::MatrixXd a = result.ram.a_matrix(result.theta);
    const Eigen::MatrixXd b =
        (Eigen::MatrixXd::Identity(p, p) - a).inverse();
    result.direct = a;
    result.total = b - Eigen::MatrixXd::Identity(p, p);
    result.indirect = result.total - result.direct;

    result.indirect_effects.clear();
    const auto np = result.ram.path_params.size();
    const Eigen::MatrixXd v_paths =
        result.param_cov.topLeftCorner(static_cast<Eigen::Index>(np), static_cast<Eigen::Index>(np));
    for (const auto& [t, s] : indirect_pairs(result.ram)) {
        IndirectEffect eff;
        eff.source = result.ram.variables[static_cast<std::size_t>(s)];
        eff.target = result.ram.variables[static_cast<std::size_t>(t)];
        eff.estimate = result.indirect(t, s);

        // delta method: d total(t,s)/dA(i,j) = B(t,i) B(j,s); subtract the
        // direct-path derivative when (i,j) is the (t,s) path itself
        Eigen::VectorXd g(static_cast<Eigen::Index>(np));
        for (std::size_t k = 0; k < np; ++k) {
            const auto [i, j] = result.ram.path_params[k];
            double d = b(t, i) * b(j, s);
            if (i == t && j == s) d -= 1.0;
            g(static_cast<Eigen::Index>(k)) = d;
        }
        const double var = g.dot(v_paths * g);
        eff.se = var > 0 ? std::sqrt(var) : 0.0;
        eff.z = eff.se > 0 ? eff.estimate / eff.se : 0.0;
        eff.p = eff.se > 0 ? normal_two_sided_p(eff.z) : 1.0;
        result.indirect_effects.push_back(std::move(eff));
    }
}

double baseline_chi2(const Eigen::MatrixXd& observed, int n) {
    Eigen::LLT<Eigen::MatrixXd> llt(observed);
    if (llt.info() != Eigen::Success)
        throw DomainError("baseline_chi2: matrix not positive definite");
    double logdet = 0.0;
    for (Eigen::Index i = 0; i < observed.rows(); ++i)
        logdet += 2.0 * std::log(llt.matrixL()(i, i));
    return (n - 1.0) * (-logdet);
}

FitIndices fit_indices(double chi2, int df, double chi2_b, int df_b, int n,
                       const Eigen::MatrixXd& residual_std, int q_free) {
    FitIndices idx;
    idx.saturated = (df == 0);

    double ss = 0.0;
    int count = 0;
    for (Eigen::Index i = 0; i < residual_std.rows(); ++i)
        for (Eigen::Index j = 0; j <= i; ++j) {
            ss += residual_std(i, j) * residual_std(i, j);
            ++count;
        }
    idx.srmr = std::sqrt(ss / count);
    idx.aic = chi2 + 2.0 * q_free;
    idx.bic = chi2 + q_free * std::log(static_cast<double>(n));

    if (!idx.saturated) {
        const double excess = std::max(chi2 - df, 0.0);
        const double denom = std::max({chi2_b - df_b, chi2 - df, 0.0});
        idx.cfi = denom > 0.0 ? 1.0 - excess / denom : 1.0;
        const double ratio_b = chi2_b / df_b;
        if (ratio_b > 1.0) idx.tli = (ratio_b - chi2 / df) / (ratio_b - 1.0);
        idx.rmsea = std::sqrt(excess / (df * (n - 1.0)));
        idx.p_chi2 = chi2_upper_tail(chi2, df);
    }
    return idx;
}

WaldTest wald_equation_test(const FitResult& result, const std::string& dependent) {
    const auto& ram = result.ram;
    const int dep = [&] {
        auto it = std::find(ram.variables.begin(), ram.variables.end(), dependent);
        if (it == ram.variables.end())
            throw ModelError("wald_equation_test: unknown variable " + dependent);
        return static_cast<int>(it - ram.variables.begin());
    }();

    std::vector<std::size_t> params;
    for (std::size_t k = 0; k < ram.path_params.size(); ++k)
        if (ram.path_params[k].first == dep) params.push_back(k);
    if (params.empty())
        throw ModelError("wald_equation_test: " + dependent + " has no equation");

    const auto m = static_cast<Eigen::Index>(params.size());
    Eigen::VectorXd beta(m);
    Eigen::MatrixXd vb(m, m);
    for (Eigen::Index i = 0; i < m; ++i) {
        beta(i) = result.theta(static_cast<Eigen::Index>(params[static_cast<std::size_t>(i)]));
        for (Eigen::Index j = 0; j < m; ++j)
            vb(i, j) = result.param_cov(static_cast<Eigen::Index>(params[static_cast<std::size_t>(i)]),
                                        static_cast<Eigen::Index>(params[static_cast<std::size_t>(j)]));
    }
    Eigen::FullPivLU<Eigen::MatrixXd> lu(vb);
    if (!lu.isInvertible())
        throw DomainError("wald_equation_test: singular coefficient covariance for " + dependent);

    WaldTest wald;
    wald.dependent = dependent;
    wald.w = beta.dot(lu.solve(beta));
    wald.df = static_cast<int>(m);
    wald.p = chi2_upper_tail(wald.w, wald.df);
    return wald;
}

const PathCoefficient& FitResult::coefficient(const std::string& dependent,
                                              const std::string& predictor) const {
    for (const auto& c : coefficients)
        if (c.dependent == dependent && c.predictor == predictor) return c;
    throw ModelError("no path " + predictor + " -> " + dependent + " in model " + model_name);
}

double FitResult::effect(const Eigen::MatrixXd& m, const std::string& source,
                         const std::string& target) const {
    auto idx = [&](const std::string& v) {
        auto it = std::find(ram.variables.begin(), ram.variables.end(), v);
        if (it == ram.variables.end()) throw ModelError("unknown variable " + v);
        return static_cast<Eigen::Index>(it - ram.variables.begin());
    };
    return m(idx(target), idx(source));
}

FitResult fit(const RamMatrices& ram, const Eigen::MatrixXd& observed, int n,
              const std::string& model_name, const FitOptions& options) {
    const int p = ram.n_vars();
    if (observed.rows() != p || observed.cols() != p)
        throw DomainError("fit: matrix dimension does not match the variable list");
    if (n < p + 2)
        throw DomainError("fit: effective N " + std::to_string(n) + " too small for " +
                          std::to_string(p) + " variables");
    Eigen::LLT<Eigen::MatrixXd> llt(observed);
    if (llt.info() != Eigen::Success)
        throw DomainError("fit: input matrix is not positive definite");

    FitResult result;
    result.model_name = model_name;
    result.ram = ram;
    result.n_used = n;
    result.q_free = ram.n_free();
    result.df = ram.degrees_of_freedom();

    Eigen::VectorXd start;
    if (options.neutral_start) {
        start = Eigen::VectorXd::Zero(ram.n_free());
        for (int i = 0; i < p; ++i)
            start(static_cast<Eigen::Index>(ram.path_params.size() + ram.cov_params.size()) + i) =
                observed(i, i);
    } else {
        start = initial_theta(ram, observed);
    }
    OptimResult opt = minimize_bfgs(ram, observed, start, options);
    if (!opt.converged && options.throw_on_nonconvergence)
        throw ConvergenceError("fit: no convergence for model '" + model_name + "' after " +
                               std::to_string(opt.iterations) + " iterations (best F = " +
                               std::to_string(opt.f) + ")");
    result.converged = opt.converged;
    result.iterations = opt.iterations;
    result.theta = opt.theta;
    result.f_min = opt.f;
    result.chi2 = (n - 1.0) * opt.f;

    // observed information of the chi2-scaled objective; at a non-converged
    // best point the Hessian may be indefinite, in which case the result
    // carries the point estimates without standard errors
    bool have_cov = true;
    try {
        const Eigen::MatrixXd hess = fd_hessian(ram, observed, result.theta);
        result.param_cov = invert_information(hess) * (2.0 / (n - 1.0));
    } catch (const ConvergenceError&) {
        if (result.converged) throw;
        have_cov = false;
        result.param_cov = Eigen::MatrixXd::Constant(
            ram.n_free(), ram.n_free(), std::numeric_limits<double>::quiet_NaN());
    }

    const Eigen::MatrixXd sigma = implied_covariance(ram, result.theta);
    const auto np = ram.path_params.size();
    const auto nc = ram.cov_params.size();
    for (std::size_t k = 0; k < np; ++k) {
        PathCoefficient c;
        c.dependent = ram.variables[static_cast<std::size_t>(ram.path_params[k].first)];
        c.predictor = ram.variables[static_cast<std::size_t>(ram.path_params[k].second)];
        c.estimate = result.theta(static_cast<Eigen::Index>(k));
        c.se = std::sqrt(result.param_cov(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(k)));
        c.z = c.se > 0 ? c.estimate / c.se : 0.0;
        c.p = c.se > 0 ? normal_two_sided_p(c.z) : 1.0;
        result.coefficients.push_back(std::move(c));
    }

    // R^2 against the fitted (implied) variance of each dependent variable
    for (int d : ram.endogenous) {
        const double residual = result.theta(static_cast<Eigen::Index>(np + nc) + d);
        result.r2[ram.variables[static_cast<std::size_t>(d)]] = 1.0 - residual / sigma(d, d);
    }

    result.chi2_baseline = baseline_chi2(observed, n);
    result.df_baseline = p * (p - 1) / 2;
    Eigen::MatrixXd residual_std(p, p);
    for (Eigen::Index i = 0; i < p; ++i)
        for (Eigen::Index j = 0; j < p; ++j)
            residual_std(i, j) =
                (observed(i, j) - sigma(i, j)) / std::sqrt(observed(i, i) * observed(j, j));
    result.indices = fit_indices(result.chi2, result.df, result.chi2_baseline, result.df_baseline,
                                 n, residual_std, result.q_free);

    for (const auto& eq_dep : ram.endogenous)
        result.wald.push_back(
            wald_equation_test(result, ram.variables[static_cast<std::size_t>(eq_dep)]));

    effects(result);
    return result;
}

FitResult fit(const RamMatrices& ram, const PooledMatrix& pooled, const FitOptions& options) {
    // correlation input with N = rounded harmonic mean
    std::vector<int> indices;
    indices.reserve(ram.variables.size());
    for (const auto& v : ram.variables) indices.push_back(pooled.index_of(v));
    const auto p = static_cast<Eigen::Index>(indices.size());
    Eigen::MatrixXd sub(p, p);
    for (Eigen::Index i = 0; i < p; ++i)
        for (Eigen::Index j = 0; j < p; ++j)
            sub(i, j) = pooled.r(indices[static_cast<std::size_t>(i)],
                                 indices[static_cast<std::size_t>(j)]);
    return fit(ram, sub, static_cast<int>(std::lround(pooled.n_harmonic)), "", options);
}

FitResult fit_model(const PathModelSpec& spec, const PooledMatrix& pooled,
                    const FitOptions& options) {
    const auto vars = spec.variables();
    PooledMatrix sub = subset(pooled, vars);
    FitResult result = fit(build_ram(spec, vars), sub, options);
    result.model_name = spec.name;
    return result;
}

} // namespace masem
