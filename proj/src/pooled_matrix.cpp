#include "masem/pooled_matrix.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <Eigen/Eigenvalues>

#include "csv.hpp"

namespace masem {

int PooledMatrix::index_of(const std::string& var) const {
    auto it = std::find(variables.begin(), variables.end(), var);
    if (it == variables.end()) throw DomainError("variable not in pooled matrix: " + var);
    return static_cast<int>(it - variables.begin());
}

namespace {

double harmonic_mean_checked(double sum_inv, int count, double sum) {
    if (count == 0) return 0.0;
    const double harmonic = count / sum_inv;
    // harmonic mean of positive values never exceeds the arithmetic mean
    if (harmonic > sum / count + 1e-9)
        throw DomainError("harmonic mean exceeds arithmetic mean of per-pair Ns");
    return harmonic;
}

} // namespace

PooledMatrix assemble(const std::map<PairKey, PooledCell>& cells,
                      const std::vector<std::string>& variables, bool allow_missing) {
    const auto p = static_cast<Eigen::Index>(variables.size());
    if (p < 2) throw DomainError("assemble: need at least two variables");

    PooledMatrix m;
    m.variables = variables;
    m.r = Eigen::MatrixXd::Identity(p, p);
    m.n_cells = Eigen::MatrixXd::Zero(p, p);

    double sum_inv_n = 0.0, sum_n = 0.0;
    int n_pairs = 0;
    for (Eigen::Index i = 0; i < p; ++i) {
        for (Eigen::Index j = i + 1; j < p; ++j) {
            PairKey key(variables[static_cast<std::size_t>(i)],
                        variables[static_cast<std::size_t>(j)]);
            auto it = cells.find(key);
            if (it == cells.end()) {
                m.missing_pairs.push_back(key);
                m.r(i, j) = m.r(j, i) = std::numeric_limits<double>::quiet_NaN();
                continue;
            }
            const auto& cell = it->second;
            m.r(i, j) = m.r(j, i) = cell.r;
            m.n_cells(i, j) = m.n_cells(j, i) = static_cast<double>(cell.n_total);
            sum_inv_n += 1.0 / static_cast<double>(cell.n_total);
            sum_n += static_cast<double>(cell.n_total);
            ++n_pairs;
        }
    }
    if (!m.missing_pairs.empty() && !allow_missing) {
        std::string msg = "assemble: no pooled cell for pair(s):";
        for (const auto& k : m.missing_pairs) msg += " " + k.str();
        throw DomainError(msg);
    }
    m.n_harmonic = harmonic_mean_checked(sum_inv_n, n_pairs, sum_n);
    return m;
}

PooledMatrix subset(const PooledMatrix& matrix, const std::vector<std::string>& variables) {
    const auto p = static_cast<Eigen::Index>(variables.size());
    if (p < 2) throw DomainError("subset: need at least two variables");
    std::vector<int> idx;
    idx.reserve(variables.size());
    for (const auto& v : variables) idx.push_back(matrix.index_of(v));

    PooledMatrix m;
    m.variables = variables;
    m.r = Eigen::MatrixXd::Identity(p, p);
    m.n_cells = Eigen::MatrixXd::Zero(p, p);
    double sum_inv_n = 0.0, sum_n = 0.0;
    int n_pairs = 0;
    for (Eigen::Index i = 0; i < p; ++i) {
        for (Eigen::Index j = i + 1; j < p; ++j) {
            const double r = matrix.r(idx[static_cast<std::size_t>(i)], idx[static_cast<std::size_t>(j)]);
            const double n = matrix.n_cells(idx[static_cast<std::size_t>(i)], idx[static_cast<std::size_t>(j)]);
            if (std::isnan(r))
                throw DomainError("subset: pair " +
                                  PairKey(variables[static_cast<std::size_t>(i)],
                                          variables[static_cast<std::size_t>(j)]).str() +
                                  " is missing from the pooled matrix");
            if (!(n > 0))
                throw DomainError("subset: pair " +
                                  PairKey(variables[static_cast<std::size_t>(i)],
                                          variables[static_cast<std::size_t>(j)]).str() +
                                  " has no per-pair N; supply an explicit effective N");
            m.r(i, j) = m.r(j, i) = r;
            m.n_cells(i, j) = m.n_cells(j, i) = n;
            sum_inv_n += 1.0 / n;
            sum_n += n;
            ++n_pairs;
        }
    }
    m.n_harmonic = harmonic_mean_checked(sum_inv_n, n_pairs, sum_n);
    return m;
}

PdCheck check_positive_definite(const Eigen::MatrixXd& symmetric) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(symmetric);
    PdCheck check;
    check.min_eigenvalue = solver.eigenvalues().minCoeff();
    check.positive_definite = check.min_eigenvalue > 1e-10;
    check.near_singular = check.positive_definite && check.min_eigenvalue < 1e-4;
    return check;
}

Eigen::MatrixXd repair_positive_definite(const Eigen::MatrixXd& symmetric, double floor) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(symmetric);
    Eigen::VectorXd ev = solver.eigenvalues().cwiseMax(floor);
    Eigen::MatrixXd repaired =
        solver.eigenvectors() * ev.asDiagonal() * solver.eigenvectors().transpose();
    Eigen::VectorXd d = repaired.diagonal().cwiseSqrt();
    for (Eigen::Index i = 0; i < repaired.rows(); ++i)
        for (Eigen::Index j = 0; j < repaired.cols(); ++j)
            repaired(i, j) /= d(i) * d(j);
    return repaired;
}

void write_matrix_csv(const std::filesystem::path& path, const PooledMatrix& matrix) {
    std::ofstream out(path);
    if (!out) throw ParseError("cannot write file: " + path.string());
    out << "variable";
    for (const auto& v : matrix.variables) out << ',' << v;
    out << '\n';
    out.precision(17);
    for (Eigen::Index i = 0; i < matrix.r.rows(); ++i) {
        out << matrix.variables[static_cast<std::size_t>(i)];
        for (Eigen::Index j = 0; j < matrix.r.cols(); ++j) {
            out << ',';
            if (!std::isnan(matrix.r(i, j))) out << matrix.r(i, j);
        }
        out << '\n';
    }
}

PooledMatrix load_matrix_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open file: " + path.string());
    std::string line;
    if (!std::getline(in, line)) throw ParseError(path.string() + ": empty matrix file");
    auto header = csv::split(csv::strip(line));
    if (header.size() < 3 || header[0] != "variable")
        throw ParseError(path.string() + ": expected 'variable,<name>,...' header");

    PooledMatrix m;
    m.variables.assign(header.begin() + 1, header.end());
    const auto p = static_cast<Eigen::Index>(m.variables.size());
    m.r = Eigen::MatrixXd::Identity(p, p);
    m.n_cells = Eigen::MatrixXd::Zero(p, p);
    Eigen::Index row = 0;
    while (std::getline(in, line)) {
        line = csv::strip(line);
        if (line.empty()) continue;
        if (row >= p) throw ParseError(path.string() + ": more rows than variables");
        auto fields = csv::split(line);
        if (static_cast<Eigen::Index>(fields.size()) != p + 1)
            throw ParseError(path.string() + ": bad row '" + line + "'");
        if (csv::strip(fields[0]) != m.variables[static_cast<std::size_t>(row)])
            throw ParseError(path.string() + ": row order must match header order");
        for (Eigen::Index j = 0; j < p; ++j) {
            const std::string field = csv::strip(fields[static_cast<std::size_t>(j + 1)]);
            m.r(row, j) = field.empty() ? std::numeric_limits<double>::quiet_NaN()
                                        : csv::to_double(field, path.string());
        }
        ++row;
    }
    if (row != p) throw ParseError(path.string() + ": expected " + std::to_string(p) + " rows");
    for (Eigen::Index i = 0; i < p; ++i) {
        if (std::abs(m.r(i, i) - 1.0) > 1e-12)
            throw DomainError(path.string() + ": diagonal must be 1");
        for (Eigen::Index j = 0; j < i; ++j) {
            const bool nan_i = std::isnan(m.r(i, j)), nan_j = std::isnan(m.r(j, i));
            if (nan_i != nan_j || (!nan_i && std::abs(m.r(i, j) - m.r(j, i)) > 1e-12))
                throw DomainError(path.string() + ": matrix must be symmetric");
            if (nan_i)
                m.missing_pairs.emplace_back(m.variables[static_cast<std::size_t>(i)],
                                             m.variables[static_cast<std::size_t>(j)]);
        }
    }
    return m;
}

} // namespace masem
