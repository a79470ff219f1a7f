#include "masem/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "csv.hpp"

namespace masem {

std::string format_r(double value) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.3f", value);
    std::string s(buf);
    // paper style: ".343" rather than "0.343"
    auto zero = s.find("0.");
    if (zero == 0)
        s.erase(0, 1);
    else if (s.rfind("-0.", 0) == 0)
        s.erase(1, 1);
    return s;
}

std::string format_p(double value) {
    if (value < 0.0005) return "<.001";
    char buf[32];
    std::snprintf(buf, sizeof(buf), "=%.3f", value);
    std::string s(buf);
    s.erase(1, 1); // "=0.123" -> "=.123"
    return s;
}

namespace {

std::string num(double v, int digits = 3) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.*f", digits, v);
    return buf;
}

std::string cell_text(const PooledCell& cell) {
    std::ostringstream out;
    out << format_r(cell.r) << " (p" << format_p(cell.p_z) << ") [" << format_r(cell.ci_lo) << "; "
        << format_r(cell.ci_hi) << "], k=" << cell.k;
    return out.str();
}

} // namespace

std::string pooled_table_markdown(const std::map<PairKey, PooledCell>& cells,
                                  const std::vector<std::string>& variables) {
    std::ostringstream out;
    out << "|  |";
    for (std::size_t j = 0; j + 1 < variables.size(); ++j) out << ' ' << variables[j] << " |";
    out << "\n|---|";
    for (std::size_t j = 0; j + 1 < variables.size(); ++j) out << "---|";
    out << '\n';
    for (std::size_t i = 1; i < variables.size(); ++i) {
        out << "| **" << variables[i] << "** |";
        for (std::size_t j = 0; j + 1 < variables.size(); ++j) {
            if (j >= i) {
                out << "  |";
                continue;
            }
            auto it = cells.find(PairKey(variables[i], variables[j]));
            if (it == cells.end())
                out << " — |"; // em dash: no studies, not a zero
            else
                out << ' ' << cell_text(it->second) << " |";
        }
        out << '\n';
    }
    return out.str();
}

std::string cells_csv(const std::map<PairKey, PooledCell>& cells,
                      const std::vector<std::string>& variables) {
    std::ostringstream out;
    out << "var_a,var_b,k,n,r,ci_lo,ci_hi,p,theta_z,se_theta,tau2,q,p_q,i2,h2\n";
    out.precision(12);
    for (std::size_t i = 0; i < variables.size(); ++i) {
        for (std::size_t j = i + 1; j < variables.size(); ++j) {
            PairKey key(variables[i], variables[j]);
            auto it = cells.find(key);
            if (it == cells.end()) continue; // missing pairs stay absent
            const auto& c = it->second;
            out << key.a << ',' << key.b << ',' << c.k << ',' << c.n_total << ',' << c.r << ','
                << c.ci_lo << ',' << c.ci_hi << ',' << c.p_z << ',' << c.theta_z << ','
                << c.se_theta << ',' << c.tau2 << ',' << c.q << ',';
            if (c.p_q) out << *c.p_q;
            out << ',';
            if (c.i2) out << *c.i2;
            out << ',';
            if (c.h2) out << *c.h2;
            out << '\n';
        }
    }
    return out.str();
}

std::map<PairKey, PooledCell> load_cells_csv(const std::filesystem::path& path) {
    std::map<PairKey, PooledCell> cells;
    const std::string header = "var_a,var_b,k,n,r,ci_lo,ci_hi,p,theta_z,se_theta,tau2,q,p_q,i2,h2";
    for (const auto& line : csv::read_lines(path, header)) {
        auto f = csv::split(line);
        if (f.size() != 15) throw ParseError(path.string() + ": bad row '" + line + "'");
        PooledCell c;
        PairKey key(csv::strip(f[0]), csv::strip(f[1]));
        c.k = static_cast<int>(csv::to_long(f[2], path.string()));
        c.n_total = csv::to_long(f[3], path.string());
        c.r = csv::to_double(f[4], path.string());
        c.ci_lo = csv::to_double(f[5], path.string());
        c.ci_hi = csv::to_double(f[6], path.string());
        c.p_z = csv::to_double(f[7], path.string());
        c.theta_z = csv::to_double(f[8], path.string());
        c.se_theta = csv::to_double(f[9], path.string());
        c.tau2 = csv::to_double(f[10], path.string());
        c.q = csv::to_double(f[11], path.string());
        if (!csv::strip(f[12]).empty()) c.p_q = csv::to_double(f[12], path.string());
        if (!csv::strip(f[13]).empty()) c.i2 = csv::to_double(f[13], path.string());
        if (!csv::strip(f[14]).empty()) c.h2 = csv::to_double(f[14], path.string());
        cells[key] = c;
    }
    return cells;
}

std::string forest_csv(const PairEffects& effects) {
    std::ostringstream out;
    out << "var_a,var_b,study_id,n,r,ci_lo,ci_hi\n";
    out.precision(12);
    constexpr double z95 = 1.959964;
    for (const auto& [pair, points] : effects) {
        for (const auto& pt : points) {
            const double half = z95 * std::sqrt(pt.v);
            out << pair.a << ',' << pair.b << ',' << pt.study_id << ',' << pt.n << ','
                << inv_fisher(pt.z) << ',' << inv_fisher(pt.z - half) << ','
                << inv_fisher(pt.z + half) << '\n';
        }
    }
    return out.str();
}

std::string model_report_markdown(const FitResult& fit) {
    std::ostringstream out;
    out << "### Model " << fit.model_name << " (N=" << fit.n_used << ")\n\n";

    out << "| path | estimate | se | z | p |\n|---|---|---|---|---|\n";
    for (const auto& c : fit.coefficients)
        out << "| " << c.predictor << " → " << c.dependent << " | " << format_r(c.estimate)
            << " | " << num(c.se) << " | " << num(c.z, 2) << " | p" << format_p(c.p) << " |\n";
    out << '\n';

    for (const auto& [var, r2] : fit.r2) out << "R2(" << var << ") = " << format_r(r2) << "  \n";
    out << '\n';

    out << "| equation | Wald | df | p |\n|---|---|---|---|\n";
    for (const auto& w : fit.wald)
        out << "| " << w.dependent << " | " << num(w.w, 2) << " | " << w.df << " | p"
            << format_p(w.p) << " |\n";
    out << '\n';

    if (!fit.indirect_effects.empty()) {
        out << "| indirect effect | estimate | se | p |\n|---|---|---|---|\n";
        for (const auto& e : fit.indirect_effects)
            out << "| " << e.source << " → … → " << e.target << " | "
                << format_r(e.estimate) << " | " << num(e.se) << " | p" << format_p(e.p) << " |\n";
        out << '\n';
    }

    out << "chi2(" << fit.df << ") = " << num(fit.chi2, 3);
    if (fit.indices.p_chi2) out << ", p" << format_p(*fit.indices.p_chi2);
    out << "  \n";
    if (fit.indices.saturated) {
        out << "Fit indices: saturated model (df=0), not interpretable.  \n";
    } else {
        out << "CFI = " << num(*fit.indices.cfi) << ", TLI = " << num(*fit.indices.tli)
            << ", RMSEA = " << num(*fit.indices.rmsea) << ", SRMR = " << num(fit.indices.srmr)
            << "  \n";
    }
    out << "SRMR = " << num(fit.indices.srmr) << ", AIC = " << num(fit.indices.aic, 2)
        << ", BIC = " << num(fit.indices.bic, 2) << "\n\n";
    return out.str();
}

std::string comparison_table_markdown(const std::vector<FitResult>& fits) {
    std::vector<const FitResult*> order;
    order.reserve(fits.size());
    for (const auto& f : fits) order.push_back(&f);
    std::stable_sort(order.begin(), order.end(), [](const FitResult* a, const FitResult* b) {
        return a->indices.aic < b->indices.aic;
    });

    std::ostringstream out;
    out << "| model | chi2 | df | CFI | TLI | RMSEA | SRMR | AIC | BIC |\n"
        << "|---|---|---|---|---|---|---|---|---|\n";
    for (const auto* f : order) {
        out << "| " << f->model_name << " | " << num(f->chi2, 3) << " | " << f->df << " | ";
        if (f->indices.saturated)
            out << "saturated | saturated | saturated | ";
        else
            out << num(*f->indices.cfi) << " | " << num(*f->indices.tli) << " | "
                << num(*f->indices.rmsea) << " | ";
        out << num(f->indices.srmr) << " | " << num(f->indices.aic, 2) << " | "
            << num(f->indices.bic, 2) << " |\n";
    }
    return out.str();
}

} // namespace masem
