#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "masem/composite.hpp"
#include "masem/dataset.hpp"
#include "masem/meta.hpp"
#include "masem/pooled_matrix.hpp"
#include "masem/report.hpp"
#include "masem/sem.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::vector<std::string> split_vars(const std::string& list) {
    std::vector<std::string> vars;
    std::size_t start = 0;
    while (start <= list.size()) {
        auto comma = list.find(',', start);
        std::string tok = comma == std::string::npos ? list.substr(start)
                                                     : list.substr(start, comma - start);
        auto b = tok.find_first_not_of(" \t");
        if (b != std::string::npos) {
            auto e = tok.find_last_not_of(" \t");
            vars.push_back(tok.substr(b, e - b + 1));
        }
        if (comma == std::string::npos) break;
        start = comma + 1;
    }
    return vars;
}

void write_file(const fs::path& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw masem::ParseError("cannot write file: " + path.string());
    out << content;
}

struct PoolOutput {
    std::map<masem::PairKey, masem::PooledCell> cells;
    masem::PairEffects effects;
    std::vector<std::string> variables;
};

PoolOutput run_pool(const fs::path& studies, const fs::path& correlations, const fs::path& cluster,
                    const std::vector<std::string>& vars) {
    if (vars.empty()) throw masem::DomainError("usage: the variable subset must not be empty");

    PoolOutput out;
    const masem::Dataset dataset = masem::load_dataset(studies, correlations);
    const masem::ClusterMap map = masem::load_cluster_map(cluster);
    for (const auto& v : vars)
        if (!map.canonical_variables().count(v))
            throw masem::DomainError("variable '" + v + "' is not a canonical variable of scheme '" +
                                     map.scheme_name + "'");

    const masem::ClusteredData clustered = masem::apply_cluster(dataset.observations, map);
    const auto composed = masem::compose_all(clustered);
    out.effects = masem::effects_by_pair(composed, dataset);
    out.cells = masem::pool_all(out.effects);
    out.variables = vars;
    return out;
}

void write_pool_outputs(const PoolOutput& pool, const fs::path& out_dir) {
    fs::create_directories(out_dir);
    write_file(out_dir / "pooled_table.md",
               masem::pooled_table_markdown(pool.cells, pool.variables));
    write_file(out_dir / "cells.csv", masem::cells_csv(pool.cells, pool.variables));
    write_file(out_dir / "forest.csv", masem::forest_csv(pool.effects));
    masem::write_matrix_csv(out_dir / "matrix.csv",
                            masem::assemble(pool.cells, pool.variables, /*allow_missing=*/true));
}

masem::PooledMatrix prepare_model_matrix(const std::map<masem::PairKey, masem::PooledCell>& cells,
                                         const std::vector<std::string>& vars, bool pd_repair) {
    masem::PooledMatrix matrix = masem::assemble(cells, vars);
    const auto check = masem::check_positive_definite(matrix.r);
    if (!check.positive_definite) {
        if (!pd_repair)
            throw masem::DomainError(
                "pooled matrix is not positive definite (min eigenvalue " +
                std::to_string(check.min_eigenvalue) +
                "); rerun with --pd-repair to apply eigenvalue clipping");
        std::cerr << "warning: pooled matrix is not positive definite (min eigenvalue "
                  << check.min_eigenvalue << "); applying eigenvalue clipping repair\n";
        matrix.r = masem::repair_positive_definite(matrix.r);
    }
    return matrix;
}

int cmd_pool(const fs::path& studies, const fs::path& correlations, const fs::path& cluster,
             const std::string& vars_list, const fs::path& out_dir) {
    const auto vars = split_vars(vars_list);
    PoolOutput pool = run_pool(studies, correlations, cluster, vars);
    write_pool_outputs(pool, out_dir);
    std::cout << masem::pooled_table_markdown(pool.cells, pool.variables);
    return 0;
}

int cmd_fit(const std::string& matrix_file, int explicit_n, const std::string& from_pool,
            const std::vector<std::string>& model_files, const fs::path& out_dir, bool pd_repair) {
    if (matrix_file.empty() == from_pool.empty())
        throw masem::DomainError("usage: pass exactly one of --matrix or --from-pool");

    std::vector<masem::FitResult> fits;
    if (!from_pool.empty()) {
        const auto cells = masem::load_cells_csv(fs::path(from_pool) / "cells.csv");
        for (const auto& file : model_files) {
            const auto spec = masem::PathModelSpec::load(file);
            masem::PooledMatrix matrix =
                prepare_model_matrix(cells, spec.variables(), pd_repair);
            masem::FitResult result = masem::fit(masem::build_ram(spec, spec.variables()), matrix);
            result.model_name = spec.name;
            fits.push_back(std::move(result));
        }
    } else {
        if (explicit_n <= 0)
            throw masem::DomainError("usage: --matrix requires --n (a plain matrix CSV carries "
                                     "no per-pair sample sizes)");
        const masem::PooledMatrix loaded = masem::load_matrix_csv(matrix_file);
        for (const auto& file : model_files) {
            const auto spec = masem::PathModelSpec::load(file);
            const auto vars = spec.variables();
            const auto p = static_cast<Eigen::Index>(vars.size());
            Eigen::MatrixXd sub(p, p);
            for (Eigen::Index i = 0; i < p; ++i)
                for (Eigen::Index j = 0; j < p; ++j) {
                    sub(i, j) = loaded.r(loaded.index_of(vars[static_cast<std::size_t>(i)]),
                                         loaded.index_of(vars[static_cast<std::size_t>(j)]));
                    if (std::isnan(sub(i, j)))
                        throw masem::DomainError("matrix cell (" + vars[static_cast<std::size_t>(i)] +
                                                 ", " + vars[static_cast<std::size_t>(j)] +
                                                 ") is missing");
                }
            const auto check = masem::check_positive_definite(sub);
            Eigen::MatrixXd use = sub;
            if (!check.positive_definite) {
                if (!pd_repair)
                    throw masem::DomainError("matrix is not positive definite; use --pd-repair");
                std::cerr << "warning: repairing non positive definite matrix\n";
                use = masem::repair_positive_definite(sub);
            }
            fits.push_back(
                masem::fit(masem::build_ram(spec, vars), use, explicit_n, spec.name));
        }
    }

    fs::create_directories(out_dir);
    std::ostringstream all;
    for (const auto& f : fits) {
        const std::string report = masem::model_report_markdown(f);
        write_file(out_dir / ("model_" + f.model_name + ".md"), report);
        all << report;
    }
    const std::string comparison = masem::comparison_table_markdown(fits);
    write_file(out_dir / "comparison.md", comparison);
    std::cout << all.str() << comparison;
    return 0;
}

int cmd_report(const fs::path& config_path) {
    std::ifstream in(config_path);
    if (!in) throw masem::ParseError("cannot open config: " + config_path.string());
    json config = json::parse(in);
    const fs::path base = config_path.parent_path();
    auto resolve = [&](const std::string& p) { return fs::path(p).is_absolute() ? fs::path(p) : base / p; };

    const auto vars = config.at("variables").get<std::vector<std::string>>();
    PoolOutput pool = run_pool(resolve(config.at("studies").get<std::string>()),
                               resolve(config.at("correlations").get<std::string>()),
                               resolve(config.at("cluster").get<std::string>()), vars);
    const fs::path out_dir = resolve(config.at("out").get<std::string>());
    write_pool_outputs(pool, out_dir);
    const bool pd_repair = config.value("pd_repair", false);

    std::ostringstream report;
    report << "# Pooled correlation analysis\n\n## Pooled correlation table ("
           << config.at("cluster").get<std::string>() << ")\n\n"
           << masem::pooled_table_markdown(pool.cells, pool.variables) << '\n';

    if (config.contains("models")) {
        std::vector<masem::FitResult> fits;
        report << "## Path models\n\n";
        for (const auto& model_file : config.at("models").get<std::vector<std::string>>()) {
            const auto spec = masem::PathModelSpec::load(resolve(model_file));
            masem::PooledMatrix matrix = prepare_model_matrix(pool.cells, spec.variables(), pd_repair);
            masem::FitResult result = masem::fit(masem::build_ram(spec, spec.variables()), matrix);
            result.model_name = spec.name;
            report << "harmonic-mean effective sample size for " << spec.name << ": n="
                   << static_cast<long long>(std::llround(matrix.n_harmonic)) << "\n\n"
                   << masem::model_report_markdown(result);
            fits.push_back(std::move(result));
        }
        report << "## Model comparison (sorted by AIC)\n\n"
               << masem::comparison_table_markdown(fits);
    }

    write_file(out_dir / "report.md", report.str());
    std::cout << report.str();
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Random-effects pooling of study-level correlations and path-model fitting "
                 "on the pooled matrix"};
    app.require_subcommand(1);

    auto* pool = app.add_subcommand("pool", "Pool study-level correlations per variable pair");
    std::string studies, correlations, cluster, vars_list, out_dir = "out";
    pool->add_option("--studies", studies, "study-description CSV")->required();
    pool->add_option("--correlations", correlations, "correlation CSV")->required();
    pool->add_option("--cluster", cluster, "cluster map file")->required();
    pool->add_option("--vars", vars_list, "comma-separated canonical variables")->required();
    pool->add_option("--out", out_dir, "output directory");

    auto* fit = app.add_subcommand("fit", "Fit path models on a pooled correlation matrix");
    std::string matrix_file, from_pool, fit_out = "out";
    int explicit_n = 0;
    std::vector<std::string> model_files;
    bool pd_repair = false;
    fit->add_option("--matrix", matrix_file, "pooled matrix CSV");
    fit->add_option("--n", explicit_n, "effective sample size for --matrix input");
    fit->add_option("--from-pool", from_pool, "directory written by the pool subcommand");
    fit->add_option("--model", model_files, "model spec file (repeatable)")->required();
    fit->add_option("--out", fit_out, "output directory");
    fit->add_flag("--pd-repair", pd_repair, "clip eigenvalues of a non-PD matrix");

    auto* report = app.add_subcommand("report", "Consolidated pool + fit report");
    std::string config_file;
    report->add_option("--config", config_file, "JSON run configuration")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (pool->parsed()) return cmd_pool(studies, correlations, cluster, vars_list, out_dir);
        if (fit->parsed())
            return cmd_fit(matrix_file, explicit_n, from_pool, model_files, fit_out, pd_repair);
        if (report->parsed()) return cmd_report(config_file);
    } catch (const masem::Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    } catch (const json::exception& e) {
        std::cerr << "error: config: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
