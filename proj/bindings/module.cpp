#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "masem/composite.hpp"
#include "masem/dataset.hpp"
#include "masem/meta.hpp"
#include "masem/pooled_matrix.hpp"
#include "masem/sem.hpp"

namespace py = pybind11;

namespace {

masem::PooledCell pool_from_arrays(const std::vector<double>& r, const std::vector<int>& n) {
    if (r.size() != n.size()) throw masem::DomainError("r and n must have the same length");
    std::vector<masem::EffectPoint> points;
    points.reserve(r.size());
    for (std::size_t i = 0; i < r.size(); ++i)
        points.push_back(masem::EffectPoint::from_r("s" + std::to_string(i), r[i], n[i]));
    return masem::pool_cell(points);
}

py::dict cell_to_dict(const masem::PooledCell& c) {
    py::dict d;
    d["k"] = c.k;
    d["n"] = c.n_total;
    d["r"] = c.r;
    d["ci"] = py::make_tuple(c.ci_lo, c.ci_hi);
    d["p"] = c.p_z;
    d["theta_z"] = c.theta_z;
    d["se_theta"] = c.se_theta;
    d["tau2"] = c.tau2;
    d["q"] = c.q;
    d["p_q"] = c.p_q ? py::object(py::float_(*c.p_q)) : py::none();
    d["i2"] = c.i2 ? py::object(py::float_(*c.i2)) : py::none();
    d["h2"] = c.h2 ? py::object(py::float_(*c.h2)) : py::none();
    return d;
}

std::map<masem::PairKey, masem::PooledCell> pool_files(const std::string& studies,
                                                       const std::string& correlations,
                                                       const std::string& cluster) {
    const masem::Dataset dataset = masem::load_dataset(studies, correlations);
    const masem::ClusterMap map = masem::load_cluster_map(cluster);
    const auto clustered = masem::apply_cluster(dataset.observations, map);
    return masem::pool_all(masem::effects_by_pair(masem::compose_all(clustered), dataset));
}

py::dict fit_to_dict(const masem::FitResult& f) {
    py::dict d;
    d["name"] = f.model_name;
    d["variables"] = f.variables();
    d["n"] = f.n_used;
    py::list coeffs;
    for (const auto& c : f.coefficients) {
        py::dict cd;
        cd["dependent"] = c.dependent;
        cd["predictor"] = c.predictor;
        cd["estimate"] = c.estimate;
        cd["se"] = c.se;
        cd["z"] = c.z;
        cd["p"] = c.p;
        coeffs.append(cd);
    }
    d["coefficients"] = coeffs;
    d["r2"] = f.r2;
    d["chi2"] = f.chi2;
    d["df"] = f.df;
    d["saturated"] = f.indices.saturated;
    d["cfi"] = f.indices.cfi ? py::object(py::float_(*f.indices.cfi)) : py::none();
    d["tli"] = f.indices.tli ? py::object(py::float_(*f.indices.tli)) : py::none();
    d["rmsea"] = f.indices.rmsea ? py::object(py::float_(*f.indices.rmsea)) : py::none();
    d["srmr"] = f.indices.srmr;
    d["aic"] = f.indices.aic;
    d["bic"] = f.indices.bic;
    py::list wald;
    for (const auto& w : f.wald) {
        py::dict wd;
        wd["dependent"] = w.dependent;
        wd["w"] = w.w;
        wd["df"] = w.df;
        wd["p"] = w.p;
        wald.append(wd);
    }
    d["wald"] = wald;
    py::list indirect;
    for (const auto& e : f.indirect_effects) {
        py::dict ed;
        ed["source"] = e.source;
        ed["target"] = e.target;
        ed["estimate"] = e.estimate;
        ed["se"] = e.se;
        ed["p"] = e.p;
        indirect.append(ed);
    }
    d["indirect_effects"] = indirect;
    d["total"] = f.total;
    d["direct"] = f.direct;
    d["indirect"] = f.indirect;
    return d;
}

} // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Random-effects pooling of study-level correlations and path-model fitting "
              "on the pooled matrix";
    m.attr("__version__") = "0.1.0";

    py::register_exception<masem::Error>(m, "MasemError");

    m.def("fisher_z", &masem::fisher_z, py::arg("r"), "Fisher r-to-z transform, atanh(r).");
    m.def("inv_fisher", &masem::inv_fisher, py::arg("z"), "Inverse Fisher transform, tanh(z).");

    m.def(
        "reml_tau2",
        [](const std::vector<double>& z, const std::vector<double>& v) {
            if (z.size() != v.size()) throw masem::DomainError("z and v must have the same length");
            std::vector<masem::EffectPoint> pts;
            for (std::size_t i = 0; i < z.size(); ++i)
                pts.push_back(masem::EffectPoint{"s" + std::to_string(i), z[i], v[i], 0});
            return masem::reml_tau2(pts);
        },
        py::arg("z"), py::arg("v"),
        "REML between-study variance for effects z with within-study variances v.");

    m.def(
        "pool",
        [](const std::vector<double>& r, const std::vector<int>& n) {
            return cell_to_dict(pool_from_arrays(r, n));
        },
        py::arg("r"), py::arg("n"),
        "Random-effects pool of correlations r with sample sizes n (Fisher-z metric, REML).");

    m.def(
        "composite_one_many",
        [](const std::vector<double>& r_xy, double rbar_yy) {
            return masem::composite_one_many(r_xy, rbar_yy);
        },
        py::arg("r_xy"), py::arg("rbar_yy"),
        "Composite of one measure against the sum of several measures.");
    m.def(
        "composite_many_many",
        [](const Eigen::MatrixXd& cross, const Eigen::MatrixXd& xx, const Eigen::MatrixXd& yy) {
            return masem::composite_many_many({cross, xx, yy});
        },
        py::arg("cross"), py::arg("xx"), py::arg("yy"),
        "Composite between two sums of measures.");

    m.def(
        "pool_dataset",
        [](const std::string& studies, const std::string& correlations,
           const std::string& cluster) {
            py::list out;
            for (const auto& [pair, cell] : pool_files(studies, correlations, cluster)) {
                py::dict d = cell_to_dict(cell);
                d["var_a"] = pair.a;
                d["var_b"] = pair.b;
                out.append(d);
            }
            return out;
        },
        py::arg("studies"), py::arg("correlations"), py::arg("cluster"),
        "Load, cluster, compose and pool a dataset; one record per variable pair.");

    m.def(
        "pooled_matrix",
        [](const std::string& studies, const std::string& correlations, const std::string& cluster,
           const std::vector<std::string>& variables) {
            const auto cells = pool_files(studies, correlations, cluster);
            const auto matrix = masem::assemble(cells, variables);
            py::dict d;
            d["variables"] = matrix.variables;
            d["r"] = matrix.r;
            d["n_cells"] = matrix.n_cells;
            d["n_harmonic"] = matrix.n_harmonic;
            return d;
        },
        py::arg("studies"), py::arg("correlations"), py::arg("cluster"), py::arg("variables"),
        "Pooled correlation matrix over a variable subset with harmonic-mean effective N.");

    m.def(
        "fit_models",
        [](const std::string& studies, const std::string& correlations, const std::string& cluster,
           const std::vector<std::string>& models, bool pd_repair) {
            const auto cells = pool_files(studies, correlations, cluster);
            py::list out;
            for (const auto& file : models) {
                const auto spec = masem::PathModelSpec::load(file);
                auto matrix = masem::assemble(cells, spec.variables());
                const auto check = masem::check_positive_definite(matrix.r);
                if (!check.positive_definite) {
                    if (!pd_repair)
                        throw masem::DomainError("pooled matrix is not positive definite; "
                                                 "pass pd_repair=True to clip eigenvalues");
                    matrix.r = masem::repair_positive_definite(matrix.r);
                }
                auto result = masem::fit(masem::build_ram(spec, spec.variables()), matrix);
                result.model_name = spec.name;
                out.append(fit_to_dict(result));
            }
            return out;
        },
        py::arg("studies"), py::arg("correlations"), py::arg("cluster"), py::arg("models"),
        py::arg("pd_repair") = false,
        "Pool a dataset and fit path-model spec files on the pooled matrix.");
}
