#include <doctest.h>

#include <filesystem>

#include "masem/composite.hpp"
#include "masem/dataset.hpp"
#include "masem/pooled_matrix.hpp"

using namespace masem;

namespace {

const std::filesystem::path kData = MASEM_DATA_DIR;

std::map<PairKey, PooledCell> parsimonious_cells() {
    static const auto cells = [] {
        Dataset d = load_dataset(kData / "studies.csv", kData / "parsimonious.csv");
        ClusterMap map = load_cluster_map(kData / "parsimonious.cluster");
        return pool_all(effects_by_pair(compose_all(apply_cluster(d.observations, map)), d));
    }();
    return cells;
}

} // namespace

TEST_CASE("assemble computes the per-pair Ns and harmonic mean") {
    auto cells = parsimonious_cells();
    PooledMatrix m = assemble(cells, {"INT", "BE", "SN", "PBC"});
    CHECK(m.n_cells(m.index_of("INT"), m.index_of("BE")) == 2191);
    CHECK(m.n_cells(m.index_of("INT"), m.index_of("SN")) == 3702);
    CHECK(m.n_cells(m.index_of("INT"), m.index_of("PBC")) == 1441);
    CHECK(m.n_cells(m.index_of("BE"), m.index_of("SN")) == 1637);
    CHECK(m.n_cells(m.index_of("BE"), m.index_of("PBC")) == 1369);
    CHECK(m.n_cells(m.index_of("SN"), m.index_of("PBC")) == 1115);
    CHECK(m.n_harmonic == doctest::Approx(1639.929391874919).epsilon(1e-10));
    CHECK(m.missing_pairs.empty());
    // diagonal exactly 1, symmetric
    for (int i = 0; i < 4; ++i) CHECK(m.r(i, i) == 1.0);
    CHECK(m.r(0, 1) == m.r(1, 0));
}

TEST_CASE("two-variable assembly: harmonic mean of one value is that value") {
    auto cells = parsimonious_cells();
    PooledMatrix m = assemble(cells, {"INT", "EC"});
    CHECK(m.n_harmonic == doctest::Approx(4277.0));
}

TEST_CASE("assemble rejects missing pairs and lists them") {
    auto cells = parsimonious_cells();
    try {
        assemble(cells, {"GEN", "NS", "INT"});
        FAIL("expected DomainError");
    } catch (const DomainError& e) {
        CHECK(std::string(e.what()).find("GEN-NS") != std::string::npos);
    }
    // export mode records the hole instead
    PooledMatrix m = assemble(cells, {"GEN", "NS", "INT"}, /*allow_missing=*/true);
    REQUIRE(m.missing_pairs.size() == 1);
    CHECK(m.missing_pairs[0].str() == "GEN-NS");
    CHECK(std::isnan(m.r(m.index_of("GEN"), m.index_of("NS"))));
}

TEST_CASE("harmonic mean never exceeds the arithmetic mean") {
    auto cells = parsimonious_cells();
    for (const auto& vars : std::vector<std::vector<std::string>>{
             {"INT", "BE", "SN", "PBC"},
             {"INT", "EC", "NS", "PBC", "BE", "SN"},
             {"INT", "EC", "SN"}}) {
        PooledMatrix m = assemble(cells, vars);
        double sum = 0.0;
        int count = 0;
        for (Eigen::Index i = 0; i < m.n_cells.rows(); ++i)
            for (Eigen::Index j = i + 1; j < m.n_cells.cols(); ++j) {
                sum += m.n_cells(i, j);
                ++count;
            }
        CHECK(m.n_harmonic <= sum / count + 1e-12);
    }
}

TEST_CASE("assembly is order independent") {
    auto cells = parsimonious_cells();
    PooledMatrix a = assemble(cells, {"INT", "BE", "SN", "PBC"});
    PooledMatrix b = assemble(cells, {"PBC", "SN", "INT", "BE"});
    CHECK(a.n_harmonic == doctest::Approx(b.n_harmonic).epsilon(1e-14));
    for (const auto& va : a.variables)
        for (const auto& vb : a.variables) {
            if (va == vb) continue;
            CHECK(a.r(a.index_of(va), a.index_of(vb)) ==
                  doctest::Approx(b.r(b.index_of(va), b.index_of(vb))).epsilon(1e-15));
        }
}

TEST_CASE("subset recomputes the harmonic mean") {
    auto cells = parsimonious_cells();
    PooledMatrix six = assemble(cells, {"INT", "EC", "NS", "PBC", "BE", "SN"});
    PooledMatrix four = subset(six, {"INT", "BE", "SN", "PBC"});
    CHECK(four.n_harmonic == doctest::Approx(1639.929391874919).epsilon(1e-10));
    CHECK_THROWS_AS(subset(six, {"INT", "EC", "XX"}), DomainError);
}

TEST_CASE("positive definiteness check") {
    SUBCASE("identity") {
        PdCheck c = check_positive_definite(Eigen::MatrixXd::Identity(3, 3));
        CHECK(c.min_eigenvalue == doctest::Approx(1.0));
        CHECK(c.positive_definite);
        CHECK_FALSE(c.near_singular);
    }
    SUBCASE("near-singular 2x2") {
        Eigen::MatrixXd m(2, 2);
        m << 1.0, 0.999999, 0.999999, 1.0;
        PdCheck c = check_positive_definite(m);
        CHECK(c.positive_definite); // eigenvalues 1 +- rho
        CHECK(c.near_singular);
        CHECK(c.min_eigenvalue == doctest::Approx(1e-6).epsilon(1e-3));
    }
    SUBCASE("pooled six-variable fixture matrix is PD") {
        auto cells = parsimonious_cells();
        PooledMatrix m = assemble(cells, {"INT", "EC", "NS", "PBC", "BE", "SN"});
        PdCheck c = check_positive_definite(m.r);
        CHECK(c.positive_definite);
        CHECK(c.min_eigenvalue > 0.2);
    }
    SUBCASE("indefinite matrix is flagged and repaired") {
        Eigen::MatrixXd m(3, 3);
        m << 1.0, 0.9, -0.9, 0.9, 1.0, 0.9, -0.9, 0.9, 1.0;
        PdCheck c = check_positive_definite(m);
        REQUIRE_FALSE(c.positive_definite);
        Eigen::MatrixXd repaired = repair_positive_definite(m);
        PdCheck after = check_positive_definite(repaired);
        CHECK(after.positive_definite);
        for (int i = 0; i < 3; ++i) CHECK(repaired(i, i) == doctest::Approx(1.0).epsilon(1e-12));
    }
}

TEST_CASE("matrix csv round trip, including missing cells") {
    auto cells = parsimonious_cells();
    PooledMatrix m = assemble(cells, {"INT", "EC", "GEN", "NS"}, /*allow_missing=*/true);
    auto path = std::filesystem::temp_directory_path() / "masem_matrix.csv";
    write_matrix_csv(path, m);
    PooledMatrix loaded = load_matrix_csv(path);
    CHECK(loaded.variables == m.variables);
    REQUIRE(loaded.missing_pairs.size() == 1);
    for (Eigen::Index i = 0; i < 4; ++i)
        for (Eigen::Index j = 0; j < 4; ++j) {
            if (std::isnan(m.r(i, j)))
                CHECK(std::isnan(loaded.r(i, j)));
            else
                CHECK(loaded.r(i, j) == doctest::Approx(m.r(i, j)).epsilon(1e-15));
        }
}
