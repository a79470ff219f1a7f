#include "masem/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "csv.hpp"

namespace masem {

void ClusterMap::add(const std::string& study_id, const std::string& measure,
                     const std::string& canonical) {
    auto key = std::make_pair(study_id, measure);
    auto it = entries_.find(key);
    if (it != entries_.end() && it->second != canonical)
        throw DomainError("cluster map '" + scheme_name + "': (" + study_id + ", " + measure +
                          ") mapped to both '" + it->second + "' and '" + canonical + "'");
    entries_[key] = canonical;
    canonical_.insert(canonical);
}

const std::string& ClusterMap::canonical_of(const std::string& study_id,
                                            const std::string& measure) const {
    auto it = entries_.find(std::make_pair(study_id, measure));
    if (it == entries_.end())
        throw DomainError("cluster map '" + scheme_name + "': unmapped measure (" + study_id +
                          ", " + measure + ")");
    return it->second;
}

bool ClusterMap::contains(const std::string& study_id, const std::string& measure) const {
    return entries_.count(std::make_pair(study_id, measure)) > 0;
}

const StudyRecord& Dataset::study(const std::string& study_id) const {
    for (const auto& s : studies)
        if (s.study_id == study_id) return s;
    throw DomainError("unknown study id: " + study_id);
}

std::vector<StudyRecord> load_studies(const std::filesystem::path& path) {
    std::vector<StudyRecord> studies;
    for (const auto& line : csv::read_lines(path, "study_id,n,region,year")) {
        auto fields = csv::split(line);
        if (fields.size() != 4)
            throw ParseError(path.string() + ": expected 4 fields, got '" + line + "'");
        StudyRecord rec;
        rec.study_id = csv::strip(fields[0]);
        rec.sample_n = static_cast<int>(csv::to_long(fields[1], path.string()));
        rec.region = csv::strip(fields[2]);
        rec.year = static_cast<int>(csv::to_long(fields[3], path.string()));
        studies.push_back(std::move(rec));
    }
    return studies;
}

std::vector<CorrelationObservation> load_correlations(const std::filesystem::path& path) {
    std::vector<CorrelationObservation> obs;
    for (const auto& line : csv::read_lines(path, "study_id,measure_a,measure_b,r")) {
        auto fields = csv::split(line);
        if (fields.size() != 4)
            throw ParseError(path.string() + ": expected 4 fields, got '" + line + "'");
        CorrelationObservation o;
        o.study_id = csv::strip(fields[0]);
        o.measure_a = csv::strip(fields[1]);
        o.measure_b = csv::strip(fields[2]);
        o.r = csv::to_double(fields[3], path.string());
        obs.push_back(std::move(o));
    }
    return obs;
}

void validate_dataset(const Dataset& dataset) {
    std::set<std::string> ids;
    for (const auto& s : dataset.studies) {
        if (!ids.insert(s.study_id).second)
            throw DomainError("duplicate study id: " + s.study_id);
        if (s.sample_n < 4)
            throw DomainError("study " + s.study_id + ": sample_n must be >= 4, got " +
                              std::to_string(s.sample_n));
    }
    std::set<std::tuple<std::string, std::string, std::string>> seen;
    for (const auto& o : dataset.observations) {
        if (!ids.count(o.study_id))
            throw DomainError("observation references unknown study: " + o.study_id);
        if (o.measure_a == o.measure_b)
            throw DomainError("study " + o.study_id + ": self-correlation of measure '" +
                              o.measure_a + "'");
        if (!(std::abs(o.r) < 1.0) || !std::isfinite(o.r))
            throw DomainError("study " + o.study_id + " (" + o.measure_a + ", " + o.measure_b +
                              "): r must lie strictly inside (-1, 1), got " + std::to_string(o.r));
        auto key = o.measure_a < o.measure_b
                       ? std::make_tuple(o.study_id, o.measure_a, o.measure_b)
                       : std::make_tuple(o.study_id, o.measure_b, o.measure_a);
        if (!seen.insert(key).second)
            throw DomainError("study " + o.study_id + ": duplicate observation for (" +
                              o.measure_a + ", " + o.measure_b + ")");
    }
}

Dataset load_dataset(const std::filesystem::path& studies_csv,
                     const std::filesystem::path& correlations_csv) {
    Dataset dataset;
    dataset.studies = load_studies(studies_csv);
    dataset.observations = load_correlations(correlations_csv);
    validate_dataset(dataset);
    return dataset;
}

namespace {

std::string trim_number(double v) {
    std::ostringstream out;
    out.precision(17);
    out << v;
    return out.str();
}

} // namespace

void write_studies(const std::filesystem::path& path, const std::vector<StudyRecord>& studies) {
    std::ofstream out(path);
    if (!out) throw ParseError("cannot write file: " + path.string());
    out << "study_id,n,region,year\n";
    for (const auto& s : studies)
        out << s.study_id << ',' << s.sample_n << ',' << s.region << ',' << s.year << '\n';
}

void write_correlations(const std::filesystem::path& path,
                        const std::vector<CorrelationObservation>& observations) {
    std::ofstream out(path);
    if (!out) throw ParseError("cannot write file: " + path.string());
    out << "study_id,measure_a,measure_b,r\n";
    for (const auto& o : observations)
        out << o.study_id << ',' << o.measure_a << ',' << o.measure_b << ',' << trim_number(o.r)
            << '\n';
}

ClusterMap load_cluster_map(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open file: " + path.string());
    ClusterMap map;
    map.scheme_name = path.stem().string();
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = csv::strip(line);
        if (line.empty()) continue;
        auto fields = csv::split(line);
        if (fields.size() != 3)
            throw ParseError(path.string() + ":" + std::to_string(lineno) +
                             ": expected 'study_id,measure,canonical'");
        map.add(csv::strip(fields[0]), csv::strip(fields[1]), csv::strip(fields[2]));
    }
    return map;
}

const std::vector<CorrelationObservation>* ClusteredData::within_of(const std::string& study_id,
                                                                    const std::string& var) const {
    auto it = within.find(std::make_pair(study_id, var));
    return it == within.end() ? nullptr : &it->second;
}

ClusteredData apply_cluster(const std::vector<CorrelationObservation>& observations,
                            const ClusterMap& cluster) {
    // Collect orphans first so the error can list all of them at once.
    std::set<std::pair<std::string, std::string>> orphans;
    for (const auto& o : observations) {
        if (!cluster.contains(o.study_id, o.measure_a))
            orphans.insert({o.study_id, o.measure_a});
        if (!cluster.contains(o.study_id, o.measure_b))
            orphans.insert({o.study_id, o.measure_b});
    }
    if (!orphans.empty()) {
        std::string msg = "unmapped measures under scheme '" + cluster.scheme_name + "':";
        for (const auto& [study, measure] : orphans) msg += " (" + study + ", " + measure + ")";
        throw DomainError(msg);
    }

    ClusteredData data;
    data.variables.assign(cluster.canonical_variables().begin(),
                          cluster.canonical_variables().end());

    std::map<std::tuple<std::string, std::string, std::string>, std::size_t> group_index;
    for (const auto& o : observations) {
        std::string va = cluster.canonical_of(o.study_id, o.measure_a);
        std::string vb = cluster.canonical_of(o.study_id, o.measure_b);
        if (va == vb) {
            // inter-correlation inside one canonical variable: attach once,
            // available to every group that needs this variable's measures
            data.within[{o.study_id, va}].push_back(o);
            continue;
        }
        CorrelationObservation oriented = o;
        if (vb < va) { // keep measure_a on the var_a side of the group
            std::swap(va, vb);
            std::swap(oriented.measure_a, oriented.measure_b);
        }
        auto key = std::make_tuple(o.study_id, va, vb);
        auto it = group_index.find(key);
        if (it == group_index.end()) {
            group_index.emplace(key, data.groups.size());
            data.groups.push_back(ClusteredGroup{o.study_id, va, vb, {oriented}});
        } else {
            data.groups[it->second].cross.push_back(oriented);
        }
    }
    return data;
}

} // namespace masem
