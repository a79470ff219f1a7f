#ifndef MASEM_DATASET_HPP
#define MASEM_DATASET_HPP

#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "masem/errors.hpp"

namespace masem {

// One primary study. sample_n >= 4 so that the Fisher-z variance 1/(N-3)
// stays positive.
struct StudyRecord {
    std::string study_id;
    int sample_n = 0;
    std::string region;
    int year = 0;
    std::string notes;
};

// One study-level bivariate correlation between two named measures.
// |r| < 1 strictly; measure_a != measure_b.
struct CorrelationObservation {
    std::string study_id;
    std::string measure_a;
    std::string measure_b;
    double r = 0.0;
};

// Maps (study_id, measure_name) -> canonical variable name for one
// clustering scheme.
class ClusterMap {
public:
    std::string scheme_name;

    void add(const std::string& study_id, const std::string& measure,
             const std::string& canonical);
    // Throws DomainError when the measure is not mapped.
    const std::string& canonical_of(const std::string& study_id,
                                    const std::string& measure) const;
    bool contains(const std::string& study_id, const std::string& measure) const;
    const std::set<std::string>& canonical_variables() const { return canonical_; }
    std::size_t size() const { return entries_.size(); }

private:
    std::map<std::pair<std::string, std::string>, std::string> entries_;
    std::set<std::string> canonical_;
};

struct Dataset {
    std::vector<StudyRecord> studies;
    std::vector<CorrelationObservation> observations;

    const StudyRecord& study(const std::string& study_id) const;
};

std::vector<StudyRecord> load_studies(const std::filesystem::path& csv);
std::vector<CorrelationObservation> load_correlations(const std::filesystem::path& csv);

// Loads both files and validates every dataset invariant (unique study ids,
// N >= 4, |r| < 1, no self-correlation, at most one observation per unordered
// measure pair per study, observations reference known studies).
Dataset load_dataset(const std::filesystem::path& studies_csv,
                     const std::filesystem::path& correlations_csv);

// Validates an in-memory dataset against the same invariants.
void validate_dataset(const Dataset& dataset);

void write_studies(const std::filesystem::path& csv, const std::vector<StudyRecord>& studies);
void write_correlations(const std::filesystem::path& csv,
                        const std::vector<CorrelationObservation>& observations);

// Scheme name is taken from the file stem. Lines: study_id,measure,canonical.
// '#' starts a comment.
ClusterMap load_cluster_map(const std::filesystem::path& path);

// All cross-correlations between the measure sets of two canonical variables
// within one study. Within-set inter-correlations live in ClusteredData.
struct ClusteredGroup {
    std::string study_id;
    std::string var_a; // var_a < var_b lexicographically
    std::string var_b;
    std::vector<CorrelationObservation> cross;
};

struct ClusteredData {
    std::vector<std::string> variables; // canonical set of the scheme, sorted
    std::vector<ClusteredGroup> groups;
    // (study_id, canonical variable) -> inter-correlations among that
    // variable's measures, available to composite computation.
    std::map<std::pair<std::string, std::string>, std::vector<CorrelationObservation>> within;

    const std::vector<CorrelationObservation>* within_of(const std::string& study_id,
                                                         const std::string& var) const;
};

// Partitions observations by (study, canonical pair). Every measure in the
// observations must be covered by the map; the error lists all orphans.
ClusteredData apply_cluster(const std::vector<CorrelationObservation>& observations,
                            const ClusterMap& cluster);

} // namespace masem

#endif
