#pragma once

// GO over-representation analysis: OBO and GAF loading, upward closure of
// annotations, hypergeometric tails and Benjamini-Hochberg adjustment.

#include <cstddef>
#include <filesystem>
#include <istream>
#include <map>
#include <set>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace crosstraj::enrich {

inline constexpr double kSignificance = 0.05;

struct Term {
  std::string id;
  std::string name;
  std::string name_space;
  std::vector<std::string> parents;  // is_a
};

class TermGraph {
 public:
  // Rejects dangling is_a targets and cycles.
  explicit TermGraph(std::map<std::string, Term> terms);
  TermGraph() = default;

  const std::map<std::string, Term>& terms() const noexcept { return terms_; }
  std::size_t size() const noexcept { return terms_.size(); }
  std::size_t link_count() const;
  bool contains(const std::string& id) const { return terms_.count(id) != 0; }
  const Term& at(const std::string& id) const;
  // The term and every is_a ancestor.
  const std::set<std::string>& closure(const std::string& id) const;

 private:
  std::map<std::string, Term> terms_;
  std::map<std::string, std::set<std::string>> closure_;
};

// Minimal OBO: [Term] stanzas with id, name, namespace and is_a lines.
// Obsolete terms and other stanza types are skipped.
TermGraph parse_obo(std::istream& in);
TermGraph load_term_graph(const std::filesystem::path& path);

// gene -> term ids, closed upward over is_a.
using AnnotationMap = std::map<std::string, std::set<std::string>>;

struct AnnotationLoad {
  AnnotationMap annotations;
  std::size_t direct = 0;          // annotation lines accepted
  std::size_t unknown_terms = 0;   // lines skipped: term not in the graph
  std::size_t negated = 0;         // lines skipped: NOT qualifier
  std::vector<std::string> warnings;
};

// Tab-separated GAF: column 2 is the gene, column 4 the qualifier, column 5
// the term id (1-based). Lines starting with '!' are comments.
AnnotationLoad parse_gaf(std::istream& in, const TermGraph& terms);
AnnotationLoad load_annotations(const std::filesystem::path& path, const TermGraph& terms);

// P[X >= k] for X ~ Hypergeometric(N population, K successes, n draws).
double hypergeometric_tail(std::size_t N, std::size_t K, std::size_t n, std::size_t k);

// Step-up adjusted p-values, in input order.
std::vector<double> benjamini_hochberg(std::span<const double> p_values);

struct EnrichmentResult {
  std::string term_id;
  std::string name;
  std::size_t target_hits = 0;
  std::size_t background_hits = 0;
  std::size_t target_size = 0;
  std::size_t background_size = 0;
  double p_value = 1.0;
  double fdr = 1.0;
  bool significant = false;  // p_value < kSignificance
  std::vector<std::string> hit_genes;
};

// One row per term with at least one target hit, sorted by p then term id.
std::vector<EnrichmentResult> enrich(std::span<const std::string> target,
                                     std::span<const std::string> background,
                                     const AnnotationMap& annotations, const TermGraph& terms);

nlohmann::json to_json(const EnrichmentResult& r);
nlohmann::json to_json(std::span<const EnrichmentResult> rows);

}  // namespace crosstraj::enrich
