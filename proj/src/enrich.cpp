#include "crosstraj/enrich.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "crosstraj/csv.hpp"
#include "crosstraj/error.hpp"

namespace crosstraj::enrich {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t");
  return std::string(s.substr(b, e - b + 1));
}

}  // namespace

TermGraph::TermGraph(std::map<std::string, Term> terms) : terms_(std::move(terms)) {
  for (const auto& [id, t] : terms_)
    for (const auto& p : t.parents)
      if (!terms_.count(p)) fail(ErrorKind::Validation, "term " + id + ": is_a target " + p + " not defined");

  // Iterative DFS; state 1 = on the stack, 2 = finished.
  std::map<std::string, int> state;
  for (const auto& [root, _] : terms_) {
    if (state[root]) continue;
    std::vector<std::pair<std::string, std::size_t>> stack = {{root, 0}};
    state[root] = 1;
    while (!stack.empty()) {
      auto& [id, next] = stack.back();
      const auto& parents = terms_.at(id).parents;
      if (next < parents.size()) {
        const std::string p = parents[next++];
        if (state[p] == 1) fail(ErrorKind::Validation, "is_a cycle through term " + p);
        if (state[p] == 0) {
          state[p] = 1;
          stack.push_back({p, 0});
        }
        continue;
      }
      std::set<std::string> up = {id};
      for (const auto& p : parents) {
        const auto& pc = closure_.at(p);
        up.insert(pc.begin(), pc.end());
      }
      closure_[id] = std::move(up);
      state[id] = 2;
      stack.pop_back();
    }
  }
}

std::size_t TermGraph::link_count() const {
  std::size_t n = 0;
  for (const auto& [_, t] : terms_) n += t.parents.size();
  return n;
}

const Term& TermGraph::at(const std::string& id) const {
  auto it = terms_.find(id);
  if (it == terms_.end()) fail(ErrorKind::NotFound, "unknown term " + id);
  return it->second;
}

const std::set<std::string>& TermGraph::closure(const std::string& id) const {
  auto it = closure_.find(id);
  if (it == closure_.end()) fail(ErrorKind::NotFound, "unknown term " + id);
  return it->second;
}

TermGraph parse_obo(std::istream& in) {
  std::map<std::string, Term> terms;
  Term cur;
  bool in_term = false, obsolete = false;
  std::size_t line_no = 0;
  auto flush = [&] {
    if (in_term && !obsolete) {
      if (cur.id.empty()) fail(ErrorKind::Format, "OBO [Term] stanza without id before line " + std::to_string(line_no));
      if (terms.count(cur.id)) fail(ErrorKind::Format, "duplicate OBO term " + cur.id);
      terms.emplace(cur.id, cur);
    }
    cur = Term{};
    in_term = false;
    obsolete = false;
  };
  std::string raw;
  while (std::getline(in, raw)) {
    ++line_no;
    const std::string line = trim(csv::chomp(raw));
    if (line.empty() || line[0] == '!') continue;
    if (line[0] == '[') {
      flush();
      in_term = line == "[Term]";
      continue;
    }
    if (!in_term) continue;
    const auto colon = line.find(':');
    if (colon == std::string::npos) continue;
    const std::string key = line.substr(0, colon);
    std::string value = line.substr(colon + 1);
    if (const auto bang = value.find(" !"); bang != std::string::npos) value.resize(bang);
    value = trim(value);
    if (key == "id") cur.id = value;
    else if (key == "name") cur.name = value;
    else if (key == "namespace") cur.name_space = value;
    else if (key == "is_a") cur.parents.push_back(value.substr(0, value.find(' ')));
    else if (key == "is_obsolete") obsolete = value == "true";
  }
  flush();
  return TermGraph(std::move(terms));
}

TermGraph load_term_graph(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::Io, "cannot open " + path.string());
  return parse_obo(in);
}

AnnotationLoad parse_gaf(std::istream& in, const TermGraph& terms) {
  AnnotationLoad out;
  std::string raw;
  std::size_t line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    const std::string_view line = csv::chomp(raw);
    if (line.empty() || line[0] == '!') continue;
    std::vector<std::string_view> cols;
    std::size_t start = 0;
    while (true) {
      const auto tab = line.find('\t', start);
      cols.push_back(line.substr(start, tab == std::string_view::npos ? tab : tab - start));
      if (tab == std::string_view::npos) break;
      start = tab + 1;
    }
    if (cols.size() < 5)
      fail(ErrorKind::Format, "GAF line " + std::to_string(line_no) + ": expected at least 5 columns");
    const std::string gene = trim(cols[1]);
    const std::string term = trim(cols[4]);
    if (gene.empty()) fail(ErrorKind::Format, "GAF line " + std::to_string(line_no) + ": empty gene");
    if (cols[3].find("NOT") != std::string_view::npos) {
      ++out.negated;
      continue;
    }
    if (!terms.contains(term)) {
      ++out.unknown_terms;
      continue;
    }
    ++out.direct;
    const auto& up = terms.closure(term);
    out.annotations[gene].insert(up.begin(), up.end());
  }
  if (out.unknown_terms)
    out.warnings.push_back(std::to_string(out.unknown_terms) + " annotation(s) reference unknown terms");
  return out;
}

AnnotationLoad load_annotations(const std::filesystem::path& path, const TermGraph& terms) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::Io, "cannot open " + path.string());
  return parse_gaf(in, terms);
}

namespace {

double log_choose(double n, double k) {
  return std::lgamma(n + 1.0) - std::lgamma(k + 1.0) - std::lgamma(n - k + 1.0);
}

}  // namespace

double hypergeometric_tail(std::size_t N, std::size_t K, std::size_t n, std::size_t k) {
  if (K > N || n > N) fail(ErrorKind::Precondition, "hypergeometric_tail: K and n must not exceed N");
  const std::size_t lo = n > N - K ? n - (N - K) : 0;
  const std::size_t hi = std::min(n, K);
  if (k <= lo) return 1.0;
  if (k > hi) return 0.0;
  const double log_total = log_choose(static_cast<double>(N), static_cast<double>(n));
  double p = 0.0;
  for (std::size_t i = hi + 1; i-- > k;) {
    const double di = static_cast<double>(i);
    p += std::exp(log_choose(static_cast<double>(K), di) +
                  log_choose(static_cast<double>(N - K), static_cast<double>(n) - di) - log_total);
  }
  return std::clamp(p, 0.0, 1.0);
}

std::vector<double> benjamini_hochberg(std::span<const double> p_values) {
  const std::size_t m = p_values.size();
  std::vector<std::size_t> order(m);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return p_values[a] < p_values[b]; });
  std::vector<double> out(m);
  double running = 1.0;
  for (std::size_t r = m; r-- > 0;) {
    const std::size_t i = order[r];
    running = std::min(running, p_values[i] * static_cast<double>(m) / static_cast<double>(r + 1));
    out[i] = std::max(running, p_values[i]);
  }
  return out;
}

std::vector<EnrichmentResult> enrich(std::span<const std::string> target,
                                     std::span<const std::string> background,
                                     const AnnotationMap& annotations, const TermGraph& terms) {
  const std::set<std::string> tset(target.begin(), target.end());
  const std::set<std::string> bset(background.begin(), background.end());
  if (tset.empty() || bset.empty()) fail(ErrorKind::Precondition, "enrich: empty gene set");
  for (const auto& g : tset)
    if (!bset.count(g)) fail(ErrorKind::Validation, "enrich: target gene " + g + " is not in the background");

  std::map<std::string, std::size_t> bg_hits;
  std::map<std::string, std::vector<std::string>> tg_hits;
  for (const auto& g : bset) {
    auto it = annotations.find(g);
    if (it == annotations.end()) continue;
    const bool in_target = tset.count(g) != 0;
    for (const auto& term : it->second) {
      ++bg_hits[term];
      if (in_target) tg_hits[term].push_back(g);
    }
  }

  std::vector<EnrichmentResult> rows;
  for (auto& [term, genes] : tg_hits) {
    EnrichmentResult r;
    r.term_id = term;
    r.name = terms.contains(term) ? terms.at(term).name : std::string();
    r.target_hits = genes.size();
    r.background_hits = bg_hits[term];
    r.target_size = tset.size();
    r.background_size = bset.size();
    r.p_value = hypergeometric_tail(bset.size(), r.background_hits, tset.size(), r.target_hits);
    r.significant = r.p_value < kSignificance;
    r.hit_genes = std::move(genes);
    rows.push_back(std::move(r));
  }
  std::sort(rows.begin(), rows.end(), [](const auto& a, const auto& b) {
    return a.p_value != b.p_value ? a.p_value < b.p_value : a.term_id < b.term_id;
  });
  std::vector<double> p(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) p[i] = rows[i].p_value;
  const auto fdr = benjamini_hochberg(p);
  for (std::size_t i = 0; i < rows.size(); ++i) rows[i].fdr = fdr[i];
  return rows;
}

nlohmann::json to_json(const EnrichmentResult& r) {
  return {{"term_id", r.term_id},
          {"name", r.name},
          {"p", r.p_value},
          {"fdr", r.fdr},
          {"significant", r.significant},
          {"target_hits", r.target_hits},
          {"background_hits", r.background_hits},
          {"target_size", r.target_size},
          {"background_size", r.background_size},
          {"hit_genes", r.hit_genes}};
}

nlohmann::json to_json(std::span<const EnrichmentResult> rows) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& r : rows) out.push_back(to_json(r));
  return out;
}

}  // namespace crosstraj::enrich
