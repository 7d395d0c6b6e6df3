#include <doctest.h>

#include <boost/math/distributions/hypergeometric.hpp>

#include <cmath>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "crosstraj/enrich.hpp"
#include "crosstraj/error.hpp"
#include "crosstraj/rng.hpp"

using namespace crosstraj;
using namespace crosstraj::enrich;
namespace enrich = crosstraj::enrich;

namespace {

// Exact rational tail via products of ratios in long double, summing pmf
// terms from a recurrence; independent of lgamma.
double tail_by_recurrence(std::size_t N, std::size_t K, std::size_t n, std::size_t k) {
  const std::size_t lo = n + K > N ? n + K - N : 0;
  const std::size_t hi = std::min(n, K);
  if (k <= lo) return 1.0;
  if (k > hi) return 0.0;
  // pmf(lo) = C(K,lo) C(N-K,n-lo) / C(N,n), built as a product.
  long double logp = 0;
  auto lchoose = [](std::size_t a, std::size_t b) {
    long double s = 0;
    for (std::size_t i = 1; i <= b; ++i) s += std::log((long double)(a - b + i)) - std::log((long double)i);
    return s;
  };
  logp = lchoose(K, lo) + lchoose(N - K, n - lo) - lchoose(N, n);
  long double pmf = std::exp(logp), total = 0;
  for (std::size_t i = lo; i <= hi; ++i) {
    if (i >= k) total += pmf;
    // pmf(i+1)/pmf(i) = (K-i)(n-i) / ((i+1)(N-K-n+i+1))
    pmf *= (long double)(K - i) * (n - i) / ((long double)(i + 1) * (N - K - n + i + 1));
  }
  return static_cast<double>(total);
}

const char* kChainObo = R"(format-version: 1.2

[Term]
id: GO:1
name: root
namespace: biological_process

[Term]
id: GO:2
name: middle
namespace: biological_process
is_a: GO:1 ! root

[Term]
id: GO:3
name: leaf
namespace: biological_process
is_a: GO:2 ! middle

[Term]
id: GO:9
name: retired
is_obsolete: true

[Typedef]
id: part_of
name: part of
)";

}  // namespace

TEST_CASE("OBO parsing") {
  std::istringstream in(kChainObo);
  const auto g = parse_obo(in);
  CHECK(g.size() == 3);
  CHECK(g.link_count() == 2);
  CHECK(g.at("GO:2").name == "middle");
  CHECK(g.at("GO:3").parents == std::vector<std::string>{"GO:2"});
  CHECK(g.closure("GO:3") == std::set<std::string>{"GO:1", "GO:2", "GO:3"});
  CHECK_FALSE(g.contains("GO:9"));

  std::istringstream cyc("[Term]\nid: A\nis_a: B\n\n[Term]\nid: B\nis_a: A\n");
  CHECK_THROWS_AS(parse_obo(cyc), Error);

  std::istringstream dangling("[Term]\nid: A\nis_a: Z\n");
  try {
    parse_obo(dangling);
    FAIL("expected error");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("A") != std::string::npos);
    CHECK(std::string(e.what()).find("Z") != std::string::npos);
  }
}

TEST_CASE("OBO fixture of 50 terms matches its manifest") {
  // Random DAG: each term picks up to 3 parents among earlier terms.
  Rng rng(8);
  std::ostringstream obo;
  std::size_t links = 0;
  std::map<std::string, std::set<std::string>> oracle;
  for (int i = 0; i < 50; ++i) {
    const std::string id = "T:" + std::to_string(i);
    obo << "[Term]\nid: " << id << "\nname: term " << i << "\n";
    std::set<std::string> up = {id};
    if (i > 0) {
      const std::size_t np = rng.index(4);
      std::set<int> ps;
      for (std::size_t k = 0; k < np; ++k) ps.insert(static_cast<int>(rng.index(static_cast<std::uint64_t>(i))));
      for (int p : ps) {
        obo << "is_a: T:" << p << " ! term " << p << "\n";
        ++links;
        const auto& pu = oracle["T:" + std::to_string(p)];
        up.insert(pu.begin(), pu.end());
      }
    }
    oracle[id] = up;
    obo << "\n";
  }
  std::istringstream in(obo.str());
  const auto g = parse_obo(in);
  CHECK(g.size() == 50);
  CHECK(g.link_count() == links);
  for (const auto& [id, up] : oracle) CHECK(g.closure(id) == up);
}

TEST_CASE("GAF loading closes annotations upward") {
  std::istringstream obo(kChainObo);
  const auto g = parse_obo(obo);
  std::istringstream gaf(
      "!gaf-version: 2.2\n"
      "DB\tg1\tg1\t\tGO:3\tREF\tIEA\t\tP\t\t\tgene\ttaxon:1\t20240101\tDB\n"
      "DB\tg2\tg2\t\tGO:2\tREF\tIEA\t\tP\t\t\tgene\ttaxon:1\t20240101\tDB\n"
      "DB\tg3\tg3\tNOT\tGO:2\tREF\tIEA\t\tP\t\t\tgene\ttaxon:1\t20240101\tDB\n"
      "DB\tg4\tg4\t\tGO:777\tREF\tIEA\t\tP\t\t\tgene\ttaxon:1\t20240101\tDB\n");
  const auto load = parse_gaf(gaf, g);
  CHECK(load.direct == 2);
  CHECK(load.unknown_terms == 1);
  CHECK(load.negated == 1);
  CHECK(load.annotations.at("g1") == std::set<std::string>{"GO:1", "GO:2", "GO:3"});
  CHECK(load.annotations.at("g2") == std::set<std::string>{"GO:1", "GO:2"});
  CHECK(load.annotations.count("g4") == 0);

  std::istringstream comments("! only\n! comments\n");
  CHECK(parse_gaf(comments, g).annotations.empty());
}

TEST_CASE("hypergeometric worked example") {
  // [C(10,4) C(40,1) + C(10,5)] / C(50,5)
  const double exact = (210.0 * 40.0 + 252.0) / 2118760.0;
  const double p = hypergeometric_tail(50, 10, 5, 4);
  CHECK(p == doctest::Approx(exact).epsilon(1e-12));
  CHECK(p == doctest::Approx(4.08e-3).epsilon(0.01));
}

TEST_CASE("hypergeometric tail matches independent oracles") {
  Rng rng(1234);
  for (int trial = 0; trial < 2000; ++trial) {
    const std::size_t N = 1 + rng.index(1000);
    const std::size_t K = rng.index(N + 1);
    const std::size_t n = rng.index(N + 1);
    const std::size_t lo = n + K > N ? n + K - N : 0;
    const std::size_t hi = std::min(n, K);
    const std::size_t k = lo + rng.index(hi - lo + 1);
    const double p = hypergeometric_tail(N, K, n, k);
    CHECK(std::abs(p - tail_by_recurrence(N, K, n, k)) < 1e-9);
    if (k > lo) {
      boost::math::hypergeometric_distribution<double> d(K, n, N);
      CHECK(std::abs(p - boost::math::cdf(boost::math::complement(d, k - 1))) < 1e-9);
    }
    CHECK(p >= 0.0);
    CHECK(p <= 1.0);
  }
}

TEST_CASE("benjamini hochberg") {
  std::vector<double> p = {0.01, 0.04, 0.03, 0.5};
  const auto q = benjamini_hochberg(p);
  // Sorted: .01 .03 .04 .5 -> .04 .04*4/3 ... step-up minima.
  CHECK(q[0] == doctest::Approx(0.04));
  CHECK(q[2] == doctest::Approx(0.04 * 4 / 3.0));
  CHECK(q[1] == doctest::Approx(0.04 * 4 / 3.0));
  CHECK(q[3] == doctest::Approx(0.5));
  for (std::size_t i = 0; i < p.size(); ++i) CHECK(q[i] >= p[i]);
}

TEST_CASE("enrichment rows") {
  std::istringstream obo(kChainObo);
  const auto g = parse_obo(obo);
  AnnotationMap ann;
  std::vector<std::string> background, target;
  for (int i = 0; i < 50; ++i) {
    const std::string gene = "g" + std::to_string(i);
    background.push_back(gene);
    if (i < 10) ann[gene] = g.closure("GO:3");
    else if (i < 20) ann[gene] = g.closure("GO:2");
  }
  target = {"g0", "g1", "g2", "g3", "g40"};
  const auto rows = enrich::enrich(target, background, ann, g);
  REQUIRE(rows.size() == 3);
  CHECK(rows[0].term_id == "GO:3");
  CHECK(rows[0].p_value == doctest::Approx(hypergeometric_tail(50, 10, 5, 4)));
  CHECK(rows[0].significant);
  CHECK(rows[0].hit_genes == std::vector<std::string>{"g0", "g1", "g2", "g3"});
  for (std::size_t i = 0; i < rows.size(); ++i) {
    CHECK(rows[i].fdr >= rows[i].p_value);
    if (i) CHECK(rows[i].p_value >= rows[i - 1].p_value);
    if (i) CHECK(rows[i].fdr >= rows[i - 1].fdr);
  }
  // Upward closure: parent hits dominate child hits.
  std::map<std::string, std::size_t> hits;
  for (const auto& r : rows) hits[r.term_id] = r.target_hits;
  CHECK(hits["GO:1"] >= hits["GO:2"]);
  CHECK(hits["GO:2"] >= hits["GO:3"]);

  const auto same = enrich::enrich(background, background, ann, g);
  for (const auto& r : same) CHECK(r.p_value == 1.0);

  std::vector<std::string> outside = {"zz"};
  CHECK_THROWS_AS(enrich::enrich(outside, background, ann, g), Error);
  // k = 0 terms are absent.
  std::vector<std::string> none = {"g45"};
  CHECK(enrich::enrich(none, background, ann, g).empty());
}

TEST_CASE("significance flag flips at 0.05") {
  // Find (N, K, n, k) on both sides of the cut and check the flag follows p.
  std::istringstream obo(kChainObo);
  const auto g = parse_obo(obo);
  int below = 0, above = 0;
  for (std::size_t K = 1; K <= 20; ++K) {
    for (std::size_t k = 1; k <= 5 && k <= K; ++k) {
      AnnotationMap ann;
      std::vector<std::string> bg, tg;
      for (std::size_t i = 0; i < 40; ++i) {
        bg.push_back("g" + std::to_string(i));
        if (i < K) ann[bg.back()] = {"GO:1"};
      }
      for (std::size_t i = 0; i < k; ++i) tg.push_back(bg[i]);
      for (std::size_t i = 0; i < 5 - k; ++i) tg.push_back(bg[39 - i]);
      const auto rows = enrich::enrich(tg, bg, ann, g);
      REQUIRE(rows.size() == 1);
      CHECK(rows[0].significant == (rows[0].p_value < 0.05));
      (rows[0].p_value < 0.05 ? below : above)++;
    }
  }
  CHECK(below > 0);
  CHECK(above > 0);
}
