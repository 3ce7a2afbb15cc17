#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <string>

#include <gtest/gtest.h>

#include "hdgi/hetgraph.hpp"
#include "hdgi/sparse.hpp"
#include "test_util.hpp"

using namespace hdgi;
namespace fs = std::filesystem;

namespace {

struct FixtureDir {
  fs::path dir;
  explicit FixtureDir(const std::string& name) : dir(fs::path(::testing::TempDir()) / name) {
    fs::create_directories(dir);
  }
  std::string path(const std::string& file) const { return (dir / file).string(); }
  void write(const std::string& file, const std::string& content) const {
    std::ofstream out(path(file));
    out << content;
  }
};

std::string slurp(const std::string& path) {
  std::ifstream in(path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Small ACM-style fixture: two papers sharing an author.
void write_basic_fixture(const FixtureDir& fx) {
  fx.write("nodes.tsv", "# node file\np1\tpaper\np2\tpaper\na1\tauthor\n");
  fx.write("edges.tsv", "PA\tp1\ta1\nPA\tp2\ta1\n");
  fx.write("features.tsv", "1.5\t-2\n0.25\t3\n");
  fx.write("labels.tsv", "p1\t0\np2\t1\n");
}

}  // namespace

TEST(LoadGraph, BasicFixtureRoundTrip) {
  FixtureDir fx("load_basic");
  write_basic_fixture(fx);
  const HeteroGraph g = load_graph(fx.path("nodes.tsv"), fx.path("edges.tsv"),
                                   fx.path("features.tsv"), fx.path("labels.tsv"), "paper");
  EXPECT_EQ(g.target_count(), 2);
  EXPECT_EQ(g.type_count("author"), 1);
  EXPECT_EQ(g.edges_by_type().at("PA").edges.size(), 2u);
  EXPECT_EQ(g.feature_dim(), 2);
  EXPECT_DOUBLE_EQ(g.features().at(0, 0), 1.5);
  ASSERT_TRUE(g.labels());
  EXPECT_EQ((*g.labels())[1], 1);
}

TEST(LoadGraph, UnknownEdgeEndpointNamesIdAndLine) {
  FixtureDir fx("load_unknown");
  write_basic_fixture(fx);
  fx.write("edges.tsv", "PA\tp1\ta1\nPA\tp9\ta1\n");
  try {
    load_graph(fx.path("nodes.tsv"), fx.path("edges.tsv"), fx.path("features.tsv"), std::nullopt,
               "paper");
    FAIL() << "expected error";
  } catch (const std::runtime_error& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("p9"), std::string::npos) << msg;
    EXPECT_NE(msg.find(":2"), std::string::npos) << msg;
  }
}

TEST(LoadGraph, MissingFileError) {
  FixtureDir fx("load_missing");
  write_basic_fixture(fx);
  EXPECT_THROW(load_graph(fx.path("nope.tsv"), fx.path("edges.tsv"), fx.path("features.tsv"),
                          std::nullopt, "paper"),
               std::runtime_error);
}

TEST(LoadGraph, FeatureRowCountMismatch) {
  FixtureDir fx("load_rows");
  write_basic_fixture(fx);
  fx.write("features.tsv", "1\t2\n");
  EXPECT_THROW(load_graph(fx.path("nodes.tsv"), fx.path("edges.tsv"), fx.path("features.tsv"),
                          std::nullopt, "paper"),
               std::runtime_error);
}

TEST(LoadGraph, NonNumericFeatureNamesLine) {
  FixtureDir fx("load_nan");
  write_basic_fixture(fx);
  fx.write("features.tsv", "1\t2\n# comment\nfoo\t3\n");
  try {
    load_graph(fx.path("nodes.tsv"), fx.path("edges.tsv"), fx.path("features.tsv"), std::nullopt,
               "paper");
    FAIL() << "expected error";
  } catch (const std::runtime_error& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find(":3"), std::string::npos) << msg;
    EXPECT_NE(msg.find("foo"), std::string::npos) << msg;
  }
}

TEST(LoadGraph, HomogeneousGraphRejected) {
  FixtureDir fx("load_homog");
  fx.write("nodes.tsv", "p1\tpaper\np2\tpaper\n");
  fx.write("edges.tsv", "PP\tp1\tp2\n");
  fx.write("features.tsv", "1\n2\n");
  // 1 node type + 1 edge type = 2, not a heterogeneous graph
  EXPECT_THROW(load_graph(fx.path("nodes.tsv"), fx.path("edges.tsv"), fx.path("features.tsv"),
                          std::nullopt, "paper"),
               std::invalid_argument);
}

TEST(WriteGraph, CanonicalRoundTripIsByteIdentical) {
  FixtureDir fx("roundtrip");
  SynthOptions opt;
  opt.n_target = 23;
  opt.n_aux_per_type = 7;
  opt.n_classes = 3;
  opt.edge_density = 0.4;
  opt.noise = 0.5;
  opt.feature_dim = 4;
  opt.seed = 99;
  const HeteroGraph g = synth_graph(opt);
  write_graph(g, fx.path("nodes.tsv"), fx.path("edges.tsv"), fx.path("features.tsv"),
              fx.path("labels.tsv"));
  const HeteroGraph loaded = load_graph(fx.path("nodes.tsv"), fx.path("edges.tsv"),
                                        fx.path("features.tsv"), fx.path("labels.tsv"), "paper");
  write_graph(loaded, fx.path("nodes2.tsv"), fx.path("edges2.tsv"), fx.path("features2.tsv"),
              fx.path("labels2.tsv"));
  EXPECT_EQ(slurp(fx.path("nodes.tsv")), slurp(fx.path("nodes2.tsv")));
  EXPECT_EQ(slurp(fx.path("edges.tsv")), slurp(fx.path("edges2.tsv")));
  EXPECT_EQ(slurp(fx.path("features.tsv")), slurp(fx.path("features2.tsv")));
  EXPECT_EQ(slurp(fx.path("labels.tsv")), slurp(fx.path("labels2.tsv")));
}

TEST(WriteGraph, WorksWithoutLabels) {
  FixtureDir fx("no_labels");
  write_basic_fixture(fx);
  const HeteroGraph g = load_graph(fx.path("nodes.tsv"), fx.path("edges.tsv"),
                                   fx.path("features.tsv"), std::nullopt, "paper");
  EXPECT_FALSE(g.labels());
  write_graph(g, fx.path("n2.tsv"), fx.path("e2.tsv"), fx.path("f2.tsv"), std::nullopt);
  EXPECT_EQ(slurp(fx.path("n2.tsv")), "a1\tauthor\np1\tpaper\np2\tpaper\n");  // (type, id) order
  // asking for a label file on an unlabeled graph is an error
  EXPECT_THROW(write_graph(g, fx.path("n3.tsv"), fx.path("e3.tsv"), fx.path("f3.tsv"),
                           fx.path("l3.tsv")),
               std::logic_error);
}

TEST(MetaPathSpec, InvariantsEnforced) {
  EXPECT_THROW((MetaPathSpec{"bad", {"PA"}}).validate(), std::invalid_argument);
  EXPECT_THROW((MetaPathSpec{"bad", {"PA", "PS"}}).validate(), std::invalid_argument);
  EXPECT_NO_THROW((MetaPathSpec{"PAP", {"PA", "PA"}}).validate());
  EXPECT_NO_THROW((MetaPathSpec{"APCPA", {"AP", "PC", "PC", "AP"}}).validate());
}

TEST(DeriveMetapath, SharedAuthorConnectsPapers) {
  // papers {p1,p2} share a1; p3 isolated
  std::map<std::string, std::vector<std::string>> ids{
      {"paper", {"p1", "p2", "p3"}}, {"author", {"a1"}}, {"subject", {"s1"}}};
  std::map<std::string, EdgeTypeData> edges{
      {"PA", {"paper", "author", {{0, 0}, {1, 0}}}},
      {"PS", {"paper", "subject", {}}},
  };
  const HeteroGraph g(std::move(ids), std::move(edges), "paper", Tensor(3, 1));
  const SparseMatrix a = derive_metapath_adjacency(g, {"PAP", {"PA", "PA"}});
  const auto expected = testutil::enumerate_metapath_pairs(g, {"PAP", {"PA", "PA"}});
  EXPECT_EQ(expected, (std::set<std::pair<int, int>>{{0, 1}, {1, 0}}));
  EXPECT_EQ(a.nnz(), 2);
  EXPECT_EQ(a.get(0, 1), 1.0);
  EXPECT_EQ(a.get(1, 0), 1.0);
  EXPECT_EQ(a.get(0, 2), 0.0);
  EXPECT_EQ(a.get(0, 0), 0.0);  // diagonal zeroed
}

TEST(DeriveMetapath, EmptyEdgeTypeGivesZeroMatrix) {
  std::map<std::string, std::vector<std::string>> ids{
      {"paper", {"p1", "p2"}}, {"author", {"a1"}}, {"subject", {"s1"}}};
  std::map<std::string, EdgeTypeData> edges{
      {"PA", {"paper", "author", {{0, 0}}}},
      {"PS", {"paper", "subject", {}}},
  };
  const HeteroGraph g(std::move(ids), std::move(edges), "paper", Tensor(2, 1));
  const SparseMatrix a = derive_metapath_adjacency(g, {"PSP", {"PS", "PS"}});
  EXPECT_EQ(a.nnz(), 0);
  EXPECT_EQ(a.n_rows, 2);
}

TEST(DeriveMetapath, FourHopChainMatchesWalkEnumeration) {
  // APCPA-style: author-paper-conference-paper-author on a 6-node fixture
  std::map<std::string, std::vector<std::string>> ids{
      {"author", {"a1", "a2", "a3"}}, {"paper", {"p1", "p2"}}, {"conf", {"c1"}}};
  std::map<std::string, EdgeTypeData> edges{
      {"AP", {"author", "paper", {{0, 0}, {1, 0}, {2, 1}}}},
      {"PC", {"paper", "conf", {{0, 0}, {1, 0}}}},
  };
  const HeteroGraph g(std::move(ids), std::move(edges), "author", Tensor(3, 1));
  const MetaPathSpec spec{"APCPA", {"AP", "PC", "PC", "AP"}};
  const SparseMatrix a = derive_metapath_adjacency(g, spec);
  const auto expected = testutil::enumerate_metapath_pairs(g, spec);
  // all three authors reach each other through c1
  EXPECT_EQ(expected.size(), 6u);
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) {
      const bool linked = expected.count({i, j}) > 0;
      EXPECT_EQ(a.get(i, j), linked ? 1.0 : 0.0) << i << "," << j;
    }
  }
}

TEST(DeriveMetapath, ErrorsOnBadChains) {
  std::map<std::string, std::vector<std::string>> ids{
      {"paper", {"p1", "p2"}}, {"author", {"a1"}}, {"subject", {"s1"}}};
  std::map<std::string, EdgeTypeData> edges{
      {"PA", {"paper", "author", {{0, 0}}}},
      {"AS", {"author", "subject", {{0, 0}}}},
  };
  const HeteroGraph g(std::move(ids), std::move(edges), "paper", Tensor(2, 1));
  // unknown edge type
  EXPECT_THROW(derive_metapath_adjacency(g, {"bad", {"XX", "XX"}}), std::invalid_argument);
  // chain whose endpoint type is not the target type (rejected at hop 1)
  EXPECT_THROW(derive_metapath_adjacency(g, {"bad", {"AS", "AS"}}), std::invalid_argument);
  // a symmetric 4-hop through two auxiliary types is legal and returns home
  const MetaPathSpec pasap{"PASAP", {"PA", "AS", "AS", "PA"}};
  const SparseMatrix a = derive_metapath_adjacency(g, pasap);
  EXPECT_EQ(a.n_rows, 2);
  std::set<std::pair<int, int>> got;
  for (int i = 0; i < a.n_rows; ++i) {
    auto [b, e] = a.row_range(i);
    for (int k = b; k < e; ++k) got.emplace(i, a.col_idx[static_cast<std::size_t>(k)]);
  }
  EXPECT_EQ(got, testutil::enumerate_metapath_pairs(g, pasap));
}

// Product-of-incidences semantics vs the walk-enumeration oracle, plus the
// symmetry and CSR invariants, over random graphs.
TEST(DeriveMetapath, MatchesEnumerationOnRandomGraphs) {
  Rng rng(31337);
  const std::vector<MetaPathSpec> specs{{"two", {"E1", "E1"}}, {"four", {"E1", "E2", "E2", "E1"}}};
  for (int trial = 0; trial < 60; ++trial) {
    const HeteroGraph g = testutil::random_heterograph(rng);
    for (const auto& spec : specs) {
      const SparseMatrix a = derive_metapath_adjacency(g, spec);
      a.validate();
      EXPECT_TRUE(is_binary(a));
      EXPECT_TRUE(has_zero_diagonal(a));
      const auto expected = testutil::enumerate_metapath_pairs(g, spec);
      std::set<std::pair<int, int>> got;
      for (int i = 0; i < a.n_rows; ++i) {
        auto [b, e] = a.row_range(i);
        for (int k = b; k < e; ++k) got.emplace(i, a.col_idx[static_cast<std::size_t>(k)]);
      }
      EXPECT_EQ(got, expected);
      for (const auto& [i, j] : got) EXPECT_EQ(a.get(j, i), 1.0);  // symmetry
    }
  }
}

TEST(SynthGraph, ZeroNoiseGivesBlockDiagonalAdjacency) {
  SynthOptions opt;
  opt.n_target = 90;
  opt.n_aux_per_type = 30;
  opt.n_classes = 3;
  opt.edge_density = 0.3;
  opt.noise = 0.0;
  opt.feature_dim = 6;
  opt.seed = 4;
  const HeteroGraph g = synth_graph(opt);
  const auto& labels = *g.labels();
  for (const auto& name : {"PAP", "PSP"}) {
    const MetaPathSpec spec{name, {name[1] == 'A' ? "PA" : "PS", name[1] == 'A' ? "PA" : "PS"}};
    const SparseMatrix a = derive_metapath_adjacency(g, spec);
    for (int i = 0; i < a.n_rows; ++i) {
      auto [b, e] = a.row_range(i);
      for (int k = b; k < e; ++k)
        EXPECT_EQ(labels[static_cast<std::size_t>(i)],
                  labels[static_cast<std::size_t>(a.col_idx[static_cast<std::size_t>(k)])]);
    }
  }
}

TEST(SynthGraph, DeterministicForFixedSeed) {
  SynthOptions opt;
  opt.n_target = 50;
  opt.n_aux_per_type = 20;
  opt.seed = 777;
  opt.noise = 0.4;
  const HeteroGraph a = synth_graph(opt);
  const HeteroGraph b = synth_graph(opt);
  EXPECT_EQ(a.features().data, b.features().data);
  EXPECT_EQ(a.edges_by_type().at("PA").edges, b.edges_by_type().at("PA").edges);
  EXPECT_EQ(a.edges_by_type().at("PS").edges, b.edges_by_type().at("PS").edges);
  EXPECT_EQ(*a.labels(), *b.labels());
}

TEST(SynthGraph, FullNoiseEqualizesEdgeRates) {
  SynthOptions opt;
  opt.n_target = 240;
  opt.n_aux_per_type = 80;
  opt.n_classes = 3;
  opt.edge_density = 0.25;
  opt.noise = 1.0;
  opt.feature_dim = 4;
  opt.seed = 12;
  const HeteroGraph g = synth_graph(opt);
  const auto& labels = *g.labels();
  auto aux_class = [&](int j, int total) {
    return static_cast<int>((static_cast<long>(j) * opt.n_classes) / total);
  };
  long within_edges = 0, cross_edges = 0, within_pairs = 0, cross_pairs = 0;
  for (int i = 0; i < opt.n_target; ++i) {
    for (int j = 0; j < opt.n_aux_per_type; ++j) {
      const bool within = labels[static_cast<std::size_t>(i)] == aux_class(j, opt.n_aux_per_type);
      (within ? within_pairs : cross_pairs) += 1;
    }
  }
  for (const auto& etype : {"PA", "PS"}) {
    for (const auto& [s, d] : g.edges_by_type().at(etype).edges) {
      const bool within = labels[static_cast<std::size_t>(s)] == aux_class(d, opt.n_aux_per_type);
      (within ? within_edges : cross_edges) += 1;
    }
  }
  within_pairs *= 2;  // two edge types
  cross_pairs *= 2;
  // 2x2 contingency chi-square; 1 dof, p = 0.01 threshold
  const double a = static_cast<double>(within_edges);
  const double b = static_cast<double>(within_pairs - within_edges);
  const double c = static_cast<double>(cross_edges);
  const double d = static_cast<double>(cross_pairs - cross_edges);
  const double n = a + b + c + d;
  const double chi2 = n * (a * d - b * c) * (a * d - b * c) /
                      ((a + b) * (c + d) * (a + c) * (b + d));
  EXPECT_LT(chi2, 6.634896601);  // chi-square 0.99 quantile, 1 dof
}

TEST(SynthGraph, InvalidArgumentsRejected) {
  SynthOptions opt;
  opt.n_classes = 1;
  EXPECT_THROW(synth_graph(opt), std::invalid_argument);
  opt.n_classes = 5;
  opt.n_target = 3;
  EXPECT_THROW(synth_graph(opt), std::invalid_argument);
  opt.n_target = 10;
  opt.edge_density = 1.5;
  EXPECT_THROW(synth_graph(opt), std::invalid_argument);
  opt.edge_density = 0.2;
  opt.n_aux_per_type = 0;
  EXPECT_THROW(synth_graph(opt), std::invalid_argument);
}

TEST(SparseMatrix, CsrInvariantsAfterConstruction) {
  Rng rng(5);
  for (int trial = 0; trial < 30; ++trial) {
    const int n = 2 + rng.uniform_int(10);
    std::vector<std::pair<int, int>> pairs;
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j)
        if (rng.bernoulli(0.3)) pairs.emplace_back(i, j);
    const SparseMatrix m = SparseMatrix::from_pairs(n, n, pairs);
    EXPECT_NO_THROW(m.validate());
    EXPECT_NO_THROW(transpose(m).validate());
    EXPECT_NO_THROW(symmetrize_binary(m).validate());
    EXPECT_NO_THROW(drop_diagonal(m).validate());
    EXPECT_NO_THROW(bool_multiply(m, m).validate());
  }
}
