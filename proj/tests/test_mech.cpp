#include <gtest/gtest.h>

#include <cmath>
#include <map>

#include "acgen/graph.hpp"
#include "acgen/mech.hpp"
#include "acgen/rng.hpp"
#include "acgen/stats.hpp"

namespace acgen {
namespace {

// --- GMM roots ------------------------------------------------------------------

TEST(Gmm, StandardNormalMoments) {
  const GmmSpec spec{{{1.0, 0.0, 1.0}}};
  const auto x = sample_root(spec, 100000, 17);
  EXPECT_GE(stats::mean(x), -0.02);
  EXPECT_LE(stats::mean(x), 0.02);
  EXPECT_GE(stats::stddev(x), 0.98);
  EXPECT_LE(stats::stddev(x), 1.02);
}

TEST(Gmm, TwoSeparatedComponentsAreBimodal) {
  const GmmSpec spec{{{0.5, -3.0, 0.1}, {0.5, 3.0, 0.1}}};
  const auto x = sample_root(spec, 100000, 23);
  EXPECT_GE(stats::mean(x), -0.1);
  EXPECT_LE(stats::mean(x), 0.1);
  const auto inside = std::count_if(x.begin(), x.end(), [](double v) { return std::abs(v) <= 1.0; });
  EXPECT_LT(static_cast<double>(inside) / x.size(), 0.01);
}

TEST(Gmm, Deterministic) {
  const GmmSpec spec{{{0.3, -1.0, 0.5}, {0.7, 2.0, 0.4}}};
  EXPECT_EQ(sample_root(spec, 1000, 5), sample_root(spec, 1000, 5));
  EXPECT_NE(sample_root(spec, 1000, 5), sample_root(spec, 1000, 6));
}

TEST(Gmm, AnalyticMomentsMatchSamples) {
  const GmmSpec spec{{{0.2, -2.0, 0.5}, {0.5, 1.0, 0.3}, {0.3, 3.0, 1.0}}};
  const auto x = sample_root(spec, 200000, 31);
  EXPECT_NEAR(stats::mean(x), spec.mean(), 0.02);
  EXPECT_NEAR(stats::variance(x), spec.variance(), 0.05);
}

TEST(Gmm, Validation) {
  EXPECT_THROW((GmmSpec{{{0.5, 0.0, 1.0}}}).validate(), std::invalid_argument);
  EXPECT_THROW((GmmSpec{{{1.0, 0.0, 0.0}}}).validate(), std::invalid_argument);
  EXPECT_THROW((GmmSpec{}).validate(), std::invalid_argument);
  EXPECT_NO_THROW((GmmSpec{{{1.0, 0.0, 1.0}}}).validate());
}

TEST(Gmm, RandomSpecRanges) {
  Rng rng(44);
  for (int i = 0; i < 500; ++i) {
    const auto spec = random_gmm_spec(rng);
    ASSERT_NO_THROW(spec.validate());
    ASSERT_GE(spec.components.size(), 2u);
    ASSERT_LE(spec.components.size(), 5u);
    for (const auto& c : spec.components) {
      ASSERT_GE(c.mean, -4.0);
      ASSERT_LE(c.mean, 4.0);
      ASSERT_GE(c.stddev, 0.3);
      ASSERT_LE(c.stddev, 1.0);
    }
  }
}

// --- edge functions -------------------------------------------------------------

TEST(EdgeFunction, Examples) {
  const std::vector<double> in{1.0, -1.0, 0.0};
  EXPECT_EQ(eval_edge_function(Linear{2.0}, in), (std::vector<double>{2.0, -2.0, 0.0}));
  EXPECT_EQ(eval_edge_function(Sigmoid{1.0, 1.0, 0.0}, std::vector<double>{0.0}),
            std::vector<double>{0.5});
  EXPECT_EQ(eval_edge_function(Polynomial{0.0, 1.0, 0.0}, std::vector<double>{3.0}),
            std::vector<double>{9.0});
}

TEST(EdgeFunction, RejectsNonFiniteInput) {
  EXPECT_THROW(eval_edge_function(Linear{1.0}, std::vector<double>{NAN}), std::domain_error);
  EXPECT_THROW(eval_edge_function(Linear{1.0}, std::vector<double>{INFINITY}), std::domain_error);
}

TEST(EdgeFunction, ParameterRoundTrip) {
  const EdgeFunction fs[] = {Linear{-1.5}, Polynomial{0.7, -0.2, 0.1}, Sigmoid{2.0, -0.8, 0.3}};
  for (const auto& f : fs) {
    const auto p = parameters(f);
    EXPECT_EQ(make_edge_function(kind_of(f), p), f);
    EXPECT_EQ(parse_mechanism_kind(to_string(kind_of(f))), kind_of(f));
  }
  EXPECT_THROW(make_edge_function(MechanismKind::kLinear, std::vector<double>{1.0, 2.0}),
               std::invalid_argument);
  EXPECT_THROW(make_edge_function(MechanismKind::kPolynomial, std::vector<double>{0, 0, 0}),
               std::invalid_argument);
  EXPECT_THROW(make_edge_function(MechanismKind::kSigmoid, std::vector<double>{0, 1, 0}),
               std::invalid_argument);
}

TEST(MechanismMode, Names) {
  EXPECT_EQ(parse_mechanism_mode("linear"), MechanismMode::kLinearOnly);
  EXPECT_EQ(parse_mechanism_mode("mixed"), MechanismMode::kMixed);
  EXPECT_FALSE(parse_mechanism_mode("cubic"));
}

// --- assign_mechanisms ------------------------------------------------------------

TEST(AssignMechanisms, LinearOnlyIsAllLinear) {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const Dag g = generate_dag(25, DensityLevel::dense(), seed);
    const auto a = assign_mechanisms(g, MechanismMode::kLinearOnly, {}, seed);
    EXPECT_TRUE(a.check(g).empty());
    for (const auto& [e, f] : a.edge_functions) {
      ASSERT_EQ(kind_of(f), MechanismKind::kLinear);
      const double w = std::get<Linear>(f).weight;
      ASSERT_GE(std::abs(w), 0.5);
      ASSERT_LE(std::abs(w), 2.0);
    }
  }
}

TEST(AssignMechanisms, MixedKindFrequencies) {
  // A 50-edge graph: X1 feeds 50 children.
  Dag g;
  const auto hub = g.add_node(NodeKind::kObserved);
  for (int i = 0; i < 50; ++i) g.add_edge(hub, g.add_node(NodeKind::kObserved));
  std::map<MechanismKind, int> counts;
  for (std::uint64_t seed = 1; seed <= 200; ++seed) {
    const auto a = assign_mechanisms(g, MechanismMode::kMixed, {}, seed);
    for (const auto& [e, f] : a.edge_functions) ++counts[kind_of(f)];
  }
  for (auto kind : {MechanismKind::kLinear, MechanismKind::kPolynomial, MechanismKind::kSigmoid}) {
    const double freq = counts[kind] / (200.0 * 50.0);
    EXPECT_GE(freq, 0.18) << to_string(kind);
    EXPECT_LE(freq, 0.48) << to_string(kind);
  }
}

TEST(AssignMechanisms, ForceLinearEdgeStaysLinear) {
  Dag g = generate_dag(10, DensityLevel::dense(), 3);
  const Edge tagged = g.edges().front();
  g.mark_force_linear(tagged);
  for (std::uint64_t seed = 1; seed <= 200; ++seed) {
    const auto a = assign_mechanisms(g, MechanismMode::kMixed, {}, seed);
    ASSERT_EQ(kind_of(a.function(tagged)), MechanismKind::kLinear) << seed;
  }
}

TEST(AssignMechanisms, NoiseAndScaleRanges) {
  const Dag g = generate_dag(50, DensityLevel::sparse(), 12);
  const auto a = assign_mechanisms(g, MechanismMode::kMixed, {}, 12);
  for (NodeId v : g.nodes()) {
    const double t = a.target_scale.at(v);
    EXPECT_GE(t, 0.5);
    EXPECT_LE(t, 2.0);
    if (g.parents(v).empty()) {
      EXPECT_TRUE(a.roots.contains(v));
      EXPECT_FALSE(a.noise.contains(v));
    } else {
      const double s = a.noise.at(v).stddev;
      EXPECT_GE(s, 0.3);
      EXPECT_LE(s, 1.0);
    }
  }
}

TEST(AssignMechanisms, Deterministic) {
  const Dag g = generate_dag(25, DensityLevel::dense(), 2);
  EXPECT_EQ(assign_mechanisms(g, MechanismMode::kMixed, {}, 4),
            assign_mechanisms(g, MechanismMode::kMixed, {}, 4));
}

TEST(AssignMechanisms, SelectionInputsAreUnitContributions) {
  Dag g = generate_dag(10, DensityLevel::sparse(), 5);
  const auto plan = attach_selection_nodes(g, 1, 0.7, 5);
  const auto a = assign_mechanisms(g, MechanismMode::kMixed, plan, 5);
  const auto& s = plan.selection[0];
  for (NodeId p : s.parents) {
    const auto& f = a.function({p, s.latent});
    ASSERT_EQ(kind_of(f), MechanismKind::kLinear);
    EXPECT_DOUBLE_EQ(std::abs(std::get<Linear>(f).weight) * a.target_scale.at(p), 1.0);
  }
}

TEST(AssignMechanisms, ConfounderOutputsStayLinear) {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    Dag g = generate_dag(15, DensityLevel::dense(), seed);
    const auto plan = insert_confounders(g, 2, seed);
    const auto a = assign_mechanisms(g, MechanismMode::kMixed, plan, seed);
    for (const auto& c : plan.confounders) {
      for (NodeId ch : c.children) EXPECT_EQ(kind_of(a.function({c.latent, ch})), MechanismKind::kLinear);
    }
    EXPECT_TRUE(a.check(g).empty());
  }
}

TEST(AssignmentCheck, NonlinearConfounderEdgeRejected) {
  Dag g = generate_dag(10, DensityLevel::sparse(), 2);
  const auto plan = insert_confounders(g, 1, 2);
  auto a = assign_mechanisms(g, MechanismMode::kMixed, plan, 2);
  const auto& c = plan.confounders[0];
  a.edge_functions[{c.latent, c.children[0]}] = Sigmoid{1.0, 1.0, 0.0};
  EXPECT_FALSE(a.check(g).empty());
}

// --- child_structural_value ---------------------------------------------------------

TEST(StructuralValue, NoParentsReturnsNoise) {
  Dag g;
  const auto x = g.add_node(NodeKind::kObserved);
  MechanismAssignment a;
  const std::vector<double> noise{0.1, -0.2, 0.3};
  EXPECT_EQ(child_structural_value(a, g, x, {}, noise), noise);
}

TEST(StructuralValue, ExactCancellationBySymmetry) {
  Dag g;
  const auto p1 = g.add_node(NodeKind::kObserved);
  const auto p2 = g.add_node(NodeKind::kObserved);
  const auto c = g.add_node(NodeKind::kObserved);
  g.add_edge(p1, c);
  g.add_edge(p2, c);
  MechanismAssignment a;
  a.edge_functions[{p1, c}] = Linear{1.0};
  a.edge_functions[{p2, c}] = Linear{-1.0};
  const std::vector<double> col{1.5, -2.0, 0.25, 7.0};
  const std::vector<double> zero(4, 0.0);
  const auto out = child_structural_value(a, g, c, {{p1, col}, {p2, col}}, zero);
  for (double v : out) EXPECT_EQ(v, 0.0);
}

TEST(StructuralValue, VarianceAdds) {
  Dag g;
  const auto p = g.add_node(NodeKind::kObserved);
  const auto c = g.add_node(NodeKind::kObserved);
  g.add_edge(p, c);
  MechanismAssignment a;
  a.edge_functions[{p, c}] = Linear{1.0};
  Rng rng(77);
  std::vector<double> x(100000), e(100000);
  for (auto& v : x) v = rng.normal();
  for (auto& v : e) v = rng.normal();
  const auto out = child_structural_value(a, g, c, {{p, x}}, e);
  EXPECT_NEAR(stats::variance(out), 2.0, 0.04);
}

TEST(StructuralValue, MissingParentColumn) {
  Dag g;
  const auto p = g.add_node(NodeKind::kObserved);
  const auto c = g.add_node(NodeKind::kObserved);
  g.add_edge(p, c);
  MechanismAssignment a;
  a.edge_functions[{p, c}] = Linear{1.0};
  const std::vector<double> e(3, 0.0);
  EXPECT_THROW(child_structural_value(a, g, c, {}, e), std::invalid_argument);
}

}  // namespace
}  // namespace acgen
