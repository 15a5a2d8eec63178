#include <algorithm>
#include <set>

#include <gtest/gtest.h>

#include "thermalfuzz/mutation.hpp"
#include "thermalfuzz/starter_models.hpp"

namespace tf = thermalfuzz;

namespace {

template <typename K>
std::size_t count_kind(const tf::ModelGraph& g) {
  return static_cast<std::size_t>(std::count_if(g.edges.begin(), g.edges.end(), [](const auto& kv) {
    return std::holds_alternative<K>(kv.second.kind);
  }));
}

// Topology without operator kinds: (srcs, dst) per edge id.
std::vector<std::pair<std::vector<tf::VertexId>, tf::VertexId>> wiring(const tf::ModelGraph& g) {
  std::vector<std::pair<std::vector<tf::VertexId>, tf::VertexId>> out;
  for (const auto& [id, e] : g.edges) out.emplace_back(e.srcs, e.dst);
  return out;
}

}  // namespace

TEST(Mutation, RuleNamesAndIds) {
  EXPECT_EQ(tf::rule_name(tf::MutationRule::gemm_conv_insertion), "GEMM Convolution Insertion");
  EXPECT_EQ(tf::rule_name(tf::MutationRule::random_operator_replacement), "Random Operator Replacement (ROR)");
  for (int id = 1; id <= 8; ++id) EXPECT_EQ(static_cast<int>(tf::rule_from_id(id)), id);
  EXPECT_THROW(tf::rule_from_id(0), std::out_of_range);
  EXPECT_THROW(tf::rule_from_id(9), std::out_of_range);
}

TEST(Mutation, EveryRuleKeepsGraphsValid) {
  const auto starters = tf::starter_models();
  for (const auto& g : starters)
    for (auto rule : tf::kAllRules)
      for (std::uint64_t seed = 1; seed <= 25; ++seed) {
        if (tf::eligible_sites(g, rule).empty()) {
          EXPECT_THROW(tf::mutate(g, rule, seed), tf::NoEligibleSite);
          continue;
        }
        const auto m = tf::mutate(g, rule, seed);
        const auto errs = tf::validate(m.graph);
        ASSERT_TRUE(errs.empty()) << g.name << " rule " << static_cast<int>(rule) << ": " << errs.front();
      }
}

TEST(Mutation, ChainedMutationsStayValid) {
  tf::Rng rng(2024);
  for (const auto& start : tf::starter_models()) {
    auto g = start;
    for (int step = 0; step < 30; ++step) {
      const auto rule = tf::kAllRules[rng.below(tf::kAllRules.size())];
      if (tf::eligible_sites(g, rule).empty()) continue;
      g = tf::apply_rule(g, rule, rng.fork());
      const auto errs = tf::validate(g);
      ASSERT_TRUE(errs.empty()) << start.name << " step " << step << ": " << errs.front();
    }
  }
}

TEST(Mutation, Rule1AddsExactlyOneConvolution) {
  for (const auto& g : tf::starter_models()) {
    if (tf::eligible_sites(g, tf::MutationRule::gemm_conv_insertion).empty()) continue;
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
      const auto m = tf::mutate(g, tf::MutationRule::gemm_conv_insertion, seed);
      EXPECT_EQ(count_kind<tf::GemmConv>(m.graph), count_kind<tf::GemmConv>(g) + 1);
    }
  }
}

TEST(Mutation, InsertionRulesAddTheirOperator) {
  for (const auto& g : tf::starter_models()) {
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
      if (!tf::eligible_sites(g, tf::MutationRule::matmul_insertion).empty())
        EXPECT_EQ(count_kind<tf::MatMul>(tf::apply_rule(g, tf::MutationRule::matmul_insertion, seed)),
                  count_kind<tf::MatMul>(g) + 1);
      if (!tf::eligible_sites(g, tf::MutationRule::rnn_insertion).empty())
        EXPECT_EQ(count_kind<tf::Rnn>(tf::apply_rule(g, tf::MutationRule::rnn_insertion, seed)), 1u);
      if (!tf::eligible_sites(g, tf::MutationRule::lstm_insertion).empty())
        EXPECT_EQ(count_kind<tf::Lstm>(tf::apply_rule(g, tf::MutationRule::lstm_insertion, seed)), 1u);
      if (!tf::eligible_sites(g, tf::MutationRule::gru_insertion).empty())
        EXPECT_EQ(count_kind<tf::Gru>(tf::apply_rule(g, tf::MutationRule::gru_insertion, seed)), 1u);
    }
  }
}

TEST(Mutation, LstmVariantsAllAppear) {
  const auto g = tf::starter_camera_cnn();
  std::set<std::pair<bool, bool>> seen;  // (multi-layer, bidirectional)
  for (std::uint64_t seed = 1; seed <= 60; ++seed) {
    const auto m = tf::apply_rule(g, tf::MutationRule::lstm_insertion, seed);
    for (const auto& [id, e] : m.edges)
      if (const auto* l = std::get_if<tf::Lstm>(&e.kind)) seen.insert({l->layers == tf::LayerCount::multi, l->bidirectional});
  }
  EXPECT_EQ(seen.size(), 3u);
}

TEST(Mutation, PrecisionRulesKeepTopology) {
  for (const auto& g : tf::starter_models())
    for (auto rule : {tf::MutationRule::high_precision_replacement, tf::MutationRule::mixed_precision_replacement}) {
      if (tf::eligible_sites(g, rule).empty()) continue;
      for (std::uint64_t seed = 1; seed <= 10; ++seed) {
        const auto m = tf::mutate(g, rule, seed);
        EXPECT_EQ(wiring(m.graph), wiring(g));
        EXPECT_EQ(m.graph.vertices, g.vertices);
        const auto p = tf::precision_of(m.graph.edges.at(m.site.edge).kind);
        ASSERT_TRUE(p.has_value());
        EXPECT_EQ(*p, rule == tf::MutationRule::high_precision_replacement ? tf::Precision::fp32
                                                                          : tf::Precision::mixed_int8_fp16);
      }
    }
}

TEST(Mutation, PrecisionRuleWithoutTargetsThrows) {
  const auto g = tf::starter_sequence_dense();  // no convolution or matmul
  EXPECT_TRUE(tf::eligible_sites(g, tf::MutationRule::high_precision_replacement).empty());
  EXPECT_THROW(tf::mutate(g, tf::MutationRule::high_precision_replacement, 1), tf::NoEligibleSite);
}

TEST(Mutation, MatMulSitesMatchBruteForce) {
  for (const auto& g : tf::starter_models()) {
    std::set<std::pair<tf::VertexId, tf::VertexId>> expected;
    for (const auto& [u, su] : g.vertices) {
      if (su.rank() < 2) continue;
      for (const auto& [v, sv] : g.vertices) {
        if (v == u || g.is_input(v) || sv.dtype != su.dtype) continue;
        // v must not reach u, otherwise the new edge closes a cycle.
        bool reaches = false;
        std::vector<tf::VertexId> stack{v};
        std::set<tf::VertexId> seen{v};
        while (!stack.empty() && !reaches) {
          const auto x = stack.back();
          stack.pop_back();
          for (const auto& [id, e] : g.edges)
            if (std::find(e.srcs.begin(), e.srcs.end(), x) != e.srcs.end() && seen.insert(e.dst).second) {
              if (e.dst == u) reaches = true;
              stack.push_back(e.dst);
            }
        }
        if (!reaches) expected.insert({u, v});
      }
    }
    std::set<std::pair<tf::VertexId, tf::VertexId>> got;
    for (const auto& s : tf::eligible_sites(g, tf::MutationRule::matmul_insertion)) got.insert({s.source, s.merge});
    EXPECT_EQ(got, expected) << g.name;
  }
}

TEST(Mutation, Rule8RewritesOneNonSensitiveEdge) {
  for (const auto& g : tf::starter_models()) {
    for (std::uint64_t seed = 1; seed <= 30; ++seed) {
      const auto m = tf::mutate(g, tf::MutationRule::random_operator_replacement, seed);
      EXPECT_EQ(wiring(m.graph), wiring(g));
      int changed = 0;
      for (const auto& [id, e] : g.edges) {
        const auto& after = m.graph.edges.at(id).kind;
        if (tf::kind_name(after) != tf::kind_name(e.kind)) {
          ++changed;
          EXPECT_FALSE(tf::temperature_sensitive(after));
          EXPECT_FALSE(tf::temperature_sensitive(e.kind));
        }
      }
      EXPECT_EQ(changed, 1);
    }
  }
}

TEST(Mutation, Rule8InsertsAndRemovesThroughPlaceholders) {
  bool inserted = false, removed = false;
  for (const auto& g : tf::starter_models())
    for (std::uint64_t seed = 1; seed <= 40; ++seed) {
      const auto m = tf::apply_rule(g, tf::MutationRule::random_operator_replacement, seed);
      if (m.real_operator_count() > g.real_operator_count()) inserted = true;
      if (m.real_operator_count() < g.real_operator_count()) removed = true;
    }
  EXPECT_TRUE(inserted);
  EXPECT_TRUE(removed);
}

TEST(Mutation, Deterministic) {
  const auto g = tf::starter_voxel_net();
  for (auto rule : tf::kAllRules) {
    if (tf::eligible_sites(g, rule).empty()) continue;
    EXPECT_EQ(tf::apply_rule(g, rule, 42), tf::apply_rule(g, rule, 42));
  }
}

TEST(Mutation, InputGraphUntouched) {
  const auto g = tf::starter_camera_cnn();
  const auto copy = g;
  (void)tf::mutate(g, tf::MutationRule::gru_insertion, 9);
  EXPECT_EQ(g, copy);
}
