#include <doctest.h>

#include <iostream>
#include <set>

#include "jrl/errors.hpp"
#include "jrl/experiments.hpp"

using namespace jrl;

TEST_SUITE("experiments") {
  TEST_CASE("presets") {
    const Preset a = preset("acceptance");
    CHECK(a.model.hidden == 32);
    CHECK(a.model.regions == 6);
    CHECK(a.model.n_attr == 12);
    CHECK(a.model.embed_dim == 16);
    CHECK(a.synth.n_train == 2000);
    CHECK(a.synth.n_test == 500);
    const Preset d = preset("default");
    CHECK(d.model.hidden == 512);
    CHECK(d.model.context_k == 2);
    CHECK(d.model.dropout == 0.5);
    CHECK(d.train.learning_rate == 1e-4);
    CHECK_THROWS_AS(preset("huge"), ContractError);
  }

  TEST_CASE("nested subsets are prefixes of one shuffle") {
    Dataset train;
    for (int i = 0; i < 41; ++i) train.samples.push_back({"s" + std::to_string(i), {}, {}, {}});
    const auto subsets = nested_subsets(train, kRobustnessFractions, 9);
    REQUIRE(subsets.size() == 4);
    CHECK(subsets[0].size() == 41);
    CHECK(subsets[1].size() == 30);
    CHECK(subsets[2].size() == 20);
    CHECK(subsets[3].size() == 10);
    for (std::size_t i = 1; i < subsets.size(); ++i) {
      std::set<std::string> larger;
      for (const Sample& s : subsets[i - 1].samples) larger.insert(s.id);
      for (const Sample& s : subsets[i].samples) CHECK(larger.count(s.id) == 1);
    }
    const double bad[] = {0.0};
    CHECK_THROWS_AS(nested_subsets(train, bad, 1), ContractError);
  }
}

TEST_SUITE("ablation_direction") {
  TEST_CASE("no ablated variant beats the full model by more than half a point of F1") {
    const Preset p = preset("acceptance");
    Rng rng(1);
    const DatasetSplits d = generate_synthetic(p.synth, rng).splits;
    const AblationReport r = run_ablation(d, p.train, p.model);
    std::cout << format_ablation(r);
    REQUIRE(r.rows.size() == 4);
    for (const AblationRow& row : r.rows) {
      INFO(row.name);
      CHECK(row.variant.f1 <= row.full.f1 + 0.005);
    }
  }
}
