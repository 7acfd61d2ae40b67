#include <doctest.h>

#include <cmath>
#include <limits>
#include <omp.h>
#include <set>

#include "jrl/errors.hpp"
#include "jrl/evaluation.hpp"
#include "jrl/hash.hpp"
#include "jrl/training.hpp"
#include "support.hpp"

using namespace jrl;

namespace {

DatasetSplits small_splits(std::size_t n_train, std::uint64_t seed, double correlation = 0.6) {
  SynthSpec spec;
  spec.n_attr = 5;
  spec.regions = 3;
  spec.region_dim = 6;
  spec.global_dim = 6;
  spec.n_train = n_train;
  spec.n_test = 20;
  spec.global_attributes = 1;
  spec.correlation_strength = correlation;
  Rng rng(seed);
  return generate_synthetic(spec, rng).splits;
}

ModelConfig small_model() {
  ModelConfig c;
  c.hidden = 8;
  c.regions = 3;
  c.region_dim = 6;
  c.n_attr = 5;
  c.embed_dim = 4;
  c.context_k = 2;
  c.dropout = 0.5;
  return c.resolved();
}

OrderSpec first_order(const AttributeVocab& v) { return build_orders(v).front(); }

}  // namespace

TEST_SUITE("training") {
  TEST_CASE("adam with zero gradients is a no-op that still counts the step") {
    const ModelConfig c = small_model();
    JrlParams p = init_params(c, 1);
    const JrlParams before = p;
    AdamState s = AdamState::for_params(p, AdamHyper{});
    adam_step(s, p, JrlParams::zeros(c));
    CHECK(bitwise_equal(p, before));
    CHECK(s.step == 1);
  }

  TEST_CASE("first adam step moves by about lr times the gradient sign") {
    AdamHyper h;
    h.learning_rate = 0.01;
    for (double g : {3.0, -0.2, 1e-3}) {
      double x = 0.5, m = 0.0, v = 0.0;
      const double gg = g;
      adam_update(std::span<double>(&x, 1), std::span<const double>(&gg, 1), std::span<double>(&m, 1),
                  std::span<double>(&v, 1), 1, h);
      CHECK(std::abs((x - 0.5) + h.learning_rate * (g > 0 ? 1.0 : -1.0)) <= h.learning_rate * 1e-4);
    }
  }

  TEST_CASE("adam minimises x^2 from x = 1") {
    AdamHyper h;
    h.learning_rate = 0.1;
    double x = 1.0, m = 0.0, v = 0.0;
    for (std::uint64_t t = 1; t <= 100; ++t) {
      const double g = 2.0 * x;
      adam_update(std::span<double>(&x, 1), std::span<const double>(&g, 1), std::span<double>(&m, 1),
                  std::span<double>(&v, 1), t, h);
    }
    CHECK(std::abs(x) < 0.1);
  }

  TEST_CASE("non-finite gradients abort before any parameter changes") {
    const ModelConfig c = small_model();
    JrlParams p = init_params(c, 1);
    const JrlParams before = p;
    JrlParams g = JrlParams::zeros(c);
    g.decoder.embed.g(1, 1) = std::numeric_limits<double>::quiet_NaN();
    AdamState s = AdamState::for_params(p, AdamHyper{});
    try {
      adam_step(s, p, g);
      FAIL("expected a numerical error");
    } catch (const NumericalError& e) {
      CHECK(std::string(e.what()).find("decoder.W_gy") != std::string::npos);
    }
    CHECK(bitwise_equal(p, before));
    CHECK(s.step == 0);
  }

  TEST_CASE("zero epochs returns the initialisation") {
    const DatasetSplits d = small_splits(20, 1);
    TrainConfig tc;
    tc.epochs = 0;
    tc.seed = 5;
    const MemberResult r = train_member(d.train, d.vocab, first_order(d.vocab), tc, small_model());
    CHECK(bitwise_equal(r.params, init_params(small_model(), mix_seed(5, 0))));
    CHECK(r.loss_log.empty());
  }

  TEST_CASE("training is deterministic and independent of the thread count") {
    const DatasetSplits d = small_splits(30, 2);
    TrainConfig tc;
    tc.epochs = 3;
    tc.batch_size = 8;
    tc.learning_rate = 3e-3;
    tc.seed = 9;
    const int saved = omp_get_max_threads();
    omp_set_num_threads(1);
    const MemberResult a = train_member(d.train, d.vocab, first_order(d.vocab), tc, small_model());
    omp_set_num_threads(4);
    const MemberResult b = train_member(d.train, d.vocab, first_order(d.vocab), tc, small_model());
    omp_set_num_threads(saved);
    CHECK(a.loss_log == b.loss_log);
    CHECK(bitwise_equal(a.params, b.params));
    REQUIRE(a.loss_log.size() == 3);
  }

  TEST_CASE("the 20-sample overfit task halves its loss within 100 epochs") {
    const DatasetSplits d = small_splits(20, 3);
    TrainConfig tc;
    tc.epochs = 100;
    tc.batch_size = 4;
    tc.learning_rate = 1e-2;
    tc.dropout = false;
    ModelConfig mc = small_model();
    mc.dropout = 0.0;
    const MemberResult r = train_member(d.train, d.vocab, first_order(d.vocab), tc, mc);
    CHECK(r.loss_log.back() <= 0.5 * r.loss_log.front());
  }

  TEST_CASE("neighbour lists never contain the query itself when excluded") {
    const DatasetSplits d = small_splits(25, 4);
    const ExemplarIndex idx = build_index(d.train);
    const auto lists = neighbour_lists(idx, d.train, 3, true);
    for (std::size_t i = 0; i < lists.size(); ++i) {
      CHECK(lists[i].size() == 3);
      for (std::size_t pos : lists[i]) CHECK(idx.id(pos) != d.train.samples[i].id);
    }
    const auto with_self = neighbour_lists(idx, d.train, 1, false);
    for (std::size_t i = 0; i < with_self.size(); ++i) CHECK(idx.id(with_self[i][0]) == d.train.samples[i].id);
  }

  TEST_CASE("train config validation") {
    TrainConfig t;
    t.batch_size = 0;
    CHECK_THROWS_AS(t.validate(), ContractError);
    TrainConfig u;
    u.learning_rate = -1.0;
    CHECK_THROWS_AS(u.validate(), ContractError);
    TrainConfig v;
    v.validation_fraction = 1.0;
    CHECK_THROWS_AS(v.validate(), ContractError);
  }

  TEST_CASE("ensemble spec validation") {
    const DatasetSplits d = small_splits(10, 5);
    EnsembleSpec s = EnsembleSpec::standard(d.vocab, 1);
    CHECK_NOTHROW(s.validate(5));
    EnsembleSpec dup = s;
    dup.members[1].seed = dup.members[0].seed;
    CHECK_THROWS_AS(dup.validate(5), ContractError);
    EnsembleSpec short_spec = s;
    short_spec.members.pop_back();
    CHECK_THROWS_AS(short_spec.validate(5), ContractError);
  }

  TEST_CASE("train_ensemble writes ten members and reproduces its hashes") {
    const DatasetSplits d = small_splits(24, 6, 0.8);
    testing::TempDir a("ens_a"), b("ens_b");
    TrainConfig tc;
    tc.epochs = 2;
    tc.batch_size = 8;
    tc.learning_rate = 3e-3;
    const EnsembleSpec spec = EnsembleSpec::standard(d.vocab, 1);
    const Manifest m = train_ensemble(d.train, d.vocab, spec, tc, small_model(), a.path());
    CHECK(m.complete);
    REQUIRE(m.members.size() == kEnsembleSize);
    const Manifest again = train_ensemble(d.train, d.vocab, spec, tc, small_model(), b.path());
    std::set<std::string> hashes;
    for (std::size_t i = 0; i < kEnsembleSize; ++i) {
      CHECK(m.members[i].status == "ok");
      CHECK(m.members[i].checkpoint_hash == again.members[i].checkpoint_hash);
      CHECK(std::filesystem::exists(a.path() / m.members[i].checkpoint));
      CHECK(std::filesystem::exists(a.path() / m.members[i].loss_log));
      hashes.insert(m.members[i].checkpoint_hash);
    }
    CHECK(hashes.size() == kEnsembleSize);

    const Manifest read = read_manifest(a.path() / "manifest.json");
    CHECK(read.config == m.config);
    CHECK(read.members.size() == kEnsembleSize);
    CHECK(read.members[3].order.permutation == m.members[3].order.permutation);
    CHECK(read.members[3].checkpoint_hash == m.members[3].checkpoint_hash);
  }

  TEST_CASE("members that differ only in order produce different checkpoints") {
    // Eight attributes so that all ten orders are distinct permutations.
    SynthSpec spec;
    spec.n_attr = 8;
    spec.regions = 3;
    spec.region_dim = 6;
    spec.global_dim = 6;
    spec.n_train = 24;
    spec.n_test = 4;
    spec.global_attributes = 2;
    spec.correlation_strength = 0.8;
    Rng rng(7);
    const DatasetSplits d = generate_synthetic(spec, rng).splits;
    ModelConfig mc = small_model();
    mc.n_attr = 8;
    TrainConfig tc;
    tc.epochs = 2;
    tc.batch_size = 8;
    tc.seed = 3;
    std::set<std::string> digests;
    std::set<std::vector<int>> permutations;
    testing::TempDir dir("orders");
    for (const OrderSpec& o : build_orders(d.vocab)) {
      permutations.insert(o.permutation);
      const MemberResult r = train_member(d.train, d.vocab, o, tc, mc);
      save_checkpoint(r.params, r.config, dir.path() / "m.ckpt", {});
      digests.insert(file_hash(dir.path() / "m.ckpt"));
    }
    REQUIRE(permutations.size() == kEnsembleSize);
    CHECK(digests.size() == kEnsembleSize);
  }

  TEST_CASE("a failing member is recorded instead of aborting the run") {
    const DatasetSplits d = small_splits(12, 8);
    testing::TempDir dir("ens_fail");
    TrainConfig tc;
    tc.epochs = 1;
    tc.learning_rate = std::numeric_limits<double>::infinity();
    const Manifest m = train_ensemble(d.train, d.vocab, EnsembleSpec::standard(d.vocab, 1), tc, small_model(),
                                      dir.path());
    CHECK_FALSE(m.complete);
    for (const ManifestEntry& e : m.members) {
      CHECK(e.status == "failed");
      CHECK_FALSE(e.error.empty());
    }
    CHECK(std::filesystem::exists(dir.path() / "manifest.json"));
  }

  TEST_CASE("missing manifest is an I/O error") {
    CHECK_THROWS_AS(read_manifest("definitely/missing/manifest.json"), IoError);
  }
}
