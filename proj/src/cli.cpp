#include "jrl/cli.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "jrl/data.hpp"
#include "jrl/errors.hpp"
#include "jrl/evaluation.hpp"
#include "jrl/experiments.hpp"
#include "jrl/gradcheck.hpp"
#include "jrl/hash.hpp"
#include "jrl/model.hpp"
#include "jrl/training.hpp"

namespace jrl {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

// Options whose value falls back to the chosen preset when not given.
struct Settings {
  std::string preset_name = "default";
  std::vector<std::pair<CLI::Option*, std::function<void(const Preset&)>>> preset_bound;

  template <class T>
  CLI::Option* add(CLI::App* app, const std::string& flag, T& target, std::function<T(const Preset&)> from_preset,
                   const std::string& help) {
    CLI::Option* opt = app->add_option(flag, target, help);
    preset_bound.emplace_back(opt, [&target, from_preset](const Preset& p) { target = from_preset(p); });
    return opt;
  }

  void apply_preset() {
    const Preset p = preset(preset_name);
    for (auto& [opt, assign] : preset_bound) {
      if (opt->count() == 0) assign(p);
    }
  }
};

struct ModelFlags {
  ModelConfig model = preset("default").model;
  bool no_attention = false;
  bool no_context = false;
  bool no_encoder = false;
  CLI::Option* m_opt = nullptr;
  CLI::Option* n_attr_opt = nullptr;

  void add(CLI::App* app, Settings& s) {
    s.add<std::size_t>(app, "--d", model.hidden, [](const Preset& p) { return p.model.hidden; },
                       "LSTM hidden size");
    m_opt = s.add<std::size_t>(app, "--m", model.regions, [](const Preset& p) { return p.model.regions; },
                               "regions per image (checked against the data)");
    n_attr_opt = s.add<std::size_t>(app, "--n-attr", model.n_attr, [](const Preset& p) { return p.model.n_attr; },
                                    "attribute count (checked against the data)");
    s.add<std::size_t>(app, "--embed-dim", model.embed_dim, [](const Preset& p) { return p.model.embed_dim; },
                       "label embedding size, 0 = min(d, 128)");
    s.add<std::size_t>(app, "--attention-width", model.attention_width,
                       [](const Preset& p) { return p.model.attention_width; }, "attention scorer width, 0 = d");
    s.add<std::size_t>(app, "--context-k", model.context_k, [](const Preset& p) { return p.model.context_k; },
                       "nearest exemplars fused into the decoder state");
    s.add<double>(app, "--dropout", model.dropout, [](const Preset& p) { return p.model.dropout; },
                  "dropout rate before the output layer, 0 disables");
    app->add_flag("--no-attention", no_attention, "disable recurrent attention");
    app->add_flag("--no-context", no_context, "disable exemplar context fusion");
    app->add_flag("--no-encoder", no_encoder, "replace the encoder with a projection of the mean region feature");
  }

  ModelConfig resolve(const DatasetSplits& splits) const {
    if (m_opt->count() > 0) {
      require(model.regions == splits.train.regions(), "--m " + std::to_string(model.regions) +
                                                           " does not match the data's " +
                                                           std::to_string(splits.train.regions()) + " regions");
    }
    if (n_attr_opt->count() > 0) {
      require(model.n_attr == splits.vocab.names.size(), "--n-attr " + std::to_string(model.n_attr) +
                                                             " does not match the vocabulary's " +
                                                             std::to_string(splits.vocab.names.size()));
    }
    ModelConfig c = model;
    c.attention = !no_attention;
    c.context = !no_context;
    c.encoder = !no_encoder;
    c = config_for_data(c, splits);
    c.validate();
    return c;
  }
};

struct TrainFlags {
  TrainConfig train = preset("default").train;
  double clip = 0.0;

  void add(CLI::App* app, Settings& s) {
    s.add<std::size_t>(app, "--epochs", train.epochs, [](const Preset& p) { return p.train.epochs; },
                       "training epochs");
    s.add<std::size_t>(app, "--batch", train.batch_size, [](const Preset& p) { return p.train.batch_size; },
                       "minibatch size");
    s.add<double>(app, "--lr", train.learning_rate, [](const Preset& p) { return p.train.learning_rate; },
                  "Adam learning rate");
    app->add_option("--clip", clip, "global gradient-norm clip, 0 disables");
    app->add_option("--seed", train.seed, "random seed");
  }

  TrainConfig resolve(const ModelConfig& model) const {
    TrainConfig t = train;
    t.dropout = model.dropout > 0.0;
    t.clip = clip > 0.0;
    if (t.clip) t.clip_norm = clip;
    t.validate();
    return t;
  }
};

struct DataFlags {
  std::string dir;
  std::string vocab;

  void add(CLI::App* app) {
    app->add_option("--data", dir, "dataset directory with train.jsonl, test.jsonl, vocab.json")->required();
    app->add_option("--vocab", vocab, "vocabulary file overriding <data>/vocab.json");
  }

  DatasetSplits load() const {
    std::optional<fs::path> v;
    if (!vocab.empty()) v = vocab;
    return read_splits(dir, v);
  }
};

json train_json(const TrainConfig& t) {
  return {{"epochs", t.epochs},          {"batch_size", t.batch_size}, {"seed", t.seed},
          {"learning_rate", t.learning_rate}, {"dropout", t.dropout}, {"clip", t.clip},
          {"clip_norm", t.clip_norm}};
}

json synth_json(const SynthSpec& s) {
  return {{"n_attr", s.n_attr},
          {"regions", s.regions},
          {"region_dim", s.region_dim},
          {"global_dim", s.global_dim},
          {"n_train", s.n_train},
          {"n_test", s.n_test},
          {"noise_sigma", s.noise_sigma},
          {"correlation_strength", s.correlation_strength},
          {"global_attributes", s.global_attributes},
          {"orthonormal_signatures", s.orthonormal_signatures}};
}

void print_config(std::ostream& out, const std::string& command, const json& body) {
  json j = body;
  j["command"] = command;
  out << "resolved config: " << j.dump() << '\n';
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot write '" + path.string() + "'");
  f << text;
  if (!f) throw IoError("write failed for '" + path.string() + "'");
}

fs::path loss_log_path(const fs::path& checkpoint) {
  return checkpoint.parent_path() / (checkpoint.stem().string() + "_loss.csv");
}

std::vector<std::string> attribute_names(const AttributeLabels& labels, const AttributeVocab& vocab) {
  std::vector<std::string> names;
  for (std::size_t j = 0; j < labels.size(); ++j) {
    if (labels[j] != 0) names.push_back(vocab.names[j]);
  }
  return names;
}

int cmd_gen_data(std::ostream& out, Settings& s, SynthSpec spec, std::uint64_t seed, const std::string& dir) {
  spec.global_dim = spec.region_dim;
  spec.validate();
  print_config(out, "gen-data", {{"preset", s.preset_name}, {"seed", seed}, {"synth", synth_json(spec)}, {"out", dir}});
  Rng rng(seed);
  const SyntheticData data = generate_synthetic(spec, rng);
  write_splits(data.splits, dir);
  out << "wrote " << data.splits.train.size() << " train and " << data.splits.test.size() << " test samples to "
      << dir << '\n';
  for (const char* name : {"train.jsonl", "test.jsonl", "vocab.json"}) {
    out << "  " << name << "  " << file_hash(fs::path(dir) / name) << '\n';
  }
  return 0;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Joint recurrent learning of attribute sequences: data, training, inference and evaluation", "jrl"};
  app.option_defaults()->always_capture_default();
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "help for every command");

  Settings settings;
  auto add_preset = [&](CLI::App* sub) {
    sub->add_option("--preset", settings.preset_name, "configuration preset")
        ->check(CLI::IsMember(preset_names()));
  };

  // gen-data
  CLI::App* gen = app.add_subcommand("gen-data", "generate a synthetic attribute dataset");
  SynthSpec synth;
  std::uint64_t gen_seed = 1;
  std::string gen_out;
  add_preset(gen);
  gen->add_option("--seed", gen_seed, "random seed");
  gen->add_option("--out", gen_out, "output directory")->required();
  settings.add<std::size_t>(gen, "--n-attr", synth.n_attr, [](const Preset& p) { return p.synth.n_attr; },
                            "attribute count");
  settings.add<std::size_t>(gen, "--m", synth.regions, [](const Preset& p) { return p.synth.regions; },
                            "regions per image");
  settings.add<std::size_t>(gen, "--region-dim", synth.region_dim, [](const Preset& p) { return p.synth.region_dim; },
                            "region feature size (also the global feature size)");
  settings.add<std::size_t>(gen, "--n-train", synth.n_train, [](const Preset& p) { return p.synth.n_train; },
                            "training images");
  settings.add<std::size_t>(gen, "--n-test", synth.n_test, [](const Preset& p) { return p.synth.n_test; },
                            "test images");
  settings.add<double>(gen, "--noise", synth.noise_sigma, [](const Preset& p) { return p.synth.noise_sigma; },
                       "feature noise standard deviation");
  settings.add<double>(gen, "--correlation", synth.correlation_strength,
                       [](const Preset& p) { return p.synth.correlation_strength; },
                       "label chain correlation strength in [0, 1]");
  settings.add<std::size_t>(gen, "--global-attrs", synth.global_attributes,
                            [](const Preset& p) { return p.synth.global_attributes; },
                            "attributes spread over every region");
  gen->add_flag("--orthonormal", synth.orthonormal_signatures, "orthonormalise attribute signatures");

  // train
  CLI::App* train = app.add_subcommand("train", "train one model with a fixed attribute order");
  DataFlags train_data;
  ModelFlags train_model;
  TrainFlags train_flags;
  std::string train_out;
  std::string order_name = "frequent_first";
  std::uint64_t order_seed = 0;
  add_preset(train);
  train_data.add(train);
  train->add_option("--out", train_out, "checkpoint path")->required();
  train->add_option("--order", order_name, "attribute emission order")
      ->check(CLI::IsMember({"rare_first", "frequent_first", "top_down", "bottom_up", "global_local", "local_global",
                             "random"}));
  train->add_option("--order-seed", order_seed, "seed of a random order");
  train_model.add(train, settings);
  train_flags.add(train, settings);

  // train-ensemble
  CLI::App* ens = app.add_subcommand("train-ensemble", "train the ten-order ensemble and write a manifest");
  DataFlags ens_data;
  ModelFlags ens_model;
  TrainFlags ens_flags;
  std::string ens_out;
  add_preset(ens);
  ens_data.add(ens);
  ens->add_option("--out", ens_out, "output directory")->required();
  ens_model.add(ens, settings);
  ens_flags.add(ens, settings);

  // predict
  CLI::App* pred = app.add_subcommand("predict", "predict attribute sets for the test split");
  DataFlags pred_data;
  std::string pred_ckpt, pred_manifest, pred_out, dump_attention;
  pred_data.add(pred);
  auto* ckpt_opt = pred->add_option("--checkpoint", pred_ckpt, "single-model checkpoint");
  auto* man_opt = pred->add_option("--manifest", pred_manifest, "ensemble manifest (majority vote)");
  ckpt_opt->excludes(man_opt);
  pred->add_option("--out", pred_out, "predictions JSON path");
  pred->add_option("--dump-attention", dump_attention, "CSV of per-step attention weights (single model only)");

  // evaluate
  CLI::App* eval = app.add_subcommand("evaluate", "evaluate an ensemble manifest on the test split");
  DataFlags eval_data;
  std::string eval_manifest, eval_out;
  eval->add_option("--manifest", eval_manifest, "ensemble manifest")->required();
  eval_data.add(eval);
  eval->add_option("--out", eval_out, "metrics JSON path");

  // gradcheck
  CLI::App* gc = app.add_subcommand("gradcheck", "compare analytic gradients with central finite differences");
  ModelConfig gc_model;
  gc_model.hidden = 6;
  gc_model.regions = 3;
  gc_model.n_attr = 5;
  gc_model.embed_dim = 4;
  gc_model.attention_width = 4;
  gc_model.context_k = 1;
  gc_model.region_dim = 4;
  gc_model.dropout = 0.0;
  std::uint64_t gc_seed = 7;
  double gc_eps = 1e-5;
  double gc_tol = 1e-4;
  bool gc_no_att = false, gc_no_ctx = false, gc_no_enc = false;
  gc->add_option("--d", gc_model.hidden, "LSTM hidden size");
  gc->add_option("--m", gc_model.regions, "regions");
  gc->add_option("--n-attr", gc_model.n_attr, "attribute count");
  gc->add_option("--embed-dim", gc_model.embed_dim, "label embedding size");
  gc->add_option("--attention-width", gc_model.attention_width, "attention scorer width");
  gc->add_option("--context-k", gc_model.context_k, "exemplars fused");
  gc->add_option("--region-dim", gc_model.region_dim, "region feature size");
  gc->add_option("--seed", gc_seed, "random seed of the instance");
  gc->add_option("--epsilon", gc_eps, "finite-difference step");
  gc->add_option("--tolerance", gc_tol, "maximum allowed relative error");
  gc->add_flag("--no-attention", gc_no_att, "disable attention");
  gc->add_flag("--no-context", gc_no_ctx, "disable exemplar context");
  gc->add_flag("--no-encoder", gc_no_enc, "bypass the encoder");

  // ablate
  CLI::App* abl = app.add_subcommand("ablate", "ablation battery or the training-size robustness protocol");
  DataFlags abl_data;
  ModelFlags abl_model;
  TrainFlags abl_flags;
  std::string protocol = "components";
  std::string abl_out;
  add_preset(abl);
  abl_data.add(abl);
  abl->add_option("--protocol", protocol, "components: four ablation pairs; robustness: 100/75/50/25% training data")
      ->check(CLI::IsMember({"components", "robustness"}));
  abl->add_option("--out", abl_out, "report JSON path");
  abl_model.add(abl, settings);
  abl_flags.add(abl, settings);

  try {
    try {
      app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
      const int code = app.exit(e, out, err);
      return code == 0 ? 0 : 1;
    }
    settings.apply_preset();

    if (*gen) return cmd_gen_data(out, settings, synth, gen_seed, gen_out);

    if (*train) {
      const DatasetSplits splits = train_data.load();
      const ModelConfig mc = train_model.resolve(splits);
      const TrainConfig tc = train_flags.resolve(mc);
      OrderSpec order;
      if (order_name == "random") {
        order = random_order(mc.n_attr, order_seed);
      } else {
        const OrderKind kind = order_kind_from_string(order_name);
        for (const OrderSpec& o : build_orders(splits.vocab, kRandomOrders, order_seed)) {
          if (o.kind == kind) order = o;
        }
        require(order.kind == kind, "order '" + order_name + "' needs metadata the vocabulary does not provide");
      }
      print_config(out, "train",
                   {{"preset", settings.preset_name}, {"model", to_json(mc)}, {"train", train_json(tc)},
                    {"order", order_to_json(order)}, {"data", train_data.dir}, {"out", train_out}});
      const MemberResult r = train_member(splits.train, splits.vocab, order, tc, mc);
      save_checkpoint(r.params, r.config, train_out,
                      {{"order", order_to_json(order)}, {"seed", tc.seed}, {"final_loss", r.final_loss}});
      write_loss_log(r.loss_log, loss_log_path(train_out));
      out << "trained " << order.label() << " for " << r.loss_log.size() << " epochs, final loss " << r.final_loss
          << "\ncheckpoint " << train_out << "  " << file_hash(train_out) << '\n';
      return 0;
    }

    if (*ens) {
      const DatasetSplits splits = ens_data.load();
      const ModelConfig mc = ens_model.resolve(splits);
      const TrainConfig tc = ens_flags.resolve(mc);
      const EnsembleSpec spec = EnsembleSpec::standard(splits.vocab, tc.seed);
      print_config(out, "train-ensemble",
                   {{"preset", settings.preset_name}, {"model", to_json(mc)}, {"train", train_json(tc)},
                    {"data", ens_data.dir}, {"out", ens_out}});
      const Manifest m = train_ensemble(splits.train, splits.vocab, spec, tc, mc, ens_out);
      for (const ManifestEntry& e : m.members) {
        out << e.order.label() << "  seed " << e.seed << "  " << e.status;
        if (e.status == "ok") out << "  final loss " << e.final_loss;
        if (!e.error.empty()) out << "  " << e.error;
        out << '\n';
      }
      out << "manifest " << (fs::path(ens_out) / "manifest.json").string() << '\n';
      return m.complete ? 0 : 1;
    }

    if (*pred) {
      require(ckpt_opt->count() + man_opt->count() == 1, "predict needs exactly one of --checkpoint or --manifest");
      require(dump_attention.empty() || ckpt_opt->count() == 1, "--dump-attention needs --checkpoint");
      const DatasetSplits splits = pred_data.load();
      json preds = json::array();
      if (ckpt_opt->count() > 0) {
        const LoadedCheckpoint ck = load_checkpoint(pred_ckpt);
        print_config(out, "predict", {{"model", to_json(ck.config)}, {"checkpoint", pred_ckpt},
                                      {"data", pred_data.dir}, {"out", pred_out}, {"dump_attention", dump_attention}});
        const std::vector<Prediction> ps = predict_dataset(ck.params, ck.config, splits.train, splits.test);
        std::string csv;
        if (!dump_attention.empty()) {
          require(ck.config.attention, "--dump-attention: the model was trained without attention");
          csv = "id,step,token";
          for (std::size_t r = 0; r < ck.config.regions; ++r) csv += ",region_" + std::to_string(r);
          csv += '\n';
        }
        for (std::size_t i = 0; i < ps.size(); ++i) {
          const AttributeLabels labels = sequence_to_labels(ps[i].sequence, ck.config.n_attr);
          preds.push_back({{"id", splits.test.samples[i].id},
                           {"labels", labels},
                           {"attributes", attribute_names(labels, splits.vocab)}});
          const std::vector<int> tokens = ps[i].sequence.tokens(ck.config.n_attr);
          for (std::size_t t = 0; t < ps[i].attention.size(); ++t) {
            csv += splits.test.samples[i].id + ',' + std::to_string(t) + ',' +
                   (tokens[t] == static_cast<int>(ck.config.n_attr) ? std::string("stop")
                                                                    : splits.vocab.names[tokens[t]]);
            for (double w : ps[i].attention[t].values()) {
              char buf[32];
              std::snprintf(buf, sizeof buf, ",%.17g", w);
              csv += buf;
            }
            csv += '\n';
          }
        }
        if (!dump_attention.empty()) write_text(dump_attention, csv);
      } else {
        print_config(out, "predict",
                     {{"manifest", pred_manifest}, {"data", pred_data.dir}, {"out", pred_out}});
        const EnsembleReport rep = evaluate_ensemble(pred_manifest, splits.train, splits.test);
        for (std::size_t i = 0; i < rep.predictions.voted.size(); ++i) {
          const AttributeLabels& labels = rep.predictions.voted[i];
          preds.push_back({{"id", rep.predictions.ids[i]},
                           {"labels", labels},
                           {"attributes", attribute_names(labels, splits.vocab)}});
        }
      }
      if (!pred_out.empty()) write_text(pred_out, json{{"predictions", preds}}.dump(2) + '\n');
      out << "predicted " << preds.size() << " images" << (pred_out.empty() ? "" : " -> " + pred_out) << '\n';
      return 0;
    }

    if (*eval) {
      print_config(out, "evaluate", {{"manifest", eval_manifest}, {"data", eval_data.dir}, {"out", eval_out}});
      const Manifest manifest = read_manifest(eval_manifest);
      const DatasetSplits splits = eval_data.load();
      const std::vector<LoadedMember> members = load_members(manifest, fs::path(eval_manifest).parent_path());
      const EnsembleReport rep = evaluate_members(members, splits.train, splits.test);
      std::vector<MetricsRow> rows{{"Ensemble (vote)", rep.voted}, {"Average of members", rep.member_average}};
      for (std::size_t i = 0; i < rep.members.size(); ++i) rows.push_back({rep.member_labels[i], rep.members[i]});
      out << format_table(rows);
      if (!eval_out.empty()) write_text(eval_out, to_json(rep, splits.vocab.names).dump(2) + '\n');
      return 0;
    }

    if (*gc) {
      ModelConfig c = gc_model;
      c.attention = !gc_no_att;
      c.context = !gc_no_ctx;
      c.encoder = !gc_no_enc;
      c = c.resolved();
      c.validate();
      print_config(out, "gradcheck", {{"model", to_json(c)}, {"seed", gc_seed}, {"epsilon", gc_eps},
                                      {"tolerance", gc_tol}});
      const GradCheckReport r = gradient_check(c, make_gradcheck_instance(c, gc_seed), gc_eps);
      for (const TensorCheck& t : r.tensors) {
        if (t.count == 0) continue;
        char buf[128];
        std::snprintf(buf, sizeof buf, "  %-20s %6zu  %.3e\n", t.name.c_str(), t.count, t.max_relative_error);
        out << buf;
      }
      char buf[256];
      std::snprintf(buf, sizeof buf,
                    "max relative error %.3e over %zu entries (worst %s[%zu]: analytic %.6e, numeric %.6e)\n",
                    r.max_relative_error, r.checked, r.worst_tensor.c_str(), r.worst_index, r.worst_analytic,
                    r.worst_numeric);
      out << buf;
      const bool ok = r.max_relative_error <= gc_tol;
      out << (ok ? "PASS" : "FAIL") << '\n';
      return ok ? 0 : 1;
    }

    if (*abl) {
      const DatasetSplits splits = abl_data.load();
      const ModelConfig mc = abl_model.resolve(splits);
      const TrainConfig tc = abl_flags.resolve(mc);
      print_config(out, "ablate", {{"preset", settings.preset_name}, {"protocol", protocol}, {"model", to_json(mc)},
                                   {"train", train_json(tc)}, {"data", abl_data.dir}, {"out", abl_out}});
      json report;
      if (protocol == "components") {
        const AblationReport r = run_ablation(splits, tc, mc);
        out << format_ablation(r);
        report = to_json(r);
      } else {
        const RobustnessReport r = run_robustness(splits, tc, mc);
        out << format_robustness(r);
        report = to_json(r);
      }
      if (!abl_out.empty()) write_text(abl_out, report.dump(2) + '\n');
      return 0;
    }
    return 1;
  } catch (const IoError& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  } catch (const ContractError& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  } catch (const NumericalError& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
}

}  // namespace jrl
