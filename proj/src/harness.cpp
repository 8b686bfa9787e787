#include "davt/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <stdexcept>
#include <thread>

#include "davt/records_io.hpp"
#include "davt/rng.hpp"

namespace davt {

namespace {

using nlohmann::json;
using nlohmann::ordered_json;

void check_keys(const json& j, const std::set<std::string>& allowed, const std::string& scope) {
  if (!j.is_object()) throw std::invalid_argument("config: " + scope + " must be an object");
  for (const auto& [key, value] : j.items()) {
    if (!allowed.count(key)) {
      throw std::invalid_argument("config: unknown key \"" + scope + key + "\"");
    }
  }
}

ExperimentKind parse_experiment(const std::string& s) {
  if (s == "blob_twosample") return ExperimentKind::kBlobTwoSample;
  if (s == "blob_independence") return ExperimentKind::kBlobIndependence;
  if (s == "cit") return ExperimentKind::kCit;
  if (s == "glyph_rotation") return ExperimentKind::kGlyphRotation;
  if (s == "symmetry") return ExperimentKind::kSymmetry;
  if (s == "custom") return ExperimentKind::kCustom;
  throw std::invalid_argument("config: unknown experiment \"" + s + "\"");
}

Method parse_method(const std::string& s) {
  if (s == "davt") return Method::kDavt;
  if (s == "seqit_ons") return Method::kSeqitOns;
  if (s == "mmd_perm") return Method::kMmdPerm;
  if (s == "oracle") return Method::kOracle;
  if (s == "batch_evalue") return Method::kBatchEvalue;
  throw std::invalid_argument("config: unknown method \"" + s + "\"");
}

std::array<double, 4> parse_cov(const json& j, const std::string& scope) {
  if (!j.is_array() || j.size() != 2 || !j[0].is_array() || j[0].size() != 2 ||
      !j[1].is_array() || j[1].size() != 2) {
    throw std::invalid_argument("config: " + scope + " must be a 2x2 matrix");
  }
  return {j[0][0].get<double>(), j[0][1].get<double>(), j[1][0].get<double>(),
          j[1][1].get<double>()};
}

json cov_to_json(const std::array<double, 4>& c) {
  return json::array({json::array({c[0], c[1]}), json::array({c[2], c[3]})});
}

Hypothesis parse_hypothesis(const std::string& s, const std::string& scope) {
  if (s == "null") return Hypothesis::kNull;
  if (s == "alt") return Hypothesis::kAlt;
  throw std::invalid_argument("config: " + scope + " must be \"null\" or \"alt\"");
}

NullSpec parse_null_spec(const json& j) {
  if (j.contains("t1") || j.contains("t2")) {
    check_keys(j, {"t1", "t2"}, "null_spec.");
    return PairNull{Operator::from_json(j.at("t1")), Operator::from_json(j.at("t2"))};
  }
  if (j.contains("set1") || j.contains("set2")) {
    check_keys(j, {"set1", "set2"}, "null_spec.");
    SetsNull sets;
    for (const auto& oj : j.at("set1")) sets.set1.members.push_back(Operator::from_json(oj));
    for (const auto& oj : j.at("set2")) sets.set2.members.push_back(Operator::from_json(oj));
    return sets;
  }
  if (j.contains("unpaired_mode")) {
    check_keys(j, {"unpaired_mode"}, "null_spec.");
    std::string mode = j.at("unpaired_mode").get<std::string>();
    if (mode == "mean-difference") return UnpairedNull{UnpairedMode::kMeanDifference};
    if (mode == "sigma-difference") return UnpairedNull{UnpairedMode::kSigmaDifference};
    throw std::invalid_argument("config: unknown unpaired_mode \"" + mode + "\"");
  }
  throw std::invalid_argument("config: null_spec needs t1/t2, set1/set2, or unpaired_mode");
}

ordered_json null_spec_to_json(const NullSpec& spec) {
  ordered_json j;
  if (const auto* pair = std::get_if<PairNull>(&spec)) {
    j["t1"] = pair->t1.to_json();
    j["t2"] = pair->t2.to_json();
  } else if (const auto* sets = std::get_if<SetsNull>(&spec)) {
    auto a1 = ordered_json::array(), a2 = ordered_json::array();
    for (const auto& op : sets->set1.members) a1.push_back(op.to_json());
    for (const auto& op : sets->set2.members) a2.push_back(op.to_json());
    j["set1"] = a1;
    j["set2"] = a2;
  } else {
    const auto& u = std::get<UnpairedNull>(spec);
    j["unpaired_mode"] =
        u.mode == UnpairedMode::kMeanDifference ? "mean-difference" : "sigma-difference";
  }
  return j;
}

Operator op_proj_swap() {
  return Operator::compose({Operator::project_first(), Operator::swap_halves()});
}

NullSpec default_null_spec(ExperimentKind experiment, Method method) {
  if (method == Method::kSeqitOns) {
    return PairNull{Operator::project_first(), op_proj_swap()};
  }
  switch (experiment) {
    case ExperimentKind::kBlobTwoSample:
      return PairNull{op_proj_swap(), Operator::project_first()};
    case ExperimentKind::kBlobIndependence:
      return PairNull{Operator::cross_swap(), Operator::identity()};
    case ExperimentKind::kCit:
      return PairNull{Operator::project_first(),
                      Operator::compose({Operator::project_first(), Operator::swap_halves()})};
    case ExperimentKind::kGlyphRotation: {
      SetsNull sets;
      for (int angle : {90, 180, 270, 360}) {
        sets.set1.members.push_back(
            Operator::compose({Operator::rotate(angle), Operator::project_first()}));
      }
      sets.set2.members.push_back(op_proj_swap());
      return sets;
    }
    case ExperimentKind::kSymmetry:
      return PairNull{Operator::flip(), Operator::identity()};
    case ExperimentKind::kCustom:
      throw std::invalid_argument("config: custom experiments must specify null_spec");
  }
  throw std::logic_error("default_null_spec: unreachable");
}

struct ExperimentDefaults {
  std::size_t batch_size, t_max;
  std::vector<std::size_t> hidden_dims;
  Normalization normalization;
  double learning_rate;
  std::size_t max_epochs, patience;
  double l1, l2;
  GeneratorType generator;
};

ExperimentDefaults defaults_for(ExperimentKind experiment) {
  switch (experiment) {
    case ExperimentKind::kBlobTwoSample:
    case ExperimentKind::kBlobIndependence:
      return {90, 30, {30, 30}, Normalization::kLayerNorm, 1e-3, 150, 10, 0.0, 0.0,
              GeneratorType::kBlob};
    case ExperimentKind::kCit:
      return {100, 40, {128}, Normalization::kNone, 1e-3, 150, 5, 0.0, 0.01,
              GeneratorType::kCit};
    case ExperimentKind::kGlyphRotation:
      return {16, 30, {32, 16}, Normalization::kNone, 1e-3, 150, 5, 0.01, 0.01,
              GeneratorType::kGlyph};
    case ExperimentKind::kSymmetry:
      return {90, 30, {30, 30}, Normalization::kLayerNorm, 1e-3, 150, 10, 0.0, 0.0,
              GeneratorType::kSymmetry};
    case ExperimentKind::kCustom:
      return {90, 30, {30, 30}, Normalization::kLayerNorm, 1e-3, 150, 10, 0.0, 0.0,
              GeneratorType::kBlob};
  }
  throw std::logic_error("defaults_for: unreachable");
}

GeneratorConfig parse_generator(const json& j, ExperimentKind experiment,
                                std::uint64_t master_seed) {
  GeneratorConfig g;
  ExperimentDefaults defaults = defaults_for(experiment);
  g.type = defaults.generator;
  json body = j;
  // "type" is required for custom experiments and otherwise must agree with
  // the experiment's generator, so resolved manifests re-parse as configs.
  if (experiment == ExperimentKind::kCustom && !j.contains("type")) {
    throw std::invalid_argument("config: custom generator needs a type");
  }
  if (j.contains("type")) {
    std::string type = j.at("type").get<std::string>();
    GeneratorType parsed;
    if (type == "blob") parsed = GeneratorType::kBlob;
    else if (type == "cit") parsed = GeneratorType::kCit;
    else if (type == "glyph") parsed = GeneratorType::kGlyph;
    else if (type == "symmetry") parsed = GeneratorType::kSymmetry;
    else throw std::invalid_argument("config: unknown generator type \"" + type + "\"");
    if (experiment != ExperimentKind::kCustom && parsed != defaults.generator) {
      throw std::invalid_argument("config: generator.type does not match the experiment");
    }
    g.type = parsed;
    body.erase("type");
  }
  switch (g.type) {
    case GeneratorType::kBlob: {
      check_keys(body, {"spacing", "base_cov", "alt_cov", "rho", "hypothesis"}, "generator.");
      if (body.contains("spacing")) g.blob.spacing = body.at("spacing").get<double>();
      if (body.contains("base_cov")) g.blob.base_cov = parse_cov(body.at("base_cov"), "generator.base_cov");
      if (body.contains("alt_cov")) g.blob.alt_cov = parse_cov(body.at("alt_cov"), "generator.alt_cov");
      if (body.contains("rho")) g.blob.rho = body.at("rho").get<double>();
      if (experiment == ExperimentKind::kBlobIndependence) {
        g.blob.hypothesis = Hypothesis::kNull;
        if (!body.contains("rho")) g.blob.rho = 0.5;  // dependent alternative by default
      } else {
        g.blob.hypothesis = Hypothesis::kAlt;
      }
      if (body.contains("hypothesis")) {
        g.blob.hypothesis = parse_hypothesis(body.at("hypothesis").get<std::string>(),
                                             "generator.hypothesis");
      }
      g.blob.validate();
      break;
    }
    case GeneratorType::kCit: {
      check_keys(body, {"d", "a", "b", "hypothesis"}, "generator.");
      if (body.contains("d")) g.cit.d = body.at("d").get<std::size_t>();
      g.cit.hypothesis = Hypothesis::kAlt;
      if (body.contains("hypothesis")) {
        g.cit.hypothesis = parse_hypothesis(body.at("hypothesis").get<std::string>(),
                                            "generator.hypothesis");
      }
      // a/b default to "auto": one draw of N(0, I_d)/sqrt(d) per experiment,
      // from a dedicated seed role, recorded in the manifest.
      Rng const_rng(derive_seed(master_seed, 0, seed_role::kGeneratorConstants));
      auto resolve_vec = [&](const char* key) {
        std::vector<double> v(g.cit.d);
        bool automatic = !body.contains(key) ||
                         (body.at(key).is_string() && body.at(key).get<std::string>() == "auto");
        if (automatic) {
          double scale = 1.0 / std::sqrt(static_cast<double>(g.cit.d));
          for (auto& x : v) x = const_rng.next_gaussian() * scale;
        } else {
          v = body.at(key).get<std::vector<double>>();
        }
        return v;
      };
      g.cit.a = resolve_vec("a");
      g.cit.b = resolve_vec("b");
      g.cit.validate();
      break;
    }
    case GeneratorType::kGlyph: {
      check_keys(body, {"side", "p"}, "generator.");
      g.glyph = default_glyph_params();
      if (body.contains("side") && body.at("side").get<std::size_t>() != 8) {
        throw std::invalid_argument("config: generator.side must be 8 (built-in rasters)");
      }
      if (body.contains("p")) g.glyph.p = body.at("p").get<double>();
      g.glyph.validate();
      break;
    }
    case GeneratorType::kSymmetry: {
      check_keys(body, {"mode"}, "generator.");
      g.symmetry_mode = SymmetryMode::kNull;
      if (body.contains("mode")) {
        std::string m = body.at("mode").get<std::string>();
        if (m == "null") g.symmetry_mode = SymmetryMode::kNull;
        else if (m == "shifted") g.symmetry_mode = SymmetryMode::kShifted;
        else throw std::invalid_argument("config: generator.mode must be \"null\" or \"shifted\"");
      }
      break;
    }
  }
  return g;
}

bool stream_is_two_sample_pairs(GeneratorType type) {
  return type == GeneratorType::kBlob || type == GeneratorType::kGlyph;
}

}  // namespace

std::string experiment_name(ExperimentKind e) {
  switch (e) {
    case ExperimentKind::kBlobTwoSample: return "blob_twosample";
    case ExperimentKind::kBlobIndependence: return "blob_independence";
    case ExperimentKind::kCit: return "cit";
    case ExperimentKind::kGlyphRotation: return "glyph_rotation";
    case ExperimentKind::kSymmetry: return "symmetry";
    case ExperimentKind::kCustom: return "custom";
  }
  return "?";
}

std::string method_name(Method m) {
  switch (m) {
    case Method::kDavt: return "davt";
    case Method::kSeqitOns: return "seqit_ons";
    case Method::kMmdPerm: return "mmd_perm";
    case Method::kOracle: return "oracle";
    case Method::kBatchEvalue: return "batch_evalue";
  }
  return "?";
}

ExperimentConfig config_from_json(const json& j) {
  check_keys(j,
             {"schema", "experiment", "method", "trials", "master_seed", "test", "training",
              "model", "null_spec", "generator", "oracle_pretrain_samples", "kernel"},
             "");
  ExperimentConfig cfg;
  if (!j.contains("schema")) throw std::invalid_argument("config: missing \"schema\"");
  cfg.schema = j.at("schema").get<std::string>();
  if (cfg.schema != "davt-experiment/1") {
    throw std::invalid_argument("config: unsupported schema \"" + cfg.schema + "\"");
  }
  if (!j.contains("experiment")) throw std::invalid_argument("config: missing \"experiment\"");
  cfg.experiment = parse_experiment(j.at("experiment").get<std::string>());
  if (!j.contains("method")) throw std::invalid_argument("config: missing \"method\"");
  cfg.method = parse_method(j.at("method").get<std::string>());
  if (j.contains("trials")) cfg.trials = j.at("trials").get<std::size_t>();
  if (cfg.trials < 1) throw std::invalid_argument("config: trials must be positive");
  if (j.contains("master_seed")) cfg.master_seed = j.at("master_seed").get<std::uint64_t>();

  ExperimentDefaults defaults = defaults_for(cfg.experiment);
  cfg.test.batch_size = defaults.batch_size;
  cfg.test.t_max = defaults.t_max;
  if (j.contains("test")) {
    const json& t = j.at("test");
    check_keys(t, {"alpha", "batch_size", "t_max", "score_mode", "q_bound", "seed"}, "test.");
    if (t.contains("alpha")) cfg.test.alpha = t.at("alpha").get<double>();
    if (t.contains("batch_size")) cfg.test.batch_size = t.at("batch_size").get<std::size_t>();
    if (t.contains("t_max")) cfg.test.t_max = t.at("t_max").get<std::size_t>();
    if (t.contains("score_mode")) {
      std::string m = t.at("score_mode").get<std::string>();
      if (m == "product") cfg.test.score_mode = ScoreMode::kProduct;
      else if (m == "average") cfg.test.score_mode = ScoreMode::kAverage;
      else throw std::invalid_argument("config: test.score_mode must be product or average");
    }
    if (t.contains("q_bound")) cfg.test.q_bound = t.at("q_bound").get<double>();
    if (t.contains("seed")) cfg.test.seed = t.at("seed").get<std::uint64_t>();
  }
  validate_config(cfg.test);

  cfg.training.learning_rate = defaults.learning_rate;
  cfg.training.max_epochs = defaults.max_epochs;
  cfg.training.patience = defaults.patience;
  cfg.training.l1_coeff = defaults.l1;
  cfg.training.l2_coeff = defaults.l2;
  if (j.contains("training")) {
    const json& t = j.at("training");
    check_keys(t,
               {"learning_rate", "max_epochs", "patience", "loss_variant", "l1_coeff", "l2_coeff",
                "rng_seed"},
               "training.");
    if (t.contains("learning_rate")) cfg.training.learning_rate = t.at("learning_rate").get<double>();
    if (t.contains("max_epochs")) cfg.training.max_epochs = t.at("max_epochs").get<std::size_t>();
    if (t.contains("patience")) cfg.training.patience = t.at("patience").get<std::size_t>();
    if (t.contains("loss_variant")) {
      std::string v = t.at("loss_variant").get<std::string>();
      if (v == "plain") cfg.training.loss_variant = LossVariant::kPlain;
      else if (v == "sigma") cfg.training.loss_variant = LossVariant::kSigma;
      else throw std::invalid_argument("config: training.loss_variant must be plain or sigma");
    }
    if (t.contains("l1_coeff")) cfg.training.l1_coeff = t.at("l1_coeff").get<double>();
    if (t.contains("l2_coeff")) cfg.training.l2_coeff = t.at("l2_coeff").get<double>();
    if (t.contains("rng_seed")) cfg.training.rng_seed = t.at("rng_seed").get<std::uint64_t>();
  }
  if (cfg.training.max_epochs > 0) validate_training(cfg.training);

  cfg.hidden_dims = defaults.hidden_dims;
  cfg.normalization = defaults.normalization;
  if (j.contains("model")) {
    const json& m = j.at("model");
    check_keys(m, {"hidden_dims", "normalization"}, "model.");
    if (m.contains("hidden_dims")) {
      cfg.hidden_dims = m.at("hidden_dims").get<std::vector<std::size_t>>();
    }
    if (m.contains("normalization")) {
      std::string n = m.at("normalization").get<std::string>();
      if (n == "none") cfg.normalization = Normalization::kNone;
      else if (n == "layer_norm") cfg.normalization = Normalization::kLayerNorm;
      else throw std::invalid_argument("config: model.normalization must be none or layer_norm");
    }
  }

  cfg.generator = parse_generator(j.contains("generator") ? j.at("generator") : json::object(),
                                  cfg.experiment, cfg.master_seed);

  if (j.contains("null_spec")) {
    cfg.null_spec = parse_null_spec(j.at("null_spec"));
  } else {
    cfg.null_spec = default_null_spec(cfg.experiment, cfg.method);
  }
  validate_null_spec(cfg.null_spec);

  if (j.contains("oracle_pretrain_samples")) {
    cfg.oracle_pretrain_samples = j.at("oracle_pretrain_samples").get<std::size_t>();
    if (cfg.oracle_pretrain_samples < 2) {
      throw std::invalid_argument("config: oracle_pretrain_samples must be >= 2");
    }
  }

  if (j.contains("kernel")) {
    const json& k = j.at("kernel");
    check_keys(k, {"bandwidth", "permutations"}, "kernel.");
    if (k.contains("bandwidth")) {
      if (k.at("bandwidth").is_string()) {
        if (k.at("bandwidth").get<std::string>() != "median") {
          throw std::invalid_argument("config: kernel.bandwidth must be a number or \"median\"");
        }
      } else {
        cfg.kernel.bandwidth = k.at("bandwidth").get<double>();
        if (!(*cfg.kernel.bandwidth > 0.0)) {
          throw std::invalid_argument("config: kernel.bandwidth must be positive");
        }
      }
    }
    if (k.contains("permutations")) cfg.kernel.permutations = k.at("permutations").get<std::size_t>();
  }

  // method/experiment compatibility
  if ((cfg.method == Method::kMmdPerm || cfg.method == Method::kSeqitOns) &&
      !stream_is_two_sample_pairs(cfg.generator.type)) {
    throw std::invalid_argument("config: method " + method_name(cfg.method) +
                                " requires a paired two-sample stream, but experiment " +
                                experiment_name(cfg.experiment) + " does not provide one");
  }
  if (cfg.method == Method::kSeqitOns && !std::holds_alternative<PairNull>(cfg.null_spec)) {
    throw std::invalid_argument("config: seqit_ons requires a two-operator null");
  }
  if (cfg.method != Method::kMmdPerm) {
    resolve_input_dim(cfg);  // validates operator/stream compatibility
  }
  return cfg;
}

ExperimentConfig parse_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("config: cannot open " + path);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw std::invalid_argument("config: " + path + ": " + e.what());
  }
  return config_from_json(j);
}

nlohmann::ordered_json config_to_json(const ExperimentConfig& cfg) {
  ordered_json j;
  j["schema"] = cfg.schema;
  j["experiment"] = experiment_name(cfg.experiment);
  j["method"] = method_name(cfg.method);
  j["trials"] = cfg.trials;
  j["master_seed"] = cfg.master_seed;
  ordered_json t;
  t["alpha"] = cfg.test.alpha;
  t["batch_size"] = cfg.test.batch_size;
  t["t_max"] = cfg.test.t_max;
  t["score_mode"] = cfg.test.score_mode == ScoreMode::kProduct ? "product" : "average";
  t["q_bound"] = cfg.test.q_bound;
  t["seed"] = cfg.test.seed;
  j["test"] = t;
  ordered_json tr;
  tr["learning_rate"] = cfg.training.learning_rate;
  tr["max_epochs"] = cfg.training.max_epochs;
  tr["patience"] = cfg.training.patience;
  tr["loss_variant"] = cfg.training.loss_variant == LossVariant::kPlain ? "plain" : "sigma";
  tr["l1_coeff"] = cfg.training.l1_coeff;
  tr["l2_coeff"] = cfg.training.l2_coeff;
  tr["rng_seed"] = cfg.training.rng_seed;
  j["training"] = tr;
  ordered_json m;
  m["hidden_dims"] = cfg.hidden_dims;
  m["normalization"] = cfg.normalization == Normalization::kLayerNorm ? "layer_norm" : "none";
  j["model"] = m;
  j["null_spec"] = null_spec_to_json(cfg.null_spec);
  ordered_json g;
  switch (cfg.generator.type) {
    case GeneratorType::kBlob:
      g["type"] = "blob";
      g["spacing"] = cfg.generator.blob.spacing;
      g["base_cov"] = cov_to_json(cfg.generator.blob.base_cov);
      g["alt_cov"] = cov_to_json(cfg.generator.blob.alt_cov);
      g["rho"] = cfg.generator.blob.rho;
      g["hypothesis"] = cfg.generator.blob.hypothesis == Hypothesis::kNull ? "null" : "alt";
      break;
    case GeneratorType::kCit:
      g["type"] = "cit";
      g["d"] = cfg.generator.cit.d;
      g["a"] = cfg.generator.cit.a;
      g["b"] = cfg.generator.cit.b;
      g["hypothesis"] = cfg.generator.cit.hypothesis == Hypothesis::kNull ? "null" : "alt";
      break;
    case GeneratorType::kGlyph:
      g["type"] = "glyph";
      g["side"] = cfg.generator.glyph.side;
      g["p"] = cfg.generator.glyph.p;
      break;
    case GeneratorType::kSymmetry:
      g["type"] = "symmetry";
      g["mode"] = cfg.generator.symmetry_mode == SymmetryMode::kNull ? "null" : "shifted";
      break;
  }
  j["generator"] = g;
  j["oracle_pretrain_samples"] = cfg.oracle_pretrain_samples;
  ordered_json k;
  if (cfg.kernel.bandwidth) k["bandwidth"] = *cfg.kernel.bandwidth;
  else k["bandwidth"] = "median";
  k["permutations"] = cfg.kernel.permutations;
  j["kernel"] = k;
  return j;
}

ExperimentConfig force_null(const ExperimentConfig& cfg) {
  ExperimentConfig out = cfg;
  switch (out.generator.type) {
    case GeneratorType::kBlob:
      out.generator.blob.hypothesis = Hypothesis::kNull;
      if (out.experiment == ExperimentKind::kBlobIndependence) out.generator.blob.rho = 0.0;
      break;
    case GeneratorType::kCit:
      out.generator.cit.hypothesis = Hypothesis::kNull;
      break;
    case GeneratorType::kGlyph:
      out.generator.glyph.p = 0.5;
      break;
    case GeneratorType::kSymmetry:
      out.generator.symmetry_mode = SymmetryMode::kNull;
      break;
  }
  return out;
}

namespace {

std::pair<Tag, std::vector<std::size_t>> stream_probe(const ExperimentConfig& cfg) {
  switch (cfg.generator.type) {
    case GeneratorType::kBlob: return {Tag::kPair, {2, 2}};
    case GeneratorType::kCit: return {Tag::kAugmentedCitPair, {2, cfg.generator.cit.d + 2}};
    case GeneratorType::kGlyph:
      return {Tag::kPair, {2, cfg.generator.glyph.side, cfg.generator.glyph.side}};
    case GeneratorType::kSymmetry: return {Tag::kPlain, {1}};
  }
  throw std::logic_error("stream_probe: unreachable");
}

}  // namespace

std::size_t resolve_input_dim(const ExperimentConfig& cfg) {
  auto [tag, shape] = stream_probe(cfg);
  if (std::holds_alternative<UnpairedNull>(cfg.null_spec)) return shape_product(shape);
  if (!null_accepts(cfg.null_spec, tag, shape)) {
    if (tag == Tag::kPair) {
      std::vector<std::size_t> paired = {2};
      paired.insert(paired.end(), shape.begin(), shape.end());
      if (null_accepts(cfg.null_spec, Tag::kPairOfPairs, paired)) {
        tag = Tag::kPairOfPairs;
        shape = paired;
      } else {
        throw std::invalid_argument("config: null operators do not accept the stream observations");
      }
    } else {
      throw std::invalid_argument("config: null operators do not accept the stream observations");
    }
  }
  std::vector<const Operator*> ops;
  if (const auto* pair = std::get_if<PairNull>(&cfg.null_spec)) {
    ops = {&pair->t1, &pair->t2};
  } else {
    const auto& sets = std::get<SetsNull>(cfg.null_spec);
    for (const auto& op : sets.set1.members) ops.push_back(&op);
    for (const auto& op : sets.set2.members) ops.push_back(&op);
  }
  std::size_t dim = 0;
  for (const Operator* op : ops) {
    std::size_t flat = shape_product(op->output_shape(tag, shape).second);
    if (dim == 0) dim = flat;
    if (flat != dim) {
      throw std::invalid_argument("config: null operators produce mismatched output sizes");
    }
  }
  return dim;
}

std::vector<MiniBatch> make_stream(const ExperimentConfig& cfg, std::uint64_t stream_seed) {
  Rng rng(stream_seed);
  std::vector<MiniBatch> stream;
  stream.reserve(cfg.test.t_max);
  for (std::size_t t = 1; t <= cfg.test.t_max; ++t) {
    MiniBatch batch;
    batch.index = t;
    switch (cfg.generator.type) {
      case GeneratorType::kBlob:
        batch.observations = gen_blob(cfg.test.batch_size, cfg.generator.blob, rng);
        break;
      case GeneratorType::kCit: {
        auto triples = gen_cit(cfg.test.batch_size, cfg.generator.cit, rng);
        batch.observations.reserve(triples.size());
        for (const auto& z : triples) {
          batch.observations.push_back(modelx_resample(z, cfg.generator.cit, rng));
        }
        break;
      }
      case GeneratorType::kGlyph:
        batch.observations = gen_glyph_stream(cfg.test.batch_size, cfg.generator.glyph, rng);
        break;
      case GeneratorType::kSymmetry:
        batch.observations = gen_symmetric(cfg.test.batch_size, cfg.generator.symmetry_mode, rng);
        break;
    }
    stream.push_back(std::move(batch));
  }
  return stream;
}

namespace {

TrialSeeds seeds_for(std::uint64_t master, std::size_t trial) {
  return {derive_seed(master, trial, seed_role::kStream),
          derive_seed(master, trial, seed_role::kModelInit),
          derive_seed(master, trial, seed_role::kAux)};
}

SequentialTestSpec build_spec(const ExperimentConfig& cfg, const TrialSeeds& seeds,
                              std::size_t input_dim) {
  SequentialTestSpec spec;
  spec.config = cfg.test;
  spec.config.seed = seeds.stream;
  spec.null_spec = cfg.null_spec;
  spec.training = cfg.training;
  std::vector<std::size_t> dims;
  dims.push_back(input_dim);
  dims.insert(dims.end(), cfg.hidden_dims.begin(), cfg.hidden_dims.end());
  dims.push_back(1);
  spec.model_init = init_payoff_model(dims, cfg.normalization, cfg.test.q_bound, seeds.model);
  return spec;
}

void split_pairs(const MiniBatch& batch, std::vector<Observation>& xs,
                 std::vector<Observation>& ys) {
  Operator proj = Operator::project_first();
  Operator proj_swap = op_proj_swap();
  for (const auto& z : batch.observations) {
    xs.push_back(proj.apply(z));
    ys.push_back(proj_swap.apply(z));
  }
}

TrialRecord run_one_trial(const ExperimentConfig& cfg, std::size_t input_dim, std::size_t trial,
                          const PayoffModel* oracle_model) {
  TrialSeeds seeds = seeds_for(cfg.master_seed, trial);
  std::vector<MiniBatch> stream = make_stream(cfg, seeds.stream);
  switch (cfg.method) {
    case Method::kDavt:
      return run_sequential(stream, build_spec(cfg, seeds, input_dim));
    case Method::kSeqitOns:
      return seqit_run(stream, build_spec(cfg, seeds, input_dim));
    case Method::kOracle: {
      TestConfig tc = cfg.test;
      tc.seed = seeds.stream;
      return run_oracle(stream, *oracle_model, tc, cfg.null_spec);
    }
    case Method::kMmdPerm: {
      // Non-sequential baseline: p-value from the first mini-batch only.
      std::vector<Observation> xs, ys;
      split_pairs(stream.front(), xs, ys);
      Rng rng(seeds.aux);
      double p = permutation_pvalue(xs, ys, cfg.kernel, rng);
      TrialRecord record;
      record.trajectory.emplace_back(1, 0.0);
      record.diagnostics.push_back({1, std::nan(""), std::nan(""), std::nan("")});
      if (p <= cfg.test.alpha) {
        record.stopping_time = 1;
        record.decision = Decision::kReject;
      }
      record.samples_consumed = stream.front().observations.size();
      return record;
    }
    case Method::kBatchEvalue: {
      std::vector<Observation> data;
      for (const auto& batch : stream) {
        data.insert(data.end(), batch.observations.begin(), batch.observations.end());
      }
      auto [e, d] = batch_evalue_test(data, build_spec(cfg, seeds, input_dim), cfg.test.alpha);
      TrialRecord record;
      record.trajectory.emplace_back(stream.size(), std::log(e.value));
      record.diagnostics.push_back(
          {stream.size(), e.value, std::nan(""), std::nan("")});
      if (d == Decision::kReject) {
        record.stopping_time = stream.size();
        record.decision = Decision::kReject;
      }
      record.samples_consumed = data.size();
      return record;
    }
  }
  throw std::logic_error("run_one_trial: unreachable");
}

}  // namespace

RunOutputs run_trials(const ExperimentConfig& cfg, std::size_t threads) {
  std::size_t input_dim = cfg.method == Method::kMmdPerm ? 0 : resolve_input_dim(cfg);

  PayoffModel oracle_model;
  if (cfg.method == Method::kOracle) {
    // theta* is approximated once per experiment on dedicated pretraining
    // data and then held fixed across trials.
    ExperimentConfig pre = cfg;
    pre.test.t_max = 2;
    pre.test.batch_size = (cfg.oracle_pretrain_samples + 1) / 2;
    std::uint64_t data_seed = derive_seed(cfg.master_seed, 0, seed_role::kOraclePretrain);
    std::vector<MiniBatch> pretrain = make_stream(pre, data_seed);
    std::vector<MiniBatch> adapted;
    for (const auto& b : pretrain) adapted.push_back(adapt_batch(b, cfg.null_spec));
    PayoffModel init = init_payoff_model(
        [&] {
          std::vector<std::size_t> dims{input_dim};
          dims.insert(dims.end(), cfg.hidden_dims.begin(), cfg.hidden_dims.end());
          dims.push_back(1);
          return dims;
        }(),
        cfg.normalization, cfg.test.q_bound, derive_seed(cfg.master_seed, 0, seed_role::kModelInit));
    oracle_model = update_model(init, adapted, to_train_spec(cfg.null_spec), cfg.training).model;
  }

  std::size_t n_threads = threads == 0 ? std::thread::hardware_concurrency() : threads;
  n_threads = std::max<std::size_t>(1, std::min(n_threads, cfg.trials));

  std::vector<TrialRecord> records(cfg.trials);
  std::vector<std::string> errors(cfg.trials);
  std::atomic<std::size_t> next{0};
  auto worker = [&]() {
    while (true) {
      std::size_t i = next.fetch_add(1);
      if (i >= cfg.trials) break;
      try {
        records[i] = run_one_trial(cfg, input_dim, i, &oracle_model);
      } catch (const std::exception& e) {
        errors[i] = e.what();
      }
    }
  };
  if (n_threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t k = 0; k < n_threads; ++k) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  for (std::size_t i = 0; i < cfg.trials; ++i) {
    if (!errors[i].empty()) {
      throw std::runtime_error("trial " + std::to_string(i) + " failed: " + errors[i]);
    }
  }

  RunOutputs out;
  out.records = std::move(records);
  out.resolved_config = config_to_json(cfg);
  for (std::size_t i = 0; i < cfg.trials; ++i) out.seeds.push_back(seeds_for(cfg.master_seed, i));

  RunSummary& s = out.summary;
  s.experiment = experiment_name(cfg.experiment);
  s.method = method_name(cfg.method);
  s.alpha = cfg.test.alpha;
  s.batch_size = cfg.test.batch_size;
  s.trials = cfg.trials;
  s.config_digest = fnv1a_hex(out.resolved_config.dump());
  double total_samples = 0.0;
  for (const auto& r : out.records) {
    total_samples += static_cast<double>(r.samples_consumed);
    if (r.stopping_time) s.stopping_times.push_back(*r.stopping_time);
  }
  s.mean_samples = total_samples / static_cast<double>(cfg.trials);
  double prev = 0.0;
  for (std::size_t t = 1; t <= cfg.test.t_max; ++t) {
    std::size_t count = 0;
    for (const auto& r : out.records) {
      if (r.stopping_time && *r.stopping_time <= t) ++count;
    }
    double rate = static_cast<double>(count) / static_cast<double>(cfg.trials);
    if (rate < prev) throw std::logic_error("run_trials: rejection rate must be nondecreasing");
    prev = rate;
    s.rejection_rate_by_t.emplace_back(t, rate);
  }
  return out;
}

nlohmann::ordered_json summary_to_json(const RunSummary& s) {
  ordered_json j;
  j["schema"] = "davt-summary/1";
  j["experiment"] = s.experiment;
  j["method"] = s.method;
  j["alpha"] = s.alpha;
  j["batch_size"] = s.batch_size;
  j["trials"] = s.trials;
  auto rr = ordered_json::array();
  for (auto [t, r] : s.rejection_rate_by_t) rr.push_back(ordered_json::array({t, r}));
  j["rejection_rate_by_t"] = rr;
  j["stopping_times"] = s.stopping_times;
  j["mean_samples"] = s.mean_samples;
  j["config_digest"] = s.config_digest;
  return j;
}

RunSummary summary_from_json(const json& j) {
  RunSummary s;
  if (j.at("schema").get<std::string>() != "davt-summary/1") {
    throw std::invalid_argument("summary: unsupported schema");
  }
  s.experiment = j.at("experiment").get<std::string>();
  s.method = j.at("method").get<std::string>();
  s.alpha = j.at("alpha").get<double>();
  s.batch_size = j.at("batch_size").get<std::size_t>();
  s.trials = j.at("trials").get<std::size_t>();
  for (const auto& row : j.at("rejection_rate_by_t")) {
    s.rejection_rate_by_t.emplace_back(row[0].get<std::size_t>(), row[1].get<double>());
  }
  s.stopping_times = j.at("stopping_times").get<std::vector<std::size_t>>();
  s.mean_samples = j.at("mean_samples").get<double>();
  s.config_digest = j.at("config_digest").get<std::string>();
  return s;
}

void write_outputs(const RunOutputs& outputs, const std::string& out_dir, bool emit_diagnostics) {
  namespace fs = std::filesystem;
  fs::create_directories(out_dir);
  auto write_file = [&](const std::string& name, const std::string& contents) {
    std::ofstream f(fs::path(out_dir) / name, std::ios::binary);
    if (!f) throw std::runtime_error("write_outputs: cannot open " + name);
    f << contents;
  };
  write_file("trajectories.csv", trajectories_csv(outputs.records, emit_diagnostics));
  write_file("summary.json", summary_to_json(outputs.summary).dump(2) + "\n");
  std::string jsonl;
  for (std::size_t i = 0; i < outputs.records.size(); ++i) {
    jsonl += trial_summary_json(outputs.records[i], i, outputs.seeds[i].stream).dump();
    jsonl += '\n';
  }
  write_file("trials.jsonl", jsonl);
  ordered_json manifest;
  manifest["schema"] = "davt-manifest/1";
  manifest["config"] = outputs.resolved_config;
  manifest["config_digest"] = outputs.summary.config_digest;
  auto seeds = ordered_json::array();
  for (std::size_t i = 0; i < outputs.seeds.size(); ++i) {
    ordered_json row;
    row["trial"] = i;
    row["stream"] = outputs.seeds[i].stream;
    row["model"] = outputs.seeds[i].model;
    row["aux"] = outputs.seeds[i].aux;
    seeds.push_back(row);
  }
  manifest["derived_seeds"] = seeds;
  ordered_json constants;
  const auto& gen = outputs.resolved_config.at("generator");
  if (gen.at("type") == "glyph") {
    GlyphParams g = default_glyph_params();
    constants["glyph_six"] = g.glyph_six;
    constants["glyph_nine"] = g.glyph_nine;
  }
  if (gen.at("type") == "cit") {
    constants["a"] = gen.at("a");
    constants["b"] = gen.at("b");
  }
  manifest["generator_constants"] = constants;
  write_file("manifest.json", manifest.dump(2) + "\n");
}

std::string report(const std::vector<RunSummary>& summaries) {
  if (summaries.empty()) throw std::invalid_argument("report: no summaries");
  const auto& axis = summaries.front().rejection_rate_by_t;
  for (const auto& s : summaries) {
    if (s.rejection_rate_by_t.size() != axis.size()) {
      throw std::invalid_argument("report: summaries have mismatched time axes");
    }
    for (std::size_t i = 0; i < axis.size(); ++i) {
      if (s.rejection_rate_by_t[i].first != axis[i].first) {
        throw std::invalid_argument("report: summaries have mismatched time axes");
      }
    }
  }
  auto short_fmt = [](double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.10g", v);
    return std::string(buf);
  };
  std::vector<std::string> labels;
  for (std::size_t i = 0; i < summaries.size(); ++i) {
    std::string label = summaries[i].method;
    for (std::size_t k = 0; k < i; ++k) {
      if (summaries[k].method == label) {
        label += "#" + std::to_string(i);
        break;
      }
    }
    labels.push_back(label);
  }
  std::string out = "t";
  for (const auto& l : labels) out += "," + l;
  out += '\n';
  for (std::size_t i = 0; i < axis.size(); ++i) {
    out += std::to_string(axis[i].first);
    for (const auto& s : summaries) out += "," + short_fmt(s.rejection_rate_by_t[i].second);
    out += '\n';
  }
  out += "\nmethod,trials,rejections,min,q25,median,q75,max,mean_samples\n";
  for (std::size_t i = 0; i < summaries.size(); ++i) {
    const auto& s = summaries[i];
    std::vector<std::size_t> st = s.stopping_times;
    std::sort(st.begin(), st.end());
    auto quant = [&](double q) -> std::string {
      if (st.empty()) return "nan";
      std::size_t idx = static_cast<std::size_t>(q * static_cast<double>(st.size() - 1) + 0.5);
      return std::to_string(st[std::min(idx, st.size() - 1)]);
    };
    out += labels[i];
    out += "," + std::to_string(s.trials);
    out += "," + std::to_string(st.size());
    out += "," + quant(0.0) + "," + quant(0.25) + "," + quant(0.5) + "," + quant(0.75) + "," +
           quant(1.0);
    out += "," + short_fmt(s.mean_samples);
    out += '\n';
  }
  return out;
}

}  // namespace davt
