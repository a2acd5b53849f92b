#include "chatdqn/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <stdexcept>

namespace chatdqn {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::uint64_t to_u64(const std::string& v) {
  std::uint64_t out = 0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) throw std::invalid_argument("expected a non-negative integer");
  return out;
}

double to_f64(const std::string& v) {
  std::size_t used = 0;
  double out = 0.0;
  try {
    out = std::stod(v, &used);
  } catch (const std::exception&) {
    throw std::invalid_argument("expected a number");
  }
  if (used != v.size()) throw std::invalid_argument("expected a number");
  return out;
}

bool to_bool(const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw std::invalid_argument("expected true or false");
}

std::string fmt(double v) {
  std::ostringstream o;
  o.precision(17);
  o << v;
  return o.str();
}

struct Field {
  std::function<void(PipelineConfig&, const std::string&)> set;
  std::function<std::string(const PipelineConfig&)> get;
};

template <typename Member>
Field size_field(Member member) {
  return {[member](PipelineConfig& c, const std::string& v) { member(c) = static_cast<std::size_t>(to_u64(v)); },
          [member](const PipelineConfig& c) { return std::to_string(member(const_cast<PipelineConfig&>(c))); }};
}

template <typename Member>
Field u64_field(Member member) {
  return {[member](PipelineConfig& c, const std::string& v) { member(c) = to_u64(v); },
          [member](const PipelineConfig& c) { return std::to_string(member(const_cast<PipelineConfig&>(c))); }};
}

template <typename Member>
Field real_field(Member member) {
  return {[member](PipelineConfig& c, const std::string& v) { member(c) = to_f64(v); },
          [member](const PipelineConfig& c) { return fmt(member(const_cast<PipelineConfig&>(c))); }};
}

template <typename Member>
Field bool_field(Member member) {
  return {[member](PipelineConfig& c, const std::string& v) { member(c) = to_bool(v); },
          [member](const PipelineConfig& c) { return std::string(member(const_cast<PipelineConfig&>(c)) ? "true" : "false"); }};
}

template <typename Member>
Field string_field(Member member) {
  return {[member](PipelineConfig& c, const std::string& v) { member(c) = v; },
          [member](const PipelineConfig& c) { return member(const_cast<PipelineConfig&>(c)); }};
}

#define CFG(expr) [](PipelineConfig& c) -> auto& { return expr; }

const std::map<std::string, Field>& fields() {
  static const std::map<std::string, Field> table = {
      {"config_version",
       {[](PipelineConfig& c, const std::string& v) {
          if (to_u64(v) != 1) throw std::invalid_argument("unsupported config version, this build reads version 1");
          c.config_version = 1;
        },
        [](const PipelineConfig& c) { return std::to_string(c.config_version); }}},
      {"train_path", string_field(CFG(c.train_path))},
      {"test_path", string_field(CFG(c.test_path))},
      {"vectors_path", string_field(CFG(c.vectors_path))},
      {"sentence_clusters", size_field(CFG(c.sentence_clusters))},
      {"dialogue_clusters", size_field(CFG(c.dialogue_clusters))},
      {"kmeans_max_iter", size_field(CFG(c.kmeans.max_iter))},
      {"kmeans_tol", real_field(CFG(c.kmeans.tol))},
      {"cluster_seed", u64_field(CFG(c.cluster_seed))},
      {"gamma", real_field(CFG(c.agent.gamma))},
      {"epsilon_start", real_field(CFG(c.agent.epsilon_start))},
      {"epsilon_end", real_field(CFG(c.agent.epsilon_end))},
      {"decay_steps", size_field(CFG(c.agent.decay_steps))},
      {"target_sync", size_field(CFG(c.agent.target_sync))},
      {"burn_in", size_field(CFG(c.agent.burn_in))},
      {"minibatch", size_field(CFG(c.agent.minibatch))},
      {"learn_steps", size_field(CFG(c.agent.learn_steps))},
      {"candidates", size_field(CFG(c.agent.candidates))},
      {"replay_capacity", size_field(CFG(c.agent.replay_capacity))},
      {"max_history", size_field(CFG(c.agent.max_history))},
      {"hidden", size_field(CFG(c.agent.hidden))},
      {"dropout", real_field(CFG(c.agent.dropout))},
      {"learning_rate", real_field(CFG(c.agent.learning_rate))},
      {"variant",
       {[](PipelineConfig& c, const std::string& v) { c.agent.variant = parse_variant(v); },
        [](const PipelineConfig& c) { return variant_name(c.agent.variant); }}},
      {"seed", u64_field(CFG(c.agent.seed))},
      {"append_chosen", bool_field(CFG(c.agent.append_chosen))},
      {"checkpoint_every", size_field(CFG(c.agent.checkpoint_every))},
      {"threads", size_field(CFG(c.threads))},
      {"reward_hidden", size_field(CFG(c.regressor.hidden))},
      {"reward_dropout", real_field(CFG(c.regressor.dropout))},
      {"reward_bn_momentum", real_field(CFG(c.regressor.bn_momentum))},
      {"reward_epochs", size_field(CFG(c.regressor.epochs))},
      {"reward_minibatch", size_field(CFG(c.regressor.minibatch))},
      {"reward_learning_rate", real_field(CFG(c.regressor.learning_rate))},
      {"reward_holdout", real_field(CFG(c.regressor.holdout))},
      {"reward_max_history", size_field(CFG(c.regressor.max_history))},
      {"reward_seed", u64_field(CFG(c.regressor.seed))},
      {"noise_rates",
       {[](PipelineConfig& c, const std::string& v) {
          std::vector<double> rates;
          std::stringstream ss(v);
          std::string item;
          while (std::getline(ss, item, ',')) {
            const double r = to_f64(trim(item));
            if (r < 0.0 || r > 1.0) throw std::invalid_argument("noise rates must lie in [0, 1]");
            rates.push_back(r);
          }
          if (rates.empty()) throw std::invalid_argument("expected a comma-separated list of rates");
          c.noise_rates = rates;
        },
        [](const PipelineConfig& c) {
          std::string out;
          for (std::size_t i = 0; i < c.noise_rates.size(); ++i) out += (i ? "," : "") + fmt(c.noise_rates[i]);
          return out;
        }}},
      {"noise_variants", size_field(CFG(c.noise_variants))},
      {"noise_seed", u64_field(CFG(c.noise_seed))},
      {"eval_candidates", size_field(CFG(c.eval_candidates))},
      {"eval_seed", u64_field(CFG(c.eval_seed))},
      {"select_once", bool_field(CFG(c.select_once))},
      {"curve_window", size_field(CFG(c.curve_window))},
      {"serve_candidates", size_field(CFG(c.serve_candidates))},
      {"port",
       {[](PipelineConfig& c, const std::string& v) {
          const auto p = to_u64(v);
          if (p > 65535) throw std::invalid_argument("port out of range");
          c.port = static_cast<int>(p);
        },
        [](const PipelineConfig& c) { return std::to_string(c.port); }}},
  };
  return table;
}

#undef CFG

}  // namespace

void set_config_value(PipelineConfig& cfg, const std::string& key, const std::string& value) {
  const auto it = fields().find(key);
  if (it == fields().end()) throw std::invalid_argument("unknown configuration key '" + key + "'");
  try {
    it->second.set(cfg, value);
  } catch (const std::invalid_argument& e) {
    throw std::invalid_argument(key + ": " + e.what() + " (got '" + value + "')");
  }
}

std::string config_value(const PipelineConfig& cfg, const std::string& key) {
  const auto it = fields().find(key);
  if (it == fields().end()) throw std::invalid_argument("unknown configuration key '" + key + "'");
  return it->second.get(cfg);
}

std::vector<std::string> config_keys() {
  std::vector<std::string> out;
  for (const auto& [k, f] : fields()) out.push_back(k);
  return out;
}

void apply_config_text(PipelineConfig& cfg, const std::string& text, const std::string& source) {
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw FormatError(source, lineno, "expected key = value");
    try {
      set_config_value(cfg, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    } catch (const std::invalid_argument& e) {
      throw FormatError(source, lineno, e.what());
    }
  }
}

PipelineConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read config file " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  PipelineConfig cfg;
  apply_config_text(cfg, buf.str(), path);
  return cfg;
}

std::string dump_config(const PipelineConfig& cfg) {
  std::string out;
  for (const auto& [k, f] : fields()) out += k + " = " + f.get(cfg) + "\n";
  return out;
}

}  // namespace chatdqn
