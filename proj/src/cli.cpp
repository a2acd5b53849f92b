#include "chatdqn/cli.hpp"

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <optional>

#include <CLI11.hpp>
#include <json.hpp>

#include "chatdqn/bundle.hpp"
#include "chatdqn/config.hpp"
#include "chatdqn/eval.hpp"
#include "chatdqn/http_server.hpp"
#include "chatdqn/service.hpp"

namespace chatdqn {

namespace {

namespace fs = std::filesystem;

class MissingArtifact : public std::runtime_error {
 public:
  MissingArtifact(const fs::path& path, const std::string& stage)
      : std::runtime_error("missing " + path.string() + "; run `chatdqn " + stage + "` first") {}
};

struct Options {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out = "out";
  std::string bundle;
  std::optional<int> port;
  std::vector<std::string> sets;

  std::string variant;
  std::optional<std::size_t> clusters;
  std::string mode = "both";
  std::string policy = "all";
  std::string split = "test";
  std::string host = "127.0.0.1";
};

struct Context {
  PipelineConfig cfg;
  fs::path out;
  fs::path bundle;
  std::istream& in;
  std::ostream& out_s;
  std::ostream& err;
};

class Timer {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

const fs::path& need(const fs::path& p, const std::string& stage) {
  if (!fs::exists(p)) throw MissingArtifact(p, stage);
  return p;
}

Corpus read_corpus(const std::string& path, Split split, std::ostream& err) {
  if (!fs::exists(path)) throw std::runtime_error("corpus file " + path + " not found");
  LoadReport report;
  Corpus c = load_corpus(path, split, &report);
  for (const auto& w : report.warnings) err << "warning: " << w << "\n";
  if (c.dialogues.empty()) throw std::runtime_error("corpus file " + path + " has no usable dialogues");
  return c;
}

WordEmbeddingTable read_table(const std::string& path, std::ostream& err) {
  if (!fs::exists(path)) throw std::runtime_error("word vector file " + path + " not found");
  EmbeddingLoadReport report;
  auto t = load_embeddings(path, &report);
  for (const auto& w : report.warnings) err << "warning: " << w << "\n";
  return t;
}

std::vector<std::size_t> every_dialogue(const SentenceBank& bank) {
  std::vector<std::size_t> ids(bank.dialogue_count());
  for (std::size_t i = 0; i < ids.size(); ++i) ids[i] = i;
  return ids;
}

std::ofstream open_out(const fs::path& p) {
  std::ofstream f(p, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + p.string());
  return f;
}

std::ifstream open_in(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  if (!f) throw std::runtime_error("cannot read " + p.string());
  return f;
}

void check_fingerprint(BinaryReader& r, const WordEmbeddingTable& table, const fs::path& p) {
  const auto fp = r.u64();
  const auto dim = r.u64();
  if (fp != table.fingerprint() || dim != table.dim()) {
    throw std::runtime_error(p.string() + " was built from different word vectors");
  }
}

struct ClusterArtifact {
  ClusterModel sentence;
  ClusterModel dialogue;
};

ClusterArtifact read_clusters(const Context& ctx, const WordEmbeddingTable& table) {
  const auto p = need(ctx.out / "clusters.bin", "cluster");
  auto in = open_in(p);
  BinaryReader r(in);
  r.expect("chatdqn-clusters");
  check_fingerprint(r, table, p);
  ClusterArtifact a;
  a.sentence = load_cluster_model(r);
  a.dialogue = load_cluster_model(r);
  return a;
}

RegressorNet read_regressor(const Context& ctx, const WordEmbeddingTable& table) {
  const auto p = need(ctx.out / "regressor.bin", "train-reward");
  auto in = open_in(p);
  BinaryReader r(in);
  r.expect("chatdqn-regressor");
  check_fingerprint(r, table, p);
  return RegressorNet::load(r);
}

std::shared_ptr<const ModelBundle> read_bundle(const Context& ctx) {
  return std::make_shared<const ModelBundle>(load_bundle(need(ctx.bundle, "train-agents").string()));
}

int cmd_ingest(Context& ctx) {
  LoadReport train_report, test_report;
  if (!fs::exists(ctx.cfg.train_path)) throw std::runtime_error("corpus file " + ctx.cfg.train_path + " not found");
  if (!fs::exists(ctx.cfg.test_path)) throw std::runtime_error("corpus file " + ctx.cfg.test_path + " not found");
  const Corpus train = load_corpus(ctx.cfg.train_path, Split::kTrain, &train_report);
  const Corpus test = load_corpus(ctx.cfg.test_path, Split::kTest, &test_report);
  const auto table = read_table(ctx.cfg.vectors_path, ctx.err);

  auto stats_json = [](const CorpusStats& s, const LoadReport& r) {
    return nlohmann::json{{"dialogues", s.dialogues},
                          {"turns", s.turns},
                          {"sentences", s.sentences},
                          {"unique_sentences", s.unique_sentences},
                          {"words", s.words},
                          {"unique_words", s.unique_words},
                          {"avg_turns_per_dialogue", s.avg_turns_per_dialogue},
                          {"avg_words_per_dialogue", s.avg_words_per_dialogue},
                          {"avg_words_per_sentence", s.avg_words_per_sentence},
                          {"lines", r.lines},
                          {"malformed", r.malformed},
                          {"skipped", r.skipped}};
  };
  std::size_t known = 0;
  for (const auto& w : train.vocabulary) known += table.find(w) != nullptr;
  nlohmann::json j{{"train", stats_json(corpus_stats(train), train_report)},
                   {"test", stats_json(corpus_stats(test), test_report)},
                   {"sentence_overlap", sentence_overlap(train, test)},
                   {"embedding_dim", table.dim()},
                   {"embedding_entries", table.size()},
                   {"train_vocabulary_coverage",
                    train.vocabulary.empty() ? 0.0 : static_cast<double>(known) / train.vocabulary.size()}};
  for (const auto* r : {&train_report, &test_report}) {
    for (const auto& w : r->warnings) ctx.err << "warning: " << w << "\n";
  }
  fs::create_directories(ctx.out);
  open_out(ctx.out / "corpus_stats.json") << j.dump(2) << "\n";
  ctx.out_s << j.dump(2) << "\n";
  return 0;
}

int cmd_cluster(Context& ctx) {
  Timer timer;
  const Corpus train = read_corpus(ctx.cfg.train_path, Split::kTrain, ctx.err);
  const auto table = read_table(ctx.cfg.vectors_path, ctx.err);
  const auto sentence = fit_sentence_clusters(train, table, ctx.cfg.sentence_clusters, ctx.cfg.kmeans, ctx.cfg.cluster_seed);
  const auto dialogue =
      fit_dialogue_clusters(train, sentence, table, ctx.cfg.dialogue_clusters, ctx.cfg.kmeans, ctx.cfg.cluster_seed);

  fs::create_directories(ctx.out);
  {
    auto f = open_out(ctx.out / "clusters.bin");
    BinaryWriter w(f);
    w.str("chatdqn-clusters");
    w.u64(table.fingerprint());
    w.u64(table.dim());
    save_cluster_model(w, sentence);
    save_cluster_model(w, dialogue);
  }
  const auto points = unique_sentence_vectors(train, table);
  std::vector<std::size_t> labels;
  for (const auto& p : points) labels.push_back(assign(sentence, p));
  auto sf = open_out(ctx.out / "sentence_pca.csv");
  write_pca_csv(sf, pca_2d(points), labels);
  const auto features = dialogue_feature_matrix(train, sentence, table);
  labels.clear();
  for (const auto& f : features) labels.push_back(assign(dialogue, f));
  auto df = open_out(ctx.out / "dialogue_pca.csv");
  write_pca_csv(df, pca_2d(features), labels);

  ctx.out_s << "sentence clusters: " << sentence.k() << " over " << points.size()
            << " sentences, inertia " << sentence.inertia << "\n"
            << "dialogue clusters: " << dialogue.k() << " over " << features.size() << " dialogues, inertia "
            << dialogue.inertia << "\n"
            << "wrote " << (ctx.out / "clusters.bin").string() << " in " << std::fixed << std::setprecision(1)
            << timer.seconds() << " s\n";
  return 0;
}

int cmd_gen_noisy(Context& ctx) {
  const Corpus train = read_corpus(ctx.cfg.train_path, Split::kTrain, ctx.err);
  const auto table = read_table(ctx.cfg.vectors_path, ctx.err);
  const auto clusters = read_clusters(ctx, table);
  const SentenceBank bank(train, table, clusters.sentence);
  const auto data =
      build_reward_dataset(bank, every_dialogue(bank), ctx.cfg.noise_rates, ctx.cfg.noise_variants, ctx.cfg.noise_seed);
  auto f = open_out(ctx.out / "noisy.jsonl");
  write_noisy_jsonl(f, data);
  ctx.out_s << "wrote " << data.size() << " noisy dialogues to " << (ctx.out / "noisy.jsonl").string() << "\n";
  return 0;
}

int cmd_train_reward(Context& ctx) {
  Timer timer;
  const auto table = read_table(ctx.cfg.vectors_path, ctx.err);
  const auto path = need(ctx.out / "noisy.jsonl", "gen-noisy");
  auto in = open_in(path);
  const auto data = read_noisy_jsonl(in, path.string());
  const auto result = train_regressor(data, table, ctx.cfg.regressor);
  {
    auto f = open_out(ctx.out / "regressor.bin");
    BinaryWriter w(f);
    w.str("chatdqn-regressor");
    w.u64(table.fingerprint());
    w.u64(table.dim());
    result.regressor.save(w);
  }
  auto loss = open_out(ctx.out / "reward_loss.csv");
  loss << "epoch,train_mse,heldout_mse\n";
  for (std::size_t e = 0; e < result.train_loss.size(); ++e) {
    loss << e << ',' << result.train_loss[e] << ',';
    if (e < result.heldout_loss.size()) loss << result.heldout_loss[e];
    loss << '\n';
  }
  ctx.out_s << "trained on " << result.train_index.size() << " dialogues, held out " << result.heldout_index.size()
            << "\n";
  if (result.heldout_index.size() >= 2) {
    std::vector<double> pred, truth;
    for (auto i : result.heldout_index) {
      pred.push_back(predict_reward(result.regressor, data[i].sentences, table));
      truth.push_back(data[i].label);
    }
    try {
      ctx.out_s << "held-out pearson r: " << pearson(pred, truth) << "\n";
    } catch (const std::domain_error&) {
      ctx.out_s << "held-out pearson r: undefined (constant predictions or labels)\n";
    }
  }
  ctx.out_s << "wrote " << (ctx.out / "regressor.bin").string() << " in " << std::fixed << std::setprecision(1)
            << timer.seconds() << " s\n";
  return 0;
}

int cmd_train_agents(Context& ctx, const Options& opt) {
  if (opt.mode != "both" && opt.mode != "single" && opt.mode != "ensemble") {
    throw std::invalid_argument("--mode must be single, ensemble or both");
  }
  Timer timer;
  const Corpus train = read_corpus(ctx.cfg.train_path, Split::kTrain, ctx.err);
  const auto table = read_table(ctx.cfg.vectors_path, ctx.err);
  auto clusters = read_clusters(ctx, table);
  auto regressor = read_regressor(ctx, table);
  const SentenceBank bank(train, table, clusters.sentence);
  if (opt.clusters && *opt.clusters != clusters.dialogue.k()) {
    ctx.cfg.dialogue_clusters = *opt.clusters;
    clusters.dialogue = fit_dialogue_clusters(train, clusters.sentence, table, *opt.clusters, ctx.cfg.kmeans,
                                              ctx.cfg.cluster_seed);
  }

  ModelBundle bundle;
  bundle.config = dump_config(ctx.cfg);
  bundle.embedding_fingerprint = table.fingerprint();
  bundle.embedding_dim = table.dim();
  std::map<std::string, TrainingLog> logs;
  if (opt.mode != "single") {
    bundle.ensemble = train_ensemble(train, bank, table, clusters.sentence, clusters.dialogue, regressor, ctx.cfg.agent,
                                     ctx.cfg.threads);
    for (const auto& m : bundle.ensemble.members) logs["member_" + std::to_string(m.dialogue_cluster)] = m.log;
    ctx.out_s << "ensemble: " << bundle.ensemble.members.size() << " members, " << bundle.ensemble.empty_clusters.size()
              << " empty clusters\n";
  } else {
    bundle.ensemble.sentence_model = clusters.sentence;
    bundle.ensemble.dialogue_model = clusters.dialogue;
    bundle.ensemble.regressor = regressor;
  }
  if (opt.mode != "ensemble") {
    ChatDQNAgent agent(ctx.cfg.agent, table.dim(), clusters.sentence.k());
    auto log = chatdqn::train(agent, bank, every_dialogue(bank));
    logs["single"] = log;
    bundle.single.emplace(SingleAgent{std::move(agent), std::move(log)});
  }
  save_bundle(ctx.bundle.string(), bundle);
  auto curves = open_out(ctx.out / "learning_curves.csv");
  write_learning_curves(curves, logs, ctx.cfg.curve_window);
  for (const auto& [name, log] : logs) {
    auto f = open_out(ctx.out / ("training_log_" + name + ".csv"));
    write_training_log(f, log);
    if (log.empty()) continue;
    std::vector<double> rewards;
    for (const auto& e : log) rewards.push_back(e.reward);
    ctx.out_s << name << ": " << log.size() << " episodes, decile gain " << decile_gain(rewards) << "\n";
  }
  ctx.out_s << "wrote " << ctx.bundle.string() << " in " << std::fixed << std::setprecision(1) << timer.seconds()
            << " s\n";
  return 0;
}

std::vector<Policy> parse_policies(const std::string& name) {
  if (name == "upper" || name == "upper_bound") return {Policy::kUpperBound};
  if (name == "lower" || name == "lower_bound") return {Policy::kLowerBound};
  if (name == "single") return {Policy::kSingle};
  if (name == "ensemble") return {Policy::kEnsemble};
  if (name == "all") return {Policy::kUpperBound, Policy::kLowerBound, Policy::kSingle, Policy::kEnsemble};
  throw std::invalid_argument("unknown policy '" + name + "'");
}

int cmd_evaluate(Context& ctx, const Options& opt) {
  auto policies = parse_policies(opt.policy);
  if (opt.split != "test" && opt.split != "train") throw std::invalid_argument("--split must be test or train");
  const bool test = opt.split == "test";
  const Corpus corpus = read_corpus(test ? ctx.cfg.test_path : ctx.cfg.train_path, test ? Split::kTest : Split::kTrain,
                                    ctx.err);
  const auto table = read_table(ctx.cfg.vectors_path, ctx.err);
  const auto bundle = read_bundle(ctx);
  check_embeddings(*bundle, table);
  if (opt.policy == "all") {
    if (!bundle->single) policies.erase(std::find(policies.begin(), policies.end(), Policy::kSingle));
    if (bundle->ensemble.members.empty()) policies.erase(std::find(policies.begin(), policies.end(), Policy::kEnsemble));
  } else if (policies[0] == Policy::kSingle && !bundle->single) {
    throw std::runtime_error("bundle has no single agent; run `chatdqn train-agents --mode single` or `--mode both`");
  } else if (policies[0] == Policy::kEnsemble && bundle->ensemble.members.empty()) {
    throw std::runtime_error("bundle has no ensemble; run `chatdqn train-agents --mode ensemble` or `--mode both`");
  }

  const SentenceBank bank(corpus, table, bundle->ensemble.sentence_model);
  const auto ids = every_dialogue(bank);
  EvalOptions eo;
  eo.candidates = ctx.cfg.eval_candidates;
  eo.seed = ctx.cfg.eval_seed;
  eo.select_once = ctx.cfg.select_once;
  PolicyInputs inputs{bundle->single ? &bundle->single->agent : nullptr, &bundle->ensemble};

  fs::create_directories(ctx.out);
  std::vector<PolicySummary> rows;
  for (auto p : policies) {
    const auto r = evaluate_policy(p, bank, ids, inputs, eo);
    rows.push_back(r.summary);
    auto f = open_out(ctx.out / ("turns_" + policy_name(p) + ".jsonl"));
    write_turns_jsonl(f, policy_name(p), r.turns);
  }
  const auto name = opt.policy == "all" ? std::string("report.csv") : "report_" + policy_name(policies[0]) + ".csv";
  auto f = open_out(ctx.out / name);
  write_summary_csv(f, rows);
  write_summary_csv(ctx.out_s, rows);
  return 0;
}

ChatService make_service(const Context& ctx, std::shared_ptr<const ModelBundle> bundle) {
  const Corpus pool = read_corpus(ctx.cfg.train_path, Split::kTrain, ctx.err);
  ServiceOptions so;
  so.candidates = ctx.cfg.serve_candidates;
  so.seed = ctx.cfg.eval_seed;
  return ChatService(std::move(bundle), pool, read_table(ctx.cfg.vectors_path, ctx.err), so);
}

int cmd_chat(Context& ctx, const Options& opt) {
  auto service = make_service(ctx, read_bundle(ctx));
  const auto id = service.open_session(opt.seed);
  ctx.out_s << "session " << id << " (seed " << service.session_seed(id) << "); empty line or /quit ends\n";
  std::string line;
  while (true) {
    ctx.out_s << "you> " << std::flush;
    if (!std::getline(ctx.in, line) || line.empty() || line == "/quit") break;
    if (tokenize(line).empty()) continue;
    const auto r = service.reply(id, line);
    ctx.out_s << "bot> " << r.response << "  [agent " << r.agent_id << ", predicted reward " << std::setprecision(3)
              << r.predicted_reward << "]\n";
  }
  ctx.out_s << "\n";
  return 0;
}

int cmd_serve(Context& ctx, const Options& opt) {
  auto service = make_service(ctx, read_bundle(ctx));
  ChatServer server(service);
  const int port = server.bind(opt.host, ctx.cfg.port);
  if (port < 0) throw std::runtime_error("cannot bind " + opt.host + ":" + std::to_string(ctx.cfg.port));
  ctx.out_s << "listening on http://" << opt.host << ":" << port << std::endl;
  return server.run() ? 0 : 1;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::istream& in, std::ostream& out, std::ostream& err) {
  CLI::App app{"Clustered deep Q-network chatbot pipeline", "chatdqn"};
  app.require_subcommand(1);
  Options opt;
  app.add_option("--config", opt.config, "key = value config file (CHATDQN_CONFIG overrides)");
  app.add_option("--seed", opt.seed, "seed for every stage");
  app.add_option("--out", opt.out, "artifact directory")->capture_default_str();
  app.add_option("--bundle", opt.bundle, "model bundle path (default <out>/bundle.bin)");
  app.add_option("--port", opt.port, "HTTP port for serve");
  app.add_option("--set", opt.sets, "override a config key, key=value")->take_all();
  app.fallthrough();

  auto* ingest = app.add_subcommand("ingest", "corpus and word vector statistics");
  auto* cluster = app.add_subcommand("cluster", "fit sentence and dialogue clusters, export PCA CSVs");
  auto* gen_noisy = app.add_subcommand("gen-noisy", "build the noisy reward dataset");
  auto* train_reward = app.add_subcommand("train-reward", "train the dialogue reward regressor");
  auto* train_agents = app.add_subcommand("train-agents", "train the single agent and/or the ensemble");
  train_agents->add_option("--variant", opt.variant, "dqn, ddqn or dueling")
      ->check(CLI::IsMember({"dqn", "ddqn", "dueling"}));
  train_agents->add_option("--clusters", opt.clusters, "number of dialogue clusters")->check(CLI::PositiveNumber);
  train_agents->add_option("--mode", opt.mode, "single, ensemble or both")
      ->check(CLI::IsMember({"single", "ensemble", "both"}))
      ->capture_default_str();
  auto* evaluate = app.add_subcommand("evaluate", "report F1, Recall@1/5 and average reward");
  evaluate->add_option("--policy", opt.policy, "upper, lower, single, ensemble or all")
      ->check(CLI::IsMember({"upper", "lower", "single", "ensemble", "all"}))
      ->capture_default_str();
  evaluate->add_option("--split", opt.split, "test or train")->check(CLI::IsMember({"test", "train"}))->capture_default_str();
  auto* chat = app.add_subcommand("chat", "terminal chat with the ensemble");
  auto* serve = app.add_subcommand("serve", "HTTP chat service");
  serve->add_option("--host", opt.host, "bind address")->capture_default_str();

  std::vector<const char*> argv{"chatdqn"};
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n" << app.help();
    return 2;
  }

  try {
    PipelineConfig cfg;
    const char* env = std::getenv("CHATDQN_CONFIG");
    const std::string config_path = env && *env ? std::string(env) : opt.config;
    if (!config_path.empty()) cfg = load_config(config_path);
    for (const auto& s : opt.sets) {
      const auto eq = s.find('=');
      if (eq == std::string::npos) {
        err << "error: --set expects key=value, got '" << s << "'\n\n" << app.help();
        return 2;
      }
      try {
        set_config_value(cfg, s.substr(0, eq), s.substr(eq + 1));
      } catch (const std::invalid_argument& e) {
        err << "error: " << e.what() << "\n";
        return 2;
      }
    }
    if (opt.seed) {
      cfg.cluster_seed = cfg.agent.seed = cfg.regressor.seed = cfg.noise_seed = cfg.eval_seed = *opt.seed;
    }
    if (opt.port) cfg.port = *opt.port;
    if (!opt.variant.empty()) cfg.agent.variant = parse_variant(opt.variant);

    Context ctx{cfg, opt.out, opt.bundle.empty() ? fs::path(opt.out) / "bundle.bin" : fs::path(opt.bundle), in, out, err};
    if (*ingest) return cmd_ingest(ctx);
    if (*cluster) return cmd_cluster(ctx);
    if (*gen_noisy) return cmd_gen_noisy(ctx);
    if (*train_reward) return cmd_train_reward(ctx);
    if (*train_agents) return cmd_train_agents(ctx, opt);
    if (*evaluate) return cmd_evaluate(ctx, opt);
    if (*chat) return cmd_chat(ctx, opt);
    if (*serve) return cmd_serve(ctx, opt);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}

}  // namespace chatdqn
